use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use polxfer::corpus::{
    corpus_stats, generate_synthetic, load_corpus, save_corpus, CorpusFormat, Genre, GroupBy,
    SynthConfig,
};
use polxfer::evalx::{delta_report, format_metric, EvalReport};
use polxfer::label::TopicLabel;
use polxfer::runner::{
    collect_records, emit_reports, evaluate_model, evaluate_run_dir, load_corpora, read_test_ids,
    render_table, run_dir, run_loco_suite, run_scenario, ModelSource, RunRecord, ScenarioSpec,
    SplitPlan, OUT_ROOT_ENV,
};
use polxfer::splits::{apply_split, write_split, SplitSpec};
use polxfer::textpipe::TokenizerOptions;
use polxfer::tuning::{GridSpec, NgramRange, PipelineConfig};
use polxfer::DEFAULT_SEED;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "polxfer", version, about = "Cross-domain evaluation of political topic classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus, optionally writing a normalized copy.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<CorpusFormat>,
        /// Only check the file; the default when --out is absent.
        #[arg(long)]
        validate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        version_tag: Option<String>,
    },
    /// Generate a synthetic corpus from a TOML or JSON config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label distribution, overall or per group.
    Stats {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        by: Option<GroupBy>,
    },
    /// Compute a split and write it as an id/assignment CSV.
    Split {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        cutoff: Option<i32>,
        #[arg(long)]
        holdout: Option<String>,
        #[arg(long, default_value = ".8,.1,.1")]
        proportions: String,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(long, default_value = "manifesto")]
        train_genre: Genre,
        #[arg(long, default_value = "speech")]
        test_genre: Genre,
        #[arg(long)]
        stratified: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train (with grid search or a fixed config) on a split and evaluate on its test set.
    Train {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        split: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "train")]
        name: String,
        #[arg(long)]
        within_ref: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output root; the run directory is created inside it.
        #[arg(long, env = OUT_ROOT_ENV, default_value = "runs")]
        out: PathBuf,
    },
    /// Score a run directory, a saved model or a predictions file.
    Eval {
        #[arg(long, conflicts_with_all = ["model", "corpus", "test_ids", "predictions"])]
        run: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        test_ids: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        within_ref: Option<PathBuf>,
        /// Print the full report as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Leave-one-country-out suite over the listed countries.
    Loco {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        countries: Vec<String>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "loco")]
        name: String,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, env = OUT_ROOT_ENV, default_value = "runs")]
        out: PathBuf,
    },
    /// Regenerate report tables from run directories.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a scenario file (TOML or JSON).
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's output root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    Temporal,
    Loco,
    Genre,
}

#[derive(Args)]
struct ModelArgs {
    /// Grid file (TOML); without it and without fixed flags the default grid is used.
    #[arg(long, conflicts_with_all = ["lambda", "ngrams", "min_df"])]
    grid: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    ngrams: Option<NgramRange>,
    #[arg(long)]
    min_df: Option<u32>,
    #[arg(long)]
    max_features: Option<usize>,
}

impl ModelArgs {
    fn source(&self) -> Result<ModelSource> {
        if let Some(path) = &self.grid {
            let mut grid = GridSpec::load(path)?;
            if let Some(m) = self.max_features {
                grid.max_features = m;
            }
            return Ok(ModelSource::Grid { grid });
        }
        if self.lambda.is_none() && self.ngrams.is_none() && self.min_df.is_none() {
            let mut grid = GridSpec::default();
            if let Some(m) = self.max_features {
                grid.max_features = m;
            }
            return Ok(ModelSource::Grid { grid });
        }
        let mut config = PipelineConfig::default();
        if let Some(l) = self.lambda {
            config.train.lambda = l;
        }
        if let Some(r) = self.ngrams {
            config.tokenizer = TokenizerOptions::default().with_ngrams(r.min, r.max);
        }
        if let Some(k) = self.min_df {
            config.min_df = k;
        }
        if let Some(m) = self.max_features {
            config.max_features = m;
        }
        Ok(ModelSource::Fixed { config })
    }
}

fn parse_proportions(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad proportions {text:?}"))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => bail!("proportions need three comma-separated values, got {text:?}"),
    }
}

fn print_report(report: &EvalReport) {
    println!(
        "n = {}  accuracy = {}  macro-F1 = {}",
        report.n,
        format_metric(report.accuracy),
        format_metric(report.macro_f1)
    );
    let rows: Vec<Vec<String>> = report
        .per_class
        .iter()
        .map(|m| {
            vec![
                m.label.display_name().to_string(),
                format_metric(m.precision),
                format_metric(m.recall),
                format_metric(m.f1),
                m.support.to_string(),
            ]
        })
        .collect();
    print!("{}", render_table(&["Class", "P", "R", "F1", "Support"], &rows));
}

fn print_record(record: &RunRecord) {
    println!("run {} -> {}", record.run_id, run_dir(record).display());
    if let Some(sel) = &record.selected {
        println!(
            "selected: ngrams {}..{}, min_df {}, lambda {:e}",
            sel.tokenizer.ngram_min, sel.tokenizer.ngram_max, sel.min_df, sel.train.lambda
        );
    }
    match &record.delta {
        Some(d) => println!("accuracy {}  macro-F1 {}", d.accuracy, d.macro_f1),
        None => println!(
            "accuracy {}  macro-F1 {}",
            format_metric(record.test.accuracy),
            format_metric(record.test.macro_f1)
        ),
    }
}

fn cmd_split(
    corpus: &[PathBuf],
    spec: SplitSpec,
    out: &Path,
) -> Result<()> {
    let corpus = load_corpora(corpus)?;
    let split = apply_split(&corpus, &spec)?;
    write_split(&split, out)?;
    let s = split.sizes();
    println!(
        "{} -> {}: train {}, val {}, test {}",
        spec,
        out.display(),
        s.train,
        s.val,
        s.test
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest {
            input,
            format,
            validate,
            out,
            version_tag,
        } => {
            let format = format.unwrap_or_else(|| CorpusFormat::from_path(&input));
            let mut corpus = load_corpus(&input, format)?;
            if let Some(tag) = version_tag {
                corpus = corpus.with_version_tag(tag);
            }
            let p = corpus.provenance();
            println!(
                "{}: {} utterances, {} rejected for missing labels, countries {:?}",
                input.display(),
                corpus.len(),
                p.rejected_missing_label,
                corpus.countries()
            );
            match out {
                Some(out) if !validate => {
                    save_corpus(&corpus, &out, CorpusFormat::from_path(&out))?;
                    println!("wrote {}", out.display());
                }
                Some(_) => bail!("--validate and --out are mutually exclusive"),
                None => {}
            }
        }
        Command::Synth { config, out } => {
            let cfg = SynthConfig::load(&config)?;
            let corpus = generate_synthetic(&cfg)?;
            save_corpus(&corpus, &out, CorpusFormat::from_path(&out))?;
            println!("wrote {} synthetic utterances to {}", corpus.len(), out.display());
        }
        Command::Stats { corpus, by } => {
            let corpus = load_corpora(&corpus)?;
            let dist = corpus_stats(&corpus, by);
            let mut headers = vec!["Group", "n"];
            headers.extend(TopicLabel::ALL.iter().map(|l| l.as_str()));
            let rows: Vec<Vec<String>> = dist
                .groups
                .iter()
                .map(|g| {
                    let mut row = vec![g.key.clone(), g.n.to_string()];
                    row.extend(g.proportions.iter().map(|p| format_metric(*p)));
                    row
                })
                .collect();
            print!("{}", render_table(&headers, &rows));
        }
        Command::Split {
            corpus,
            strategy,
            seed,
            cutoff,
            holdout,
            proportions,
            val_fraction,
            train_genre,
            test_genre,
            stratified,
            out,
        } => {
            let spec = match strategy {
                Strategy::Random => {
                    let (p_train, p_val, p_test) = parse_proportions(&proportions)?;
                    SplitSpec::Random { p_train, p_val, p_test, seed, stratified }
                }
                Strategy::Temporal => SplitSpec::Temporal {
                    cutoff_year: cutoff.context("--cutoff is required for temporal splits")?,
                    val_fraction,
                    seed,
                },
                Strategy::Loco => SplitSpec::Loco {
                    held_out_country: holdout.context("--holdout is required for loco splits")?,
                    val_fraction,
                    seed,
                },
                Strategy::Genre => SplitSpec::CrossGenre { train_genre, test_genre, val_fraction, seed },
            };
            cmd_split(&corpus, spec, &out)?;
        }
        Command::Train {
            corpus,
            split,
            model,
            name,
            within_ref,
            seed,
            out,
        } => {
            let spec = ScenarioSpec {
                name,
                corpora: corpus,
                filter: None,
                split: SplitPlan::File { file: split },
                model: model.source()?,
                within_ref,
                out_dir: out,
                seed,
            };
            print_record(&run_scenario(&spec)?);
        }
        Command::Eval {
            run,
            model,
            corpus,
            test_ids,
            predictions,
            within_ref,
            json,
        } => {
            let report = match run {
                Some(dir) => evaluate_run_dir(&dir)?,
                None => {
                    if corpus.is_empty() {
                        bail!("--corpus is required without --run");
                    }
                    let ids = test_ids.context("--test-ids is required without --run")?;
                    let corpus = load_corpora(&corpus)?;
                    evaluate_model(model.as_deref(), predictions.as_deref(), &corpus, &read_test_ids(ids)?)?
                }
            };
            let delta = match within_ref {
                Some(dir) => Some(delta_report(&report, &RunRecord::load(&dir)?.test)),
                None => None,
            };
            if json {
                let value = serde_json::json!({ "report": report, "delta": delta });
                println!("{}", serde_json::to_string_pretty(&value)?);
            } else {
                print_report(&report);
                if let Some(d) = delta {
                    println!("vs within-domain: accuracy {}  macro-F1 {}", d.accuracy, d.macro_f1);
                }
            }
        }
        Command::Loco {
            corpus,
            countries,
            model,
            name,
            val_fraction,
            seed,
            out,
        } => {
            let base = ScenarioSpec {
                name,
                corpora: corpus,
                filter: None,
                split: SplitPlan::Spec(SplitSpec::Loco {
                    held_out_country: countries.first().cloned().unwrap_or_default(),
                    val_fraction,
                    seed,
                }),
                model: model.source()?,
                within_ref: None,
                out_dir: out.clone(),
                seed,
            };
            let (records, suite) = run_loco_suite(&base, &countries)?;
            emit_reports(&records, &out)?;
            print!("{}", std::fs::read_to_string(out.join("loco.txt"))?);
            println!("average over {} countries written to {}", suite.rows.len(), out.display());
        }
        Command::Report { runs, out } => {
            let mut records = Vec::new();
            for dir in &runs {
                records.extend(collect_records(dir)?);
            }
            if records.is_empty() {
                bail!("no run directories found");
            }
            for path in emit_reports(&records, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Run { scenario, out } => {
            let mut spec = ScenarioSpec::load(&scenario)?;
            if let Some(out) = out {
                spec.out_dir = out;
            }
            print_record(&run_scenario(&spec)?);
        }
    }
    Ok(())
}
