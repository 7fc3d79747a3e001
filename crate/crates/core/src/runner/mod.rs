//! Scenario orchestration and persisted run directories.
//!
//! A run directory holds `config.json` (the canonical scenario snapshot),
//! `provenance.json`, `split.csv`, `model.json` (when trained),
//! `predictions.jsonl`, `metrics.json`, `leaderboard.csv` (when tuned),
//! `record.json` and the text tables written by [`emit_reports`]. Directories
//! are assembled under a temporary name and renamed into place.

mod report;

pub use report::{emit_reports, render_table};

use crate::classifier::{
    load_external_predictions_with, load_model, save_model, write_predictions, Coverage,
    PredictionSet,
};
use crate::corpus::{
    corpus_stats, filter, load_corpus, Corpus, CorpusFilter, CorpusFormat, GroupDistribution,
    Provenance,
};
use crate::error::{Error, Result};
use crate::evalx::{aggregate, delta_report, evaluate, DeltaReport, EvalReport, MeanMetrics};
use crate::label::N_CLASSES;
use crate::splits::{apply_split, read_split, write_split, SplitResult, SplitSizes, SplitSpec};
use crate::tuning::{fit_pipeline, grid_search, predict_corpus, GridSpec, Leaderboard, PipelineConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "POLXFER_OUT";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_seed() -> u64 {
    crate::DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitPlan {
    File { file: PathBuf },
    Spec(SplitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ModelSource {
    Grid {
        #[serde(default)]
        grid: GridSpec,
    },
    Fixed {
        #[serde(default)]
        config: PipelineConfig,
    },
    External {
        predictions: PathBuf,
        #[serde(default)]
        allow_partial: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub corpora: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<CorpusFilter>,
    pub split: SplitPlan,
    pub model: ModelSource,
    /// Run directory of the within-domain reference used for deltas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_ref: Option<PathBuf>,
    #[serde(default = "default_out_root")]
    pub out_dir: PathBuf,
    /// Trainer seed; split seeds live in the split spec.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ScenarioSpec {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ScenarioSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return bad(format!("scenario name {:?} must be nonempty [A-Za-z0-9._-]", self.name));
        }
        if self.corpora.is_empty() {
            return bad("scenario needs at least one corpus".into());
        }
        if let SplitPlan::Spec(s) = &self.split {
            s.validate()?;
        }
        match &self.model {
            ModelSource::Grid { grid } => grid.validate(),
            ModelSource::Fixed { config } => GridSpec::fixed(config).validate(),
            ModelSource::External { .. } => Ok(()),
        }
    }

    /// Absolute paths and the scenario seed pushed into the trainer.
    fn canonical(&self) -> Result<ScenarioSpec> {
        let abs = |p: &Path| std::fs::canonicalize(p).map_err(|e| Error::io(p, e));
        let mut spec = self.clone();
        spec.corpora = self.corpora.iter().map(|p| abs(p)).collect::<Result<_>>()?;
        if let SplitPlan::File { file } = &mut spec.split {
            *file = abs(file)?;
        }
        match &mut spec.model {
            ModelSource::Grid { grid } => grid.train.seed = self.seed,
            ModelSource::Fixed { config } => config.train.seed = self.seed,
            ModelSource::External { predictions, .. } => *predictions = abs(predictions)?,
        }
        if let Some(r) = &mut spec.within_ref {
            *r = abs(r)?;
        }
        Ok(spec)
    }

    /// `name-<8 hex>` from a hash of everything but the output directory.
    pub fn run_id(&self) -> Result<String> {
        let mut hashed = self.clone();
        hashed.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&hashed)?;
        let digest = hex::encode(Sha256::digest(&bytes));
        Ok(format!("{}-{}", self.name, &digest[..8]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<PipelineConfig>,
    pub provenance: Provenance,
    pub split: SplitSpec,
    pub split_sizes: SplitSizes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaderboard: Option<Leaderboard>,
    pub test: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_ref: Option<String>,
    /// Label distributions of the filtered corpus and each split set.
    pub distributions: Vec<GroupDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<String>,
    pub predictions_file: String,
    pub prediction_source: String,
    pub wall_seconds: f64,
    pub toolkit_version: String,
}

impl RunRecord {
    pub fn load(run_dir: impl AsRef<Path>) -> Result<RunRecord> {
        let path = run_dir.as_ref().join("record.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Held-out country of a leave-one-country-out run.
    pub fn held_out_country(&self) -> Option<&str> {
        match &self.split {
            SplitSpec::Loco { held_out_country, .. } => Some(held_out_country),
            _ => None,
        }
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    run_id: &'a str,
    test: &'a EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<&'a DeltaReport>,
}

#[derive(Serialize)]
struct ConfigSnapshot<'a> {
    run_id: &'a str,
    scenario: &'a ScenarioSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<&'a PipelineConfig>,
}

pub fn load_corpora(paths: &[PathBuf]) -> Result<Corpus> {
    let parts = paths
        .iter()
        .map(|p| load_corpus(p, CorpusFormat::from_path(p)))
        .collect::<Result<Vec<_>>>()?;
    Corpus::concat(parts)
}

fn distribution(key: &str, corpus: &Corpus) -> GroupDistribution {
    let mut d = corpus_stats(corpus, None).groups.remove(0);
    d.key = key.to_string();
    d
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn assert_no_leak(split: &SplitResult) -> Result<()> {
    let source = split.source_ids();
    if let Some(id) = source.intersection(&split.test_ids).next() {
        return Err(Error::Run(format!(
            "id {id:?} appears both in fitting data and in the test set"
        )));
    }
    Ok(())
}

/// Filter, split, fit or join predictions, evaluate on test, persist.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunRecord> {
    spec.validate()?;
    let started = Instant::now();
    let spec = spec.canonical()?;
    let run_id = spec.run_id()?;
    let ctx = |e: Error| Error::Run(format!("{run_id}: {e}"));
    log::info!("run {run_id}: starting");

    let mut corpus = load_corpora(&spec.corpora).map_err(ctx)?;
    if let Some(f) = &spec.filter {
        corpus = filter(&corpus, f);
        if corpus.is_empty() {
            return Err(ctx(Error::Run(format!("filter `{f}` leaves no utterances"))));
        }
    }
    let split = match &spec.split {
        SplitPlan::Spec(s) => apply_split(&corpus, s),
        SplitPlan::File { file } => {
            read_split(file).and_then(|s| s.check_partition(Some(&corpus)).map(|_| s))
        }
    }
    .map_err(ctx)?;
    assert_no_leak(&split).map_err(ctx)?;

    let train = corpus.subset(&split.train_ids, "split=train");
    let val = corpus.subset(&split.val_ids, "split=val");
    // Test labels are only read by `evaluate` below.
    let test = corpus.subset(&split.test_ids, "split=test");

    let mut selected = None;
    let mut leaderboard = None;
    let mut bundle = None;
    let predictions: PredictionSet = match &spec.model {
        ModelSource::Grid { grid } => {
            let out = grid_search(&train, &val, grid).map_err(ctx)?;
            let preds = predict_corpus(&out.bundle, &test, "tfidf-lr").map_err(ctx)?;
            selected = Some(out.best);
            leaderboard = Some(out.leaderboard);
            bundle = Some(out.bundle);
            preds
        }
        ModelSource::Fixed { config } => {
            let b = fit_pipeline(&train, config).map_err(ctx)?;
            let preds = predict_corpus(&b, &test, "tfidf-lr").map_err(ctx)?;
            selected = Some(config.clone());
            bundle = Some(b);
            preds
        }
        ModelSource::External { predictions, allow_partial } => {
            let coverage = if *allow_partial { Coverage::AllowPartial } else { Coverage::Full };
            load_external_predictions_with(predictions, &test, coverage).map_err(ctx)?
        }
    };

    let (gold, pred) = predictions.aligned(&test);
    let report = evaluate(&gold, &pred).map_err(ctx)?.with_scenario(&spec.name);
    let (delta, within_ref) = match &spec.within_ref {
        Some(dir) => {
            let reference = RunRecord::load(dir).map_err(|e| {
                ctx(Error::Run(format!("within-domain reference unavailable: {e}")))
            })?;
            (Some(delta_report(&report, &reference.test)), Some(reference.run_id))
        }
        None => (None, None),
    };

    std::fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;
    let final_dir = spec.out_dir.join(&run_id);
    let tmp = spec
        .out_dir
        .join(format!(".tmp-{run_id}-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let model_file = match &bundle {
        Some(b) => {
            save_model(b, tmp.join("model.json"))?;
            Some("model.json".to_string())
        }
        None => None,
    };
    write_predictions(&predictions, tmp.join("predictions.jsonl"))?;
    write_split(&split, tmp.join("split.csv"))?;
    if let Some(l) = &leaderboard {
        l.write_csv(tmp.join("leaderboard.csv"))?;
    }
    write_json(&tmp.join("provenance.json"), corpus.provenance())?;
    write_json(
        &tmp.join("config.json"),
        &ConfigSnapshot {
            run_id: &run_id,
            scenario: &spec,
            selected: selected.as_ref(),
        },
    )?;

    let record = RunRecord {
        run_id: run_id.clone(),
        config: spec.clone(),
        selected,
        provenance: corpus.provenance().clone(),
        split: split.spec.clone(),
        split_sizes: split.sizes(),
        leaderboard,
        test: report,
        delta,
        within_ref,
        distributions: vec![
            distribution("all", &corpus),
            distribution("train", &train),
            distribution("val", &val),
            distribution("test", &test),
        ],
        model_file,
        predictions_file: "predictions.jsonl".into(),
        prediction_source: predictions.source.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
        toolkit_version: TOOLKIT_VERSION.into(),
    };
    write_json(
        &tmp.join("metrics.json"),
        &MetricsFile {
            run_id: &run_id,
            test: &record.test,
            delta: record.delta.as_ref(),
        },
    )?;
    write_json(&tmp.join("record.json"), &record)?;
    emit_reports(std::slice::from_ref(&record), &tmp)?;

    if final_dir.exists() {
        std::fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    std::fs::rename(&tmp, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    log::info!(
        "run {run_id}: accuracy {:.4}, macro-F1 {:.4}",
        record.test.accuracy,
        record.test.macro_f1
    );
    Ok(record)
}

/// Re-executes a persisted run's snapshot, writing the new run under `out_root`.
pub fn replay_run(run_dir: impl AsRef<Path>, out_root: impl AsRef<Path>) -> Result<RunRecord> {
    let original = RunRecord::load(run_dir)?;
    let mut spec = original.config;
    spec.out_dir = out_root.as_ref().to_path_buf();
    run_scenario(&spec)
}

pub fn run_dir(record: &RunRecord) -> PathBuf {
    record.config.out_dir.join(&record.run_id)
}

/// Re-scores a run directory from its persisted predictions.
pub fn evaluate_run_dir(dir: impl AsRef<Path>) -> Result<EvalReport> {
    let dir = dir.as_ref();
    let record = RunRecord::load(dir)?;
    let mut corpus = load_corpora(&record.config.corpora)?;
    if let Some(f) = &record.config.filter {
        corpus = filter(&corpus, f);
    }
    let split = read_split(dir.join("split.csv"))?;
    let test = corpus.subset(&split.test_ids, "split=test");
    let coverage = match &record.config.model {
        ModelSource::External { allow_partial: true, .. } => Coverage::AllowPartial,
        _ => Coverage::Full,
    };
    let preds = load_external_predictions_with(dir.join(&record.predictions_file), &test, coverage)?;
    let (gold, pred) = preds.aligned(&test);
    Ok(evaluate(&gold, &pred)?.with_scenario(record.config.name.as_str()))
}

/// Test ids from a split file, or from a plain list with one id per line.
pub fn read_test_ids(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    if let Ok(split) = read_split(path) {
        return Ok(split.test_ids);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ids: BTreeSet<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if ids.is_empty() {
        return Err(Error::Run(format!("{}: no test ids", path.display())));
    }
    Ok(ids)
}

/// Scores a saved model, or a predictions file, on the given test ids.
pub fn evaluate_model(
    model: Option<&Path>,
    predictions: Option<&Path>,
    corpus: &Corpus,
    test_ids: &BTreeSet<String>,
) -> Result<EvalReport> {
    if let Some(id) = test_ids.iter().find(|id| !corpus.contains(id)) {
        return Err(Error::Run(format!("test id {id:?} is not in the corpus")));
    }
    let test = corpus.subset(test_ids, "test ids");
    let preds = match (predictions, model) {
        (Some(p), _) => load_external_predictions_with(p, &test, Coverage::Full)?,
        (None, Some(m)) => predict_corpus(&load_model(m)?, &test, "tfidf-lr")?,
        (None, None) => return Err(Error::Run("need a model or a predictions file".into())),
    };
    let (gold, pred) = preds.aligned(&test);
    evaluate(&gold, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoRow {
    pub country: String,
    pub run_id: String,
    pub n_country: usize,
    pub n_source: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoSuite {
    pub name: String,
    pub rows: Vec<LocoRow>,
    pub average: MeanMetrics,
}

/// One leave-one-country-out run per country plus the unweighted average.
///
/// `base.split` supplies the validation fraction and seed when it is a LOCO
/// spec; otherwise 0.1 and the scenario seed are used. Runs execute
/// concurrently; rows keep the order of `countries`.
pub fn run_loco_suite(base: &ScenarioSpec, countries: &[String]) -> Result<(Vec<RunRecord>, LocoSuite)> {
    base.validate()?;
    let unique: BTreeSet<&String> = countries.iter().collect();
    if unique.len() < 2 || unique.len() != countries.len() {
        return Err(Error::Run("a LOCO suite needs at least two distinct countries".into()));
    }
    let mut corpus = load_corpora(&base.corpora)?;
    if let Some(f) = &base.filter {
        corpus = filter(&corpus, f);
    }
    let present = corpus.countries();
    if present.len() < 2 {
        return Err(Error::Run("corpus has fewer than two countries after filtering".into()));
    }
    if let Some(missing) = countries.iter().find(|c| !present.contains(c.as_str())) {
        return Err(Error::Run(format!("country {missing:?} not in the filtered corpus")));
    }
    let (val_fraction, seed) = match &base.split {
        SplitPlan::Spec(SplitSpec::Loco { val_fraction, seed, .. }) => (*val_fraction, *seed),
        _ => (0.1, base.seed),
    };
    drop(corpus);

    let records: Vec<RunRecord> = countries
        .par_iter()
        .map(|country| {
            let mut spec = base.clone();
            spec.name = format!("{}-{}", base.name, country);
            spec.split = SplitPlan::Spec(SplitSpec::Loco {
                held_out_country: country.clone(),
                val_fraction,
                seed,
            });
            run_scenario(&spec)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<LocoRow> = records
        .iter()
        .zip(countries)
        .map(|(r, c)| LocoRow {
            country: c.clone(),
            run_id: r.run_id.clone(),
            n_country: r.split_sizes.test,
            n_source: r.split_sizes.train + r.split_sizes.val,
            accuracy: r.test.accuracy,
            macro_f1: r.test.macro_f1,
        })
        .collect();
    let reports: Vec<EvalReport> = records.iter().map(|r| r.test.clone()).collect();
    let suite = LocoSuite {
        name: base.name.clone(),
        rows,
        average: aggregate(&reports)?,
    };
    std::fs::create_dir_all(&base.out_dir).map_err(|e| Error::io(&base.out_dir, e))?;
    write_json(&base.out_dir.join(format!("{}-suite.json", base.name)), &suite)?;
    Ok((records, suite))
}

/// Every run directory directly under `root`, sorted by run id.
pub fn collect_records(root: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let root = root.as_ref();
    if root.join("record.json").is_file() {
        return Ok(vec![RunRecord::load(root)?]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("record.json").is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(RunRecord::load).collect()
}

pub(crate) fn proportions_total(p: &[f64; N_CLASSES]) -> f64 {
    p.iter().sum()
}

#[cfg(test)]
mod tests;
