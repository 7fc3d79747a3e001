use super::*;
use crate::corpus::{generate_synthetic, save_corpus, Domain, Genre, SynthConfig};
use crate::label::TopicLabel;
use crate::textpipe::TokenizerOptions;
use crate::tuning::PipelineConfig;
use tempfile::TempDir;

fn synth(drift: f64) -> SynthConfig {
    SynthConfig {
        n_classes: 8,
        vocab_size: 400,
        docs_per_domain: 150,
        domains: vec![
            Domain::new("AAA", 2016, Genre::Manifesto, "en"),
            Domain::new("BBB", 2017, Genre::Manifesto, "en"),
            Domain::new("CCC", 2020, Genre::Speech, "en"),
        ],
        class_prior: vec![0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
        drift,
        doc_length: 20.0,
        seed: 11,
        topic_weight: 0.5,
    }
}

fn fixed() -> ModelSource {
    ModelSource::Fixed {
        config: PipelineConfig {
            tokenizer: TokenizerOptions::default().with_ngrams(1, 1),
            min_df: 2,
            ..PipelineConfig::default()
        },
    }
}

fn setup(drift: f64) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    save_corpus(&generate_synthetic(&synth(drift)).unwrap(), &path, CorpusFormat::Jsonl).unwrap();
    (dir, path)
}

fn scenario(dir: &Path, corpus: &Path, name: &str, split: SplitSpec, model: ModelSource) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        corpora: vec![corpus.to_path_buf()],
        filter: None,
        split: SplitPlan::Spec(split),
        model,
        within_ref: None,
        out_dir: dir.join("runs"),
        seed: 2018,
    }
}

#[test]
fn within_domain_beats_majority_and_persists_layout() {
    let (dir, corpus) = setup(0.0);
    let spec = scenario(dir.path(), &corpus, "within", SplitSpec::random(3), fixed());
    let rec = run_scenario(&spec).unwrap();
    assert!(rec.test.accuracy > 0.3 + 0.2, "accuracy {}", rec.test.accuracy);
    let rd = run_dir(&rec);
    for f in [
        "config.json",
        "provenance.json",
        "split.csv",
        "model.json",
        "predictions.jsonl",
        "metrics.json",
        "record.json",
        "performance.txt",
        "per_class.txt",
        "label_distribution.txt",
    ] {
        assert!(rd.join(f).is_file(), "missing {f}");
    }
    assert!(rd.join(format!("confusion_{}.csv", rec.run_id)).is_file());
    assert_eq!(evaluate_run_dir(&rd).unwrap(), rec.test);
    let split = read_split(rd.join("split.csv")).unwrap();
    let ids = read_test_ids(rd.join("split.csv")).unwrap();
    assert_eq!(ids, split.test_ids);
    let all = load_corpora(std::slice::from_ref(&corpus)).unwrap();
    let via_model =
        evaluate_model(Some(&rd.join("model.json")), None, &all, &split.test_ids).unwrap();
    assert_eq!(via_model.accuracy, rec.test.accuracy);
}

#[test]
fn gold_predictions_score_perfectly_and_delta_is_reported() {
    let (dir, corpus) = setup(0.0);
    let all = load_corpora(std::slice::from_ref(&corpus)).unwrap();
    let split = apply_split(&all, &SplitSpec::random(5)).unwrap();
    let preds = dir.path().join("gold.jsonl");
    let mut text = String::new();
    for id in &split.test_ids {
        let label = all.get(id).unwrap().label;
        text.push_str(&format!("{{\"id\":\"{id}\",\"label\":\"{}\"}}\n", label.as_str()));
    }
    std::fs::write(&preds, text).unwrap();

    let within = run_scenario(&scenario(dir.path(), &corpus, "within", SplitSpec::random(5), fixed())).unwrap();
    let mut spec = scenario(
        dir.path(),
        &corpus,
        "oracle",
        SplitSpec::random(5),
        ModelSource::External { predictions: preds, allow_partial: false },
    );
    spec.within_ref = Some(run_dir(&within));
    let rec = run_scenario(&spec).unwrap();
    assert_eq!((rec.test.accuracy, rec.test.macro_f1), (1.0, 1.0));
    let delta = rec.delta.unwrap();
    assert_eq!(delta.accuracy.within, within.test.accuracy);
    assert_eq!(rec.within_ref.as_deref(), Some(within.run_id.as_str()));
    assert!(rec.model_file.is_none());

    spec.within_ref = Some(dir.path().join("nowhere"));
    assert!(run_scenario(&spec).is_err());
}

#[test]
fn replay_is_byte_identical() {
    let (dir, corpus) = setup(0.3);
    let grid = GridSpec {
        lambda_grid: vec![1e-4, 1e-2],
        ngram_ranges: vec!["1..1".parse().unwrap()],
        min_df_grid: vec![2],
        ..GridSpec::default()
    };
    let spec = scenario(dir.path(), &corpus, "tuned", SplitSpec::random(9), ModelSource::Grid { grid });
    let first = run_scenario(&spec).unwrap();
    let again = replay_run(run_dir(&first), dir.path().join("replay")).unwrap();
    assert_eq!(first.run_id, again.run_id);
    let a = run_dir(&first);
    let b = run_dir(&again);
    let files = [
        "metrics.json".to_string(),
        "predictions.jsonl".into(),
        "model.json".into(),
        "split.csv".into(),
        "performance.txt".into(),
        "per_class.txt".into(),
        "label_distribution.txt".into(),
        format!("confusion_{}.csv", first.run_id),
    ];
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out1 = dir.path().join("rep1");
    let out2 = dir.path().join("rep2");
    emit_reports(&[RunRecord::load(&a).unwrap()], &out1).unwrap();
    emit_reports(std::slice::from_ref(&first), &out2).unwrap();
    assert_eq!(
        std::fs::read(out1.join("performance.txt")).unwrap(),
        std::fs::read(out2.join("performance.txt")).unwrap()
    );
}

#[test]
fn loco_suite_rows_and_average() {
    let (dir, corpus) = setup(0.2);
    let base = scenario(
        dir.path(),
        &corpus,
        "loco",
        SplitSpec::Loco { held_out_country: "AAA".into(), val_fraction: 0.1, seed: 1 },
        fixed(),
    );
    let countries: Vec<String> = ["AAA", "BBB", "CCC"].iter().map(|s| s.to_string()).collect();
    let (records, suite) = run_loco_suite(&base, &countries).unwrap();
    assert_eq!(records.len(), 3);
    for (row, rec) in suite.rows.iter().zip(&records) {
        assert_eq!(row.n_country, 150);
        assert_eq!(rec.held_out_country(), Some(row.country.as_str()));
    }
    let mean = suite.rows.iter().map(|r| r.accuracy).sum::<f64>() / 3.0;
    assert!((suite.average.accuracy - mean).abs() < 1e-15);

    let out = dir.path().join("report");
    emit_reports(&records, &out).unwrap();
    let loco = std::fs::read_to_string(out.join("loco.txt")).unwrap();
    assert!(loco.lines().last().unwrap().starts_with("Average"));
    let dist = std::fs::read_to_string(out.join("label_distribution.txt")).unwrap();
    assert!(dist.lines().skip(2).all(|l| l.ends_with("1.0000")));

    assert!(run_loco_suite(&base, &["AAA".to_string()]).is_err());
    assert!(run_loco_suite(&base, &["AAA".to_string(), "ZZZ".to_string()]).is_err());
}

#[test]
fn confusion_rows_match_supports() {
    let (dir, corpus) = setup(0.0);
    let rec = run_scenario(&scenario(dir.path(), &corpus, "cm", SplitSpec::random(2), fixed())).unwrap();
    let csv = std::fs::read_to_string(run_dir(&rec).join(format!("confusion_{}.csv", rec.run_id))).unwrap();
    for (line, m) in csv.lines().skip(1).zip(&rec.test.per_class) {
        let sum: u64 = line.split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum();
        assert_eq!(sum, m.support);
    }
    assert_eq!(rec.test.per_class[0].label, TopicLabel::NoTopic);
}

#[test]
fn split_file_must_partition_the_filtered_corpus() {
    let (dir, corpus) = setup(0.0);
    let all = load_corpora(std::slice::from_ref(&corpus)).unwrap();
    let split = apply_split(&all, &SplitSpec::random(1)).unwrap();
    let file = dir.path().join("split.csv");
    write_split(&split, &file).unwrap();
    let mut spec = scenario(dir.path(), &corpus, "fromfile", SplitSpec::random(1), fixed());
    spec.split = SplitPlan::File { file };
    assert!(run_scenario(&spec).is_ok());
    spec.filter = Some(CorpusFilter::default().countries(["AAA"]));
    assert!(run_scenario(&spec).is_err());
}

#[test]
fn leak_check_rejects_overlap() {
    let mut split = SplitResult {
        spec: SplitSpec::random(1),
        train_ids: ["a".to_string()].into(),
        val_ids: ["b".to_string()].into(),
        test_ids: ["a".to_string()].into(),
    };
    assert!(assert_no_leak(&split).is_err());
    split.test_ids = ["c".to_string()].into();
    assert!(assert_no_leak(&split).is_ok());
}

#[test]
fn scenario_files_parse() {
    let toml = r#"
name = "genre"
corpora = ["a.jsonl"]
[split]
strategy = "cross_genre"
train_genre = "manifesto"
test_genre = "speech"
val_fraction = 0.1
seed = 2018
[model]
source = "grid"
[model.grid]
lambda_grid = [0.0001]
"#;
    let spec: ScenarioSpec = toml::from_str(toml).unwrap();
    spec.validate().unwrap();
    assert_eq!(spec.seed, 2018);
    assert!(matches!(spec.split, SplitPlan::Spec(SplitSpec::CrossGenre { .. })));
    let ext: ScenarioSpec = toml::from_str(
        "name = \"x\"\ncorpora = [\"a\"]\n[split]\nfile = \"s.csv\"\n[model]\nsource = \"external\"\npredictions = \"p.jsonl\"\n",
    )
    .unwrap();
    assert!(matches!(ext.split, SplitPlan::File { .. }));
    assert!(matches!(ext.model, ModelSource::External { allow_partial: false, .. }));
    let bad: ScenarioSpec = toml::from_str(
        "name = \"bad name\"\ncorpora = [\"a\"]\n[split]\nfile = \"s.csv\"\n[model]\nsource = \"fixed\"\n",
    )
    .unwrap();
    assert!(bad.validate().is_err());
}
