use std::path::Path;
use std::process::{Command, Output};

const SYNTH: &str = r#"
vocab_size = 300
docs_per_domain = 120
class_prior = [0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
drift = 0.1
doc_length = 15.0
seed = 4

[[domains]]
country = "AAA"
year = 2016
genre = "manifesto"
language = "en"

[[domains]]
country = "BBB"
year = 2017
genre = "manifesto"
language = "en"

[[domains]]
country = "CCC"
year = 2021
genre = "speech"
language = "en"
"#;

fn polxfer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polxfer"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("POLXFER_OUT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = polxfer(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    std::fs::write(dir.join("synth.toml"), SYNTH).unwrap();
    ok(dir, &["synth", "--config", "synth.toml", "--out", "corpus.jsonl"]);
}

#[test]
fn end_to_end_train_eval_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);

    let ingest = ok(dir, &["ingest", "--input", "corpus.jsonl", "--validate"]);
    assert!(ingest.contains("360 utterances"), "{ingest}");
    ok(dir, &["ingest", "--input", "corpus.jsonl", "--out", "corpus.csv"]);
    let stats = ok(dir, &["stats", "--corpus", "corpus.csv", "--by", "country"]);
    assert_eq!(stats.lines().count(), 2 + 3);

    let split = ok(dir, &["split", "--corpus", "corpus.jsonl", "--strategy", "random", "--out", "split.csv"]);
    assert!(split.contains("train 288, val 36, test 36"), "{split}");

    let train = ok(
        dir,
        &["train", "--corpus", "corpus.jsonl", "--split", "split.csv", "--lambda", "1e-4", "--ngrams", "1..1", "--min-df", "2", "--out", "runs"],
    );
    let run_line = train.lines().next().unwrap();
    let run_dir = run_line.split(" -> ").nth(1).unwrap().trim().to_string();
    assert!(dir.join(&run_dir).join("record.json").is_file());

    let eval = ok(dir, &["eval", "--run", &run_dir]);
    assert!(eval.starts_with("n = 36"), "{eval}");
    let by_model = ok(
        dir,
        &["eval", "--model", &format!("{run_dir}/model.json"), "--corpus", "corpus.jsonl", "--test-ids", "split.csv", "--within-ref", &run_dir],
    );
    assert_eq!(by_model.lines().next(), eval.lines().next());
    assert!(by_model.contains("(= 0.0000)"), "{by_model}");
    let json = ok(dir, &["eval", "--run", &run_dir, "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["report"]["n"], 36);

    ok(dir, &["report", "--runs", "runs", "--out", "tables"]);
    for f in ["performance.txt", "per_class.txt", "label_distribution.txt"] {
        assert!(dir.join("tables").join(f).is_file(), "{f}");
    }
}

#[test]
fn loco_and_scenario_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let loco = ok(
        dir,
        &["loco", "--corpus", "corpus.jsonl", "--countries", "AAA,BBB,CCC", "--lambda", "1e-4", "--min-df", "2", "--out", "loco"],
    );
    assert!(loco.contains("Average"), "{loco}");
    assert!(loco.contains("AAA"));

    std::fs::write(
        dir.join("scenario.toml"),
        "name = \"genre\"\ncorpora = [\"corpus.jsonl\"]\nout_dir = \"scen\"\n\
         [split]\nstrategy = \"cross_genre\"\ntrain_genre = \"manifesto\"\ntest_genre = \"speech\"\nval_fraction = 0.1\nseed = 1\n\
         [model]\nsource = \"grid\"\n[model.grid]\nlambda_grid = [0.0001, 0.01]\nngram_ranges = [\"1..1\"]\nmin_df_grid = [2]\n",
    )
    .unwrap();
    let out = ok(dir, &["run", "--scenario", "scenario.toml"]);
    assert!(out.contains("selected: ngrams 1..1"), "{out}");
    let run_dir = out.lines().next().unwrap().split(" -> ").nth(1).unwrap().trim().to_string();
    assert!(dir.join(&run_dir).join("leaderboard.csv").is_file());
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    for args in [
        vec!["ingest", "--input", "missing.jsonl"],
        vec!["split", "--corpus", "corpus.jsonl", "--strategy", "temporal", "--out", "s.csv"],
        vec!["split", "--corpus", "corpus.jsonl", "--strategy", "loco", "--holdout", "ZZZ", "--out", "s.csv"],
        vec!["split", "--corpus", "corpus.jsonl", "--strategy", "random", "--proportions", ".8,.1,.2", "--out", "s.csv"],
        vec!["loco", "--corpus", "corpus.jsonl", "--countries", "AAA", "--out", "l"],
    ] {
        let out = polxfer(dir, &args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
