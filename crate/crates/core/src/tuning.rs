//! Grid search over n-gram range, `min_df` and `lambda`, selected on validation data.

use crate::classifier::{train, ModelBundle, Prediction, PredictionSet, TrainConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::evalx::{evaluate, EvalReport};
use crate::features::{fit_idf, fit_vocabulary, SparseVector, TfIdfTransform};
use crate::label::TopicLabel;
use crate::textpipe::{check_ngram_range, Analyzer, TokenizerOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NgramRange {
    pub min: usize,
    pub max: usize,
}

impl NgramRange {
    pub fn new(min: usize, max: usize) -> Result<NgramRange> {
        check_ngram_range(min, max)?;
        Ok(NgramRange { min, max })
    }
}

impl fmt::Display for NgramRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

impl FromStr for NgramRange {
    type Err = Error;

    /// Accepts `"1..2"`, `"1-2"` or a single order like `"1"`.
    fn from_str(s: &str) -> Result<NgramRange> {
        let s = s.trim();
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once('-'))
            .unwrap_or((s, s));
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad n-gram range {s:?}")))
        };
        NgramRange::new(parse(a)?, parse(b)?)
    }
}

impl TryFrom<String> for NgramRange {
    type Error = Error;
    fn try_from(s: String) -> Result<NgramRange> {
        s.parse()
    }
}

impl From<NgramRange> for String {
    fn from(r: NgramRange) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Accuracy,
    MacroF1,
}

impl SelectionMetric {
    pub fn of(self, report: &EvalReport) -> f64 {
        match self {
            SelectionMetric::Accuracy => report.accuracy,
            SelectionMetric::MacroF1 => report.macro_f1,
        }
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<SelectionMetric> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "accuracy" | "acc" => Ok(SelectionMetric::Accuracy),
            "macro_f1" | "f1" => Ok(SelectionMetric::MacroF1),
            other => Err(Error::InvalidConfig(format!("unknown selection metric {other:?}"))),
        }
    }
}

/// One fully specified pipeline: tokenizer, vocabulary pruning and trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tokenizer: TokenizerOptions,
    pub min_df: u32,
    pub max_features: usize,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tokenizer: TokenizerOptions::default(),
            min_df: 5,
            max_features: 200_000,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lambda_grid: Vec<f64>,
    pub ngram_ranges: Vec<NgramRange>,
    pub min_df_grid: Vec<u32>,
    pub selection_metric: SelectionMetric,
    pub max_features: usize,
    /// Base tokenizer; its n-gram fields are replaced per configuration.
    pub tokenizer: TokenizerOptions,
    /// Base trainer; its `lambda` is replaced per configuration.
    pub train: TrainConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambda_grid: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
            ngram_ranges: vec![NgramRange { min: 1, max: 1 }, NgramRange { min: 1, max: 2 }],
            min_df_grid: vec![2, 5, 10],
            selection_metric: SelectionMetric::Accuracy,
            max_features: 200_000,
            tokenizer: TokenizerOptions::default(),
            train: TrainConfig::default(),
        }
    }
}

impl GridSpec {
    /// A one-point grid.
    pub fn fixed(config: &PipelineConfig) -> GridSpec {
        GridSpec {
            lambda_grid: vec![config.train.lambda],
            ngram_ranges: vec![NgramRange {
                min: config.tokenizer.ngram_min,
                max: config.tokenizer.ngram_max,
            }],
            min_df_grid: vec![config.min_df],
            selection_metric: SelectionMetric::Accuracy,
            max_features: config.max_features,
            tokenizer: config.tokenizer.clone(),
            train: config.train.clone(),
        }
    }

    pub fn from_toml(text: &str) -> Result<GridSpec> {
        let grid: GridSpec =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("grid file: {e}")))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GridSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GridSpec::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.ngram_ranges.is_empty() || self.min_df_grid.is_empty() {
            return Err(Error::InvalidConfig("every grid axis needs at least one value".into()));
        }
        for r in &self.ngram_ranges {
            check_ngram_range(r.min, r.max)?;
        }
        if self.min_df_grid.contains(&0) || self.max_features == 0 {
            return Err(Error::InvalidConfig("min_df and max_features must be at least 1".into()));
        }
        for &lambda in &self.lambda_grid {
            TrainConfig {
                lambda,
                ..self.train.clone()
            }
            .validate()?;
        }
        self.tokenizer.validate()
    }

    /// Configurations in lexicographic (n-gram range, min_df, lambda) order.
    pub fn configurations(&self) -> Vec<PipelineConfig> {
        let mut ngrams = self.ngram_ranges.clone();
        ngrams.sort_unstable();
        ngrams.dedup();
        let mut min_dfs = self.min_df_grid.clone();
        min_dfs.sort_unstable();
        min_dfs.dedup();
        let mut lambdas = self.lambda_grid.clone();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        let mut out = Vec::with_capacity(ngrams.len() * min_dfs.len() * lambdas.len());
        for r in &ngrams {
            for &min_df in &min_dfs {
                for &lambda in &lambdas {
                    out.push(PipelineConfig {
                        tokenizer: self.tokenizer.clone().with_ngrams(r.min, r.max),
                        min_df,
                        max_features: self.max_features,
                        train: TrainConfig {
                            lambda,
                            ..self.train.clone()
                        },
                    });
                }
            }
        }
        out
    }
}

fn analyze_all(analyzer: &Analyzer, corpus: &Corpus) -> Vec<Vec<String>> {
    corpus.utterances().par_iter().map(|u| analyzer.analyze(&u.text)).collect()
}

fn transform_all(transform: &TfIdfTransform, docs: &[Vec<String>]) -> Vec<SparseVector> {
    docs.par_iter().map(|d| transform.transform(d)).collect()
}

/// Fits vocabulary, idf and classifier on `train` with one configuration.
pub fn fit_pipeline(train_corpus: &Corpus, config: &PipelineConfig) -> Result<ModelBundle> {
    let analyzer = Analyzer::new(&config.tokenizer)?;
    let docs = analyze_all(&analyzer, train_corpus);
    let transform = fit_idf(fit_vocabulary(&docs, config.min_df, config.max_features)?);
    let xs = transform_all(&transform, &docs);
    let model = train(&xs, &train_corpus.labels(), transform.dim(), &config.train)?;
    Ok(ModelBundle {
        tokenizer: config.tokenizer.clone(),
        transform,
        model,
    })
}

/// Labels and class probabilities for every utterance of `corpus`.
pub fn predict_corpus(bundle: &ModelBundle, corpus: &Corpus, source: &str) -> Result<PredictionSet> {
    let analyzer = bundle.analyzer()?;
    let rows: Vec<(String, Prediction)> = corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let x = bundle.featurize(&analyzer, &u.text);
            let proba = bundle.model.predict_proba(&x);
            let label = bundle.model.predict(&x);
            (u.id.clone(), Prediction { label, proba: Some(proba) })
        })
        .collect();
    let mut set = PredictionSet::new(source);
    set.predictions.extend(rows);
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub ngram_range: NgramRange,
    pub min_df: u32,
    pub lambda: f64,
    pub vocab_size: Option<usize>,
    /// `ok`, `diverged` or `empty_vocabulary`.
    pub status: String,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub epochs_run: Option<usize>,
    pub train_seconds: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub selection_metric: SelectionMetric,
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    pub fn selected(&self) -> Option<&LeaderboardRow> {
        self.rows.iter().find(|r| r.selected)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ser = |e: csv::Error| Error::Serde(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(ser)?;
        w.write_record([
            "ngram_range",
            "min_df",
            "lambda",
            "vocab_size",
            "status",
            "val_accuracy",
            "val_macro_f1",
            "epochs_run",
            "train_seconds",
            "selected",
        ])
        .map_err(ser)?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.ngram_range.to_string(),
                r.min_df.to_string(),
                format!("{:e}", r.lambda),
                opt(r.vocab_size.map(|v| v.to_string())),
                r.status.clone(),
                opt(r.val_accuracy.map(|v| format!("{v:.6}"))),
                opt(r.val_macro_f1.map(|v| format!("{v:.6}"))),
                opt(r.epochs_run.map(|v| v.to_string())),
                format!("{:.3}", r.train_seconds),
                r.selected.to_string(),
            ])
            .map_err(ser)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: PipelineConfig,
    pub leaderboard: Leaderboard,
    pub bundle: ModelBundle,
}

struct Features {
    transform: TfIdfTransform,
    train: Vec<SparseVector>,
    val: Vec<SparseVector>,
}

/// `(a_metric, a_lambda, a_vocab)` beats `b` under the selection and tie rules:
/// higher metric, then larger lambda, then smaller vocabulary. Grid order
/// settles anything left because the earlier row is kept.
fn beats(a: (f64, f64, usize), b: (f64, f64, usize)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    a.2 < b.2
}

/// Tries every configuration, fitting on `train` and scoring on `val`.
///
/// Only train and validation utterances are passed in, so test data cannot
/// influence selection. The selected configuration is refit on `train`.
pub fn grid_search(train_corpus: &Corpus, val_corpus: &Corpus, grid: &GridSpec) -> Result<GridOutcome> {
    grid.validate()?;
    if train_corpus.is_empty() || val_corpus.is_empty() {
        return Err(Error::Tuning("train and validation sets must be nonempty".into()));
    }
    let configs = grid.configurations();
    let train_labels = train_corpus.labels();
    let val_labels = val_corpus.labels();

    // Features depend only on (n-gram range, min_df); build each once.
    let mut keys: Vec<(NgramRange, u32)> = configs
        .iter()
        .map(|c| (NgramRange::new(c.tokenizer.ngram_min, c.tokenizer.ngram_max).expect("validated"), c.min_df))
        .collect();
    keys.dedup();
    let mut ranges: Vec<NgramRange> = keys.iter().map(|k| k.0).collect();
    ranges.dedup();
    let analyzed: Vec<(NgramRange, Vec<Vec<String>>, Vec<Vec<String>>)> = ranges
        .iter()
        .map(|&r| {
            let analyzer = Analyzer::new(&grid.tokenizer.clone().with_ngrams(r.min, r.max))?;
            Ok((r, analyze_all(&analyzer, train_corpus), analyze_all(&analyzer, val_corpus)))
        })
        .collect::<Result<_>>()?;
    let features: Vec<((NgramRange, u32), Option<Features>)> = keys
        .par_iter()
        .map(|&(r, min_df)| {
            let (_, tr, va) = analyzed.iter().find(|a| a.0 == r).expect("analyzed range");
            let feats = fit_vocabulary(tr, min_df, grid.max_features).ok().map(|v| {
                let transform = fit_idf(v);
                let train = transform_all(&transform, tr);
                let val = transform_all(&transform, va);
                Features { transform, train, val }
            });
            ((r, min_df), feats)
        })
        .collect();
    drop(analyzed);
    let lookup = |c: &PipelineConfig| -> &Option<Features> {
        let key = (NgramRange { min: c.tokenizer.ngram_min, max: c.tokenizer.ngram_max }, c.min_df);
        &features.iter().find(|f| f.0 == key).expect("feature key").1
    };

    let mut rows: Vec<LeaderboardRow> = configs
        .par_iter()
        .map(|c| {
            let range = NgramRange { min: c.tokenizer.ngram_min, max: c.tokenizer.ngram_max };
            let mut row = LeaderboardRow {
                ngram_range: range,
                min_df: c.min_df,
                lambda: c.train.lambda,
                vocab_size: None,
                status: "empty_vocabulary".into(),
                val_accuracy: None,
                val_macro_f1: None,
                epochs_run: None,
                train_seconds: 0.0,
                selected: false,
            };
            let Some(f) = lookup(c) else { return Ok(row) };
            row.vocab_size = Some(f.transform.dim());
            let start = Instant::now();
            let fitted = train(&f.train, &train_labels, f.transform.dim(), &c.train);
            row.train_seconds = start.elapsed().as_secs_f64();
            match fitted {
                Ok(model) => {
                    let pred: Vec<TopicLabel> = f.val.iter().map(|x| model.predict(x)).collect();
                    let report = evaluate(&val_labels, &pred)?;
                    row.status = "ok".into();
                    row.val_accuracy = Some(report.accuracy);
                    row.val_macro_f1 = Some(report.macro_f1);
                    row.epochs_run = Some(model.meta.epochs_run);
                }
                Err(Error::Diverged { .. }) => row.status = "diverged".into(),
                Err(e) => return Err(e),
            }
            log::info!(
                "grid {range} min_df={} lambda={:e}: {}",
                c.min_df,
                c.train.lambda,
                row.status
            );
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let metric_of = |r: &LeaderboardRow| match grid.selection_metric {
        SelectionMetric::Accuracy => r.val_accuracy,
        SelectionMetric::MacroF1 => r.val_macro_f1,
    };
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        let Some(m) = metric_of(r) else { continue };
        let key = (m, r.lambda, r.vocab_size.unwrap_or(usize::MAX));
        let better = match best {
            None => true,
            Some(b) => {
                let rb = &rows[b];
                beats(key, (metric_of(rb).expect("scored"), rb.lambda, rb.vocab_size.unwrap_or(usize::MAX)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    let Some(best) = best else {
        let diverged = rows.iter().filter(|r| r.status == "diverged").count();
        return Err(Error::Tuning(format!(
            "no configuration produced a model ({diverged} diverged, {} had an empty vocabulary)",
            rows.len() - diverged
        )));
    };
    rows[best].selected = true;

    let config = configs[best].clone();
    let f = lookup(&config).as_ref().expect("selected row has features");
    let model = train(&f.train, &train_labels, f.transform.dim(), &config.train)?;
    let bundle = ModelBundle {
        tokenizer: config.tokenizer.clone(),
        transform: f.transform.clone(),
        model,
    };
    Ok(GridOutcome {
        best: config,
        leaderboard: Leaderboard {
            selection_metric: grid.selection_metric,
            rows,
        },
        bundle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::utt;
    use crate::corpus::Provenance;

    fn two_topic(n: usize, offset: usize) -> Corpus {
        let rows = (0..n)
            .map(|i| {
                let j = i + offset;
                let (label, words) = if j.is_multiple_of(2) {
                    (TopicLabel::Economy, ["tax", "budget", "jobs", "growth"])
                } else {
                    (TopicLabel::ExternalRelations, ["treaty", "army", "allies", "border"])
                };
                let mut u = utt(&format!("d{j:05}"), label, "NZL", 2016);
                u.text = format!("{} {} the", words[j % 4], words[(j / 4) % 4]);
                u
            })
            .collect();
        Corpus::new(rows, Provenance::default()).unwrap()
    }

    #[test]
    fn ngram_range_parsing() {
        assert_eq!("1..2".parse::<NgramRange>().unwrap(), NgramRange { min: 1, max: 2 });
        assert_eq!("2".parse::<NgramRange>().unwrap(), NgramRange { min: 2, max: 2 });
        assert!("2..1".parse::<NgramRange>().is_err());
        assert!("0..1".parse::<NgramRange>().is_err());
    }

    #[test]
    fn grid_file_defaults_and_order() {
        let g = GridSpec::from_toml("lambda_grid = [0.01, 0.0001]\nngram_ranges = [\"1..2\", \"1..1\"]\n").unwrap();
        assert_eq!(g.min_df_grid, vec![2, 5, 10]);
        let cfgs = g.configurations();
        assert_eq!(cfgs.len(), 2 * 2 * 3);
        assert_eq!((cfgs[0].tokenizer.ngram_max, cfgs[0].min_df, cfgs[0].train.lambda), (1, 2, 1e-4));
        assert_eq!((cfgs[1].tokenizer.ngram_max, cfgs[1].min_df, cfgs[1].train.lambda), (1, 2, 1e-2));
        assert!(GridSpec::from_toml("lambda_grid = []").is_err());
        assert_eq!(GridSpec::default().configurations().len(), 30);
    }

    #[test]
    fn single_point_grid_is_selected() {
        let cfg = PipelineConfig { min_df: 1, ..PipelineConfig::default() };
        let out = grid_search(&two_topic(80, 0), &two_topic(20, 80), &GridSpec::fixed(&cfg)).unwrap();
        assert_eq!(out.best, cfg);
        assert_eq!(out.leaderboard.rows.len(), 1);
        assert!(out.leaderboard.rows[0].selected);
        assert_eq!(out.leaderboard.rows[0].val_accuracy, Some(1.0));
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        let grid = GridSpec {
            lambda_grid: vec![1e-6, 1e-5],
            ngram_ranges: vec![NgramRange { min: 1, max: 1 }],
            min_df_grid: vec![1],
            ..GridSpec::default()
        };
        let out = grid_search(&two_topic(80, 0), &two_topic(20, 80), &grid).unwrap();
        let accs: Vec<_> = out.leaderboard.rows.iter().map(|r| r.val_accuracy).collect();
        assert_eq!(accs, vec![Some(1.0), Some(1.0)]);
        assert_eq!(out.best.train.lambda, 1e-5);
        assert!(out.leaderboard.rows[1].selected);
    }

    #[test]
    fn tie_rule_ordering() {
        assert!(beats((0.5, 1e-3, 10), (0.4, 1.0, 1)));
        assert!(beats((0.5, 1e-2, 10), (0.5, 1e-3, 1)));
        assert!(beats((0.5, 1e-3, 5), (0.5, 1e-3, 10)));
        assert!(!beats((0.5, 1e-3, 10), (0.5, 1e-3, 10)));
    }

    #[test]
    fn all_empty_vocabularies_fail() {
        let grid = GridSpec {
            min_df_grid: vec![10_000],
            ..GridSpec::default()
        };
        assert!(matches!(
            grid_search(&two_topic(40, 0), &two_topic(10, 40), &grid),
            Err(Error::Tuning(_))
        ));
    }

    #[test]
    fn deterministic_leaderboard() {
        let grid = GridSpec {
            lambda_grid: vec![1e-4, 1e-2],
            min_df_grid: vec![1, 2],
            ..GridSpec::default()
        };
        let strip = |mut l: Leaderboard| {
            l.rows.iter_mut().for_each(|r| r.train_seconds = 0.0);
            l
        };
        let a = grid_search(&two_topic(60, 0), &two_topic(20, 60), &grid).unwrap();
        let b = grid_search(&two_topic(60, 0), &two_topic(20, 60), &grid).unwrap();
        assert_eq!(strip(a.leaderboard), strip(b.leaderboard));
        assert_eq!(a.bundle, b.bundle);
    }
}
