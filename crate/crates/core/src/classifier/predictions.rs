//! Per-utterance predictions, including those produced outside this crate.
//!
//! JSONL, one object per line: `{"id": "...", "label": "economy"}` or
//! `{"id": "...", "proba": [p0, ..., p7]}`. When only `proba` is given the
//! label is its argmax (ties to the lowest class index). Predictions are
//! joined to the corpus by id, never by row order.

use super::argmax;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::label::{TopicLabel, N_CLASSES};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: TopicLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proba: Option<[f64; N_CLASSES]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub source: String,
    pub predictions: BTreeMap<String, Prediction>,
}

impl PredictionSet {
    pub fn new(source: impl Into<String>) -> PredictionSet {
        PredictionSet {
            source: source.into(),
            predictions: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Prediction> {
        self.predictions.get(id)
    }

    /// Gold and predicted labels for the corpus utterances that have a prediction.
    pub fn aligned(&self, corpus: &Corpus) -> (Vec<TopicLabel>, Vec<TopicLabel>) {
        corpus
            .utterances()
            .iter()
            .filter_map(|u| self.predictions.get(&u.id).map(|p| (u.label, p.label)))
            .unzip()
    }
}

/// Whether every corpus id must have a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    #[default]
    Full,
    /// Evaluate on the covered subset, warning about the gap.
    AllowPartial,
}

#[derive(Deserialize)]
struct Line {
    id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    proba: Option<Vec<f64>>,
}

fn check_simplex(p: &[f64]) -> std::result::Result<[f64; N_CLASSES], String> {
    let arr: [f64; N_CLASSES] = p
        .try_into()
        .map_err(|_| format!("proba has {} entries, expected {N_CLASSES}", p.len()))?;
    if arr.iter().any(|v| !v.is_finite() || *v < -SIMPLEX_TOLERANCE) {
        return Err("proba entries must be finite and nonnegative".into());
    }
    let total: f64 = arr.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!("proba sums to {total}, not 1"));
    }
    Ok(arr)
}

pub fn load_external_predictions(path: impl AsRef<Path>, corpus: &Corpus) -> Result<PredictionSet> {
    load_external_predictions_with(path, corpus, Coverage::Full)
}

pub fn load_external_predictions_with(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    coverage: Coverage,
) -> Result<PredictionSet> {
    let path = path.as_ref();
    let err = |message: String| Error::Predictions {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
    let mut set = PredictionSet::new(format!("external:{stem}"));

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| err(format!("line {row}: {e}")))?;
        if !corpus.contains(&parsed.id) {
            return Err(err(format!(
                "line {row}: id {:?} is not in the corpus",
                parsed.id
            )));
        }
        let proba = match &parsed.proba {
            Some(p) => Some(check_simplex(p).map_err(|m| err(format!("line {row}: {m}")))?),
            None => None,
        };
        let label = match (&parsed.label, &proba) {
            (Some(raw), _) => TopicLabel::parse_label(raw)
                .ok_or_else(|| err(format!("line {row}: unknown label {raw:?}")))?,
            (None, Some(p)) => TopicLabel::from_index(argmax(p)).expect("argmax in range"),
            (None, None) => return Err(err(format!("line {row}: needs `label` or `proba`"))),
        };
        if set
            .predictions
            .insert(parsed.id.clone(), Prediction { label, proba })
            .is_some()
        {
            return Err(err(format!("line {row}: duplicate id {:?}", parsed.id)));
        }
    }

    let missing: Vec<&str> = corpus.ids().filter(|id| !set.predictions.contains_key(*id)).collect();
    if let Some(first) = missing.first() {
        match coverage {
            Coverage::Full => {
                return Err(Error::MissingPrediction {
                    path: path.to_path_buf(),
                    id: first.to_string(),
                })
            }
            Coverage::AllowPartial => log::warn!(
                "{}: {} of {} corpus ids have no prediction; evaluating the covered subset",
                path.display(),
                missing.len(),
                corpus.len()
            ),
        }
    }
    Ok(set)
}

#[derive(Serialize)]
struct OutLine<'a> {
    id: &'a str,
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    proba: Option<&'a [f64; N_CLASSES]>,
}

/// Writes predictions in id order, in the format the loader reads.
pub fn write_predictions(set: &PredictionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for (id, p) in &set.predictions {
        serde_json::to_writer(
            &mut out,
            &OutLine {
                id,
                label: p.label.as_str(),
                proba: p.proba.as_ref(),
            },
        )?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::utt;
    use crate::corpus::Provenance;

    fn corpus() -> Corpus {
        Corpus::new(
            vec![
                utt("a", TopicLabel::Economy, "NZL", 2017),
                utt("b", TopicLabel::NoTopic, "NZL", 2017),
                utt("c", TopicLabel::SocialGroups, "AUS", 2017),
            ],
            Provenance::default(),
        )
        .unwrap()
    }

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn labels_and_probabilities() {
        let f = write(
            "{\"id\":\"c\",\"label\":\"Social Groups\"}\n\
             {\"id\":\"a\",\"proba\":[0,0,0,0,0,0,1,0]}\n\
             {\"id\":\"b\",\"proba\":[0.25,0.25,0.25,0.25,0,0,0,0]}\n",
        );
        let set = load_external_predictions(f.path(), &corpus()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.get("a").unwrap().label, TopicLabel::Economy);
        assert_eq!(set.get("b").unwrap().label, TopicLabel::NoTopic);
        let (gold, pred) = set.aligned(&corpus());
        assert_eq!(gold, pred);
    }

    #[test]
    fn coverage_rules() {
        let f = write("{\"id\":\"a\",\"label\":\"economy\"}\n{\"id\":\"c\",\"label\":\"economy\"}\n");
        match load_external_predictions(f.path(), &corpus()) {
            Err(Error::MissingPrediction { id, .. }) => assert_eq!(id, "b"),
            other => panic!("expected coverage error, got {other:?}"),
        }
        let partial =
            load_external_predictions_with(f.path(), &corpus(), Coverage::AllowPartial).unwrap();
        assert_eq!(partial.aligned(&corpus()).0.len(), 2);

        let extra = write("{\"id\":\"zzz\",\"label\":\"economy\"}\n");
        assert!(load_external_predictions(extra.path(), &corpus()).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        for bad in [
            "{\"id\":\"a\",\"label\":\"defence\"}\n",
            "{\"id\":\"a\",\"proba\":[0.5,0.6,0,0,0,0,0,0]}\n",
            "{\"id\":\"a\",\"proba\":[1,0,0]}\n",
            "{\"id\":\"a\"}\n",
            "{\"id\":\"a\",\"label\":\"economy\"}\n{\"id\":\"a\",\"label\":\"economy\"}\n",
        ] {
            let f = write(bad);
            assert!(
                load_external_predictions_with(f.path(), &corpus(), Coverage::AllowPartial).is_err(),
                "accepted {bad}"
            );
        }
    }

    #[test]
    fn write_then_load() {
        let mut set = PredictionSet::new("tfidf-lr");
        for (id, label) in [("a", TopicLabel::Economy), ("b", TopicLabel::Economy), ("c", TopicLabel::NoTopic)] {
            let mut p = [0.0; 8];
            p[label.index()] = 1.0;
            set.predictions.insert(id.into(), Prediction { label, proba: Some(p) });
        }
        let f = tempfile::NamedTempFile::new().unwrap();
        write_predictions(&set, f.path()).unwrap();
        let back = load_external_predictions(f.path(), &corpus()).unwrap();
        assert_eq!(back.predictions, set.predictions);
    }
}
