//! Versioned, checksummed model container.
//!
//! Layout: one header line of JSON
//! `{"format":"polxfer-model","format_version":1,"payload_bytes":N,"checksum":"sha256:<hex>"}`
//! followed by the payload, a single compact JSON object, and a trailing
//! newline. The checksum covers exactly the `N` payload bytes. Weights are
//! stored class-major (row `c` holds the weights of class index `c`).

use super::{LinearModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::features::{SparseVector, TfIdfTransform, Vocabulary};
use crate::label::{TopicLabel, N_CLASSES};
use crate::textpipe::{Analyzer, TokenizerOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MODEL_FORMAT: &str = "polxfer-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Everything needed to go from raw text to a label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub tokenizer: TokenizerOptions,
    pub transform: TfIdfTransform,
    pub model: LinearModel,
}

impl ModelBundle {
    pub fn analyzer(&self) -> Result<Analyzer> {
        Analyzer::new(&self.tokenizer)
    }

    pub fn featurize(&self, analyzer: &Analyzer, text: &str) -> SparseVector {
        self.transform.transform(&analyzer.analyze(text))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: serde_json::Value,
    payload_bytes: usize,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRecord {
    grams: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    min_df: u32,
    max_features: usize,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    labels: Vec<String>,
    tokenizer: TokenizerOptions,
    term_frequency: String,
    idf_formula: String,
    normalization: String,
    vocabulary: VocabularyRecord,
    idf: Vec<f64>,
    n_features: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    training: TrainingMeta,
}

const TF: &str = "raw_count";
const IDF: &str = "ln((1+n_docs)/(1+df))+1";
const NORM: &str = "l2";

fn checksum(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let vocab = bundle.transform.vocabulary();
    let payload = Payload {
        labels: TopicLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
        tokenizer: bundle.tokenizer.clone(),
        term_frequency: TF.into(),
        idf_formula: IDF.into(),
        normalization: NORM.into(),
        vocabulary: VocabularyRecord {
            grams: vocab.grams().to_vec(),
            df: vocab.df().to_vec(),
            n_docs: vocab.n_docs(),
            min_df: vocab.min_df(),
            max_features: vocab.max_features(),
        },
        idf: bundle.transform.idf().to_vec(),
        n_features: bundle.model.n_features(),
        weights: bundle.model.weights_row_major(),
        bias: bundle.model.bias().to_vec(),
        training: bundle.model.meta.clone(),
    };
    let body = serde_json::to_vec(&payload)?;
    let header = Header {
        format: MODEL_FORMAT.into(),
        format_version: MODEL_FORMAT_VERSION.into(),
        payload_bytes: body.len(),
        checksum: checksum(&body),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&body);
    out.push(b'\n');
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = || Error::ChecksumMismatch {
        path: path.to_path_buf(),
    };
    let split = bytes.iter().position(|&b| b == b'\n').ok_or_else(corrupt)?;
    let header: Header = serde_json::from_slice(&bytes[..split]).map_err(|_| corrupt())?;
    if header.format != MODEL_FORMAT {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: header.format,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if header.format_version.as_u64() != Some(MODEL_FORMAT_VERSION as u64) {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: header.format_version.to_string(),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let rest = &bytes[split + 1..];
    let body = rest.strip_suffix(b"\n").unwrap_or(rest);
    if body.len() != header.payload_bytes || checksum(body) != header.checksum {
        return Err(corrupt());
    }
    let payload: Payload = serde_json::from_slice(body)?;

    let invalid = |m: &str| Error::InvalidConfig(format!("model file {}: {m}", path.display()));
    let expected: Vec<&str> = TopicLabel::ALL.iter().map(|l| l.as_str()).collect();
    if payload.labels != expected {
        return Err(invalid("label order differs from this build's scheme"));
    }
    if payload.term_frequency != TF || payload.idf_formula != IDF || payload.normalization != NORM {
        return Err(invalid("unsupported weighting scheme"));
    }
    payload.tokenizer.validate()?;
    let v = payload.vocabulary;
    let vocabulary = Vocabulary::from_parts(v.grams, v.df, v.n_docs, v.min_df, v.max_features)?;
    let transform = TfIdfTransform::from_parts(vocabulary, payload.idf)?;
    if payload.n_features != transform.dim() {
        return Err(invalid("weight dimension does not match vocabulary"));
    }
    let bias: [f64; N_CLASSES] = payload
        .bias
        .try_into()
        .map_err(|_| invalid("bias must have 8 entries"))?;
    let mut model = LinearModel::from_row_major(payload.n_features, &payload.weights, bias)
        .ok_or_else(|| invalid("weight array has wrong length"))?;
    if !model.is_finite() {
        return Err(invalid("non-finite weights"));
    }
    model.meta = payload.training;
    Ok(ModelBundle {
        tokenizer: payload.tokenizer,
        transform,
        model,
    })
}
