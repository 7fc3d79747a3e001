//! Vocabulary fitting and TF-IDF featurization.
//!
//! TF is the raw in-document count, IDF the smoothed
//! `ln((1 + N) / (1 + df)) + 1`, and every non-empty vector is L2-normalized.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

pub const DEFAULT_MIN_DF: u32 = 5;
pub const DEFAULT_MAX_FEATURES: usize = 200_000;

/// Sparse vector with strictly increasing indices and nonzero values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zero() -> SparseVector {
        SparseVector::default()
    }

    /// Builds from `(index, value)` pairs, sorting and summing duplicates and
    /// dropping zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> SparseVector {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        SparseVector { indices, values }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    /// Largest index + 1, or 0 for the zero vector.
    pub fn dim_hint(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }
}

/// Fitted gram → column mapping with document frequencies.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    grams: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    min_df: u32,
    max_features: usize,
    lookup: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.grams == other.grams
            && self.df == other.df
            && self.n_docs == other.n_docs
            && self.min_df == other.min_df
            && self.max_features == other.max_features
    }
}

impl Vocabulary {
    /// Reassembles a vocabulary from serialized arrays (grams in index order).
    pub fn from_parts(
        grams: Vec<String>,
        df: Vec<u32>,
        n_docs: usize,
        min_df: u32,
        max_features: usize,
    ) -> Result<Vocabulary> {
        if grams.len() != df.len() {
            return Err(Error::InvalidConfig("vocabulary grams/df length mismatch".into()));
        }
        if grams.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "vocabulary grams must be strictly increasing".into(),
            ));
        }
        let lookup = grams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            grams,
            df,
            n_docs,
            min_df,
            max_features,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn grams(&self) -> &[String] {
        &self.grams
    }

    pub fn df(&self) -> &[u32] {
        &self.df
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn min_df(&self) -> u32 {
        self.min_df
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub fn index_of(&self, gram: &str) -> Option<usize> {
        self.lookup.get(gram).map(|&i| i as usize)
    }

    pub fn df_of(&self, gram: &str) -> Option<u32> {
        self.index_of(gram).map(|i| self.df[i])
    }
}

/// Counts document frequencies and prunes.
///
/// Grams below `min_df` are dropped, then the top `max_features` by
/// (df descending, gram ascending) are kept; indices follow gram order.
pub fn fit_vocabulary<D: AsRef<[String]>>(
    docs: &[D],
    min_df: u32,
    max_features: usize,
) -> Result<Vocabulary> {
    if min_df == 0 || max_features == 0 {
        return Err(Error::InvalidConfig(
            "min_df and max_features must be at least 1".into(),
        ));
    }
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for doc in docs {
        let unique: HashSet<&str> = doc.as_ref().iter().map(String::as_str).collect();
        for gram in unique {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u32)> = counts.into_iter().filter(|&(_, df)| df >= min_df).collect();
    if kept.len() > max_features {
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(max_features);
    }
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary {
            min_df,
            n_docs: docs.len(),
        });
    }
    kept.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let (grams, df): (Vec<String>, Vec<u32>) =
        kept.into_iter().map(|(g, d)| (g.to_string(), d)).unzip();
    Vocabulary::from_parts(grams, df, docs.len(), min_df, max_features)
}

/// Smoothed inverse document frequency.
pub fn idf_weight(n_docs: usize, df: u32) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfTransform {
    vocabulary: Vocabulary,
    idf: Vec<f64>,
}

pub fn fit_idf(vocab: Vocabulary) -> TfIdfTransform {
    let idf = vocab
        .df
        .iter()
        .map(|&df| idf_weight(vocab.n_docs, df))
        .collect();
    TfIdfTransform {
        vocabulary: vocab,
        idf,
    }
}

impl TfIdfTransform {
    /// Restores a transform with explicit idf values (from a model file).
    pub fn from_parts(vocabulary: Vocabulary, idf: Vec<f64>) -> Result<TfIdfTransform> {
        if idf.len() != vocabulary.len() {
            return Err(Error::InvalidConfig("idf length does not match vocabulary".into()));
        }
        if idf.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidConfig("idf values must be finite and nonnegative".into()));
        }
        Ok(TfIdfTransform { vocabulary, idf })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Count × idf over in-vocabulary grams, L2-normalized. Unknown grams are dropped.
    pub fn transform(&self, doc: &[String]) -> SparseVector {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for gram in doc {
            if let Some(&i) = self.vocabulary.lookup.get(gram.as_str()) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let (indices, mut values): (Vec<u32>, Vec<f64>) = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .unzip();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in values.iter_mut() {
                *v /= norm;
            }
        }
        SparseVector { indices, values }
    }
}
