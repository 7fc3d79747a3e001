//! Tokenization and n-gram expansion.

use crate::error::{Error, Result};
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

pub const MAX_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerOptions {
    pub lowercase: bool,
    pub min_token_length: usize,
    pub drop_pure_digits: bool,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Tokens removed before n-gram expansion (compared after lowercasing).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stopwords: Vec<String>,
    /// Snowball stemmer language, e.g. `"english"` or `"german"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stemmer: Option<String>,
}

impl Default for TokenizerOptions {
    fn default() -> Self {
        TokenizerOptions {
            lowercase: true,
            min_token_length: 1,
            drop_pure_digits: false,
            ngram_min: 1,
            ngram_max: 2,
            stopwords: Vec::new(),
            stemmer: None,
        }
    }
}

impl TokenizerOptions {
    pub fn with_ngrams(mut self, min: usize, max: usize) -> Self {
        self.ngram_min = min;
        self.ngram_max = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_token_length == 0 {
            return Err(Error::InvalidConfig("min_token_length must be at least 1".into()));
        }
        check_ngram_range(self.ngram_min, self.ngram_max)?;
        if let Some(lang) = &self.stemmer {
            stemmer_algorithm(lang)?;
        }
        Ok(())
    }
}

pub fn check_ngram_range(min: usize, max: usize) -> Result<()> {
    if min == 0 || min > max || max > MAX_NGRAM {
        return Err(Error::InvalidConfig(format!(
            "n-gram range {min}..{max} must satisfy 1 <= min <= max <= {MAX_NGRAM}"
        )));
    }
    Ok(())
}

fn stemmer_algorithm(lang: &str) -> Result<Algorithm> {
    Ok(match lang.to_ascii_lowercase().as_str() {
        "arabic" => Algorithm::Arabic,
        "danish" => Algorithm::Danish,
        "dutch" => Algorithm::Dutch,
        "english" => Algorithm::English,
        "finnish" => Algorithm::Finnish,
        "french" => Algorithm::French,
        "german" => Algorithm::German,
        "greek" => Algorithm::Greek,
        "hungarian" => Algorithm::Hungarian,
        "italian" => Algorithm::Italian,
        "norwegian" => Algorithm::Norwegian,
        "portuguese" => Algorithm::Portuguese,
        "romanian" => Algorithm::Romanian,
        "russian" => Algorithm::Russian,
        "spanish" => Algorithm::Spanish,
        "swedish" => Algorithm::Swedish,
        "tamil" => Algorithm::Tamil,
        "turkish" => Algorithm::Turkish,
        other => return Err(Error::InvalidConfig(format!("no stemmer for {other:?}"))),
    })
}

/// Maximal runs of Unicode letters/digits, optionally lowercased and length-filtered.
///
/// Stopwords and stemming are not applied here; see [`Analyzer`].
pub fn tokenize(text: &str, options: &TokenizerOptions) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| t.chars().count() >= options.min_token_length)
        .filter(|t| !(options.drop_pure_digits && t.chars().all(|c| c.is_numeric())))
        .map(|t| {
            if options.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// All contiguous n-grams for n in `min..=max`, joined by `_`, grouped by n.
pub fn ngrams(tokens: &[String], min: usize, max: usize) -> Vec<String> {
    let mut grams = Vec::new();
    for n in min..=max {
        if n == 1 {
            grams.extend(tokens.iter().cloned());
        } else {
            grams.extend(tokens.windows(n).map(|w| w.join("_")));
        }
    }
    grams
}

/// Compiled [`TokenizerOptions`]: text in, n-gram stream out.
pub struct Analyzer {
    options: TokenizerOptions,
    stopwords: HashSet<String>,
    stemmer: Option<Stemmer>,
}

impl Analyzer {
    pub fn new(options: &TokenizerOptions) -> Result<Analyzer> {
        options.validate()?;
        let stemmer = match &options.stemmer {
            Some(lang) => Some(Stemmer::create(stemmer_algorithm(lang)?)),
            None => None,
        };
        let stopwords = options
            .stopwords
            .iter()
            .map(|w| if options.lowercase { w.to_lowercase() } else { w.clone() })
            .collect();
        Ok(Analyzer {
            options: options.clone(),
            stopwords,
            stemmer,
        })
    }

    pub fn options(&self) -> &TokenizerOptions {
        &self.options
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        let mut tokens = tokenize(text, &self.options);
        if !self.stopwords.is_empty() {
            tokens.retain(|t| !self.stopwords.contains(t));
        }
        if let Some(stemmer) = &self.stemmer {
            for t in tokens.iter_mut() {
                *t = stemmer.stem(t).into_owned();
            }
        }
        ngrams(&tokens, self.options.ngram_min, self.options.ngram_max)
    }
}
