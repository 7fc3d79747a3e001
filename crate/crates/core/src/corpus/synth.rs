//! Synthetic labeled corpora with controllable domain shift.
//!
//! Every class owns a block of "topic" words on top of a shared Zipfian
//! background. Each domain then replaces a fraction `drift` of every class
//! distribution with a random domain-specific one:
//!
//! ```text
//! p[domain][class] = (1 - drift) * base[class] + drift * perturbation[domain][class]
//! ```
//!
//! so `drift = 0` yields identical class-conditionals in every domain.

use super::{Corpus, Genre, Provenance, Utterance};
use crate::error::{Error, Result};
use crate::label::{TopicLabel, N_CLASSES};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub country: String,
    pub year: i32,
    pub genre: Genre,
    pub language: String,
}

impl Domain {
    pub fn new(country: &str, year: i32, genre: Genre, language: &str) -> Domain {
        Domain {
            country: country.into(),
            year,
            genre,
            language: language.into(),
        }
    }
}

fn default_n_classes() -> usize {
    N_CLASSES
}

fn default_topic_weight() -> f64 {
    0.35
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    pub vocab_size: usize,
    pub docs_per_domain: usize,
    pub domains: Vec<Domain>,
    pub class_prior: Vec<f64>,
    /// Total-variation weight of the per-domain perturbation, in [0, 1].
    pub drift: f64,
    /// Mean number of tokens per utterance.
    pub doc_length: f64,
    pub seed: u64,
    /// Probability mass each class puts on its own topic block.
    #[serde(default = "default_topic_weight")]
    pub topic_weight: f64,
}

impl SynthConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<SynthConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: SynthConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_classes != N_CLASSES {
            return bad(format!("n_classes must be {N_CLASSES}, got {}", self.n_classes));
        }
        if self.vocab_size < 8 * self.n_classes {
            return bad(format!(
                "vocab_size {} is below {} (too small to separate classes)",
                self.vocab_size,
                8 * self.n_classes
            ));
        }
        if self.docs_per_domain == 0 {
            return bad("docs_per_domain must be positive".into());
        }
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        if self.class_prior.len() != N_CLASSES {
            return bad(format!("class_prior must have {N_CLASSES} entries"));
        }
        if self.class_prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return bad("class_prior entries must be nonnegative".into());
        }
        let total: f64 = self.class_prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("class_prior sums to {total}, not 1"));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return bad(format!("drift {} outside [0, 1]", self.drift));
        }
        if !(self.doc_length >= 1.0 && self.doc_length.is_finite()) {
            return bad("doc_length must be at least 1".into());
        }
        if !(self.topic_weight > 0.0 && self.topic_weight <= 1.0) {
            return bad("topic_weight must lie in (0, 1]".into());
        }
        Ok(())
    }

    fn block_size(&self) -> usize {
        self.vocab_size / (2 * N_CLASSES)
    }

    /// Class-conditional token distributions shared by all domains.
    pub fn base_distributions(&self) -> Vec<Vec<f64>> {
        let block = self.block_size();
        let background_start = block * N_CLASSES;
        let zipf_norm = |len: usize| (0..len).map(|r| 1.0 / (r + 1) as f64).sum::<f64>();
        let block_norm = zipf_norm(block);
        let bg_len = self.vocab_size - background_start;
        let bg_norm = zipf_norm(bg_len);
        (0..N_CLASSES)
            .map(|c| {
                let mut p = vec![0.0; self.vocab_size];
                for r in 0..block {
                    p[c * block + r] = self.topic_weight / ((r + 1) as f64 * block_norm);
                }
                for r in 0..bg_len {
                    p[background_start + r] =
                        (1.0 - self.topic_weight) / ((r + 1) as f64 * bg_norm);
                }
                p
            })
            .collect()
    }

    /// Token distributions per domain and class, in that nesting order.
    pub fn domain_distributions(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
        let base = self.base_distributions();
        let support = self.block_size().max(1);
        self.domains
            .iter()
            .map(|_| {
                base.iter()
                    .map(|base_c| {
                        let chosen = rand::seq::index::sample(rng, self.vocab_size, support);
                        let weights: Vec<(usize, f64)> = chosen
                            .iter()
                            .map(|w| (w, Exp1.sample(rng)))
                            .collect();
                        let total: f64 = weights.iter().map(|(_, x)| x).sum();
                        let mut p: Vec<f64> =
                            base_c.iter().map(|b| (1.0 - self.drift) * b).collect();
                        for (w, x) in weights {
                            p[w] += self.drift * x / total;
                        }
                        p
                    })
                    .collect()
            })
            .collect()
    }
}

fn word(index: usize) -> String {
    format!("w{index}")
}

/// Draws a corpus from `config`; a pure function of the config (seed included).
pub fn generate_synthetic(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dists = config.domain_distributions(&mut rng);
    let label_dist = WeightedIndex::new(&config.class_prior)
        .map_err(|e| Error::InvalidConfig(format!("class_prior: {e}")))?;
    let extra_len = Poisson::new(config.doc_length - 1.0).ok();

    let mut utterances = Vec::with_capacity(config.docs_per_domain * config.domains.len());
    for (d, domain) in config.domains.iter().enumerate() {
        let token_dists: Vec<WeightedIndex<f64>> = dists[d]
            .iter()
            .map(|p| WeightedIndex::new(p).expect("class distribution has positive mass"))
            .collect();
        for i in 0..config.docs_per_domain {
            let class = label_dist.sample(&mut rng);
            let len = 1 + extra_len.map_or(0, |pois| {
                let x: f64 = pois.sample(&mut rng);
                x as usize
            });
            let text = (0..len)
                .map(|_| word(token_dists[class].sample(&mut rng)))
                .collect::<Vec<_>>()
                .join(" ");
            utterances.push(Utterance {
                id: format!("syn{d:02}-{i:06}"),
                text,
                label: TopicLabel::from_index(class).expect("class index in range"),
                country: domain.country.clone(),
                year: domain.year,
                language: domain.language.clone(),
                genre: domain.genre,
                party: None,
            });
        }
    }
    let provenance = Provenance {
        sources: vec!["synthetic".into()],
        generator: Some(serde_json::to_string(config)?),
        ..Provenance::default()
    };
    Corpus::new(utterances, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config(drift: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n_classes: 8,
            vocab_size: 400,
            docs_per_domain: 200,
            domains: vec![
                Domain::new("AAA", 2016, Genre::Manifesto, "en"),
                Domain::new("BBB", 2020, Genre::Speech, "en"),
            ],
            class_prior: vec![0.125; 8],
            drift,
            doc_length: 10.0,
            seed,
            topic_weight: 0.35,
        }
    }

    #[test]
    fn zero_drift_shares_distributions() {
        let cfg = config(0.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dists = cfg.domain_distributions(&mut rng);
        assert_eq!(dists[0], dists[1]);
        for p in &dists[0] {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_is_total_variation_bounded() {
        let cfg = config(0.3, 7);
        let base = cfg.base_distributions();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dists = cfg.domain_distributions(&mut rng);
        for domain in &dists {
            for (p, b) in domain.iter().zip(&base) {
                let tv: f64 = p.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
                assert!(tv <= 0.3 + 1e-12, "tv {tv}");
                assert!(tv > 0.0);
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&config(0.5, 11)).unwrap();
        let b = generate_synthetic(&config(0.5, 11)).unwrap();
        assert_eq!(a.utterances(), b.utterances());
        let c = generate_synthetic(&config(0.5, 12)).unwrap();
        assert_ne!(a.utterances(), c.utterances());
        assert_eq!(a.len(), 400);
    }

    #[test]
    fn rejects_small_vocab_and_bad_prior() {
        let mut cfg = config(0.0, 1);
        cfg.vocab_size = 63;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = config(0.0, 1);
        cfg.class_prior[0] = 0.2;
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = config(0.0, 1);
        cfg.drift = 1.5;
        assert!(generate_synthetic(&cfg).is_err());
    }
}
