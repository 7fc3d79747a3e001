use super::{LinearModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::label::{TopicLabel, N_CLASSES};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Mini-batch SGD settings. The step size at update `t` (0-based) is
/// `lr0 / (1 + lr0 * lambda * t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Stop once the relative change of the full-data loss falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-4,
            max_epochs: 30,
            batch_size: 32,
            lr0: 0.5,
            tol: 1e-4,
            seed: 2018,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and nonnegative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        Ok(())
    }

    pub fn step_size(&self, t: u64) -> f64 {
        self.lr0 / (1.0 + self.lr0 * self.lambda * t as f64)
    }
}

/// Weights kept as `scale * scaled` so the L2 shrinkage of every update is a
/// single multiply instead of a pass over all of `W`.
struct ScaledWeights {
    scaled: LinearModel,
    scale: f64,
}

impl ScaledWeights {
    fn logits(&self, x: &SparseVector) -> [f64; N_CLASSES] {
        let mut z = *self.scaled.bias();
        let w = self.scaled.weights_raw();
        for (i, v) in x.iter() {
            let row = &w[i * N_CLASSES..(i + 1) * N_CLASSES];
            for (zc, wc) in z.iter_mut().zip(row) {
                *zc += self.scale * v * wc;
            }
        }
        z
    }

    fn shrink(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            for w in self.scaled.weights_raw_mut() {
                *w *= s;
            }
            self.scale = 1.0;
        }
    }

    fn materialize(&self) -> LinearModel {
        let mut m = self.scaled.clone();
        if self.scale != 1.0 {
            for w in m.weights_raw_mut() {
                *w *= self.scale;
            }
        }
        m
    }
}

/// Fits multinomial logistic regression from zero initialization.
///
/// Deterministic for a given config: per-epoch shuffles come from a ChaCha
/// stream seeded with `config.seed`, and accumulation order is fixed.
pub fn train(
    xs: &[SparseVector],
    ys: &[TopicLabel],
    n_features: usize,
    config: &TrainConfig,
) -> Result<LinearModel> {
    config.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::InvalidConfig(format!(
            "{} feature vectors but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let distinct: BTreeSet<TopicLabel> = ys.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidConfig(
            "training data must contain at least two distinct labels".into(),
        ));
    }
    if let Some(x) = xs.iter().find(|x| x.dim_hint() > n_features) {
        return Err(Error::InvalidConfig(format!(
            "feature index {} outside dimension {n_features}",
            x.dim_hint() - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = ScaledWeights {
        scaled: LinearModel::zeros(n_features),
        scale: 1.0,
    };
    let initial = super::nll_loss(&state.scaled, xs, ys, config.lambda);
    let mut prev = initial;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut residuals: Vec<[f64; N_CLASSES]> = Vec::with_capacity(config.batch_size);
    let mut t: u64 = 0;
    let mut meta = TrainingMeta {
        lambda: config.lambda,
        seed: config.seed,
        ..TrainingMeta::default()
    };

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let eta = config.step_size(t);
            residuals.clear();
            for &i in batch {
                let mut r = super::softmax(&state.logits(&xs[i]));
                r[ys[i].index()] -= 1.0;
                residuals.push(r);
            }
            // W is exactly zero before the first update, so shrinking is a no-op there.
            if t > 0 && config.lambda > 0.0 {
                state.shrink(1.0 - eta * config.lambda);
            }
            let inv = 1.0 / batch.len() as f64;
            let step = eta * inv / state.scale;
            let w = state.scaled.weights_raw_mut();
            for (&i, r) in batch.iter().zip(&residuals) {
                for (f, v) in xs[i].iter() {
                    let row = &mut w[f * N_CLASSES..(f + 1) * N_CLASSES];
                    for (wc, rc) in row.iter_mut().zip(r) {
                        *wc -= step * v * rc;
                    }
                }
            }
            let bias = state.scaled.bias_mut();
            for r in &residuals {
                for (b, rc) in bias.iter_mut().zip(r) {
                    *b -= eta * inv * rc;
                }
            }
            t += 1;
        }

        let model = state.materialize();
        let loss = super::nll_loss(&model, xs, ys, config.lambda);
        meta.epochs_run = epoch;
        meta.final_loss = loss;
        if !loss.is_finite() || loss > 10.0 * initial {
            return Err(Error::Diverged {
                epoch,
                loss,
                initial,
            });
        }
        let rel = (prev - loss).abs() / prev.abs().max(f64::MIN_POSITIVE);
        log::debug!("epoch {epoch}: loss {loss:.6} (rel change {rel:.2e})");
        prev = loss;
        if rel < config.tol {
            meta.converged = true;
            break;
        }
    }

    let mut model = state.materialize();
    if !model.is_finite() {
        return Err(Error::Diverged {
            epoch: meta.epochs_run,
            loss: f64::NAN,
            initial,
        });
    }
    model.meta = meta;
    Ok(model)
}
