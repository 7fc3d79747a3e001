//! Multinomial logistic regression over sparse TF-IDF features.

mod model_file;
mod predictions;
mod train;

pub use model_file::{load_model, save_model, ModelBundle, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use predictions::{
    load_external_predictions, load_external_predictions_with, write_predictions, Coverage,
    Prediction, PredictionSet,
};
pub use train::{train, TrainConfig};

use crate::features::SparseVector;
use crate::label::{TopicLabel, N_CLASSES};
use serde::{Deserialize, Serialize};

pub type Logits = [f64; N_CLASSES];

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &Logits) -> Logits {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_CLASSES];
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    out
}

fn log_sum_exp(z: &Logits) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub lambda: f64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub seed: u64,
    pub converged: bool,
}

/// Weights `W` (8 × V) and biases `b`.
///
/// Stored feature-major in memory so a sparse dot product touches one
/// contiguous run of 8 weights per nonzero; [`LinearModel::weights_row_major`]
/// gives the class-major view used on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    n_features: usize,
    weights: Vec<f64>,
    bias: Logits,
    pub meta: TrainingMeta,
}

impl LinearModel {
    pub fn zeros(n_features: usize) -> LinearModel {
        LinearModel {
            n_features,
            weights: vec![0.0; n_features * N_CLASSES],
            bias: [0.0; N_CLASSES],
            meta: TrainingMeta::default(),
        }
    }

    /// Builds from a class-major (row-major `k × V`) weight array.
    pub fn from_row_major(n_features: usize, row_major: &[f64], bias: Logits) -> Option<LinearModel> {
        if row_major.len() != n_features * N_CLASSES {
            return None;
        }
        let mut m = LinearModel::zeros(n_features);
        for c in 0..N_CLASSES {
            for i in 0..n_features {
                m.weights[i * N_CLASSES + c] = row_major[c * n_features + i];
            }
        }
        m.bias = bias;
        Some(m)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.weights[feature * N_CLASSES + class]
    }

    pub fn set_weight(&mut self, class: usize, feature: usize, value: f64) {
        self.weights[feature * N_CLASSES + class] = value;
    }

    pub fn bias(&self) -> &Logits {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut Logits {
        &mut self.bias
    }

    pub fn weights_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.weights.len()];
        for i in 0..self.n_features {
            for c in 0..N_CLASSES {
                out[c * self.n_features + i] = self.weights[i * N_CLASSES + c];
            }
        }
        out
    }

    pub(crate) fn weights_raw(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_raw_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Squared Frobenius norm of `W` (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite()) && self.bias.iter().all(|b| b.is_finite())
    }

    pub fn logits(&self, x: &SparseVector) -> Logits {
        let mut z = self.bias;
        for (i, v) in x.iter() {
            let row = &self.weights[i * N_CLASSES..(i + 1) * N_CLASSES];
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += v * w;
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Logits {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &SparseVector) -> TopicLabel {
        TopicLabel::from_index(argmax(&self.logits(x))).expect("argmax within class range")
    }
}

/// Mean cross-entropy over the batch plus `(lambda / 2) * ||W||_F^2`.
pub fn nll_loss(model: &LinearModel, xs: &[SparseVector], ys: &[TopicLabel], lambda: f64) -> f64 {
    assert_eq!(xs.len(), ys.len(), "features and labels differ in length");
    let ce = if xs.is_empty() {
        0.0
    } else {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let z = model.logits(x);
                log_sum_exp(&z) - z[y.index()]
            })
            .sum::<f64>()
            / xs.len() as f64
    };
    ce + 0.5 * lambda * model.weight_norm_sq()
}

/// Gradient of [`nll_loss`] with respect to `(W, b)`, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    inner: LinearModel,
}

impl Gradient {
    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.inner.weight(class, feature)
    }

    pub fn bias(&self) -> &Logits {
        self.inner.bias()
    }

    pub fn n_features(&self) -> usize {
        self.inner.n_features
    }
}

pub fn gradient(model: &LinearModel, xs: &[SparseVector], ys: &[TopicLabel], lambda: f64) -> Gradient {
    assert_eq!(xs.len(), ys.len(), "features and labels differ in length");
    let mut g = LinearModel::zeros(model.n_features);
    let n = xs.len().max(1) as f64;
    for (x, y) in xs.iter().zip(ys) {
        let mut r = model.predict_proba(x);
        r[y.index()] -= 1.0;
        for (i, v) in x.iter() {
            let row = &mut g.weights[i * N_CLASSES..(i + 1) * N_CLASSES];
            for (gc, rc) in row.iter_mut().zip(&r) {
                *gc += rc * v / n;
            }
        }
        for (gb, rc) in g.bias.iter_mut().zip(&r) {
            *gb += rc / n;
        }
    }
    for (gw, w) in g.weights.iter_mut().zip(&model.weights) {
        *gw += lambda * w;
    }
    Gradient { inner: g }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_shift_and_overflow() {
        let p = softmax(&[0.0; 8]);
        assert!(p.iter().all(|&v| (v - 0.125).abs() < 1e-15));

        let z = [0.3, -1.0, 2.0, 0.0, 5.0, -3.0, 1.0, 0.5];
        let mut shifted = z;
        for v in shifted.iter_mut() {
            *v += 123.4;
        }
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((softmax(&z).iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let big = softmax(&[1000.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(big.iter().all(|v| v.is_finite()));
        assert!((big[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0; 8]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn zero_model_predicts_first_class_with_uniform_loss() {
        let m = LinearModel::zeros(3);
        let x = SparseVector::from_pairs([(1, 0.5), (2, 0.5)]);
        assert_eq!(m.predict(&x), TopicLabel::NoTopic);
        let loss = nll_loss(&m, &[x.clone(), x], &[TopicLabel::Economy, TopicLabel::SocialGroups], 0.3);
        assert!((loss - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_model_has_near_zero_loss_and_gradient() {
        let mut m = LinearModel::zeros(1);
        m.bias_mut()[TopicLabel::Economy.index()] = 60.0;
        let x = SparseVector::zero();
        let loss = nll_loss(&m, std::slice::from_ref(&x), &[TopicLabel::Economy], 0.0);
        assert!(loss < 1e-20);
        let g = gradient(&m, &[x], &[TopicLabel::Economy], 0.0);
        assert!(g.bias().iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn row_major_roundtrip() {
        let mut m = LinearModel::zeros(3);
        m.set_weight(2, 1, 4.0);
        m.set_weight(7, 0, -1.0);
        let rm = m.weights_row_major();
        assert_eq!(rm[2 * 3 + 1], 4.0);
        assert_eq!(rm[7 * 3], -1.0);
        let back = LinearModel::from_row_major(3, &rm, *m.bias()).unwrap();
        assert_eq!(back, m);
    }
}
