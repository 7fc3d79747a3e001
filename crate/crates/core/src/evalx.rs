//! Confusion matrices, per-class and averaged metrics, and delta reporting.
//!
//! Zero divisions yield 0 for precision, recall and F1. Macro-F1 averages
//! only over classes with gold support in the evaluated sample.

use crate::error::{Error, Result};
use crate::label::{TopicLabel, N_CLASSES};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

/// Rows are gold classes, columns predictions, both in [`TopicLabel`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub cells: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn n(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|c| self.cells[c][c]).sum()
    }

    /// Gold support of class `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        self.cells[c].iter().sum()
    }

    /// Number of predictions of class `c`.
    pub fn col_sum(&self, c: usize) -> u64 {
        self.cells.iter().map(|row| row[c]).sum()
    }

    pub fn add(&mut self, gold: TopicLabel, pred: TopicLabel) {
        self.cells[gold.index()][pred.index()] += 1;
    }

    /// CSV with a `gold\pred` corner cell and label names on both axes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for l in TopicLabel::ALL {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for (g, row) in self.cells.iter().enumerate() {
            out.push_str(TopicLabel::ALL[g].as_str());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn confusion(gold: &[TopicLabel], pred: &[TopicLabel]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Eval(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Eval("cannot evaluate an empty sample".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: TopicLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub n: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn f1_by_class(&self) -> [f64; N_CLASSES] {
        let mut out = [0.0; N_CLASSES];
        for m in &self.per_class {
            out[m.label.index()] = m.f1;
        }
        out
    }

    pub fn with_scenario(mut self, scenario: impl Into<String>) -> EvalReport {
        self.scenario = Some(scenario.into());
        self
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean; 0 for an empty slice.
pub fn macro_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn classification_report(cm: &ConfusionMatrix) -> EvalReport {
    let per_class: Vec<ClassMetrics> = TopicLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = cm.cells[c][c];
            let support = cm.row_sum(c);
            let predicted = cm.col_sum(c);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                label,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                predicted,
            }
        })
        .collect();
    let supported: Vec<f64> = per_class.iter().filter(|m| m.support > 0).map(|m| m.f1).collect();
    EvalReport {
        scenario: None,
        n: cm.n(),
        accuracy: ratio(cm.trace(), cm.n()),
        macro_f1: macro_average(&supported),
        per_class,
        confusion: *cm,
    }
}

pub fn evaluate(gold: &[TopicLabel], pred: &[TopicLabel]) -> Result<EvalReport> {
    Ok(classification_report(&confusion(gold, pred)?))
}

/// F1 from pooled counts, `2 TP / (2 TP + FP + FN)`.
pub fn micro_f1(cm: &ConfusionMatrix) -> f64 {
    let tp: u64 = cm.trace();
    let fp: u64 = (0..N_CLASSES).map(|c| cm.col_sum(c) - cm.cells[c][c]).sum();
    let fn_: u64 = (0..N_CLASSES).map(|c| cm.row_sum(c) - cm.cells[c][c]).sum();
    ratio(2 * tp, 2 * tp + fp + fn_)
}

/// Max minus min F1 over classes not in `exclude`.
pub fn f1_range_values(f1: &[f64; N_CLASSES], exclude: &BTreeSet<TopicLabel>) -> Result<f64> {
    let kept: Vec<f64> = TopicLabel::ALL
        .iter()
        .filter(|l| !exclude.contains(l))
        .map(|l| f1[l.index()])
        .collect();
    if kept.len() < 2 {
        return Err(Error::Eval(format!(
            "F1 range needs at least two classes, {} remain",
            kept.len()
        )));
    }
    let max = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = kept.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

pub fn f1_range(report: &EvalReport, exclude: &BTreeSet<TopicLabel>) -> Result<f64> {
    f1_range_values(&report.f1_by_class(), exclude)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n_reports: usize,
}

/// Unweighted means of accuracy and macro-F1.
pub fn aggregate(reports: &[EvalReport]) -> Result<MeanMetrics> {
    if reports.is_empty() {
        return Err(Error::Eval("nothing to aggregate".into()));
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let f1: Vec<f64> = reports.iter().map(|r| r.macro_f1).collect();
    Ok(MeanMetrics {
        accuracy: macro_average(&acc),
        macro_f1: macro_average(&f1),
        n_reports: reports.len(),
    })
}

/// Renders with four decimals, rounding half to even on the shortest decimal
/// representation of `v` (so 0.00005 becomes "0.0000" and 0.00015 "0.0002").
pub fn format_metric(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let text = format!("{}", v.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    digits.extend((0..4).map(|i| frac.get(i).copied().unwrap_or(0)));
    let rest = frac.get(4..).unwrap_or(&[]);
    let round_up = match rest.split_first() {
        None => false,
        Some((&first, tail)) => {
            first > 5
                || (first == 5 && tail.iter().any(|&d| d != 0))
                || (first == 5 && digits.last().is_some_and(|d| d % 2 == 1))
        }
    };
    let mut int_len = int_len;
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                int_len += 1;
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let all_zero = digits.iter().all(|&d| d == 0);
    let mut out = String::new();
    if v < 0.0 && !all_zero {
        out.push('-');
    }
    for (i, d) in digits.iter().enumerate() {
        if i == int_len {
            out.push('.');
        }
        out.push((b'0' + d) as char);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Same,
}

impl Direction {
    pub fn marker(self) -> &'static str {
        match self {
            Direction::Up => "↑",
            Direction::Down => "↓",
            Direction::Same => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub cross: f64,
    pub within: f64,
    pub delta: f64,
}

impl MetricDelta {
    pub fn new(cross: f64, within: f64) -> MetricDelta {
        MetricDelta {
            cross,
            within,
            delta: cross - within,
        }
    }

    /// `=` whenever the difference renders as 0.0000.
    pub fn direction(&self) -> Direction {
        if format_metric(self.delta.abs()) == "0.0000" {
            Direction::Same
        } else if self.delta > 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    /// Marker and magnitude, e.g. "↓ 0.1197".
    pub fn render_delta(&self) -> String {
        format!("{} {}", self.direction().marker(), format_metric(self.delta.abs()))
    }
}

impl fmt::Display for MetricDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", format_metric(self.cross), self.render_delta())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub accuracy: MetricDelta,
    pub macro_f1: MetricDelta,
}

pub fn delta_report(cross: &EvalReport, within: &EvalReport) -> DeltaReport {
    DeltaReport {
        accuracy: MetricDelta::new(cross.accuracy, within.accuracy),
        macro_f1: MetricDelta::new(cross.macro_f1, within.macro_f1),
    }
}
