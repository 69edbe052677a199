//! Binary ROC analysis and multi-class confusion matrices.
//!
//! A sample is predicted positive at threshold `t` iff `score >= t`.
//! Thresholds are swept from a `+inf` sentinel (nothing positive) down
//! through every distinct score, so the curve always starts at (0, 0) and
//! ends at (1, 1). AUC is the trapezoidal area under that curve, which
//! equals the tie-adjusted Mann-Whitney statistic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    /// Positive-class probability.
    pub score: f64,
    pub positive: bool,
}

impl ScoredSample {
    pub fn new(score: f64, positive: bool) -> Self {
        Self { score, positive }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocAnalysis {
    /// Strictest threshold first.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub youden_j: f64,
    pub best_threshold: f64,
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
}

/// Summary row with the columns of a binary-classifier performance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    pub youden_j: f64,
    pub best_threshold: f64,
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
}

impl RocAnalysis {
    pub fn summary(&self) -> RocSummary {
        RocSummary {
            auc: self.auc,
            youden_j: self.youden_j,
            best_threshold: self.best_threshold,
            acc: self.acc,
            sen: self.sen,
            spe: self.spe,
        }
    }

    /// `threshold,tpr,fpr` rows; the sentinel threshold is written as `inf`.
    pub fn points_csv(&self) -> String {
        let mut s = String::from("threshold,tpr,fpr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.tpr, p.fpr);
        }
        s
    }
}

fn class_counts(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if let Some(bad) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Data(format!("non-finite score {}", bad.score)));
    }
    let pos = samples.iter().filter(|s| s.positive).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedRate(format!(
            "need at least one positive and one negative sample (got {pos} positive, {neg} negative)"
        )));
    }
    Ok((pos, neg))
}

pub fn roc_curve(samples: &[ScoredSample]) -> Result<RocAnalysis> {
    let (pos, neg) = class_counts(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();

    let mut roc = RocAnalysis {
        points,
        auc,
        youden_j: 0.0,
        best_threshold: 0.0,
        acc: 0.0,
        sen: 0.0,
        spe: 0.0,
    };
    let (j, t) = youden_best_threshold(&roc);
    let (acc, sen, spe) = acc_sen_spe(samples, t)?;
    roc.youden_j = j;
    roc.best_threshold = t;
    roc.acc = acc;
    roc.sen = sen;
    roc.spe = spe;
    Ok(roc)
}

/// Maximum of `TPR − FPR` over the finite-threshold points, with ties going
/// to the higher (stricter) threshold.
pub fn youden_best_threshold(roc: &RocAnalysis) -> (f64, f64) {
    let mut best: Option<(f64, f64)> = None;
    for p in roc.points.iter().filter(|p| p.threshold.is_finite()) {
        let j = p.tpr - p.fpr;
        if best.is_none_or(|(bj, _)| j > bj) {
            best = Some((j, p.threshold));
        }
    }
    best.unwrap_or((0.0, f64::INFINITY))
}

/// `(ACC, SEN, SPE)` when predicting positive iff `score >= threshold`.
pub fn acc_sen_spe(samples: &[ScoredSample], threshold: f64) -> Result<(f64, f64, f64)> {
    let (pos, neg) = class_counts(samples)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for s in samples {
        let predicted = s.score >= threshold;
        match (s.positive, predicted) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    Ok((
        (tp + tn) as f64 / samples.len() as f64,
        tp as f64 / pos as f64,
        tn as f64 / neg as f64,
    ))
}

/// Counts indexed `[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.classes + predicted]
    }

    pub fn row(&self, actual: usize) -> &[u64] {
        &self.counts[actual * self.classes..(actual + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes).map(|k| self.get(k, k)).sum();
        diag as f64 / self.total().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = header(self.classes);
        for a in 0..self.classes {
            let cells: Vec<String> = self.row(a).iter().map(u64::to_string).collect();
            let _ = writeln!(s, "c{a},{}", cells.join(","));
        }
        s
    }
}

fn header(k: usize) -> String {
    let cols: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
    format!("actual\\predicted,{}\n", cols.join(","))
}

pub fn confusion_matrix(
    predictions: &[usize],
    actuals: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != actuals.len() {
        return Err(Error::Data(format!(
            "{} predictions but {} actual labels",
            predictions.len(),
            actuals.len()
        )));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&p, &a) in predictions.iter().zip(actuals) {
        if p >= classes || a >= classes {
            return Err(Error::Data(format!(
                "class index out of range (predicted {p}, actual {a}, {classes} classes)"
            )));
        }
        counts[a * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// Row-normalised confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConfusion {
    pub classes: usize,
    /// Row-major `[actual][predicted]` rates.
    pub values: Vec<f64>,
    /// Rows with no samples; they are left all-zero.
    pub empty_rows: Vec<bool>,
}

impl NormalizedConfusion {
    pub fn get(&self, actual: usize, predicted: usize) -> f64 {
        self.values[actual * self.classes + predicted]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.classes).map(|k| self.get(k, k)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = header(self.classes);
        for a in 0..self.classes {
            let cells: Vec<String> = self.values[a * self.classes..(a + 1) * self.classes]
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect();
            let _ = writeln!(s, "c{a},{}", cells.join(","));
        }
        s
    }
}

pub fn normalize_confusion(cm: &ConfusionMatrix) -> NormalizedConfusion {
    let k = cm.classes;
    let mut values = vec![0.0; k * k];
    let mut empty_rows = vec![false; k];
    for a in 0..k {
        let row_sum: u64 = cm.row(a).iter().sum();
        if row_sum == 0 {
            empty_rows[a] = true;
            continue;
        }
        for p in 0..k {
            values[a * k + p] = cm.get(a, p) as f64 / row_sum as f64;
        }
    }
    NormalizedConfusion {
        classes: k,
        values,
        empty_rows,
    }
}
