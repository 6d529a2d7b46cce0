//! Evaluation metrics: accuracy, Cohen's kappa, expected calibration error,
//! area under the risk-coverage curve, and fixed-edge density histograms.
//!
//! Conventions:
//! - ECE uses `bins` equal-width bins over [0, 1]; a confidence `c` falls in
//!   bin `min(floor(c · bins), bins − 1)`.
//! - AURC sorts records by confidence, descending, keeping input order on
//!   ties, and averages the error rate of the top-`k` records over
//!   `k = 1..=N`.
//! - Kappa is unweighted; it is defined as 0 when chance agreement is 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample evaluation atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub label: usize,
    pub predicted: usize,
    pub confidence: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub fused_uncertainty: f64,
}

impl EvalRecord {
    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

fn nonempty(records: &[EvalRecord], what: &'static str) -> Result<()> {
    if records.is_empty() {
        Err(Error::EmptyInput(what))
    } else {
        Ok(())
    }
}

pub fn accuracy(records: &[EvalRecord]) -> Result<f64> {
    nonempty(records, "accuracy")?;
    Ok(records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64)
}

pub fn cohen_kappa(records: &[EvalRecord]) -> Result<f64> {
    nonempty(records, "kappa")?;
    let k = records.iter().map(|r| r.label.max(r.predicted) + 1).max().unwrap_or(1);
    let mut rows = vec![0usize; k];
    let mut cols = vec![0usize; k];
    let mut agree = 0usize;
    for r in records {
        rows[r.label] += 1;
        cols[r.predicted] += 1;
        agree += usize::from(r.correct());
    }
    let n = records.len() as f64;
    let p_o = agree as f64 / n;
    let p_e = rows
        .iter()
        .zip(&cols)
        .map(|(&a, &b)| (a as f64 / n) * (b as f64 / n))
        .sum::<f64>();
    if p_e >= 1.0 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

pub const DEFAULT_ECE_BINS: usize = 15;

pub fn ece(records: &[EvalRecord], bins: usize) -> Result<f64> {
    nonempty(records, "ece")?;
    if bins == 0 {
        return Err(Error::Config("ece needs at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for r in records {
        let b = ((r.confidence * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += r.confidence;
        correct[b] += usize::from(r.correct());
    }
    let n = records.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (correct[b] as f64 / m - conf_sum[b] / m).abs()
        })
        .sum())
}

pub fn aurc(records: &[EvalRecord]) -> Result<f64> {
    nonempty(records, "aurc")?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    // `sort_by` is stable, so ties keep input order.
    order.sort_by(|&a, &b| records[b].confidence.total_cmp(&records[a].confidence));
    let mut errors = 0usize;
    let mut area = 0.0;
    for (i, &idx) in order.iter().enumerate() {
        errors += usize::from(!records[idx].correct());
        area += errors as f64 / (i + 1) as f64;
    }
    Ok(area / records.len() as f64)
}

/// Histogram with fixed edges and mass normalized to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Bins `values` into `[e_i, e_{i+1})` (the last bin closed). Values outside
/// the edge range are clamped into the first or last bin.
pub fn density_summary(values: &[f64], bin_edges: &[f64]) -> Result<Histogram> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("bin edges must be strictly increasing with at least 2 entries".into()));
    }
    let bins = bin_edges.len() - 1;
    let mut mass = vec![0.0; bins];
    for &v in values {
        // partition_point gives the number of edges <= v
        let b = bin_edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
        mass[b] += 1.0;
    }
    if !values.is_empty() {
        let n = values.len() as f64;
        mass.iter_mut().for_each(|m| *m /= n);
    }
    Ok(Histogram {
        edges: bin_edges.to_vec(),
        mass,
    })
}

/// 20 equal-width confidence bins on [0, 1].
pub fn confidence_edges() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// 25 log-spaced uncertainty bins from 1e-3 to 1e2 (five per decade).
pub fn uncertainty_edges() -> Vec<f64> {
    (0..=25).map(|i| 10f64.powf(-3.0 + i as f64 / 5.0)).collect()
}

/// Metrics and density tables for one evaluation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub kappa: f64,
    pub ece: f64,
    pub aurc: f64,
    pub mean_confidence: f64,
    pub mean_aleatoric: f64,
    pub mean_epistemic: f64,
    pub mean_fused_uncertainty: f64,
    pub confidence_hist: Histogram,
    pub epistemic_hist: Histogram,
    pub fused_uncertainty_hist: Histogram,
}

impl EvalReport {
    pub fn from_records(records: &[EvalRecord], ece_bins: usize) -> Result<Self> {
        nonempty(records, "evaluation")?;
        let n = records.len() as f64;
        let mean = |f: fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let column = |f: fn(&EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            acc: accuracy(records)?,
            kappa: cohen_kappa(records)?,
            ece: ece(records, ece_bins)?,
            aurc: aurc(records)?,
            mean_confidence: mean(|r| r.confidence),
            mean_aleatoric: mean(|r| r.aleatoric),
            mean_epistemic: mean(|r| r.epistemic),
            mean_fused_uncertainty: mean(|r| r.fused_uncertainty),
            confidence_hist: density_summary(&column(|r| r.confidence), &confidence_edges())?,
            epistemic_hist: density_summary(&column(|r| r.epistemic), &uncertainty_edges())?,
            fused_uncertainty_hist: density_summary(&column(|r| r.fused_uncertainty), &uncertainty_edges())?,
        })
    }
}
