//! Central finite-difference check of the analytic batch gradient.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::Result;
use crate::losses::{total_loss, LossWeights};

use super::train::batch_objective;
use super::{activate_head, ModelParams};

pub const DEFAULT_STEP: f64 = 1e-4;

/// Denominator floor of the relative error |a − n| / max(|a|, |n|, floor).
pub const REL_ERROR_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Worst agreement for one objective term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCheck {
    pub term: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub step: f64,
    /// Total objective.
    pub total: TermCheck,
    /// NIG, fused and ranking paths.
    pub terms: Vec<TermCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.max_rel_error)
            .fold(self.total.max_rel_error, f64::max)
    }

    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_error() < threshold
    }
}

/// Batch means of the NIG, fused and λ_C-weighted ranking terms, then the total.
fn term_values(params: &ModelParams, batch: &[Sample], weights: &LossWeights<f64>) -> Result<[f64; 4]> {
    let mut acc = [0.0; 4];
    for s in batch {
        let [a1, a2] = params.activations(s)?;
        let h1 = activate_head(a1.last().unwrap())?;
        let h2 = activate_head(a2.last().unwrap())?;
        let b = total_loss(&h1, &h2, s.label, weights)?;
        acc[0] += b.per_modality_nig.iter().sum::<f64>();
        acc[1] += b.fused_st;
        acc[2] += b.lambda_c * b.ranking;
        acc[3] += b.total;
    }
    let n = batch.len() as f64;
    Ok(acc.map(|v| v / n))
}

/// Compares every parameter's analytic gradient against a central difference
/// with step `step`, for the total objective and for each term separately.
pub fn gradient_check(
    params: &ModelParams,
    batch: &[Sample],
    weights: &LossWeights<f64>,
    step: f64,
) -> Result<GradCheckReport> {
    let obj = batch_objective(params, batch, weights, true)?;
    let [g_nig, g_fused, g_rank] = obj.term_grads.expect("per-term gradients requested");
    let analytic = [&g_nig, &g_fused, &g_rank, &obj.grad];
    let names = ["nig", "fused_st", "ranking", "total"];
    let mut checks: Vec<TermCheck> = names
        .iter()
        .map(|n| TermCheck {
            term: n.to_string(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        })
        .collect();
    let mut probe = params.clone();
    for i in 0..params.len() {
        let orig = probe.values[i];
        probe.values[i] = orig + step;
        let up = term_values(&probe, batch, weights)?;
        probe.values[i] = orig - step;
        let down = term_values(&probe, batch, weights)?;
        probe.values[i] = orig;
        for t in 0..4 {
            let numeric = (up[t] - down[t]) / (2.0 * step);
            let a = analytic[t][i];
            let err = relative_error(a, numeric);
            if err > checks[t].max_rel_error {
                checks[t] = TermCheck {
                    term: names[t].to_string(),
                    max_rel_error: err,
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    let total = checks.pop().unwrap();
    Ok(GradCheckReport {
        n_params: params.len(),
        step,
        total,
        terms: checks,
    })
}
