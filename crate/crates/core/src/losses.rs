//! Training-objective terms.
//!
//! Per modality: summed NIG negative log-likelihood against the one-hot target
//! plus an evidence-weighted cross-entropy over the class locations. For the
//! fused distribution: summed Student's-t negative log-likelihood plus a
//! cross-entropy over the fused locations. A hinge ranking term asks the fused
//! confidence to dominate each modality's confidence on correctly fused
//! samples.

use crate::error::{Error, Result};
use crate::evidential::{NigParams, StudentT};
use crate::fusion::fuse_per_class;
use crate::scalar::Real;
use crate::softmax::{argmax, log_sum_exp, softmax};
use crate::special::ln_gamma;

/// Negative log marginal likelihood of `y` under NIG parameters `p`.
pub fn nig_nll<T: Real>(p: &NigParams<T>, y: T) -> T {
    let half = T::half();
    let (gamma, delta, alpha, beta) = (p.gamma(), p.delta(), p.alpha(), p.beta());
    let omega = T::two() * beta * (T::one() + delta);
    half * (T::PI() / delta).ln() - alpha * omega.ln()
        + (alpha + half) * ((y - gamma).powi(2) * delta + omega).ln()
        + ln_gamma(alpha)
        - ln_gamma(alpha + half)
}

/// Total evidence α + δ + 1/β.
pub fn evidence<T: Real>(p: &NigParams<T>) -> T {
    p.evidence()
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// −log softmax(class_means)[label].
pub fn cross_entropy<T: Real>(class_means: &[T], label: usize) -> Result<T> {
    check_label(label, class_means.len())?;
    Ok(log_sum_exp(class_means) - class_means[label])
}

/// Max softmax probability over the class locations.
pub fn confidence<T: Real>(class_means: &[T]) -> T {
    let p = softmax(class_means);
    p[argmax(&p)]
}

fn one_hot<T: Real>(k: usize, label: usize) -> T {
    if k == label {
        T::one()
    } else {
        T::zero()
    }
}

/// Per-modality loss: Σ_k NLL(head_k, onehot_k) + λ_m · CE(γ, label) · mean_k evidence.
pub fn modality_loss<T: Real>(heads: &[NigParams<T>], label: usize, lambda_m: T) -> Result<T> {
    let gammas: Vec<T> = heads.iter().map(NigParams::gamma).collect();
    let ce = cross_entropy(&gammas, label)?;
    let nll = heads
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, p)| acc + nig_nll(p, one_hot(k, label)));
    let mean_evidence = heads.iter().fold(T::zero(), |acc, p| acc + p.evidence())
        / T::lit(heads.len() as f64);
    Ok(nll + lambda_m * ce * mean_evidence)
}

/// Negative log density of the fused Student's-t at `y`.
pub fn fused_st_nll<T: Real>(st: &StudentT<T>, y: T) -> T {
    let half = T::half();
    let (u, sigma, v) = (st.u(), st.sigma(), st.v());
    half * sigma.ln() + ln_gamma(half * v) - ln_gamma(half * (v + T::one()))
        + half * (v * T::PI()).ln()
        + half * (v + T::one()) * ((y - u).powi(2) / (v * sigma)).ln_1p()
}

/// Fused loss: Σ_k NLL(fused_k, onehot_k) + λ_F · CE(u_F, label).
pub fn fused_loss<T: Real>(per_class: &[StudentT<T>], label: usize, lambda_f: T) -> Result<T> {
    let means: Vec<T> = per_class.iter().map(StudentT::u).collect();
    let ce = cross_entropy(&means, label)?;
    let nll = per_class
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, st)| acc + fused_st_nll(st, one_hot(k, label)));
    Ok(nll + lambda_f * ce)
}

/// Σ_m max(0, conf_m − conf_F) when the fused prediction is correct, else 0.
pub fn ranking_loss<T: Real>(conf_modalities: &[T], conf_fused: T, fused_correct: bool) -> T {
    if !fused_correct {
        return T::zero();
    }
    conf_modalities
        .iter()
        .fold(T::zero(), |acc, &c| acc + (c - conf_fused).max(T::zero()))
}

/// Balance factors of the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub lambda_m: T,
    pub lambda_f: T,
    pub lambda_c: T,
    /// When false the fused Student's-t term is dropped from the objective.
    pub fused_term: bool,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            lambda_m: T::lit(0.01),
            lambda_f: T::lit(0.5),
            lambda_c: T::lit(10.0),
            fused_term: true,
        }
    }
}

/// All loss terms for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    pub per_modality_nig: Vec<T>,
    pub fused_st: T,
    pub ranking: T,
    pub total: T,
    pub lambda_m: T,
    pub lambda_f: T,
    pub lambda_c: T,
}

/// Total objective for one sample given both modalities' per-class heads.
pub fn total_loss<T: Real>(
    heads_m1: &[NigParams<T>],
    heads_m2: &[NigParams<T>],
    label: usize,
    weights: &LossWeights<T>,
) -> Result<LossBreakdown<T>> {
    let (fused, prediction) = fuse_per_class(heads_m1, heads_m2)?;
    check_label(label, fused.len())?;
    let per_modality_nig = vec![
        modality_loss(heads_m1, label, weights.lambda_m)?,
        modality_loss(heads_m2, label, weights.lambda_m)?,
    ];
    let fused_st = if weights.fused_term {
        fused_loss(&fused, label, weights.lambda_f)?
    } else {
        T::zero()
    };
    let conf = [heads_m1, heads_m2].map(|h| {
        let g: Vec<T> = h.iter().map(NigParams::gamma).collect();
        confidence(&g)
    });
    let ranking = ranking_loss(&conf, prediction.confidence, prediction.predicted_class == label);
    let total = per_modality_nig.iter().fold(T::zero(), |a, &b| a + b) + fused_st + weights.lambda_c * ranking;
    Ok(LossBreakdown {
        per_modality_nig,
        fused_st,
        ranking,
        total,
        lambda_m: weights.lambda_m,
        lambda_f: weights.lambda_f,
        lambda_c: weights.lambda_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::st_log_density;

    fn nig(g: f64, d: f64, a: f64, b: f64) -> NigParams<f64> {
        NigParams::new(g, d, a, b).unwrap()
    }

    #[test]
    fn nig_nll_alpha_one_limit() {
        let p = nig(0.0, 1.0, 1.0 + 1e-12, 1.0);
        assert!((nig_nll(&p, 0.0) - 2.0 * 2.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn nig_nll_is_minimized_at_gamma() {
        let p = nig(0.4, 1.5, 2.5, 0.8);
        let at = nig_nll(&p, 0.4);
        for dy in [-1.0, -0.1, -1e-3, 1e-3, 0.1, 1.0] {
            assert!(nig_nll(&p, 0.4 + dy) > at);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let ce = cross_entropy(&[10.0_f64, -10.0], 0).unwrap();
        assert!((ce - 2.061_153_618_190_204e-9).abs() < 1e-15);
        assert!((cross_entropy(&[0.0, 0.0], 0).unwrap() - 2.0_f64.ln()).abs() < 1e-15);
        let a: f64 = cross_entropy(&[0.3, 1.2, -0.5], 2).unwrap();
        let b = cross_entropy(&[5.3, 6.2, 4.5], 2).unwrap();
        assert!((a - b).abs() < 1e-13);
        assert!(matches!(
            cross_entropy(&[0.0, 1.0], 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(&[0.0, 0.0]), 0.5);
        assert!((confidence(&[3.0_f64.ln(), 0.0]) - 0.75).abs() < 1e-15);
        assert!((confidence(&[0.2_f64, 0.9, 0.1]) - confidence(&[-4.8, -4.1, -4.9])).abs() < 1e-14);
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(ranking_loss(&[0.6, 0.7], 0.8, true), 0.0);
        assert!((ranking_loss(&[0.9_f64, 0.5], 0.7, true) - 0.2).abs() < 1e-15);
        assert_eq!(ranking_loss(&[0.9, 0.9], 0.5, false), 0.0);
    }

    #[test]
    fn modality_loss_without_ce_is_summed_nll() {
        let heads = [nig(0.1, 1.0, 2.0, 1.0), nig(0.7, 2.0, 3.0, 0.5)];
        let expected = nig_nll(&heads[0], 0.0) + nig_nll(&heads[1], 1.0);
        assert_eq!(modality_loss(&heads, 1, 0.0).unwrap(), expected);
    }

    #[test]
    fn modality_loss_symmetric_ce() {
        let heads = [nig(0.0, 1.0, 2.0, 1.0), nig(0.0, 3.0, 2.0, 0.5)];
        let nll = nig_nll(&heads[0], 1.0) + nig_nll(&heads[1], 0.0);
        let mean_ev = (heads[0].evidence() + heads[1].evidence()) / 2.0;
        let got = modality_loss(&heads, 0, 0.25).unwrap();
        assert!((got - nll - 2.0_f64.ln() * 0.25 * mean_ev).abs() < 1e-14);
    }

    #[test]
    fn fused_st_nll_matches_density_and_is_unimodal() {
        let st = StudentT::new(0.3_f64, 0.8, 5.0).unwrap();
        assert!((fused_st_nll(&st, 1.1) + st_log_density(&st, 1.1)).abs() < 1e-12);
        let mut prev = fused_st_nll(&st, 0.3);
        for i in 1..50 {
            let cur = fused_st_nll(&st, 0.3 + i as f64 * 0.1);
            assert!(cur > prev);
            prev = cur;
        }
    }

    #[test]
    fn fused_loss_without_ce() {
        let sts = [StudentT::new(0.2, 1.0, 4.0).unwrap(), StudentT::new(0.9, 2.0, 6.0).unwrap()];
        let expected = fused_st_nll(&sts[0], 1.0) + fused_st_nll(&sts[1], 0.0);
        assert_eq!(fused_loss(&sts, 0, 0.0).unwrap(), expected);
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::<f64>::default();
        assert_eq!((w.lambda_m, w.lambda_f, w.lambda_c), (0.01, 0.5, 10.0));
        assert!(w.fused_term);
    }

    #[test]
    fn total_loss_decomposes() {
        let h1 = [nig(0.9, 1.0, 2.0, 1.0), nig(0.1, 2.0, 3.0, 0.5), nig(0.0, 1.0, 4.0, 2.0)];
        let h2 = [nig(0.6, 0.5, 1.5, 1.0), nig(0.3, 1.2, 2.0, 0.7), nig(0.2, 3.0, 2.5, 1.1)];
        let w = LossWeights::default();
        let b = total_loss(&h1, &h2, 0, &w).unwrap();
        let sum = b.per_modality_nig.iter().sum::<f64>() + b.fused_st + b.lambda_c * b.ranking;
        assert!((b.total - sum).abs() < 1e-10);
        assert!(b.ranking > 0.0);

        let w0 = LossWeights { lambda_c: 0.0, ..w };
        let b0 = total_loss(&h1, &h2, 0, &w0).unwrap();
        let (fused, _) = fuse_per_class(&h1, &h2).unwrap();
        let expected = modality_loss(&h1, 0, 0.01).unwrap()
            + modality_loss(&h2, 0, 0.01).unwrap()
            + fused_loss(&fused, 0, 0.5).unwrap();
        assert!((b0.total - expected).abs() < 1e-12);
    }
}
