//! Closed-form gradients of the per-sample objective with respect to the raw
//! head outputs of both modalities.
//!
//! Each objective term is differentiated separately so the gradient checker
//! can attribute errors to the NIG, fused Student's-t or ranking path.

use crate::error::Result;
use crate::evidential::{NigParams, StudentT};
use crate::fusion::{fuse_per_class, scale_ratio};
use crate::losses::{total_loss, LossBreakdown, LossWeights};
use crate::softmax::{argmax, log_sum_exp, softmax};
use crate::special::digamma;

use super::{activate_head, softplus_grad};

/// Gradient with respect to (γ, δ, α, β) of one class head.
type ParamGrad = [f64; 4];

/// Gradients of one objective term with respect to both raw head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

impl HeadGrads {
    fn zeros(len: usize) -> Self {
        Self {
            m1: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }
}

/// Per-term raw gradients; the ranking term already includes λ_C.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGrads {
    pub nig: HeadGrads,
    pub fused: HeadGrads,
    pub ranking: HeadGrads,
}

impl TermGrads {
    pub fn total(&self) -> HeadGrads {
        let sum = |a: &[f64], b: &[f64], c: &[f64]| -> Vec<f64> {
            a.iter().zip(b).zip(c).map(|((x, y), z)| x + y + z).collect()
        };
        HeadGrads {
            m1: sum(&self.nig.m1, &self.fused.m1, &self.ranking.m1),
            m2: sum(&self.nig.m2, &self.fused.m2, &self.ranking.m2),
        }
    }
}

fn one_hot(k: usize, label: usize) -> f64 {
    if k == label {
        1.0
    } else {
        0.0
    }
}

/// d NLL / d (γ, δ, α, β) for the NIG marginal likelihood at `y`.
fn nig_nll_grad(p: &NigParams<f64>, y: f64) -> ParamGrad {
    let (gamma, delta, alpha, beta) = (p.gamma(), p.delta(), p.alpha(), p.beta());
    let err = y - gamma;
    let omega = 2.0 * beta * (1.0 + delta);
    let d = delta * err * err + omega;
    let a_half = alpha + 0.5;
    [
        -2.0 * a_half * delta * err / d,
        -0.5 / delta - alpha / (1.0 + delta) + a_half * (err * err + 2.0 * beta) / d,
        d.ln() - omega.ln() + digamma(alpha) - digamma(a_half),
        -alpha / beta + a_half * 2.0 * (1.0 + delta) / d,
    ]
}

/// d NLL / d (u, Σ, v) for the Student's-t negative log density at `y`.
fn st_nll_grad(st: &StudentT<f64>, y: f64) -> [f64; 3] {
    let (u, sigma, v) = (st.u(), st.sigma(), st.v());
    let err = y - u;
    let z = err * err / (v * sigma);
    [
        -(v + 1.0) * err / (v * sigma + err * err),
        0.5 / sigma - 0.5 * (v + 1.0) * z / (sigma * (1.0 + z)),
        0.5 * digamma(0.5 * v) - 0.5 * digamma(0.5 * (v + 1.0)) + 0.5 / v + 0.5 * z.ln_1p()
            - 0.5 * (v + 1.0) * z / (v * (1.0 + z)),
    ]
}

/// Gradient of max-softmax confidence with respect to the logits.
fn confidence_grad(logits: &[f64]) -> Vec<f64> {
    let s = softmax(logits);
    let j = argmax(&s);
    s.iter()
        .enumerate()
        .map(|(i, &si)| s[j] * (one_hot(i, j) - si))
        .collect()
}

/// Pulls (u_F, Σ_F, v_F) gradients of every class back onto both modalities' heads.
fn fused_pullback(
    h1: &[NigParams<f64>],
    h2: &[NigParams<f64>],
    fused: &[StudentT<f64>],
    d_fused: &[[f64; 3]],
) -> Result<(Vec<ParamGrad>, Vec<ParamGrad>)> {
    let k = h1.len();
    let mut g1 = vec![[0.0; 4]; k];
    let mut g2 = vec![[0.0; 4]; k];
    for c in 0..k {
        let [du, ds, dv] = d_fused[c];
        if du == 0.0 && ds == 0.0 && dv == 0.0 {
            continue;
        }
        let (st1, st2) = (h1[c].to_student_t()?, h2[c].to_student_t()?);
        let (v1, v2) = (st1.v(), st2.v());
        let total = v1 + v2;
        let uf = fused[c].u();
        let mut d1 = [du * v1 / total, 0.0, du * (st1.u() - uf) / total];
        let mut d2 = [du * v2 / total, 0.0, du * (st2.u() - uf) / total];
        // Σ_F = ½(Σ_a + r(v_a, v_b) Σ_b), v_F = v_a with v_a the smaller dof.
        let (da, db, sa, sb) = if v1 <= v2 {
            (&mut d1, &mut d2, st1, st2)
        } else {
            (&mut d2, &mut d1, st2, st1)
        };
        let (va, vb) = (sa.v(), sb.v());
        let r = scale_ratio(va, vb);
        let dr_dva = vb / (vb - 2.0) * 2.0 / (va * va);
        let dr_dvb = -(va - 2.0) / va * 2.0 / ((vb - 2.0) * (vb - 2.0));
        da[1] += 0.5 * ds;
        db[1] += 0.5 * r * ds;
        da[2] += 0.5 * sb.sigma() * dr_dva * ds + dv;
        db[2] += 0.5 * sb.sigma() * dr_dvb * ds;
        for (p, st, d, g) in [(&h1[c], st1, d1, &mut g1[c]), (&h2[c], st2, d2, &mut g2[c])] {
            let (delta, alpha, beta) = (p.delta(), p.alpha(), p.beta());
            let sigma = st.sigma();
            g[0] += d[0];
            g[1] += d[1] * (-beta / (alpha * delta * delta));
            g[2] += d[1] * (-sigma / alpha) + 2.0 * d[2];
            g[3] += d[1] * sigma / beta;
        }
    }
    Ok((g1, g2))
}

/// Chains (γ, δ, α, β) gradients through the head activation.
fn activation_pullback(raw: &[f64], grads: &[ParamGrad]) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    for (c, g) in grads.iter().enumerate() {
        out[4 * c] = g[0];
        for j in 1..4 {
            out[4 * c + j] = g[j] * softplus_grad(raw[4 * c + j]);
        }
    }
    out
}

/// Loss breakdown and per-term raw gradients for one sample.
pub fn sample_objective(
    raw1: &[f64],
    raw2: &[f64],
    label: usize,
    weights: &LossWeights<f64>,
) -> Result<(LossBreakdown<f64>, TermGrads)> {
    let h1 = activate_head(raw1)?;
    let h2 = activate_head(raw2)?;
    let breakdown = total_loss(&h1, &h2, label, weights)?;
    let k = h1.len();
    let (fused, prediction) = fuse_per_class(&h1, &h2)?;
    let mut grads = TermGrads {
        nig: HeadGrads::zeros(raw1.len()),
        fused: HeadGrads::zeros(raw1.len()),
        ranking: HeadGrads::zeros(raw1.len()),
    };

    // Per-modality NIG NLL plus evidence-weighted cross-entropy.
    for (heads, raw, out) in [(&h1, raw1, &mut grads.nig.m1), (&h2, raw2, &mut grads.nig.m2)] {
        let gammas: Vec<f64> = heads.iter().map(NigParams::gamma).collect();
        let probs = softmax(&gammas);
        let ce = log_sum_exp(&gammas) - gammas[label];
        let mean_ev = heads.iter().map(NigParams::evidence).sum::<f64>() / k as f64;
        let lm = weights.lambda_m;
        let per_class: Vec<ParamGrad> = heads
            .iter()
            .enumerate()
            .map(|(c, p)| {
                let mut g = nig_nll_grad(p, one_hot(c, label));
                g[0] += lm * mean_ev * (probs[c] - one_hot(c, label));
                g[1] += lm * ce / k as f64;
                g[2] += lm * ce / k as f64;
                g[3] -= lm * ce / (k as f64 * p.beta() * p.beta());
                g
            })
            .collect();
        *out = activation_pullback(raw, &per_class);
    }

    // Fused Student's-t NLL plus cross-entropy over fused locations.
    if weights.fused_term {
        let means: Vec<f64> = fused.iter().map(StudentT::u).collect();
        let probs = softmax(&means);
        let d_fused: Vec<[f64; 3]> = fused
            .iter()
            .enumerate()
            .map(|(c, st)| {
                let mut g = st_nll_grad(st, one_hot(c, label));
                g[0] += weights.lambda_f * (probs[c] - one_hot(c, label));
                g
            })
            .collect();
        let (g1, g2) = fused_pullback(&h1, &h2, &fused, &d_fused)?;
        grads.fused.m1 = activation_pullback(raw1, &g1);
        grads.fused.m2 = activation_pullback(raw2, &g2);
    }

    // Ranking hinge; the correctness gate is treated as a constant.
    if weights.lambda_c != 0.0 && prediction.predicted_class == label {
        let mut active = 0usize;
        let mut d_gamma = [vec![[0.0; 4]; k], vec![[0.0; 4]; k]];
        for (m, heads) in [&h1, &h2].into_iter().enumerate() {
            let gammas: Vec<f64> = heads.iter().map(NigParams::gamma).collect();
            let conf = softmax(&gammas)[argmax(&gammas)];
            if conf > prediction.confidence {
                active += 1;
                for (c, g) in confidence_grad(&gammas).into_iter().enumerate() {
                    d_gamma[m][c][0] = weights.lambda_c * g;
                }
            }
        }
        if active > 0 {
            let d_fused: Vec<[f64; 3]> = confidence_grad(&prediction.class_means)
                .into_iter()
                .map(|g| [-weights.lambda_c * active as f64 * g, 0.0, 0.0])
                .collect();
            let (g1, g2) = fused_pullback(&h1, &h2, &fused, &d_fused)?;
            let [r1, r2] = d_gamma;
            let add = |a: Vec<ParamGrad>, b: Vec<ParamGrad>| -> Vec<ParamGrad> {
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| [x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3]])
                    .collect()
            };
            grads.ranking.m1 = activation_pullback(raw1, &add(r1, g1));
            grads.ranking.m2 = activation_pullback(raw2, &add(r2, g2));
        }
    }

    Ok((breakdown, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn loss_term(raw1: &[f64], raw2: &[f64], label: usize, w: &LossWeights<f64>, term: usize) -> f64 {
        let h1 = activate_head(raw1).unwrap();
        let h2 = activate_head(raw2).unwrap();
        let b = total_loss(&h1, &h2, label, w).unwrap();
        match term {
            0 => b.per_modality_nig.iter().sum(),
            1 => b.fused_st,
            _ => b.lambda_c * b.ranking,
        }
    }

    #[test]
    fn raw_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let w = LossWeights::default();
        let mut ranking_seen = false;
        for trial in 0..200 {
            let raw1: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let raw2: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let label = trial % 3;
            let (_, grads) = sample_objective(&raw1, &raw2, label, &w).unwrap();
            for (term, g) in [(0, &grads.nig), (1, &grads.fused), (2, &grads.ranking)] {
                for (m, analytic) in [(0, &g.m1), (1, &g.m2)] {
                    for i in 0..12 {
                        let h = 1e-6;
                        let (mut a, mut b) = (raw1.clone(), raw2.clone());
                        let target = if m == 0 { &mut a } else { &mut b };
                        target[i] += h;
                        let up = loss_term(&a, &b, label, &w, term);
                        let target = if m == 0 { &mut a } else { &mut b };
                        target[i] -= 2.0 * h;
                        let down = loss_term(&a, &b, label, &w, term);
                        let fd = (up - down) / (2.0 * h);
                        let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
                        assert!(err < 1e-5, "trial {trial} term {term} m{m} i{i}: fd {fd} vs {}", analytic[i]);
                        if term == 2 && analytic[i] != 0.0 {
                            ranking_seen = true;
                        }
                    }
                }
            }
        }
        assert!(ranking_seen);
    }

    #[test]
    fn ranking_gradient_vanishes_without_lambda_c() {
        let w = LossWeights {
            lambda_c: 0.0,
            ..LossWeights::default()
        };
        let raw1 = [2.0, 0.1, 0.2, 0.3, -1.0, 0.4, 0.5, 0.6, -1.0, 0.0, 0.0, 0.0];
        let raw2 = [1.0, 0.3, -0.2, 0.1, -0.5, 0.4, 0.1, 0.2, -0.7, 0.0, 0.3, 0.9];
        let (_, g) = sample_objective(&raw1, &raw2, 0, &w).unwrap();
        assert!(g.ranking.m1.iter().chain(&g.ranking.m2).all(|&x| x == 0.0));
    }
}
