use mostfuse::evidential::{nig_to_student_t, NigParams, StudentT};
use mostfuse::losses::{fused_st_nll, nig_nll};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, InverseGamma, StudentsT};

fn random_nig(rng: &mut ChaCha8Rng) -> NigParams<f64> {
    NigParams::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(0.05..8.0),
        rng.random_range(1.05..10.0),
        rng.random_range(0.05..5.0),
    )
    .unwrap()
}

// statrs parameterizes by the standard scale, so the variance-like Σ enters as sqrt.
fn statrs_st(st: &StudentT<f64>) -> StudentsT {
    StudentsT::new(st.u(), st.sigma().sqrt(), st.v()).unwrap()
}

#[test]
fn marginal_matches_statrs_student_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let p = random_nig(&mut rng);
        let st = nig_to_student_t(&p).unwrap();
        let oracle = statrs_st(&st);
        for _ in 0..5 {
            let y = p.gamma() + rng.random_range(-6.0..6.0);
            let ours = st.log_density(y);
            let theirs = oracle.ln_pdf(y);
            assert!((ours - theirs).abs() < 1e-9 * theirs.abs().max(1.0), "{ours} vs {theirs}");
        }
    }
}

#[test]
fn nll_equals_negative_log_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let p = random_nig(&mut rng);
        let st = nig_to_student_t(&p).unwrap();
        let y = rng.random_range(-4.0..4.0);
        assert!((nig_nll(&p, y) + st.log_density(y)).abs() < 1e-9);
        assert!((fused_st_nll(&st, y) + statrs_st(&st).ln_pdf(y)).abs() < 1e-9);
    }
}

#[test]
fn nll_hand_value_near_alpha_one() {
    // γ = 0, δ = 1, β = 1, y = 0: Ω = 4 and as α → 1 the NLL tends to
    // 0.5 ln π − ln 4 + 1.5 ln 4 − ln(√π / 2) = 2 ln 2.
    let p = NigParams::new(0.0, 1.0, 1.0 + 1e-6, 1.0).unwrap();
    assert!((nig_nll(&p, 0.0) - 2.0 * 2f64.ln()).abs() < 1e-5);
}

#[test]
fn uncertainties_agree_with_inverse_gamma_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let p = random_nig(&mut rng);
        if p.alpha() <= 1.0 {
            continue;
        }
        let ig = InverseGamma::new(p.alpha(), p.beta()).unwrap();
        let mean_sigma2 = statrs::statistics::Distribution::mean(&ig).unwrap();
        assert!((p.aleatoric() - mean_sigma2).abs() < 1e-10 * mean_sigma2.max(1.0));
        assert!((p.epistemic() * p.delta() - p.aleatoric()).abs() < 1e-12 * p.aleatoric().max(1.0));
    }
}

#[test]
fn precision_draws_reproduce_the_marginal_variance() {
    // σ² ~ IG(α, β), μ | σ² ~ N(γ, σ²/δ), y | μ, σ² ~ N(μ, σ²): the sample
    // variance of y approaches β(1+δ)/(δ(α−1)).
    let p = NigParams::new(0.5, 2.0, 4.0, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let precision = rand_distr::Gamma::new(p.alpha(), 1.0 / p.beta()).unwrap();
    let n = 200_000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let tau: f64 = rng.sample(precision);
        let s2 = 1.0 / tau;
        let mu = p.gamma() + (s2 / p.delta()).sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let y = mu + s2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
        sum += y;
        sum2 += y * y;
    }
    let mean = sum / n as f64;
    let var = sum2 / n as f64 - mean * mean;
    let st = p.to_student_t().unwrap();
    assert!((mean - 0.5).abs() < 0.01);
    assert!((var - st.variance()).abs() / st.variance() < 0.02, "{var} vs {}", st.variance());
}

#[test]
fn f32_and_f64_agree() {
    let p64 = NigParams::new(0.3, 1.7, 2.5, 0.8).unwrap();
    let p32 = NigParams::new(0.3f32, 1.7, 2.5, 0.8).unwrap();
    for y in [-1.0, 0.0, 0.3, 2.0] {
        let a = nig_nll(&p64, y);
        let b = nig_nll(&p32, y as f32) as f64;
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

proptest! {
    #[test]
    fn density_is_positive_and_peaks_at_location(
        u in -5.0..5.0f64, sigma in 0.01..10.0f64, v in 2.01..50.0f64, dy in 0.01..5.0f64
    ) {
        let st = StudentT::new(u, sigma, v).unwrap();
        let peak = st.log_density(u);
        prop_assert!(peak.is_finite());
        prop_assert!(st.log_density(u + dy) < peak);
        prop_assert!((st.log_density(u + dy) - st.log_density(u - dy)).abs() < 1e-12);
        prop_assert!(st.variance() > sigma);
    }

    #[test]
    fn invalid_parameters_are_rejected(x in -10.0..0.0f64) {
        prop_assert!(NigParams::new(0.0, x, 2.0, 1.0).is_err());
        prop_assert!(NigParams::new(0.0, 1.0, 2.0, x).is_err());
        prop_assert!(StudentT::new(0.0, x, 3.0).is_err());
        prop_assert!(StudentT::new(0.0, 1.0, 2.0 + x / 10.0).is_err());
    }
}
