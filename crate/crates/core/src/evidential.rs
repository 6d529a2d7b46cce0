//! Normal-Inverse-Gamma evidential parameters and their Student's-t marginals.
//!
//! A per-class evidential head emits `(gamma, delta, alpha, beta)`. Integrating
//! the Gaussian likelihood against the NIG prior gives a non-standardized
//! Student's-t predictive with location `gamma`, squared scale
//! `beta (1 + delta) / (delta alpha)` and `2 alpha` degrees of freedom.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::ln_gamma;

/// Parameters of a Normal-Inverse-Gamma distribution over (μ, σ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigParams<T> {
    gamma: T,
    delta: T,
    alpha: T,
    beta: T,
}

fn invalid(name: &'static str, value: impl Real, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value: value.to_f64().unwrap_or(f64::NAN),
        reason,
    }
}

impl<T: Real> NigParams<T> {
    /// Builds validated parameters: `delta > 0`, `alpha > 1`, `beta > 0`, all finite.
    pub fn new(gamma: T, delta: T, alpha: T, beta: T) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(invalid("gamma", gamma, "must be finite"));
        }
        if !(delta.is_finite() && delta > T::zero()) {
            return Err(invalid("delta", delta, "must be finite and > 0"));
        }
        if !(alpha.is_finite() && alpha > T::one()) {
            return Err(invalid("alpha", alpha, "must be finite and > 1"));
        }
        if !(beta.is_finite() && beta > T::zero()) {
            return Err(invalid("beta", beta, "must be finite and > 0"));
        }
        Ok(Self {
            gamma,
            delta,
            alpha,
            beta,
        })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Squared scale of the Student's-t marginal: β(1 + δ) / (δα).
    pub fn marginal_scale(&self) -> T {
        self.beta * (T::one() + self.delta) / (self.delta * self.alpha)
    }

    /// Student's-t predictive obtained by integrating out (μ, σ²).
    pub fn to_student_t(&self) -> Result<StudentT<T>> {
        StudentT::new(self.gamma, self.marginal_scale(), T::two() * self.alpha)
    }

    /// Aleatoric uncertainty E[σ²] = β / (α − 1).
    pub fn aleatoric(&self) -> T {
        self.beta / (self.alpha - T::one())
    }

    /// Epistemic uncertainty Var[μ] = β / (δ (α − 1)).
    pub fn epistemic(&self) -> T {
        self.beta / (self.delta * (self.alpha - T::one()))
    }

    /// Total evidence α + δ + 1/β.
    pub fn evidence(&self) -> T {
        self.alpha + self.delta + self.beta.recip()
    }
}

/// Converts NIG parameters to their Student's-t marginal.
pub fn nig_to_student_t<T: Real>(p: &NigParams<T>) -> Result<StudentT<T>> {
    p.to_student_t()
}

/// Non-standardized Student's-t with location `u`, squared scale `sigma` and
/// `v > 2` degrees of freedom.
///
/// `sigma` plays the role of a variance-like scale: the density kernel is
/// `(1 + (y − u)² / (v · sigma))^(−(v + 1)/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT<T> {
    u: T,
    sigma: T,
    v: T,
}

impl<T: Real> StudentT<T> {
    pub fn new(u: T, sigma: T, v: T) -> Result<Self> {
        if !u.is_finite() {
            return Err(invalid("u", u, "must be finite"));
        }
        if !(sigma.is_finite() && sigma > T::zero()) {
            return Err(invalid("sigma", sigma, "must be finite and > 0"));
        }
        if !(v.is_finite() && v > T::two()) {
            return Err(invalid("v", v, "must be finite and > 2"));
        }
        Ok(Self { u, sigma, v })
    }

    pub fn u(&self) -> T {
        self.u
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn v(&self) -> T {
        self.v
    }

    /// Log density at `y`.
    pub fn log_density(&self, y: T) -> T {
        let half = T::half();
        let v = self.v;
        let z = (y - self.u).powi(2) / (v * self.sigma);
        ln_gamma(half * (v + T::one())) - ln_gamma(half * v) - half * (v * T::PI() * self.sigma).ln()
            - half * (v + T::one()) * z.ln_1p()
    }

    /// Variance σ·v/(v − 2).
    pub fn variance(&self) -> T {
        self.sigma * self.v / (self.v - T::two())
    }
}

/// Log density of `st` at `y`.
pub fn st_log_density<T: Real>(st: &StudentT<T>, y: T) -> T {
    st.log_density(y)
}

pub fn st_variance<T: Real>(st: &StudentT<T>) -> T {
    st.variance()
}

pub fn aleatoric<T: Real>(p: &NigParams<T>) -> T {
    p.aleatoric()
}

pub fn epistemic<T: Real>(p: &NigParams<T>) -> T {
    p.epistemic()
}

/// Uncertainty summary for one modality (or the fused distribution).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UncertaintyReport<T> {
    pub aleatoric: T,
    pub epistemic: T,
    pub fused_uncertainty: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nig(g: f64, d: f64, a: f64, b: f64) -> NigParams<f64> {
        NigParams::new(g, d, a, b).unwrap()
    }

    #[test]
    fn conversion_examples() {
        let st = nig(0.0, 1.0, 2.0, 1.0).to_student_t().unwrap();
        assert_eq!((st.u(), st.sigma(), st.v()), (0.0, 1.0, 4.0));
        let st = nig(2.0, 2.0, 3.0, 4.0).to_student_t().unwrap();
        assert_eq!((st.u(), st.sigma(), st.v()), (2.0, 2.0, 6.0));
    }

    #[test]
    fn invalid_nig_rejected() {
        assert!(NigParams::new(0.0, 0.0, 2.0, 1.0).is_err());
        assert!(NigParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(NigParams::new(0.0, 1.0, 2.0, -1.0).is_err());
        assert!(NigParams::new(f64::NAN, 1.0, 2.0, 1.0).is_err());
        assert!(NigParams::new(0.0, 1.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn student_t_rejects_low_dof() {
        assert!(StudentT::new(0.0, 2.0, 2.0).is_err());
        assert!(StudentT::new(0.0, 1.0, 1.5).is_err());
        assert!(StudentT::new(0.0, 0.0, 4.0).is_err());
        assert!(StudentT::new(0.0, 1.0, 2.0001).is_ok());
    }

    #[test]
    fn density_at_center() {
        // Γ(2.5) / (Γ(2) √(4π)) = (3√π/4) / (2√π) = 0.375
        let st = StudentT::new(0.0_f64, 1.0, 4.0).unwrap();
        assert!((st.log_density(0.0).exp() - 0.375).abs() < 1e-14);
    }

    #[test]
    fn uncertainty_examples() {
        assert_eq!(nig(0.0, 1.0, 2.0, 1.0).aleatoric(), 1.0);
        assert_eq!(nig(0.0, 1.0, 3.0, 4.0).aleatoric(), 2.0);
        assert_eq!(nig(0.0, 1.0, 2.0, 1.0).epistemic(), 1.0);
        assert!((nig(0.0, 10.0, 2.0, 1.0).epistemic() - 0.1).abs() < 1e-15);
        let p = nig(0.3, 1.7, 2.2, 0.9);
        let q = nig(0.3, 1.7, 2.2, 0.9 * 3.5);
        assert!((q.aleatoric() - 3.5 * p.aleatoric()).abs() < 1e-14);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(StudentT::new(0.0, 1.0, 4.0).unwrap().variance(), 2.0);
        let v = StudentT::new(0.0_f64, 7.0 / 6.0, 4.0).unwrap().variance();
        assert!((v - 7.0 / 3.0).abs() < 1e-15);
        let big = StudentT::new(0.0_f64, 1.3, 1e9).unwrap().variance();
        assert!((big - 1.3).abs() < 1e-8);
    }

    #[test]
    fn evidence_examples() {
        assert_eq!(nig(0.0, 1.0, 1.0 + 1e-12, 1.0).evidence().round(), 3.0);
        assert_eq!(nig(0.0, 3.0, 2.0, 0.5).evidence(), 7.0);
        assert!((nig(0.0, 3.0, 2.0, 1e12).evidence() - 5.0).abs() < 1e-11);
    }

    #[test]
    fn generic_over_f32() {
        let p = NigParams::new(0.0_f32, 1.0, 2.0, 1.0).unwrap();
        let st = p.to_student_t().unwrap();
        assert_eq!(st.v(), 4.0_f32);
        assert!((st.log_density(0.0).exp() - 0.375).abs() < 1e-6);
    }
}
