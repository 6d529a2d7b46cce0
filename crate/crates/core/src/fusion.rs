//! Confidence-aware fusion of two Student's-t distributions.
//!
//! The fused distribution keeps the heavier tail (smaller degrees of freedom),
//! averages the squared scales after rescaling the lighter-tailed side onto the
//! heavier-tailed dof, and mixes the locations with weights proportional to
//! each side's degrees of freedom.

use crate::error::{Error, Result};
use crate::evidential::{NigParams, StudentT};
use crate::scalar::Real;
use crate::softmax::{argmax, softmax};

/// Per-modality fusion weights, `c1 + c2 = 1` and `c1 / c2 = v1 / v2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights<T> {
    pub c1: T,
    pub c2: T,
}

/// Weights `v1 / (v1 + v2)` and `v2 / (v1 + v2)`.
pub fn confidence_weights<T: Real>(v1: T, v2: T) -> Result<FusionWeights<T>> {
    for (name, v) in [("v1", v1), ("v2", v2)] {
        if !(v.is_finite() && v > T::two()) {
            return Err(Error::InvalidParameter {
                name,
                value: v.to_f64().unwrap_or(f64::NAN),
                reason: "degrees of freedom must be finite and > 2",
            });
        }
    }
    let total = v1 + v2;
    Ok(FusionWeights {
        c1: v1 / total,
        c2: v2 / total,
    })
}

/// Multiplier applied to the lighter-tailed scale: v_b (v_a − 2) / (v_a (v_b − 2)).
pub(crate) fn scale_ratio<T: Real>(v_a: T, v_b: T) -> T {
    v_b * (v_a - T::two()) / (v_a * (v_b - T::two()))
}

/// Fuses two Student's-t distributions into one.
///
/// On equal degrees of freedom the first argument is treated as the
/// heavier-tailed side; the scale bracket is symmetric there.
pub fn fuse_student_t<T: Real>(st1: &StudentT<T>, st2: &StudentT<T>) -> Result<StudentT<T>> {
    let w = confidence_weights(st1.v(), st2.v())?;
    let (a, b) = if st1.v() <= st2.v() { (st1, st2) } else { (st2, st1) };
    let u = w.c1 * st1.u() + w.c2 * st2.u();
    // ½(Σ_a + r Σ_b) over a common denominator, so exact-rational inputs
    // round once
    let (va, vb) = (a.v(), b.v());
    let sigma = (a.sigma() * va * (vb - T::two()) + vb * (va - T::two()) * b.sigma())
        / (T::two() * va * (vb - T::two()));
    StudentT::new(u, sigma, a.v())
}

/// Fused prediction over K classes.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction<T> {
    /// Fused location per class.
    pub class_means: Vec<T>,
    pub predicted_class: usize,
    /// Variance of the fused distribution of the predicted class.
    pub uncertainty: T,
    /// Max softmax probability over `class_means`.
    pub confidence: T,
}

impl<T: Real> FusedPrediction<T> {
    pub fn from_fused(fused: &[StudentT<T>]) -> Self {
        let class_means: Vec<T> = fused.iter().map(StudentT::u).collect();
        let predicted_class = argmax(&class_means);
        let confidence = softmax(&class_means)[predicted_class];
        Self {
            uncertainty: fused[predicted_class].variance(),
            predicted_class,
            confidence,
            class_means,
        }
    }
}

/// Applies the two-distribution fusion independently per class.
pub fn fuse_per_class<T: Real>(
    m1: &[NigParams<T>],
    m2: &[NigParams<T>],
) -> Result<(Vec<StudentT<T>>, FusedPrediction<T>)> {
    if m1.len() != m2.len() {
        return Err(Error::LengthMismatch {
            expected: m1.len(),
            actual: m2.len(),
        });
    }
    if m1.len() < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {}", m1.len())));
    }
    let fused = m1
        .iter()
        .zip(m2)
        .map(|(p1, p2)| fuse_student_t(&p1.to_student_t()?, &p2.to_student_t()?))
        .collect::<Result<Vec<_>>>()?;
    let prediction = FusedPrediction::from_fused(&fused);
    Ok((fused, prediction))
}
