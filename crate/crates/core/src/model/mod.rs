//! Two-encoder evidential network, its exact gradients and training loop.
//!
//! Each modality has its own tanh MLP whose final affine layer emits four raw
//! values per class. Raw outputs become NIG parameters through softplus
//! activations with small floors, so every forward pass satisfies
//! `delta > 0`, `alpha > 1` and `beta > 0`.

pub mod checkpoint;
mod grad;
pub mod gradcheck;
mod mlp;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, Sample};
use crate::error::{Error, Result};
use crate::evidential::{NigParams, StudentT, UncertaintyReport};
use crate::fusion::{fuse_per_class, FusedPrediction};
use crate::metrics::EvalRecord;
use crate::softmax::{argmax, softmax};

pub use grad::{sample_objective, HeadGrads, TermGrads};
pub use mlp::MlpShape;

/// Floor added after softplus to δ and β, and on top of 1 for α.
pub const ACTIVATION_FLOOR: f64 = 1e-6;

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus, the logistic sigmoid.
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps `4K` raw values, laid out per class as `(γ, δ, α, β)`, to NIG heads.
pub fn activate_head(raw: &[f64]) -> Result<Vec<NigParams<f64>>> {
    if raw.is_empty() || raw.len() % 4 != 0 {
        return Err(Error::LengthMismatch {
            expected: 4 * (raw.len() / 4).max(1),
            actual: raw.len(),
        });
    }
    raw.chunks_exact(4)
        .map(|c| {
            NigParams::new(
                c[0],
                softplus(c[1]) + ACTIVATION_FLOOR,
                softplus(c[2]) + 1.0 + ACTIVATION_FLOOR,
                softplus(c[3]) + ACTIVATION_FLOOR,
            )
        })
        .collect()
}

/// Network sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub d1: usize,
    pub d2: usize,
    pub classes: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn shape(&self, which: Modality) -> MlpShape {
        let input = match which {
            Modality::First => self.d1,
            Modality::Second => self.d2,
        };
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(4 * self.classes);
        MlpShape::new(sizes)
    }

    pub fn param_count(&self) -> usize {
        self.shape(Modality::First).param_count() + self.shape(Modality::Second).param_count()
    }

    fn range(&self, which: Modality) -> std::ops::Range<usize> {
        let n1 = self.shape(Modality::First).param_count();
        match which {
            Modality::First => 0..n1,
            Modality::Second => n1..self.param_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.d1 == 0 || self.d2 == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }
}

/// All network weights as one flat vector: modality-1 encoder and head,
/// then modality-2 encoder and head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; arch.param_count()];
        for which in Modality::BOTH {
            let range = arch.range(which);
            arch.shape(which).init(&mut values[range], &mut rng);
        }
        Ok(Self { arch, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn modality(&self, which: Modality) -> &[f64] {
        &self.values[self.arch.range(which)]
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        for (got, want) in [(sample.x1.len(), self.arch.d1), (sample.x2.len(), self.arch.d2)] {
            if got != want {
                return Err(Error::LengthMismatch {
                    expected: want,
                    actual: got,
                });
            }
        }
        if sample.label >= self.arch.classes {
            return Err(Error::LabelOutOfRange {
                label: sample.label,
                classes: self.arch.classes,
            });
        }
        Ok(())
    }

    /// Layer activations of both encoders; the last entry of each is the raw head output.
    pub(crate) fn activations(&self, sample: &Sample) -> Result<[Vec<Vec<f64>>; 2]> {
        self.check_sample(sample)?;
        Ok(Modality::BOTH.map(|m| self.arch.shape(m).forward(self.modality(m), sample.features(m))))
    }
}

/// Everything a forward pass produces for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub heads_m1: Vec<NigParams<f64>>,
    pub heads_m2: Vec<NigParams<f64>>,
    pub fused: Vec<StudentT<f64>>,
    pub prediction: FusedPrediction<f64>,
    /// Per-modality uncertainties at the fused predicted class.
    pub uncertainties: [UncertaintyReport<f64>; 2],
}

impl ForwardOutput {
    pub fn heads(&self, which: Modality) -> &[NigParams<f64>] {
        match which {
            Modality::First => &self.heads_m1,
            Modality::Second => &self.heads_m2,
        }
    }

    /// Unimodal prediction (argmax γ) and its max-softmax confidence.
    pub fn modality_prediction(&self, which: Modality) -> (usize, f64) {
        let gammas: Vec<f64> = self.heads(which).iter().map(NigParams::gamma).collect();
        let k = argmax(&gammas);
        (k, softmax(&gammas)[k])
    }

    /// Evaluation record of the fused prediction. Aleatoric and epistemic
    /// uncertainty are averaged over the two modalities at the predicted class.
    pub fn record(&self, label: usize) -> EvalRecord {
        let [u1, u2] = self.uncertainties;
        EvalRecord {
            label,
            predicted: self.prediction.predicted_class,
            confidence: self.prediction.confidence,
            aleatoric: 0.5 * (u1.aleatoric + u2.aleatoric),
            epistemic: 0.5 * (u1.epistemic + u2.epistemic),
            fused_uncertainty: self.prediction.uncertainty,
        }
    }

    /// Evaluation record of one modality's own prediction.
    pub fn modality_record(&self, which: Modality, label: usize) -> EvalRecord {
        let (predicted, confidence) = self.modality_prediction(which);
        let head = &self.heads(which)[predicted];
        EvalRecord {
            label,
            predicted,
            confidence,
            aleatoric: head.aleatoric(),
            epistemic: head.epistemic(),
            fused_uncertainty: head.to_student_t().map(|st| st.variance()).unwrap_or(f64::NAN),
        }
    }
}

fn assemble(raw1: &[f64], raw2: &[f64]) -> Result<ForwardOutput> {
    let heads_m1 = activate_head(raw1)?;
    let heads_m2 = activate_head(raw2)?;
    let (fused, prediction) = fuse_per_class(&heads_m1, &heads_m2)?;
    let k = prediction.predicted_class;
    let report = |p: &NigParams<f64>| UncertaintyReport {
        aleatoric: p.aleatoric(),
        epistemic: p.epistemic(),
        fused_uncertainty: prediction.uncertainty,
    };
    let uncertainties = [report(&heads_m1[k]), report(&heads_m2[k])];
    Ok(ForwardOutput {
        heads_m1,
        heads_m2,
        fused,
        prediction,
        uncertainties,
    })
}

/// Runs both encoders, activates the heads and fuses per class.
pub fn forward(params: &ModelParams, sample: &Sample) -> Result<ForwardOutput> {
    let [a1, a2] = params.activations(sample)?;
    assemble(a1.last().unwrap(), a2.last().unwrap())
}

/// Forward passes over many samples, in input order.
pub fn forward_all(params: &ModelParams, samples: &[Sample]) -> Result<Vec<ForwardOutput>> {
    samples.par_iter().map(|s| forward(params, s)).collect()
}

/// Fused evaluation records, in input order.
pub fn fused_records(params: &ModelParams, samples: &[Sample]) -> Result<Vec<EvalRecord>> {
    let outs = forward_all(params, samples)?;
    Ok(outs.iter().zip(samples).map(|(o, s)| o.record(s.label)).collect())
}
