//! Mini-batch Adam training of the evidential fusion network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, Dataset, Modality, Sample};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossWeights};
use crate::metrics::accuracy;

use super::{fused_records, sample_objective, Architecture, ModelParams};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_m: f64,
    pub lambda_f: f64,
    pub lambda_c: f64,
    /// Include the fused Student's-t term in the objective.
    pub fused_term: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_m: 0.01,
            lambda_f: 0.5,
            lambda_c: 10.0,
            fused_term: true,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 16,
            hidden: vec![32, 32],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights<f64> {
        LossWeights {
            lambda_m: self.lambda_m,
            lambda_f: self.lambda_f,
            lambda_c: self.lambda_c,
            fused_term: self.fused_term,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_m", self.lambda_m),
            ("lambda_f", self.lambda_f),
            ("lambda_c", self.lambda_c),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, d1: usize, d2: usize, classes: usize) -> Architecture {
        Architecture {
            d1,
            d2,
            classes,
            hidden: self.hidden.clone(),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Batch-mean loss terms and parameter gradients.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub breakdown: LossBreakdown<f64>,
    /// Gradient of the batch-mean total loss.
    pub grad: Vec<f64>,
    /// Gradients of the NIG, fused and (λ_C-weighted) ranking terms, when requested.
    pub term_grads: Option<[Vec<f64>; 3]>,
}

fn mean_breakdown(parts: &[LossBreakdown<f64>]) -> LossBreakdown<f64> {
    let n = parts.len() as f64;
    let mean = |f: &dyn Fn(&LossBreakdown<f64>) -> f64| parts.iter().map(f).sum::<f64>() / n;
    let per_modality_nig = (0..parts[0].per_modality_nig.len())
        .map(|m| mean(&|b| b.per_modality_nig[m]))
        .collect();
    LossBreakdown {
        per_modality_nig,
        fused_st: mean(&|b| b.fused_st),
        ranking: mean(&|b| b.ranking),
        total: mean(&|b| b.total),
        lambda_m: parts[0].lambda_m,
        lambda_f: parts[0].lambda_f,
        lambda_c: parts[0].lambda_c,
    }
}

/// Mean objective over `batch` and its exact gradient.
pub fn batch_objective(
    params: &ModelParams,
    batch: &[Sample],
    weights: &LossWeights<f64>,
    per_term: bool,
) -> Result<BatchObjective> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut terms = per_term.then(|| [vec![0.0; params.len()], vec![0.0; params.len()], vec![0.0; params.len()]]);
    let mut parts = Vec::with_capacity(batch.len());
    for sample in batch {
        let acts = params.activations(sample)?;
        let raw1 = acts[0].last().unwrap();
        let raw2 = acts[1].last().unwrap();
        let (breakdown, term_grads) = sample_objective(raw1, raw2, sample.label, weights)?;
        let total = term_grads.total();
        let pull = |out: &mut [f64], g: &super::HeadGrads| {
            for (m, (which, d_raw)) in Modality::BOTH.into_iter().zip([&g.m1, &g.m2]).enumerate() {
                let range = params.arch.range(which);
                let d: Vec<f64> = d_raw.iter().map(|x| x * scale).collect();
                params
                    .arch
                    .shape(which)
                    .backward(params.modality(which), &acts[m], &d, &mut out[range]);
            }
        };
        pull(&mut grad, &total);
        if let Some(t) = terms.as_mut() {
            pull(&mut t[0], &term_grads.nig);
            pull(&mut t[1], &term_grads.fused);
            pull(&mut t[2], &term_grads.ranking);
        }
        parts.push(breakdown);
    }
    Ok(BatchObjective {
        breakdown: mean_breakdown(&parts),
        grad,
        term_grads: terms,
    })
}

/// One epoch of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Epoch means of the loss terms, averaged over training samples.
    pub per_modality_nig_1: f64,
    pub per_modality_nig_2: f64,
    pub fused_st: f64,
    pub ranking: f64,
    pub total: f64,
    pub lambda_m: f64,
    pub lambda_f: f64,
    pub lambda_c: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

pub(crate) fn check_dataset(dataset: &Dataset) -> Result<(usize, usize, usize)> {
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(Error::EmptyInput("training and validation splits"));
    }
    let (d1, d2) = dataset.dims();
    let classes = dataset.classes();
    if classes < 2 {
        return Err(Error::Config("dataset needs at least 2 classes".into()));
    }
    for s in dataset.train.iter().chain(&dataset.val).chain(&dataset.test) {
        if s.x1.len() != d1 || s.x2.len() != d2 {
            return Err(Error::LengthMismatch {
                expected: d1 + d2,
                actual: s.x1.len() + s.x2.len(),
            });
        }
    }
    Ok((d1, d2, classes))
}

/// Trains from a seeded initialization and returns the parameters of the
/// epoch with the highest validation accuracy (earliest on ties).
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(ModelParams, TrainLog)> {
    train_with(config, dataset, |_, _| {})
}

/// Like [`train`], calling `on_step(step, params)` after every optimizer step.
pub fn train_with<F>(config: &TrainConfig, dataset: &Dataset, mut on_step: F) -> Result<(ModelParams, TrainLog)>
where
    F: FnMut(usize, &ModelParams),
{
    config.validate()?;
    let (d1, d2, classes) = check_dataset(dataset)?;
    let weights = config.weights();
    let mut params = ModelParams::init(config.architecture(d1, d2, classes), derive_seed(config.seed, 0))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0; 5];
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| dataset.train[i].clone()).collect();
            let obj = batch_objective(&params, &batch, &weights, false)?;
            let b = &obj.breakdown;
            if !b.total.is_finite() || obj.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Config(format!("non-finite loss at epoch {epoch}, step {step}")));
            }
            let n = batch.len() as f64;
            for (s, v) in sums
                .iter_mut()
                .zip([b.per_modality_nig[0], b.per_modality_nig[1], b.fused_st, b.ranking, b.total])
            {
                *s += v * n;
            }
            adam.step(&mut params.values, &obj.grad);
            step += 1;
            on_step(step, &params);
        }
        let n = dataset.train.len() as f64;
        let train_acc = accuracy(&fused_records(&params, &dataset.train)?)?;
        let val_acc = accuracy(&fused_records(&params, &dataset.val)?)?;
        if val_acc > best.2 {
            best = (params.clone(), epoch, val_acc);
        }
        epochs.push(EpochLog {
            epoch,
            per_modality_nig_1: sums[0] / n,
            per_modality_nig_2: sums[1] / n,
            fused_st: sums[2] / n,
            ranking: sums[3] / n,
            total: sums[4] / n,
            lambda_m: weights.lambda_m,
            lambda_f: weights.lambda_f,
            lambda_c: weights.lambda_c,
            train_acc,
            val_acc,
        });
    }
    let (params, best_epoch, best_val_acc) = best;
    Ok((
        params,
        TrainLog {
            epochs,
            best_epoch,
            best_val_acc,
        },
    ))
}
