//! Cross-entropy-only comparison classifiers.
//!
//! The concatenation baseline feeds both modalities into one tanh MLP with a
//! softmax output; the unimodal variants see a single modality. Neither uses
//! evidential heads or any fusion rule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, Dataset, Modality, Sample};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, EvalRecord};
use crate::model::train::{Adam, TrainConfig};
use crate::model::MlpShape;
use crate::softmax::{argmax, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineInput {
    Concat,
    Only(Modality),
}

impl BaselineInput {
    pub fn name(self) -> &'static str {
        match self {
            BaselineInput::Concat => "concat",
            BaselineInput::Only(Modality::First) => "uni_m1",
            BaselineInput::Only(Modality::Second) => "uni_m2",
        }
    }

    fn features(self, s: &Sample) -> Vec<f64> {
        match self {
            BaselineInput::Concat => s.x1.iter().chain(&s.x2).copied().collect(),
            BaselineInput::Only(m) => s.features(m).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub input: BaselineInput,
    shape: MlpShape,
    pub values: Vec<f64>,
}

impl BaselineModel {
    pub fn logits(&self, sample: &Sample) -> Vec<f64> {
        let acts = self.shape.forward(&self.values, &self.input.features(sample));
        acts.last().unwrap().clone()
    }

    pub fn record(&self, sample: &Sample) -> EvalRecord {
        let p = softmax(&self.logits(sample));
        let k = argmax(&p);
        EvalRecord {
            label: sample.label,
            predicted: k,
            confidence: p[k],
            aleatoric: 0.0,
            epistemic: 0.0,
            fused_uncertainty: 0.0,
        }
    }

    pub fn records(&self, samples: &[Sample]) -> Vec<EvalRecord> {
        samples.iter().map(|s| self.record(s)).collect()
    }
}

/// Trains with mean cross-entropy and Adam, keeping the best-validation epoch.
pub fn train_baseline(config: &TrainConfig, dataset: &Dataset, input: BaselineInput) -> Result<(BaselineModel, Vec<f64>)> {
    config.validate()?;
    let (d1, d2, classes) = crate::model::train::check_dataset(dataset)?;
    let d_in = match input {
        BaselineInput::Concat => d1 + d2,
        BaselineInput::Only(Modality::First) => d1,
        BaselineInput::Only(Modality::Second) => d2,
    };
    let mut sizes = vec![d_in];
    sizes.extend(&config.hidden);
    sizes.push(classes);
    let shape = MlpShape::new(sizes);
    let mut values = vec![0.0; shape.param_count()];
    shape.init(&mut values, &mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0)));
    let mut model = BaselineModel { input, shape, values };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut adam = Adam::new(model.values.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut best = (model.values.clone(), f64::NEG_INFINITY);
    let mut val_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; model.values.len()];
            for &i in chunk {
                let s = &dataset.train[i];
                let acts = model.shape.forward(&model.values, &input.features(s));
                let p = softmax(acts.last().unwrap());
                let d: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .map(|(k, pk)| scale * (pk - if k == s.label { 1.0 } else { 0.0 }))
                    .collect();
                model.shape.backward(&model.values, &acts, &d, &mut grad);
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Config("non-finite baseline gradient".into()));
            }
            adam.step(&mut model.values, &grad);
        }
        let val_acc = accuracy(&model.records(&dataset.val))?;
        val_history.push(val_acc);
        if val_acc > best.1 {
            best = (model.values.clone(), val_acc);
        }
    }
    model.values = best.0;
    Ok((model, val_history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticConfig};

    #[test]
    fn baseline_learns_separable_data() {
        let data = generate(&SyntheticConfig {
            n: 400,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 15,
            ..Default::default()
        };
        for input in [
            BaselineInput::Concat,
            BaselineInput::Only(Modality::First),
            BaselineInput::Only(Modality::Second),
        ] {
            let (model, hist) = train_baseline(&cfg, &data, input).unwrap();
            assert_eq!(hist.len(), 15);
            let acc = accuracy(&model.records(&data.test)).unwrap();
            assert!(acc > 0.8, "{}: {acc}", input.name());
        }
    }
}
