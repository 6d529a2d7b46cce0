use mostfuse::data::{derive_seed, generate, Sample, SyntheticConfig};
use mostfuse::losses::{ranking_loss, LossWeights};
use mostfuse::model::checkpoint::Checkpoint;
use mostfuse::model::gradcheck::{gradient_check, DEFAULT_STEP};
use mostfuse::model::train::{batch_objective, train, Adam, TrainConfig};
use mostfuse::model::{forward, forward_all, Architecture, ModelParams};

fn small_data() -> mostfuse::data::Dataset {
    generate(&SyntheticConfig {
        n: 300,
        d1: 6,
        d2: 5,
        ..Default::default()
    })
    .unwrap()
}

fn fresh(data: &mostfuse::data::Dataset, seed: u64) -> ModelParams {
    let arch = Architecture {
        d1: 6,
        d2: 5,
        classes: 3,
        hidden: vec![8, 8],
    };
    assert!(!data.train.is_empty());
    ModelParams::init(arch, derive_seed(seed, 0)).unwrap()
}

fn active_hinges(params: &ModelParams, batch: &[Sample]) -> usize {
    batch
        .iter()
        .filter(|s| {
            let o = forward(params, s).unwrap();
            let c = [
                o.modality_prediction(mostfuse::data::Modality::First).1,
                o.modality_prediction(mostfuse::data::Modality::Second).1,
            ];
            ranking_loss(&c, o.prediction.confidence, o.prediction.predicted_class == s.label) > 0.0
        })
        .count()
}

#[test]
fn gradients_match_finite_differences_at_init_and_after_steps() {
    let data = small_data();
    let batch: Vec<Sample> = data.train[..12].to_vec();
    let weights = LossWeights::default();
    let mut params = fresh(&data, 3);
    let r0 = gradient_check(&params, &batch, &weights, DEFAULT_STEP).unwrap();
    assert!(r0.passed(1e-4), "init: {:?}", r0.total);
    let mut adam = Adam::new(params.len(), 1e-2);
    for _ in 0..10 {
        let obj = batch_objective(&params, &batch, &weights, false).unwrap();
        adam.step(&mut params.values, &obj.grad);
    }
    let r10 = gradient_check(&params, &batch, &weights, DEFAULT_STEP).unwrap();
    assert!(r10.passed(1e-4), "after 10 steps: {:?}", r10.total);
    assert_eq!(r10.terms.len(), 3);
}

#[test]
fn ranking_gradient_checked_with_active_hinges() {
    let data = small_data();
    let mut seed = 0;
    // find an initialization where some correctly fused samples are out-ranked
    let (params, batch) = loop {
        let p = fresh(&data, seed);
        let batch: Vec<Sample> = data.train[..16].to_vec();
        if active_hinges(&p, &batch) > 0 {
            break (p, batch);
        }
        seed += 1;
        assert!(seed < 50, "no initialization with active hinges");
    };
    let weights = LossWeights {
        lambda_c: 10.0,
        ..LossWeights::default()
    };
    let r = gradient_check(&params, &batch, &weights, DEFAULT_STEP).unwrap();
    let ranking = r.terms.iter().find(|t| t.term == "ranking").unwrap();
    assert!(ranking.analytic != 0.0 || ranking.numeric != 0.0);
    assert!(r.passed(1e-4), "{:?}", r.terms);
}

#[test]
fn all_zero_batch_is_finite_and_checks() {
    // Zero biases at init make every class output identical on a zero input,
    // which puts max-softmax and the hinges exactly on their kinks. A few
    // optimizer steps on real data move the biases off that point.
    let data = small_data();
    let mut params = fresh(&data, 1);
    let weights = LossWeights::default();
    let mut adam = Adam::new(params.len(), 1e-2);
    for _ in 0..10 {
        let obj = batch_objective(&params, &data.train[..16], &weights, false).unwrap();
        adam.step(&mut params.values, &obj.grad);
    }
    let batch: Vec<Sample> = (0..4)
        .map(|i| Sample {
            x1: vec![0.0; 6],
            x2: vec![0.0; 5],
            label: i % 3,
        })
        .collect();
    let obj = batch_objective(&params, &batch, &weights, false).unwrap();
    assert!(obj.breakdown.total.is_finite());
    assert!(obj.grad.iter().all(|g| g.is_finite()));
    let r = gradient_check(&params, &batch, &weights, DEFAULT_STEP).unwrap();
    assert!(r.passed(1e-4), "{:?}", r.total);
}

#[test]
fn training_is_deterministic() {
    let data = small_data();
    let cfg = TrainConfig {
        epochs: 6,
        hidden: vec![8, 8],
        seed: 4,
        ..Default::default()
    };
    let (p1, log1) = train(&cfg, &data).unwrap();
    let (p2, log2) = train(&cfg, &data).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(log1, log2);
    let best = log1.epochs.iter().map(|e| e.val_acc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(log1.best_val_acc, best);
    let first_best = log1.epochs.iter().position(|e| e.val_acc == best).unwrap() + 1;
    assert_eq!(log1.best_epoch, first_best);
}

#[test]
fn default_model_fits_separable_data() {
    let data = generate(&SyntheticConfig {
        n: 600,
        ..Default::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        ..Default::default()
    };
    let (_, log) = train(&cfg, &data).unwrap();
    assert!(log.epochs.iter().any(|e| e.train_acc >= 0.95));
}

#[test]
fn ranking_penalty_is_zero_when_fused_dominates() {
    let data = small_data();
    let cfg = TrainConfig {
        epochs: 5,
        hidden: vec![8, 8],
        ..Default::default()
    };
    let (params, _) = train(&cfg, &data).unwrap();
    for (o, s) in forward_all(&params, &data.test).unwrap().iter().zip(&data.test) {
        let c = [
            o.modality_prediction(mostfuse::data::Modality::First).1,
            o.modality_prediction(mostfuse::data::Modality::Second).1,
        ];
        let correct = o.prediction.predicted_class == s.label;
        let pen = ranking_loss(&c, o.prediction.confidence, correct);
        if o.prediction.confidence >= c[0] && o.prediction.confidence >= c[1] {
            assert_eq!(pen, 0.0);
        }
        if !correct {
            assert_eq!(pen, 0.0);
        }
    }
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let data = small_data();
    let cfg = TrainConfig {
        epochs: 2,
        hidden: vec![8, 8],
        ..Default::default()
    };
    let (params, log) = train(&cfg, &data).unwrap();
    let ckpt = Checkpoint::new(&params, &cfg, log.best_epoch);
    let mut buf = Vec::new();
    ckpt.write(&mut buf).unwrap();
    let back = Checkpoint::read(buf.as_slice()).unwrap();
    assert_eq!(back, ckpt);
    let restored = back.model().unwrap();
    assert!(restored.values.iter().zip(&params.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    let mut again = Vec::new();
    back.write(&mut again).unwrap();
    assert_eq!(buf, again);
    let tampered = String::from_utf8(buf).unwrap().replace("mostfuse-checkpoint", "other");
    assert!(Checkpoint::read(tampered.as_bytes()).is_err());
}
