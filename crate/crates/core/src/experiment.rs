//! Evaluation protocols: noise sweeps, missing-modality runs, OOD probes and
//! loss/λ ablations.
//!
//! Every protocol returns plain rows; the CSV writers at the bottom fix the
//! column order. Independent cells run on the rayon pool and are collected in
//! grid order, so outputs never depend on scheduling.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{train_baseline, BaselineInput, BaselineModel};
use crate::data::{
    corrupt_samples, derive_seed, generate, make_near_ood, mask_modality, Dataset, Modality, Sample, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{EvalRecord, EvalReport, Histogram, DEFAULT_ECE_BINS};
use crate::model::train::{train, TrainConfig};
use crate::model::{forward_all, ModelParams};

/// Something that turns samples into evaluation records.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// Fused prediction of the evidential model.
    Fused(&'a ModelParams),
    /// One modality branch of the evidential model on its own.
    Branch(&'a ModelParams, Modality),
    /// A cross-entropy comparison classifier.
    Baseline(&'a BaselineModel),
}

impl Predictor<'_> {
    pub fn name(&self) -> String {
        match self {
            Predictor::Fused(_) => "fused".into(),
            Predictor::Branch(_, m) => format!("branch_m{}", m.id()),
            Predictor::Baseline(b) => b.input.name().into(),
        }
    }

    pub fn records(&self, samples: &[Sample]) -> Result<Vec<EvalRecord>> {
        match *self {
            Predictor::Fused(p) => {
                let outs = forward_all(p, samples)?;
                Ok(outs.iter().zip(samples).map(|(o, s)| o.record(s.label)).collect())
            }
            Predictor::Branch(p, m) => {
                let outs = forward_all(p, samples)?;
                Ok(outs.iter().zip(samples).map(|(o, s)| o.modality_record(m, s.label)).collect())
            }
            Predictor::Baseline(b) => Ok(b.records(samples)),
        }
    }

    pub fn evaluate(&self, samples: &[Sample]) -> Result<EvalReport> {
        EvalReport::from_records(&self.records(samples)?, DEFAULT_ECE_BINS)
    }
}

/// The fused model plus its two branches, in that order.
pub fn model_predictors(params: &ModelParams) -> Vec<Predictor<'_>> {
    vec![
        Predictor::Fused(params),
        Predictor::Branch(params, Modality::First),
        Predictor::Branch(params, Modality::Second),
    ]
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Metrics of one predictor under one condition, aggregated over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub predictor: String,
    pub condition: String,
    pub sigma: f64,
    pub repeats: usize,
    pub acc: MeanStd,
    pub kappa: MeanStd,
    pub ece: MeanStd,
    pub aurc: MeanStd,
    pub confidence: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub fused_uncertainty: f64,
}

impl ConditionRow {
    pub fn from_reports(predictor: &str, condition: &str, sigma: f64, reports: &[EvalReport]) -> Self {
        let col = |f: fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        Self {
            predictor: predictor.into(),
            condition: condition.into(),
            sigma,
            repeats: reports.len(),
            acc: MeanStd::of(&col(|r| r.acc)),
            kappa: MeanStd::of(&col(|r| r.kappa)),
            ece: MeanStd::of(&col(|r| r.ece)),
            aurc: MeanStd::of(&col(|r| r.aurc)),
            confidence: MeanStd::of(&col(|r| r.mean_confidence)).mean,
            aleatoric: MeanStd::of(&col(|r| r.mean_aleatoric)).mean,
            epistemic: MeanStd::of(&col(|r| r.mean_epistemic)).mean,
            fused_uncertainty: MeanStd::of(&col(|r| r.mean_fused_uncertainty)).mean,
        }
    }
}

/// Looks up a row by predictor and condition (first match, or the one at `sigma`).
pub fn find_row<'r>(rows: &'r [ConditionRow], predictor: &str, condition: &str, sigma: Option<f64>) -> Option<&'r ConditionRow> {
    rows.iter()
        .find(|r| r.predictor == predictor && r.condition == condition && sigma.is_none_or(|s| r.sigma == s))
}

pub fn noisy_condition(which: Modality) -> String {
    format!("noisy_m{}", which.id())
}

pub fn missing_condition(which: Modality) -> String {
    format!("missing_m{}", which.id())
}

pub fn near_ood_condition(which: Modality) -> String {
    format!("near_ood_m{}", which.id())
}

/// Noise-sweep settings. Repeat `r` of every cell uses the noise stream
/// `derive_seed(seed, r)`, so all σ levels and both modalities scale the same
/// standard-normal draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigmas: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            repeats: 10,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("noise repeats must be >= 1".into()));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {s}")));
        }
        Ok(())
    }
}

/// One clean row per predictor, then for each modality and σ one row per
/// predictor averaged over the noise repeats.
pub fn noise_sweep(predictors: &[Predictor<'_>], samples: &[Sample], config: &NoiseConfig) -> Result<Vec<ConditionRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for p in predictors {
        rows.push(ConditionRow::from_reports(&p.name(), "clean", 0.0, &[p.evaluate(samples)?]));
    }
    let cells: Vec<(Modality, f64, usize)> = Modality::BOTH
        .iter()
        .flat_map(|&m| config.sigmas.iter().flat_map(move |&s| (0..config.repeats).map(move |r| (m, s, r))))
        .collect();
    let reports: Vec<Vec<EvalReport>> = cells
        .par_iter()
        .map(|&(m, sigma, r)| {
            let noisy = corrupt_samples(samples, m, sigma, derive_seed(config.seed, r as u64));
            predictors.iter().map(|p| p.evaluate(&noisy)).collect()
        })
        .collect::<Result<_>>()?;
    for (cell, chunk) in reports.chunks(config.repeats).enumerate() {
        let (m, sigma, _) = cells[cell * config.repeats];
        for (i, p) in predictors.iter().enumerate() {
            let per_repeat: Vec<EvalReport> = chunk.iter().map(|r| r[i].clone()).collect();
            rows.push(ConditionRow::from_reports(&p.name(), &noisy_condition(m), sigma, &per_repeat));
        }
    }
    Ok(rows)
}

/// Zero-fills one modality and checks the result before any forward pass.
pub fn masked_samples(samples: &[Sample], which: Modality) -> Result<Vec<Sample>> {
    let masked: Vec<Sample> = samples.iter().map(|s| mask_modality(s, which)).collect();
    if masked.iter().any(|s| s.features(which).iter().any(|&x| x != 0.0)) {
        return Err(Error::Config(format!("modality {} not zero after masking", which.id())));
    }
    Ok(masked)
}

/// Clean, missing-m1 and missing-m2 rows for every predictor.
pub fn missing_modality(predictors: &[Predictor<'_>], samples: &[Sample]) -> Result<Vec<ConditionRow>> {
    let conditions: Vec<(String, Vec<Sample>)> = std::iter::once(Ok(("clean".to_string(), samples.to_vec())))
        .chain(Modality::BOTH.iter().map(|&m| Ok((missing_condition(m), masked_samples(samples, m)?))))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (name, set) in &conditions {
        for p in predictors {
            rows.push(ConditionRow::from_reports(&p.name(), name, 0.0, &[p.evaluate(set)?]));
        }
    }
    Ok(rows)
}

/// Near-OOD settings: modality `modality` is regenerated from a generator
/// that matches the source except for its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodConfig {
    pub sigmas: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub foreign_seed: u64,
    pub modality: Modality,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            repeats: 10,
            seed: 0,
            foreign_seed: 1_000_003,
            modality: Modality::Second,
        }
    }
}

/// Evaluation of one predictor under one condition, with density tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub predictor: String,
    pub condition: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    /// Shifted OOD: the noise sweep over `sigmas` on the test split.
    pub shifted: Vec<ConditionRow>,
    /// In-distribution test rows followed by the near-OOD rows.
    pub near: Vec<ConditionRow>,
    /// Near-OOD minus in-distribution, per predictor.
    pub deltas: Vec<ConditionRow>,
    /// Density tables for the in-distribution and near-OOD conditions.
    pub densities: Vec<ConditionReport>,
}

pub fn ood(
    predictors: &[Predictor<'_>],
    dataset: &Dataset,
    source: &SyntheticConfig,
    config: &OodConfig,
) -> Result<OodReport> {
    let noise = NoiseConfig {
        sigmas: config.sigmas.clone(),
        repeats: config.repeats,
        seed: config.seed,
    };
    let shifted = noise_sweep(predictors, &dataset.test, &noise)?;
    if config.foreign_seed == source.seed {
        return Err(Error::Config("foreign_seed must differ from the source seed".into()));
    }
    let foreign = SyntheticConfig {
        seed: config.foreign_seed,
        ..source.clone()
    };
    let near_set = make_near_ood(dataset, source, &foreign, config.modality)?.test;
    let ood_name = near_ood_condition(config.modality);
    let mut near = Vec::new();
    let mut deltas = Vec::new();
    let mut densities = Vec::new();
    for (name, set) in [("id", &dataset.test), (ood_name.as_str(), &near_set)] {
        for p in predictors {
            let report = p.evaluate(set)?;
            near.push(ConditionRow::from_reports(&p.name(), name, 0.0, std::slice::from_ref(&report)));
            densities.push(ConditionReport {
                predictor: p.name(),
                condition: name.into(),
                report,
            });
        }
    }
    let k = predictors.len();
    for (id, od) in near[..k].iter().zip(&near[k..]) {
        let d = |a: MeanStd, b: MeanStd| MeanStd {
            mean: b.mean - a.mean,
            std: 0.0,
        };
        deltas.push(ConditionRow {
            predictor: id.predictor.clone(),
            condition: format!("{ood_name}_minus_id"),
            sigma: 0.0,
            repeats: 1,
            acc: d(id.acc, od.acc),
            kappa: d(id.kappa, od.kappa),
            ece: d(id.ece, od.ece),
            aurc: d(id.aurc, od.aurc),
            confidence: od.confidence - id.confidence,
            aleatoric: od.aleatoric - id.aleatoric,
            epistemic: od.epistemic - id.epistemic,
            fused_uncertainty: od.fused_uncertainty - id.fused_uncertainty,
        });
    }
    Ok(OodReport {
        shifted,
        near,
        deltas,
        densities,
    })
}

/// Ablation grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub lambda_f: Vec<f64>,
    pub lambda_c: Vec<f64>,
    /// Run the loss-term rows (concat baseline, +NIG, +St, +ranking).
    pub loss_terms: bool,
    /// Run the single-modality cross-entropy rows.
    pub unimodal: bool,
    pub seeds: Vec<u64>,
    /// σ of the single-repeat noise columns.
    pub noise_sigma: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            lambda_f: vec![0.0, 0.1, 0.2, 0.5, 0.7, 1.0],
            lambda_c: vec![0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 15.0],
            loss_terms: true,
            unimodal: true,
            seeds: vec![0, 1, 2],
            noise_sigma: 0.5,
        }
    }
}

/// One trained variant on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub study: String,
    pub variant: String,
    /// `None` for the cross-entropy baselines, which have no λ.
    pub lambda_f: Option<f64>,
    pub lambda_c: Option<f64>,
    pub seed: u64,
    pub acc: f64,
    pub kappa: f64,
    pub ece: f64,
    pub aurc: f64,
    pub noisy_acc_m1: f64,
    pub noisy_acc_m2: f64,
}

#[derive(Debug, Clone)]
enum Variant {
    Evidential(TrainConfig),
    Baseline(BaselineInput),
}

/// Grid cells in output order: study, variant name and how to train it.
fn ablation_cells(base: &TrainConfig, config: &AblationConfig) -> Vec<(&'static str, String, Variant)> {
    let mut cells = Vec::new();
    for &lf in &config.lambda_f {
        let t = TrainConfig { lambda_f: lf, ..base.clone() };
        cells.push(("lambda_f", format!("lambda_f={lf}"), Variant::Evidential(t)));
    }
    for &lc in &config.lambda_c {
        let t = TrainConfig { lambda_c: lc, ..base.clone() };
        cells.push(("lambda_c", format!("lambda_c={lc}"), Variant::Evidential(t)));
    }
    if config.loss_terms {
        cells.push(("loss_terms", "concat".into(), Variant::Baseline(BaselineInput::Concat)));
        let nig = TrainConfig {
            fused_term: false,
            lambda_c: 0.0,
            ..base.clone()
        };
        cells.push(("loss_terms", "nig".into(), Variant::Evidential(nig)));
        let st = TrainConfig {
            lambda_c: 0.0,
            ..base.clone()
        };
        cells.push(("loss_terms", "nig+st".into(), Variant::Evidential(st)));
        cells.push(("loss_terms", "nig+st+ranking".into(), Variant::Evidential(base.clone())));
    }
    if config.unimodal {
        for m in Modality::BOTH {
            let input = BaselineInput::Only(m);
            cells.push(("unimodal", input.name().into(), Variant::Baseline(input)));
        }
    }
    cells
}

/// Trains every grid cell on every seed. The seed replaces both the data seed
/// and the training seed; rows come out grouped by cell, then by seed.
pub fn ablate(data: &SyntheticConfig, base: &TrainConfig, config: &AblationConfig) -> Result<Vec<AblationRow>> {
    if config.seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let cells = ablation_cells(base, config);
    let datasets: Vec<Dataset> = config
        .seeds
        .iter()
        .map(|&seed| generate(&SyntheticConfig { seed, ..data.clone() }))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.seeds.len()).map(move |s| (c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(c, s)| {
            let (study, variant, how) = &cells[c];
            let seed = config.seeds[s];
            let dataset = &datasets[s];
            let noisy = |m: Modality| corrupt_samples(&dataset.test, m, config.noise_sigma, derive_seed(seed, 0));
            let acc_of = |p: &Predictor<'_>, m: Modality| p.evaluate(&noisy(m)).map(|r| r.acc);
            let row = |p: Predictor<'_>, lf: Option<f64>, lc: Option<f64>| -> Result<AblationRow> {
                let clean = p.evaluate(&dataset.test)?;
                Ok(AblationRow {
                    study: study.to_string(),
                    variant: variant.clone(),
                    lambda_f: lf,
                    lambda_c: lc,
                    seed,
                    acc: clean.acc,
                    kappa: clean.kappa,
                    ece: clean.ece,
                    aurc: clean.aurc,
                    noisy_acc_m1: acc_of(&p, Modality::First)?,
                    noisy_acc_m2: acc_of(&p, Modality::Second)?,
                })
            };
            match how {
                Variant::Evidential(t) => {
                    let t = TrainConfig { seed, ..t.clone() };
                    let (params, _) = train(&t, dataset)?;
                    row(Predictor::Fused(&params), Some(t.lambda_f), Some(t.lambda_c))
                }
                Variant::Baseline(input) => {
                    let t = TrainConfig { seed, ..base.clone() };
                    let (model, _) = train_baseline(&t, dataset, *input)?;
                    row(Predictor::Baseline(&model), None, None)
                }
            }
        })
        .collect()
}

pub const CONDITION_HEADER: &str =
    "predictor,condition,sigma,repeats,acc,acc_std,kappa,kappa_std,ece,ece_std,aurc,aurc_std,confidence,aleatoric,epistemic,fused_uncertainty";

pub fn write_condition_csv<W: Write>(mut w: W, rows: &[ConditionRow]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CONDITION_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.predictor,
            r.condition,
            r.sigma,
            r.repeats,
            r.acc.mean,
            r.acc.std,
            r.kappa.mean,
            r.kappa.std,
            r.ece.mean,
            r.ece.std,
            r.aurc.mean,
            r.aurc.std,
            r.confidence,
            r.aleatoric,
            r.epistemic,
            r.fused_uncertainty
        )
        .unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub const ABLATION_HEADER: &str = "study,variant,lambda_f,lambda_c,seed,acc,kappa,ece,aurc,noisy_acc_m1,noisy_acc_m2";

pub fn write_ablation_csv<W: Write>(mut w: W, rows: &[AblationRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::new();
    writeln!(out, "{ABLATION_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.study,
            r.variant,
            opt(r.lambda_f),
            opt(r.lambda_c),
            r.seed,
            r.acc,
            r.kappa,
            r.ece,
            r.aurc,
            r.noisy_acc_m1,
            r.noisy_acc_m2
        )
        .unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub const HISTOGRAM_HEADER: &str = "predictor,condition,quantity,bin_lo,bin_hi,mass";

pub fn write_histogram_csv<W: Write>(mut w: W, reports: &[ConditionReport]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{HISTOGRAM_HEADER}").unwrap();
    for c in reports {
        let tables: [(&str, &Histogram); 3] = [
            ("confidence", &c.report.confidence_hist),
            ("epistemic", &c.report.epistemic_hist),
            ("fused_uncertainty", &c.report.fused_uncertainty_hist),
        ];
        for (quantity, h) in tables {
            for (i, m) in h.mass.iter().enumerate() {
                writeln!(out, "{},{},{quantity},{},{},{m}", c.predictor, c.condition, h.edges[i], h.edges[i + 1]).unwrap();
            }
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn tiny() -> (ModelParams, Vec<Sample>) {
        let data = generate(&SyntheticConfig {
            n: 60,
            d1: 3,
            d2: 2,
            ..Default::default()
        })
        .unwrap();
        let arch = Architecture {
            d1: 3,
            d2: 2,
            classes: 3,
            hidden: vec![4],
        };
        (ModelParams::init(arch, 5).unwrap(), data.test)
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn zero_sigma_rows_equal_clean() {
        let (p, test) = tiny();
        let preds = model_predictors(&p);
        let cfg = NoiseConfig {
            sigmas: vec![0.0, 0.3],
            repeats: 3,
            seed: 1,
        };
        let rows = noise_sweep(&preds, &test, &cfg).unwrap();
        assert_eq!(rows.len(), 3 + 3 * 2 * 2);
        for name in ["fused", "branch_m1", "branch_m2"] {
            let clean = find_row(&rows, name, "clean", None).unwrap();
            for m in Modality::BOTH {
                let zero = find_row(&rows, name, &noisy_condition(m), Some(0.0)).unwrap();
                assert_eq!(zero.acc.mean, clean.acc.mean);
                assert_eq!(zero.acc.std, 0.0);
                assert_eq!(zero.epistemic, clean.epistemic);
                assert_eq!(zero.repeats, 3);
            }
        }
    }

    #[test]
    fn missing_rows_cover_three_conditions() {
        let (p, test) = tiny();
        let rows = missing_modality(&model_predictors(&p), &test).unwrap();
        let conds: Vec<&str> = rows.iter().map(|r| r.condition.as_str()).collect();
        assert_eq!(conds.iter().filter(|c| **c == "clean").count(), 3);
        assert_eq!(conds.iter().filter(|c| **c == "missing_m1").count(), 3);
        assert_eq!(conds.iter().filter(|c| **c == "missing_m2").count(), 3);
        // the surviving branch is untouched by masking the other modality
        let a = find_row(&rows, "branch_m2", "clean", None).unwrap();
        let b = find_row(&rows, "branch_m2", "missing_m1", None).unwrap();
        assert_eq!(a.acc, b.acc);
    }

    #[test]
    fn ablation_row_count_is_grid_times_seeds() {
        let data = SyntheticConfig {
            n: 40,
            d1: 2,
            d2: 2,
            ..Default::default()
        };
        let base = TrainConfig {
            epochs: 1,
            hidden: vec![3],
            ..Default::default()
        };
        let cfg = AblationConfig {
            lambda_f: vec![0.0, 0.5],
            lambda_c: vec![0.0],
            seeds: vec![0, 1],
            ..Default::default()
        };
        let rows = ablate(&data, &base, &cfg).unwrap();
        assert_eq!(rows.len(), (2 + 1 + 4 + 2) * 2);
        assert!(rows.iter().filter(|r| r.variant == "concat").all(|r| r.lambda_f.is_none()));
        let mut csv = Vec::new();
        write_ablation_csv(&mut csv, &rows).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), rows.len() + 1);
    }
}
