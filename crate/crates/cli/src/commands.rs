use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use mostfuse::data::{derive_seed, generate, read_samples, write_samples, Dataset, Sample, Standardizer};
use mostfuse::experiment::{self, model_predictors, ConditionReport, ConditionRow};
use mostfuse::model::checkpoint::Checkpoint;
use mostfuse::model::gradcheck::{gradient_check, GradCheckReport};
use mostfuse::model::train::{batch_objective, train_with, Adam, EpochLog};
use mostfuse::model::ModelParams;

use crate::config::ExperimentConfig;

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_split(dir: &Path, split: &str) -> Result<Vec<Sample>> {
    let path = dir.join(format!("{split}.csv"));
    read_samples(open(&path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_dataset(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    let dir = cfg.data_dir(out);
    let path = dir.join("standardizer.json");
    let standardizer: Standardizer =
        serde_json::from_reader(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(Dataset {
        train: read_split(&dir, "train")?,
        val: read_split(&dir, "val")?,
        test: read_split(&dir, "test")?,
        standardizer,
    })
}

fn load_model(cfg: &ExperimentConfig, out: &Path) -> Result<ModelParams> {
    let path = cfg.checkpoint_path(out);
    let ckpt = Checkpoint::read(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(ckpt.model()?)
}

fn check_dims(params: &ModelParams, samples: &[Sample]) -> Result<()> {
    let a = &params.arch;
    if let Some(s) = samples.iter().find(|s| s.x1.len() != a.d1 || s.x2.len() != a.d2 || s.label >= a.classes) {
        bail!(
            "sample (d1={}, d2={}, label={}) does not fit checkpoint (d1={}, d2={}, classes={})",
            s.x1.len(),
            s.x2.len(),
            s.label,
            a.d1,
            a.d2,
            a.classes
        );
    }
    Ok(())
}

fn write_rows(path: &Path, rows: &[ConditionRow]) -> Result<()> {
    let mut w = create(path)?;
    experiment::write_condition_csv(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

fn write_hist(path: &Path, reports: &[ConditionReport]) -> Result<()> {
    let mut w = create(path)?;
    experiment::write_histogram_csv(&mut w, reports)?;
    w.flush()?;
    Ok(())
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = generate(&cfg.data)?;
    for (name, split) in SPLITS.iter().zip([&data.train, &data.val, &data.test]) {
        let mut w = create(&out.join(format!("{name}.csv")))?;
        write_samples(&mut w, split)?;
        w.flush()?;
        println!("{name} {}", split.len());
    }
    write_json(&out.join("standardizer.json"), &data.standardizer)
}

pub const TRAIN_LOG_HEADER: &str =
    "epoch,per_modality_nig_1,per_modality_nig_2,fused_st,ranking,total,lambda_m,lambda_f,lambda_c,train_acc,val_acc";

fn write_train_log(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{TRAIN_LOG_HEADER}")?;
    for e in epochs {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.per_modality_nig_1,
            e.per_modality_nig_2,
            e.fused_st,
            e.ranking,
            e.total,
            e.lambda_m,
            e.lambda_f,
            e.lambda_c,
            e.train_acc,
            e.val_acc
        )?;
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = load_dataset(cfg, out)?;
    let (params, log) = train_with(&cfg.train, &data, |_, _| {})?;
    write_train_log(&out.join("train_log.csv"), &log.epochs)?;
    let ckpt = Checkpoint::new(&params, &cfg.train, log.best_epoch);
    let path = cfg.checkpoint_path(out);
    let mut w = create(&path)?;
    ckpt.write(&mut w)?;
    w.flush()?;
    println!("best_epoch {} val_acc {}", log.best_epoch, log.best_val_acc);
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = load_model(cfg, out)?;
    let test = read_split(&cfg.data_dir(out), "test")?;
    check_dims(&params, &test)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for p in model_predictors(&params) {
        let report = p.evaluate(&test)?;
        rows.push(ConditionRow::from_reports(&p.name(), "clean", 0.0, std::slice::from_ref(&report)));
        reports.push(ConditionReport {
            predictor: p.name(),
            condition: "clean".into(),
            report,
        });
    }
    write_rows(&out.join("eval.csv"), &rows)?;
    write_hist(&out.join("eval_hist.csv"), &reports)?;
    write_json(&out.join("eval.json"), &reports)?;
    let fused = &rows[0];
    println!("acc {} kappa {} ece {} aurc {}", fused.acc.mean, fused.kappa.mean, fused.ece.mean, fused.aurc.mean);
    Ok(())
}

pub fn noise_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = load_model(cfg, out)?;
    let test = read_split(&cfg.data_dir(out), "test")?;
    check_dims(&params, &test)?;
    let rows = experiment::noise_sweep(&model_predictors(&params), &test, &cfg.noise)?;
    write_rows(&out.join("noise_sweep.csv"), &rows)?;
    println!("rows {}", rows.len());
    Ok(())
}

pub fn missing(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = load_model(cfg, out)?;
    let test = read_split(&cfg.data_dir(out), "test")?;
    check_dims(&params, &test)?;
    let rows = experiment::missing_modality(&model_predictors(&params), &test)?;
    write_rows(&out.join("missing.csv"), &rows)?;
    println!("rows {}", rows.len());
    Ok(())
}

/// Regenerates the source dataset from `[data]`, since the near-OOD substitution
/// needs the generator's sample order and prototypes.
pub fn ood(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = load_model(cfg, out)?;
    let data = generate(&cfg.data)?;
    check_dims(&params, &data.test)?;
    let report = experiment::ood(&model_predictors(&params), &data, &cfg.data, &cfg.ood)?;
    write_rows(&out.join("ood_shifted.csv"), &report.shifted)?;
    let mut near = report.near.clone();
    near.extend(report.deltas.iter().cloned());
    write_rows(&out.join("ood_near.csv"), &near)?;
    write_hist(&out.join("ood_hist.csv"), &report.densities)?;
    write_json(&out.join("ood.json"), &report)?;
    println!("shifted rows {} near rows {}", report.shifted.len(), near.len());
    Ok(())
}

pub fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let rows = experiment::ablate(&cfg.data, &cfg.train, &cfg.ablate)?;
    let mut w = create(&out.join("ablation.csv"))?;
    experiment::write_ablation_csv(&mut w, &rows)?;
    w.flush()?;
    println!("rows {}", rows.len());
    Ok(())
}

pub const GRAD_CHECK_HEADER: &str = "term,max_rel_error,worst_index,analytic,numeric,threshold,passed";

fn write_grad_check(path: &Path, report: &GradCheckReport, threshold: f64) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{GRAD_CHECK_HEADER}")?;
    for t in report.terms.iter().chain(std::iter::once(&report.total)) {
        let ok = t.max_rel_error < threshold;
        writeln!(
            s,
            "{},{},{},{},{},{threshold},{ok}",
            t.term, t.max_rel_error, t.worst_index, t.analytic, t.numeric
        )?;
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Checks gradients of a fresh initialization on the first training samples,
/// optionally after some Adam steps on that batch.
pub fn grad_check(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let g = &cfg.grad_check;
    let data = generate(&cfg.data)?;
    let batch: Vec<Sample> = data.train.iter().take(g.samples).cloned().collect();
    let (d1, d2) = data.dims();
    let arch = cfg.train.architecture(d1, d2, cfg.data.classes);
    let mut params = ModelParams::init(arch, derive_seed(cfg.train.seed, 0))?;
    let weights = cfg.train.weights();
    let mut adam = Adam::new(params.len(), cfg.train.learning_rate);
    for _ in 0..g.warmup_steps {
        let obj = batch_objective(&params, &batch, &weights, false)?;
        adam.step(&mut params.values, &obj.grad);
    }
    let report = gradient_check(&params, &batch, &weights, g.step)?;
    write_grad_check(&out.join("grad_check.csv"), &report, g.threshold)?;
    for t in report.terms.iter().chain(std::iter::once(&report.total)) {
        println!(
            "{} max_rel_error {} worst_index {} analytic {} numeric {}",
            t.term, t.max_rel_error, t.worst_index, t.analytic, t.numeric
        );
    }
    if !report.passed(g.threshold) {
        bail!(
            "gradient check failed: max relative error {} at parameter {} exceeds {}",
            report.max_rel_error(),
            report.total.worst_index,
            g.threshold
        );
    }
    println!("passed threshold {}", g.threshold);
    Ok(())
}
