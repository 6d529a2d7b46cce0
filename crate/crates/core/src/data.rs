//! Seeded synthetic two-modality data and evaluation-time perturbations.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the generator seed:
//! stream 0 holds the class prototypes, stream 1 the label permutation, and
//! stream `2 + i` the feature noise of the `i`-th generated sample. Splitting
//! the draws this way lets a foreign generator resample one modality of an
//! existing dataset sample-by-sample.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One paired two-modality record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn features(&self, which: Modality) -> &[f64] {
        match which {
            Modality::First => &self.x1,
            Modality::Second => &self.x2,
        }
    }

    pub fn features_mut(&mut self, which: Modality) -> &mut Vec<f64> {
        match which {
            Modality::First => &mut self.x1,
            Modality::Second => &mut self.x2,
        }
    }
}

/// Modality selector; serialized as 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Modality {
    First,
    Second,
}

impl Modality {
    pub const BOTH: [Modality; 2] = [Modality::First, Modality::Second];

    pub fn id(self) -> u8 {
        match self {
            Modality::First => 1,
            Modality::Second => 2,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Modality::First => Modality::Second,
            Modality::Second => Modality::First,
        }
    }
}

impl TryFrom<u8> for Modality {
    type Error = String;

    fn try_from(id: u8) -> Result<Self, String> {
        match id {
            1 => Ok(Modality::First),
            2 => Ok(Modality::Second),
            other => Err(format!("modality id must be 1 or 2, got {other}")),
        }
    }
}

impl From<Modality> for u8 {
    fn from(m: Modality) -> u8 {
        m.id()
    }
}

/// Synthetic generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub d1: usize,
    pub d2: usize,
    /// Radius of the sphere the class prototypes are drawn on.
    pub separation: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Fraction of the prototype radius carried by modality 1.
    pub informativeness1: f64,
    /// Fraction of the prototype radius carried by modality 2.
    pub informativeness2: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            d1: 16,
            d2: 16,
            separation: 2.0,
            sigma1: 0.5,
            sigma2: 0.5,
            informativeness1: 1.0,
            informativeness2: 0.6,
            n: 2000,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.classes < 2 {
            return fail(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.d1 == 0 || self.d2 == 0 {
            return fail("feature dimensions must be >= 1".into());
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return fail(format!("separation must be finite and >= 0, got {}", self.separation));
        }
        for (name, s) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(s.is_finite() && s > 0.0) {
                return fail(format!("{name} must be finite and > 0, got {s}"));
            }
        }
        for (name, f) in [
            ("informativeness1", self.informativeness1),
            ("informativeness2", self.informativeness2),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return fail(format!("{name} must lie in [0, 1], got {f}"));
            }
        }
        if self.n < 10 {
            return fail(format!("n must be >= 10 for an 8:1:1 split, got {}", self.n));
        }
        Ok(())
    }

    fn dim(&self, which: Modality) -> usize {
        match which {
            Modality::First => self.d1,
            Modality::Second => self.d2,
        }
    }

    fn sigma(&self, which: Modality) -> f64 {
        match which {
            Modality::First => self.sigma1,
            Modality::Second => self.sigma2,
        }
    }

    fn informativeness(&self, which: Modality) -> f64 {
        match which {
            Modality::First => self.informativeness1,
            Modality::Second => self.informativeness2,
        }
    }

    /// Train/val/test sizes in 8:1:1 proportion.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let train = (self.n * 8 + 5) / 10;
        let val = (self.n + 5) / 10;
        (train, val, self.n - train - val)
    }
}

const PROTOTYPE_STREAM: u64 = 0;
const LABEL_STREAM: u64 = 1;
const SAMPLE_STREAM_BASE: u64 = 2;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 mix of a master seed and a cell index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Class prototypes for both modalities, each on a sphere whose radius is
/// `separation` scaled by the modality's informativeness.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub m1: Vec<Vec<f64>>,
    pub m2: Vec<Vec<f64>>,
}

impl Prototypes {
    pub fn draw(config: &SyntheticConfig) -> Self {
        let mut rng = stream(config.seed, PROTOTYPE_STREAM);
        let mut draw = |which: Modality| -> Vec<Vec<f64>> {
            let radius = config.separation * config.informativeness(which);
            (0..config.classes)
                .map(|_| {
                    let dir: Vec<f64> = (0..config.dim(which)).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    dir.iter().map(|x| x * radius / norm).collect()
                })
                .collect()
        };
        let m1 = draw(Modality::First);
        let m2 = draw(Modality::Second);
        Self { m1, m2 }
    }

    pub fn get(&self, which: Modality) -> &[Vec<f64>] {
        match which {
            Modality::First => &self.m1,
            Modality::Second => &self.m2,
        }
    }
}

fn label_order(config: &SyntheticConfig) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..config.n).map(|i| i % config.classes).collect();
    labels.shuffle(&mut stream(config.seed, LABEL_STREAM));
    labels
}

/// Raw (unstandardized) features of generated sample `index` for one modality.
fn raw_features(config: &SyntheticConfig, protos: &Prototypes, index: usize, label: usize, which: Modality) -> Vec<f64> {
    let mut rng = stream(config.seed, SAMPLE_STREAM_BASE + index as u64);
    // Modality 2 noise follows modality 1 noise within the sample's stream.
    if which == Modality::Second {
        for _ in 0..config.d1 {
            let _: f64 = rng.sample(StandardNormal);
        }
    }
    let sigma = config.sigma(which);
    protos.get(which)[label]
        .iter()
        .map(|&c| {
            let z: f64 = rng.sample(StandardNormal);
            c + sigma * z
        })
        .collect()
}

/// Per-feature affine map fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean1: Vec<f64>,
    pub std1: Vec<f64>,
    pub mean2: Vec<f64>,
    pub std2: Vec<f64>,
}

impl Standardizer {
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("standardizer fit"));
        }
        let moments = |which: Modality| {
            let d = samples[0].features(which).len();
            let n = samples.len() as f64;
            let mut mean = vec![0.0; d];
            for s in samples {
                for (m, x) in mean.iter_mut().zip(s.features(which)) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for s in samples {
                for ((v, m), x) in var.iter_mut().zip(&mean).zip(s.features(which)) {
                    *v += (x - m) * (x - m);
                }
            }
            let std = var
                .iter()
                .map(|v| {
                    let s = (v / n).sqrt();
                    if s > 1e-12 {
                        s
                    } else {
                        1.0
                    }
                })
                .collect::<Vec<_>>();
            (mean, std)
        };
        let (mean1, std1) = moments(Modality::First);
        let (mean2, std2) = moments(Modality::Second);
        Ok(Self { mean1, std1, mean2, std2 })
    }

    pub fn apply_modality(&self, which: Modality, x: &mut [f64]) {
        let (mean, std) = match which {
            Modality::First => (&self.mean1, &self.std1),
            Modality::Second => (&self.mean2, &self.std2),
        };
        for ((x, m), s) in x.iter_mut().zip(mean).zip(std) {
            *x = (*x - m) / s;
        }
    }

    pub fn apply(&self, sample: &mut Sample) {
        self.apply_modality(Modality::First, &mut sample.x1);
        self.apply_modality(Modality::Second, &mut sample.x2);
    }
}

/// Train/validation/test splits of standardized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub standardizer: Standardizer,
}

impl Dataset {
    pub fn classes(&self) -> usize {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|s| s.label + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.train.first().map_or((0, 0), |s| (s.x1.len(), s.x2.len()))
    }

    fn splits_mut(&mut self) -> [&mut Vec<Sample>; 3] {
        [&mut self.train, &mut self.val, &mut self.test]
    }
}

/// Generates a balanced dataset, splits it 8:1:1 and standardizes every split
/// with statistics of the training split.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let protos = Prototypes::draw(config);
    let labels = label_order(config);
    let mut samples: Vec<Sample> = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Sample {
            x1: raw_features(config, &protos, i, label, Modality::First),
            x2: raw_features(config, &protos, i, label, Modality::Second),
            label,
        })
        .collect();
    let (n_train, n_val, _) = config.split_sizes();
    let standardizer = Standardizer::fit(&samples[..n_train])?;
    samples.iter_mut().for_each(|s| standardizer.apply(s));
    let test = samples.split_off(n_train + n_val);
    let val = samples.split_off(n_train);
    Ok(Dataset {
        train: samples,
        val,
        test,
        standardizer,
    })
}

/// Returns `x + sigma · ε` with ε ~ N(0, I) drawn from `seed`.
pub fn corrupt_gaussian(x: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(x, sigma, &mut rng)
}

fn add_noise(x: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + sigma * z
        })
        .collect()
}

/// Corrupts one modality of every sample with a single seeded noise stream.
///
/// The same seed yields the same standard-normal draws at every `sigma`, so a
/// sweep over noise levels scales one fixed perturbation.
pub fn corrupt_samples(samples: &[Sample], which: Modality, sigma: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            *out.features_mut(which) = add_noise(s.features(which), sigma, &mut rng);
            out
        })
        .collect()
}

/// Zero-fills the chosen modality.
pub fn mask_modality(sample: &Sample, which: Modality) -> Sample {
    let mut out = sample.clone();
    out.features_mut(which).iter_mut().for_each(|x| *x = 0.0);
    out
}

/// Replaces modality `which` with draws from a foreign generator.
///
/// Each sample keeps its label; its `which` features are regenerated from the
/// foreign prototypes and noise stream at the same generation index, then
/// standardized with the source dataset's training statistics.
pub fn make_near_ood(
    dataset: &Dataset,
    source: &SyntheticConfig,
    foreign: &SyntheticConfig,
    which: Modality,
) -> Result<Dataset> {
    source.validate()?;
    foreign.validate()?;
    if foreign.dim(which) != source.dim(which) {
        return Err(Error::LengthMismatch {
            expected: source.dim(which),
            actual: foreign.dim(which),
        });
    }
    if foreign.classes < source.classes {
        return Err(Error::Config(format!(
            "foreign generator has {} classes, source needs {}",
            foreign.classes, source.classes
        )));
    }
    let protos = Prototypes::draw(foreign);
    let mut out = dataset.clone();
    let mut index = 0;
    for split in out.splits_mut() {
        for sample in split.iter_mut() {
            let mut x = raw_features(foreign, &protos, index, sample.label, which);
            dataset.standardizer.apply_modality(which, &mut x);
            *sample.features_mut(which) = x;
            index += 1;
        }
    }
    Ok(out)
}

/// Writes samples as text: a header `label,x1_0..,x2_0..` and one row per sample.
///
/// Floats use Rust's shortest round-trip formatting, so reading the file back
/// reproduces every value bit-for-bit.
pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    let (d1, d2) = samples.first().map_or((0, 0), |s| (s.x1.len(), s.x2.len()));
    let mut line = String::from("label");
    for i in 0..d1 {
        write!(line, ",x1_{i}").unwrap();
    }
    for i in 0..d2 {
        write!(line, ",x2_{i}").unwrap();
    }
    writeln!(w, "{line}")?;
    for s in samples {
        line.clear();
        write!(line, "{}", s.label).unwrap();
        for v in s.x1.iter().chain(&s.x2) {
            write!(line, ",{v}").unwrap();
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_samples<R: Read>(r: R) -> Result<Vec<Sample>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or(Error::EmptyInput("dataset file"))??;
    let fmt_err = |line: usize, reason: String| Error::Format {
        kind: "dataset",
        line,
        reason,
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(fmt_err(1, "header must start with `label`".into()));
    }
    let d1 = cols.iter().filter(|c| c.starts_with("x1_")).count();
    let d2 = cols.iter().filter(|c| c.starts_with("x2_")).count();
    if d1 + d2 + 1 != cols.len() {
        return Err(fmt_err(1, "unexpected column name".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields
            .next()
            .unwrap_or_default()
            .parse::<usize>()
            .map_err(|e| fmt_err(lineno, e.to_string()))?;
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| fmt_err(lineno, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d1 + d2 {
            return Err(fmt_err(lineno, format!("expected {} values, got {}", d1 + d2, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(fmt_err(lineno, "non-finite feature".into()));
        }
        out.push(Sample {
            x1: values[..d1].to_vec(),
            x2: values[d1..].to_vec(),
            label,
        });
    }
    Ok(out)
}
