//! Synthetic noisy long-tailed datasets.
//!
//! A sample of class `c` is `s·u_c + κ·v_k + σ·ε`: a class attribute `u_c`, a
//! context attribute `v_k` drawn from the class's context-affinity row, and
//! isotropic Gaussian noise. Tail classes get peaked affinity rows, so their
//! context is strongly tied to the label. Blue noise flips labels to another
//! class; red noise replaces samples with open-set content that shares the
//! class's dominant context.

mod io;

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{self, Rng};

pub use io::{read_bundle, read_csv, write_bundle, write_csv, BundleFiles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Blue,
    Red,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Blue => "blue",
            NoiseKind::Red => "red",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(NoiseKind::None),
            "blue" => Some(NoiseKind::Blue),
            "red" => Some(NoiseKind::Red),
            _ => None,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample. `clean_label` is `None` for open-set (red) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub features: Vec<f64>,
    pub observed_label: usize,
    pub clean_label: Option<usize>,
    pub is_noise: bool,
    pub noise_kind: NoiseKind,
    pub context_id: usize,
}

/// Parameters of the generative geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgeParams {
    pub classes: usize,
    pub contexts: usize,
    pub dim: usize,
    pub signal_scale: f64,
    pub context_scale: f64,
    pub noise_scale: f64,
    /// Normalized entropy of the head class's context row (1 = uniform).
    pub head_context_entropy: f64,
    /// Normalized entropy of the tail class's context row.
    pub tail_context_entropy: f64,
}

impl Default for ForgeParams {
    fn default() -> Self {
        Self {
            classes: 10,
            contexts: 6,
            dim: 32,
            signal_scale: 2.5,
            context_scale: 1.5,
            noise_scale: 1.0,
            head_context_entropy: 0.9,
            tail_context_entropy: 0.2,
        }
    }
}

impl ForgeParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.contexts < 1 {
            return Err(Error::Config("need at least 1 context".into()));
        }
        if self.dim <= self.classes {
            return Err(Error::Config(format!(
                "feature dim {} must exceed class count {} to leave room for open-set directions",
                self.dim, self.classes
            )));
        }
        for (name, v) in [
            ("signal_scale", self.signal_scale),
            ("context_scale", self.context_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("head_context_entropy", self.head_context_entropy),
            ("tail_context_entropy", self.tail_context_entropy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Class/context geometry realizing the generative factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeSpec {
    pub params: ForgeParams,
    /// `C × d`, orthonormal rows.
    pub class_directions: Matrix,
    /// `K × d`, unit rows orthogonal to every class direction.
    pub context_directions: Matrix,
    /// `C × K`, row-stochastic.
    pub context_affinity: Matrix,
    /// `C × d`, one open-set direction per class, orthogonal to every class direction.
    pub open_set_directions: Matrix,
}

fn gaussian_vec(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Removes the components of `v` along the orthonormal rows of `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of modified Gram-Schmidt keep the residual orthogonal to 1e-15.
    for _ in 0..2 {
        for b in basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
    }
}

fn unit_in_complement(rng: &mut Rng, d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, d);
        project_out(&mut v, basis);
        if normalize(&mut v) > 1e-6 {
            return v;
        }
    }
}

fn normalized_entropy(row: &[f64]) -> f64 {
    if row.len() < 2 {
        return 0.0;
    }
    let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    h / (row.len() as f64).ln()
}

/// Mixture of a one-hot at `mode` and the uniform row with the requested
/// normalized entropy.
pub(crate) fn affinity_row(contexts: usize, mode: usize, entropy: f64) -> Vec<f64> {
    let row = |a: f64| -> Vec<f64> {
        (0..contexts)
            .map(|k| a / contexts as f64 + if k == mode { 1.0 - a } else { 0.0 })
            .collect()
    };
    if contexts == 1 {
        return vec![1.0];
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normalized_entropy(&row(mid)) < entropy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    row(0.5 * (lo + hi))
}

impl GenerativeSpec {
    /// Draws a fresh geometry from `rng`.
    pub fn generate(params: ForgeParams, rng: &mut Rng) -> Result<Self> {
        params.validate()?;
        let (c, k, d) = (params.classes, params.contexts, params.dim);
        let mut class_rows: Vec<Vec<f64>> = Vec::with_capacity(c);
        for _ in 0..c {
            let v = unit_in_complement(rng, d, &class_rows);
            class_rows.push(v);
        }
        let context_rows: Vec<Vec<f64>> = (0..k).map(|_| unit_in_complement(rng, d, &class_rows)).collect();
        let open_rows: Vec<Vec<f64>> = (0..c).map(|_| unit_in_complement(rng, d, &class_rows)).collect();
        let affinity_rows: Vec<Vec<f64>> = (0..c)
            .map(|cls| {
                let t = cls as f64 / (c - 1) as f64;
                let h = params.head_context_entropy + (params.tail_context_entropy - params.head_context_entropy) * t;
                affinity_row(k, cls % k, h)
            })
            .collect();
        Ok(Self {
            params,
            class_directions: Matrix::from_rows(&class_rows),
            context_directions: Matrix::from_rows(&context_rows),
            context_affinity: Matrix::from_rows(&affinity_rows),
            open_set_directions: Matrix::from_rows(&open_rows),
        })
    }

    pub fn classes(&self) -> usize {
        self.params.classes
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Most likely context of class `c`.
    pub fn modal_context(&self, c: usize) -> usize {
        crate::nn::argmax(self.context_affinity.row(c))
    }

    fn compose(&self, signal: &[f64], context: usize, rng: &mut Rng) -> Vec<f64> {
        let p = &self.params;
        let ctx = self.context_directions.row(context);
        signal
            .iter()
            .zip(ctx)
            .map(|(s, v)| {
                let eps: f64 = if p.noise_scale > 0.0 {
                    rng.sample(StandardNormal)
                } else {
                    0.0
                };
                p.signal_scale * s + p.context_scale * v + p.noise_scale * eps
            })
            .collect()
    }
}

/// Per-class sizes `round(n_max · η^(−c/(C−1)))` for `c = 0..C`.
pub fn longtail_counts(classes: usize, n_max: usize, imbalance: f64) -> Result<Vec<usize>> {
    if !(imbalance >= 1.0) || !imbalance.is_finite() {
        return Err(Error::Domain(format!("imbalance ratio {imbalance} must be >= 1")));
    }
    if classes == 0 {
        return Err(Error::Config("class count must be positive".into()));
    }
    if classes == 1 {
        if imbalance > 1.0 {
            return Err(Error::Config("imbalance > 1 needs at least 2 classes".into()));
        }
        return Ok(vec![n_max]);
    }
    let counts: Vec<usize> = (0..classes)
        .map(|c| {
            let e = -(c as f64) / (classes - 1) as f64;
            (n_max as f64 * imbalance.powf(e)).round() as usize
        })
        .collect();
    if counts[classes - 1] < 1 {
        return Err(Error::Config(format!(
            "smallest class would be empty: n_max {n_max} / imbalance {imbalance} < 1"
        )));
    }
    Ok(counts)
}

/// Clean samples, `counts[c]` per class, ids starting at `first_id`.
pub fn sample_clean(
    spec: &GenerativeSpec,
    counts: &[usize],
    first_id: usize,
    rng: &mut Rng,
) -> Result<Vec<SampleRecord>> {
    if counts.len() != spec.classes() {
        return Err(Error::Shape(format!(
            "{} counts for {} classes",
            counts.len(),
            spec.classes()
        )));
    }
    let mut out = Vec::with_capacity(counts.iter().sum());
    let mut id = first_id;
    for (c, &n) in counts.iter().enumerate() {
        let contexts = WeightedIndex::new(spec.context_affinity.row(c))
            .map_err(|e| Error::Domain(format!("affinity row {c}: {e}")))?;
        for _ in 0..n {
            let k = contexts.sample(rng);
            let features = spec.compose(spec.class_directions.row(c), k, rng);
            out.push(SampleRecord {
                sample_id: id,
                features,
                observed_label: c,
                clean_label: Some(c),
                is_noise: false,
                noise_kind: NoiseKind::None,
                context_id: k,
            });
            id += 1;
        }
    }
    Ok(out)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("noise rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Flips `floor(ρ·n_c)` labels per class to a uniformly drawn other class.
pub fn inject_blue_noise(
    mut records: Vec<SampleRecord>,
    classes: usize,
    rate: f64,
    rng: &mut Rng,
) -> Result<Vec<SampleRecord>> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(records);
    }
    if classes < 2 {
        return Err(Error::Config("blue noise needs at least 2 classes".into()));
    }
    for c in 0..classes {
        let members: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.observed_label == c && !r.is_noise)
            .map(|(i, _)| i)
            .collect();
        let n_c = records.iter().filter(|r| r.clean_label == Some(c)).count();
        let flips = (rate * n_c as f64).floor() as usize;
        let flips = flips.min(members.len());
        for pick in index::sample(rng, members.len(), flips).into_iter() {
            let rec = &mut records[members[pick]];
            let mut other = rng.random_range(0..classes - 1);
            if other >= c {
                other += 1;
            }
            rec.observed_label = other;
            rec.is_noise = true;
            rec.noise_kind = NoiseKind::Blue;
        }
    }
    Ok(records)
}

/// Replaces `floor(ρ·n_c)` still-clean samples of each class with open-set
/// content carrying the class's modal context. The observed label is kept.
pub fn inject_red_noise(
    spec: &GenerativeSpec,
    mut records: Vec<SampleRecord>,
    rate: f64,
    rng: &mut Rng,
) -> Result<Vec<SampleRecord>> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(records);
    }
    if spec.dim() <= spec.classes() {
        return Err(Error::Config(
            "feature dim must exceed class count to orthogonalize open-set content".into(),
        ));
    }
    for c in 0..spec.classes() {
        let members: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.observed_label == c && !r.is_noise)
            .map(|(i, _)| i)
            .collect();
        let n_c = records.iter().filter(|r| r.clean_label == Some(c)).count();
        let count = ((rate * n_c as f64).floor() as usize).min(members.len());
        let context = spec.modal_context(c);
        for pick in index::sample(rng, members.len(), count).into_iter() {
            let features = spec.compose(spec.open_set_directions.row(c), context, rng);
            let rec = &mut records[members[pick]];
            rec.features = features;
            rec.clean_label = None;
            rec.is_noise = true;
            rec.noise_kind = NoiseKind::Red;
            rec.context_id = context;
        }
    }
    Ok(records)
}

/// Knobs of one benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleParams {
    pub n_max: usize,
    pub imbalance: f64,
    pub noise_rate: f64,
    /// Share of the noise budget realized as blue noise; the rest is red.
    pub blue_fraction: f64,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self {
            n_max: 500,
            imbalance: 20.0,
            noise_rate: 0.3,
            blue_fraction: 0.5,
            test_per_class: 100,
            seed: 0,
        }
    }
}

/// A generated (or loaded) train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub classes: usize,
    pub dim: usize,
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    /// Observed-label counts over the training set.
    pub class_counts: Vec<usize>,
    pub prior: Vec<f64>,
    /// Parameters the bundle was built from, when known.
    pub params: Option<BundleParams>,
}

pub(crate) fn observed_counts(records: &[SampleRecord], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for r in records {
        counts[r.observed_label] += 1;
    }
    counts
}

impl DatasetBundle {
    /// Assembles a bundle, recomputing counts and prior from the training set.
    pub fn from_parts(
        classes: usize,
        dim: usize,
        train: Vec<SampleRecord>,
        test: Vec<SampleRecord>,
        params: Option<BundleParams>,
    ) -> Result<Self> {
        for r in train.iter().chain(&test) {
            if r.observed_label >= classes {
                return Err(Error::Shape(format!(
                    "sample {} has label {} outside {classes} classes",
                    r.sample_id, r.observed_label
                )));
            }
            if r.features.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {} has {} features, expected {dim}",
                    r.sample_id,
                    r.features.len()
                )));
            }
        }
        let class_counts = observed_counts(&train, classes);
        let total: usize = class_counts.iter().sum();
        let prior = if total == 0 {
            vec![1.0 / classes as f64; classes]
        } else {
            class_counts.iter().map(|&n| n as f64 / total as f64).collect()
        };
        Ok(Self {
            classes,
            dim,
            train,
            test,
            class_counts,
            prior,
            params,
        })
    }

    pub fn train_features(&self) -> Matrix {
        records_matrix(&self.train, self.dim)
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|r| r.observed_label).collect()
    }

    pub fn noise_count(&self) -> usize {
        self.train.iter().filter(|r| r.is_noise).count()
    }

    /// Per-class noise counts by kind, indexed by observed label.
    pub fn noise_by_class(&self, kind: NoiseKind) -> Vec<usize> {
        let mut out = vec![0; self.classes];
        for r in self.train.iter().filter(|r| r.noise_kind == kind) {
            out[r.observed_label] += 1;
        }
        out
    }

    /// Per-class noise counts by the class the noise was injected into: the
    /// clean class for blue flips, the observed class for red replacements.
    pub fn injected_by_class(&self, kind: NoiseKind) -> Vec<usize> {
        let mut out = vec![0; self.classes];
        for r in self.train.iter().filter(|r| r.noise_kind == kind) {
            let c = match kind {
                NoiseKind::Blue => r.clean_label.unwrap_or(r.observed_label),
                _ => r.observed_label,
            };
            out[c] += 1;
        }
        out
    }
}

pub(crate) fn records_matrix(records: &[SampleRecord], dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(records.len() * dim);
    for r in records {
        data.extend_from_slice(&r.features);
    }
    Matrix::from_vec(records.len(), dim, data)
}

/// Generates geometry and data from one seed: long-tailed clean sampling,
/// blue noise at `blue_fraction·ρ`, red noise at `(1−blue_fraction)·ρ`, and a
/// balanced clean test set.
pub fn build_bundle(forge: &ForgeParams, params: &BundleParams) -> Result<(GenerativeSpec, DatasetBundle)> {
    check_rate(params.noise_rate)?;
    if !(0.0..=1.0).contains(&params.blue_fraction) {
        return Err(Error::Domain(format!(
            "blue fraction {} outside [0, 1]",
            params.blue_fraction
        )));
    }
    let seed = params.seed;
    let spec = GenerativeSpec::generate(forge.clone(), &mut rng::stream(seed, "data.geometry"))?;
    let counts = longtail_counts(forge.classes, params.n_max, params.imbalance)?;
    let train = sample_clean(&spec, &counts, 0, &mut rng::stream(seed, "data.clean"))?;
    let blue_rate = params.blue_fraction * params.noise_rate;
    let red_rate = (1.0 - params.blue_fraction) * params.noise_rate;
    let train = inject_blue_noise(train, forge.classes, blue_rate, &mut rng::stream(seed, "data.blue"))?;
    let train = inject_red_noise(&spec, train, red_rate, &mut rng::stream(seed, "data.red"))?;
    let test_counts = vec![params.test_per_class; forge.classes];
    let test = sample_clean(&spec, &test_counts, train.len(), &mut rng::stream(seed, "data.test"))?;
    let bundle = DatasetBundle::from_parts(forge.classes, forge.dim, train, test, Some(params.clone()))?;
    Ok((spec, bundle))
}
