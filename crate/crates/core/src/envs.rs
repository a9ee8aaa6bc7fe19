//! Learning environments: resampled and augmented views of the training set
//! with distinct class and context distributions.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};
use crate::rng::Rng;
use crate::synthdata::SampleRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    /// Class weight ∝ n_c (the raw distribution).
    InstanceBalanced,
    /// Equal weight for every nonempty class.
    ClassBalanced,
    /// Class weight ∝ 1/n_c.
    ClassReversed,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::InstanceBalanced => "ib",
            SamplerKind::ClassBalanced => "cb",
            SamplerKind::ClassReversed => "cr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ib" | "instance" => Some(SamplerKind::InstanceBalanced),
            "cb" | "class" => Some(SamplerKind::ClassBalanced),
            "cr" | "reversed" => Some(SamplerKind::ClassReversed),
            _ => None,
        }
    }

    fn weight(self, count: usize) -> f64 {
        if count == 0 {
            return 0.0;
        }
        match self {
            SamplerKind::InstanceBalanced => count as f64,
            SamplerKind::ClassBalanced => 1.0,
            SamplerKind::ClassReversed => 1.0 / count as f64,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Off,
    Simple,
    Strong,
}

impl AugmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentKind::Off => "off",
            AugmentKind::Simple => "simple",
            AugmentKind::Strong => "strong",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "off" => Some(AugmentKind::Off),
            "simple" => Some(AugmentKind::Simple),
            "strong" => Some(AugmentKind::Strong),
            _ => None,
        }
    }
}

/// Feature-space augmentation tier.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentTier {
    kind: AugmentKind,
    jitter_sigma: f64,
    dropout_prob: f64,
    scale_range: (f64, f64),
}

impl AugmentTier {
    pub fn off() -> Self {
        Self {
            kind: AugmentKind::Off,
            jitter_sigma: 0.0,
            dropout_prob: 0.0,
            scale_range: (1.0, 1.0),
        }
    }

    /// Additive Gaussian jitter.
    pub fn simple(jitter_sigma: f64) -> Result<Self> {
        check_sigma(jitter_sigma)?;
        Ok(Self {
            kind: AugmentKind::Simple,
            jitter_sigma,
            dropout_prob: 0.0,
            scale_range: (1.0, 1.0),
        })
    }

    /// Coordinate dropout, then a random global scale, then jitter.
    pub fn strong(jitter_sigma: f64, dropout_prob: f64, scale_range: (f64, f64)) -> Result<Self> {
        check_sigma(jitter_sigma)?;
        if !(0.0..1.0).contains(&dropout_prob) {
            return Err(Error::Config(format!(
                "dropout probability {dropout_prob} must lie in [0, 1)"
            )));
        }
        let (lo, hi) = scale_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "scale range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        Ok(Self {
            kind: AugmentKind::Strong,
            jitter_sigma,
            dropout_prob,
            scale_range,
        })
    }

    /// Default tier of `kind`, scaled to the data's noise level.
    pub fn default_for(kind: AugmentKind, noise_scale: f64) -> Self {
        match kind {
            AugmentKind::Off => Self::off(),
            AugmentKind::Simple => Self::simple(0.5 * noise_scale).expect("valid defaults"),
            AugmentKind::Strong => Self::strong(noise_scale, 0.2, (0.8, 1.2)).expect("valid defaults"),
        }
    }

    pub fn kind(&self) -> AugmentKind {
        self.kind
    }

    pub fn jitter_sigma(&self) -> f64 {
        self.jitter_sigma
    }

    pub fn dropout_prob(&self) -> f64 {
        self.dropout_prob
    }

    pub fn scale_range(&self) -> (f64, f64) {
        self.scale_range
    }

    pub fn augment(&self, x: &[f64], rng: &mut Rng) -> Vec<f64> {
        let mut out = x.to_vec();
        match self.kind {
            AugmentKind::Off => {}
            AugmentKind::Simple => self.jitter(&mut out, rng),
            AugmentKind::Strong => {
                if self.dropout_prob > 0.0 {
                    for v in out.iter_mut() {
                        if rng.random::<f64>() < self.dropout_prob {
                            *v = 0.0;
                        }
                    }
                }
                let (lo, hi) = self.scale_range;
                if hi > lo {
                    let s = Uniform::new_inclusive(lo, hi).expect("valid range").sample(rng);
                    for v in out.iter_mut() {
                        *v *= s;
                    }
                } else if lo != 1.0 {
                    for v in out.iter_mut() {
                        *v *= lo;
                    }
                }
                self.jitter(&mut out, rng);
            }
        }
        out
    }

    fn jitter(&self, x: &mut [f64], rng: &mut Rng) {
        if self.jitter_sigma == 0.0 {
            return;
        }
        for v in x.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += self.jitter_sigma * e;
        }
    }
}

fn check_sigma(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::Config(format!("jitter sigma {s} must be finite and >= 0")));
    }
    Ok(())
}

/// One environment: a class-level sampler over per-class index pools plus an
/// augmentation tier.
#[derive(Debug, Clone)]
pub struct Environment {
    sampler: SamplerKind,
    augment: AugmentTier,
    class_weights: Vec<f64>,
    pools: Vec<Vec<usize>>,
    class_dist: WeightedIndex<f64>,
}

impl Environment {
    /// `pools[c]` lists training-record indices of class `c`. Empty classes
    /// get zero weight.
    pub fn new(sampler: SamplerKind, augment: AugmentTier, pools: Vec<Vec<usize>>) -> Result<Self> {
        let raw: Vec<f64> = pools.iter().map(|p| sampler.weight(p.len())).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("environment has no samples".into()));
        }
        let class_weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let class_dist =
            WeightedIndex::new(&class_weights).map_err(|e| Error::Domain(format!("class weights: {e}")))?;
        Ok(Self {
            sampler,
            augment,
            class_weights,
            pools,
            class_dist,
        })
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn augment(&self) -> &AugmentTier {
        &self.augment
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn pools(&self) -> &[Vec<usize>] {
        &self.pools
    }

    /// Draws a class from the class weights, then an instance uniformly
    /// within it, with replacement. Returns record indices.
    pub fn draw_indices(&self, size: usize, rng: &mut Rng) -> Vec<usize> {
        (0..size)
            .map(|_| {
                let c = self.class_dist.sample(rng);
                let pool = &self.pools[c];
                pool[rng.random_range(0..pool.len())]
            })
            .collect()
    }

    /// A batch of augmented samples labelled with their observed labels.
    pub fn draw_batch(&self, records: &[SampleRecord], size: usize, rng: &mut Rng) -> Result<Batch> {
        if size == 0 {
            return Err(Error::Shape("batch size must be at least 1".into()));
        }
        let idx = self.draw_indices(size, rng);
        let dim = records[idx[0]].features.len();
        let mut data = Vec::with_capacity(size * dim);
        let mut labels = Vec::with_capacity(size);
        for &i in &idx {
            let rec = &records[i];
            data.extend(self.augment.augment(&rec.features, rng));
            labels.push(rec.observed_label);
        }
        Batch::unweighted(Matrix::from_vec(size, dim, data), labels)
    }
}

/// Which (sampler, augmentation) pairs to build.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub layout: Vec<(SamplerKind, AugmentTier)>,
}

impl EnvSpec {
    /// The first `count` (2 to 4) environments of the standard ladder:
    /// instance/off, class-balanced/simple, reversed/strong, class-balanced/strong.
    pub fn standard(count: usize, noise_scale: f64) -> Result<Self> {
        if !(2..=4).contains(&count) {
            return Err(Error::Config(format!(
                "environment count {count} must be between 2 and 4"
            )));
        }
        let ladder = [
            (SamplerKind::InstanceBalanced, AugmentKind::Off),
            (SamplerKind::ClassBalanced, AugmentKind::Simple),
            (SamplerKind::ClassReversed, AugmentKind::Strong),
            (SamplerKind::ClassBalanced, AugmentKind::Strong),
        ];
        Ok(Self {
            layout: ladder[..count]
                .iter()
                .map(|&(s, a)| (s, AugmentTier::default_for(a, noise_scale)))
                .collect(),
        })
    }
}

/// Builds the environments over `records`, skipping indices in `exclude`.
/// Classes left without samples are dropped from every pool with a warning.
pub fn build_environments(
    records: &[SampleRecord],
    classes: usize,
    spec: &EnvSpec,
    exclude: Option<&[bool]>,
) -> Result<Vec<Environment>> {
    if records.is_empty() {
        return Err(Error::Domain("cannot build environments from an empty dataset".into()));
    }
    let mut pools = vec![Vec::new(); classes];
    for (i, r) in records.iter().enumerate() {
        if exclude.is_some_and(|ex| ex[i]) {
            continue;
        }
        pools[r.observed_label].push(i);
    }
    for (c, p) in pools.iter().enumerate() {
        if p.is_empty() {
            log::warn!("class {c} has no training samples; dropped from every environment");
        }
    }
    spec.layout
        .iter()
        .map(|(s, a)| Environment::new(*s, a.clone(), pools.clone()))
        .collect()
}
