//! Stage 0: warm-up training and per-class density weighting.
//!
//! Early in training a network fits the dominant patterns of each class
//! before memorizing noisy labels. Halfway through warm-up the backbone
//! embeds every sample, a cosine-similarity matrix is formed within each
//! observed class, and each sample's density (its mean similarity to the
//! class) is mapped to a loss weight for the remaining warm-up epochs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{fit_epochs, Matrix, Network, Pool, Sgd, TrainSettings};
use crate::rng::Rng;
use crate::synthdata::{records_matrix, DatasetBundle};

/// Cosine-similarity matrix of the rows of `features` and each row's density
/// (row mean of the matrix). Zero rows are similar only to themselves.
pub fn class_density(features: &Matrix) -> (Matrix, Vec<f64>) {
    let n = features.rows();
    let norms: Vec<f64> = features
        .iter_rows()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut sim = Matrix::zeros(n, n);
    for i in 0..n {
        sim.set(i, i, 1.0);
        for j in (i + 1)..n {
            let v = if norms[i] > 0.0 && norms[j] > 0.0 {
                let dot: f64 = features.row(i).iter().zip(features.row(j)).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            sim.set(i, j, v);
            sim.set(j, i, v);
        }
    }
    let density = (0..n).map(|i| sim.row(i).iter().sum::<f64>() / n as f64).collect();
    (sim, density)
}

/// Min-max normalizes `density` and maps it affinely onto `[w_min, 1]`.
/// Constant densities map to 1.
pub fn initial_weights(density: &[f64], w_min: f64) -> Vec<f64> {
    let lo = density.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    density
        .iter()
        .map(|&d| {
            if span > 0.0 {
                w_min + (1.0 - w_min) * (d - lo) / span
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDensity {
    pub class: usize,
    /// Indices into the training set, in record order.
    pub members: Vec<usize>,
    pub similarity: Matrix,
    pub densities: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub classes: Vec<ClassDensity>,
    pub w_min: f64,
}

impl DensityReport {
    /// Builds the report from backbone embeddings of every training sample.
    pub fn from_embeddings(embeddings: &Matrix, labels: &[usize], classes: usize, w_min: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_min) {
            return Err(Error::Config(format!("w_min {w_min} must lie in [0, 1]")));
        }
        let mut out = Vec::with_capacity(classes);
        for c in 0..classes {
            let members: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &y)| y == c)
                .map(|(i, _)| i)
                .collect();
            if members.is_empty() {
                continue;
            }
            let (similarity, densities) = class_density(&embeddings.select_rows(&members));
            let weights = initial_weights(&densities, w_min);
            out.push(ClassDensity {
                class: c,
                members,
                similarity,
                densities,
                weights,
            });
        }
        Ok(Self { classes: out, w_min })
    }

    /// Weight of every training sample, indexed like the training set.
    pub fn sample_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![1.0; n];
        for cd in &self.classes {
            for (&i, &v) in cd.members.iter().zip(&cd.weights) {
                w[i] = v;
            }
        }
        w
    }

    /// `sample_id,class,density,weight`, in training-set order.
    pub fn to_csv(&self, bundle: &DatasetBundle) -> String {
        let mut rows: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(bundle.train.len());
        for cd in &self.classes {
            for ((&i, &d), &w) in cd.members.iter().zip(&cd.densities).zip(&cd.weights) {
                rows.push((i, cd.class, d, w));
            }
        }
        rows.sort_by_key(|r| r.0);
        let mut s = String::from("sample_id,class,density,weight\n");
        for (i, c, d, w) in rows {
            let _ = writeln!(s, "{},{c},{d:.16e},{w:.16e}", bundle.train[i].sample_id);
        }
        s
    }

    pub fn write_csv(&self, bundle: &DatasetBundle, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv(bundle)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupConfig {
    pub epochs: usize,
    pub w_min: f64,
    /// Apply density weights to the epochs after the midpoint.
    pub apply_weights: bool,
    pub settings: TrainSettings,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            w_min: 0.2,
            apply_weights: true,
            settings: TrainSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WarmupOutcome {
    pub net: Network,
    pub density: DensityReport,
    /// Per-sample weights in effect at the end of warm-up.
    pub weights: Vec<f64>,
    pub losses: Vec<f64>,
}

/// Plain cross-entropy warm-up over the instance-balanced stream, with the
/// density report computed after `ceil(E₀/2)` epochs.
pub fn warmup_train(
    bundle: &DatasetBundle,
    mut net: Network,
    cfg: &WarmupConfig,
    rng: &mut Rng,
) -> Result<WarmupOutcome> {
    if cfg.epochs == 0 {
        return Err(Error::Config("warm-up needs at least one epoch".into()));
    }
    let x = records_matrix(&bundle.train, bundle.dim);
    let y = bundle.train_labels();
    let mut weights = vec![1.0; y.len()];
    let mut opt = Sgd::new(cfg.settings.momentum, cfg.settings.weight_decay)?;
    let mid = cfg.epochs.div_ceil(2);
    let diverged = |e: Error| match e {
        Error::Diverged(msg) => Error::Diverged(format!("warm-up: {msg}")),
        other => other,
    };
    let pool = Pool {
        features: &x,
        labels: &y,
        weights: &weights,
    };
    let mut losses = fit_epochs(&mut net, &mut opt, &pool, &cfg.settings, 0, mid, cfg.epochs, rng).map_err(diverged)?;
    let density = DensityReport::from_embeddings(&net.embed(&x)?, &y, bundle.classes, cfg.w_min)?;
    if cfg.apply_weights {
        weights = density.sample_weights(y.len());
    }
    let pool = Pool {
        features: &x,
        labels: &y,
        weights: &weights,
    };
    losses.extend(
        fit_epochs(
            &mut net,
            &mut opt,
            &pool,
            &cfg.settings,
            mid,
            cfg.epochs,
            cfg.epochs,
            rng,
        )
        .map_err(diverged)?,
    );
    Ok(WarmupOutcome {
        net,
        density,
        weights,
        losses,
    })
}
