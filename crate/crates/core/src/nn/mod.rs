//! Minimal dense network engine: forward pass, analytic backward pass, losses
//! and momentum SGD, all in `f64`.

pub mod checkpoint;
mod loss;
mod matrix;
mod network;
mod optim;

use rand::seq::SliceRandom;

pub(crate) use loss::validate_prior;
pub use loss::{balanced_softmax_loss, cross_entropy, soft_cross_entropy};
pub use matrix::{argmax, softmax, softmax_row, Matrix};
pub use network::{Activation, Dense, Gradients, LayerGrad, Network, Trace};
pub use optim::{learning_rate, Sgd};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A mini-batch of labelled, weighted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Shape("batch must hold at least one sample".into()));
        }
        if labels.len() != features.rows() || weights.len() != features.rows() {
            return Err(Error::Shape(format!(
                "batch has {} rows, {} labels, {} weights",
                features.rows(),
                labels.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("sample weights must be finite and >= 0".into()));
        }
        Ok(Self {
            features,
            labels,
            weights,
        })
    }

    /// Batch with unit weights.
    pub fn unweighted(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        Self::new(features, labels, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Optimizer and batching settings shared by every training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub cosine: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            cosine: false,
        }
    }
}

/// Labelled training pool for [`fit_epochs`].
pub struct Pool<'a> {
    pub features: &'a Matrix,
    pub labels: &'a [usize],
    pub weights: &'a [f64],
}

/// Trains `net` with weighted cross entropy over shuffled mini-batches of the
/// pool (the instance-balanced stream). Epochs `start..end` of a `total`-epoch
/// schedule are run; returns each epoch's mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn fit_epochs(
    net: &mut Network,
    opt: &mut Sgd,
    pool: &Pool<'_>,
    settings: &TrainSettings,
    start: usize,
    end: usize,
    total: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = pool.labels.len();
    if n == 0 {
        return Err(Error::Shape("cannot train on an empty pool".into()));
    }
    let mut history = Vec::with_capacity(end.saturating_sub(start));
    for epoch in start..end {
        let lr = learning_rate(settings.lr, epoch, total, settings.cosine);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let x = pool.features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| pool.labels[i]).collect();
            let w: Vec<f64> = chunk.iter().map(|&i| pool.weights[i]).collect();
            let trace = net.forward_traced(&x)?;
            let (loss, grad) = cross_entropy(trace.logits(), &y, &w)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became {loss} at epoch {epoch}; try a smaller learning rate than {lr}"
                )));
            }
            let grads = net.backward(&trace, &grad)?;
            opt.step(net, &grads, lr)?;
            sum += loss;
            batches += 1;
        }
        if !net.is_finite() {
            return Err(Error::Diverged(format!(
                "parameters became non-finite at epoch {epoch}; try a smaller learning rate than {lr}"
            )));
        }
        history.push(sum / batches as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn batch_validation() {
        assert!(Batch::unweighted(Matrix::zeros(0, 2), vec![]).is_err());
        assert!(Batch::new(Matrix::zeros(1, 2), vec![0], vec![-1.0]).is_err());
        assert!(Batch::new(Matrix::zeros(2, 2), vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn fitting_separable_data_reduces_loss() {
        let mut r = rng::stream(11, "fit");
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| if i % 2 == 0 { [1.0, 0.2] } else { [-1.0, -0.1] })
            .collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let w = vec![1.0; 40];
        let mut net = Network::mlp(2, &[4], 2, &mut r).unwrap();
        let mut opt = Sgd::new(0.9, 0.0).unwrap();
        let pool = Pool {
            features: &x,
            labels: &y,
            weights: &w,
        };
        let settings = TrainSettings {
            batch_size: 8,
            lr: 0.1,
            ..TrainSettings::default()
        };
        let h = fit_epochs(&mut net, &mut opt, &pool, &settings, 0, 10, 10, &mut r).unwrap();
        assert!(h[9] < h[0]);
    }
}
