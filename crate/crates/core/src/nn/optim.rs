use super::network::{Gradients, Network};
use crate::error::{Error, Result};

/// Momentum SGD with L2 weight decay.
///
/// Velocity accumulates as `v ← μ·v + (g + λ·p)` and parameters move by
/// `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay {weight_decay} must be >= 0")));
        }
        Ok(Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    /// Updates arbitrary parameter tensors in place. The tensor layout must
    /// stay the same across calls.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape("gradients do not match parameters".into()));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(&params).any(|(v, p)| v.len() != p.len())
        {
            return Err(Error::Shape("optimizer state belongs to other parameters".into()));
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let d = gi + self.weight_decay * *pi;
                *vi = self.momentum * *vi + d;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        let g = grads.slices();
        self.update(net.param_slices_mut(), &g, lr)
    }
}

/// Learning rate at `epoch` of `total`, optionally cosine-annealed to zero.
pub fn learning_rate(base: f64, epoch: usize, total: usize, cosine: bool) -> f64 {
    if !cosine || total == 0 {
        return base;
    }
    let t = epoch as f64 / total as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
}
