//! Environment-invariant noise identifier.
//!
//! The identifier reuses a frozen network and adjusts its logits by a learned
//! multiple of the log class prior: `g(x) = f(Φ(x)) − w·log π`. Only `w` is
//! trained, with cross entropy summed over environments plus an IRMv1
//! penalty that asks the same `g` to be optimal in each environment.

use std::fmt::Write as _;
use std::path::Path;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, softmax_row, validate_prior, Matrix, Network, Sgd};
use crate::rng::Rng;
use crate::synthdata::{records_matrix, SampleRecord};

/// `out[b,c] = logits[b,c] − w[c]·log π[c]`; a single-entry `w` is shared by
/// every class.
pub fn adjusted_logits(logits: &Matrix, w: &[f64], prior: &[f64]) -> Result<Matrix> {
    validate_prior(prior)?;
    if prior.len() != logits.cols() || !(w.len() == 1 || w.len() == prior.len()) {
        return Err(Error::Shape(format!(
            "logits have {} classes, prior {}, w {}",
            logits.cols(),
            prior.len(),
            w.len()
        )));
    }
    let shift: Vec<f64> = prior
        .iter()
        .enumerate()
        .map(|(c, p)| w[if w.len() == 1 { 0 } else { c }] * p.ln())
        .collect();
    let mut out = logits.clone();
    for r in 0..out.rows() {
        for (z, s) in out.row_mut(r).iter_mut().zip(&shift) {
            *z -= s;
        }
    }
    Ok(out)
}

/// IRMv1 penalty on a logit matrix.
///
/// With `R(s) = mean_b CE(s·z_b, y_b)`, the penalty is `(dR/ds |_{s=1})²`
/// where `dR/ds = mean_b Σ_c z_bc (p_bc − onehot_bc)`. The gradient uses
/// `∂D/∂z_bk = (1/B)[(p_bk − y_bk) + p_bk (z_bk − Σ_c z_bc p_bc)]`.
pub fn irm_penalty(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if !logits.is_finite() {
        return Err(Error::Numeric("logits contain NaN or infinity".into()));
    }
    let classes = logits.cols();
    let n = labels.len() as f64;
    let mut probs = Matrix::zeros(logits.rows(), classes);
    let mut scale_grad = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Shape(format!("label {y} outside {classes} classes")));
        }
        let z = logits.row(b);
        let p = probs.row_mut(b);
        softmax_row(z, p);
        scale_grad += z
            .iter()
            .zip(p.iter())
            .enumerate()
            .map(|(c, (zc, pc))| zc * (pc - if c == y { 1.0 } else { 0.0 }))
            .sum::<f64>();
    }
    scale_grad /= n;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    for (b, &y) in labels.iter().enumerate() {
        let z = logits.row(b);
        let p = probs.row(b);
        let mean_z: f64 = z.iter().zip(p).map(|(a, b)| a * b).sum();
        for (k, g) in grad.row_mut(b).iter_mut().enumerate() {
            let onehot = if k == y { 1.0 } else { 0.0 };
            let d = (p[k] - onehot) + p[k] * (z[k] - mean_z);
            *g = 2.0 * scale_grad * d / n;
        }
    }
    Ok((scale_grad * scale_grad, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WMode {
    /// One adjustment strength per class.
    Vector,
    /// One strength shared by all classes.
    Scalar,
}

impl WMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WMode::Vector => "vector",
            WMode::Scalar => "scalar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vector" => Some(WMode::Vector),
            "scalar" => Some(WMode::Scalar),
            _ => None,
        }
    }
}

/// Learned logit-adjustment strengths plus the class prior they scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Identifier {
    w: Vec<f64>,
    prior: Vec<f64>,
}

impl Identifier {
    pub fn new(prior: Vec<f64>, mode: WMode, init: f64) -> Result<Self> {
        validate_prior(&prior)?;
        if !init.is_finite() {
            return Err(Error::Numeric("initial w must be finite".into()));
        }
        let len = match mode {
            WMode::Vector => prior.len(),
            WMode::Scalar => 1,
        };
        Ok(Self {
            w: vec![init; len],
            prior,
        })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn mode(&self) -> WMode {
        if self.w.len() == 1 && self.prior.len() != 1 {
            WMode::Scalar
        } else {
            WMode::Vector
        }
    }

    pub fn adjust(&self, logits: &Matrix) -> Result<Matrix> {
        adjusted_logits(logits, &self.w, &self.prior)
    }

    /// Softmax of the adjusted logits, row by row.
    pub fn probabilities(&self, logits: &Matrix) -> Result<Matrix> {
        Ok(crate::nn::softmax(&self.adjust(logits)?))
    }

    /// Chain rule from `dL/dg` to `dL/dw`.
    fn w_gradient(&self, upstream: &Matrix) -> Vec<f64> {
        let mut grad = vec![0.0; self.w.len()];
        let scalar = self.w.len() == 1;
        for r in 0..upstream.rows() {
            for (c, (u, p)) in upstream.row(r).iter().zip(&self.prior).enumerate() {
                grad[if scalar { 0 } else { c }] -= u * p.ln();
            }
        }
        grad
    }
}

/// One environment's contribution to the identifier objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerm {
    /// `risk + lambda·penalty`.
    pub value: f64,
    pub risk: f64,
    pub penalty: f64,
    /// Gradient of `value` with respect to `w`.
    pub grad_w: Vec<f64>,
}

impl Identifier {
    /// Weighted cross entropy plus `lambda` times the IRMv1 penalty, both on
    /// the adjusted logits of one batch.
    pub fn objective(&self, logits: &Matrix, labels: &[usize], weights: &[f64], lambda: f64) -> Result<ObjectiveTerm> {
        let g = self.adjust(logits)?;
        let (risk, mut dg) = cross_entropy(&g, labels, weights)?;
        let (penalty, dpen) = irm_penalty(&g, labels)?;
        for (d, p) in dg.as_mut_slice().iter_mut().zip(dpen.as_slice()) {
            *d += lambda * p;
        }
        Ok(ObjectiveTerm {
            value: risk + lambda * penalty,
            risk,
            penalty,
            grad_w: self.w_gradient(&dg),
        })
    }

    /// Replaces `w`; the length must match the current mode.
    pub fn set_w(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.w.len() {
            return Err(Error::Shape(format!(
                "w has {} entries, expected {}",
                w.len(),
                self.w.len()
            )));
        }
        self.w.copy_from_slice(w);
        Ok(())
    }
}

/// Identifier training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct IrmConfig {
    /// Target penalty weight.
    pub lambda: f64,
    /// Steps run with zero penalty before the target weight applies.
    pub lambda_warm_steps: usize,
    /// Passes over the training set; one step draws one batch per environment.
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for IrmConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            lambda_warm_steps: 100,
            epochs: 10,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

impl IrmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "irm lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("identifier learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("identifier batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps_for(&self, train_size: usize) -> usize {
        self.epochs * train_size.div_ceil(self.batch_size.max(1))
    }
}

/// Summary of one identifier training run.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierStats {
    pub steps: usize,
    /// Mean over the last epoch's steps of the summed objective.
    pub final_objective: f64,
    /// Mean per-environment risk over the last epoch.
    pub env_risks: Vec<f64>,
    /// Mean per-environment penalty over the last epoch.
    pub env_penalties: Vec<f64>,
    /// Objective of every step.
    pub objective_trace: Vec<f64>,
}

/// Trains `identifier.w` over the environments with Φ and f frozen.
/// `rngs` holds one generator per environment.
pub fn train_identifier(
    envs: &[Environment],
    records: &[SampleRecord],
    net: &Network,
    identifier: &mut Identifier,
    cfg: &IrmConfig,
    rngs: &mut [Rng],
) -> Result<IdentifierStats> {
    cfg.validate()?;
    if envs.is_empty() || envs.len() != rngs.len() {
        return Err(Error::Config(format!(
            "{} environments but {} generators",
            envs.len(),
            rngs.len()
        )));
    }
    if identifier.prior.len() != net.class_count() {
        return Err(Error::Shape("identifier prior does not match network classes".into()));
    }
    let steps = cfg.steps_for(records.len());
    let per_epoch = records.len().div_ceil(cfg.batch_size).max(1);
    let mut opt = Sgd::new(cfg.momentum, 0.0)?;
    let mut trace = Vec::with_capacity(steps);
    let mut risks = vec![0.0; envs.len()];
    let mut penalties = vec![0.0; envs.len()];
    let mut tail_steps = 0usize;

    for step in 0..steps {
        let lambda = if step < cfg.lambda_warm_steps { 0.0 } else { cfg.lambda };
        // Keep the objective's scale comparable once the penalty dominates.
        let norm = if lambda > 1.0 { 1.0 / lambda } else { 1.0 };
        let in_tail = step + per_epoch >= steps;
        let mut objective = 0.0;
        let mut grad_w = vec![0.0; identifier.w.len()];
        for (e, (env, rng)) in envs.iter().zip(rngs.iter_mut()).enumerate() {
            let batch = env.draw_batch(records, cfg.batch_size, rng)?;
            let logits = net.forward(&batch.features)?;
            let t = identifier.objective(&logits, &batch.labels, &batch.weights, lambda)?;
            if !t.value.is_finite() {
                return Err(Error::Diverged(format!(
                    "identifier objective {} at step {step}, environment {e}, lambda {lambda}",
                    t.value
                )));
            }
            objective += norm * t.value;
            for (gw, v) in grad_w.iter_mut().zip(&t.grad_w) {
                *gw += norm * v;
            }
            let (risk, pen) = (t.risk, t.penalty);
            if in_tail {
                risks[e] += risk;
                penalties[e] += pen;
            }
        }
        if in_tail {
            tail_steps += 1;
        }
        opt.update(vec![identifier.w.as_mut_slice()], &[&grad_w], cfg.lr)?;
        if identifier.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!(
                "identifier w became non-finite at step {step}"
            )));
        }
        trace.push(objective);
    }
    let denom = tail_steps.max(1) as f64;
    let final_objective = if tail_steps == 0 {
        0.0
    } else {
        trace[trace.len() - tail_steps..].iter().sum::<f64>() / denom
    };
    Ok(IdentifierStats {
        steps,
        final_objective,
        env_risks: risks.into_iter().map(|r| r / denom).collect(),
        env_penalties: penalties.into_iter().map(|p| p / denom).collect(),
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEntry {
    pub sample_id: usize,
    pub confidence: f64,
    pub flagged: bool,
}

/// Per-sample identifier confidence in the observed label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTable {
    pub entries: Vec<ConfidenceEntry>,
}

impl ConfidenceTable {
    pub fn from_confidences(ids: &[usize], confidences: &[f64]) -> Self {
        Self {
            entries: ids
                .iter()
                .zip(confidences)
                .map(|(&sample_id, &confidence)| ConfidenceEntry {
                    sample_id,
                    confidence,
                    flagged: false,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.confidence).collect()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.flagged).collect()
    }

    /// Flags the `budget` lowest-confidence entries, ties by sample id.
    pub fn rank_noise(mut self, budget: usize) -> Result<Self> {
        if budget > self.entries.len() {
            return Err(Error::Domain(format!(
                "budget {budget} exceeds {} samples",
                self.entries.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&self.entries[a], &self.entries[b]);
            ea.confidence
                .total_cmp(&eb.confidence)
                .then(ea.sample_id.cmp(&eb.sample_id))
        });
        for e in &mut self.entries {
            e.flagged = false;
        }
        for &i in &order[..budget] {
            self.entries[i].flagged = true;
        }
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_id,confidence,flagged\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{:.16e},{}", e.sample_id, e.confidence, u8::from(e.flagged));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Confidence `softmax(g(x_i))[observed_label_i]` for every record.
pub fn score_confidences(identifier: &Identifier, net: &Network, records: &[SampleRecord]) -> Result<ConfidenceTable> {
    if records.is_empty() {
        return Ok(ConfidenceTable { entries: Vec::new() });
    }
    let dim = records[0].features.len();
    let logits = net.forward(&records_matrix(records, dim))?;
    let labels: Vec<usize> = records.iter().map(|r| r.observed_label).collect();
    let ids: Vec<usize> = records.iter().map(|r| r.sample_id).collect();
    Ok(ConfidenceTable::from_confidences(
        &ids,
        &confidences_from_logits(identifier, &logits, &labels)?,
    ))
}

pub(crate) fn confidences_from_logits(identifier: &Identifier, logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let probs = identifier.probabilities(logits)?;
    Ok(labels.iter().enumerate().map(|(b, &y)| probs.get(b, y)).collect())
}
