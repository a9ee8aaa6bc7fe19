//! Metrics and reference training recipes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{cross_entropy, fit_epochs, Matrix, Network, Pool, Sgd, TrainSettings};
use crate::rng::Rng;
use crate::synthdata::{records_matrix, DatasetBundle, SampleRecord};

/// Classes grouped by training count: top 25%, middle 50%, bottom 25%.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSplit {
    pub many: Vec<usize>,
    pub medium: Vec<usize>,
    pub few: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Many,
    Medium,
    Few,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Many, Split::Medium, Split::Few];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Many => "many",
            Split::Medium => "medium",
            Split::Few => "few",
        }
    }
}

/// Sorts classes by count (descending, ties by id) and takes `ceil(C/4)`
/// many-shot and `floor(C/4)` few-shot classes. With fewer than 4 classes
/// every class is many-shot.
pub fn shot_split(class_counts: &[usize]) -> ShotSplit {
    let c = class_counts.len();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| class_counts[b].cmp(&class_counts[a]).then(a.cmp(&b)));
    if c < 4 {
        log::warn!("{c} classes are too few for a shot split; all classes count as many-shot");
        return ShotSplit {
            many: order,
            medium: Vec::new(),
            few: Vec::new(),
        };
    }
    let many = c.div_ceil(4);
    let few = c / 4;
    ShotSplit {
        many: order[..many].to_vec(),
        medium: order[many..c - few].to_vec(),
        few: order[c - few..].to_vec(),
    }
}

impl ShotSplit {
    pub fn classes(&self, split: Split) -> &[usize] {
        match split {
            Split::Many => &self.many,
            Split::Medium => &self.medium,
            Split::Few => &self.few,
        }
    }
}

/// Argmax predictions of `net`, optionally after adding `offset` to every
/// logit row.
pub fn predict(net: &Network, records: &[SampleRecord], offset: Option<&[f64]>) -> Result<Vec<usize>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut logits = net.forward(&records_matrix(records, records[0].features.len()))?;
    if let Some(off) = offset {
        for r in 0..logits.rows() {
            for (z, o) in logits.row_mut(r).iter_mut().zip(off) {
                *z += o;
            }
        }
    }
    Ok(logits.argmax_rows())
}

/// Fraction of `predictions` equal to the observed label, restricted to
/// samples whose label lies in `classes` when given.
pub fn accuracy_of(predictions: &[usize], records: &[SampleRecord], classes: Option<&[usize]>) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (p, r) in predictions.iter().zip(records) {
        if classes.is_some_and(|cs| !cs.contains(&r.observed_label)) {
            continue;
        }
        total += 1;
        hits += usize::from(*p == r.observed_label);
    }
    if total == 0 {
        return Err(Error::Undefined("accuracy over an empty evaluation set".into()));
    }
    Ok(hits as f64 / total as f64)
}

pub fn accuracy(net: &Network, records: &[SampleRecord], classes: Option<&[usize]>) -> Result<f64> {
    accuracy_of(&predict(net, records, None)?, records, classes)
}

/// Precision and recall of `flags` against the ground-truth noise flags;
/// `None` marks an undefined value (no flags, or no noise).
pub fn noise_detection_pr(
    flags: &[bool],
    records: &[SampleRecord],
    classes: Option<&[usize]>,
) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut flagged, mut noisy) = (0usize, 0usize, 0usize);
    for (&f, r) in flags.iter().zip(records) {
        if classes.is_some_and(|cs| !cs.contains(&r.observed_label)) {
            continue;
        }
        flagged += usize::from(f);
        noisy += usize::from(r.is_noise);
        tp += usize::from(f && r.is_noise);
    }
    let precision = (flagged > 0).then(|| tp as f64 / flagged as f64);
    let recall = (noisy > 0).then(|| tp as f64 / noisy as f64);
    (precision, recall)
}

/// A metric overall and per shot split. `None` is the undefined sentinel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitValues {
    pub overall: Option<f64>,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
}

impl SplitValues {
    pub fn get(&self, split: Option<Split>) -> Option<f64> {
        match split {
            None => self.overall,
            Some(Split::Many) => self.many,
            Some(Split::Medium) => self.medium,
            Some(Split::Few) => self.few,
        }
    }

    fn set(&mut self, split: Option<Split>, v: Option<f64>) {
        match split {
            None => self.overall = v,
            Some(Split::Many) => self.many = v,
            Some(Split::Medium) => self.medium = v,
            Some(Split::Few) => self.few = v,
        }
    }

    fn build(mut f: impl FnMut(Option<&[usize]>) -> Option<f64>, split: &ShotSplit) -> Self {
        let mut out = SplitValues::default();
        out.set(None, f(None));
        for s in Split::ALL {
            out.set(Some(s), f(Some(split.classes(s))));
        }
        out
    }
}

/// Top-1 accuracy on the test set, overall and per split.
pub fn top1(predictions: &[usize], test: &[SampleRecord], split: &ShotSplit) -> SplitValues {
    SplitValues::build(|cs| accuracy_of(predictions, test, cs).ok(), split)
}

/// Noise precision and recall over the training set, overall and per split.
pub fn noise_metrics(flags: &[bool], train: &[SampleRecord], split: &ShotSplit) -> (SplitValues, SplitValues) {
    let p = SplitValues::build(|cs| noise_detection_pr(flags, train, cs).0, split);
    let r = SplitValues::build(|cs| noise_detection_pr(flags, train, cs).1, split);
    (p, r)
}

/// Per-iteration record of the iterative pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mixup_epochs: usize,
    pub flagged: usize,
    pub newly_flagged: usize,
    pub precision: SplitValues,
    pub recall: SplitValues,
    pub w: Vec<f64>,
    pub identifier_objective: f64,
    pub env_risks: Vec<f64>,
    pub env_penalties: Vec<f64>,
    pub mixup_final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub seed: u64,
    pub top1: SplitValues,
    pub noise_precision: SplitValues,
    pub noise_recall: SplitValues,
    /// Number of flagged training samples, when the method flags noise.
    pub flag_budget: Option<usize>,
    pub history: Vec<IterationRecord>,
    pub notes: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    pub fn new(method: &str, seed: u64, top1: SplitValues) -> Self {
        Self {
            method: method.to_string(),
            seed,
            top1,
            noise_precision: SplitValues::default(),
            noise_recall: SplitValues::default(),
            flag_budget: None,
            history: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// One `method.metric.split=value` line per metric and split.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for (name, vals) in [
            ("top1", &self.top1),
            ("noise_precision", &self.noise_precision),
            ("noise_recall", &self.noise_recall),
        ] {
            for (split, v) in [
                ("overall", vals.overall),
                ("many", vals.many),
                ("medium", vals.medium),
                ("few", vals.few),
            ] {
                let _ = writeln!(s, "{}.{name}.{split}={}", self.method, fmt_opt(v));
            }
        }
        for it in &self.history {
            let _ = writeln!(
                s,
                "{}.iter{}.newly_flagged={}",
                self.method, it.iteration, it.newly_flagged
            );
            let _ = writeln!(
                s,
                "{}.iter{}.noise_precision.overall={}",
                self.method,
                it.iteration,
                fmt_opt(it.precision.overall)
            );
        }
        s
    }
}

/// Report for a classifier without noise flags.
pub fn report_for(
    method: &str,
    seed: u64,
    net: &Network,
    bundle: &DatasetBundle,
    offset: Option<&[f64]>,
) -> Result<MetricsReport> {
    let split = shot_split(&bundle.class_counts);
    let preds = predict(net, &bundle.test, offset)?;
    Ok(MetricsReport::new(method, seed, top1(&preds, &bundle.test, &split)))
}

#[allow(clippy::too_many_arguments)]
fn train_pool(
    bundle: &DatasetBundle,
    net: &mut Network,
    settings: &TrainSettings,
    opt: &mut Sgd,
    start: usize,
    end: usize,
    total: usize,
    keep: Option<&[bool]>,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let (x, y): (Matrix, Vec<usize>) = match keep {
        None => (bundle.train_features(), bundle.train_labels()),
        Some(k) => {
            let kept: Vec<SampleRecord> = bundle
                .train
                .iter()
                .zip(k)
                .filter(|(_, &k)| k)
                .map(|(r, _)| r.clone())
                .collect();
            (
                records_matrix(&kept, bundle.dim),
                kept.iter().map(|r| r.observed_label).collect(),
            )
        }
    };
    let w = vec![1.0; y.len()];
    let pool = Pool {
        features: &x,
        labels: &y,
        weights: &w,
    };
    fit_epochs(net, opt, &pool, settings, start, end, total, rng)
}

/// Plain empirical risk minimization for `epochs` epochs.
pub fn baseline_ce(
    bundle: &DatasetBundle,
    mut net: Network,
    epochs: usize,
    settings: &TrainSettings,
    seed: u64,
    rng: &mut Rng,
) -> Result<(Network, MetricsReport)> {
    let mut opt = Sgd::new(settings.momentum, settings.weight_decay)?;
    train_pool(bundle, &mut net, settings, &mut opt, 0, epochs, epochs, None, rng)?;
    let report = report_for("ce", seed, &net, bundle, None)?;
    Ok((net, report))
}

/// Post-hoc logit adjustment of an ERM network: predictions use
/// `logits − log π`.
pub fn la_report(net: &Network, bundle: &DatasetBundle, seed: u64) -> Result<MetricsReport> {
    let offset: Vec<f64> = bundle.prior.iter().map(|p| -p.ln()).collect();
    let mut report = report_for("la", seed, net, bundle, Some(&offset))?;
    report
        .notes
        .push("post-hoc adjustment subtracts log prior at inference".into());
    Ok(report)
}

pub fn baseline_la(
    bundle: &DatasetBundle,
    net: Network,
    epochs: usize,
    settings: &TrainSettings,
    seed: u64,
    rng: &mut Rng,
) -> Result<(Network, MetricsReport)> {
    let (net, _) = baseline_ce(bundle, net, epochs, settings, seed, rng)?;
    let report = la_report(&net, bundle, seed)?;
    Ok((net, report))
}

/// Per-sample cross entropy of the observed labels.
pub fn per_sample_losses(net: &Network, records: &[SampleRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let logits = net.forward(&records_matrix(records, records[0].features.len()))?;
    records
        .iter()
        .enumerate()
        .map(|(b, r)| {
            let row = Matrix::from_vec(1, logits.cols(), logits.row(b).to_vec());
            cross_entropy(&row, &[r.observed_label], &[1.0]).map(|(l, _)| l)
        })
        .collect()
}

/// Flags the `count` highest-loss samples; ties by position.
pub fn flag_highest(losses: &[f64], count: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    let mut flags = vec![false; losses.len()];
    for &i in order.iter().take(count) {
        flags[i] = true;
    }
    flags
}

/// Small-loss selection settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallLossConfig {
    /// Total epoch budget, warm-up included.
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// Fraction of the training set dropped as presumed noise.
    pub drop_rate: f64,
    /// Number of highest-loss samples flagged for precision/recall.
    pub flag_budget: usize,
}

/// Warm-up, drop the `drop_rate` highest-loss samples globally, then keep
/// training the same network on the remainder.
pub fn baseline_smallloss(
    bundle: &DatasetBundle,
    mut net: Network,
    cfg: &SmallLossConfig,
    settings: &TrainSettings,
    seed: u64,
    rng: &mut Rng,
) -> Result<(Network, MetricsReport)> {
    if !(0.0..1.0).contains(&cfg.drop_rate) {
        return Err(Error::Domain(format!("drop rate {} outside [0, 1)", cfg.drop_rate)));
    }
    if cfg.warmup_epochs > cfg.epochs {
        return Err(Error::Config("small-loss warm-up exceeds the epoch budget".into()));
    }
    if cfg.flag_budget > bundle.train.len() {
        return Err(Error::Domain("flag budget exceeds the training set".into()));
    }
    let mut opt = Sgd::new(settings.momentum, settings.weight_decay)?;
    train_pool(
        bundle,
        &mut net,
        settings,
        &mut opt,
        0,
        cfg.warmup_epochs,
        cfg.epochs,
        None,
        rng,
    )?;
    let losses = per_sample_losses(&net, &bundle.train)?;
    let drop = (cfg.drop_rate * bundle.train.len() as f64).round() as usize;
    let dropped = flag_highest(&losses, drop);
    let keep: Vec<bool> = dropped.iter().map(|d| !d).collect();
    train_pool(
        bundle,
        &mut net,
        settings,
        &mut opt,
        cfg.warmup_epochs,
        cfg.epochs,
        cfg.epochs,
        Some(&keep),
        rng,
    )?;

    let split = shot_split(&bundle.class_counts);
    let flags = flag_highest(&losses, cfg.flag_budget);
    let (precision, recall) = noise_metrics(&flags, &bundle.train, &split);
    let mut report = report_for("smallloss", seed, &net, bundle, None)?;
    report.noise_precision = precision;
    report.noise_recall = recall;
    report.flag_budget = Some(cfg.flag_budget);
    report.notes.push(format!(
        "dropped {drop} samples after {} warm-up epochs; flags are the {} highest warm-up losses",
        cfg.warmup_epochs, cfg.flag_budget
    ));
    Ok((net, report))
}
