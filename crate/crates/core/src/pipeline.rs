//! The iterative hard-to-easy pipeline.
//!
//! Stage 0 warms up a network. Each Stage-1 iteration rebuilds the
//! environments, trains the identifier's `w` under the invariance penalty,
//! scores every training sample, and fine-tunes the whole network on
//! confidence-weighted Mixup pairs. Stage 2 freezes the backbone and refits
//! the head with a balanced-softmax loss reweighted by identifier confidence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::envs::{build_environments, EnvSpec};
use crate::error::{Error, Result};
use crate::eval::{self, IterationRecord, MetricsReport};
use crate::identifier::{score_confidences, train_identifier, ConfidenceTable, Identifier, IrmConfig, WMode};
use crate::nn::{
    argmax, balanced_softmax_loss, checkpoint, learning_rate, soft_cross_entropy, Matrix, Network, Sgd, TrainSettings,
};
use crate::rng::{self, Rng};
use crate::synthdata::{records_matrix, DatasetBundle};
use crate::warmup::{warmup_train, WarmupConfig};

/// Lower bound applied to confidences before forming mixing weights.
pub const CONFIDENCE_FLOOR: f64 = 1e-6;

/// One confidence-weighted Mixup sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MixPair {
    pub i: usize,
    pub j: usize,
    pub delta: f64,
    pub features: Vec<f64>,
    pub soft_label: Vec<f64>,
}

/// Mixing weight `c_i / (c_i + c_j)` with both confidences floored.
pub fn mixing_weight(ci: f64, cj: f64) -> f64 {
    let (ci, cj) = (ci.max(CONFIDENCE_FLOOR), cj.max(CONFIDENCE_FLOOR));
    ci / (ci + cj)
}

/// Mixes one pair: `x̃ = δ x_i + (1−δ) x_j`, `ỹ = δ e_{y_i} + (1−δ) e_{y_j}`.
#[allow(clippy::too_many_arguments)]
pub fn mix_pair(
    i: usize,
    j: usize,
    xi: &[f64],
    xj: &[f64],
    yi: usize,
    yj: usize,
    ci: f64,
    cj: f64,
    classes: usize,
) -> MixPair {
    let delta = mixing_weight(ci, cj);
    let features = xi.iter().zip(xj).map(|(a, b)| delta * a + (1.0 - delta) * b).collect();
    let mut soft_label = vec![0.0; classes];
    soft_label[yi] += delta;
    soft_label[yj] += 1.0 - delta;
    MixPair {
        i,
        j,
        delta,
        features,
        soft_label,
    }
}

/// Pairs the batch rows through a random permutation: consecutive entries of
/// the shuffled order form a pair, and an odd leftover pairs with itself.
/// `ids` name the rows in the returned pairs.
pub fn commensurate_pairs(
    features: &Matrix,
    labels: &[usize],
    ids: &[usize],
    confidences: &[f64],
    classes: usize,
    rng: &mut Rng,
) -> Vec<MixPair> {
    let n = features.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(2)
        .map(|pair| {
            let a = pair[0];
            let b = *pair.get(1).unwrap_or(&a);
            mix_pair(
                ids[a],
                ids[b],
                features.row(a),
                features.row(b),
                labels[a],
                labels[b],
                confidences[a],
                confidences[b],
                classes,
            )
        })
        .collect()
}

/// Fine-tunes backbone and head on commensurate Mixup pairs drawn from the
/// shuffled training set. Returns each epoch's mean loss.
pub fn mixup_finetune(
    net: &mut Network,
    bundle: &DatasetBundle,
    confidences: &[f64],
    epochs: usize,
    settings: &TrainSettings,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if confidences.len() != bundle.train.len() {
        return Err(Error::Shape(format!(
            "{} confidences for {} training samples",
            confidences.len(),
            bundle.train.len()
        )));
    }
    let x = bundle.train_features();
    let y = bundle.train_labels();
    let ids: Vec<usize> = bundle.train.iter().map(|r| r.sample_id).collect();
    let mut opt = Sgd::new(settings.momentum, settings.weight_decay)?;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = learning_rate(settings.lr, epoch, epochs, settings.cosine);
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let bx = x.select_rows(chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let bid: Vec<usize> = chunk.iter().map(|&i| ids[i]).collect();
            let bc: Vec<f64> = chunk.iter().map(|&i| confidences[i]).collect();
            let pairs = commensurate_pairs(&bx, &by, &bid, &bc, bundle.classes, rng);
            let feats: Vec<&[f64]> = pairs.iter().map(|p| p.features.as_slice()).collect();
            let targets: Vec<&[f64]> = pairs.iter().map(|p| p.soft_label.as_slice()).collect();
            let trace = net.forward_traced(&Matrix::from_rows(&feats))?;
            let (loss, grad) = soft_cross_entropy(trace.logits(), &Matrix::from_rows(&targets))?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "mixup loss became {loss} at epoch {epoch}; try a smaller learning rate than {lr}"
                )));
            }
            let grads = net.backward(&trace, &grad)?;
            opt.step(net, &grads, lr)?;
            sum += loss;
            count += 1;
        }
        if !net.is_finite() {
            return Err(Error::Diverged(format!(
                "parameters became non-finite during mixup epoch {epoch}"
            )));
        }
        history.push(sum / count.max(1) as f64);
    }
    Ok(history)
}

/// Stage-2 sample weight: the identifier's probability of the observed
/// label when it is the row's top class, `floor` otherwise.
pub fn theta_weights(probs: &Matrix, labels: &[usize], floor: f64) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            let row = probs.row(b);
            if argmax(row) == y {
                row[y]
            } else {
                floor
            }
        })
        .collect()
}

/// How many training samples to flag as noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagBudget {
    /// The number of truly noisy training samples.
    TrueNoise,
    Count(usize),
}

impl FlagBudget {
    pub fn resolve(self, bundle: &DatasetBundle) -> usize {
        match self {
            FlagBudget::TrueNoise => bundle.noise_count(),
            FlagBudget::Count(n) => n.min(bundle.train.len()),
        }
    }
}

/// Full configuration of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct H2EConfig {
    pub hidden: Vec<usize>,
    pub settings: TrainSettings,
    /// Network-update epochs across warm-up, Mixup fine-tuning and Stage 2.
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub stage2_epochs: usize,
    pub iterations: usize,
    pub irm: IrmConfig,
    pub w_mode: WMode,
    pub w_init: f64,
    pub theta_floor: f64,
    pub w_min: f64,
    pub warmup_weights: bool,
    pub envs: EnvSpec,
    /// Exclude previously flagged samples from environment pools.
    pub drop_flagged: bool,
    pub flag_budget: FlagBudget,
}

impl H2EConfig {
    pub fn with_envs(envs: EnvSpec) -> Self {
        Self {
            hidden: vec![64],
            settings: TrainSettings::default(),
            epochs: 30,
            warmup_epochs: 5,
            stage2_epochs: 5,
            iterations: 1,
            irm: IrmConfig::default(),
            w_mode: WMode::Vector,
            w_init: 1.0,
            theta_floor: 0.1,
            w_min: 0.2,
            warmup_weights: true,
            envs,
            drop_flagged: false,
            flag_budget: FlagBudget::TrueNoise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.warmup_epochs == 0 {
            return Err(Error::Config("warm-up needs at least one epoch".into()));
        }
        if self.warmup_epochs + self.stage2_epochs > self.epochs {
            return Err(Error::Config(format!(
                "epoch budget {} is smaller than warm-up {} plus stage 2 {}",
                self.epochs, self.warmup_epochs, self.stage2_epochs
            )));
        }
        if !(self.theta_floor > 0.0 && self.theta_floor < 1.0) {
            return Err(Error::Config(format!(
                "theta floor {} must lie in (0, 1)",
                self.theta_floor
            )));
        }
        if !(0.0..=1.0).contains(&self.w_min) {
            return Err(Error::Config(format!("w_min {} must lie in [0, 1]", self.w_min)));
        }
        if self.settings.batch_size == 0 || !(self.settings.lr > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        Sgd::new(self.settings.momentum, self.settings.weight_decay)?;
        self.irm.validate()
    }

    /// Mixup epochs per Stage-1 iteration: equal shares of the budget left
    /// after warm-up and Stage 2, remainder to the earliest iterations.
    pub fn mixup_schedule(&self) -> Vec<usize> {
        let total = self.epochs.saturating_sub(self.warmup_epochs + self.stage2_epochs);
        let t = self.iterations.max(1);
        (0..t).map(|i| total / t + usize::from(i < total % t)).collect()
    }

    /// Human-readable stage schedule.
    pub fn describe(&self, train_size: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "stage0 warm-up: {} epochs (density at epoch {})",
            self.warmup_epochs,
            self.warmup_epochs.div_ceil(2)
        );
        for (t, e) in self.mixup_schedule().iter().enumerate() {
            let _ = writeln!(
                s,
                "stage1 iteration {}: identifier {} steps x {} environments, mixup {} epochs",
                t + 1,
                self.irm.steps_for(train_size),
                self.envs.layout.len(),
                e
            );
        }
        let _ = writeln!(s, "stage2 head refit: {} epochs", self.stage2_epochs);
        let _ = writeln!(s, "network-update epochs total: {}", self.epochs);
        s
    }
}

/// Where pipeline artifacts go. A disabled sink keeps log lines in memory only.
#[derive(Debug, Default)]
pub struct RunDir {
    root: Option<PathBuf>,
    log: Vec<String>,
}

impl RunDir {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "confidences"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let log = root.join("log.txt");
        std::fs::write(&log, "").map_err(|e| Error::io(&log, e))?;
        Ok(Self {
            root: Some(root.to_path_buf()),
            log: Vec::new(),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn log_lines(&self) -> &[String] {
        &self.log
    }

    pub fn log(&mut self, line: String) -> Result<()> {
        log::debug!("{line}");
        if let Some(root) = &self.root {
            use std::io::Write;
            let p = root.join("log.txt");
            let mut f = std::fs::OpenOptions::new()
                .append(true)
                .open(&p)
                .map_err(|e| Error::io(&p, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(&p, e))?;
        }
        self.log.push(line);
        Ok(())
    }

    pub fn checkpoint(&self, name: &str, net: &Network) -> Result<()> {
        if let Some(root) = &self.root {
            checkpoint::save(net, &root.join("checkpoints").join(format!("{name}.txt")))?;
        }
        Ok(())
    }

    pub fn confidences(&self, iteration: usize, table: &ConfidenceTable) -> Result<()> {
        if let Some(root) = &self.root {
            table.write_csv(&root.join("confidences").join(format!("iter_{iteration}.csv")))?;
        }
        Ok(())
    }

    pub fn write_file(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(root) = &self.root {
            let p = root.join(name);
            std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Mutable state carried between Stage-1 iterations.
pub struct Stage1State {
    pub net: Network,
    pub identifier: Identifier,
    /// Flags from the previous iteration, indexed like the training set.
    pub flags: Option<Vec<bool>>,
    env_rngs: Vec<Rng>,
    mixup_rng: Rng,
}

impl Stage1State {
    pub fn new(net: Network, identifier: Identifier, envs: usize, seed: u64) -> Self {
        Self {
            net,
            identifier,
            flags: None,
            env_rngs: (0..envs)
                .map(|e| rng::stream(seed, &format!("env-e{}", e + 1)))
                .collect(),
            mixup_rng: rng::stream(seed, "mixup"),
        }
    }
}

/// Output of one Stage-1 iteration.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub confidences: ConfidenceTable,
    pub record: IterationRecord,
}

/// One pass: environments, identifier, confidences, Mixup fine-tune.
pub fn stage1_iteration(
    state: &mut Stage1State,
    bundle: &DatasetBundle,
    cfg: &H2EConfig,
    t: usize,
    mixup_epochs: usize,
    sink: &mut RunDir,
) -> Result<IterationOutput> {
    let exclude = if cfg.drop_flagged { state.flags.as_deref() } else { None };
    let envs = build_environments(&bundle.train, bundle.classes, &cfg.envs, exclude)?;
    let stats = train_identifier(
        &envs,
        &bundle.train,
        &state.net,
        &mut state.identifier,
        &cfg.irm,
        &mut state.env_rngs,
    )?;
    sink.log(format!(
        "stage1 iter {t} identifier steps {} objective {:.6} w [{}]",
        stats.steps,
        stats.final_objective,
        state
            .identifier
            .w()
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    ))?;

    let budget = cfg.flag_budget.resolve(bundle);
    let table = score_confidences(&state.identifier, &state.net, &bundle.train)?.rank_noise(budget)?;
    let flags = table.flags();
    let newly = match &state.flags {
        None => flags.iter().filter(|&&f| f).count(),
        Some(prev) => flags.iter().zip(prev).filter(|(&f, &p)| f && !p).count(),
    };
    let losses = mixup_finetune(
        &mut state.net,
        bundle,
        &table.confidences(),
        mixup_epochs,
        &cfg.settings,
        &mut state.mixup_rng,
    )?;
    for (e, l) in losses.iter().enumerate() {
        sink.log(format!("stage1 iter {t} mixup epoch {} loss {l:.6}", e + 1))?;
    }

    let split = eval::shot_split(&bundle.class_counts);
    let (precision, recall) = eval::noise_metrics(&flags, &bundle.train, &split);
    state.flags = Some(flags);
    Ok(IterationOutput {
        record: IterationRecord {
            iteration: t,
            mixup_epochs,
            flagged: budget,
            newly_flagged: newly,
            precision,
            recall,
            w: state.identifier.w().to_vec(),
            identifier_objective: stats.final_objective,
            env_risks: stats.env_risks,
            env_penalties: stats.env_penalties,
            mixup_final_loss: losses.last().copied(),
        },
        confidences: table,
    })
}

/// Refits only the head with reweighted balanced softmax; `θ` is recomputed
/// from the identifier at the start of every epoch. Returns epoch losses.
pub fn stage2_train(
    net: &mut Network,
    identifier: &Identifier,
    bundle: &DatasetBundle,
    cfg: &H2EConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let embeddings = net.embed(&records_matrix(&bundle.train, bundle.dim))?;
    let labels = bundle.train_labels();
    let mut head = net.head_network();
    let mut opt = Sgd::new(cfg.settings.momentum, cfg.settings.weight_decay)?;
    let mut history = Vec::with_capacity(cfg.stage2_epochs);
    for epoch in 0..cfg.stage2_epochs {
        let probs = identifier.probabilities(&head.forward(&embeddings)?)?;
        let theta = theta_weights(&probs, &labels, cfg.theta_floor);
        let lr = learning_rate(cfg.settings.lr, epoch, cfg.stage2_epochs, cfg.settings.cosine);
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.settings.batch_size.max(1)) {
            let x = embeddings.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let w: Vec<f64> = chunk.iter().map(|&i| theta[i]).collect();
            let trace = head.forward_traced(&x)?;
            let (loss, grad) = balanced_softmax_loss(trace.logits(), &y, &bundle.prior, &w)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("stage-2 loss became {loss} at epoch {epoch}")));
            }
            let grads = head.backward(&trace, &grad)?;
            opt.step(&mut head, &grads, lr)?;
            sum += loss;
            count += 1;
        }
        history.push(sum / count.max(1) as f64);
    }
    *net.head_mut() = head.layers()[0].clone();
    Ok(history)
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct H2ERun {
    pub net: Network,
    pub identifier: Identifier,
    pub report: MetricsReport,
    pub confidences: Vec<ConfidenceTable>,
    pub final_flags: Vec<bool>,
}

/// Runs warm-up, `T` Stage-1 iterations and Stage 2 on `bundle`, then
/// evaluates. Failures carry the stage that raised them.
pub fn run_h2e(bundle: &DatasetBundle, cfg: &H2EConfig, seed: u64, sink: &mut RunDir) -> Result<H2ERun> {
    cfg.validate()?;
    let init = Network::mlp(bundle.dim, &cfg.hidden, bundle.classes, &mut rng::stream(seed, "init"))?;

    let warm_cfg = WarmupConfig {
        epochs: cfg.warmup_epochs,
        w_min: cfg.w_min,
        apply_weights: cfg.warmup_weights,
        settings: cfg.settings.clone(),
    };
    let warm =
        warmup_train(bundle, init, &warm_cfg, &mut rng::stream(seed, "warmup")).map_err(|e| e.in_stage("stage0"))?;
    for (e, l) in warm.losses.iter().enumerate() {
        sink.log(format!("stage0 epoch {} loss {l:.6}", e + 1))?;
    }
    sink.checkpoint("stage0", &warm.net)?;
    if let Some(root) = sink.root() {
        warm.density.write_csv(bundle, &root.join("density.csv"))?;
    }

    let identifier = Identifier::new(bundle.prior.clone(), cfg.w_mode, cfg.w_init).map_err(|e| e.in_stage("stage1"))?;
    let mut state = Stage1State::new(warm.net, identifier, cfg.envs.layout.len(), seed);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut tables = Vec::with_capacity(cfg.iterations);
    for (i, epochs) in cfg.mixup_schedule().into_iter().enumerate() {
        let t = i + 1;
        let out = stage1_iteration(&mut state, bundle, cfg, t, epochs, sink)
            .map_err(|e| e.in_stage(format!("stage1 iteration {t}")))?;
        sink.checkpoint(&format!("stage1_{t}"), &state.net)?;
        sink.confidences(t, &out.confidences)?;
        history.push(out.record);
        tables.push(out.confidences);
    }

    let mut net = state.net;
    let losses = stage2_train(
        &mut net,
        &state.identifier,
        bundle,
        cfg,
        &mut rng::stream(seed, "stage2"),
    )
    .map_err(|e| e.in_stage("stage2"))?;
    for (e, l) in losses.iter().enumerate() {
        sink.log(format!("stage2 epoch {} loss {l:.6}", e + 1))?;
    }
    sink.checkpoint("stage2", &net)?;

    let final_flags = state.flags.unwrap_or_else(|| vec![false; bundle.train.len()]);
    let split = eval::shot_split(&bundle.class_counts);
    let mut report = eval::report_for("h2e", seed, &net, bundle, None).map_err(|e| e.in_stage("eval"))?;
    let (precision, recall) = eval::noise_metrics(&final_flags, &bundle.train, &split);
    report.noise_precision = precision;
    report.noise_recall = recall;
    report.flag_budget = Some(cfg.flag_budget.resolve(bundle));
    report.history = history;
    report
        .notes
        .push("flags are the lowest identifier confidences of the last iteration".into());
    Ok(H2ERun {
        net,
        identifier: state.identifier,
        report,
        confidences: tables,
        final_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_confidences_give_midpoint() {
        let p = mix_pair(0, 1, &[1.0, 3.0], &[3.0, -1.0], 0, 2, 0.4, 0.4, 3);
        assert_eq!(p.delta, 0.5);
        assert_eq!(p.features, vec![2.0, 1.0]);
        assert_eq!(p.soft_label, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn delta_arithmetic() {
        assert!((mixing_weight(0.9, 0.3) - 0.75).abs() < 1e-15);
        assert_eq!(mixing_weight(0.0, 0.0), 0.5);
    }

    #[test]
    fn near_one_limit_reproduces_first_sample() {
        let xi = [2.0, -4.0, 0.5];
        let p = mix_pair(0, 1, &xi, &[10.0, 5.0, -7.0], 1, 0, 0.999999, 1e-6, 2);
        for (a, b) in p.features.iter().zip(&xi) {
            assert!(((a - b) / b).abs() < 1e-4);
        }
        assert!(p.soft_label[1] > 0.999);
    }

    #[test]
    fn floored_sample_has_tiny_weight() {
        for cj in [1e-6, 0.01, 0.5, 1.0] {
            let d = mixing_weight(0.0, cj);
            assert!(d <= 1e-6 / (1e-6 + cj) + 1e-18);
        }
    }

    #[test]
    fn pairing_covers_batch_with_odd_self_pair() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0]]);
        let pairs = commensurate_pairs(
            &x,
            &[0, 1, 0, 1, 0],
            &[10, 11, 12, 13, 14],
            &[0.5; 5],
            2,
            &mut rng::stream(1, "p"),
        );
        assert_eq!(pairs.len(), 3);
        let mut seen: Vec<usize> = pairs.iter().flat_map(|p| [p.i, p.j]).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![10, 11, 12, 13, 14]);
        assert_eq!(pairs.iter().filter(|p| p.i == p.j).count(), 1);
        for p in &pairs {
            assert!((p.soft_label.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_branches() {
        let probs = Matrix::from_rows(&[[0.7, 0.2, 0.1], [0.7, 0.2, 0.1]]);
        let t = theta_weights(&probs, &[0, 1], 0.1);
        assert_eq!(t, vec![0.7, 0.1]);
    }

    #[test]
    fn schedule_splits_budget_exactly() {
        let mut cfg = H2EConfig::with_envs(EnvSpec::standard(3, 1.0).unwrap());
        cfg.epochs = 30;
        cfg.warmup_epochs = 5;
        cfg.stage2_epochs = 4;
        for t in 1..=5 {
            cfg.iterations = t;
            let s = cfg.mixup_schedule();
            assert_eq!(s.len(), t);
            assert_eq!(s.iter().sum::<usize>(), 21);
            assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = H2EConfig::with_envs(EnvSpec::standard(3, 1.0).unwrap());
        assert!(cfg.validate().is_ok());
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());
        cfg.iterations = 1;
        cfg.theta_floor = 1.0;
        assert!(cfg.validate().is_err());
        cfg.theta_floor = 0.1;
        cfg.epochs = 6;
        assert!(cfg.validate().is_err());
    }
}
