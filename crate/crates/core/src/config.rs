//! Experiment configuration: plain `key = value` lines, `#` comments.
//!
//! Every key has a default; unknown keys are rejected. The echo written to a
//! run directory lists every key with its resolved value, so loading the
//! echo reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::envs::{AugmentKind, AugmentTier, EnvSpec};
use crate::error::{Error, Result};
use crate::identifier::{IrmConfig, WMode};
use crate::nn::TrainSettings;
use crate::pipeline::{FlagBudget, H2EConfig};
use crate::synthdata::{BundleParams, ForgeParams};

/// Training method selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    H2e,
    Ce,
    La,
    SmallLoss,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::H2e, Method::Ce, Method::La, Method::SmallLoss];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::H2e => "h2e",
            Method::Ce => "ce",
            Method::La => "la",
            Method::SmallLoss => "smallloss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s.trim())
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Keys and their defaults. `auto` defers to a value derived from other keys.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data.classes", "10"),
    ("data.dim", "32"),
    ("data.contexts", "6"),
    ("data.n_max", "500"),
    ("data.imbalance", "20"),
    ("data.noise_rate", "0.3"),
    ("data.blue_fraction", "0.5"),
    ("data.test_per_class", "100"),
    ("data.signal_scale", "2.5"),
    ("data.context_scale", "1.5"),
    ("data.noise_scale", "1"),
    ("data.head_context_entropy", "0.9"),
    ("data.tail_context_entropy", "0.2"),
    ("train.epochs", "30"),
    ("train.iterations", "1"),
    ("train.lr", "0.05"),
    ("train.momentum", "0.9"),
    ("train.weight_decay", "0.0001"),
    ("train.batch_size", "64"),
    ("train.cosine", "false"),
    ("train.hidden", "64"),
    ("train.warmup_epochs", "5"),
    ("train.stage2_epochs", "5"),
    ("train.w_min", "0.2"),
    ("train.warmup_weights", "true"),
    ("train.theta_floor", "0.1"),
    ("train.lambda", "10"),
    ("train.lambda_warm_steps", "100"),
    ("train.irm_epochs", "10"),
    ("train.irm_lr", "0.05"),
    ("train.w_mode", "vector"),
    ("train.w_init", "1"),
    ("train.drop_flagged", "false"),
    ("env.count", "3"),
    ("env.simple_jitter", "auto"),
    ("env.strong_jitter", "auto"),
    ("env.strong_dropout", "0.2"),
    ("env.strong_scale_lo", "0.8"),
    ("env.strong_scale_hi", "1.2"),
    ("eval.flag_budget", "true_noise"),
    ("eval.baselines", "ce,la,smallloss"),
    ("eval.smallloss_drop_rate", "auto"),
    ("output.dir", "runs/default"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub forge: ForgeParams,
    pub bundle: BundleParams,
    pub h2e: H2EConfig,
    pub baselines: Vec<Method>,
    pub smallloss_drop_rate: f64,
    pub output_dir: PathBuf,
    resolved: BTreeMap<String, String>,
}

fn field<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = &map[key];
    raw.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: {msg}")))
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_map(BTreeMap::new()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Parses config text. Later duplicates of a key are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut given = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !DEFAULTS.iter().any(|(d, _)| *d == k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
            }
            if given.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
        }
        Self::from_map(given)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn from_map(given: BTreeMap<String, String>) -> Result<Self> {
        let mut m: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        m.extend(given);

        let noise_scale: f64 = field(&m, "data.noise_scale")?;
        let simple = AugmentTier::default_for(AugmentKind::Simple, noise_scale);
        let strong = AugmentTier::default_for(AugmentKind::Strong, noise_scale);
        for (key, v) in [
            ("env.simple_jitter", simple.jitter_sigma()),
            ("env.strong_jitter", strong.jitter_sigma()),
        ] {
            if m[key] == "auto" {
                m.insert(key.into(), v.to_string());
            }
        }
        if m["eval.smallloss_drop_rate"] == "auto" {
            let rho = m["data.noise_rate"].clone();
            m.insert("eval.smallloss_drop_rate".into(), rho);
        }
        Self::build(m)
    }

    /// Re-validates after programmatic edits to the resolved map.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        if !DEFAULTS.iter().any(|(d, _)| *d == key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        let mut m = self.resolved.clone();
        m.insert(key.to_string(), value.to_string());
        Self::build(m)
    }

    fn build(m: BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = field(&m, "seed")?;
        let forge = ForgeParams {
            classes: field(&m, "data.classes")?,
            contexts: field(&m, "data.contexts")?,
            dim: field(&m, "data.dim")?,
            signal_scale: field(&m, "data.signal_scale")?,
            context_scale: field(&m, "data.context_scale")?,
            noise_scale: field(&m, "data.noise_scale")?,
            head_context_entropy: field(&m, "data.head_context_entropy")?,
            tail_context_entropy: field(&m, "data.tail_context_entropy")?,
        };
        forge.validate().map_err(|e| Error::Config(format!("data: {e}")))?;
        let bundle = BundleParams {
            n_max: field(&m, "data.n_max")?,
            imbalance: field(&m, "data.imbalance")?,
            noise_rate: field(&m, "data.noise_rate")?,
            blue_fraction: field(&m, "data.blue_fraction")?,
            test_per_class: field(&m, "data.test_per_class")?,
            seed,
        };
        check(bundle.n_max >= 1, "data.n_max", "must be >= 1")?;
        check(bundle.imbalance >= 1.0, "data.imbalance", "must be >= 1")?;
        check(
            (0.0..1.0).contains(&bundle.noise_rate),
            "data.noise_rate",
            "must lie in [0, 1)",
        )?;
        check(
            (0.0..=1.0).contains(&bundle.blue_fraction),
            "data.blue_fraction",
            "must lie in [0, 1]",
        )?;
        check(bundle.test_per_class >= 1, "data.test_per_class", "must be >= 1")?;

        let hidden = m["train.hidden"]
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config(format!("train.hidden: cannot parse {:?}", m["train.hidden"])))?;
        check(hidden.iter().all(|&h| h > 0), "train.hidden", "widths must be positive")?;
        let settings = TrainSettings {
            batch_size: field(&m, "train.batch_size")?,
            lr: field(&m, "train.lr")?,
            momentum: field(&m, "train.momentum")?,
            weight_decay: field(&m, "train.weight_decay")?,
            cosine: field(&m, "train.cosine")?,
        };
        check(settings.batch_size > 0, "train.batch_size", "must be positive")?;
        check(
            settings.lr > 0.0 && settings.lr.is_finite(),
            "train.lr",
            "must be positive",
        )?;
        check(
            (0.0..1.0).contains(&settings.momentum),
            "train.momentum",
            "must lie in [0, 1)",
        )?;
        check(
            settings.weight_decay >= 0.0,
            "train.weight_decay",
            "must be non-negative",
        )?;
        let irm = IrmConfig {
            lambda: field(&m, "train.lambda")?,
            lambda_warm_steps: field(&m, "train.lambda_warm_steps")?,
            epochs: field(&m, "train.irm_epochs")?,
            lr: field(&m, "train.irm_lr")?,
            momentum: settings.momentum,
            batch_size: settings.batch_size,
        };
        irm.validate()
            .map_err(|e| Error::Config(format!("train.lambda/irm_*: {e}")))?;
        let w_mode = WMode::parse(&m["train.w_mode"]).ok_or_else(|| {
            Error::Config(format!(
                "train.w_mode: expected vector or scalar, got {:?}",
                m["train.w_mode"]
            ))
        })?;

        let env_count: usize = field(&m, "env.count")?;
        let mut envs =
            EnvSpec::standard(env_count, forge.noise_scale).map_err(|e| Error::Config(format!("env.count: {e}")))?;
        let simple = AugmentTier::simple(field(&m, "env.simple_jitter")?)
            .map_err(|e| Error::Config(format!("env.simple_jitter: {e}")))?;
        let strong = AugmentTier::strong(
            field(&m, "env.strong_jitter")?,
            field(&m, "env.strong_dropout")?,
            (field(&m, "env.strong_scale_lo")?, field(&m, "env.strong_scale_hi")?),
        )
        .map_err(|e| Error::Config(format!("env.strong_*: {e}")))?;
        for (_, tier) in envs.layout.iter_mut() {
            match tier.kind() {
                AugmentKind::Simple => *tier = simple.clone(),
                AugmentKind::Strong => *tier = strong.clone(),
                AugmentKind::Off => {}
            }
        }

        let flag_budget = match m["eval.flag_budget"].as_str() {
            "true_noise" => FlagBudget::TrueNoise,
            other => FlagBudget::Count(other.parse().map_err(|_| {
                Error::Config(format!(
                    "eval.flag_budget: expected true_noise or a count, got {other:?}"
                ))
            })?),
        };
        let h2e = H2EConfig {
            hidden,
            settings,
            epochs: field(&m, "train.epochs")?,
            warmup_epochs: field(&m, "train.warmup_epochs")?,
            stage2_epochs: field(&m, "train.stage2_epochs")?,
            iterations: field(&m, "train.iterations")?,
            irm,
            w_mode,
            w_init: field(&m, "train.w_init")?,
            theta_floor: field(&m, "train.theta_floor")?,
            w_min: field(&m, "train.w_min")?,
            warmup_weights: field(&m, "train.warmup_weights")?,
            envs,
            drop_flagged: field(&m, "train.drop_flagged")?,
            flag_budget,
        };
        h2e.validate().map_err(|e| Error::Config(format!("train: {e}")))?;

        let mut baselines = Vec::new();
        for part in m["eval.baselines"].split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match Method::parse(part) {
                Some(Method::H2e) | None => {
                    return Err(Error::Config(format!(
                        "eval.baselines: unknown baseline {part:?} (ce, la, smallloss)"
                    )))
                }
                Some(b) if !baselines.contains(&b) => baselines.push(b),
                Some(_) => {}
            }
        }
        let smallloss_drop_rate: f64 = field(&m, "eval.smallloss_drop_rate")?;
        check(
            (0.0..1.0).contains(&smallloss_drop_rate),
            "eval.smallloss_drop_rate",
            "must lie in [0, 1)",
        )?;

        Ok(Self {
            seed,
            forge,
            bundle,
            h2e,
            baselines,
            smallloss_drop_rate,
            output_dir: PathBuf::from(&m["output.dir"]),
            resolved: m,
        })
    }

    /// Every key with its resolved value, sorted.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Methods to run: H2E plus the configured baselines.
    pub fn methods(&self) -> Vec<Method> {
        let mut v = vec![Method::H2e];
        v.extend(self.baselines.iter().copied());
        v
    }
}

/// Keys whose values differ between two resolved configs, restricted to
/// keys starting with `prefix`.
pub fn config_diff(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>, prefix: &str) -> Vec<String> {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| k.starts_with(prefix) && a.get(*k) != b.get(*k))
        .cloned()
        .collect()
}

/// Parses a config echo back into its key/value map without validation.
pub fn parse_echo(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
