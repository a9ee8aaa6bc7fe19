//! End-to-end experiment runs and run-directory layout.
//!
//! ```text
//! <run>/config.echo          resolved configuration
//! <run>/log.txt              per-epoch losses, appended as training goes
//! <run>/density.csv          warm-up density weights
//! <run>/checkpoints/*.txt    stage0, stage1_<t>, stage2, and one per baseline
//! <run>/confidences/iter_<t>.csv
//! <run>/metrics.txt          method.metric.split=value lines
//! <run>/report.json
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport, SmallLossConfig};
use crate::nn::{checkpoint, Network};
use crate::pipeline::{run_h2e, RunDir};
use crate::rng;
use crate::synthdata::{build_bundle, DatasetBundle};

pub const REPORT_FILE: &str = "report.json";
pub const ECHO_FILE: &str = "config.echo";

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub noise_count: usize,
    pub class_counts: Vec<usize>,
    pub reports: Vec<MetricsReport>,
}

impl RunReport {
    pub fn method(&self, name: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.method == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(REPORT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }
}

/// Builds the configured bundle.
pub fn make_bundle(cfg: &ExperimentConfig) -> Result<DatasetBundle> {
    build_bundle(&cfg.forge, &cfg.bundle)
        .map(|(_, b)| b)
        .map_err(|e| e.in_stage("data"))
}

/// The shared initial network every method starts from.
pub fn initial_network(cfg: &ExperimentConfig, bundle: &DatasetBundle) -> Result<Network> {
    Network::mlp(
        bundle.dim,
        &cfg.h2e.hidden,
        bundle.classes,
        &mut rng::stream(cfg.seed, "init"),
    )
}

/// Runs `methods` on `bundle`; artifacts go to `out` when given.
pub fn run_on_bundle(
    cfg: &ExperimentConfig,
    bundle: &DatasetBundle,
    methods: &[Method],
    out: Option<&Path>,
) -> Result<RunReport> {
    let mut sink = match out {
        Some(dir) => {
            let sink = RunDir::create(dir)?;
            sink.write_file(ECHO_FILE, &cfg.echo())?;
            sink
        }
        None => RunDir::disabled(),
    };
    let seed = cfg.seed;
    let mut reports = Vec::new();

    if methods.contains(&Method::H2e) {
        log::info!("seed {seed}: h2e");
        reports.push(run_h2e(bundle, &cfg.h2e, seed, &mut sink)?.report);
    }

    let settings = &cfg.h2e.settings;
    if methods.contains(&Method::Ce) || methods.contains(&Method::La) {
        log::info!("seed {seed}: erm");
        let init = initial_network(cfg, bundle)?;
        let (net, ce) = eval::baseline_ce(
            bundle,
            init,
            cfg.h2e.epochs,
            settings,
            seed,
            &mut rng::stream(seed, "erm"),
        )
        .map_err(|e| e.in_stage("ce"))?;
        sink.checkpoint("erm", &net)?;
        if methods.contains(&Method::Ce) {
            reports.push(ce);
        }
        if methods.contains(&Method::La) {
            reports.push(eval::la_report(&net, bundle, seed).map_err(|e| e.in_stage("la"))?);
        }
    }

    if methods.contains(&Method::SmallLoss) {
        log::info!("seed {seed}: smallloss");
        let sl = SmallLossConfig {
            epochs: cfg.h2e.epochs,
            warmup_epochs: cfg.h2e.warmup_epochs,
            drop_rate: cfg.smallloss_drop_rate,
            flag_budget: cfg.h2e.flag_budget.resolve(bundle),
        };
        let init = initial_network(cfg, bundle)?;
        let (net, report) = eval::baseline_smallloss(bundle, init, &sl, settings, seed, &mut rng::stream(seed, "erm"))
            .map_err(|e| e.in_stage("smallloss"))?;
        sink.checkpoint("smallloss", &net)?;
        reports.push(report);
    }

    let report = RunReport {
        seed,
        train_size: bundle.train.len(),
        test_size: bundle.test.len(),
        noise_count: bundle.noise_count(),
        class_counts: bundle.class_counts.clone(),
        reports,
    };
    let metrics: String = report.reports.iter().map(|r| r.to_lines()).collect();
    sink.write_file("metrics.txt", &metrics)?;
    sink.write_file(REPORT_FILE, &report.to_json())?;
    Ok(report)
}

/// Builds the bundle and runs `methods`.
pub fn run_experiment(cfg: &ExperimentConfig, methods: &[Method], out: Option<&Path>) -> Result<RunReport> {
    let bundle = make_bundle(cfg)?;
    run_on_bundle(cfg, &bundle, methods, out)
}

/// Evaluates a saved checkpoint on the bundle's test set.
pub fn evaluate_checkpoint(
    path: &Path,
    bundle: &DatasetBundle,
    adjust_prior: bool,
    seed: u64,
) -> Result<MetricsReport> {
    let net = checkpoint::load(path)?;
    if net.feature_dim() != bundle.dim || net.class_count() != bundle.classes {
        return Err(Error::Shape(format!(
            "checkpoint maps {} -> {} but the bundle has dim {} and {} classes",
            net.feature_dim(),
            net.class_count(),
            bundle.dim,
            bundle.classes
        )));
    }
    if adjust_prior {
        eval::la_report(&net, bundle, seed)
    } else {
        eval::report_for("checkpoint", seed, &net, bundle, None)
    }
}
