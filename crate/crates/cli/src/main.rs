//! `h2e` command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use h2e::config::{config_diff, parse_echo, ExperimentConfig, Method};
use h2e::eval::{MetricsReport, SplitValues};
use h2e::run::{self, RunReport};
use h2e::synthdata::{self, NoiseKind};
use h2e::Error;

#[derive(Parser)]
#[command(name = "h2e", version, about = "Noisy long-tailed classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the synthetic bundle and write CSV files plus a sidecar.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: <output.dir>/data).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train H2E and the configured baselines.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory (default: output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this method.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        /// Validate the config and print the stage schedule.
        #[arg(long)]
        dry_run: bool,
    },
    /// Evaluate a checkpoint on the configured bundle's test split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Read the bundle from a `generate` directory instead of rebuilding it.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Subtract the log prior from logits before the argmax.
        #[arg(long)]
        adjust: bool,
        /// Also write `metrics.txt` lines here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare reports from one or more run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method {s:?} (h2e, ce, la, smallloss)"))
}

enum Failure {
    Config(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Run(other),
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Failure::Config(e.to_string()),
            other => other.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_override("seed", &s.to_string())?,
        None => cfg,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("H2E_LOG_LEVEL", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, out, seed } => cmd_generate(config.as_deref(), out, seed),
        Command::Train {
            config,
            out,
            seed,
            method,
            dry_run,
        } => cmd_train(config.as_deref(), out, seed, method, dry_run),
        Command::Eval {
            config,
            checkpoint,
            data,
            seed,
            adjust,
            out,
        } => cmd_eval(
            config.as_deref(),
            &checkpoint,
            data.as_deref(),
            seed,
            adjust,
            out.as_deref(),
        ),
        Command::Report { runs, csv } => cmd_report(&runs, csv.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: invalid config: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_generate(config: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let bundle = run::make_bundle(&cfg)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.join("data"));
    std::fs::create_dir_all(&dir).map_err(|e| {
        Failure::Run(Error::Io {
            path: dir.clone(),
            source: e,
        })
    })?;
    let files = synthdata::write_bundle(&bundle, &dir)?;
    let blue = bundle.injected_by_class(NoiseKind::Blue);
    let red = bundle.noise_by_class(NoiseKind::Red);
    println!(
        "{:>5} {:>7} {:>6} {:>6} {:>7}",
        "class", "count", "blue", "red", "noise%"
    );
    for c in 0..bundle.classes {
        let n = bundle.class_counts[c];
        let rate = if n > 0 {
            100.0 * (blue[c] + red[c]) as f64 / n as f64
        } else {
            0.0
        };
        println!("{c:>5} {n:>7} {:>6} {:>6} {rate:>7.2}", blue[c], red[c]);
    }
    let total = bundle.train.len();
    println!(
        "train {total}, test {}, noisy {} ({:.2}%)",
        bundle.test.len(),
        bundle.noise_count(),
        100.0 * bundle.noise_count() as f64 / total.max(1) as f64
    );
    println!(
        "wrote {} {} {}",
        files.train.display(),
        files.test.display(),
        files.meta.display()
    );
    Ok(())
}

fn cmd_train(
    config: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    method: Option<Method>,
    dry_run: bool,
) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let methods = match method {
        Some(m) => vec![m],
        None => cfg.methods(),
    };
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    if dry_run {
        let counts = synthdata::longtail_counts(cfg.forge.classes, cfg.bundle.n_max, cfg.bundle.imbalance)?;
        let n: usize = counts.iter().sum();
        println!("config ok; seed {}; train size {n}", cfg.seed);
        println!(
            "methods: {}",
            methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
        );
        print!("{}", cfg.h2e.describe(n));
        println!("run directory: {}", dir.display());
        return Ok(());
    }
    let report = run::run_experiment(&cfg, &methods, Some(&dir))?;
    print!("{}", table(&[(dir.clone(), report)]));
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_eval(
    config: Option<&Path>,
    checkpoint: &Path,
    data: Option<&Path>,
    seed: Option<u64>,
    adjust: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let bundle = match data {
        Some(d) => synthdata::read_bundle(d)?,
        None => run::make_bundle(&cfg)?,
    };
    let report = run::evaluate_checkpoint(checkpoint, &bundle, adjust, cfg.seed)?;
    let lines = report.to_lines();
    print!("{lines}");
    if let Some(o) = out {
        std::fs::write(o, lines).map_err(|e| {
            Failure::Run(Error::Io {
                path: o.to_path_buf(),
                source: e,
            })
        })?;
    }
    Ok(())
}

const COLUMNS: [&str; 7] = ["top1", "many", "medium", "few", "prec", "prec_few", "recall"];

fn row_values(r: &MetricsReport) -> [Option<f64>; 7] {
    let pct = |v: Option<f64>| v.map(|x| 100.0 * x);
    let SplitValues {
        overall,
        many,
        medium,
        few,
    } = r.top1;
    [
        pct(overall),
        pct(many),
        pct(medium),
        pct(few),
        pct(r.noise_precision.overall),
        pct(r.noise_precision.few),
        pct(r.noise_recall.overall),
    ]
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Aligned methods × metrics table, with mean ± std rows when a method
/// appears in several runs.
fn table(runs: &[(PathBuf, RunReport)]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let mut by_method: BTreeMap<String, Vec<[Option<f64>; 7]>> = BTreeMap::new();
    for (_, rep) in runs {
        for r in &rep.reports {
            let vals = row_values(r);
            rows.push((
                format!("{} (seed {})", r.method, rep.seed),
                vals.iter().map(|v| fmt_cell(*v)).collect(),
            ));
            by_method.entry(r.method.clone()).or_default().push(vals);
        }
    }
    for (method, all) in &by_method {
        if all.len() < 2 {
            continue;
        }
        let cells = (0..COLUMNS.len())
            .map(|c| {
                let xs: Vec<f64> = all.iter().filter_map(|v| v[c]).collect();
                if xs.is_empty() {
                    "-".into()
                } else {
                    let (m, s) = mean_std(&xs);
                    format!("{m:.2}±{s:.2}")
                }
            })
            .collect();
        rows.push((format!("{method} mean (n={})", all.len()), cells));
    }
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| {
            rows.iter()
                .map(|r| r.1[c].chars().count())
                .max()
                .unwrap_or(0)
                .max(COLUMNS[c].len())
        })
        .collect();
    let mut s = format!("{:<w0$}", "method");
    for (c, w) in COLUMNS.iter().zip(&widths) {
        s += &format!("  {c:>w$}");
    }
    s.push('\n');
    for (name, cells) in &rows {
        s += &format!("{name:<w0$}");
        for (cell, w) in cells.iter().zip(&widths) {
            s += &format!("  {cell:>w$}", w = *w);
        }
        s.push('\n');
    }
    s
}

fn to_csv(runs: &[(PathBuf, RunReport)]) -> String {
    let mut s = format!("run,method,seed,{}\n", COLUMNS.join(","));
    for (dir, rep) in runs {
        for r in &rep.reports {
            let cells: Vec<String> = row_values(r)
                .iter()
                .map(|v| v.map_or_else(String::new, |x| format!("{x:.6}")))
                .collect();
            s += &format!("{},{},{},{}\n", dir.display(), r.method, rep.seed, cells.join(","));
        }
    }
    s
}

fn cmd_report(dirs: &[PathBuf], csv: Option<&Path>) -> Result<(), Failure> {
    let mut runs = Vec::new();
    let mut echoes = Vec::new();
    for d in dirs {
        match RunReport::load(d) {
            Ok(r) => {
                let echo = std::fs::read_to_string(d.join(run::ECHO_FILE))
                    .map(|t| parse_echo(&t))
                    .unwrap_or_default();
                echoes.push((d.clone(), echo));
                runs.push((d.clone(), r));
            }
            Err(e) => log::warn!("skipping {}: {e}", d.display()),
        }
    }
    if runs.is_empty() {
        return Err(Failure::Run(Error::State(
            "no readable reports in the given directories".into(),
        )));
    }
    if let Some((first_dir, first)) = echoes.first() {
        for (dir, echo) in &echoes[1..] {
            let diff = config_diff(first, echo, "data.");
            if !diff.is_empty() {
                println!(
                    "WARNING: {} and {} were built from different bundles; differing keys: {}",
                    first_dir.display(),
                    dir.display(),
                    diff.join(", ")
                );
            }
        }
    }
    print!("{}", table(&runs));
    if let Some(p) = csv {
        std::fs::write(p, to_csv(&runs)).map_err(|e| {
            Failure::Run(Error::Io {
                path: p.to_path_buf(),
                source: e,
            })
        })?;
    }
    Ok(())
}
