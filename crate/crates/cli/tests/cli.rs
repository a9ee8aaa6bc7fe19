use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
data.classes = 4
data.dim = 8
data.contexts = 3
data.n_max = 60
data.imbalance = 6
data.test_per_class = 10
train.epochs = 8
train.warmup_epochs = 2
train.stage2_epochs = 2
train.irm_epochs = 2
train.hidden = 16
";

fn h2e(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2e"))
        .args(args)
        .env("H2E_LOG_LEVEL", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let overridden: Vec<&str> = extra
        .lines()
        .filter_map(|l| l.split('=').next())
        .map(str::trim)
        .collect();
    let base: String = SMALL
        .lines()
        .filter(|l| !overridden.contains(&l.split('=').next().unwrap().trim()))
        .map(|l| format!("{l}\n"))
        .collect();
    let p = dir.join(name);
    std::fs::write(&p, format!("{base}{extra}")).unwrap();
    p
}

fn train(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = h2e(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn bad_config_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "train.nonsense = 3\n");
    let o = h2e(&["train", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonsense"));

    let missing = tmp.path().join("missing.cfg");
    let o = h2e(&["generate", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(tmp.path(), "neg.cfg", "data.noise_rate = 1.5\n");
    let o = h2e(&["train", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dry_run_prints_schedule_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "a.cfg", "");
    let out = tmp.path().join("run");
    let o = h2e(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("config ok"), "{text}");
    assert!(text.contains("methods: h2e,ce,la,smallloss"), "{text}");
    assert!(!out.exists());
}

#[test]
fn generate_is_deterministic_and_sidecar_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "flat.cfg", "data.imbalance = 1\ndata.noise_rate = 0\n");
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        let o = h2e(&[
            "generate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.to_str().unwrap(),
            "--seed",
            "9",
        ]);
        assert!(o.status.success());
    }
    for f in ["train.csv", "test.csv", "meta.txt"] {
        assert_eq!(
            std::fs::read(dirs[0].join(f)).unwrap(),
            std::fs::read(dirs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let meta = std::fs::read_to_string(dirs[0].join("meta.txt")).unwrap();
    assert!(meta.lines().any(|l| l == "max_min_ratio=1"), "{meta}");
    assert!(meta.lines().any(|l| l == "blue_counts=0,0,0,0"), "{meta}");
    assert!(meta.lines().any(|l| l == "class_counts=60,60,60,60"), "{meta}");
}

#[test]
fn single_method_and_reproducible_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "a.cfg", "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = train(&cfg, &a, &["--method", "ce"]);
    train(&cfg, &b, &["--method", "ce"]);
    let report = std::fs::read_to_string(a.join("report.json")).unwrap();
    assert!(report.contains("\"ce\""));
    assert!(!report.contains("\"h2e\"") && !report.contains("\"smallloss\""));
    assert!(stdout(&o).contains("ce (seed 0)"));
    assert_eq!(report, std::fs::read_to_string(b.join("report.json")).unwrap());
    assert!(a.join("config.echo").exists());

    let o = h2e(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        a.join("checkpoints/erm.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn report_aggregates_seeds_and_warns_on_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "a.cfg", "");
    let other = write_config(tmp.path(), "b.cfg", "data.noise_rate = 0.1\n");
    let runs: Vec<PathBuf> = (0..3).map(|s| tmp.path().join(format!("s{s}"))).collect();
    for (s, d) in runs.iter().enumerate() {
        train(&cfg, d, &["--method", "la", "--seed", &s.to_string()]);
    }
    let odd = tmp.path().join("odd");
    train(&other, &odd, &["--method", "la"]);

    let one = h2e(&["report", runs[0].to_str().unwrap()]);
    assert!(one.status.success());
    let text = stdout(&one);
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(!text.contains("WARNING"));

    let csv = tmp.path().join("all.csv");
    let mut args = vec!["report"];
    args.extend(runs.iter().map(|d| d.to_str().unwrap()));
    args.extend(["--csv", csv.to_str().unwrap()]);
    let many = stdout(&h2e(&args));
    assert!(many.contains("la mean (n=3)"), "{many}");
    assert!(many.contains('±'));
    assert!(!many.contains("WARNING"));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    let mixed = stdout(&h2e(&["report", runs[0].to_str().unwrap(), odd.to_str().unwrap()]));
    assert!(
        mixed.contains("WARNING") && mixed.contains("data.noise_rate"),
        "{mixed}"
    );
}
