//! Bundle files.
//!
//! A bundle directory holds `train.csv`, `test.csv` and a `meta.txt` sidecar
//! of `key=value` lines. The CSV header is
//! `sample_id,observed_label,clean_label,is_noise,noise_kind,context_id,f0,...,f{d-1}`,
//! optionally preceded by a `# classes=C` directive. Open-set clean labels are
//! written as `-1`. Files from elsewhere only need `f*` feature columns and a
//! `label` (or `observed_label`) column; missing columns take defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{BundleParams, DatasetBundle, NoiseKind, SampleRecord};
use crate::error::{Error, Result};

/// Paths written by [`write_bundle`].
#[derive(Debug, Clone)]
pub struct BundleFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub meta: PathBuf,
}

impl BundleFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train: dir.join("train.csv"),
            test: dir.join("test.csv"),
            meta: dir.join("meta.txt"),
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

pub fn write_csv(records: &[SampleRecord], classes: usize, dim: usize, path: &Path) -> Result<()> {
    let mut out = format!("# classes={classes}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header: Vec<String> = [
            "sample_id",
            "observed_label",
            "clean_label",
            "is_noise",
            "noise_kind",
            "context_id",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..dim).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for r in records {
            let mut row = vec![
                r.sample_id.to_string(),
                r.observed_label.to_string(),
                r.clean_label.map_or("-1".to_string(), |c| c.to_string()),
                u8::from(r.is_noise).to_string(),
                r.noise_kind.as_str().to_string(),
                r.context_id.to_string(),
            ];
            row.extend(r.features.iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Columns {
    sample_id: Option<usize>,
    label: usize,
    clean_label: Option<usize>,
    is_noise: Option<usize>,
    noise_kind: Option<usize>,
    context_id: Option<usize>,
    features: Vec<usize>,
}

fn columns(header: &csv::StringRecord, path: &Path, line: u64) -> Result<Columns> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let label = find("observed_label")
        .or_else(|| find("label"))
        .ok_or_else(|| err("header has no `observed_label` or `label` column".into()))?;
    let mut features: Vec<(usize, usize)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if let Some(idx) = name.strip_prefix('f').and_then(|s| s.parse::<usize>().ok()) {
            features.push((idx, col));
        }
    }
    features.sort_unstable();
    if features.is_empty() {
        return Err(err("header has no feature columns (f0, f1, ...)".into()));
    }
    for (expect, (idx, _)) in features.iter().enumerate() {
        if *idx != expect {
            return Err(err(format!("feature column f{expect} missing")));
        }
    }
    Ok(Columns {
        sample_id: find("sample_id"),
        label,
        clean_label: find("clean_label"),
        is_noise: find("is_noise"),
        noise_kind: find("noise_kind"),
        context_id: find("context_id"),
        features: features.into_iter().map(|(_, c)| c).collect(),
    })
}

/// Reads records from a CSV file. Labels are checked against `classes`, or
/// the `# classes=C` directive when present; otherwise the class count is
/// inferred. Returns the records, the class count and the feature dimension.
pub fn read_csv(path: &Path, classes: Option<usize>) -> Result<(Vec<SampleRecord>, usize, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut declared = classes;
    let mut body = text.as_str();
    let mut offset = 0u64;
    if let Some(first) = text.lines().next() {
        if let Some(directive) = first.trim().strip_prefix('#') {
            for kv in directive.split_whitespace() {
                if let Some(v) = kv.strip_prefix("classes=") {
                    let c = v.parse::<usize>().map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line: 1,
                        msg: format!("bad classes directive: {e}"),
                    })?;
                    declared = Some(c);
                }
            }
            body = &text[first.len()..];
            body = body
                .strip_prefix("\r\n")
                .or_else(|| body.strip_prefix('\n'))
                .unwrap_or(body);
            offset = 1;
        }
    }

    let shift = |e: Error| match e {
        Error::Parse { path, line, msg } => Error::Parse {
            path,
            line: line + offset,
            msg,
        },
        other => other,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| shift(csv_err(path, e)))?.clone();
    let cols = columns(&header, path, 1 + offset)?;
    let dim = cols.features.len();

    let mut records = Vec::new();
    let mut max_label = 0usize;
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| shift(csv_err(path, e)))?;
        let line = row.position().map_or(0, |p| p.line()) + offset;
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("row {}: {msg}", row_idx + 1),
        };
        let int = |col: usize, name: &str| -> Result<i64> {
            row[col]
                .trim()
                .parse::<i64>()
                .map_err(|e| err(format!("{name} `{}`: {e}", &row[col])))
        };
        let label = int(cols.label, "label")?;
        if label < 0 {
            return Err(err(format!("negative label {label}")));
        }
        let label = label as usize;
        if let Some(c) = declared {
            if label >= c {
                return Err(err(format!("label {label} outside declared {c} classes")));
            }
        }
        max_label = max_label.max(label);
        let features = cols
            .features
            .iter()
            .map(|&c| {
                row[c]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("non-numeric feature `{}`", &row[c])))
            })
            .collect::<Result<Vec<_>>>()?;
        let clean_label = match cols.clean_label {
            None => Some(label),
            Some(c) => match int(c, "clean_label")? {
                -1 => None,
                v if v >= 0 => Some(v as usize),
                v => return Err(err(format!("invalid clean_label {v}"))),
            },
        };
        let is_noise = match cols.is_noise {
            None => false,
            Some(c) => match row[c].trim() {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(err(format!("invalid is_noise `{other}`"))),
            },
        };
        let noise_kind = match cols.noise_kind {
            None => NoiseKind::None,
            Some(c) => {
                NoiseKind::parse(row[c].trim()).ok_or_else(|| err(format!("invalid noise_kind `{}`", &row[c])))?
            }
        };
        if is_noise != (noise_kind != NoiseKind::None) {
            return Err(err("is_noise disagrees with noise_kind".into()));
        }
        let sample_id = match cols.sample_id {
            None => row_idx,
            Some(c) => usize::try_from(int(c, "sample_id")?).map_err(|_| err("negative sample_id".into()))?,
        };
        let context_id = match cols.context_id {
            None => 0,
            Some(c) => usize::try_from(int(c, "context_id")?).map_err(|_| err("negative context_id".into()))?,
        };
        records.push(SampleRecord {
            sample_id,
            features,
            observed_label: label,
            clean_label,
            is_noise,
            noise_kind,
            context_id,
        });
    }
    let classes = declared.unwrap_or(if records.is_empty() { 0 } else { max_label + 1 });
    Ok((records, classes, dim))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Sidecar text: one `key=value` per line in a fixed order.
pub(crate) fn meta_text(bundle: &DatasetBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "classes={}", bundle.classes);
    let _ = writeln!(s, "dim={}", bundle.dim);
    if let Some(p) = &bundle.params {
        let _ = writeln!(s, "n_max={}", p.n_max);
        let _ = writeln!(s, "imbalance={}", p.imbalance);
        let _ = writeln!(s, "noise_rate={}", p.noise_rate);
        let _ = writeln!(s, "blue_fraction={}", p.blue_fraction);
        let _ = writeln!(s, "test_per_class={}", p.test_per_class);
        let _ = writeln!(s, "seed={}", p.seed);
    }
    let max = bundle.class_counts.iter().copied().max().unwrap_or(0);
    let min = bundle.class_counts.iter().copied().min().unwrap_or(0);
    let _ = writeln!(s, "class_counts={}", join(&bundle.class_counts));
    let _ = writeln!(s, "blue_counts={}", join(&bundle.injected_by_class(NoiseKind::Blue)));
    let _ = writeln!(s, "red_counts={}", join(&bundle.injected_by_class(NoiseKind::Red)));
    if min > 0 {
        let _ = writeln!(s, "max_min_ratio={}", max as f64 / min as f64);
    }
    let _ = writeln!(s, "train_size={}", bundle.train.len());
    let _ = writeln!(s, "test_size={}", bundle.test.len());
    s
}

pub fn write_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<BundleFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = BundleFiles::in_dir(dir);
    write_csv(&bundle.train, bundle.classes, bundle.dim, &files.train)?;
    write_csv(&bundle.test, bundle.classes, bundle.dim, &files.test)?;
    std::fs::write(&files.meta, meta_text(bundle)).map_err(|e| Error::io(&files.meta, e))?;
    Ok(files)
}

/// Parses a `key=value` file; blank lines and `#` comments are skipped.
pub(crate) fn parse_kv(text: &str, path: &Path) -> Result<BTreeMap<String, (u64, String)>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            msg: format!("expected key=value, found `{line}`"),
        })?;
        out.insert(k.trim().to_string(), (i as u64 + 1, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_bundle(dir: &Path) -> Result<DatasetBundle> {
    let files = BundleFiles::in_dir(dir);
    let text = std::fs::read_to_string(&files.meta).map_err(|e| Error::io(&files.meta, e))?;
    let meta = parse_kv(&text, &files.meta)?;
    let get = |k: &str| -> Result<&(u64, String)> {
        meta.get(k).ok_or_else(|| Error::Parse {
            path: files.meta.clone(),
            line: 0,
            msg: format!("missing key `{k}`"),
        })
    };
    fn num<T: std::str::FromStr>(path: &Path, entry: &(u64, String)) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        entry.1.parse::<T>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: entry.0,
            msg: e.to_string(),
        })
    }
    let classes: usize = num(&files.meta, get("classes")?)?;
    let dim: usize = num(&files.meta, get("dim")?)?;
    let params = if meta.contains_key("seed") {
        Some(BundleParams {
            n_max: num(&files.meta, get("n_max")?)?,
            imbalance: num(&files.meta, get("imbalance")?)?,
            noise_rate: num(&files.meta, get("noise_rate")?)?,
            blue_fraction: num(&files.meta, get("blue_fraction")?)?,
            test_per_class: num(&files.meta, get("test_per_class")?)?,
            seed: num(&files.meta, get("seed")?)?,
        })
    } else {
        None
    };
    let (train, _, train_dim) = read_csv(&files.train, Some(classes))?;
    let (test, _, test_dim) = read_csv(&files.test, Some(classes))?;
    if train_dim != dim || test_dim != dim {
        return Err(Error::Shape(format!(
            "sidecar declares dim {dim}, files have {train_dim} and {test_dim}"
        )));
    }
    DatasetBundle::from_parts(classes, dim, train, test, params)
}
