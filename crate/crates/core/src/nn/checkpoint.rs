//! Plain-text network checkpoints.
//!
//! ```text
//! h2e-checkpoint dims=4,8,3 activations=relu,identity
//! <layer 0: one line per output row, `in` values each>
//! <layer 0: one line of `out` biases>
//! <layer 1: ...>
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::network::{Activation, Dense, Network};
use crate::error::{Error, Result};

const MAGIC: &str = "h2e-checkpoint";

fn write_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").expect("write to string");
    }
    out.push('\n');
}

pub fn to_text(net: &Network) -> String {
    let dims: Vec<String> = net.dims().iter().map(ToString::to_string).collect();
    let acts: Vec<&str> = net.layers().iter().map(|l| l.activation().name()).collect();
    let mut out = format!("{MAGIC} dims={} activations={}\n", dims.join(","), acts.join(","));
    for layer in net.layers() {
        for row in layer.weight().chunks_exact(layer.in_dim()) {
            write_row(&mut out, row);
        }
        write_row(&mut out, layer.bias());
    }
    out
}

pub fn from_text(text: &str, origin: &Path) -> Result<Network> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line: line as u64,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty checkpoint".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(parse_err(1, format!("expected `{MAGIC}` header")));
    }
    let mut dims = None;
    let mut acts = None;
    for field in fields {
        match field.split_once('=') {
            Some(("dims", v)) => {
                dims = Some(
                    v.split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(1, format!("bad dims: {e}")))?,
                )
            }
            Some(("activations", v)) => {
                acts = Some(
                    v.split(',')
                        .map(|a| Activation::parse(a).ok_or_else(|| parse_err(1, format!("unknown activation `{a}`"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(parse_err(1, format!("unexpected header field `{field}`"))),
        }
    }
    let dims = dims.ok_or_else(|| parse_err(1, "missing dims".into()))?;
    let acts = acts.ok_or_else(|| parse_err(1, "missing activations".into()))?;
    if dims.len() < 2 || acts.len() != dims.len() - 1 {
        return Err(parse_err(1, "dims and activations disagree".into()));
    }

    let mut read_row = |want: usize| -> Result<Vec<f64>> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "truncated checkpoint".into()))?;
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(n, format!("bad value: {e}")))?;
        if row.len() != want {
            return Err(parse_err(n, format!("expected {want} values, found {}", row.len())));
        }
        Ok(row)
    };

    let mut layers = Vec::with_capacity(acts.len());
    for (w, &act) in dims.windows(2).zip(&acts) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut weight = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_out {
            weight.extend(read_row(fan_in)?);
        }
        let bias = read_row(fan_out)?;
        layers.push(Dense::new(fan_in, fan_out, act, weight, bias)?);
    }
    Network::from_layers(layers)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}
