//! Plain-text formats: matrix CSV, model files, curve CSV and key=value reports.
//!
//! Every float is written with 17 significant digits, so files round-trip
//! bitwise and identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use randman_core::geometry::DiscreteCurve;
use randman_core::kernels::KernelSpec;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn push_rows(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(r, c)]));
        }
        out.push('\n');
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    push_rows(&mut out, m);
    out
}

fn parse_rows<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> CliResult<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .enumerate()
            .map(|(i, f)| {
                f.trim().parse::<f64>().map_err(|_| {
                    CliError::input(format!(
                        "{what}: line {}, field {}: cannot parse '{}' as a number",
                        lineno + 1,
                        i + 1,
                        f.trim()
                    ))
                })
            })
            .collect::<CliResult<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::input(format!(
                    "{what}: line {} has {} fields, expected {c}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::input(format!("{what}: no data rows")))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn matrix_from_csv(text: &str, what: &str) -> CliResult<DMatrix<f64>> {
    parse_rows(text.lines().enumerate(), what)
}

pub fn read_matrix_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    matrix_from_csv(&read_text(path)?, &path.display().to_string())
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    write_text(path, &matrix_to_csv(m))
}

/// Kernel, noise, latents and data of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: KernelSpec,
    pub noise: f64,
    /// d × N, one latent point per column.
    pub latents: DMatrix<f64>,
    /// m × N, one observation per column.
    pub data: DMatrix<f64>,
}

impl Model {
    /// Header of `key=value` lines, then an `[X]` block with one latent
    /// point per row and a `[Y]` block with one ambient dimension per row.
    /// Lines starting with `#` are comments.
    pub fn to_text(&self, comments: &[(String, String)]) -> String {
        let mut out = String::from("# randman model\n");
        for (k, v) in comments {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "family={}", self.spec.name());
        if let KernelSpec::Rbf {
            variance,
            length_scale,
        } = self.spec
        {
            let _ = writeln!(out, "variance={}", fmt_f64(variance));
            let _ = writeln!(out, "length_scale={}", fmt_f64(length_scale));
        }
        let _ = writeln!(out, "noise={}", fmt_f64(self.noise));
        let _ = writeln!(out, "d={}", self.latents.nrows());
        let _ = writeln!(out, "N={}", self.latents.ncols());
        let _ = writeln!(out, "m={}", self.data.nrows());
        out.push_str("[X]\n");
        push_rows(&mut out, &self.latents.transpose());
        out.push_str("[Y]\n");
        push_rows(&mut out, &self.data);
        out
    }

    pub fn from_text(text: &str, what: &str) -> CliResult<Self> {
        let err = |msg: String| CliError::input(format!("{what}: {msg}"));
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .collect();
        let x_at = lines
            .iter()
            .position(|(_, l)| l.trim() == "[X]")
            .ok_or_else(|| err("missing [X] block".into()))?;
        let y_at = lines
            .iter()
            .position(|(_, l)| l.trim() == "[Y]")
            .ok_or_else(|| err("missing [Y] block".into()))?;
        if y_at < x_at {
            return Err(err("[Y] block must follow [X]".into()));
        }
        let mut header = std::collections::BTreeMap::new();
        for &(i, line) in &lines[..x_at] {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected key=value", i + 1)))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| err(format!("missing header key '{k}'")))
        };
        let num = |k: &str| -> CliResult<f64> {
            get(k)?
                .parse()
                .map_err(|_| err(format!("header key '{k}' is not a number")))
        };
        let int = |k: &str| -> CliResult<usize> {
            get(k)?
                .parse()
                .map_err(|_| err(format!("header key '{k}' is not a nonnegative integer")))
        };
        let spec = match get("family")?.as_str() {
            "rbf" => KernelSpec::rbf(num("variance")?, num("length_scale")?)?,
            "linear" => KernelSpec::Linear,
            other => return Err(err(format!("unknown kernel family '{other}'"))),
        };
        let noise = num("noise")?;
        let (d, n, m) = (int("d")?, int("N")?, int("m")?);
        let xt = parse_rows(lines[x_at + 1..y_at].iter().copied(), what)?;
        let data = parse_rows(lines[y_at + 1..].iter().copied(), what)?;
        if xt.shape() != (n, d) {
            return Err(err(format!(
                "[X] block is {}x{}, header says {n}x{d}",
                xt.nrows(),
                xt.ncols()
            )));
        }
        if data.shape() != (m, n) {
            return Err(err(format!(
                "[Y] block is {}x{}, header says {m}x{n}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Model {
            spec,
            noise,
            latents: xt.transpose(),
            data,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Model::from_text(&read_text(path)?, &path.display().to_string())
    }
}

/// Header `t,z1,…,zd`, one node per row.
pub fn curve_to_csv(params: &[f64], points: &DMatrix<f64>) -> String {
    let d = points.nrows();
    let mut out = String::from("t");
    for i in 1..=d {
        let _ = write!(out, ",z{i}");
    }
    out.push('\n');
    for (k, t) in params.iter().enumerate() {
        out.push_str(&fmt_f64(*t));
        for a in 0..d {
            out.push(',');
            out.push_str(&fmt_f64(points[(a, k)]));
        }
        out.push('\n');
    }
    out
}

pub fn curve_from_csv(text: &str, what: &str) -> CliResult<DiscreteCurve> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim())
        .ok_or_else(|| CliError::input(format!("{what}: empty curve file")))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    let well_formed = fields.first() == Some(&"t")
        && fields.len() >= 2
        && fields[1..]
            .iter()
            .enumerate()
            .all(|(i, f)| *f == format!("z{}", i + 1));
    if !well_formed {
        return Err(CliError::input(format!(
            "{what}: header must be t,z1,...,zd"
        )));
    }
    let rows = parse_rows(lines, what)?;
    if rows.ncols() != fields.len() {
        return Err(CliError::input(format!(
            "{what}: rows have {} fields, header has {}",
            rows.ncols(),
            fields.len()
        )));
    }
    let params = rows.column(0).iter().copied().collect();
    let points = rows.columns(1, rows.ncols() - 1).transpose();
    Ok(DiscreteCurve::new(params, points)?)
}

/// `key=value` lines in the given order.
pub fn key_values(entries: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}
