//! JSON spec files and CSV emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};
use crate::model::{
    DelayTerm, HistoryFunction, KernelPiece, PiecewiseKernel, SystemKind, SystemSpec, Trajectory,
};
use crate::report::NormSeries;
use crate::spectrum::SpectrumReport;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    kind: SystemKind,
    dimension: usize,
    tau_star: f64,
    #[serde(default)]
    delay_terms: Vec<DelayTermFile>,
    #[serde(default)]
    kernel: Vec<KernelPieceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    history: Option<HistoryFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelayTermFile {
    tau: f64,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelPieceFile {
    interval: [f64; 2],
    coeffs: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryFile {
    step: f64,
    values: Vec<Vec<f64>>,
}

/// Contents of a spec file: the system plus optional initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemFile {
    pub spec: SystemSpec,
    pub history: Option<HistoryFunction>,
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, field: &str) -> Result<RMat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Input(format!("{field}: expected a {n}x{n} matrix")));
    }
    Ok(RMat::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parses and validates a spec document.
pub fn parse_system(text: &str) -> Result<SystemFile> {
    let file: SpecFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let n = file.dimension;
    let delay_terms = file
        .delay_terms
        .iter()
        .enumerate()
        .map(|(k, d)| {
            Ok(DelayTerm {
                tau: d.tau,
                matrix: matrix_from_rows(&d.a, n, &format!("delay_terms[{k}].A"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pieces = file
        .kernel
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let coeffs = p
                .coeffs
                .iter()
                .enumerate()
                .map(|(m, c)| matrix_from_rows(c, n, &format!("kernel[{i}].coeffs[{m}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(KernelPiece {
                start: p.interval[0],
                end: p.interval[1],
                coeffs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = SystemSpec {
        kind: file.kind,
        dimension: n,
        tau_star: file.tau_star,
        delay_terms,
        kernel: PiecewiseKernel { pieces },
    };
    spec.validate()?;

    let x0 = match &file.x0 {
        Some(v) if v.len() != n => {
            return Err(Error::Input(format!("x0: expected {n} entries")));
        }
        Some(v) => Some(RVec::from_vec(v.clone())),
        None => None,
    };
    let history = match file.history {
        Some(h) => {
            if h.values.iter().any(|v| v.len() != n) {
                return Err(Error::Input(format!(
                    "history.values: every sample needs {n} entries"
                )));
            }
            let hist = HistoryFunction {
                step: h.step,
                samples: h.values.into_iter().map(RVec::from_vec).collect(),
                x0: x0.clone(),
            };
            Some(hist)
        }
        None => None,
    };
    Ok(SystemFile { spec, history })
}

pub fn load_system(path: &Path) -> Result<SystemFile> {
    let text = std::fs::read_to_string(path)?;
    parse_system(&text)
}

/// Canonical JSON form; `to_json(parse_system(to_json(f)))` is byte-identical.
pub fn to_json(file: &SystemFile) -> String {
    let spec = &file.spec;
    let doc = SpecFile {
        kind: spec.kind,
        dimension: spec.dimension,
        tau_star: spec.tau_star,
        delay_terms: spec
            .delay_terms
            .iter()
            .map(|d| DelayTermFile {
                tau: d.tau,
                a: matrix_to_rows(&d.matrix),
            })
            .collect(),
        kernel: spec
            .kernel
            .pieces
            .iter()
            .map(|p| KernelPieceFile {
                interval: [p.start, p.end],
                coeffs: p.coeffs.iter().map(matrix_to_rows).collect(),
            })
            .collect(),
        history: file.history.as_ref().map(|h| HistoryFile {
            step: h.step,
            values: h.samples.iter().map(|v| v.iter().copied().collect()).collect(),
        }),
        x0: file
            .history
            .as_ref()
            .and_then(|h| h.x0.as_ref())
            .map(|v| v.iter().copied().collect()),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("spec serializes");
    s.push('\n');
    s
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros dropped.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if (-5..17).contains(&exp) {
        let (int_part, frac_part) = if exp >= 0 {
            let k = exp as usize + 1;
            (digits[..k].to_string(), digits[k..].to_string())
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            ("0".to_string(), format!("{zeros}{digits}"))
        };
        let frac = frac_part.trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    } else {
        let frac = digits[1..].trim_end_matches('0');
        let lead = &digits[..1];
        if frac.is_empty() {
            format!("{sign}{lead}e{exp}")
        } else {
            format!("{sign}{lead}.{frac}e{exp}")
        }
    }
}

/// `re,im,residual,cluster_count`, ordered by real part descending, then imaginary ascending.
pub fn spectrum_csv(report: &SpectrumReport) -> String {
    let mut roots: Vec<_> = report.roots.iter().collect();
    roots.sort_by(|a, b| {
        b.z.re
            .total_cmp(&a.z.re)
            .then(a.z.im.total_cmp(&b.z.im))
    });
    let mut out = String::from("re,im,residual,cluster_count\n");
    for r in roots {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt17(r.z.re),
            fmt17(r.z.im),
            fmt17(r.residual),
            r.cluster_count
        );
    }
    out
}

/// `t,x1,...,xn` for vector trajectories, `t,r11,...,rnn` (row-major) for matrix ones.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let first = traj.values.first();
    let (rows, cols) = first.map(|m| m.shape()).unwrap_or((0, 0));
    let mut out = String::from("t");
    if cols == 1 {
        for i in 1..=rows {
            let _ = write!(out, ",x{i}");
        }
    } else {
        for i in 1..=rows {
            for j in 1..=cols {
                let _ = write!(out, ",r{i}{j}");
            }
        }
    }
    out.push('\n');
    for (i, v) in traj.values.iter().enumerate() {
        out.push_str(&fmt17(traj.time(i)));
        for r in 0..rows {
            for c in 0..cols {
                out.push(',');
                out.push_str(&fmt17(v[(r, c)]));
            }
        }
        out.push('\n');
    }
    out
}

/// `t,norm` (plus `point` = `|X(t)|` for DDE series).
pub fn norms_csv(series: &NormSeries) -> String {
    let mut out = String::from(if series.pointwise.is_some() {
        "t,norm,point\n"
    } else {
        "t,norm\n"
    });
    for (i, (t, v)) in series.times.iter().zip(&series.values).enumerate() {
        out.push_str(&fmt17(*t));
        out.push(',');
        out.push_str(&fmt17(*v));
        if let Some(p) = &series.pointwise {
            out.push(',');
            out.push_str(&fmt17(p[i]));
        }
        out.push('\n');
    }
    out
}
