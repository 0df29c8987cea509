//! State-space norms of partial trajectories, decay fits and the criterion verdict.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};
use crate::model::{HistoryFunction, SystemKind, SystemSpec, Trajectory};
use crate::par_map;
use crate::spectrum::{default_window, find_roots, Rect, SpectrumReport, ROOT_RESIDUAL_TOL};
use crate::timedomain::{build_modal_history, default_horizon, default_step, simulate};

/// Half-width of the marginal band around a zero abscissa.
pub const TOL_MARG: f64 = 1e-4;

/// Most grid steps a default horizon may take.
pub const MAX_DEFAULT_STEPS: f64 = 250_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `L^p` with `1 <= p < inf`
    Lp(f64),
    Linf,
    /// `B^inf`: sup over samples
    Sup,
    /// total variation plus sup
    Bv,
}

impl NormKind {
    pub fn label(&self) -> String {
        match self {
            NormKind::Lp(p) if *p == 1.0 => "l1".into(),
            NormKind::Lp(p) if *p == 2.0 => "l2".into(),
            NormKind::Lp(p) => format!("l{p}"),
            NormKind::Linf => "linf".into(),
            NormKind::Sup => "sup".into(),
            NormKind::Bv => "bv".into(),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(NormKind::Lp(1.0)),
            "l2" => Ok(NormKind::Lp(2.0)),
            "linf" => Ok(NormKind::Linf),
            "sup" => Ok(NormKind::Sup),
            "bv" => Ok(NormKind::Bv),
            _ => {
                let p = s
                    .strip_prefix('l')
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::Input(format!("unknown norm '{s}'")))?;
                if p.is_infinite() {
                    Ok(NormKind::Linf)
                } else if p >= 1.0 {
                    Ok(NormKind::Lp(p))
                } else {
                    Err(Error::Domain(format!("L^p needs p >= 1, got {p}")))
                }
            }
        }
    }
}

impl Serialize for NormKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for NormKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `|X(s)|`: Euclidean norm for vectors, operator norm for matrices.
fn point_norm(m: &RMat) -> f64 {
    if m.ncols() == 1 {
        m.norm()
    } else {
        crate::linalg::op_norm(m)
    }
}

/// Samples of `X` on `[t - tau_star, t]`.
pub fn partial_trajectory(traj: &Trajectory, t: f64, tau_star: f64) -> Result<Vec<RMat>> {
    let k = traj
        .grid_index(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not on the grid of step {}", traj.step)))?;
    if t < 0.0 {
        return Err(Error::Domain(format!("t = {t} must be nonnegative")));
    }
    let cells = traj
        .grid_index(tau_star)
        .ok_or_else(|| Error::Domain(format!("tau_star = {tau_star} is not on the grid")))?;
    (k - cells..=k)
        .map(|i| {
            traj.at(i).cloned().ok_or_else(|| {
                Error::Domain(format!("window [{}, {t}] leaves the trajectory", t - tau_star))
            })
        })
        .collect()
}

/// Norm of a window of samples with spacing `h`.
pub fn window_norm(window: &[RMat], kind: NormKind, h: f64) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Domain("empty window".into()));
    }
    let pts: Vec<f64> = window.iter().map(point_norm).collect();
    let sup = pts.iter().copied().fold(0.0, f64::max);
    Ok(match kind {
        NormKind::Lp(p) => {
            if !(p >= 1.0) {
                return Err(Error::Domain(format!("L^p needs p >= 1, got {p}")));
            }
            if pts.len() == 1 {
                return Ok(0.0);
            }
            let last = pts.len() - 1;
            let s: f64 = pts
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let w = if i == 0 || i == last { 0.5 * h } else { h };
                    w * v.powf(p)
                })
                .sum();
            s.powf(1.0 / p)
        }
        NormKind::Linf | NormKind::Sup => sup,
        NormKind::Bv => {
            let tv: f64 = window.windows(2).map(|w| point_norm(&(&w[1] - &w[0]))).sum();
            tv + sup
        }
    })
}

/// `op` over every length-`w` window of `v`, via block prefix/suffix scans
/// (no differences of running totals).
fn sliding(v: &[f64], w: usize, op: fn(f64, f64) -> f64, unit: f64) -> Vec<f64> {
    let len = v.len();
    if w == 0 || w > len {
        return Vec::new();
    }
    let mut prefix = vec![unit; len];
    let mut suffix = vec![unit; len];
    for i in 0..len {
        prefix[i] = if i % w == 0 { v[i] } else { op(prefix[i - 1], v[i]) };
    }
    for i in (0..len).rev() {
        suffix[i] = if i % w == w - 1 || i == len - 1 { v[i] } else { op(suffix[i + 1], v[i]) };
    }
    (0..=len - w)
        .map(|a| if a % w == 0 { suffix[a] } else { op(suffix[a], prefix[a + w - 1]) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries {
    pub norm_kind: NormKind,
    pub tau_star: f64,
    /// grid times `t >= 0`
    pub times: Vec<f64>,
    /// `||X_t||_V`
    pub values: Vec<f64>,
    /// `|X(t)|`, for DDEs
    pub pointwise: Option<Vec<f64>>,
}

impl NormSeries {
    /// `||X_t|| + |X(t)|` when pointwise values are present, `||X_t||` otherwise.
    pub fn combined(&self) -> Vec<f64> {
        match &self.pointwise {
            Some(p) => self.values.iter().zip(p).map(|(a, b)| a + b).collect(),
            None => self.values.clone(),
        }
    }
}

/// `||X_t||_V` at every grid time `t in [0, T]` of a trajectory covering `[-tau_star, T]`.
pub fn norm_series(traj: &Trajectory, kind: NormKind, tau_star: f64, pointwise: bool) -> Result<NormSeries> {
    let h = traj.step;
    let cells = traj
        .grid_index(tau_star)
        .ok_or_else(|| Error::Domain(format!("tau_star = {tau_star} is not on the grid")))?
        as usize;
    if traj.start_index > -(cells as i64) {
        return Err(Error::Domain("trajectory does not cover [-tau_star, 0]".into()));
    }
    let offset = (-(cells as i64) - traj.start_index) as usize;
    let vals = &traj.values[offset..];
    if vals.len() <= cells {
        return Err(Error::Domain("trajectory ends before t = 0".into()));
    }
    let pts: Vec<f64> = vals.iter().map(point_norm).collect();
    let w = cells + 1;
    let count = vals.len() - cells;
    let values: Vec<f64> = match kind {
        NormKind::Lp(p) => {
            if !(p >= 1.0) {
                return Err(Error::Domain(format!("L^p needs p >= 1, got {p}")));
            }
            let pw: Vec<f64> = pts.iter().map(|v| v.powf(p)).collect();
            let sums = sliding(&pw, w, |a, b| a + b, 0.0);
            sums.iter()
                .enumerate()
                .map(|(a, s)| {
                    let ends = if cells == 0 { 0.0 } else { 0.5 * (pw[a] + pw[a + cells]) };
                    (h * (s - ends)).max(0.0).powf(1.0 / p)
                })
                .collect()
        }
        NormKind::Linf | NormKind::Sup => sliding(&pts, w, f64::max, 0.0),
        NormKind::Bv => {
            let sup = sliding(&pts, w, f64::max, 0.0);
            if cells == 0 {
                sup
            } else {
                let jumps: Vec<f64> = vals.windows(2).map(|p| point_norm(&(&p[1] - &p[0]))).collect();
                let tv = sliding(&jumps, cells, |a, b| a + b, 0.0);
                sup.iter().zip(&tv).map(|(s, t)| s + t).collect()
            }
        }
    };
    debug_assert_eq!(values.len(), count);
    let times = (0..count).map(|j| j as f64 * h).collect();
    let pointwise = pointwise.then(|| pts[cells..].to_vec());
    Ok(NormSeries {
        norm_kind: kind,
        tau_star,
        times,
        values,
        pointwise,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub nu_hat: f64,
    pub c_hat: f64,
    pub note: Option<String>,
}

fn fit_envelope(times: &[f64], values: &[f64], tau_star: f64, fit_start: f64) -> Result<DecayFit> {
    let Some(&last) = times.last() else {
        return Err(Error::Domain("empty series".into()));
    };
    let eps = 1e-9 * tau_star;
    let first = (fit_start / tau_star - 1e-9).ceil().max(0.0) as usize;
    let windows = ((last + eps) / tau_star).floor() as usize;
    if windows < first + 3 {
        return Err(Error::Domain(format!(
            "need at least 3 windows of length {tau_star} after t = {fit_start}, series ends at {last}"
        )));
    }
    let mut env = vec![0.0_f64; windows - first];
    for (t, v) in times.iter().zip(values) {
        let w = ((t + eps) / tau_star).floor() as usize;
        if w >= first && w < windows {
            env[w - first] = env[w - first].max(*v);
        }
    }
    let x0 = values[0];
    if env.iter().any(|&m| m == 0.0) {
        return Ok(DecayFit {
            nu_hat: f64::INFINITY,
            c_hat: 1.0,
            note: Some("envelope reaches exact zero; decay rate reported as infinite".into()),
        });
    }
    let xs: Vec<f64> = (0..env.len()).map(|i| (first + i) as f64 * tau_star + 0.5 * tau_star).collect();
    let ys: Vec<f64> = env.iter().map(|m| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let scale = if x0 > 0.0 { (1.0 / x0).max(1.0) } else { 1.0 };
    let c_hat = (intercept.exp() * scale).max(1.0);
    Ok(DecayFit {
        nu_hat: -slope,
        c_hat,
        note: None,
    })
}

/// Least-squares fit of `log` of the per-window envelope against window midpoints.
pub fn fit_decay(series: &NormSeries, fit_start: f64) -> Result<DecayFit> {
    fit_envelope(&series.times, &series.values, series.tau_star, fit_start)
}

/// Same fit on `||X_t|| + |X(t)|`.
pub fn fit_decay_combined(series: &NormSeries, fit_start: f64) -> Result<DecayFit> {
    fit_envelope(&series.times, &series.combined(), series.tau_star, fit_start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
    Inconsistent,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
            Verdict::Inconsistent => "inconsistent",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFit {
    pub history_id: String,
    pub nu_hat: f64,
    pub c_hat: f64,
    pub series: NormSeries,
    pub note: Option<String>,
}

/// `sup_t q(t) e^{nu t} / q(0)` for the fitted quantity `q`; `bounded` when
/// the last window does not set a new maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginCheck {
    pub nu: f64,
    pub constant: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionVerdict {
    /// `None` when the window holds no zero.
    pub windowed_abscissa: Option<f64>,
    pub fitted_decay_rate: f64,
    pub fitted_constant: f64,
    pub verdict: Verdict,
    pub norm_kind: NormKind,
    pub notes: String,
    pub per_history: Vec<HistoryFit>,
    pub margins: Vec<MarginCheck>,
    pub spectrum: SpectrumReport,
    pub horizon: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionConfig {
    pub window: Option<Rect>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub norm_kind: NormKind,
    pub root_tol: f64,
    pub seed: u64,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            window: None,
            horizon: None,
            step: None,
            norm_kind: NormKind::Sup,
            root_tol: ROOT_RESIDUAL_TOL,
            seed: 0,
        }
    }
}

/// Periodic sawtooth in `[-1, 1]` with seeded phases; component `i` carries sign `(-1)^i`.
pub fn sawtooth_history(spec: &SystemSpec, h: f64, seed: u64) -> Result<HistoryFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..spec.dimension).map(|_| rng.gen::<f64>()).collect();
    let period = spec.tau_star / 3.0;
    HistoryFunction::from_fn(spec, h, |s| {
        RVec::from_fn(spec.dimension, |i, _| {
            let u = s / period + phases[i];
            let saw = 2.0 * (u - u.floor()) - 1.0;
            if i % 2 == 0 { saw } else { -saw }
        })
    })
}

/// Test histories: constant, sawtooth, and the mode of the rightmost zero
/// (a cosine when the window holds no zero).
pub fn battery(spec: &SystemSpec, spectrum: &SpectrumReport, h: f64, seed: u64) -> Result<Vec<(String, HistoryFunction)>> {
    let mut out = vec![
        ("constant".to_string(), HistoryFunction::constant(spec, h, 1.0)?),
        ("sawtooth".to_string(), sawtooth_history(spec, h, seed)?),
    ];
    let modal = spectrum
        .roots
        .iter()
        .filter(|r| !r.cluster && r.z.im >= 0.0)
        .max_by(|a, b| a.z.re.total_cmp(&b.z.re).then(b.z.im.total_cmp(&a.z.im)));
    match modal {
        Some(r) => out.push(("modal".to_string(), build_modal_history(spec, r.z, h)?)),
        None => {
            let w = 2.0 * std::f64::consts::PI / spec.tau_star;
            out.push((
                "cosine".to_string(),
                HistoryFunction::from_fn(spec, h, |s| RVec::from_element(spec.dimension, (w * s).cos()))?,
            ));
        }
    }
    Ok(out)
}

fn margin_check(series: &NormSeries, nu: f64, combined: bool) -> MarginCheck {
    let q = if combined { series.combined() } else { series.values.clone() };
    let q0 = q[0];
    let tau = series.tau_star;
    let last_start = series.times.last().copied().unwrap_or(0.0) - tau;
    let mut sup = 0.0_f64;
    let mut sup_before_last = 0.0_f64;
    for (t, v) in series.times.iter().zip(&q) {
        let w = v * (nu * t).exp();
        sup = sup.max(w);
        if *t < last_start {
            sup_before_last = sup_before_last.max(w);
        }
    }
    let constant = if q0 > 0.0 { sup / q0 } else if sup == 0.0 { 1.0 } else { f64::INFINITY };
    MarginCheck {
        nu,
        constant,
        bounded: constant.is_finite() && sup <= sup_before_last * (1.0 + 1e-9),
    }
}

fn classify(alpha: Option<f64>, nus: &[f64]) -> Verdict {
    let all_decay = nus.iter().all(|&v| v > 0.0);
    let some_growth = nus.iter().any(|&v| v < 0.0);
    match alpha {
        Some(a) if a.abs() <= TOL_MARG => Verdict::Marginal,
        Some(a) if a < 0.0 => {
            if all_decay { Verdict::Stable } else { Verdict::Inconsistent }
        }
        Some(_) => {
            if some_growth { Verdict::Unstable } else { Verdict::Inconsistent }
        }
        None => {
            if all_decay { Verdict::Stable } else { Verdict::Inconsistent }
        }
    }
}

/// Confronts the windowed spectrum with simulated decay.
pub fn check_criterion(spec: &SystemSpec, config: &CriterionConfig) -> Result<CriterionVerdict> {
    spec.validate()?;
    if spec.kind == SystemKind::Dde && config.norm_kind == NormKind::Sup {
        return Err(Error::Input(
            "norm: the sup space B^inf is offered for IDE systems only".into(),
        ));
    }
    let window = config.window.unwrap_or_else(|| default_window(spec));
    let spectrum = find_roots(spec, &window, config.root_tol)?;
    let alpha = spectrum.abscissa;
    let h = match config.step {
        Some(h) => h,
        None => default_step(spec)?,
    };
    let horizon = config
        .horizon
        .unwrap_or_else(|| default_horizon(spec, alpha).min(MAX_DEFAULT_STEPS * h).max(5.0 * spec.tau_star));
    let histories = battery(spec, &spectrum, h, config.seed)?;
    let combined = spec.kind == SystemKind::Dde;
    let tau = spec.tau_star;
    let fits = par_map(histories, |(id, hist)| -> Result<HistoryFit> {
        let traj = simulate(spec, &hist, horizon, h)?;
        let series = norm_series(&traj, config.norm_kind, tau, combined)?;
        let fit = if combined {
            fit_decay_combined(&series, 2.0 * tau)?
        } else {
            fit_decay(&series, 2.0 * tau)?
        };
        Ok(HistoryFit {
            history_id: id,
            nu_hat: fit.nu_hat,
            c_hat: fit.c_hat,
            series,
            note: fit.note,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let nus: Vec<f64> = fits.iter().map(|f| f.nu_hat).collect();
    let nu_hat = nus.iter().copied().fold(f64::INFINITY, f64::min);
    let c_hat = fits.iter().map(|f| f.c_hat).fold(1.0, f64::max);
    let verdict = classify(alpha, &nus);

    let mut margins = Vec::new();
    if let Some(a) = alpha.filter(|a| *a < -TOL_MARG) {
        let rates: Vec<f64> = match spec.kind {
            SystemKind::Ide => [0.25, 0.5, 0.75].iter().map(|f| f * a.abs()).collect(),
            SystemKind::Dde => vec![a.abs()],
        };
        for nu in rates {
            let worst = fits
                .iter()
                .map(|f| margin_check(&f.series, nu, combined))
                .fold(None, |acc: Option<MarginCheck>, m| match acc {
                    Some(p) if p.constant >= m.constant => Some(MarginCheck { bounded: p.bounded && m.bounded, ..p }),
                    Some(p) => Some(MarginCheck { bounded: p.bounded && m.bounded, ..m }),
                    None => Some(m),
                });
            margins.extend(worst);
        }
    }

    let mut notes = format!(
        "windowed verdict: {}; histories: {}",
        spectrum.truncation_note,
        fits.iter()
            .map(|f| format!("{} nu_hat={:.6} C_hat={:.4}", f.history_id, f.nu_hat, f.c_hat))
            .collect::<Vec<_>>()
            .join(", ")
    );
    for f in &fits {
        if let Some(n) = &f.note {
            notes.push_str(&format!("; {}: {n}", f.history_id));
        }
    }
    if combined {
        notes.push_str("; decay fitted on ||X_t|| + |X(t)|");
    }
    for m in &margins {
        notes.push_str(&format!(
            "; margin nu={:.6}: C={:.4} ({})",
            m.nu,
            m.constant,
            if m.bounded { "bounded" } else { "still growing at horizon" }
        ));
    }
    Ok(CriterionVerdict {
        windowed_abscissa: alpha,
        fitted_decay_rate: nu_hat,
        fitted_constant: c_hat,
        verdict,
        norm_kind: config.norm_kind,
        notes,
        per_history: fits,
        margins,
        spectrum,
        horizon,
        step: h,
    })
}

/// Rightmost zero with nonnegative imaginary part, if any.
pub fn rightmost_root(spectrum: &SpectrumReport) -> Option<Complex64> {
    spectrum
        .roots
        .iter()
        .filter(|r| r.z.im >= 0.0)
        .max_by(|a, b| a.z.re.total_cmp(&b.z.re).then(b.z.im.total_cmp(&a.z.im)))
        .map(|r| r.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;

    fn scalar_traj(h: f64, start: i64, f: impl Fn(f64) -> f64, len: usize) -> Trajectory {
        Trajectory {
            step: h,
            start_index: start,
            values: (0..len)
                .map(|i| RMat::from_element(1, 1, f((start + i as i64) as f64 * h)))
                .collect(),
            provenance: Provenance::Stepping,
        }
    }

    fn ones(m: usize) -> Vec<RMat> {
        vec![RMat::from_element(1, 1, 1.0); m]
    }

    #[test]
    fn constant_window_norms() {
        let w = ones(101);
        for kind in [NormKind::Lp(1.0), NormKind::Lp(2.0), NormKind::Linf, NormKind::Sup, NormKind::Bv] {
            assert!((window_norm(&w, kind, 0.01).unwrap() - 1.0).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn exponential_l2_norm() {
        let h = 1e-3;
        let w: Vec<RMat> = (0..=1000)
            .map(|i| RMat::from_element(1, 1, (-1.0 + i as f64 * h).exp()))
            .collect();
        let exact = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
        assert!((window_norm(&w, NormKind::Lp(2.0), h).unwrap() - exact).abs() < 10.0 * h);
    }

    #[test]
    fn alternating_bv() {
        let m = 11;
        let w: Vec<RMat> = (0..m)
            .map(|i| RMat::from_element(1, 1, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        assert_eq!(window_norm(&w, NormKind::Bv, 0.1).unwrap(), 2.0 * (m - 1) as f64 + 1.0);
    }

    #[test]
    fn bad_p_rejected() {
        assert!(window_norm(&ones(3), NormKind::Lp(0.5), 0.1).is_err());
        assert!("l0.5".parse::<NormKind>().is_err());
        assert_eq!("l3".parse::<NormKind>().unwrap(), NormKind::Lp(3.0));
    }

    #[test]
    fn sliding_matches_direct() {
        let v: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64).collect();
        for w in 1..=10 {
            let s = sliding(&v, w, |a, b| a + b, 0.0);
            let m = sliding(&v, w, f64::max, 0.0);
            for a in 0..=v.len() - w {
                let d: f64 = v[a..a + w].iter().sum();
                assert_eq!(s[a], d);
                assert_eq!(m[a], v[a..a + w].iter().copied().fold(f64::MIN, f64::max));
            }
        }
    }

    #[test]
    fn series_matches_window_norm() {
        let h = 0.01;
        let traj = scalar_traj(h, -100, |t| (3.0 * t).sin() * (-0.2 * t).exp(), 600);
        for kind in [NormKind::Lp(1.0), NormKind::Lp(2.0), NormKind::Sup, NormKind::Bv] {
            let s = norm_series(&traj, kind, 1.0, false).unwrap();
            assert_eq!(s.values.len(), 500);
            for j in [0usize, 17, 250, 499] {
                let w = partial_trajectory(&traj, j as f64 * h, 1.0).unwrap();
                let direct = window_norm(&w, kind, h).unwrap();
                assert!((s.values[j] - direct).abs() <= 1e-12 * direct.max(1e-300), "{kind} j={j}");
            }
        }
    }

    #[test]
    fn partial_trajectory_bounds() {
        let traj = scalar_traj(0.5, -2, |_| 2.0, 7);
        assert_eq!(partial_trajectory(&traj, 0.0, 1.0).unwrap().len(), 3);
        assert!(partial_trajectory(&traj, 0.25, 1.0).is_err());
        assert!(partial_trajectory(&traj, 5.0, 1.0).is_err());
    }

    #[test]
    fn synthetic_fits() {
        let h = 0.01;
        let times: Vec<f64> = (0..=2000).map(|j| j as f64 * h).collect();
        let fit = |f: &dyn Fn(f64) -> f64| {
            let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
            fit_envelope(&times, &values, 1.0, 2.0).unwrap()
        };
        // per-window maxima sit at window starts for decaying data
        assert!((fit(&|t| (-t).exp()).nu_hat - 1.0).abs() < 1e-3);
        assert!(fit(&|_| 3.0).nu_hat.abs() < 1e-9);
        assert!((fit(&|t| (0.5 * t).exp()).nu_hat + 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_envelope_is_infinite_rate() {
        let times: Vec<f64> = (0..=600).map(|j| j as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|&t| if t < 1.0 { 1.0 } else { 0.0 }).collect();
        let fit = fit_envelope(&times, &values, 1.0, 2.0).unwrap();
        assert!(fit.nu_hat.is_infinite());
        assert!(fit.note.is_some());
    }

    #[test]
    fn short_series_rejected() {
        let times: Vec<f64> = (0..=400).map(|j| j as f64 * 0.01).collect();
        let values = vec![1.0; times.len()];
        assert!(fit_envelope(&times, &values, 1.0, 2.0).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(classify(Some(-0.5), &[0.6, 0.7]), Verdict::Stable);
        assert_eq!(classify(Some(-0.5), &[0.6, -0.1]), Verdict::Inconsistent);
        assert_eq!(classify(Some(0.5), &[-0.6, 0.1]), Verdict::Unstable);
        assert_eq!(classify(Some(0.5), &[0.6]), Verdict::Inconsistent);
        assert_eq!(classify(Some(5e-5), &[0.6]), Verdict::Marginal);
        assert_eq!(classify(None, &[f64::INFINITY]), Verdict::Stable);
    }
}
