//! Zeros of `det Delta` in rectangles of the complex plane.
//!
//! Roots are localized with the argument principle: the phase of `det Delta`
//! is tracked around a box boundary, boxes are quadrisected until they hold a
//! single zero, and Newton's method polishes each one. Boxes that still hold
//! several zeros at `CLUSTER_SIZE` are reported as clusters.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::charmat::CharMatrix;
use crate::error::{Error, Result};
use crate::linalg::{op_norm, op_norm_c};
use crate::model::{SystemKind, SystemSpec};
use crate::par_map;

pub const CLUSTER_SIZE: f64 = 1e-6;
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;
pub const BOUNDARY_TOL: f64 = 1e-12;
pub const MAX_BOUNDARY_SAMPLES: usize = 20_000;
pub const MAX_DILATIONS: usize = 5;
pub const DILATION_FACTOR: f64 = 1.0 + 1e-3;
const NEWTON_MAX_ITER: usize = 100;

/// Closed rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x_min && z.re <= self.x_max && z.im >= self.y_min && z.im <= self.y_max
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
            || ![self.x_min, self.x_max, self.y_min, self.y_max]
                .iter()
                .all(|v| v.is_finite())
    }

    /// Scales the box about its center.
    pub fn dilate(&self, factor: f64) -> Self {
        let c = self.center();
        let hw = 0.5 * self.width() * factor;
        let hh = 0.5 * self.height() * factor;
        Self::new(c.re - hw, c.re + hw, c.im - hh, c.im + hh)
    }

    /// Mirror image under complex conjugation.
    pub fn conj(&self) -> Self {
        Self::new(self.x_min, self.x_max, -self.y_max, -self.y_min)
    }

    /// Quadrisection at fractions `(fx, fy)` of the width and height.
    pub fn split(&self, fx: f64, fy: f64) -> [Rect; 4] {
        let xm = self.x_min + fx * self.width();
        let ym = self.y_min + fy * self.height();
        [
            Rect::new(self.x_min, xm, self.y_min, ym),
            Rect::new(xm, self.x_max, self.y_min, ym),
            Rect::new(self.x_min, xm, ym, self.y_max),
            Rect::new(xm, self.x_max, ym, self.y_max),
        ]
    }

    fn error_near_boundary(&self) -> Error {
        Error::RootNearBoundary {
            x_min: self.x_min,
            x_max: self.x_max,
            y_min: self.y_min,
            y_max: self.y_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootEntry {
    pub z: Complex64,
    /// `|det Delta(z)|`
    pub residual: f64,
    /// Winding count attributed to this entry (1 for an isolated simple root).
    pub cluster_count: u32,
    /// Unresolved: several zeros below `CLUSTER_SIZE`, or Newton did not converge.
    pub cluster: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Requested search window.
    pub window: Rect,
    /// Box actually used after boundary dilations.
    pub searched: Rect,
    /// Sorted lexicographically by `(Re, Im)`.
    pub roots: Vec<RootEntry>,
    pub total_winding: i64,
    /// `None` when no root lies in the window.
    pub abscissa: Option<f64>,
    pub truncation_note: String,
}

impl SpectrumReport {
    /// Root with the largest real part (smallest imaginary part among ties).
    pub fn rightmost(&self) -> Option<&RootEntry> {
        self.roots.iter().max_by(|a, b| {
            a.z.re
                .total_cmp(&b.z.re)
                .then(b.z.im.abs().total_cmp(&a.z.im.abs()))
        })
    }
}

struct PhaseTracker<'c, 'a> {
    cm: &'c CharMatrix<'a>,
    boundary_tol: f64,
    samples: usize,
    min_segment: f64,
    rect: Rect,
}

impl PhaseTracker<'_, '_> {
    fn sample(&mut self, z: Complex64) -> Result<Complex64> {
        self.samples += 1;
        if self.samples > MAX_BOUNDARY_SAMPLES {
            return Err(Error::RefinementCap(MAX_BOUNDARY_SAMPLES));
        }
        let f = self.cm.det(z);
        if !(f.norm() >= self.boundary_tol) {
            return Err(self.rect.error_near_boundary());
        }
        Ok(f)
    }

    fn segment(&mut self, za: Complex64, fa: Complex64, zb: Complex64, fb: Complex64) -> Result<f64> {
        let d = (fb / fa).arg();
        if d.abs() < 0.5 * PI {
            return Ok(d);
        }
        if (zb - za).norm() < self.min_segment {
            // the phase jump does not resolve: a zero sits on the segment
            return Err(self.rect.error_near_boundary());
        }
        let zm = 0.5 * (za + zb);
        let fm = self.sample(zm)?;
        Ok(self.segment(za, fa, zm, fm)? + self.segment(zm, fm, zb, fb)?)
    }

    fn edge(&mut self, a: Complex64, b: Complex64) -> Result<f64> {
        let len = (b - a).norm();
        let scale = self.cm.spec().tau_star.max(1.0);
        let pieces = 16 + (2.0 * len * scale).ceil() as usize;
        let mut za = a;
        let mut fa = self.sample(a)?;
        let mut total = 0.0;
        for i in 1..=pieces {
            let zb = a + (b - a) * (i as f64 / pieces as f64);
            let fb = self.sample(zb)?;
            total += self.segment(za, fa, zb, fb)?;
            za = zb;
            fa = fb;
        }
        Ok(total)
    }
}

fn winding_with(cm: &CharMatrix, rect: &Rect, boundary_tol: f64) -> Result<i64> {
    if rect.is_degenerate() {
        return Err(Error::Domain(format!("degenerate box {rect:?}")));
    }
    let size = rect.width().max(rect.height());
    let c = rect.center();
    let mut t = PhaseTracker {
        cm,
        boundary_tol,
        samples: 0,
        min_segment: 1e-13 * size.max(c.norm()).max(1e-300),
        rect: *rect,
    };
    let corners = [
        Complex64::new(rect.x_min, rect.y_min),
        Complex64::new(rect.x_max, rect.y_min),
        Complex64::new(rect.x_max, rect.y_max),
        Complex64::new(rect.x_min, rect.y_max),
    ];
    let mut total = 0.0;
    for i in 0..4 {
        total += t.edge(corners[i], corners[(i + 1) % 4])?;
    }
    Ok((total / TAU).round() as i64)
}

/// Number of zeros of `det Delta` inside `rect`, counted with multiplicity.
///
/// Fails with [`Error::RootNearBoundary`] when `|det Delta|` drops below
/// `boundary_tol` on the boundary or a phase jump cannot be resolved; callers
/// dilate the box and retry (see [`winding_number_dilated`]).
pub fn winding_number(spec: &SystemSpec, rect: &Rect, boundary_tol: f64) -> Result<i64> {
    winding_with(&CharMatrix::new(spec), rect, boundary_tol)
}

fn winding_dilated_with(cm: &CharMatrix, rect: &Rect, boundary_tol: f64) -> Result<(i64, Rect)> {
    let mut current = *rect;
    let mut last_err = None;
    for _ in 0..=MAX_DILATIONS {
        match winding_with(cm, &current, boundary_tol) {
            Ok(w) => return Ok((w, current)),
            Err(e @ Error::RootNearBoundary { .. }) => {
                last_err = Some(e);
                current = current.dilate(DILATION_FACTOR);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// [`winding_number`] with up to five dilations by `1 + 1e-3` when a zero sits
/// on the boundary. Returns the count and the box it refers to.
pub fn winding_number_dilated(spec: &SystemSpec, rect: &Rect, boundary_tol: f64) -> Result<(i64, Rect)> {
    winding_dilated_with(&CharMatrix::new(spec), rect, boundary_tol)
}

/// Newton iteration on `det Delta` from `start`.
/// Returns the limit if it converged within `NEWTON_MAX_ITER` iterations.
pub fn newton(cm: &CharMatrix, start: Complex64) -> Option<(Complex64, usize)> {
    let mut z = start;
    for iter in 1..=NEWTON_MAX_ITER {
        let v = cm.eval(z);
        if v.det == Complex64::new(0.0, 0.0) {
            return Some((z, iter));
        }
        let step = v.det / v.det_derivative;
        if !(step.re.is_finite() && step.im.is_finite()) {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-14 * z.norm().max(1.0) {
            // one polishing step
            let v = cm.eval(z);
            let step = v.det / v.det_derivative;
            if step.re.is_finite() && step.im.is_finite() && step.norm() < 1e-12 * z.norm().max(1.0) {
                z -= step;
            }
            return Some((z, iter));
        }
    }
    None
}

fn accept_root(cm: &CharMatrix, z: Complex64, tol: f64) -> Option<RootEntry> {
    let mut z = z;
    if z.im.abs() <= 1e-13 * z.norm().max(1.0) {
        // real data: keep real roots exactly real
        let real = Complex64::new(z.re, 0.0);
        if cm.det(real).norm() <= cm.det(z).norm() {
            z = real;
        }
    }
    let delta = cm.delta(z);
    let det = cm.det(z);
    let scale = op_norm_c(&delta).max(1.0);
    (det.norm() < tol * scale).then(|| RootEntry {
        z,
        residual: det.norm(),
        cluster_count: 1,
        cluster: false,
    })
}

const SPLIT_OFFSETS: [f64; 8] = [0.0, 0.0123, -0.0171, 0.0419, -0.0377, 0.0731, -0.0977, 0.1313];

/// Splits `rect` into four boundary-clean children whose windings sum to `winding`.
fn clean_split(cm: &CharMatrix, rect: &Rect, winding: i64, boundary_tol: f64) -> Result<Vec<(Rect, i64)>> {
    'candidates: for (i, &ox) in SPLIT_OFFSETS.iter().enumerate() {
        let oy = -SPLIT_OFFSETS[(3 * i) % SPLIT_OFFSETS.len()] * 0.9;
        let children = rect.split(0.5 + ox, 0.5 + oy);
        let mut out = Vec::with_capacity(4);
        for child in children {
            match winding_with(cm, &child, boundary_tol) {
                Ok(w) => out.push((child, w)),
                Err(Error::RootNearBoundary { .. }) => continue 'candidates,
                Err(e) => return Err(e),
            }
        }
        if out.iter().map(|(_, w)| w).sum::<i64>() == winding {
            return Ok(out);
        }
    }
    Err(Error::NoCleanSplit {
        x_min: rect.x_min,
        x_max: rect.x_max,
        y_min: rect.y_min,
        y_max: rect.y_max,
    })
}

fn isolate(cm: &CharMatrix, rect: Rect, winding: i64, tol: f64, boundary_tol: f64) -> Result<Vec<RootEntry>> {
    if winding <= 0 {
        if winding < 0 {
            return Err(Error::Numerical(format!("negative winding {winding} for {rect:?}")));
        }
        return Ok(Vec::new());
    }
    if winding == 1 {
        if let Some((z, _)) = newton(cm, rect.center()) {
            if rect.contains(z) {
                if let Some(root) = accept_root(cm, z, tol) {
                    return Ok(vec![root]);
                }
            }
        }
    }
    if rect.width().max(rect.height()) < CLUSTER_SIZE {
        let c = rect.center();
        return Ok(vec![RootEntry {
            z: c,
            residual: cm.det(c).norm(),
            cluster_count: winding as u32,
            cluster: true,
        }]);
    }
    let children = clean_split(cm, &rect, winding, boundary_tol)?;
    let nested = par_map(children, |(child, w)| isolate(cm, child, w, tol, boundary_tol));
    let mut out = Vec::new();
    for r in nested {
        out.extend(r?);
    }
    Ok(out)
}

/// All zeros of `det Delta` in `window`, each refined until
/// `|det Delta(z)| < tol * max(1, |Delta(z)|)`.
pub fn find_roots(spec: &SystemSpec, window: &Rect, tol: f64) -> Result<SpectrumReport> {
    find_roots_with(spec, window, tol, BOUNDARY_TOL)
}

pub fn find_roots_with(spec: &SystemSpec, window: &Rect, tol: f64, boundary_tol: f64) -> Result<SpectrumReport> {
    if window.is_degenerate() {
        return Err(Error::Domain(format!("degenerate window {window:?}")));
    }
    let cm = CharMatrix::new(spec);
    let (total, searched) = winding_dilated_with(&cm, window, boundary_tol)?;
    let mut roots = isolate(&cm, searched, total, tol, boundary_tol)?;
    roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    let abscissa = roots.iter().map(|r| r.z.re).fold(None, |acc: Option<f64>, x| {
        Some(acc.map_or(x, |a| a.max(x)))
    });
    let truncation_note = truncation_note(spec, window, &searched);
    Ok(SpectrumReport {
        window: *window,
        searched,
        roots,
        total_winding: total,
        abscissa,
        truncation_note,
    })
}

fn truncation_note(spec: &SystemSpec, window: &Rect, searched: &Rect) -> String {
    let mut note = format!(
        "windowed search over [{}, {}] x [{}, {}]; zeros with |Im z| > {} or Re z outside the window are not explored",
        window.x_min, window.x_max, window.y_min, window.y_max, window.y_max.abs().max(window.y_min.abs())
    );
    if searched != window {
        let _ = write!(
            note,
            "; boundary dilated to [{:.6}, {:.6}] x [{:.6}, {:.6}]",
            searched.x_min, searched.x_max, searched.y_min, searched.y_max
        );
    }
    if spec.kernel.is_empty() {
        note.push_str("; no distributed kernel, so zeros beyond the window follow Delta_0 exactly");
    } else {
        let beta = window.x_min.abs().max(window.x_max.abs()).max(1e-3);
        let y = window.y_max.abs().max(window.y_min.abs()).max(1.0);
        let probe = riemann_lebesgue_probe(spec, beta, &[y, 10.0 * y]);
        let _ = write!(
            note,
            "; tail evidence: sup_x |R(x+iy)| = {:.3e} at y = {}, {:.3e} at y = {}, so high zeros approach those of Delta_0",
            probe[0].1, probe[0].0, probe[1].1, probe[1].0
        );
    }
    note
}

/// Largest real part over the zeros in `window`, with the truncation note.
pub fn spectral_abscissa(spec: &SystemSpec, window: &Rect) -> Result<(Option<f64>, String)> {
    let report = find_roots(spec, window, ROOT_RESIDUAL_TOL)?;
    Ok((report.abscissa, report.truncation_note))
}

/// `sum_k |A_k| e^{-tau_k x} + int |N(s)| e^{-s x} ds`, a bound on `|mu_hat(x + iy)|`.
fn transform_bound(spec: &SystemSpec, x: f64) -> f64 {
    const PANELS: usize = 64;
    let atoms: f64 = spec
        .delay_terms
        .iter()
        .map(|d| op_norm(&d.matrix) * (-d.tau * x).exp())
        .sum();
    let kernel: f64 = spec
        .kernel
        .pieces
        .iter()
        .map(|p| {
            let w = (p.end - p.start) / PANELS as f64;
            (0..PANELS)
                .map(|i| {
                    let f = |s: f64| op_norm(&p.value(s)) * (-s * x).exp();
                    let a = p.start + i as f64 * w;
                    w / 6.0 * (f(a) + 4.0 * f(a + 0.5 * w) + f(a + w))
                })
                .sum::<f64>()
        })
        .sum();
    atoms + kernel
}

/// Upper bound on the real part of any zero.
pub fn real_part_bound(spec: &SystemSpec) -> f64 {
    match spec.kind {
        // |z| <= |mu_hat(z)| <= bound(0) whenever Re z >= 0
        SystemKind::Dde => transform_bound(spec, 0.0),
        // a zero needs |mu_hat(z)| >= 1
        SystemKind::Ide => {
            if transform_bound(spec, 0.0) < 1.0 {
                return 0.0;
            }
            let mut hi = 1.0;
            while transform_bound(spec, hi) >= 1.0 && hi < 1e6 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if transform_bound(spec, mid) >= 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        }
    }
}

/// `[-2 g, max(1, 1.1 b)] x [0, max(20, 10 * 2 pi / tau_1)]`, where `b` bounds the
/// real parts of all zeros from above and `g = max(1, b, max_k |ln |A_k|| / tau_k)`.
pub fn default_window(spec: &SystemSpec) -> Rect {
    let bound = real_part_bound(spec);
    let chains = spec
        .delay_terms
        .iter()
        .map(|d| {
            let a = op_norm(&d.matrix);
            if a > 0.0 {
                a.ln().abs() / d.tau
            } else {
                0.0
            }
        })
        .fold(0.0_f64, f64::max);
    let guess = 1.0_f64.max(bound).max(chains);
    let y_max = 20.0_f64.max(10.0 * TAU / spec.first_delay());
    Rect::new(-2.0 * guess, 1.0_f64.max(1.1 * bound), 0.0, y_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevinProbe {
    pub empirical_min: f64,
    pub argmin: Complex64,
    pub samples: usize,
}

/// Minimum of `|det Delta|` over a grid of `{|Re z| < beta - delta, |Im z| <= y_max}`
/// with the `delta`-disks around every zero removed.
pub fn levin_lower_bound_probe(
    spec: &SystemSpec,
    beta: f64,
    delta: f64,
    y_max: f64,
    grid_step: f64,
) -> Result<LevinProbe> {
    if !(delta > 0.0 && delta < beta) {
        return Err(Error::Domain(format!(
            "need 0 < delta < beta, got delta={delta}, beta={beta}"
        )));
    }
    if !(grid_step > 0.0 && y_max > 0.0) {
        return Err(Error::Domain("grid step and y_max must be positive".into()));
    }
    let search = Rect::new(-beta, beta, 0.0, y_max + delta);
    let report = find_roots(spec, &search, ROOT_RESIDUAL_TOL)?;
    let zeros: Vec<Complex64> = report
        .roots
        .iter()
        .flat_map(|r| [r.z, r.z.conj()])
        .collect();
    let cm = CharMatrix::new(spec);
    let half = beta - delta;
    let nx = (2.0 * half / grid_step).ceil() as usize;
    let ny = (y_max / grid_step).floor() as usize;
    // |det| is symmetric under conjugation, so Im z >= 0 suffices
    let rows: Vec<usize> = (0..=ny).collect();
    let per_row = par_map(rows, |j| {
        let y = j as f64 * grid_step;
        let mut best: Option<(f64, Complex64)> = None;
        let mut count = 0usize;
        for i in 1..=nx {
            let x = -half + i as f64 * grid_step;
            if x.abs() >= half {
                continue;
            }
            let z = Complex64::new(x, y);
            if zeros.iter().any(|r| (z - r).norm() < delta) {
                continue;
            }
            count += 1;
            let v = cm.det(z).norm();
            if best.map_or(true, |(b, _)| v < b) {
                best = Some((v, z));
            }
        }
        (best, count)
    });
    let mut best: Option<(f64, Complex64)> = None;
    let mut samples = 0;
    for (b, c) in per_row {
        samples += c;
        if let Some((v, z)) = b {
            if best.map_or(true, |(bv, _)| v < bv) {
                best = Some((v, z));
            }
        }
    }
    match best {
        Some((empirical_min, argmin)) => Ok(LevinProbe {
            empirical_min,
            argmin,
            samples,
        }),
        None => Err(Error::Domain(
            "empty sample set: the delta-disks cover the probe region".into(),
        )),
    }
}

/// `sup_{x in [-beta, beta]} |R(x + iy)|` for each `y`: a grid of step `beta / 100`
/// followed by golden-section refinement around the best node.
pub fn riemann_lebesgue_probe(spec: &SystemSpec, beta: f64, ys: &[f64]) -> Vec<(f64, f64)> {
    let cm = CharMatrix::new(spec);
    if spec.kernel.is_empty() {
        return ys.iter().map(|&y| (y, 0.0)).collect();
    }
    let f = |x: f64, y: f64| op_norm_c(&cm.r(Complex64::new(x, y)));
    par_map(ys.to_vec(), |y| {
        let step = beta / 100.0;
        let mut best_i = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=200 {
            let v = f(-beta + i as f64 * step, y);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let x_best = -beta + best_i as f64 * step;
        let mut lo = (x_best - step).max(-beta);
        let mut hi = (x_best + step).min(beta);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (f(c, y), f(d, y));
        for _ in 0..60 {
            if fc > fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = f(c, y);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = f(d, y);
            }
        }
        (y, best.max(fc).max(fd))
    })
}
