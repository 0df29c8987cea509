//! Equations, initial data and grid representations of the delay measure.
//!
//! A system is described by its delay measure
//! `mu(ds) = sum_k A_k delta_{tau_k}(ds) + N(s) ds`, supported in `[0, tau_star]`,
//! with no mass at `s = 0`. The kernel `N` is piecewise polynomial so that
//! its Laplace transform has a closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::linalg::{op_norm, RMat, RVec};

/// Highest supported polynomial degree of a kernel piece.
pub const MAX_KERNEL_DEGREE: usize = 3;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// `X(t) + sum A_k X(t - tau_k) + int N(s) X(t - s) ds = 0`
    Ide,
    /// `X'(t) + sum A_k X(t - tau_k) + int N(s) X(t - s) ds = 0`
    Dde,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTerm {
    pub tau: f64,
    pub matrix: RMat,
}

/// One polynomial piece `sum_m coeffs[m] * s^m` on `[start, end)`, in the
/// absolute delay variable `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPiece {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<RMat>,
}

impl KernelPiece {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn value(&self, s: f64) -> RMat {
        // Horner
        let mut acc = self.coeffs[self.coeffs.len() - 1].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * s + c;
        }
        acc
    }

    /// Exact integral of the polynomial over `[a, b]`, ignoring the piece bounds.
    fn poly_integral(&self, a: f64, b: f64) -> RMat {
        let n = self.coeffs[0].nrows();
        let mut acc = RMat::zeros(n, n);
        for (m, c) in self.coeffs.iter().enumerate() {
            let p = (m + 1) as i32;
            acc += c * ((b.powi(p) - a.powi(p)) / (m + 1) as f64);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseKernel {
    pub pieces: Vec<KernelPiece>,
}

impl PiecewiseKernel {
    pub fn empty() -> Self {
        Self { pieces: Vec::new() }
    }

    /// A single polynomial piece covering `[0, tau_star]`.
    pub fn single(tau_star: f64, coeffs: Vec<RMat>) -> Self {
        Self {
            pieces: vec![KernelPiece {
                start: 0.0,
                end: tau_star,
                coeffs,
            }],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn piece_at(&self, s: f64) -> Option<&KernelPiece> {
        let last = self.pieces.last()?;
        if s >= last.start && s <= last.end {
            return Some(last);
        }
        self.pieces.iter().find(|p| s >= p.start && s < p.end)
    }

    /// `N(s)`; zero outside the kernel pieces.
    pub fn value(&self, s: f64, n: usize) -> RMat {
        match self.piece_at(s) {
            Some(p) => p.value(s),
            None => RMat::zeros(n, n),
        }
    }

    /// Exact `int_a^b N(s) ds`.
    pub fn integral(&self, a: f64, b: f64, n: usize) -> RMat {
        let mut acc = RMat::zeros(n, n);
        for p in &self.pieces {
            let lo = a.max(p.start);
            let hi = b.min(p.end);
            if hi > lo {
                acc += p.poly_integral(lo, hi);
            }
        }
        acc
    }

    /// `int |N(s)| ds` with the operator 2-norm, by composite Simpson.
    pub fn l1_norm(&self) -> f64 {
        const PANELS: usize = 256;
        self.pieces
            .iter()
            .map(|p| {
                let w = (p.end - p.start) / PANELS as f64;
                let mut acc = 0.0;
                for i in 0..PANELS {
                    let a = p.start + i as f64 * w;
                    let fa = op_norm(&p.value(a));
                    let fm = op_norm(&p.value(a + 0.5 * w));
                    let fb = op_norm(&p.value(a + w));
                    acc += w / 6.0 * (fa + 4.0 * fm + fb);
                }
                acc
            })
            .sum()
    }
}

/// A linear IDE or DDE with finitely many pointwise delays and a distributed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub dimension: usize,
    pub tau_star: f64,
    pub delay_terms: Vec<DelayTerm>,
    pub kernel: PiecewiseKernel,
}

fn is_integer_ratio(len: f64, h: f64) -> Option<usize> {
    let r = len / h;
    let n = r.round();
    if n >= 0.0 && (r - n).abs() <= GRID_TOL * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

impl SystemSpec {
    /// Scalar system with a single pointwise delay and no kernel.
    pub fn scalar(kind: SystemKind, a: f64, tau: f64) -> Self {
        Self {
            kind,
            dimension: 1,
            tau_star: tau,
            delay_terms: vec![DelayTerm {
                tau,
                matrix: RMat::from_element(1, 1, a),
            }],
            kernel: PiecewiseKernel::empty(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut v = Vec::new();
        let n = self.dimension;
        if n == 0 {
            v.push("dimension must be positive".to_string());
        }
        if !(self.tau_star.is_finite() && self.tau_star > 0.0) {
            v.push(format!("tau_star must be positive, got {}", self.tau_star));
        }
        for (k, term) in self.delay_terms.iter().enumerate() {
            if !(term.tau > 0.0 && term.tau <= self.tau_star) {
                v.push(format!(
                    "delay {} outside (0, tau_star={}]",
                    term.tau, self.tau_star
                ));
            }
            if term.matrix.shape() != (n, n) {
                v.push(format!(
                    "dimension mismatch: delay term {k} matrix is {}x{}, expected {n}x{n}",
                    term.matrix.nrows(),
                    term.matrix.ncols()
                ));
            }
            if term.matrix.iter().any(|x| !x.is_finite()) {
                v.push(format!("delay term {k} has non-finite entries"));
            }
        }
        if self
            .delay_terms
            .windows(2)
            .any(|w| w[1].tau <= w[0].tau)
        {
            v.push("delays not strictly increasing".to_string());
        }

        let tol = 1e-12 * self.tau_star.max(1.0);
        let mut cursor = 0.0;
        for (i, p) in self.kernel.pieces.iter().enumerate() {
            if p.coeffs.is_empty() {
                v.push(format!("kernel piece {i} has no coefficients"));
                continue;
            }
            if p.degree() > MAX_KERNEL_DEGREE {
                v.push(format!(
                    "kernel piece {i} has degree {} > {MAX_KERNEL_DEGREE}",
                    p.degree()
                ));
            }
            if p.coeffs.iter().any(|c| c.shape() != (n, n)) {
                v.push(format!(
                    "dimension mismatch: kernel piece {i} coefficients must be {n}x{n}"
                ));
            }
            if !(p.end > p.start) {
                v.push(format!(
                    "kernel piece {i} has empty interval [{},{})",
                    p.start, p.end
                ));
            }
            if p.start > cursor + tol {
                v.push(format!("kernel gap at [{},{})", cursor, p.start));
            } else if p.start < cursor - tol {
                v.push(format!("kernel overlap at [{},{})", p.start, cursor));
            }
            cursor = cursor.max(p.end);
        }
        if !self.kernel.is_empty() {
            if cursor < self.tau_star - tol {
                v.push(format!("kernel gap at [{},{})", cursor, self.tau_star));
            } else if cursor > self.tau_star + tol {
                v.push(format!(
                    "kernel extends to {} beyond tau_star={}",
                    cursor, self.tau_star
                ));
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations: v })
        }
    }

    /// `N(s)` for `s` in `[0, tau_star]`; the right endpoint belongs to the last piece.
    pub fn kernel_value(&self, s: f64) -> Result<RMat> {
        if !(0.0..=self.tau_star).contains(&s) {
            return Err(Error::Domain(format!(
                "kernel argument {s} outside [0, {}]",
                self.tau_star
            )));
        }
        Ok(self.kernel.value(s, self.dimension))
    }

    pub fn identity(&self) -> RMat {
        RMat::identity(self.dimension, self.dimension)
    }

    /// `sum_k |A_k|`
    pub fn atom_mass(&self) -> f64 {
        self.delay_terms.iter().map(|d| op_norm(&d.matrix)).sum()
    }

    /// `sum_k |A_k| + int |N|`
    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.kernel.l1_norm()
    }

    pub fn first_delay(&self) -> f64 {
        self.delay_terms
            .first()
            .map(|d| d.tau)
            .unwrap_or(self.tau_star)
    }

    /// Number of grid cells `tau_star / h`, if integral.
    pub fn horizon_cells(&self, h: f64) -> Result<usize> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Input(format!("step must be positive, got {h}")));
        }
        is_integer_ratio(self.tau_star, h).ok_or_else(|| Error::NonCommensurate {
            tau: self.tau_star,
            step: h,
            suggestion: self.suggestion_text(h),
        })
    }

    /// Grid lag `tau_k / h` of every delay term.
    pub fn delay_lags(&self, h: f64) -> Result<Vec<usize>> {
        self.delay_terms
            .iter()
            .map(|d| {
                is_integer_ratio(d.tau, h).ok_or_else(|| Error::NonCommensurate {
                    tau: d.tau,
                    step: h,
                    suggestion: self.suggestion_text(h),
                })
            })
            .collect()
    }

    fn suggestion_text(&self, h: f64) -> String {
        match self.suggest_step(h) {
            Some(s) => format!(" (try step {s})"),
            None => String::new(),
        }
    }

    /// Largest step `<= target` that puts `tau_star` and every delay on the grid.
    pub fn suggest_step(&self, target: f64) -> Option<f64> {
        if !(target > 0.0) {
            return None;
        }
        let start = (self.tau_star / target - GRID_TOL).ceil().max(1.0) as usize;
        (start..start.saturating_mul(64).min(10_000_000).max(start + 1))
            .map(|m| self.tau_star / m as f64)
            .find(|&h| {
                self.delay_terms
                    .iter()
                    .all(|d| is_integer_ratio(d.tau, h).is_some())
            })
    }
}

/// Initial data `X_0` sampled on `[-tau_star, 0]`; `samples[i]` is the value at
/// `-tau_star + i * step`. DDEs also carry `x0 = X(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFunction {
    pub step: f64,
    pub samples: Vec<RVec>,
    pub x0: Option<RVec>,
}

impl HistoryFunction {
    pub fn from_fn(spec: &SystemSpec, h: f64, f: impl Fn(f64) -> RVec) -> Result<Self> {
        let cells = spec.horizon_cells(h)?;
        let samples: Vec<RVec> = (0..=cells)
            .map(|i| f((i as f64 - cells as f64) * h))
            .collect();
        let x0 = match spec.kind {
            SystemKind::Ide => None,
            SystemKind::Dde => Some(samples[cells].clone()),
        };
        Ok(Self { step: h, samples, x0 })
    }

    pub fn constant(spec: &SystemSpec, h: f64, value: f64) -> Result<Self> {
        let n = spec.dimension;
        Self::from_fn(spec, h, |_| RVec::from_element(n, value))
    }

    pub fn dimension(&self) -> usize {
        self.samples.first().map(|s| s.len()).unwrap_or(0)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            step: self.step,
            samples: self.samples.iter().map(|s| s * alpha).collect(),
            x0: self.x0.as_ref().map(|x| x * alpha),
        }
    }

    pub fn check(&self, spec: &SystemSpec) -> Result<()> {
        let cells = spec.horizon_cells(self.step)?;
        if self.samples.len() != cells + 1 {
            return Err(Error::Input(format!(
                "history has {} samples, expected {} on [-tau_star, 0] with step {}",
                self.samples.len(),
                cells + 1,
                self.step
            )));
        }
        if self.samples.iter().any(|s| s.len() != spec.dimension) {
            return Err(Error::Input(format!(
                "history values must have dimension {}",
                spec.dimension
            )));
        }
        match (spec.kind, &self.x0) {
            (SystemKind::Dde, None) => Err(Error::Input("DDE history requires x0".into())),
            (SystemKind::Dde, Some(x)) if x.len() != spec.dimension => Err(Error::Input(
                format!("x0 must have dimension {}", spec.dimension),
            )),
            _ => Ok(()),
        }
    }
}

/// A matrix measure on a uniform grid: `entries[j]` is its mass on `[jh, (j+1)h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub step: f64,
    pub entries: Vec<RMat>,
}

impl GridMeasure {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `sum_j |m_j|`
    pub fn total_variation(&self) -> f64 {
        self.entries.iter().map(op_norm).sum()
    }

    /// Cumulative masses `F_j = sum_{i <= j} m_i`.
    pub fn cumulative(&self) -> Vec<RMat> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut acc: Option<RMat> = None;
        for m in &self.entries {
            let next = match acc {
                Some(a) => a + m,
                None => m.clone(),
            };
            out.push(next.clone());
            acc = Some(next);
        }
        out
    }
}

/// Grid mass of `mu`: atoms land in cell `tau_k / h`, kernel cells integrate
/// the polynomial exactly. The support has `tau_star / h + 1` entries.
pub fn discretize_measure(spec: &SystemSpec, h: f64) -> Result<GridMeasure> {
    let cells = spec.horizon_cells(h)?;
    let lags = spec.delay_lags(h)?;
    let n = spec.dimension;
    let mut entries: Vec<RMat> = (0..=cells)
        .map(|j| {
            if j < cells {
                spec.kernel.integral(j as f64 * h, (j + 1) as f64 * h, n)
            } else {
                RMat::zeros(n, n)
            }
        })
        .collect();
    for (term, &lag) in spec.delay_terms.iter().zip(&lags) {
        entries[lag] += &term.matrix;
    }
    Ok(GridMeasure { step: h, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Stepping,
    ResolventFormula,
    ModalClosedForm,
}

/// Uniform-grid samples; `values[i]` sits at time `(start_index + i) * step`.
/// Values are `n x 1` for state trajectories and `n x n` for resolvents.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub start_index: i64,
    pub values: Vec<RMat>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.start_index + i as i64) as f64 * self.step
    }

    pub fn start_time(&self) -> f64 {
        self.time(0)
    }

    pub fn end_index(&self) -> i64 {
        self.start_index + self.values.len() as i64 - 1
    }

    /// Value at grid index `k` (time `k * step`).
    pub fn at(&self, k: i64) -> Option<&RMat> {
        let i = k - self.start_index;
        if i < 0 {
            return None;
        }
        self.values.get(i as usize)
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn grid_index(&self, t: f64) -> Option<i64> {
        let r = t / self.step;
        let k = r.round();
        ((r - k).abs() <= GRID_TOL * k.abs().max(1.0)).then_some(k as i64)
    }

    /// Sup-norm distance to another trajectory over grid indices `[from, to]`.
    pub fn sup_distance(&self, other: &Trajectory, from: i64, to: i64) -> Option<f64> {
        let mut worst = 0.0_f64;
        for k in from..=to {
            let d = self.at(k)? - other.at(k)?;
            worst = worst.max(crate::linalg::max_abs(&d));
        }
        Some(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> RMat {
        RMat::from_element(1, 1, v)
    }

    fn piece(a: f64, b: f64, coeffs: &[f64]) -> KernelPiece {
        KernelPiece {
            start: a,
            end: b,
            coeffs: coeffs.iter().map(|&c| m1(c)).collect(),
        }
    }

    #[test]
    fn minimal_spec_is_valid() {
        let spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn unordered_delays_are_rejected() {
        let mut spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        spec.delay_terms.push(DelayTerm { tau: 0.5, matrix: m1(0.1) });
        let err = spec.validate().unwrap_err();
        assert!(err
            .violations
            .iter()
            .any(|v| v == "delays not strictly increasing"));
    }

    #[test]
    fn kernel_gap_is_reported() {
        let mut spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        spec.kernel = PiecewiseKernel {
            pieces: vec![piece(0.0, 0.4, &[1.0]), piece(0.5, 1.0, &[1.0])],
        };
        let err = spec.validate().unwrap_err();
        assert_eq!(err.violations, vec!["kernel gap at [0.4,0.5)".to_string()]);
    }

    #[test]
    fn other_violations() {
        let mut spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        spec.delay_terms[0].tau = 1.5;
        spec.delay_terms.push(DelayTerm { tau: 2.0, matrix: RMat::zeros(2, 2) });
        spec.kernel = PiecewiseKernel {
            pieces: vec![piece(0.0, 0.6, &[1.0, 0.0, 0.0, 0.0, 1.0]), piece(0.5, 1.0, &[1.0])],
        };
        let v = spec.validate().unwrap_err().violations;
        assert!(v.iter().any(|s| s.contains("outside (0, tau_star=1]")));
        assert!(v.iter().any(|s| s.starts_with("dimension mismatch")));
        assert!(v.iter().any(|s| s.contains("degree 4")));
        assert!(v.iter().any(|s| s.starts_with("kernel overlap")));
    }

    #[test]
    fn single_atom_placement() {
        let spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        let g = discretize_measure(&spec, 0.25).unwrap();
        let vals: Vec<f64> = g.entries.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![0.0, 0.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn uniform_density_cells() {
        let mut spec = SystemSpec::scalar(SystemKind::Ide, 0.0, 1.0);
        spec.delay_terms.clear();
        spec.kernel = PiecewiseKernel::single(1.0, vec![m1(1.0)]);
        let g = discretize_measure(&spec, 0.25).unwrap();
        assert_eq!(g.len(), 5);
        for j in 0..4 {
            assert!((g.entries[j][(0, 0)] - 0.25).abs() < 1e-15);
        }
        assert_eq!(g.entries[4][(0, 0)], 0.0);
    }

    #[test]
    fn linear_density_cells() {
        let mut spec = SystemSpec::scalar(SystemKind::Ide, 0.0, 1.0);
        spec.delay_terms.clear();
        spec.kernel = PiecewiseKernel::single(1.0, vec![m1(0.0), m1(1.0)]);
        let g = discretize_measure(&spec, 0.5).unwrap();
        assert!((g.entries[0][(0, 0)] - 0.125).abs() < 1e-15);
        assert!((g.entries[1][(0, 0)] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn non_commensurate_delay_suggests_step() {
        let spec = SystemSpec {
            delay_terms: vec![
                DelayTerm { tau: 0.3, matrix: m1(0.1) },
                DelayTerm { tau: 1.0, matrix: m1(0.1) },
            ],
            ..SystemSpec::scalar(SystemKind::Ide, 0.0, 1.0)
        };
        let err = discretize_measure(&spec, 0.25).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not a multiple"), "{msg}");
        assert!(msg.contains("try step 0.1"), "{msg}");
    }

    #[test]
    fn kernel_value_conventions() {
        let mut spec = SystemSpec::scalar(SystemKind::Ide, 0.0, 1.0);
        spec.kernel = PiecewiseKernel::single(1.0, vec![m1(1.0)]);
        assert_eq!(spec.kernel_value(0.3).unwrap()[(0, 0)], 1.0);

        spec.kernel = PiecewiseKernel {
            pieces: vec![piece(0.0, 0.5, &[1.0]), piece(0.5, 1.0, &[0.0, 0.0, 1.0])],
        };
        assert!((spec.kernel_value(0.5).unwrap()[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((spec.kernel_value(1.0).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(spec.kernel_value(1.5).is_err());
        assert!(spec.kernel_value(-0.1).is_err());
    }

    #[test]
    fn total_mass_converges_first_order() {
        // N(s) = s on [0, 1] plus a unit atom: exact total mass 1.5.
        let spec = SystemSpec {
            kernel: PiecewiseKernel::single(1.0, vec![m1(0.0), m1(1.0)]),
            ..SystemSpec::scalar(SystemKind::Ide, 1.0, 1.0)
        };
        let mut prev = f64::INFINITY;
        for &h in &[0.1, 0.05, 0.025] {
            let g = discretize_measure(&spec, h).unwrap();
            let err = (g.total_variation() - 1.5).abs();
            assert!(err < 2.0 * h, "h={h} err={err}");
            assert!(err <= prev);
            prev = err;
        }
        assert!((spec.total_mass() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn refining_keeps_atoms_in_place() {
        let spec = SystemSpec {
            delay_terms: vec![
                DelayTerm { tau: 0.25, matrix: m1(0.2) },
                DelayTerm { tau: 1.0, matrix: m1(0.3) },
            ],
            ..SystemSpec::scalar(SystemKind::Ide, 0.0, 1.0)
        };
        for &h in &[0.125, 0.0625, 0.03125] {
            let g = discretize_measure(&spec, h).unwrap();
            for term in &spec.delay_terms {
                let j = (term.tau / h).round() as usize;
                assert_eq!(j as f64 * h, term.tau);
                assert_eq!(g.entries[j][(0, 0)], term.matrix[(0, 0)]);
            }
        }
    }
}
