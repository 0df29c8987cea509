//! The characteristic matrix `Delta(z)`, its determinant and `d/dz det Delta`.
//!
//! IDE: `Delta(z) = I + sum_k A_k e^{-tau_k z} + R(z)`,
//! DDE: `Delta(z) = z I + sum_k A_k e^{-tau_k z} + R(z)`,
//! with `R(z) = int_0^{tau_star} N(s) e^{-s z} ds` evaluated in closed form
//! piece by piece.

use num_complex::Complex64;

use crate::linalg::{det_with_pivot_ratio, op_norm_c, to_complex, CMat};
use crate::model::{SystemKind, SystemSpec};

/// Below `|z| tau_star < Z_SWITCH` the kernel transform uses a Taylor expansion.
pub const Z_SWITCH: f64 = 1e-2;
const TAYLOR_DEGREE: usize = 12;
/// LU pivot ratio below which Jacobi's formula is abandoned for finite differences.
const SINGULAR_PIVOT_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CharValue {
    pub z: Complex64,
    pub delta: CMat,
    pub det: Complex64,
    pub det_derivative: Complex64,
}

impl CharValue {
    /// Scale used to normalize residuals: `max(1, |Delta(z)|)`.
    pub fn scale(&self) -> f64 {
        op_norm_c(&self.delta).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformBranch {
    Auto,
    Series,
    ClosedForm,
}

/// Upward recurrence is well conditioned only once `|z| b` exceeds the moment order.
const UPWARD_MIN_ZB: f64 = 4.0;
/// Extra orders for the downward recurrence; its seed error shrinks like `(|z| b)^k / k!`.
const DOWNWARD_EXTRA: usize = 48;

/// `int_a^b s^m e^{-zs} ds` for `m = 0..=max_m` from the antiderivative
/// recurrence `(m + 1) I_m = z I_{m+1} + [s^{m+1} e^{-zs}]_a^b`.
///
/// For `|z| b >= 4` the recurrence runs upward from `I_0 = (e^{-za} - e^{-zb}) / z`;
/// below that it runs downward from a zero seed at order `max_m + 48`.
pub fn exp_moments_closed(a: f64, b: f64, z: Complex64, max_m: usize) -> Vec<Complex64> {
    let ea = (-z * a).exp();
    let eb = (-z * b).exp();
    if z.norm() * a.abs().max(b.abs()) >= UPWARD_MIN_ZB {
        let inv = z.inv();
        let mut out = Vec::with_capacity(max_m + 1);
        out.push((ea - eb) * inv);
        let (mut pa, mut pb) = (1.0, 1.0);
        for m in 1..=max_m {
            pa *= a;
            pb *= b;
            let boundary = (ea * pa - eb * pb) * inv;
            let prev = out[m - 1];
            out.push(boundary + prev * (m as f64) * inv);
        }
        return out;
    }
    let top = max_m + DOWNWARD_EXTRA;
    let mut out = vec![Complex64::new(0.0, 0.0); max_m + 1];
    let mut next = Complex64::new(0.0, 0.0);
    for m in (0..top).rev() {
        let p = (m + 1) as i32;
        let boundary = eb * b.powi(p) - ea * a.powi(p);
        let cur = (z * next + boundary) / (m + 1) as f64;
        if m <= max_m {
            out[m] = cur;
        }
        next = cur;
    }
    out
}

/// Same moments from the degree-12 Taylor expansion of `e^{-zs}`, integrated exactly.
pub fn exp_moments_series(a: f64, b: f64, z: Complex64, max_m: usize) -> Vec<Complex64> {
    (0..=max_m)
        .map(|m| {
            let mut coef = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..=TAYLOR_DEGREE {
                if k > 0 {
                    coef = coef * (-z) / k as f64;
                }
                let p = (m + k + 1) as i32;
                acc += coef * ((b.powi(p) - a.powi(p)) / p as f64);
            }
            acc
        })
        .collect()
}

/// Precomputed complex data for repeated evaluation of `Delta` at many points.
#[derive(Debug, Clone)]
pub struct CharMatrix<'a> {
    spec: &'a SystemSpec,
    atoms: Vec<(f64, CMat)>,
    pieces: Vec<(f64, f64, Vec<CMat>)>,
    identity: CMat,
}

impl<'a> CharMatrix<'a> {
    pub fn new(spec: &'a SystemSpec) -> Self {
        let n = spec.dimension;
        Self {
            spec,
            atoms: spec
                .delay_terms
                .iter()
                .map(|d| (d.tau, to_complex(&d.matrix)))
                .collect(),
            pieces: spec
                .kernel
                .pieces
                .iter()
                .map(|p| (p.start, p.end, p.coeffs.iter().map(to_complex).collect()))
                .collect(),
            identity: CMat::identity(n, n),
        }
    }

    pub fn spec(&self) -> &SystemSpec {
        self.spec
    }

    fn use_series(&self, z: Complex64, branch: TransformBranch) -> bool {
        match branch {
            TransformBranch::Series => true,
            TransformBranch::ClosedForm => false,
            TransformBranch::Auto => z.norm() * self.spec.tau_star < Z_SWITCH,
        }
    }

    /// `sum_m C_m int s^{m + shift} e^{-zs} ds` over all pieces.
    fn kernel_transform(&self, z: Complex64, shift: usize, branch: TransformBranch) -> CMat {
        let n = self.spec.dimension;
        let mut acc = CMat::zeros(n, n);
        let series = self.use_series(z, branch);
        for (a, b, coeffs) in &self.pieces {
            let max_m = coeffs.len() - 1 + shift;
            let moments = if series {
                exp_moments_series(*a, *b, z, max_m)
            } else {
                exp_moments_closed(*a, *b, z, max_m)
            };
            for (m, c) in coeffs.iter().enumerate() {
                acc += c * moments[m + shift];
            }
        }
        acc
    }

    /// `I + sum_k A_k e^{-tau_k z}`
    pub fn delta0(&self, z: Complex64) -> CMat {
        let mut acc = self.identity.clone();
        for (tau, a) in &self.atoms {
            acc += a * (-z * *tau).exp();
        }
        acc
    }

    /// `R(z) = int N(s) e^{-sz} ds`
    pub fn r(&self, z: Complex64) -> CMat {
        self.kernel_transform(z, 0, TransformBranch::Auto)
    }

    pub fn r_with_branch(&self, z: Complex64, branch: TransformBranch) -> CMat {
        self.kernel_transform(z, 0, branch)
    }

    pub fn delta(&self, z: Complex64) -> CMat {
        let mut d = self.delta0(z) + self.r(z);
        if self.spec.kind == SystemKind::Dde {
            // z I + mu_hat(z) = z I + (Delta_0 - I) + R
            d += &self.identity * (z - 1.0);
        }
        d
    }

    /// Termwise derivative `-sum tau_k A_k e^{-tau_k z} - int s N(s) e^{-sz} ds (+ I)`.
    pub fn delta_prime(&self, z: Complex64) -> CMat {
        let mut acc = -self.kernel_transform(z, 1, TransformBranch::Auto);
        for (tau, a) in &self.atoms {
            acc -= a * ((-z * *tau).exp() * *tau);
        }
        if self.spec.kind == SystemKind::Dde {
            acc += &self.identity;
        }
        acc
    }

    pub fn det(&self, z: Complex64) -> Complex64 {
        let d = self.delta(z);
        if d.nrows() == 1 {
            d[(0, 0)]
        } else {
            d.lu().determinant()
        }
    }

    pub fn eval(&self, z: Complex64) -> CharValue {
        let delta = self.delta(z);
        let n = delta.nrows();
        let (det, pivot_ratio) = det_with_pivot_ratio(&delta);
        let dprime = self.delta_prime(z);
        let det_derivative = if n == 1 {
            dprime[(0, 0)]
        } else if pivot_ratio > SINGULAR_PIVOT_RATIO {
            // Jacobi: det * tr(Delta^{-1} Delta')
            match delta.clone().lu().solve(&dprime) {
                Some(x) => det * x.trace(),
                None => self.det_derivative_fd(z),
            }
        } else {
            self.det_derivative_fd(z)
        };
        CharValue {
            z,
            delta,
            det,
            det_derivative,
        }
    }

    /// Central difference of `det` with step `1e-6 max(1, |z|)`.
    pub fn det_derivative_fd(&self, z: Complex64) -> Complex64 {
        let h = 1e-6 * z.norm().max(1.0);
        (self.det(z + h) - self.det(z - h)) / (2.0 * h)
    }
}

pub fn eval_delta0(spec: &SystemSpec, z: Complex64) -> CMat {
    CharMatrix::new(spec).delta0(z)
}

#[allow(non_snake_case)]
pub fn eval_R(spec: &SystemSpec, z: Complex64) -> CMat {
    CharMatrix::new(spec).r(z)
}

pub fn eval_char(spec: &SystemSpec, z: Complex64) -> CharValue {
    CharMatrix::new(spec).eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;
    use crate::model::{DelayTerm, PiecewiseKernel};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn m1(v: f64) -> RMat {
        RMat::from_element(1, 1, v)
    }

    fn kernel_only(coeffs: &[f64]) -> SystemSpec {
        SystemSpec {
            delay_terms: vec![],
            kernel: PiecewiseKernel::single(1.0, coeffs.iter().map(|&v| m1(v)).collect()),
            ..SystemSpec::scalar(SystemKind::Ide, 0.0, 1.0)
        }
    }

    /// Composite Gauss-Legendre (5 nodes) on many panels; independent of the closed forms.
    fn quad(f: impl Fn(f64) -> Complex64, a: f64, b: f64, panels: usize) -> Complex64 {
        let nodes = [
            (0.0, 128.0 / 225.0),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
            (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
        ];
        let w = (b - a) / panels as f64;
        let mut acc = c(0.0, 0.0);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * w;
            for (x, wt) in nodes {
                acc += f(mid + 0.5 * w * x) * (wt * 0.5 * w);
            }
        }
        acc
    }

    #[test]
    fn delta0_scalar_values() {
        let spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        assert!((eval_delta0(&spec, c(0.0, 0.0))[(0, 0)] - c(1.5, 0.0)).norm() < 1e-15);
        assert!((eval_delta0(&spec, c(0.0, PI))[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn delta0_matches_termwise_sum() {
        let a = RMat::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.2]);
        let spec = SystemSpec {
            kind: SystemKind::Ide,
            dimension: 2,
            tau_star: 2.0,
            delay_terms: vec![DelayTerm { tau: 2.0, matrix: a }],
            kernel: PiecewiseKernel::empty(),
        };
        let z = c(0.5, 1.0);
        let e = (-z * 2.0).exp();
        let d = eval_delta0(&spec, z);
        assert!((d[(0, 0)] - (1.0 + 0.3 * e)).norm() < 1e-14);
        assert!((d[(1, 1)] - (1.0 - 0.2 * e)).norm() < 1e-14);
        assert!(d[(0, 1)].norm() < 1e-14 && d[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn r_constant_kernel() {
        let spec = kernel_only(&[1.0]);
        assert!((eval_R(&spec, c(0.0, 0.0))[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        let want = 1.0 - (-1.0f64).exp();
        assert!((eval_R(&spec, c(1.0, 0.0))[(0, 0)].re - want).abs() < 1e-15);
        assert!((want - 0.632_121).abs() < 1e-6);
    }

    #[test]
    fn r_linear_kernel_matches_quadrature() {
        let spec = kernel_only(&[0.0, 1.0]);
        let z = c(2.0, 0.0);
        let oracle = quad(|s| (-z * s).exp() * s, 0.0, 1.0, 64);
        assert!((eval_R(&spec, z)[(0, 0)] - oracle).norm() < 1e-12);
        let z = c(-0.7, 5.3);
        let oracle = quad(|s| (-z * s).exp() * s, 0.0, 1.0, 64);
        assert!((eval_R(&spec, z)[(0, 0)] - oracle).norm() < 1e-12);
    }

    #[test]
    fn cubic_piecewise_kernel_matches_quadrature() {
        let spec = SystemSpec {
            kernel: PiecewiseKernel {
                pieces: vec![
                    crate::model::KernelPiece {
                        start: 0.0,
                        end: 0.4,
                        coeffs: vec![m1(0.1), m1(-0.5), m1(0.0), m1(2.0)],
                    },
                    crate::model::KernelPiece {
                        start: 0.4,
                        end: 1.0,
                        coeffs: vec![m1(0.3), m1(0.2)],
                    },
                ],
            },
            ..kernel_only(&[0.0])
        };
        let cm = CharMatrix::new(&spec);
        for z in [c(1.3, -2.0), c(-1.0, 20.0), c(0.3, 0.1)] {
            let f = |s: f64| {
                let n = spec.kernel.value(s, 1)[(0, 0)];
                (-z * s).exp() * n
            };
            let oracle = quad(f, 0.0, 0.4, 64) + quad(f, 0.4, 1.0, 64);
            assert!((cm.r(z)[(0, 0)] - oracle).norm() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn branches_agree_on_switch_ring() {
        for coeffs in [vec![1.0], vec![0.3, -0.7], vec![0.1, 0.2, -0.4, 1.5]] {
            let spec = kernel_only(&coeffs);
            let cm = CharMatrix::new(&spec);
            for k in 0..24 {
                let radius = Z_SWITCH * (0.5 + 1.5 * (k % 6) as f64 / 5.0);
                let theta = 2.0 * PI * k as f64 / 24.0;
                let z = Complex64::from_polar(radius, theta);
                let a = cm.r_with_branch(z, TransformBranch::Series)[(0, 0)];
                let b = cm.r_with_branch(z, TransformBranch::ClosedForm)[(0, 0)];
                assert!((a - b).norm() < 1e-12, "coeffs={coeffs:?} z={z} diff={}", (a - b).norm());
            }
        }
    }

    #[test]
    fn det_at_closed_form_points() {
        let spec = SystemSpec::scalar(SystemKind::Ide, 0.5, 1.0);
        let v = eval_char(&spec, c(2f64.ln(), PI));
        assert!((v.det - c(0.75, 0.0)).norm() < 1e-15);
        let v = eval_char(&spec, c(0.5f64.ln(), PI));
        assert!(v.det.norm() < 1e-14);

        let dde = SystemSpec::scalar(SystemKind::Dde, 1.0, 1.0);
        let v = eval_char(&dde, c(0.0, 0.0));
        assert!((v.det - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let a = RMat::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3]);
        let spec = SystemSpec {
            kind: SystemKind::Dde,
            dimension: 2,
            tau_star: 1.0,
            delay_terms: vec![
                DelayTerm { tau: 0.5, matrix: a.clone() },
                DelayTerm { tau: 1.0, matrix: a.transpose() },
            ],
            kernel: PiecewiseKernel::single(
                1.0,
                vec![RMat::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 0.1]), RMat::identity(2, 2)],
            ),
        };
        let cm = CharMatrix::new(&spec);
        for z in [c(0.3, 1.1), c(-1.0, 4.0), c(2.0, -0.5)] {
            let v = cm.eval(z);
            let fd = cm.det_derivative_fd(z);
            assert!(
                (v.det_derivative - fd).norm() <= 1e-6 * v.det_derivative.norm().max(1e-12),
                "z={z}"
            );
        }
    }

    #[test]
    fn det_tends_to_one_far_right() {
        let spec = SystemSpec::scalar(SystemKind::Ide, 0.9, 1.0);
        let x = 50.0 / spec.first_delay();
        assert!((eval_char(&spec, c(x, 0.0)).det - 1.0).norm() < 1e-6);
    }
}
