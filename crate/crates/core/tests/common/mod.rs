//! Independent reference values shared by the integration tests.
#![allow(dead_code)]

use delaystab_core::linalg::RMat;
use delaystab_core::model::{PiecewiseKernel, SystemKind, SystemSpec};
use num_complex::Complex64;

pub fn scalar(kind: SystemKind, a: f64) -> SystemSpec {
    SystemSpec::scalar(kind, a, 1.0)
}

/// `a delta_1 + c ds` on `[0, 1]`.
pub fn mixed(kind: SystemKind, a: f64, c: f64) -> SystemSpec {
    let mut s = SystemSpec::scalar(kind, a, 1.0);
    s.kernel = PiecewiseKernel::single(1.0, vec![RMat::from_element(1, 1, c)]);
    s
}

/// Kernel-only spec with `N(s) = sum_m coeffs[m] s^m` on `[0, 1]`.
pub fn kernel_only(kind: SystemKind, coeffs: &[f64]) -> SystemSpec {
    let mut s = SystemSpec::scalar(kind, 0.0, 1.0);
    s.delay_terms.clear();
    s.kernel = PiecewiseKernel::single(
        1.0,
        coeffs.iter().map(|&c| RMat::from_element(1, 1, c)).collect(),
    );
    s
}

/// Zeros of `z + a e^{-z}` in a rectangle: coarse scan of `|f|` for local
/// minima, then Newton with the analytic derivative `1 - a e^{-z}`.
pub fn scalar_dde_roots(a: f64, x: (f64, f64), y: (f64, f64)) -> Vec<Complex64> {
    let f = |z: Complex64| z + a * (-z).exp();
    let df = |z: Complex64| Complex64::new(1.0, 0.0) - a * (-z).exp();
    let step = 0.01;
    let nx = ((x.1 - x.0) / step) as usize;
    let ny = ((y.1 - y.0) / step) as usize;
    let at = |i: usize, j: usize| Complex64::new(x.0 + i as f64 * step, y.0 + j as f64 * step);
    let mut roots: Vec<Complex64> = Vec::new();
    for i in 1..nx {
        for j in 1..ny {
            let v = f(at(i, j)).norm();
            let is_min = [(0, 1), (2, 1), (1, 0), (1, 2)]
                .iter()
                .all(|&(di, dj)| v <= f(at(i + di - 1, j + dj - 1)).norm());
            if !is_min {
                continue;
            }
            let mut z = at(i, j);
            for _ in 0..50 {
                z -= f(z) / df(z);
            }
            if f(z).norm() < 1e-13 && roots.iter().all(|r| (r - z).norm() > 1e-8) {
                roots.push(z);
            }
        }
    }
    roots
}

/// Real zero of `z + a e^{-z}` in `[lo, hi]` by bisection.
pub fn scalar_dde_real_root(a: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |z: f64| z + a * (-z).exp();
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fundamental solution of `x'(t) = -a x(t - 1)`, `x(0) = 1`, zero history:
/// `sum_{k <= t} (-a)^k (t - k)^k / k!`.
pub fn scalar_dde_fundamental(a: f64, t: f64) -> f64 {
    let mut acc = 0.0;
    let mut fact = 1.0;
    let mut k = 0usize;
    while k as f64 <= t {
        if k > 0 {
            fact *= k as f64;
        }
        acc += (-a).powi(k as i32) * (t - k as f64).powi(k as i32) / fact;
        k += 1;
    }
    acc
}

/// Composite Gauss–Legendre (5 nodes) quadrature of `f` on `[a, b]`.
pub fn gauss5(f: impl Fn(f64) -> Complex64, a: f64, b: f64, panels: usize) -> Complex64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let w = (b - a) / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * w;
        for (x, wt) in X.iter().zip(W) {
            acc += f(c + 0.5 * w * x) * (0.5 * w * wt);
        }
    }
    acc
}
