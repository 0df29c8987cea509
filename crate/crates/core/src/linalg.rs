//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;

/// Operator 2-norm (largest singular value). This is the matrix norm `|M|`
/// used for total masses and stability constants.
pub fn op_norm(m: &RMat) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => m[(0, 0)].abs(),
        _ => m.clone().svd(false, false).singular_values.max(),
    }
}

pub fn op_norm_c(m: &CMat) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => m[(0, 0)].norm(),
        _ => m.clone().svd(false, false).singular_values.max(),
    }
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Determinant together with the pivot ratio `min |u_ii| / max |u_ii|` of the
/// LU factorization, a cheap proxy for how close the matrix is to singular.
pub fn det_with_pivot_ratio(m: &CMat) -> (Complex64, f64) {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)];
        return (v, if v.norm() == 0.0 { 0.0 } else { 1.0 });
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for i in 0..n {
        let a = u[(i, i)].norm();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    let ratio = if hi == 0.0 { 0.0 } else { lo / hi };
    (lu.determinant(), ratio)
}

/// Solves `a x = b` for a real square `a`, refusing near-singular systems.
pub fn solve_real(a: &RMat, b: &RMat) -> Option<RMat> {
    if a.nrows() == 1 {
        let d = a[(0, 0)];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        return Some(b / d);
    }
    let lu = a.clone().lu();
    let det = lu.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    lu.solve(b)
}
