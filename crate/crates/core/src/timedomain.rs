//! Grid solvers: forcing, stepping, resolvents and the explicit solution formulas.
//!
//! Time is discretized as `t_j = j h` with `tau_star = S h` and every delay on
//! the grid. Distributed convolutions use the composite trapezoid rule. Where
//! an atom `A_k` meets the jump of `X` at zero (`t_j = tau_k`), the right
//! limit belongs to the solution value `x(0)` and the left limit to the
//! history value `X_0(0)`; [`ForcingFunction`] keeps both one-sided values.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::charmat::CharMatrix;
use crate::error::{Error, Result};
use crate::linalg::{solve_real, RMat, RVec};
use crate::model::{discretize_measure, GridMeasure, HistoryFunction, Provenance, SystemKind, SystemSpec, Trajectory};

/// Sequence of `rows x cols` blocks stored row-major, back to back.
#[derive(Debug, Clone)]
struct Blocks {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Blocks {
    fn zeros(rows: usize, cols: usize, len: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols * len],
        }
    }

    fn size(&self) -> usize {
        self.rows * self.cols
    }

    fn len(&self) -> usize {
        self.data.len() / self.size().max(1)
    }

    fn get(&self, j: usize) -> &[f64] {
        let s = self.size();
        &self.data[j * s..(j + 1) * s]
    }

    fn get_mut(&mut self, j: usize) -> &mut [f64] {
        let s = self.size();
        &mut self.data[j * s..(j + 1) * s]
    }

    fn set(&mut self, j: usize, m: &RMat) {
        let cols = self.cols;
        let b = self.get_mut(j);
        for r in 0..m.nrows() {
            for c in 0..cols {
                b[r * cols + c] = m[(r, c)];
            }
        }
    }

    fn matrix(&self, j: usize) -> RMat {
        let b = self.get(j);
        RMat::from_row_slice(self.rows, self.cols, b)
    }
}

fn flatten(m: &RMat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// `out += coef * a * b` with `a` an `n x n` block and `b` an `n x c` block.
#[inline]
fn gemm_acc(out: &mut [f64], coef: f64, a: &[f64], b: &[f64], n: usize, c: usize) {
    if n == 1 && c == 1 {
        out[0] += coef * a[0] * b[0];
        return;
    }
    for r in 0..n {
        for k in 0..n {
            let ark = coef * a[r * n + k];
            if ark == 0.0 {
                continue;
            }
            for q in 0..c {
                out[r * c + q] += ark * b[k * c + q];
            }
        }
    }
}

fn apply(a: &[f64], b: &[f64], n: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    gemm_acc(&mut out, 1.0, a, b, n, c);
    out
}

/// History-induced forcing `f(t) = -int_{(t, tau_star]} mu(ds) X_0(t - s)` on `[0, tau_star]`.
///
/// `values[j]` is the right limit at `t_j` (atoms with `tau_k > t_j`);
/// `left_values[j]` also counts atoms with `tau_k = t_j` against `X_0(0)`.
/// Both vanish for `t > tau_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingFunction {
    pub step: f64,
    pub values: Vec<RVec>,
    pub left_values: Vec<RVec>,
}

impl ForcingFunction {
    pub fn at(&self, j: usize) -> RVec {
        self.values
            .get(j)
            .cloned()
            .unwrap_or_else(|| RVec::zeros(self.dimension()))
    }

    pub fn left_at(&self, j: usize) -> RVec {
        self.left_values
            .get(j)
            .cloned()
            .unwrap_or_else(|| RVec::zeros(self.dimension()))
    }

    pub fn dimension(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }

    fn blocks(&self) -> (Blocks, Blocks) {
        let n = self.dimension();
        let mut right = Blocks::zeros(n, 1, self.values.len());
        let mut left = Blocks::zeros(n, 1, self.values.len());
        for (j, (r, l)) in self.values.iter().zip(&self.left_values).enumerate() {
            right.get_mut(j).copy_from_slice(r.as_slice());
            left.get_mut(j).copy_from_slice(l.as_slice());
        }
        (right, left)
    }
}

/// Grid data shared by every solver for one `(spec, h)`.
struct Engine {
    n: usize,
    h: f64,
    cells: usize,
    atoms: Vec<(usize, Vec<f64>)>,
    /// `N(i h)` for `i = 0..=S`, or `None` without a kernel.
    kernel: Option<Vec<Vec<f64>>>,
}

impl Engine {
    fn new(spec: &SystemSpec, h: f64) -> Result<Self> {
        let cells = spec.horizon_cells(h)?;
        let lags = spec.delay_lags(h)?;
        let n = spec.dimension;
        let atoms = spec
            .delay_terms
            .iter()
            .zip(lags)
            .map(|(d, lag)| (lag, flatten(&d.matrix)))
            .collect();
        let kernel = (!spec.kernel.is_empty()).then(|| {
            (0..=cells)
                .map(|i| flatten(&spec.kernel.value(i as f64 * h, n)))
                .collect()
        });
        Ok(Self {
            n,
            h,
            cells,
            atoms,
            kernel,
        })
    }

    fn steps(&self, t_end: f64) -> Result<usize> {
        let tau_star = self.cells as f64 * self.h;
        if !(t_end.is_finite() && t_end >= tau_star * (1.0 - 1e-12)) {
            return Err(Error::Domain(format!(
                "horizon {t_end} must be at least tau_star = {tau_star}"
            )));
        }
        Ok((t_end / self.h - 1e-9).ceil() as usize)
    }

    /// `(I + c N(0))^{-1}` as a flat block.
    fn implicit_inverse(&self, c: f64) -> Result<Vec<f64>> {
        let n = self.n;
        let mut m = RMat::identity(n, n);
        if let Some(k) = &self.kernel {
            m += RMat::from_row_slice(n, n, &k[0]) * c;
        }
        let inv = solve_real(&m, &RMat::identity(n, n)).ok_or_else(|| {
            Error::Singular(format!(
                "I + {c:e} N(0) is singular; the discrete equation has no unique solution at step {}",
                self.h
            ))
        })?;
        Ok(flatten(&inv))
    }

    /// Convolution memory at `t_j` excluding the lag-0 kernel node:
    /// `sum_{lag < j (or <= j)} A x_{j-lag} + sum_{i=1}^{m} w_i N_i x_{j-i}`.
    fn memory(&self, xs: &Blocks, j: usize, include_lag_j: bool, out: &mut [f64]) {
        out.fill(0.0);
        let (n, c) = (self.n, xs.cols);
        for (lag, a) in &self.atoms {
            if *lag < j || (include_lag_j && *lag == j) {
                gemm_acc(out, 1.0, a, xs.get(j - lag), n, c);
            }
        }
        if let Some(k) = &self.kernel {
            let m = j.min(self.cells);
            for i in 1..=m {
                let w = if i == m { 0.5 * self.h } else { self.h };
                gemm_acc(out, w, &k[i], xs.get(j - i), n, c);
            }
        }
    }

    fn forcing(&self, history: &HistoryFunction) -> ForcingFunction {
        let (n, s) = (self.n, self.cells);
        let hist: Vec<&[f64]> = history.samples.iter().map(|v| v.as_slice()).collect();
        let mut values = Vec::with_capacity(s + 1);
        let mut left_values = Vec::with_capacity(s + 1);
        for j in 0..=s {
            let mut f = vec![0.0; n];
            let mut at_j = vec![0.0; n];
            for (lag, a) in &self.atoms {
                if *lag > j {
                    gemm_acc(&mut f, -1.0, a, hist[s + j - lag], n, 1);
                } else if *lag == j {
                    gemm_acc(&mut at_j, -1.0, a, hist[s], n, 1);
                }
            }
            if let Some(k) = &self.kernel {
                for i in j..=s {
                    if j == s {
                        break;
                    }
                    let w = if i == j || i == s { 0.5 * self.h } else { self.h };
                    gemm_acc(&mut f, -w, &k[i], hist[s + j - i], n, 1);
                }
            }
            let left: Vec<f64> = f.iter().zip(&at_j).map(|(a, b)| a + b).collect();
            values.push(RVec::from_vec(f));
            left_values.push(RVec::from_vec(left));
        }
        ForcingFunction {
            step: self.h,
            values,
            left_values,
        }
    }

    /// IDE marching: `(I + (h/2) N(0)) x_j = f_j - memory_j`.
    fn march_ide(&self, f: &Blocks, steps: usize) -> Result<Blocks> {
        let inv = self.implicit_inverse(0.5 * self.h)?;
        let (n, c) = (self.n, f.cols);
        let mut xs = Blocks::zeros(n, c, steps + 1);
        let mut mem = vec![0.0; n * c];
        for j in 0..=steps {
            let mut rhs: Vec<f64> = if j < f.len() { f.get(j).to_vec() } else { vec![0.0; n * c] };
            if j > 0 {
                self.memory(&xs, j, true, &mut mem);
                for (r, m) in rhs.iter_mut().zip(&mem) {
                    *r -= m;
                }
                let x = apply(&inv, &rhs, n, c);
                xs.get_mut(j).copy_from_slice(&x);
            } else {
                xs.get_mut(0).copy_from_slice(&rhs);
            }
        }
        Ok(xs)
    }

    /// DDE trapezoidal marching `x_{j+1} = x_j + (h/2)(g_j^+ + g_{j+1}^-)`.
    fn march_dde(&self, f_right: &Blocks, f_left: &Blocks, x0: &[f64], steps: usize) -> Result<Blocks> {
        let h = self.h;
        let inv = self.implicit_inverse(0.25 * h * h)?;
        let (n, c) = (self.n, x0.len() / self.n);
        let zero = vec![0.0; n * c];
        let fr = |j: usize| if j < f_right.len() { f_right.get(j) } else { &zero[..] };
        let fl = |j: usize| if j < f_left.len() { f_left.get(j) } else { &zero[..] };
        let mut xs = Blocks::zeros(n, c, steps + 1);
        xs.get_mut(0).copy_from_slice(x0);
        let mut mem = vec![0.0; n * c];
        // g_j^+ for the current j
        let mut g_plus: Vec<f64> = fr(0).to_vec();
        for j in 0..steps {
            // known part of g_{j+1}^- (everything but the implicit lag-0 node)
            self.memory(&xs, j + 1, false, &mut mem);
            let known: Vec<f64> = fl(j + 1).iter().zip(&mem).map(|(f, m)| f - m).collect();
            let rhs: Vec<f64> = xs
                .get(j)
                .iter()
                .zip(g_plus.iter().zip(&known))
                .map(|(x, (gp, gk))| x + 0.5 * h * (gp + gk))
                .collect();
            let next = apply(&inv, &rhs, n, c);
            xs.get_mut(j + 1).copy_from_slice(&next);
            // g_{j+1}^+ = known - (h/2) N_0 x_{j+1} + (f^+ - f^-) - atoms landing on x(0)
            let mut gp = known;
            for ((g, r), l) in gp.iter_mut().zip(fr(j + 1)).zip(fl(j + 1)) {
                *g += r - l;
            }
            for (lag, a) in &self.atoms {
                if *lag == j + 1 {
                    gemm_acc(&mut gp, -1.0, a, xs.get(0), n, c);
                }
            }
            if let Some(k) = &self.kernel {
                gemm_acc(&mut gp, -0.5 * h, &k[0], xs.get(j + 1), n, c);
            }
            g_plus = gp;
        }
        Ok(xs)
    }

    /// `sum_{i=0}^{m} w_i N_i x_{j-i}` including the lag-0 node, plus atoms up to lag `j`.
    fn full_convolution(&self, xs: &Blocks, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; xs.size()];
        self.memory(xs, j, true, &mut out);
        if let (Some(k), true) = (&self.kernel, j > 0) {
            gemm_acc(&mut out, 0.5 * self.h, &k[0], xs.get(j), self.n, xs.cols);
        }
        out
    }
}

fn check_kind(spec: &SystemSpec, kind: SystemKind, op: &str) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Input(format!(
            "{op} needs a {} system",
            match kind {
                SystemKind::Ide => "ide",
                SystemKind::Dde => "dde",
            }
        )));
    }
    Ok(())
}

fn check_history(spec: &SystemSpec, history: &HistoryFunction, h: f64) -> Result<()> {
    if (history.step - h).abs() > 1e-12 * h {
        return Err(Error::Input(format!(
            "history step {} does not match the solver step {h}",
            history.step
        )));
    }
    history.check(spec)
}

/// Forcing induced by the history on `[0, tau_star]`.
pub fn build_forcing(spec: &SystemSpec, history: &HistoryFunction, h: f64) -> Result<ForcingFunction> {
    check_history(spec, history, h)?;
    Ok(Engine::new(spec, h)?.forcing(history))
}

/// History on `[-tau_star, 0)` followed by the solution blocks on `[0, T]`.
fn assemble(history: &HistoryFunction, cells: usize, xs: &Blocks, h: f64, provenance: Provenance) -> Trajectory {
    let mut values: Vec<RMat> = history.samples[..cells]
        .iter()
        .map(|v| RMat::from_column_slice(v.len(), 1, v.as_slice()))
        .collect();
    values.extend((0..xs.len()).map(|j| xs.matrix(j)));
    Trajectory {
        step: h,
        start_index: -(cells as i64),
        values,
        provenance,
    }
}

pub fn simulate_ide(spec: &SystemSpec, history: &HistoryFunction, t_end: f64, h: f64) -> Result<Trajectory> {
    check_kind(spec, SystemKind::Ide, "simulate_ide")?;
    check_history(spec, history, h)?;
    let engine = Engine::new(spec, h)?;
    let steps = engine.steps(t_end)?;
    let (f, _) = engine.forcing(history).blocks();
    let xs = engine.march_ide(&f, steps)?;
    Ok(assemble(history, engine.cells, &xs, h, Provenance::Stepping))
}

pub fn simulate_dde(spec: &SystemSpec, history: &HistoryFunction, t_end: f64, h: f64) -> Result<Trajectory> {
    check_kind(spec, SystemKind::Dde, "simulate_dde")?;
    check_history(spec, history, h)?;
    let engine = Engine::new(spec, h)?;
    let steps = engine.steps(t_end)?;
    let (fr, fl) = engine.forcing(history).blocks();
    let x0 = history.x0.as_ref().expect("checked");
    let xs = engine.march_dde(&fr, &fl, x0.as_slice(), steps)?;
    Ok(assemble(history, engine.cells, &xs, h, Provenance::Stepping))
}

/// Dispatches on the system kind.
pub fn simulate(spec: &SystemSpec, history: &HistoryFunction, t_end: f64, h: f64) -> Result<Trajectory> {
    match spec.kind {
        SystemKind::Ide => simulate_ide(spec, history, t_end, h),
        SystemKind::Dde => simulate_dde(spec, history, t_end, h),
    }
}

/// Grid resolvent: `(I + m_0) rho_j = m_j - sum_{i=1}^{j} m_i rho_{j-i}` for `t_j <= T`,
/// where `m` is the cell mass of `mu`.
pub fn compute_resolvent(spec: &SystemSpec, t_end: f64, h: f64) -> Result<GridMeasure> {
    check_kind(spec, SystemKind::Ide, "compute_resolvent")?;
    let engine = Engine::new(spec, h)?;
    let steps = engine.steps(t_end)?;
    let mu = discretize_measure(spec, h)?;
    let n = spec.dimension;
    let masses: Vec<Vec<f64>> = mu.entries.iter().map(flatten).collect();
    let cell0 = RMat::identity(n, n) + &mu.entries[0];
    let inv = solve_real(&cell0, &RMat::identity(n, n))
        .ok_or_else(|| Error::Singular(format!("I + mu([0, {h})) is singular")))?;
    let inv = flatten(&inv);
    let mut rho = Blocks::zeros(n, n, steps + 1);
    for j in 0..=steps {
        let mut rhs = if j < masses.len() { masses[j].clone() } else { vec![0.0; n * n] };
        for i in 1..=j.min(masses.len() - 1) {
            gemm_acc(&mut rhs, -1.0, &masses[i], rho.get(j - i), n, n);
        }
        let v = apply(&inv, &rhs, n, n);
        rho.get_mut(j).copy_from_slice(&v);
    }
    Ok(GridMeasure {
        step: h,
        entries: (0..=steps).map(|j| rho.matrix(j)).collect(),
    })
}

/// `mu([0, t])`, exact.
fn measure_cdf(spec: &SystemSpec, t: f64) -> RMat {
    let n = spec.dimension;
    let mut acc = spec.kernel.integral(0.0, t.min(spec.tau_star), n);
    for d in &spec.delay_terms {
        if d.tau <= t * (1.0 + 1e-12) + 1e-15 {
            acc += &d.matrix;
        }
    }
    acc
}

/// Largest entrywise residuals of the resolvent equations, measured on the
/// distribution functions at grid times: `(rho + mu * rho - mu, rho + rho * mu - mu)`.
/// Grid masses of `rho` sit at the left end of their cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventResiduals {
    pub left: f64,
    pub right: f64,
}

pub fn resolvent_residuals(spec: &SystemSpec, rho: &GridMeasure) -> Result<ResolventResiduals> {
    let h = rho.step;
    let engine = Engine::new(spec, h)?;
    let n = spec.dimension;
    let cum = rho.cumulative();
    let kernel_cells: Vec<RMat> = (0..engine.cells)
        .map(|i| spec.kernel.integral(i as f64 * h, (i + 1) as f64 * h, n))
        .collect();
    let cdf: Vec<RMat> = (0..rho.len()).map(|j| measure_cdf(spec, j as f64 * h)).collect();
    let mut left = 0.0_f64;
    let mut right = 0.0_f64;
    for j in 0..rho.len() {
        let mut l = cum[j].clone() - &cdf[j];
        for (d, (lag, _)) in spec.delay_terms.iter().zip(&engine.atoms) {
            if *lag <= j {
                l += &d.matrix * &cum[j - lag];
            }
        }
        for (i, m) in kernel_cells.iter().enumerate().take(j) {
            l += m * &cum[j - 1 - i];
        }
        let mut r = cum[j].clone() - &cdf[j];
        for i in 0..=j {
            r += &rho.entries[i] * &cdf[j - i];
        }
        left = left.max(crate::linalg::max_abs(&l));
        right = right.max(crate::linalg::max_abs(&r));
    }
    Ok(ResolventResiduals { left, right })
}

/// Fundamental solution `r' + mu * r = 0`, `r(0) = I`, zero history;
/// values are `n x n`, starting at `t = 0`.
pub fn differential_resolvent(spec: &SystemSpec, t_end: f64, h: f64) -> Result<Trajectory> {
    check_kind(spec, SystemKind::Dde, "differential_resolvent")?;
    let engine = Engine::new(spec, h)?;
    let steps = engine.steps(t_end)?;
    let n = spec.dimension;
    let empty = Blocks::zeros(n, n, 0);
    let xs = engine.march_dde(&empty, &empty, &flatten(&RMat::identity(n, n)), steps)?;
    Ok(Trajectory {
        step: h,
        start_index: 0,
        values: (0..xs.len()).map(|j| xs.matrix(j)).collect(),
        provenance: Provenance::Stepping,
    })
}

/// `max_j |(r_{j+1} - r_j)/h + (mu * r)(t_j)|` over the grid, entrywise.
pub fn differential_resolvent_residual(spec: &SystemSpec, r: &Trajectory) -> Result<f64> {
    let h = r.step;
    let engine = Engine::new(spec, h)?;
    let n = spec.dimension;
    let mut blocks = Blocks::zeros(n, n, r.len());
    for (j, v) in r.values.iter().enumerate() {
        blocks.set(j, v);
    }
    let mut worst = 0.0_f64;
    for j in 0..r.len().saturating_sub(1) {
        let conv = engine.full_convolution(&blocks, j);
        for ((a, b), c) in blocks.get(j + 1).iter().zip(blocks.get(j)).zip(&conv) {
            worst = worst.max(((a - b) / h + c).abs());
        }
    }
    Ok(worst)
}

/// Explicit solution formulas: `x = f - rho * f` (IDE) or `x = r x_0 + r * f` (DDE).
pub fn solve_via_resolvent(spec: &SystemSpec, history: &HistoryFunction, t_end: f64, h: f64) -> Result<Trajectory> {
    check_history(spec, history, h)?;
    let engine = Engine::new(spec, h)?;
    let steps = engine.steps(t_end)?;
    let forcing = engine.forcing(history);
    let (fr, fl) = forcing.blocks();
    let n = spec.dimension;
    let zero = vec![0.0; n];
    let f_at = |b: &Blocks, j: usize| -> Vec<f64> {
        if j < b.len() {
            b.get(j).to_vec()
        } else {
            zero.clone()
        }
    };
    let mut xs = Blocks::zeros(n, 1, steps + 1);
    match spec.kind {
        SystemKind::Ide => {
            let rho = compute_resolvent(spec, t_end, h)?;
            let rho: Vec<Vec<f64>> = rho.entries.iter().map(flatten).collect();
            for j in 0..=steps {
                let mut x = f_at(&fr, j);
                // f vanishes beyond tau_star, so only j - i <= S contributes
                let lo = j.saturating_sub(engine.cells);
                for i in lo..=j {
                    gemm_acc(&mut x, -1.0, &rho[i], fr.get(j - i), n, 1);
                }
                xs.get_mut(j).copy_from_slice(&x);
            }
        }
        SystemKind::Dde => {
            let r = differential_resolvent(spec, t_end, h)?;
            let r: Vec<Vec<f64>> = r.values.iter().map(flatten).collect();
            let x0 = history.x0.as_ref().expect("checked");
            for j in 0..=steps {
                let mut x = apply(&r[j], x0.as_slice(), n, 1);
                for i in 0..j {
                    let a = j - i;
                    let b = j - i - 1;
                    if b > engine.cells {
                        continue;
                    }
                    if a <= engine.cells {
                        gemm_acc(&mut x, 0.5 * h, &r[i], &f_at(&fl, a), n, 1);
                    }
                    gemm_acc(&mut x, 0.5 * h, &r[i + 1], &f_at(&fr, b), n, 1);
                }
                xs.get_mut(j).copy_from_slice(&x);
            }
        }
    }
    Ok(assemble(history, engine.cells, &xs, h, Provenance::ResolventFormula))
}

/// Unit null vector of `Delta(z0)`: the right singular vector of the smallest
/// singular value, rotated so its largest component is real and positive.
pub fn modal_vector(spec: &SystemSpec, z0: Complex64) -> Result<DVector<Complex64>> {
    let cm = CharMatrix::new(spec);
    let delta = cm.delta(z0);
    let n = spec.dimension;
    let svd = delta.clone().svd(false, true);
    let sv = &svd.singular_values;
    let (imin, smin) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, s)| (i, *s))
        .expect("nonempty");
    let smax = sv.max();
    if !(smin <= 1e-8 * smax.max(1.0)) {
        return Err(Error::NotARoot {
            re: z0.re,
            im: z0.im,
            residual: smin,
        });
    }
    let v_t = svd.v_t.expect("requested");
    let mut v = DVector::from_fn(n, |i, _| v_t[(imin, i)].conj());
    let (k, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .expect("nonempty");
    let phase = v[k] / v[k].norm();
    v /= phase;
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    Ok(v)
}

/// `X_0(s) = Re(e^{z0 s} v0)` on `[-tau_star, 0]`; DDEs get `x0 = Re(v0)`.
pub fn build_modal_history(spec: &SystemSpec, z0: Complex64, h: f64) -> Result<HistoryFunction> {
    let v = modal_vector(spec, z0)?;
    HistoryFunction::from_fn(spec, h, |s| modal_value(z0, &v, s))
}

fn modal_value(z0: Complex64, v: &DVector<Complex64>, t: f64) -> RVec {
    let e = (z0 * t).exp();
    RVec::from_fn(v.len(), |i, _| (e * v[i]).re)
}

/// Closed-form modal solution `Re(e^{z0 t} v0)` on `[-tau_star, T]`.
pub fn modal_trajectory(spec: &SystemSpec, z0: Complex64, t_end: f64, h: f64) -> Result<Trajectory> {
    let v = modal_vector(spec, z0)?;
    let engine = Engine::new(spec, h)?;
    let steps = engine.steps(t_end)?;
    let cells = engine.cells as i64;
    let values = (-cells..=steps as i64)
        .map(|k| {
            let x = modal_value(z0, &v, k as f64 * h);
            RMat::from_column_slice(x.len(), 1, x.as_slice())
        })
        .collect();
    Ok(Trajectory {
        step: h,
        start_index: -cells,
        values,
        provenance: Provenance::ModalClosedForm,
    })
}

/// Default horizon `max(10 tau_star, 20 / |alpha|)`, capped at `1e4 tau_star`.
pub fn default_horizon(spec: &SystemSpec, abscissa: Option<f64>) -> f64 {
    let base = 10.0 * spec.tau_star;
    let t = match abscissa {
        Some(a) if a != 0.0 => base.max(20.0 / a.abs()),
        Some(_) => 1e4 * spec.tau_star,
        None => base,
    };
    t.min(1e4 * spec.tau_star)
}

/// Step on the grid of every delay, near `tau_star / 1000`.
pub fn default_step(spec: &SystemSpec) -> Result<f64> {
    spec.suggest_step(spec.tau_star / 1000.0).ok_or_else(|| {
        Error::Input("delays admit no common grid step; pass --step explicitly".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PiecewiseKernel;

    fn ide(a: f64) -> SystemSpec {
        SystemSpec::scalar(SystemKind::Ide, a, 1.0)
    }

    fn dde(a: f64) -> SystemSpec {
        SystemSpec::scalar(SystemKind::Dde, a, 1.0)
    }

    fn kernel_only(kind: SystemKind, c: f64) -> SystemSpec {
        let mut s = SystemSpec::scalar(kind, 0.0, 1.0);
        s.delay_terms.clear();
        s.kernel = PiecewiseKernel::single(1.0, vec![RMat::from_element(1, 1, c)]);
        s
    }

    fn x(traj: &Trajectory, k: i64) -> f64 {
        traj.at(k).unwrap()[(0, 0)]
    }

    #[test]
    fn forcing_of_single_atom() {
        let spec = ide(0.5);
        let h = 0.25;
        let f = build_forcing(&spec, &HistoryFunction::constant(&spec, h, 1.0).unwrap(), h).unwrap();
        for j in 0..4 {
            assert_eq!(f.values[j][0], -0.5);
        }
        assert_eq!(f.values[4][0], 0.0);
        assert_eq!(f.left_values[4][0], -0.5);
        assert_eq!(f.at(9)[0], 0.0);
    }

    #[test]
    fn forcing_of_constant_kernel() {
        let spec = kernel_only(SystemKind::Ide, 0.7);
        let h = 0.01;
        let f = build_forcing(&spec, &HistoryFunction::constant(&spec, h, 1.0).unwrap(), h).unwrap();
        for (j, v) in f.values.iter().enumerate() {
            let t = j as f64 * h;
            assert!((v[0] + 0.7 * (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn ide_piecewise_constant_solution() {
        let spec = ide(0.5);
        let h = 0.01;
        let traj = simulate_ide(&spec, &HistoryFunction::constant(&spec, h, 1.0).unwrap(), 3.0, h).unwrap();
        for k in 0..300 {
            let expect = -0.5_f64 * (-0.5_f64).powi((k / 100) as i32);
            assert_eq!(x(&traj, k), expect, "k={k}");
        }
        assert_eq!(x(&traj, -1), 1.0);
    }

    #[test]
    fn zero_history_gives_zero() {
        let spec = ide(0.5);
        let h = 0.1;
        let hist = HistoryFunction::constant(&spec, h, 0.0).unwrap();
        let traj = simulate_ide(&spec, &hist, 2.0, h).unwrap();
        assert!(traj.values.iter().all(|v| v[(0, 0)] == 0.0));
    }

    #[test]
    fn dde_first_interval_is_linear() {
        let spec = dde(0.1);
        let h = 0.01;
        let traj = simulate_dde(&spec, &HistoryFunction::constant(&spec, h, 1.0).unwrap(), 1.0, h).unwrap();
        for k in 0..=100 {
            let t = k as f64 * h;
            assert!((x(&traj, k) - (1.0 - 0.1 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn dde_without_memory_is_constant() {
        let mut spec = dde(0.0);
        spec.delay_terms.clear();
        let h = 0.1;
        let mut hist = HistoryFunction::constant(&spec, h, 0.0).unwrap();
        hist.x0 = Some(RVec::from_element(1, 3.0));
        let traj = simulate_dde(&spec, &hist, 2.0, h).unwrap();
        assert!((0..=20).all(|k| x(&traj, k) == 3.0));
    }

    #[test]
    fn resolvent_of_single_atom_is_neumann_series() {
        let spec = ide(0.5);
        let h = 0.1;
        let rho = compute_resolvent(&spec, 10.0, h).unwrap();
        for (j, m) in rho.entries.iter().enumerate() {
            let v = m[(0, 0)];
            if j % 10 == 0 && j > 0 {
                let k = (j / 10) as i32;
                assert_eq!(v, -(-0.5_f64).powi(k), "j={j}");
            } else {
                assert_eq!(v, 0.0);
            }
        }
        let res = resolvent_residuals(&spec, &rho).unwrap();
        assert!(res.left < 1e-15 && res.right < 1e-15);
    }

    #[test]
    fn differential_resolvent_without_memory_is_identity() {
        let mut spec = SystemSpec::scalar(SystemKind::Dde, 0.0, 1.0);
        spec.delay_terms.clear();
        let r = differential_resolvent(&spec, 2.0, 0.1).unwrap();
        assert!(r.values.iter().all(|v| v[(0, 0)] == 1.0));
    }

    #[test]
    fn modal_history_requires_a_root() {
        let spec = ide(0.5);
        let err = build_modal_history(&spec, Complex64::new(0.0, 0.0), 0.1).unwrap_err();
        assert!(matches!(err, Error::NotARoot { .. }));
        let z0 = Complex64::new(0.5f64.ln(), std::f64::consts::PI);
        let hist = build_modal_history(&spec, z0, 0.1).unwrap();
        for (i, v) in hist.samples.iter().enumerate() {
            let s = -1.0 + i as f64 * 0.1;
            let expect = (s * 0.5f64.ln()).exp() * (std::f64::consts::PI * s).cos();
            assert!((v[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_defaults() {
        let spec = ide(0.5);
        assert_eq!(default_horizon(&spec, Some(-0.5)), 40.0);
        assert_eq!(default_horizon(&spec, Some(-5.0)), 10.0);
        assert_eq!(default_horizon(&spec, Some(-1e-9)), 1e4);
        assert_eq!(default_step(&spec).unwrap(), 1e-3);
    }
}
