//! Hermitian Toeplitz structures, PSD-cone projection and the ADMM solver for
//! Toeplitz-constrained trace-regularised least squares.
//!
//! The solver handles programs of the form
//!
//! ```text
//! min_{X', S_b, u_b}  ‖Y − S·X‖_F² + τ Σ_b (Tr S_b + Tr T(u_b))
//! s.t.               [[S_b, X'_b], [X'_bᴴ, T(u_b)]] ⪰ 0   for every block b
//! ```
//!
//! where `X'_b` is a contiguous row band of the decoupled matrix `X'` and `S_b`
//! is either a two-fold (block) Toeplitz or a one-fold Toeplitz matrix. Splitting:
//! the structured variables `Θ_b` are updated in closed form (diagonal averaging
//! plus a trace shift, elementwise data fit), `Z_b` is the PSD projection of
//! `Θ_b + Λ_b/ρ`, and the scaled-free dual `Λ_b` takes the usual ascent step.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::linalg::{frob_sq, hermitian_eigen, hermitian_part, is_finite, CMat, C64, ZERO};

/// Generator of a Hermitian Toeplitz matrix: first column, `u[0]` real.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzParam {
    pub u: Vec<C64>,
}

impl ToeplitzParam {
    pub fn new(mut u: Vec<C64>) -> Self {
        if let Some(u0) = u.first_mut() {
            u0.im = 0.0;
        }
        Self { u }
    }

    pub fn zeros(n: usize) -> Self {
        Self { u: vec![ZERO; n] }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn matrix(&self) -> CMat {
        toeplitz(&self.u)
    }
}

/// `T(u)`: entry `(i, j)` is `u[i−j]` below the diagonal and `conj(u[j−i])` above.
pub fn toeplitz(u: &[C64]) -> CMat {
    let n = u.len();
    CMat::from_fn(n, n, |i, j| {
        if i > j {
            u[i - j]
        } else if i == j {
            C64::new(u[0].re, 0.0)
        } else {
            u[j - i].conj()
        }
    })
}

/// Frobenius projection of a square matrix onto the Hermitian Toeplitz subspace.
pub fn project_toeplitz(h: &CMat) -> ToeplitzParam {
    let n = h.nrows();
    let mut u = vec![ZERO; n];
    for (k, uk) in u.iter_mut().enumerate() {
        let mut acc = ZERO;
        for j in 0..n - k {
            acc += h[(j + k, j)] + h[(j, j + k)].conj();
        }
        *uk = acc / (2.0 * (n - k) as f64);
    }
    ToeplitzParam::new(u)
}

/// Generators `x_{l,k}` of a two-fold Toeplitz matrix, `|l| < outer`, `|k| < inner`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFoldToeplitzParam {
    pub outer: usize,
    pub inner: usize,
    gen: Vec<C64>,
}

impl TwoFoldToeplitzParam {
    pub fn zeros(outer: usize, inner: usize) -> Self {
        Self { outer, inner, gen: vec![ZERO; (2 * outer - 1) * (2 * inner - 1)] }
    }

    #[inline]
    fn idx(&self, l: isize, k: isize) -> usize {
        let w = 2 * self.inner as isize - 1;
        ((l + self.outer as isize - 1) * w + (k + self.inner as isize - 1)) as usize
    }

    pub fn get(&self, l: isize, k: isize) -> C64 {
        self.gen[self.idx(l, k)]
    }

    /// Set `x_{l,k}` and its Hermitian mirror `x_{−l,−k}`.
    pub fn set(&mut self, l: isize, k: isize, value: C64) {
        let a = self.idx(l, k);
        let b = self.idx(-l, -k);
        if a == b {
            self.gen[a] = C64::new(value.re, 0.0);
        } else {
            self.gen[a] = value;
            self.gen[b] = value.conj();
        }
    }

    /// Block `T_l` (`inner × inner`).
    pub fn block(&self, l: isize) -> CMat {
        let n = self.inner;
        CMat::from_fn(n, n, |a, b| self.get(l, a as isize - b as isize))
    }

    pub fn matrix(&self) -> CMat {
        two_fold_toeplitz(self)
    }
}

/// `S(T)`: block `(i, j)` is `T_{i−j}`, entry `(a, b)` of `T_l` is `x_{l, a−b}`.
pub fn two_fold_toeplitz(param: &TwoFoldToeplitzParam) -> CMat {
    let (m, n) = (param.outer, param.inner);
    CMat::from_fn(m * n, m * n, |r, c| {
        let (i, a) = (r / n, r % n);
        let (j, b) = (c / n, c % n);
        param.get(i as isize - j as isize, a as isize - b as isize)
    })
}

/// Frobenius projection onto the two-fold Hermitian Toeplitz subspace.
pub fn project_two_fold(h: &CMat, outer: usize, inner: usize) -> TwoFoldToeplitzParam {
    let (m, n) = (outer, inner);
    assert_eq!(h.nrows(), m * n);
    let mut sums = vec![ZERO; (2 * m - 1) * (2 * n - 1)];
    let w = 2 * n - 1;
    for i in 0..m {
        for j in 0..m {
            let l = i + m - 1 - j;
            for a in 0..n {
                let row = i * n + a;
                for b in 0..n {
                    sums[l * w + (a + n - 1 - b)] += h[(row, j * n + b)];
                }
            }
        }
    }
    let mut out = TwoFoldToeplitzParam::zeros(m, n);
    for l in 0..=(m as isize - 1) {
        let kmin = if l == 0 { 0 } else { -(n as isize - 1) };
        for k in kmin..=(n as isize - 1) {
            let count = ((m as isize - l.abs()) * (n as isize - k.abs())) as f64;
            let s = sums[out.idx(l, k)] + sums[out.idx(-l, -k)].conj();
            out.set(l, k, s / (2.0 * count));
        }
    }
    out
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn psd_project(h: &CMat) -> Result<CMat> {
    if !is_finite(h) {
        return Err(FracError::EigFailure("non-finite input to PSD projection".into()));
    }
    let eig = hermitian_eigen(h)?;
    Ok(reconstruct_positive(&eig.values, &eig.vectors))
}

fn reconstruct_positive(values: &[f64], vectors: &CMat) -> CMat {
    let n = values.len();
    let keep: Vec<usize> = (0..n).filter(|&i| values[i] > 0.0).collect();
    if keep.is_empty() {
        return CMat::zeros(n, n);
    }
    let mut v = CMat::zeros(n, keep.len());
    let mut vs = CMat::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let col = vectors.column(i);
        v.set_column(c, &col);
        vs.set_column(c, &(col * C64::new(values[i], 0.0)));
    }
    hermitian_part(&(vs * v.adjoint()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    /// Initial penalty as a multiple of the trace weight after scaling the data to
    /// unit RMS; adapted by residual balancing.
    pub rho: f64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_iter: usize,
    /// Keep the per-iteration trace in the diagnostics.
    pub record_trace: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self { rho: 1.0, tol_rel: 1e-6, tol_abs: 1e-8, max_iter: 2000, record_trace: false }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.tol_rel > 0.0 && self.tol_abs > 0.0 && self.max_iter > 0) {
            return Err(FracError::InvalidConfig("ADMM settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
    /// False when `max_iter` was reached before the tolerances.
    pub converged: bool,
    /// Largest diagonal shift added at the end to make every block exactly PSD.
    pub psd_shift: f64,
    pub trace: Vec<TraceRow>,
}

impl Diagnostics {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,primal_res,dual_res,objective\n");
        for r in &self.trace {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.iter, r.primal_res, r.dual_res, r.objective));
        }
        s
    }
}

/// Structure of the upper-left block of one PSD constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftStructure {
    /// Two-fold Toeplitz with `outer × outer` blocks of size `inner`.
    TwoFold { outer: usize, inner: usize },
    /// One-fold Hermitian Toeplitz.
    Toeplitz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlockSpec {
    /// Rows of `X'` coupled by this constraint.
    pub rows: Range<usize>,
    pub left: LeftStructure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeftParam {
    TwoFold(TwoFoldToeplitzParam),
    Toeplitz(ToeplitzParam),
}

impl LeftParam {
    pub fn matrix(&self) -> CMat {
        match self {
            LeftParam::TwoFold(p) => p.matrix(),
            LeftParam::Toeplitz(p) => p.matrix(),
        }
    }

    fn shift_diagonal(&mut self, delta: f64) {
        match self {
            LeftParam::TwoFold(p) => {
                let v = p.get(0, 0);
                p.set(0, 0, v + delta);
            }
            LeftParam::Toeplitz(p) => p.u[0].re += delta,
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            LeftParam::TwoFold(p) => p.gen.iter_mut().for_each(|z| *z *= s),
            LeftParam::Toeplitz(p) => p.u.iter_mut().for_each(|z| *z *= s),
        }
    }

    fn trace(&self) -> f64 {
        match self {
            LeftParam::TwoFold(p) => p.get(0, 0).re * (p.outer * p.inner) as f64,
            LeftParam::Toeplitz(p) => p.u[0].re * p.u.len() as f64,
        }
    }
}

/// A Toeplitz-constrained denoising/completion program on `X'`.
#[derive(Debug, Clone)]
pub struct AnmProblem {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col, value)` of every observed entry of `X'`.
    pub observations: Vec<(usize, usize, C64)>,
    pub blocks: Vec<PsdBlockSpec>,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub x: CMat,
    pub left: Vec<LeftParam>,
    pub right: Vec<ToeplitzParam>,
    pub diagnostics: Diagnostics,
}

impl AdmmSolution {
    /// Assembled block matrix `[[S_b, X'_b], [X'_bᴴ, T(u_b)]]`.
    pub fn block_matrix(&self, spec: &PsdBlockSpec, b: usize) -> CMat {
        assemble(&self.left[b], &self.right[b], &self.x.rows(spec.rows.start, spec.rows.len()).into_owned())
    }
}

fn assemble(left: &LeftParam, right: &ToeplitzParam, xb: &CMat) -> CMat {
    let (r, c) = (xb.nrows(), xb.ncols());
    let mut out = CMat::zeros(r + c, r + c);
    out.view_mut((0, 0), (r, r)).copy_from(&left.matrix());
    out.view_mut((r, r), (c, c)).copy_from(&right.matrix());
    out.view_mut((0, r), (r, c)).copy_from(xb);
    out.view_mut((r, 0), (c, r)).copy_from(&xb.adjoint());
    out
}

impl AnmProblem {
    fn check(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(FracError::InvalidConfig(format!("tau must be positive (got {})", self.tau)));
        }
        let mut covered = vec![false; self.rows];
        for b in &self.blocks {
            if b.rows.end > self.rows {
                return Err(FracError::DimensionMismatch("PSD block rows exceed X'".into()));
            }
            if let LeftStructure::TwoFold { outer, inner } = b.left {
                if outer * inner != b.rows.len() {
                    return Err(FracError::DimensionMismatch("two-fold block size does not match its rows".into()));
                }
            }
            for r in b.rows.clone() {
                if covered[r] {
                    return Err(FracError::DimensionMismatch(format!("row {r} in two PSD blocks")));
                }
                covered[r] = true;
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(FracError::DimensionMismatch("PSD blocks do not cover every row of X'".into()));
        }
        for &(r, c, v) in &self.observations {
            if r >= self.rows || c >= self.cols {
                return Err(FracError::DimensionMismatch(format!("observation ({r},{c}) outside X'")));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(FracError::NonFinite("observations".into()));
            }
        }
        Ok(())
    }

    fn objective(&self, x: &CMat, left: &[LeftParam], right: &[ToeplitzParam]) -> f64 {
        let fit: f64 = self.observations.iter().map(|&(r, c, v)| (v - x[(r, c)]).norm_sqr()).sum();
        let tr: f64 = left.iter().map(LeftParam::trace).sum::<f64>()
            + right.iter().map(|u| u.u[0].re * u.len() as f64).sum::<f64>();
        fit + self.tau * tr
    }
}

const BALANCE_START: usize = 100;
const BALANCE_EVERY: usize = 50;

struct BlockState {
    z: CMat,
    lambda: CMat,
}

/// Solve the program with ADMM. Reaching `max_iter` is reported through
/// `diagnostics.converged = false`; the last iterate is returned.
pub fn admm_solve(problem: &AnmProblem, settings: &AdmmSettings) -> Result<AdmmSolution> {
    problem.check()?;
    settings.validate()?;
    let (rows, cols) = (problem.rows, problem.cols);

    // Normalise the data to unit RMS so the default penalty is well scaled.
    let energy: f64 = problem.observations.iter().map(|o| o.2.norm_sqr()).sum();
    let nobs = problem.observations.len().max(1) as f64;
    let scale = if energy > 0.0 { (energy / nobs).sqrt() } else { 1.0 };
    let tau = problem.tau / scale;

    let mut weight = CMat::zeros(rows, cols);
    let mut data = CMat::zeros(rows, cols);
    for &(r, c, v) in &problem.observations {
        weight[(r, c)] += C64::new(1.0, 0.0);
        data[(r, c)] += v / scale;
    }

    let mut x = CMat::zeros(rows, cols);
    let mut left: Vec<LeftParam> = problem
        .blocks
        .iter()
        .map(|b| match b.left {
            LeftStructure::TwoFold { outer, inner } => LeftParam::TwoFold(TwoFoldToeplitzParam::zeros(outer, inner)),
            LeftStructure::Toeplitz => LeftParam::Toeplitz(ToeplitzParam::zeros(b.rows.len())),
        })
        .collect();
    let mut right: Vec<ToeplitzParam> = problem.blocks.iter().map(|_| ToeplitzParam::zeros(cols)).collect();
    let mut states: Vec<BlockState> = problem
        .blocks
        .iter()
        .map(|b| {
            let d = b.rows.len() + cols;
            BlockState { z: CMat::zeros(d, d), lambda: CMat::zeros(d, d) }
        })
        .collect();

    let total_entries: usize = states.iter().map(|s| s.z.len()).sum();
    let sqrt_p = (total_entries as f64).sqrt();
    // Penalty measured in units of the trace weight: with the data at unit RMS this
    // keeps the per-step trace shrinkage τ/ρ independent of τ.
    let mut rho = settings.rho * tau;
    let mut diag = Diagnostics::default();

    for iter in 1..=settings.max_iter {
        // structured update
        for (b, spec) in problem.blocks.iter().enumerate() {
            let st = &states[b];
            let w = &st.z - &st.lambda / C64::new(rho, 0.0);
            let r = spec.rows.len();
            let w11 = w.view((0, 0), (r, r)).into_owned();
            let w22 = w.view((r, r), (cols, cols)).into_owned();
            left[b] = match spec.left {
                LeftStructure::TwoFold { outer, inner } => LeftParam::TwoFold(project_two_fold(&w11, outer, inner)),
                LeftStructure::Toeplitz => LeftParam::Toeplitz(project_toeplitz(&w11)),
            };
            left[b].shift_diagonal(-tau / rho);
            right[b] = project_toeplitz(&w22);
            right[b].u[0].re -= tau / rho;
            for i in 0..r {
                let gi = spec.rows.start + i;
                for j in 0..cols {
                    let wbar = (w[(i, r + j)] + w[(r + j, i)].conj()) * 0.5;
                    let d = weight[(gi, j)].re;
                    x[(gi, j)] = (data[(gi, j)] + wbar * rho) / (d + rho);
                }
            }
        }

        // PSD projection, independent per block
        let thetas: Vec<CMat> = problem
            .blocks
            .iter()
            .enumerate()
            .map(|(b, spec)| assemble(&left[b], &right[b], &x.rows(spec.rows.start, spec.rows.len()).into_owned()))
            .collect();
        let projected: Vec<Result<CMat>> = states
            .par_iter()
            .zip(thetas.par_iter())
            .map(|(st, th)| psd_project(&(th + &st.lambda / C64::new(rho, 0.0))))
            .collect();

        let (mut r2, mut s2, mut th2, mut z2, mut l2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (((st, th), zr), spec) in states.iter_mut().zip(thetas.iter()).zip(projected).zip(problem.blocks.iter()) {
            let z_new = zr?;
            let diff = th - &z_new;
            r2 += frob_sq(&diff);
            s2 += structured_norm_sq(&(&z_new - &st.z), spec);
            th2 += frob_sq(th);
            z2 += frob_sq(&z_new);
            st.lambda += diff * C64::new(rho, 0.0);
            l2 += structured_norm_sq(&st.lambda, spec);
            st.z = z_new;
        }
        let primal = r2.sqrt();
        let dual = rho * s2.sqrt();
        let objective = problem_objective_scaled(problem, &x, &left, &right, scale);
        if !objective.is_finite() {
            return Err(FracError::NonFinite("ADMM iterate".into()));
        }
        diag.iterations = iter;
        diag.primal_res = primal;
        diag.dual_res = dual;
        diag.objective = objective;
        if settings.record_trace {
            diag.trace.push(TraceRow { iter, primal_res: primal, dual_res: dual, objective });
        }
        let eps_pri = sqrt_p * settings.tol_abs + settings.tol_rel * th2.sqrt().max(z2.sqrt());
        let eps_dual = sqrt_p * settings.tol_abs + settings.tol_rel * l2.sqrt();
        if primal <= eps_pri && dual <= eps_dual {
            diag.converged = true;
            break;
        }
        // Residual balancing after a burn-in; early balancing drives ρ far from the
        // trace scale and stalls the solver.
        if iter >= BALANCE_START && iter % BALANCE_EVERY == 0 {
            if primal > 10.0 * dual {
                rho *= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
            }
        }
    }

    // Shift the Toeplitz diagonals so every assembled block is exactly PSD.
    for (b, spec) in problem.blocks.iter().enumerate() {
        let th = assemble(&left[b], &right[b], &x.rows(spec.rows.start, spec.rows.len()).into_owned());
        let eig = hermitian_eigen(&th)?;
        let lmin = eig.values[0];
        let lmax = eig.values.last().copied().unwrap_or(0.0).abs();
        if lmin < 0.0 {
            let delta = -lmin + 1e-12 * lmax;
            left[b].shift_diagonal(delta);
            right[b].u[0].re += delta;
            diag.psd_shift = diag.psd_shift.max(delta * scale);
        }
    }

    x *= C64::new(scale, 0.0);
    left.iter_mut().for_each(|p| p.scale(scale));
    right.iter_mut().for_each(|u| u.u.iter_mut().for_each(|z| *z *= scale));
    diag.objective = problem.objective(&x, &left, &right);
    Ok(AdmmSolution { x, left, right, diagnostics: diag })
}

/// Squared norm of the orthogonal projection of `m` onto the block's structured subspace,
/// i.e. the part of a perturbation the structured variables can see.
fn structured_norm_sq(m: &CMat, spec: &PsdBlockSpec) -> f64 {
    let r = spec.rows.len();
    let c = m.nrows() - r;
    let m11 = m.view((0, 0), (r, r)).into_owned();
    let m22 = m.view((r, r), (c, c)).into_owned();
    let left = match spec.left {
        LeftStructure::TwoFold { outer, inner } => project_two_fold(&m11, outer, inner).matrix(),
        LeftStructure::Toeplitz => project_toeplitz(&m11).matrix(),
    };
    let mut off = 0.0;
    for i in 0..r {
        for j in 0..c {
            off += ((m[(i, r + j)] + m[(r + j, i)].conj()) * 0.5).norm_sqr();
        }
    }
    frob_sq(&left) + frob_sq(&project_toeplitz(&m22).matrix()) + 2.0 * off
}

fn problem_objective_scaled(
    problem: &AnmProblem,
    x: &CMat,
    left: &[LeftParam],
    right: &[ToeplitzParam],
    scale: f64,
) -> f64 {
    let fit: f64 = problem.observations.iter().map(|&(r, c, v)| (v - x[(r, c)] * scale).norm_sqr()).sum();
    let tr: f64 =
        left.iter().map(LeftParam::trace).sum::<f64>() + right.iter().map(|u| u.u[0].re * u.len() as f64).sum::<f64>();
    fit + problem.tau * tr * scale
}
