//! Grid-based baselines: the alternating ℓ1 estimator and 3D orthogonal matching pursuit.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::codec::FrameSelection;
use crate::config::{Estimate, EstimateSet, RadarConfig};
use crate::error::{FracError, Result};
use crate::linalg::{frob_sq, is_finite, least_squares, CMat, C64, ZERO};
use crate::signal::{
    build_selection, observed_xprime_positions, steer_range, steer_rx, steer_tx, steer_velocity, steer_virtual,
    SelectionMatrix,
};
use crate::tucker::Tensor3;

/// Uniform half-open grids `lo + (hi - lo)·i/N_g` on each parameter axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub ng: usize,
    /// Range bounds, m.
    pub range: (f64, f64),
    /// Velocity bounds, m/s.
    pub velocity: (f64, f64),
    /// Angle bounds, rad.
    pub theta: (f64, f64),
}

pub const DEFAULT_GRID_POINTS: usize = 256;

impl GridSpec {
    /// Full unambiguous domain: `[0, rmax) × [-vmax, vmax) × [-90°, 90°)`.
    pub fn full(cfg: &RadarConfig, ng: usize) -> Self {
        let (rmax, vmax) = cfg.ambiguity_limits();
        Self { ng, range: (0.0, rmax), velocity: (-vmax, vmax), theta: (-FRAC_PI_2, FRAC_PI_2) }
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        let bad = |msg: String| Err(FracError::InvalidConfig(msg));
        if self.ng < 2 {
            return bad(format!("grid needs at least 2 points per axis (got {})", self.ng));
        }
        let (rmax, vmax) = cfg.ambiguity_limits();
        let tol = 1e-9;
        let ok = |(lo, hi): (f64, f64), min: f64, max: f64| {
            lo.is_finite()
                && hi.is_finite()
                && lo < hi
                && lo >= min - tol * max.abs().max(1.0)
                && hi <= max + tol * max.abs().max(1.0)
        };
        if !ok(self.range, 0.0, rmax) {
            return bad(format!("range grid {:?} outside [0, {rmax}]", self.range));
        }
        if !ok(self.velocity, -vmax, vmax) {
            return bad(format!("velocity grid {:?} outside [-{vmax}, {vmax}]", self.velocity));
        }
        if !ok(self.theta, -FRAC_PI_2, FRAC_PI_2) {
            return bad(format!("angle grid {:?} outside [-pi/2, pi/2]", self.theta));
        }
        Ok(())
    }

    fn axis(&self, (lo, hi): (f64, f64)) -> Vec<f64> {
        (0..self.ng).map(|i| lo + (hi - lo) * i as f64 / self.ng as f64).collect()
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.axis(self.range)
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.axis(self.velocity)
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.axis(self.theta)
    }
}

/// Angle (`PQr × N_g`, virtual array), range (`M × N_g`) and velocity (`N × N_g`) dictionaries.
pub fn build_dictionaries(grid: &GridSpec, cfg: &RadarConfig) -> Result<(CMat, CMat, CMat)> {
    grid.validate(cfg)?;
    let stack = |vals: Vec<f64>, len: usize, f: &dyn Fn(f64) -> crate::linalg::CVec| {
        let mut a = CMat::zeros(len, vals.len());
        for (j, &x) in vals.iter().enumerate() {
            a.set_column(j, &f(x));
        }
        a
    };
    Ok((
        stack(grid.thetas(), cfg.virtual_elements(), &|t| steer_virtual(cfg, t)),
        stack(grid.ranges(), cfg.m, &|r| steer_range(cfg, r)),
        stack(grid.velocities(), cfg.n, &|v| steer_velocity(cfg, v)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Settings {
    /// Coupling weights of the angle, range and velocity unfoldings.
    pub tau: [f64; 3],
    /// Sparsity weights; `None` means `0.1·max|Y|` on every axis.
    pub mu: Option<[f64; 3]>,
    /// Outer alternating iterations.
    pub iterations: usize,
    pub inner_iterations: usize,
    pub inner_tol: f64,
}

impl Default for L1Settings {
    fn default() -> Self {
        Self { tau: [1.0; 3], mu: None, iterations: 20, inner_iterations: 30, inner_tol: 1e-8 }
    }
}

impl L1Settings {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !self.tau.iter().all(|&t| nonneg(t)) || !self.mu.is_none_or(|m| m.iter().all(|&x| nonneg(x))) {
            return Err(FracError::InvalidConfig("l1 weights must be finite and non-negative".into()));
        }
        if self.iterations < 1 || self.inner_iterations < 1 {
            return Err(FracError::InvalidConfig("l1 iteration counts must be at least 1".into()));
        }
        Ok(())
    }

    fn mu_for(&self, y: &CMat) -> [f64; 3] {
        self.mu.unwrap_or_else(|| [0.1 * y.iter().map(|z| z.norm()).fold(0.0, f64::max); 3])
    }
}

#[derive(Debug, Clone)]
pub struct L1Result {
    /// Decoupled estimate `X'` (`MN × PQr`).
    pub xprime: CMat,
    /// Coefficients of the angle, range and velocity unfoldings (`N_g × columns`).
    pub coeffs: [CMat; 3],
    /// Objective after initialisation and after each outer iteration.
    pub objective: Vec<f64>,
}

impl L1Result {
    /// Energy of each dictionary row of coefficient array `axis` (0 angle, 1 range, 2 velocity).
    pub fn row_energy(&self, axis: usize) -> Vec<f64> {
        let c = &self.coeffs[axis];
        (0..c.nrows()).map(|i| c.row(i).iter().map(|z| z.norm_sqr()).sum()).collect()
    }
}

/// Tensor modes holding the angle, range and velocity unfoldings.
const UNFOLD_MODES: [usize; 3] = [2, 0, 1];

fn soft_threshold(z: C64, t: f64) -> C64 {
    let a = z.norm();
    if a <= t {
        ZERO
    } else {
        z * ((a - t) / a)
    }
}

/// `‖A‖₂²` from the smaller of the two Gram matrices.
fn spectral_norm_sq(a: &CMat) -> f64 {
    let g = if a.nrows() <= a.ncols() { a * a.adjoint() } else { a.adjoint() * a };
    crate::linalg::hermitian_eigen(&g)
        .map(|e| e.values.iter().cloned().fold(0.0, f64::max))
        .unwrap_or_else(|_| frob_sq(a))
}

/// Complex matrix held as separate real and imaginary parts, so products run on
/// the optimised real kernels.
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn new(m: &CMat) -> Self {
        Self { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    fn to_complex(&self) -> CMat {
        self.re.zip_map(&self.im, C64::new)
    }

    /// `self · x`.
    fn mul(&self, x: &Split) -> Split {
        Split { re: &self.re * &x.re - &self.im * &x.im, im: &self.re * &x.im + &self.im * &x.re }
    }
}

/// A dictionary with its conjugate transpose, both split.
struct SplitDict {
    a: Split,
    ah: Split,
}

impl SplitDict {
    fn new(a: &CMat) -> Self {
        Self { a: Split::new(a), ah: Split::new(&a.adjoint()) }
    }
}

/// ISTA on `τ‖target - A·x‖² + μ‖x‖₁`, warm-started from `x`.
#[allow(clippy::too_many_arguments)]
fn ista(d: &SplitDict, lip: f64, target: &CMat, x: &mut CMat, tau: f64, mu: f64, iters: usize, tol: f64) {
    if tau == 0.0 {
        x.fill(ZERO);
        return;
    }
    let step = 1.0 / lip;
    let thresh = mu * step / (2.0 * tau);
    let t = Split::new(target);
    let mut cur = Split::new(x);
    for _ in 0..iters {
        let mut r = d.a.mul(&cur);
        r.re -= &t.re;
        r.im -= &t.im;
        let g = d.ah.mul(&r);
        let mut change = 0.0;
        let mut scale_next = 0.0;
        let mut scale_cur = 0.0;
        for i in 0..cur.re.len() {
            let z = C64::new(cur.re[i] - step * g.re[i], cur.im[i] - step * g.im[i]);
            let next = soft_threshold(z, thresh);
            change += (next.re - cur.re[i]).powi(2) + (next.im - cur.im[i]).powi(2);
            scale_cur += cur.re[i].powi(2) + cur.im[i].powi(2);
            scale_next += next.norm_sqr();
            cur.re[i] = next.re;
            cur.im[i] = next.im;
        }
        let scale = f64::max(scale_next, scale_cur);
        if scale == 0.0 || change <= tol * tol * scale {
            break;
        }
    }
    *x = cur.to_complex();
}

struct L1Problem<'a> {
    y: &'a CMat,
    cfg: &'a RadarConfig,
    positions: Vec<(usize, usize)>,
    dicts: [CMat; 3],
    tau: [f64; 3],
    mu: [f64; 3],
}

impl L1Problem<'_> {
    fn objective(&self, xp: &CMat, coeffs: &[CMat; 3]) -> Result<f64> {
        let qr = self.cfg.qr;
        let mut fit = 0.0;
        for (idx, &(i, j)) in self.positions.iter().enumerate() {
            fit += (self.y[(idx / qr, idx % qr)] - xp[(i, j)]).norm_sqr();
        }
        let t = crate::signal::xprime_to_tensor(xp, self.cfg)?;
        for axis in 0..3 {
            let unf = t.unfold(UNFOLD_MODES[axis]);
            fit += self.tau[axis] * frob_sq(&(unf - &self.dicts[axis] * &coeffs[axis]));
            fit += self.mu[axis] * coeffs[axis].iter().map(|z| z.norm()).sum::<f64>();
        }
        Ok(fit)
    }

    /// Closed-form `X` minimiser for fixed coefficients.
    fn update_x(&self, coeffs: &[CMat; 3]) -> Result<CMat> {
        let cfg = self.cfg;
        let dims = [cfg.m, cfg.n, cfg.virtual_elements()];
        let mut num = Tensor3::zeros(dims);
        for axis in 0..3 {
            let rec = Tensor3::fold(&(&self.dicts[axis] * &coeffs[axis]), UNFOLD_MODES[axis], dims)?;
            for (acc, r) in num.as_mut_slice().iter_mut().zip(rec.as_slice()) {
                *acc += r * self.tau[axis];
            }
        }
        let tau_sum: f64 = self.tau.iter().sum();
        let mut den = Tensor3::zeros(dims);
        for z in den.as_mut_slice() {
            *z = C64::new(tau_sum, 0.0);
        }
        let qr = cfg.qr;
        for (idx, &(i, j)) in self.positions.iter().enumerate() {
            let (m, n) = (i / cfg.n, i % cfg.n);
            num[(m, n, j)] += self.y[(idx / qr, idx % qr)];
            den[(m, n, j)] += C64::new(1.0, 0.0);
        }
        let mut xp = CMat::zeros(cfg.m * cfg.n, cfg.virtual_elements());
        for m in 0..cfg.m {
            for n in 0..cfg.n {
                for j in 0..cfg.virtual_elements() {
                    let d = den[(m, n, j)].re;
                    if d == 0.0 {
                        return Err(FracError::NonFinite("l1 X update (unobserved entry with zero coupling)".into()));
                    }
                    xp[(m * cfg.n + n, j)] = num[(m, n, j)] / d;
                }
            }
        }
        if !is_finite(&xp) {
            return Err(FracError::NonFinite("l1 X update".into()));
        }
        Ok(xp)
    }
}

/// Alternating ℓ1 estimator: ISTA on each dictionary's coefficient matrix, then
/// the closed-form update of `X`.
pub fn solve_l1(
    y: &CMat,
    sel: &SelectionMatrix,
    cfg: &RadarConfig,
    grid: &GridSpec,
    settings: &L1Settings,
) -> Result<L1Result> {
    settings.validate()?;
    if y.nrows() != sel.rows() || y.ncols() != cfg.qr {
        return Err(FracError::DimensionMismatch(format!(
            "snapshot is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            sel.rows(),
            cfg.qr
        )));
    }
    let (a1, a2, a3) = build_dictionaries(grid, cfg)?;
    let problem = L1Problem {
        y,
        cfg,
        positions: observed_xprime_positions(sel, cfg),
        dicts: [a1, a2, a3],
        tau: settings.tau,
        mu: settings.mu_for(y),
    };
    let lips: Vec<f64> = problem.dicts.iter().map(spectral_norm_sq).collect();
    let split: Vec<SplitDict> = problem.dicts.iter().map(SplitDict::new).collect();
    let mut coeffs: [CMat; 3] = std::array::from_fn(|axis| {
        let cols = cfg.m * cfg.n * cfg.virtual_elements() / problem.dicts[axis].nrows();
        CMat::zeros(grid.ng, cols)
    });
    let mut xp = problem.update_x(&coeffs)?;
    let mut objective = vec![problem.objective(&xp, &coeffs)?];
    for _ in 0..settings.iterations {
        let t = crate::signal::xprime_to_tensor(&xp, cfg)?;
        coeffs.par_iter_mut().enumerate().for_each(|(axis, c)| {
            let target = t.unfold(UNFOLD_MODES[axis]);
            ista(
                &split[axis],
                lips[axis],
                &target,
                c,
                problem.tau[axis],
                problem.mu[axis],
                settings.inner_iterations,
                settings.inner_tol,
            );
        });
        xp = problem.update_x(&coeffs)?;
        let f = problem.objective(&xp, &coeffs)?;
        if !f.is_finite() {
            return Err(FracError::NonFinite("l1 objective".into()));
        }
        objective.push(f);
    }
    Ok(L1Result { xprime: xp, coeffs, objective })
}

/// Indices of the `count` largest local maxima of `values` (plateaus count once).
pub fn top_peaks(values: &[f64], count: usize, circular: bool) -> Vec<usize> {
    let n = values.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = if i > 0 {
                Some(values[i - 1])
            } else if circular {
                Some(values[n - 1])
            } else {
                None
            };
            let right = if i + 1 < n {
                Some(values[i + 1])
            } else if circular {
                Some(values[0])
            } else {
                None
            };
            left.is_none_or(|l| values[i] > l) && right.is_none_or(|r| values[i] >= r)
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    if peaks.len() < count {
        // flat or monotone inputs: fill with the strongest remaining indices
        let mut rest: Vec<usize> = (0..n).filter(|i| !peaks.contains(i)).collect();
        rest.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        peaks.extend(rest);
    }
    peaks.truncate(count);
    peaks
}

/// Per-snapshot-row `(n, m, p)` of a frame.
fn row_layout(frame: &FrameSelection, cfg: &RadarConfig) -> Result<Vec<(usize, usize, usize)>> {
    build_selection(frame, cfg)?;
    Ok(frame.pulses.iter().enumerate().flat_map(|(n, pulse)| pulse.pairs().map(move |(m, p, _)| (n, m, p))).collect())
}

/// Output of [`omp_traced`].
#[derive(Debug, Clone)]
pub struct OmpResult {
    pub set: EstimateSet,
    /// `(angle, velocity, range)` grid indices in selection order.
    pub indices: Vec<(usize, usize, usize)>,
    /// `‖residual‖²` before the first and after every selection.
    pub residual_trace: Vec<f64>,
}

/// Greedy 3D OMP over the product grid. See [`omp_traced`].
pub fn solve_omp(
    y: &CMat,
    frame: &FrameSelection,
    cfg: &RadarConfig,
    grid: &GridSpec,
    l: usize,
) -> Result<EstimateSet> {
    omp_traced(y, frame, cfg, grid, l).map(|r| r.set)
}

/// OMP with lazily generated atoms. The correlation with each atom is factored
/// angle → velocity → range so the `N_g³` dictionary is never formed; ties go to
/// the lowest `(angle, velocity, range)` index.
pub fn omp_traced(y: &CMat, frame: &FrameSelection, cfg: &RadarConfig, grid: &GridSpec, l: usize) -> Result<OmpResult> {
    grid.validate(cfg)?;
    let rows = row_layout(frame, cfg)?;
    if y.nrows() != rows.len() || y.ncols() != cfg.qr {
        return Err(FracError::DimensionMismatch(format!(
            "snapshot is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            rows.len(),
            cfg.qr
        )));
    }
    let (thetas, ranges, vels) = (grid.thetas(), grid.ranges(), grid.velocities());
    let tx: Vec<_> = thetas.iter().map(|&t| (steer_tx(cfg, t), steer_rx(cfg, t))).collect();
    let av: Vec<_> = vels.iter().map(|&v| steer_velocity(cfg, v)).collect();
    let ar: Vec<_> = ranges.iter().map(|&r| steer_range(cfg, r)).collect();
    let atom = |(it, iv, ir): (usize, usize, usize)| -> Vec<C64> {
        let (at, br) = &tx[it];
        let mut out = Vec::with_capacity(rows.len() * cfg.qr);
        // column-major NK × Qr, matching `CMat::as_slice`
        for q in 0..cfg.qr {
            for &(n, m, p) in &rows {
                out.push(ar[ir][m] * av[iv][n] * at[p] * br[q]);
            }
        }
        out
    };

    let mut residual = y.clone();
    let mut trace = vec![frob_sq(y)];
    let mut chosen: Vec<(usize, usize, usize)> = Vec::new();
    let mut atoms: Vec<Vec<C64>> = Vec::new();
    let mut beta: Vec<C64> = Vec::new();
    for _ in 0..l {
        let best = (0..grid.ng)
            .into_par_iter()
            .map(|it| {
                let (at, br) = &tx[it];
                let z: Vec<C64> = (0..rows.len())
                    .map(|row| {
                        let s: C64 = (0..cfg.qr).map(|q| br[q].conj() * residual[(row, q)]).sum();
                        at[rows[row].2].conj() * s
                    })
                    .collect();
                let mut local = (f64::NEG_INFINITY, (it, 0, 0));
                let mut g = vec![ZERO; cfg.m];
                for (iv, a) in av.iter().enumerate() {
                    g.fill(ZERO);
                    for (row, &(n, m, _)) in rows.iter().enumerate() {
                        g[m] += a[n].conj() * z[row];
                    }
                    for (ir, b) in ar.iter().enumerate() {
                        let c: C64 = g.iter().zip(b.iter()).map(|(gm, bm)| bm.conj() * gm).sum();
                        let score = c.norm_sqr();
                        if score > local.0 {
                            local = (score, (it, iv, ir));
                        }
                    }
                }
                local
            })
            .reduce(
                || (f64::NEG_INFINITY, (usize::MAX, 0, 0)),
                |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            );
        let idx = best.1;
        chosen.push(idx);
        atoms.push(atom(idx));
        let phi = CMat::from_fn(y.len(), atoms.len(), |i, j| atoms[j][i]);
        let target = CMat::from_column_slice(y.len(), 1, y.as_slice());
        let coef = least_squares(&phi, &target)?;
        let fit = &phi * &coef;
        residual = CMat::from_column_slice(y.nrows(), y.ncols(), (target - fit).as_slice());
        beta = coef.iter().copied().collect();
        trace.push(frob_sq(&residual));
    }
    let estimates = chosen
        .iter()
        .zip(&beta)
        .map(|(&(it, iv, ir), &b)| Estimate { r: ranges[ir], v: vels[iv], theta: thetas[it], beta: b })
        .collect();
    let final_res = *trace.last().unwrap();
    Ok(OmpResult { set: EstimateSet::new(estimates, final_res), indices: chosen, residual_trace: trace })
}
