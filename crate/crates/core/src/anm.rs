//! Two-fold and decomposed atomic-norm programs on the decoupled matrix `X'`.

use crate::config::RadarConfig;
use crate::error::{FracError, Result};
use crate::linalg::{CMat, C64};
use crate::sdp::{
    admm_solve, AdmmSettings, AnmProblem, Diagnostics, LeftParam, LeftStructure, PsdBlockSpec, ToeplitzParam,
    TwoFoldToeplitzParam,
};
use crate::signal::{observed_xprime_positions, unshape_xprime, xprime_to_tensor, SelectionMatrix};
use crate::tucker::Tensor3;

#[derive(Debug, Clone)]
pub struct Danm2Result {
    /// Optimised `X'`, `MN × PQr`.
    pub xprime: CMat,
    /// Range-velocity two-fold Toeplitz block `S(T)`.
    pub twofold: TwoFoldToeplitzParam,
    /// Angle Toeplitz block `T(u)`.
    pub u: ToeplitzParam,
    pub diagnostics: Diagnostics,
}

impl Danm2Result {
    pub fn block_matrix(&self) -> CMat {
        stack_block(&self.twofold.matrix(), &self.u.matrix(), &self.xprime)
    }

    pub fn reference(&self, cfg: &RadarConfig) -> Result<CMat> {
        unshape_xprime(&self.xprime, cfg)
    }

    pub fn tensor(&self, cfg: &RadarConfig) -> Result<Tensor3> {
        xprime_to_tensor(&self.xprime, cfg)
    }
}

#[derive(Debug, Clone)]
pub struct DdanmResult {
    /// `X_m = H_m X'`, one `N × PQr` block per frequency.
    pub blocks: Vec<CMat>,
    /// Angle Toeplitz generators, one per block.
    pub u: Vec<ToeplitzParam>,
    /// Velocity Toeplitz generators, one per block.
    pub v: Vec<ToeplitzParam>,
    pub diagnostics: Diagnostics,
}

impl DdanmResult {
    /// `[[T(v_m), X_m], [X_mᴴ, T(u_m)]]`.
    pub fn block_matrix(&self, m: usize) -> CMat {
        stack_block(&self.v[m].matrix(), &self.u[m].matrix(), &self.blocks[m])
    }

    pub fn xprime(&self) -> CMat {
        let n = self.blocks.first().map_or(0, |b| b.nrows());
        let cols = self.blocks.first().map_or(0, |b| b.ncols());
        let mut out = CMat::zeros(n * self.blocks.len(), cols);
        for (m, b) in self.blocks.iter().enumerate() {
            out.view_mut((m * n, 0), (n, cols)).copy_from(b);
        }
        out
    }

    pub fn tensor(&self, cfg: &RadarConfig) -> Result<Tensor3> {
        xprime_to_tensor(&self.xprime(), cfg)
    }
}

fn stack_block(left: &CMat, right: &CMat, x: &CMat) -> CMat {
    let (r, c) = (x.nrows(), x.ncols());
    let mut out = CMat::zeros(r + c, r + c);
    out.view_mut((0, 0), (r, r)).copy_from(left);
    out.view_mut((r, r), (c, c)).copy_from(right);
    out.view_mut((0, r), (r, c)).copy_from(x);
    out.view_mut((r, 0), (c, r)).copy_from(&x.adjoint());
    out
}

/// Regularisation weight `η·σ·sqrt(ln(N·M·P·Qr))`, floored at `1e-6·‖Y‖_F` so that
/// noiseless data still yields a positive weight.
pub fn default_tau(sigma2: f64, eta: f64, cfg: &RadarConfig, y: &CMat) -> f64 {
    let dim = (cfg.reference_rows() * cfg.qr) as f64;
    let tau = eta * sigma2.max(0.0).sqrt() * dim.ln().sqrt();
    let floor = 1e-6 * y.norm();
    if tau > floor {
        tau
    } else if floor > 0.0 {
        floor
    } else {
        1e-12
    }
}

/// `H_m`: selects rows `mN .. (m+1)N` of `X'`.
pub fn extraction_matrix(m: usize, cfg: &RadarConfig) -> Result<CMat> {
    if m >= cfg.m {
        return Err(FracError::DimensionMismatch(format!("block {m} of {}", cfg.m)));
    }
    let n = cfg.n;
    Ok(CMat::from_fn(n, cfg.m * n, |i, j| if j == m * n + i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
}

fn observations(y: &CMat, sel: &SelectionMatrix, cfg: &RadarConfig) -> Result<Vec<(usize, usize, C64)>> {
    cfg.validate()?;
    if sel.cols() != cfg.reference_rows() {
        return Err(FracError::DimensionMismatch(format!(
            "selection has {} columns, expected {}",
            sel.cols(),
            cfg.reference_rows()
        )));
    }
    if y.nrows() != sel.rows() || y.ncols() != cfg.qr {
        return Err(FracError::DimensionMismatch(format!(
            "snapshot is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            sel.rows(),
            cfg.qr
        )));
    }
    let pos = observed_xprime_positions(sel, cfg);
    Ok(pos.into_iter().enumerate().map(|(idx, (r, c))| (r, c, y[(idx / cfg.qr, idx % cfg.qr)])).collect())
}

pub fn solve_danm2(
    y: &CMat,
    sel: &SelectionMatrix,
    cfg: &RadarConfig,
    tau: f64,
    settings: &AdmmSettings,
) -> Result<Danm2Result> {
    let problem = AnmProblem {
        rows: cfg.m * cfg.n,
        cols: cfg.virtual_elements(),
        observations: observations(y, sel, cfg)?,
        blocks: vec![PsdBlockSpec {
            rows: 0..cfg.m * cfg.n,
            left: LeftStructure::TwoFold { outer: cfg.m, inner: cfg.n },
        }],
        tau,
    };
    let mut sol = admm_solve(&problem, settings)?;
    let twofold = match sol.left.pop() {
        Some(LeftParam::TwoFold(p)) => p,
        _ => unreachable!("single two-fold block requested"),
    };
    Ok(Danm2Result { xprime: sol.x, twofold, u: sol.right.pop().expect("one block"), diagnostics: sol.diagnostics })
}

pub fn solve_ddanm(
    y: &CMat,
    sel: &SelectionMatrix,
    cfg: &RadarConfig,
    tau: f64,
    settings: &AdmmSettings,
) -> Result<DdanmResult> {
    let n = cfg.n;
    let problem = AnmProblem {
        rows: cfg.m * n,
        cols: cfg.virtual_elements(),
        observations: observations(y, sel, cfg)?,
        blocks: (0..cfg.m).map(|m| PsdBlockSpec { rows: m * n..(m + 1) * n, left: LeftStructure::Toeplitz }).collect(),
        tau,
    };
    let sol = admm_solve(&problem, settings)?;
    let blocks = (0..cfg.m).map(|m| sol.x.rows(m * n, n).into_owned()).collect();
    let v = sol
        .left
        .into_iter()
        .map(|p| match p {
            LeftParam::Toeplitz(t) => t,
            LeftParam::TwoFold(_) => unreachable!("one-fold blocks requested"),
        })
        .collect();
    Ok(DdanmResult { blocks, u: sol.right, v, diagnostics: sol.diagnostics })
}
