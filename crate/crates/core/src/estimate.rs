//! End-to-end estimators: one entry point per algorithm, from a snapshot to an
//! [`EstimateSet`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anm::{default_tau, solve_danm2, solve_ddanm};
use crate::baseline::{omp_traced, solve_l1, top_peaks, GridSpec, L1Settings, DEFAULT_GRID_POINTS};
use crate::config::{EstimateSet, RadarConfig};
use crate::error::{FracError, Result};
use crate::linalg::{frob_sq, CMat, CVec};
use crate::sdp::{AdmmSettings, Diagnostics};
use crate::signal::{steer_range, steer_velocity, steer_virtual, Snapshot};
use crate::spectral::{
    cov_from_danm2, cov_from_ddanm, freq_to_doa, freq_to_range, freq_to_velocity, match_3d, match_and_range,
    refit_amplitudes, root_music, root_music_subspace, Axis, CovariancePair, DEFAULT_COMBINATION_CAP,
};
use crate::tucker::{basis_core, core_match, hooi, hosvd, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "danm2-hooi")]
    Danm2Hooi,
    #[serde(rename = "danm2-match")]
    Danm2Match,
    #[serde(rename = "ddanm-hooi")]
    DdanmHooi,
    #[serde(rename = "ddanm-match")]
    DdanmMatch,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "omp")]
    Omp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Danm2Hooi,
        Algorithm::Danm2Match,
        Algorithm::DdanmHooi,
        Algorithm::DdanmMatch,
        Algorithm::L1,
        Algorithm::Omp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Danm2Hooi => "danm2-hooi",
            Algorithm::Danm2Match => "danm2-match",
            Algorithm::DdanmHooi => "ddanm-hooi",
            Algorithm::DdanmMatch => "ddanm-match",
            Algorithm::L1 => "l1",
            Algorithm::Omp => "omp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = FracError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| FracError::Parse(format!("unknown algorithm '{s}'")))
    }
}

/// Knobs shared by every estimator. Fields irrelevant to an algorithm are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Number of targets `L`.
    pub targets: usize,
    /// Noise variance used to set the default trace weight.
    pub sigma2: f64,
    /// Explicit trace weight; overrides `eta`.
    pub tau: Option<f64>,
    /// Multiplier of the default trace weight.
    pub eta: f64,
    pub admm: AdmmSettings,
    pub grid_points: usize,
    pub l1: L1Settings,
    pub combination_cap: u64,
    pub hooi_max_iter: usize,
    pub hooi_tol: f64,
}

/// Default multiplier of the trace weight `σ·sqrt(ln(NMPQr))`.
pub const DEFAULT_ETA: f64 = 1.0;

/// Trace weight handed to the convex stage. The decomposed program pays one trace
/// pair per range bin, so a single atom costs `sqrt(M)` times what it costs in the
/// two-fold program; the derived weight is divided by `sqrt(M)` to match.
/// An explicit `tau` is passed through unchanged.
pub fn trace_weight(opts: &EstimateOptions, algo: Algorithm, cfg: &RadarConfig, y: &CMat) -> f64 {
    if let Some(tau) = opts.tau {
        return tau;
    }
    let tau = default_tau(opts.sigma2, opts.eta, cfg, y);
    match algo {
        Algorithm::DdanmHooi | Algorithm::DdanmMatch => tau / (cfg.m as f64).sqrt(),
        _ => tau,
    }
}

impl EstimateOptions {
    pub fn new(targets: usize, sigma2: f64) -> Self {
        Self {
            targets,
            sigma2,
            tau: None,
            eta: DEFAULT_ETA,
            admm: estimator_admm(),
            grid_points: DEFAULT_GRID_POINTS,
            l1: L1Settings::default(),
            combination_cap: DEFAULT_COMBINATION_CAP,
            hooi_max_iter: 100,
            hooi_tol: 1e-8,
        }
    }
}

/// ADMM settings used by the estimators: the solver defaults with a looser relative
/// tolerance, since parameters settle long before the dual residual does.
pub fn estimator_admm() -> AdmmSettings {
    AdmmSettings { tol_rel: 1e-4, tol_abs: 1e-6, ..AdmmSettings::default() }
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub set: EstimateSet,
    /// ADMM diagnostics of the convex stage, when there is one.
    pub diagnostics: Option<Diagnostics>,
    /// Objective trace of the ℓ1 estimator.
    pub l1_objective: Option<Vec<f64>>,
    /// Non-fatal conditions, e.g. a core-matching fallback or an empty ℓ1 solution.
    pub notes: Vec<String>,
}

impl EstimateOutput {
    fn plain(set: EstimateSet) -> Self {
        Self { set, diagnostics: None, l1_objective: None, notes: Vec::new() }
    }
}

/// Run the full pipeline of `algo` on a snapshot. Phase rotations are removed first.
pub fn run_estimate(snap: &Snapshot, algo: Algorithm, opts: &EstimateOptions) -> Result<EstimateOutput> {
    let cfg = &snap.cfg;
    cfg.validate()?;
    if opts.targets == 0 {
        return Err(FracError::InvalidScene("at least one target is required".into()));
    }
    let y = snap.derotated();
    let sel = snap.selection()?;
    let tau = trace_weight(opts, algo, cfg, &y);
    match algo {
        Algorithm::Danm2Hooi | Algorithm::Danm2Match => {
            let res = solve_danm2(&y, &sel, cfg, tau, &opts.admm)?;
            let mut out = if algo == Algorithm::Danm2Hooi {
                hooi_path(&y, snap, &res.tensor(cfg)?, opts)?
            } else {
                match_path(&y, snap, &cov_from_danm2(&res), opts)?
            };
            out.diagnostics = Some(res.diagnostics);
            Ok(out)
        }
        Algorithm::DdanmHooi | Algorithm::DdanmMatch => {
            let res = solve_ddanm(&y, &sel, cfg, tau, &opts.admm)?;
            let mut out = if algo == Algorithm::DdanmHooi {
                hooi_path(&y, snap, &res.tensor(cfg)?, opts)?
            } else {
                match_path(&y, snap, &cov_from_ddanm(&res), opts)?
            };
            out.diagnostics = Some(res.diagnostics);
            Ok(out)
        }
        Algorithm::L1 => l1_path(&y, snap, opts),
        Algorithm::Omp => {
            let grid = GridSpec::full(cfg, opts.grid_points);
            Ok(EstimateOutput::plain(omp_traced(&y, &snap.frame, cfg, &grid, opts.targets)?.set))
        }
    }
}

/// Covariance for a MUSIC spectrum along `axis`, in steering orientation, from the
/// convex stage of an ANM algorithm. Range uses the Gram matrix of the mode-0
/// unfolding of the recovered tensor.
pub fn axis_covariance(
    snap: &Snapshot,
    algo: Algorithm,
    axis: Axis,
    opts: &EstimateOptions,
) -> Result<(CMat, Diagnostics)> {
    let cfg = &snap.cfg;
    cfg.validate()?;
    let y = snap.derotated();
    let sel = snap.selection()?;
    let tau = trace_weight(opts, algo, cfg, &y);
    let (cov, tensor, diag) = match algo {
        Algorithm::Danm2Hooi | Algorithm::Danm2Match => {
            let res = solve_danm2(&y, &sel, cfg, tau, &opts.admm)?;
            (cov_from_danm2(&res), res.tensor(cfg)?, res.diagnostics)
        }
        Algorithm::DdanmHooi | Algorithm::DdanmMatch => {
            let res = solve_ddanm(&y, &sel, cfg, tau, &opts.admm)?;
            (cov_from_ddanm(&res), res.tensor(cfg)?, res.diagnostics)
        }
        _ => return Err(FracError::InvalidConfig(format!("{algo} has no covariance stage; use an ANM algorithm"))),
    };
    let r = match axis {
        Axis::Doa => cov.r_u.conjugate(),
        Axis::Velocity => cov.r_v,
        Axis::Range => {
            let u = tensor.unfold(0);
            &u * u.adjoint()
        }
    };
    Ok((r, diag))
}

/// Angle and velocity frequencies by root-MUSIC, then projection matching with
/// range search.
fn match_path(y: &CMat, snap: &Snapshot, cov: &CovariancePair, opts: &EstimateOptions) -> Result<EstimateOutput> {
    let cfg = &snap.cfg;
    let l = opts.targets;
    // the angle block spans the conjugate steering vectors
    let thetas =
        root_music(&cov.r_u.conjugate(), l)?.into_iter().map(|f| freq_to_doa(f, cfg)).collect::<Result<Vec<_>>>()?;
    let vels: Vec<f64> = root_music(&cov.r_v, l)?.into_iter().map(|f| freq_to_velocity(f, cfg)).collect();
    let set = match_and_range(y, cfg, &snap.frame, &thetas, &vels, l, opts.combination_cap)?;
    Ok(EstimateOutput::plain(set))
}

fn steering_matrix(len: usize, vals: &[f64], f: impl Fn(f64) -> CVec) -> CMat {
    let mut a = CMat::zeros(len, vals.len());
    for (j, &x) in vals.iter().enumerate() {
        a.set_column(j, &f(x));
    }
    a
}

/// Tucker factors by HOSVD + HOOI, root-MUSIC on each factor, and core-tensor peaks
/// to pair the per-mode estimates.
fn hooi_path(y: &CMat, snap: &Snapshot, t: &Tensor3, opts: &EstimateOptions) -> Result<EstimateOutput> {
    let cfg = &snap.cfg;
    let l = opts.targets;
    let init = hosvd(t, l)?;
    let tucker = hooi(t, l, init, opts.hooi_max_iter, opts.hooi_tol)?;
    let ranges: Vec<f64> =
        root_music_subspace(&tucker.factors[0], l)?.into_iter().map(|f| freq_to_range(f, cfg)).collect();
    let vels: Vec<f64> =
        root_music_subspace(&tucker.factors[1], l)?.into_iter().map(|f| freq_to_velocity(f, cfg)).collect();
    let thetas = root_music_subspace(&tucker.factors[2], l)?
        .into_iter()
        .map(|f| freq_to_doa(f, cfg))
        .collect::<Result<Vec<_>>>()?;
    let bases = [
        steering_matrix(cfg.m, &ranges, |r| steer_range(cfg, r)),
        steering_matrix(cfg.n, &vels, |v| steer_velocity(cfg, v)),
        steering_matrix(cfg.virtual_elements(), &thetas, |th| steer_virtual(cfg, th)),
    ];
    let core = basis_core(t, [&bases[0], &bases[1], &bases[2]])?;
    match core_match(&core, l) {
        Ok(triples) => {
            let params: Vec<(f64, f64, f64)> =
                triples.iter().map(|&(i, j, k)| (ranges[i], vels[j], thetas[k])).collect();
            Ok(EstimateOutput::plain(refit_amplitudes(y, cfg, &snap.frame, &params)?))
        }
        Err(e @ FracError::DegenerateCore { .. }) => {
            let mut out =
                EstimateOutput::plain(match_and_range(y, cfg, &snap.frame, &thetas, &vels, l, opts.combination_cap)?);
            out.notes.push(format!("{e}; fell back to projection matching"));
            Ok(out)
        }
        Err(e) => Err(e),
    }
}

fn l1_path(y: &CMat, snap: &Snapshot, opts: &EstimateOptions) -> Result<EstimateOutput> {
    let cfg: &RadarConfig = &snap.cfg;
    let l = opts.targets;
    let grid = GridSpec::full(cfg, opts.grid_points);
    let sel = snap.selection()?;
    let res = solve_l1(y, &sel, cfg, &grid, &opts.l1)?;
    let energies = [res.row_energy(0), res.row_energy(1), res.row_energy(2)];
    if energies.iter().any(|e| e.iter().all(|&x| x == 0.0)) {
        return Ok(EstimateOutput {
            set: EstimateSet::new(Vec::new(), frob_sq(y)),
            diagnostics: None,
            l1_objective: Some(res.objective),
            notes: vec!["l1 coefficients are identically zero; no targets extracted".into()],
        });
    }
    let pick = |vals: Vec<f64>, energy: &[f64], circular: bool| -> Vec<f64> {
        top_peaks(energy, l, circular).into_iter().map(|i| vals[i]).collect()
    };
    let thetas = pick(grid.thetas(), &energies[0], false);
    let ranges = pick(grid.ranges(), &energies[1], true);
    let vels = pick(grid.velocities(), &energies[2], true);
    let set = match_3d(y, cfg, &snap.frame, &ranges, &thetas, &vels, l, opts.combination_cap)?;
    Ok(EstimateOutput { set, diagnostics: None, l1_objective: Some(res.objective), notes: Vec::new() })
}
