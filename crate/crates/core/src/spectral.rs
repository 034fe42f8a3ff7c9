//! Covariances from optimised Toeplitz generators, (root-)MUSIC, frequency to
//! parameter maps and projection matching with range search.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anm::{Danm2Result, DdanmResult};
use crate::codec::FrameSelection;
use crate::config::{Estimate, EstimateSet, RadarConfig, SPEED_OF_LIGHT};
use crate::error::{FracError, Result};
use crate::linalg::{cis, hermitian_eigen, hermitian_part, least_squares, poly_roots, CMat, C64, ZERO};
use crate::signal::{build_selection, range_phase_step, steer_range, steer_rx, steer_tx, steer_velocity};

/// Second-order statistics of the angle (`r_u`, `PQr × PQr`) and velocity (`r_v`, `N × N`) sides.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub r_u: CMat,
    pub r_v: CMat,
}

/// `R_u = T(u)T(u)ᴴ` and `R_v = Σ_{m=0}^{M−1} T_m T_mᴴ` from the non-negative block lags.
pub fn cov_from_danm2(res: &Danm2Result) -> CovariancePair {
    let t = res.u.matrix();
    let mut r_v = CMat::zeros(res.twofold.inner, res.twofold.inner);
    for m in 0..res.twofold.outer {
        let b = res.twofold.block(m as isize);
        r_v += &b * b.adjoint();
    }
    CovariancePair { r_u: hermitian_part(&(&t * t.adjoint())), r_v: hermitian_part(&r_v) }
}

/// `R_u = Σ_m T(u_m)T(u_m)ᴴ`, `R_v = Σ_m T(v_m)T(v_m)ᴴ`.
pub fn cov_from_ddanm(res: &DdanmResult) -> CovariancePair {
    let gram = |ps: &[crate::sdp::ToeplitzParam]| {
        let n = ps.first().map_or(0, |p| p.len());
        let mut acc = CMat::zeros(n, n);
        for p in ps {
            let t = p.matrix();
            acc += &t * t.adjoint();
        }
        hermitian_part(&acc)
    };
    CovariancePair { r_u: gram(&res.u), r_v: gram(&res.v) }
}

/// The `l` roots of `a(z)ᴴ C a(z)` closest to the unit circle, as frequencies. Roots come
/// in pairs `(z, 1/z̄)`; each selected root removes its partner and reports the pair's
/// mean angle, which stays accurate when a double root on the circle splits tangentially.
fn roots_from_projector(c: &CMat, l: usize) -> Vec<f64> {
    let n = c.nrows();
    // coefficient of z^d (d = j − i) stored at index d + n − 1
    let mut coeffs = vec![ZERO; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            coeffs[j + n - 1 - i] += c[(i, j)];
        }
    }
    let mut roots = poly_roots(&coeffs);
    let mut out = Vec::with_capacity(l);
    while out.len() < l && !roots.is_empty() {
        let best = (0..roots.len())
            .min_by(|&a, &b| (1.0 - roots[a].norm()).abs().total_cmp(&(1.0 - roots[b].norm()).abs()))
            .expect("non-empty");
        let z = roots.swap_remove(best);
        let mirror = C64::new(1.0, 0.0) / z.conj();
        let partner =
            (0..roots.len()).min_by(|&a, &b| (roots[a] - mirror).norm().total_cmp(&(roots[b] - mirror).norm()));
        let angle = match partner {
            Some(j) if (roots[j] - mirror).norm() < 1e-2 => {
                let w = roots.swap_remove(j);
                (z / z.norm() + w / w.norm()).arg()
            }
            _ => z.arg(),
        };
        out.push(wrap_freq(angle / (2.0 * PI)));
    }
    out
}

fn wrap_freq(f: f64) -> f64 {
    let w = f - f.round();
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Root-MUSIC on a Hermitian PSD matrix for `l` sources. Frequencies are per-index
/// phase increments in cycles, in `[-1/2, 1/2)`, sorted ascending.
pub fn root_music(r: &CMat, l: usize) -> Result<Vec<f64>> {
    let n = r.nrows();
    if l == 0 || l >= n {
        return Err(FracError::DimensionMismatch(format!("root-MUSIC needs 0 < L < n (L={l}, n={n})")));
    }
    let eig = hermitian_eigen(r)?;
    // eigenvalues ascending: signal values occupy the top l
    let lam_l = eig.values[n - l];
    let lam_next = eig.values[n - l - 1];
    if !(lam_l > 0.0) || lam_l < (1.0 + 1e-9) * lam_next.max(0.0) {
        return Err(FracError::SubspaceCollapse(if lam_next > 0.0 { lam_l / lam_next } else { 0.0 }));
    }
    let en = eig.vectors.columns(0, n - l).into_owned();
    let mut f = roots_from_projector(&(&en * en.adjoint()), l);
    f.sort_by(f64::total_cmp);
    Ok(f)
}

/// Root-MUSIC from an orthonormal signal-subspace basis (noise projector `I − AAᴴ`).
pub fn root_music_subspace(basis: &CMat, l: usize) -> Result<Vec<f64>> {
    let n = basis.nrows();
    if l == 0 || l >= n || basis.ncols() < l {
        return Err(FracError::DimensionMismatch(format!(
            "root-MUSIC subspace needs 0 < L < n (L={l}, n={n}, basis {})",
            basis.ncols()
        )));
    }
    let a = basis.columns(0, l).into_owned();
    let proj = CMat::identity(n, n) - &a * a.adjoint();
    let mut f = roots_from_projector(&hermitian_part(&proj), l);
    f.sort_by(f64::total_cmp);
    Ok(f)
}

pub fn freq_to_doa(f: f64, cfg: &RadarConfig) -> Result<f64> {
    let s = f * SPEED_OF_LIGHT / (cfg.fc * cfg.d_r);
    if !(s.abs() <= 1.0) {
        return Err(FracError::OutOfDomain(f));
    }
    Ok(s.asin())
}

pub fn freq_to_velocity(f: f64, cfg: &RadarConfig) -> f64 {
    -f * SPEED_OF_LIGHT / (2.0 * cfg.fc * cfg.t0)
}

/// Range in `[0, rmax)`.
pub fn freq_to_range(f: f64, cfg: &RadarConfig) -> f64 {
    let rmax = cfg.ambiguity_limits().0;
    let r = -f * SPEED_OF_LIGHT / (2.0 * cfg.delta_f);
    let w = r.rem_euclid(rmax);
    if w >= rmax {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Degrees, steering on the virtual array.
    Doa,
    /// m/s, steering across pulses.
    Velocity,
    /// m, steering across frequencies.
    Range,
}

impl Axis {
    /// Normalised frequency of a physical axis value.
    pub fn freq(self, value: f64, cfg: &RadarConfig) -> f64 {
        match self {
            Axis::Doa => cfg.fc * cfg.d_r * value.to_radians().sin() / SPEED_OF_LIGHT,
            Axis::Velocity => -2.0 * cfg.fc * value * cfg.t0 / SPEED_OF_LIGHT,
            Axis::Range => -2.0 * cfg.delta_f * value / SPEED_OF_LIGHT,
        }
    }

    /// Physical value of a normalised frequency.
    pub fn value(self, f: f64, cfg: &RadarConfig) -> Result<f64> {
        Ok(match self {
            Axis::Doa => freq_to_doa(f, cfg)?.to_degrees(),
            Axis::Velocity => freq_to_velocity(f, cfg),
            Axis::Range => freq_to_range(f, cfg),
        })
    }

    /// Default sampling: 1° over (−90°, 90°), 0.1 m/s over the unambiguous velocity
    /// interval, and 0.1 m over `[0, rmax)`.
    pub fn default_grid(self, cfg: &RadarConfig) -> Vec<f64> {
        let (rmax, vmax) = cfg.ambiguity_limits();
        let span = |lo: f64, hi: f64, step: f64| {
            let n = ((hi - lo) / step).floor() as usize;
            (0..=n).map(|i| lo + i as f64 * step).filter(|&x| x < hi).collect::<Vec<_>>()
        };
        match self {
            Axis::Doa => (-89..=89).map(f64::from).collect(),
            Axis::Velocity => span(-vmax, vmax, 0.1),
            Axis::Range => span(0.0, rmax, 0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub axis: Axis,
    pub grid: Vec<f64>,
    /// `1/‖E_nᴴ a‖²` per grid point.
    pub spectrum: Vec<f64>,
    /// Up to `L` local maxima as normalised frequencies, strongest first.
    pub peak_freqs: Vec<f64>,
    /// The same peaks on the physical axis.
    pub peaks: Vec<f64>,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis_value,pseudo_spectrum\n");
        for (x, p) in self.grid.iter().zip(&self.spectrum) {
            s.push_str(&format!("{x},{p:e}\n"));
        }
        s
    }
}

fn vandermonde(n: usize, f: f64) -> Vec<C64> {
    (0..n).map(|i| cis(2.0 * PI * f * i as f64)).collect()
}

/// MUSIC pseudo-spectrum of `r` (steering orientation) for `l` sources on `grid`.
pub fn music_spectrum(r: &CMat, l: usize, axis: Axis, cfg: &RadarConfig, grid: &[f64]) -> Result<SpectrumReport> {
    let n = r.nrows();
    if l >= n {
        return Err(FracError::DimensionMismatch(format!("MUSIC needs L < n (L={l}, n={n})")));
    }
    let eig = hermitian_eigen(r)?;
    let en = eig.vectors.columns(0, n - l).into_owned();
    let spectrum: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let a = vandermonde(n, axis.freq(x, cfg));
            let mut acc = 0.0;
            for c in 0..en.ncols() {
                let mut dot = ZERO;
                for i in 0..n {
                    dot += en[(i, c)].conj() * a[i];
                }
                acc += dot.norm_sqr();
            }
            1.0 / acc.max(1e-300)
        })
        .collect();
    let mut local: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let left = if i > 0 { spectrum[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < grid.len() { spectrum[i + 1] } else { f64::NEG_INFINITY };
            spectrum[i] > left && spectrum[i] >= right
        })
        .collect();
    local.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]));
    local.truncate(l);
    Ok(SpectrumReport {
        axis,
        grid: grid.to_vec(),
        peak_freqs: local.iter().map(|&i| axis.freq(grid[i], cfg)).collect(),
        peaks: local.iter().map(|&i| grid[i]).collect(),
        spectrum,
    })
}

/// Number of points of the coarse range grid.
pub const RANGE_GRID: usize = 1024;
/// Cyclic range refinement sweeps after the greedy pass.
const RANGE_SWEEPS: usize = 2;
pub const DEFAULT_COMBINATION_CAP: u64 = 1_000_000;

/// Precomputed per-row transmit/receive structure of one frame.
struct RowMap {
    /// `(n, m, p)` for every snapshot row.
    rows: Vec<(usize, usize, usize)>,
    m: usize,
    qr: usize,
}

impl RowMap {
    fn new(cfg: &RadarConfig, frame: &FrameSelection) -> Result<Self> {
        build_selection(frame, cfg)?;
        let mut rows = Vec::with_capacity(cfg.snapshot_rows());
        for (n, pulse) in frame.pulses.iter().enumerate() {
            for (m, p, _) in pulse.pairs() {
                rows.push((n, m, p));
            }
        }
        Ok(Self { rows, m: cfg.m, qr: cfg.qr })
    }
}

/// Angle/velocity part of an atom, per snapshot entry.
fn partial_atom(cfg: &RadarConfig, map: &RowMap, v: f64, theta: f64) -> CMat {
    let (av, at, br) = (steer_velocity(cfg, v), steer_tx(cfg, theta), steer_rx(cfg, theta));
    CMat::from_fn(map.rows.len(), map.qr, |row, q| {
        let (n, _, p) = map.rows[row];
        av[n] * at[p] * br[q]
    })
}

fn full_atom(cfg: &RadarConfig, map: &RowMap, partial: &CMat, r: f64) -> CMat {
    let ar = steer_range(cfg, r);
    CMat::from_fn(partial.nrows(), partial.ncols(), |row, q| ar[map.rows[row].1] * partial[(row, q)])
}

/// Range maximising `|⟨atom(r), residual⟩|`: coarse grid over `[0, rmax)` then a
/// three-point parabolic refinement.
fn search_range(cfg: &RadarConfig, map: &RowMap, partial: &CMat, residual: &CMat) -> f64 {
    let mut g = vec![ZERO; map.m];
    for (row, &(_, m, _)) in map.rows.iter().enumerate() {
        for q in 0..map.qr {
            g[m] += partial[(row, q)].conj() * residual[(row, q)];
        }
    }
    let rmax = cfg.ambiguity_limits().0;
    let step = rmax / RANGE_GRID as f64;
    let score = |r: f64| {
        // conj(a_r[m]) = exp(+j·2π·m·Δf·2r/c)
        let w = -range_phase_step(cfg, r);
        let mut acc = ZERO;
        for (m, gm) in g.iter().enumerate() {
            acc += cis(2.0 * PI * w * m as f64) * gm;
        }
        acc.norm_sqr()
    };
    let vals: Vec<f64> = (0..RANGE_GRID).map(|i| score(i as f64 * step)).collect();
    let best = (0..RANGE_GRID).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let (ym, y0, yp) = (vals[(best + RANGE_GRID - 1) % RANGE_GRID], vals[best], vals[(best + 1) % RANGE_GRID]);
    let denom = ym - 2.0 * y0 + yp;
    let delta = if denom < 0.0 { (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    (((best as f64 + delta) * step).rem_euclid(rmax)).min(rmax.next_down())
}

fn joint_fit(y: &CMat, atoms: &[CMat]) -> Result<(Vec<C64>, f64)> {
    let rows = y.len();
    let a = CMat::from_fn(rows, atoms.len(), |i, j| atoms[j].as_slice()[i]);
    let b = CMat::from_column_slice(rows, 1, y.as_slice());
    let beta = least_squares(&a, &b)?;
    let resid = (&b - &a * &beta).norm_squared();
    Ok((beta.iter().copied().collect(), resid))
}

/// Ranges, amplitudes and residual of one paired `(θ, v)` combination.
fn fit_combination(y: &CMat, cfg: &RadarConfig, map: &RowMap, pairs: &[(f64, f64)]) -> Result<EstimateSet> {
    let partials: Vec<CMat> = pairs.iter().map(|&(th, v)| partial_atom(cfg, map, v, th)).collect();
    let mut ranges = vec![0.0; pairs.len()];
    let mut atoms: Vec<CMat> = Vec::with_capacity(pairs.len());
    let mut residual = y.clone();
    // greedy pass: each target explains the residual left by the previous ones
    for (i, partial) in partials.iter().enumerate() {
        ranges[i] = search_range(cfg, map, partial, &residual);
        atoms.push(full_atom(cfg, map, partial, ranges[i]));
        let (beta, _) = joint_fit(y, &atoms)?;
        residual = y.clone();
        for (a, b) in atoms.iter().zip(&beta) {
            residual -= a * *b;
        }
    }
    let (mut beta, mut resid) = joint_fit(y, &atoms)?;
    if pairs.len() > 1 {
        for _ in 0..RANGE_SWEEPS {
            for i in 0..pairs.len() {
                let mut others = y.clone();
                for (j, (a, b)) in atoms.iter().zip(&beta).enumerate() {
                    if j != i {
                        others -= a * *b;
                    }
                }
                ranges[i] = search_range(cfg, map, &partials[i], &others);
                atoms[i] = full_atom(cfg, map, &partials[i], ranges[i]);
                (beta, resid) = joint_fit(y, &atoms)?;
            }
        }
    }
    let estimates =
        pairs.iter().zip(&ranges).zip(&beta).map(|((&(theta, v), &r), &b)| Estimate { r, v, theta, beta: b }).collect();
    Ok(EstimateSet::new(estimates, resid))
}

fn binomial_f(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn check_candidates(sets: &[(&str, usize)], l: usize) -> Result<()> {
    if l == 0 {
        return Err(FracError::InvalidScene("at least one target is required".into()));
    }
    for &(name, len) in sets {
        if len < l {
            return Err(FracError::DimensionMismatch(format!("{len} {name} candidates for {l} targets")));
        }
    }
    Ok(())
}

fn pick_best(results: Vec<Result<EstimateSet>>) -> Result<EstimateSet> {
    let mut best: Option<EstimateSet> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.residual < b.residual) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| FracError::DimensionMismatch("no candidate combination".into()))
}

/// Pair angle and velocity candidates, search each target's range and keep the
/// combination with the smallest joint least-squares residual.
pub fn match_and_range(
    y: &CMat,
    cfg: &RadarConfig,
    frame: &FrameSelection,
    thetas: &[f64],
    velocities: &[f64],
    l: usize,
    cap: u64,
) -> Result<EstimateSet> {
    check_candidates(&[("angle", thetas.len()), ("velocity", velocities.len())], l)?;
    let count =
        (1..=l).map(|i| i as f64).product::<f64>() * binomial_f(thetas.len(), l) * binomial_f(velocities.len(), l);
    if count > cap as f64 {
        return Err(FracError::CombinatorialBlowup { count, cap: cap as f64 });
    }
    let map = RowMap::new(cfg, frame)?;
    let mut combos: Vec<Vec<(f64, f64)>> = Vec::new();
    for ts in combinations(thetas.len(), l) {
        for vs in combinations(velocities.len(), l) {
            for perm in permutations(l) {
                combos.push((0..l).map(|i| (thetas[ts[i]], velocities[vs[perm[i]]])).collect());
            }
        }
    }
    let results: Vec<Result<EstimateSet>> = combos.par_iter().map(|c| fit_combination(y, cfg, &map, c)).collect();
    pick_best(results)
}

/// Like [`match_and_range`] with ranges drawn from a candidate set as well.
#[allow(clippy::too_many_arguments)]
pub fn match_3d(
    y: &CMat,
    cfg: &RadarConfig,
    frame: &FrameSelection,
    ranges: &[f64],
    thetas: &[f64],
    velocities: &[f64],
    l: usize,
    cap: u64,
) -> Result<EstimateSet> {
    check_candidates(&[("range", ranges.len()), ("angle", thetas.len()), ("velocity", velocities.len())], l)?;
    let fact = (1..=l).map(|i| i as f64).product::<f64>();
    let count =
        fact * fact * binomial_f(ranges.len(), l) * binomial_f(thetas.len(), l) * binomial_f(velocities.len(), l);
    if count > cap as f64 {
        return Err(FracError::CombinatorialBlowup { count, cap: cap as f64 });
    }
    let map = RowMap::new(cfg, frame)?;
    let perms = permutations(l);
    let mut combos: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for rs in combinations(ranges.len(), l) {
        for ts in combinations(thetas.len(), l) {
            for vs in combinations(velocities.len(), l) {
                for pv in &perms {
                    for pr in &perms {
                        combos
                            .push((0..l).map(|i| (ranges[rs[pr[i]]], thetas[ts[i]], velocities[vs[pv[i]]])).collect());
                    }
                }
            }
        }
    }
    let results: Vec<Result<EstimateSet>> = combos
        .par_iter()
        .map(|c| {
            let atoms: Vec<CMat> =
                c.iter().map(|&(r, th, v)| full_atom(cfg, &map, &partial_atom(cfg, &map, v, th), r)).collect();
            let (beta, resid) = joint_fit(y, &atoms)?;
            let est = c.iter().zip(&beta).map(|(&(r, theta, v), &b)| Estimate { r, v, theta, beta: b }).collect();
            Ok(EstimateSet::new(est, resid))
        })
        .collect();
    pick_best(results)
}

/// Joint least-squares amplitudes and residual for fixed target parameters.
pub fn refit_amplitudes(
    y: &CMat,
    cfg: &RadarConfig,
    frame: &FrameSelection,
    params: &[(f64, f64, f64)],
) -> Result<EstimateSet> {
    let map = RowMap::new(cfg, frame)?;
    let atoms: Vec<CMat> =
        params.iter().map(|&(r, v, th)| full_atom(cfg, &map, &partial_atom(cfg, &map, v, th), r)).collect();
    let (beta, resid) = joint_fit(y, &atoms)?;
    let est = params.iter().zip(&beta).map(|(&(r, v, theta), &b)| Estimate { r, v, theta, beta: b }).collect();
    Ok(EstimateSet::new(est, resid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Scene, Target};
    use crate::signal::{doa_phase_step, noiseless_snapshot, velocity_phase_step};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cov_from_freqs(n: usize, freqs: &[f64], powers: &[f64], eps: f64) -> CMat {
        let mut r = CMat::identity(n, n) * C64::new(eps, 0.0);
        for (&f, &p) in freqs.iter().zip(powers) {
            let a = CMat::from_column_slice(n, 1, &vandermonde(n, f));
            r += &a * a.adjoint() * C64::new(p, 0.0);
        }
        r
    }

    #[test]
    fn root_music_examples() {
        let r = cov_from_freqs(8, &[0.2], &[1.0], 1e-6);
        let f = root_music(&r, 1).unwrap();
        assert!((f[0] - 0.2).abs() < 1e-6, "{f:?}");
        let f = root_music(&cov_from_freqs(8, &[0.0], &[1.0], 1e-6), 1).unwrap();
        assert!(f[0].abs() < 1e-6);
        let f = root_music(&cov_from_freqs(16, &[-0.15, 0.15], &[1.0, 0.5], 1e-6), 2).unwrap();
        assert!((f[0] + 0.15).abs() < 1e-6 && (f[1] - 0.15).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn root_music_rejects_collapsed_subspace() {
        assert!(matches!(root_music(&CMat::identity(6, 6), 2), Err(FracError::SubspaceCollapse(_))));
        assert!(matches!(root_music(&CMat::identity(3, 3), 3), Err(FracError::DimensionMismatch(_))));
    }

    #[test]
    fn root_music_subspace_matches_covariance_path() {
        let r = cov_from_freqs(10, &[-0.3, 0.05, 0.27], &[1.0, 2.0, 0.7], 0.0);
        let basis = crate::linalg::dominant_subspace(&r, 3).unwrap();
        let f = root_music_subspace(&basis, 3).unwrap();
        for (got, want) in f.iter().zip([-0.3, 0.05, 0.27]) {
            assert!((got - want).abs() < 1e-8, "{f:?}");
        }
    }

    #[test]
    fn root_music_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(6..=32);
            let l = rng.random_range(1..=3usize).min(n / 3);
            // draw frequencies at least 2/n apart (circularly)
            let mut freqs: Vec<f64> = Vec::new();
            while freqs.len() < l {
                let f = rng.random_range(-0.5..0.5);
                if freqs.iter().all(|&g| {
                    let d = (f - g).abs();
                    d.min(1.0 - d) >= 2.0 / n as f64
                }) {
                    freqs.push(f);
                }
            }
            let powers: Vec<f64> = (0..l).map(|_| rng.random_range(0.5..2.0)).collect();
            let got = root_music(&cov_from_freqs(n, &freqs, &powers, 1e-9), l).unwrap();
            freqs.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&freqs) {
                let d = (g - w).abs();
                assert!(d.min(1.0 - d) <= 1e-5, "n={n} {got:?} vs {freqs:?}");
            }
        }
    }

    #[test]
    fn frequency_maps() {
        let cfg = RadarConfig::standard();
        assert_eq!(freq_to_doa(0.0, &cfg).unwrap(), 0.0);
        assert_eq!(freq_to_velocity(0.0, &cfg), 0.0);
        assert_eq!(freq_to_range(0.0, &cfg), 0.0);
        assert!((freq_to_doa(0.25, &cfg).unwrap() - PI / 6.0).abs() < 1e-12);
        let rmax = cfg.ambiguity_limits().0;
        assert!((freq_to_range(-0.5, &cfg) - rmax / 2.0).abs() < 1e-9);
        assert!(matches!(freq_to_doa(0.7, &cfg), Err(FracError::OutOfDomain(_))));
    }

    #[test]
    fn frequency_maps_invert_steering_phases() {
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (rmax, vmax) = cfg.ambiguity_limits();
        for _ in 0..200 {
            let th = rng.random_range(-1.5..1.5);
            let v = rng.random_range(-vmax * 0.99..vmax * 0.99);
            let r = rng.random_range(0.0..rmax);
            assert!((freq_to_doa(doa_phase_step(&cfg, th), &cfg).unwrap() - th).abs() < 1e-12);
            assert!((freq_to_velocity(velocity_phase_step(&cfg, v), &cfg) - v).abs() < 1e-12);
            let back = freq_to_range(wrap_freq(range_phase_step(&cfg, r)), &cfg);
            let d = (back - r).abs();
            assert!(d.min(rmax - d) < 1e-9, "{r} -> {back}");
        }
    }

    #[test]
    fn music_spectrum_examples() {
        let cfg = RadarConfig::standard();
        let n = cfg.virtual_elements();
        let grid = Axis::Doa.default_grid(&cfg);
        let f = Axis::Doa.freq(10.0, &cfg);
        let rep = music_spectrum(&cov_from_freqs(n, &[f], &[1.0], 1e-9), 1, Axis::Doa, &cfg, &grid).unwrap();
        assert!((rep.peaks[0] - 10.0).abs() <= 1.0);
        let flat = music_spectrum(&CMat::identity(n, n), 1, Axis::Doa, &cfg, &grid).unwrap();
        let (lo, hi) = flat.spectrum.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert!((hi - lo) / hi < 1e-9);
        assert!(rep.to_csv().starts_with("axis_value,pseudo_spectrum\n"));
    }

    #[test]
    fn music_spectrum_three_reference_targets() {
        let cfg = RadarConfig::standard();
        let n = cfg.virtual_elements();
        let freqs: Vec<f64> = [-30.0, 10.0, 40.0].iter().map(|&d| Axis::Doa.freq(d, &cfg)).collect();
        let rep = music_spectrum(
            &cov_from_freqs(n, &freqs, &[1.0; 3], 1e-6),
            3,
            Axis::Doa,
            &cfg,
            &Axis::Doa.default_grid(&cfg),
        )
        .unwrap();
        let mut peaks = rep.peaks.clone();
        peaks.sort_by(f64::total_cmp);
        for (p, want) in peaks.iter().zip([-30.0, 10.0, 40.0]) {
            assert!((p - want).abs() <= 1.0, "{peaks:?}");
        }
    }

    fn frame(cfg: &RadarConfig, seed: u64) -> FrameSelection {
        FrameSelection::random(cfg, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn match_single_target_exact_candidates() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 5);
        let t = Target::new(23.7, -6.3, 0.31, C64::new(0.8, -0.4));
        let y = noiseless_snapshot(&Scene::new(vec![t], 0.0, 1), &cfg, &fr);
        let est = match_and_range(&y, &cfg, &fr, &[t.theta], &[t.v], 1, DEFAULT_COMBINATION_CAP).unwrap();
        let step = cfg.ambiguity_limits().0 / RANGE_GRID as f64;
        assert!((est.estimates[0].r - t.r).abs() < step / 2.0);
        // residual is limited only by the refined range
        let exact = refit_amplitudes(&y, &cfg, &fr, &[(t.r, t.v, t.theta)]).unwrap();
        assert!(exact.residual <= 1e-10 * y.norm_squared());
        assert!((exact.estimates[0].beta - t.beta).norm() < 1e-10);
    }

    #[test]
    fn match_recovers_reference_pairing() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 6);
        let targets = Scene::standard_targets();
        let y = noiseless_snapshot(&Scene::new(targets.clone(), 0.0, 1), &cfg, &fr);
        let thetas: Vec<f64> = [40.0f64, -30.0, 10.0].iter().map(|d| d.to_radians()).collect();
        let vels = [20.0, -20.0, 10.0];
        let est = match_and_range(&y, &cfg, &fr, &thetas, &vels, 3, DEFAULT_COMBINATION_CAP).unwrap();
        for t in &targets {
            let e = est.estimates.iter().find(|e| (e.theta - t.theta).abs() < 1e-9).expect("angle present");
            assert_eq!(e.v, t.v);
            assert!((e.r - t.r).abs() < 0.05, "{} vs {}", e.r, t.r);
        }
        // a swapped pairing fits worse on the same data
        let right = refit_amplitudes(
            &y,
            &cfg,
            &fr,
            &[(15.0, 10.0, thetas[1]), (30.0, -20.0, thetas[2]), (45.0, 20.0, thetas[0])],
        )
        .unwrap();
        let wrong = refit_amplitudes(
            &y,
            &cfg,
            &fr,
            &[(15.0, -20.0, thetas[1]), (30.0, 10.0, thetas[2]), (45.0, 20.0, thetas[0])],
        )
        .unwrap();
        assert!(wrong.residual > right.residual);
    }

    #[test]
    fn match_residual_ignores_target_order() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 7);
        let y = noiseless_snapshot(&Scene::new(Scene::standard_targets(), 0.0, 1), &cfg, &fr);
        let p = [(15.0, 10.0, -0.5), (30.0, -20.0, 0.17), (45.0, 20.0, 0.7)];
        let a = refit_amplitudes(&y, &cfg, &fr, &p).unwrap();
        let b = refit_amplitudes(&y, &cfg, &fr, &[p[2], p[0], p[1]]).unwrap();
        assert!((a.residual - b.residual).abs() <= 1e-9 * y.norm_squared());
    }

    #[test]
    fn match_3d_pairs_and_degrades_with_perturbation() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 8);
        let targets = Scene::standard_targets();
        let y = noiseless_snapshot(&Scene::new(targets.clone(), 0.0, 1), &cfg, &fr);
        let rs = [45.0, 15.0, 30.0];
        let ts: Vec<f64> = targets.iter().map(|t| t.theta).collect();
        let vs = [-20.0, 20.0, 10.0];
        let est = match_3d(&y, &cfg, &fr, &rs, &ts, &vs, 3, DEFAULT_COMBINATION_CAP).unwrap();
        assert!(est.residual <= 1e-10 * y.norm_squared());
        for t in &targets {
            assert!(est.estimates.iter().any(|e| e.r == t.r && e.v == t.v && (e.theta - t.theta).abs() < 1e-12));
        }
        let mut last = est.residual;
        for d in [0.05, 0.2, 0.8] {
            let shifted = [45.0 + d, 15.0, 30.0];
            let e = match_3d(&y, &cfg, &fr, &shifted, &ts, &vs, 3, DEFAULT_COMBINATION_CAP).unwrap();
            assert!(e.residual > last);
            last = e.residual;
        }
    }

    #[test]
    fn combination_cap_enforced() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 9);
        let y = CMat::zeros(cfg.snapshot_rows(), cfg.qr);
        let many: Vec<f64> = (0..40).map(|i| i as f64 * 0.01).collect();
        assert!(matches!(
            match_and_range(&y, &cfg, &fr, &many, &many, 3, 1000),
            Err(FracError::CombinatorialBlowup { .. })
        ));
        assert!(matches!(
            match_and_range(&y, &cfg, &fr, &[0.1], &[1.0], 2, 1000),
            Err(FracError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn permutation_and_combination_counts() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(binomial_f(5, 2), 10.0);
    }
}
