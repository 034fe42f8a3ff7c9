//! Slow-time snapshot model and its decoupled reference form.
//!
//! Reference-matrix rows are ordered frequency-major: row `m·N·P + n·P + p`
//! (zero-based) holds frequency `m`, pulse `n`, antenna `p`. The decoupled
//! matrix `X'` is `MN × PQr` with row `m·N + n` and column `p·Qr + q`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::FrameSelection;
use crate::config::{RadarConfig, Scene, SPEED_OF_LIGHT};
use crate::error::{FracError, Result};
use crate::linalg::{cis, frob_sq, kron_vec, CMat, CVec, C64};
use crate::tucker::Tensor3;

/// Per-index phase (cycles) of the range steering vector.
pub fn range_phase_step(cfg: &RadarConfig, r: f64) -> f64 {
    -cfg.delta_f * 2.0 * r / SPEED_OF_LIGHT
}

pub fn velocity_phase_step(cfg: &RadarConfig, v: f64) -> f64 {
    -cfg.fc * 2.0 * v * cfg.t0 / SPEED_OF_LIGHT
}

/// Per-element phase (cycles) across the virtual array, spacing `d_r`.
pub fn doa_phase_step(cfg: &RadarConfig, theta: f64) -> f64 {
    cfg.fc * cfg.d_r * theta.sin() / SPEED_OF_LIGHT
}

fn vandermonde(len: usize, cycles_per_index: f64) -> CVec {
    CVec::from_fn(len, |i, _| cis(2.0 * PI * cycles_per_index * i as f64))
}

/// Length-`M` range steering vector.
pub fn steer_range(cfg: &RadarConfig, r: f64) -> CVec {
    vandermonde(cfg.m, range_phase_step(cfg, r))
}

/// Length-`N` velocity steering vector.
pub fn steer_velocity(cfg: &RadarConfig, v: f64) -> CVec {
    vandermonde(cfg.n, velocity_phase_step(cfg, v))
}

/// Length-`P` transmit steering vector.
pub fn steer_tx(cfg: &RadarConfig, theta: f64) -> CVec {
    vandermonde(cfg.p, cfg.fc * cfg.d_t * theta.sin() / SPEED_OF_LIGHT)
}

/// Length-`Qr` receive steering vector.
pub fn steer_rx(cfg: &RadarConfig, theta: f64) -> CVec {
    vandermonde(cfg.qr, doa_phase_step(cfg, theta))
}

/// `steer_tx ⊗ steer_rx`, the length-`P·Qr` virtual array response.
pub fn steer_virtual(cfg: &RadarConfig, theta: f64) -> CVec {
    kron_vec(&steer_tx(cfg, theta), &steer_rx(cfg, theta))
}

/// Sparse `NK × NMP` row selector with exactly one unit entry per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix {
    cols: usize,
    col_of_row: Vec<usize>,
}

impl SelectionMatrix {
    pub fn rows(&self) -> usize {
        self.col_of_row.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column holding the single 1 of `row`.
    pub fn column(&self, row: usize) -> usize {
        self.col_of_row[row]
    }

    pub fn columns(&self) -> &[usize] {
        &self.col_of_row
    }

    /// `S·X`.
    pub fn apply(&self, x: &CMat) -> CMat {
        assert_eq!(x.nrows(), self.cols);
        CMat::from_fn(self.rows(), x.ncols(), |i, j| x[(self.col_of_row[i], j)])
    }

    /// `Sᵀ·Y`.
    pub fn apply_transpose(&self, y: &CMat) -> CMat {
        assert_eq!(y.nrows(), self.rows());
        let mut out = CMat::zeros(self.cols, y.ncols());
        for (i, &c) in self.col_of_row.iter().enumerate() {
            for j in 0..y.ncols() {
                out[(c, j)] += y[(i, j)];
            }
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut s = nalgebra::DMatrix::zeros(self.rows(), self.cols);
        for (i, &c) in self.col_of_row.iter().enumerate() {
            s[(i, c)] = 1.0;
        }
        s
    }
}

/// Row index of `X` for frequency `m`, pulse `n`, antenna `p`.
#[inline]
pub fn reference_row(cfg: &RadarConfig, m: usize, n: usize, p: usize) -> usize {
    m * cfg.n * cfg.p + n * cfg.p + p
}

pub fn build_selection(frame: &FrameSelection, cfg: &RadarConfig) -> Result<SelectionMatrix> {
    if frame.pulses.len() != cfg.n {
        return Err(FracError::InvalidSelection(format!(
            "frame has {} pulses, expected {}",
            frame.pulses.len(),
            cfg.n
        )));
    }
    let mut col_of_row = Vec::with_capacity(cfg.snapshot_rows());
    for (n, pulse) in frame.pulses.iter().enumerate() {
        if pulse.frequencies.len() != cfg.k || pulse.antennas.len() != cfg.k || pulse.perm.len() != cfg.k {
            return Err(FracError::InvalidSelection(format!("pulse {n} does not have K={} entries", cfg.k)));
        }
        for (m, p, _) in pulse.pairs() {
            if m >= cfg.m || p >= cfg.p {
                return Err(FracError::InvalidSelection(format!("pulse {n}: (m={m}, p={p}) out of range")));
            }
            col_of_row.push(reference_row(cfg, m, n, p));
        }
        let start = col_of_row.len() - cfg.k;
        let mut cols = col_of_row[start..].to_vec();
        cols.sort_unstable();
        if cols.windows(2).any(|w| w[0] == w[1]) {
            return Err(FracError::InvalidSelection(format!("pulse {n} selects a column twice")));
        }
    }
    Ok(SelectionMatrix { cols: cfg.reference_rows(), col_of_row })
}

/// Noiseless reference matrix `X` (`NMP × Qr`) covering every antenna/frequency pair.
pub fn reference_matrix(scene: &Scene, cfg: &RadarConfig) -> CMat {
    let mut x = CMat::zeros(cfg.reference_rows(), cfg.qr);
    for t in &scene.targets {
        let (ar, av, at, br) =
            (steer_range(cfg, t.r), steer_velocity(cfg, t.v), steer_tx(cfg, t.theta), steer_rx(cfg, t.theta));
        for m in 0..cfg.m {
            for n in 0..cfg.n {
                let rv = t.beta * ar[m] * av[n];
                for p in 0..cfg.p {
                    let row = reference_row(cfg, m, n, p);
                    let rvt = rv * at[p];
                    for q in 0..cfg.qr {
                        x[(row, q)] += rvt * br[q];
                    }
                }
            }
        }
    }
    x
}

/// One frame of slow-time measurements.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// `NK × Qr` measurements, row `n·K + k`.
    pub y: CMat,
    pub cfg: RadarConfig,
    pub frame: FrameSelection,
    /// Alphabet size of the PM symbols.
    pub pm_levels: usize,
    /// Whether PM rotations are present in `y`.
    pub pm_on: bool,
}

impl Snapshot {
    /// Measurements with the known PM rotations removed.
    pub fn derotated(&self) -> CMat {
        if !self.pm_on {
            return self.y.clone();
        }
        let mut y = self.y.clone();
        for (n, pulse) in self.frame.pulses.iter().enumerate() {
            for (k, &ph) in pulse.phases.iter().enumerate() {
                let rot = cis(-2.0 * PI * ph as f64 / self.pm_levels as f64);
                for q in 0..self.cfg.qr {
                    y[(n * self.cfg.k + k, q)] *= rot;
                }
            }
        }
        y
    }

    pub fn selection(&self) -> Result<SelectionMatrix> {
        build_selection(&self.frame, &self.cfg)
    }
}

/// Noiseless `NK × Qr` model without PM rotation.
pub fn noiseless_snapshot(scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection) -> CMat {
    let mut y = CMat::zeros(cfg.snapshot_rows(), cfg.qr);
    for t in &scene.targets {
        let (ar, av, at, br) =
            (steer_range(cfg, t.r), steer_velocity(cfg, t.v), steer_tx(cfg, t.theta), steer_rx(cfg, t.theta));
        for (n, pulse) in frame.pulses.iter().enumerate() {
            for (k, (m, p, _)) in pulse.pairs().enumerate() {
                let a = t.beta * ar[m] * av[n] * at[p];
                for q in 0..cfg.qr {
                    y[(n * cfg.k + k, q)] += a * br[q];
                }
            }
        }
    }
    y
}

/// Circular complex Gaussian noise with variance `sigma2` per entry.
pub fn complex_noise(rows: usize, cols: usize, sigma2: f64, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (sigma2 / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(s * re, s * im)
    })
}

pub fn synthesize(
    scene: &Scene,
    cfg: &RadarConfig,
    frame: &FrameSelection,
    pm_levels: usize,
    pm_on: bool,
) -> Result<Snapshot> {
    cfg.validate()?;
    scene.validate(cfg)?;
    frame.validate(cfg, pm_levels)?;
    let mut y = noiseless_snapshot(scene, cfg, frame);
    if pm_on {
        for (n, pulse) in frame.pulses.iter().enumerate() {
            for (k, &ph) in pulse.phases.iter().enumerate() {
                let rot = cis(2.0 * PI * ph as f64 / pm_levels as f64);
                for q in 0..cfg.qr {
                    y[(n * cfg.k + k, q)] *= rot;
                }
            }
        }
    }
    if scene.sigma2 > 0.0 {
        y += complex_noise(y.nrows(), y.ncols(), scene.sigma2, scene.seed);
    }
    Ok(Snapshot { y, cfg: *cfg, frame: frame.clone(), pm_levels, pm_on })
}

/// Noise variance giving the requested per-entry SNR for this scene and frame.
pub fn snr_to_sigma2(snr_db: f64, scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection) -> f64 {
    let y = noiseless_snapshot(scene, cfg, frame);
    frob_sq(&y) / ((cfg.snapshot_rows() * cfg.qr) as f64 * 10f64.powf(snr_db / 10.0))
}

fn check_dims(x: &CMat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if x.nrows() != rows || x.ncols() != cols {
        return Err(FracError::DimensionMismatch(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `X` (`NMP × Qr`) to `X'` (`MN × PQr`).
pub fn reshape_xprime(x: &CMat, cfg: &RadarConfig) -> Result<CMat> {
    check_dims(x, cfg.reference_rows(), cfg.qr, "reference matrix")?;
    let mut out = CMat::zeros(cfg.m * cfg.n, cfg.virtual_elements());
    for m in 0..cfg.m {
        for n in 0..cfg.n {
            for p in 0..cfg.p {
                for q in 0..cfg.qr {
                    out[(m * cfg.n + n, p * cfg.qr + q)] = x[(reference_row(cfg, m, n, p), q)];
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`reshape_xprime`].
pub fn unshape_xprime(xp: &CMat, cfg: &RadarConfig) -> Result<CMat> {
    check_dims(xp, cfg.m * cfg.n, cfg.virtual_elements(), "decoupled matrix")?;
    let mut out = CMat::zeros(cfg.reference_rows(), cfg.qr);
    for m in 0..cfg.m {
        for n in 0..cfg.n {
            for p in 0..cfg.p {
                for q in 0..cfg.qr {
                    out[(reference_row(cfg, m, n, p), q)] = xp[(m * cfg.n + n, p * cfg.qr + q)];
                }
            }
        }
    }
    Ok(out)
}

/// `X'` to the `M × N × PQr` tensor (range, velocity, angle modes).
pub fn xprime_to_tensor(xp: &CMat, cfg: &RadarConfig) -> Result<Tensor3> {
    check_dims(xp, cfg.m * cfg.n, cfg.virtual_elements(), "decoupled matrix")?;
    let mut t = Tensor3::zeros([cfg.m, cfg.n, cfg.virtual_elements()]);
    for m in 0..cfg.m {
        for n in 0..cfg.n {
            for j in 0..cfg.virtual_elements() {
                t[(m, n, j)] = xp[(m * cfg.n + n, j)];
            }
        }
    }
    Ok(t)
}

pub fn reshape_tensor(x: &CMat, cfg: &RadarConfig) -> Result<Tensor3> {
    xprime_to_tensor(&reshape_xprime(x, cfg)?, cfg)
}

/// Position in `X'` of every entry of `Y`, indexed `row * Qr + q`.
pub fn observed_xprime_positions(sel: &SelectionMatrix, cfg: &RadarConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sel.rows() * cfg.qr);
    for row in 0..sel.rows() {
        let col = sel.column(row);
        let m = col / (cfg.n * cfg.p);
        let n = (col / cfg.p) % cfg.n;
        let p = col % cfg.p;
        for q in 0..cfg.qr {
            out.push((m * cfg.n + n, p * cfg.qr + q));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, PulseSelection};
    use crate::config::Target;
    use rand::Rng;

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm()
    }

    #[test]
    fn range_steering_examples() {
        let cfg = RadarConfig::standard();
        assert!(steer_range(&cfg, 0.0).iter().all(|z| rel(*z, C64::new(1.0, 0.0)) < 1e-15));
        // 2*pi*df*2r/c = pi at r = c/(4 df)
        let r = SPEED_OF_LIGHT / (4.0 * cfg.delta_f);
        assert!(rel(steer_range(&cfg, r)[1], C64::new(-1.0, 0.0)) < 1e-12);
        let (rmax, _) = cfg.ambiguity_limits();
        let a = steer_range(&cfg, rmax);
        assert!(a.iter().all(|z| rel(*z, C64::new(1.0, 0.0)) < 1e-12));
    }

    #[test]
    fn velocity_steering_examples() {
        let cfg = RadarConfig::standard();
        assert!(steer_velocity(&cfg, 0.0).iter().all(|z| rel(*z, C64::new(1.0, 0.0)) < 1e-15));
        let v = 0.25 * SPEED_OF_LIGHT / (2.0 * cfg.fc * cfg.t0);
        assert!(rel(steer_velocity(&cfg, v)[2], C64::new(-1.0, 0.0)) < 1e-12);
        let a = steer_velocity(&cfg, 7.3);
        let b = steer_velocity(&cfg, -7.3);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| rel(x.conj(), *y) < 1e-14));
    }

    #[test]
    fn virtual_array_kronecker_order() {
        let lambda = SPEED_OF_LIGHT / 77e9;
        let cfg = RadarConfig { p: 2, qr: 2, d_r: 0.5 * lambda, d_t: lambda, ..RadarConfig::standard() };
        let v = steer_virtual(&cfg, PI / 6.0);
        for i in 0..4 {
            assert!(rel(v[i], cis(i as f64 * PI / 2.0)) < 1e-12, "entry {i}");
        }
        assert!(steer_tx(&cfg, 0.0)
            .iter()
            .chain(steer_rx(&cfg, 0.0).iter())
            .all(|z| rel(*z, C64::new(1.0, 0.0)) < 1e-15));
    }

    #[test]
    fn virtual_array_is_uniform_vandermonde() {
        let cfg = RadarConfig::standard();
        for &theta in &[-1.2, -0.3, 0.0, 0.4, 1.5] {
            let v = steer_virtual(&cfg, theta);
            let step = doa_phase_step(&cfg, theta);
            for (i, z) in v.iter().enumerate() {
                assert!(rel(*z, cis(2.0 * PI * step * i as f64)) < 1e-14);
                assert!((z.norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn selection_single_pulse_example() {
        let cfg = RadarConfig { n: 1, m: 2, p: 2, k: 1, qr: 1, ..RadarConfig::standard() };
        let frame = FrameSelection {
            pulses: vec![PulseSelection { antennas: vec![1], frequencies: vec![1], perm: vec![0], phases: vec![0] }],
        };
        let s = build_selection(&frame, &cfg).unwrap();
        assert_eq!(s.column(0), 3);
    }

    #[test]
    fn selection_identity_frame_columns() {
        let cfg = RadarConfig::standard();
        let frame = encode(&vec![false; 14 * cfg.n], &cfg, 2).unwrap();
        let s = build_selection(&frame, &cfg).unwrap();
        for n in 0..cfg.n {
            for k in 0..cfg.k {
                assert_eq!(s.column(n * cfg.k + k), k * cfg.n * cfg.p + n * cfg.p + k);
            }
        }
    }

    #[test]
    fn selection_rows_orthonormal() {
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frame = FrameSelection::random(&cfg, 2, &mut rng).unwrap();
        let s = build_selection(&frame, &cfg).unwrap().to_dense();
        let sst = &s * s.transpose();
        assert_eq!(sst, nalgebra::DMatrix::identity(cfg.snapshot_rows(), cfg.snapshot_rows()));
    }

    #[test]
    fn decoupling_identity_brute_force() {
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rmax, vmax) = cfg.ambiguity_limits();
        for trial in 0..10 {
            let targets = (0..3)
                .map(|_| {
                    Target::new(
                        rng.random_range(0.0..rmax),
                        rng.random_range(-vmax..vmax),
                        rng.random_range(-1.4..1.4),
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    )
                })
                .collect();
            let scene = Scene::new(targets, 0.0, trial);
            let frame = FrameSelection::random(&cfg, 2, &mut rng).unwrap();
            let snap = synthesize(&scene, &cfg, &frame, 2, false).unwrap();
            let x = reference_matrix(&scene, &cfg);
            // elementwise: row n*K+k of Y equals row S(n*K+k) of X
            let s = build_selection(&frame, &cfg).unwrap().to_dense();
            let sx = s.map(|v| C64::new(v, 0.0)) * &x;
            let err = (&snap.y - sx).norm() / snap.y.norm();
            assert!(err < 1e-12, "relative error {err}");
        }
    }

    #[test]
    fn single_target_at_origin_gives_all_ones() {
        let cfg = RadarConfig::standard();
        let scene = Scene::new(vec![Target::deg(0.0, 0.0, 0.0)], 0.0, 1);
        let x = reference_matrix(&scene, &cfg);
        assert!(x.iter().all(|z| rel(*z, C64::new(1.0, 0.0)) < 1e-15));
    }

    #[test]
    fn rank_bounded_by_target_count() {
        let cfg = RadarConfig::standard();
        let scene = Scene::new(Scene::standard_targets(), 0.0, 1);
        let xp = reshape_xprime(&reference_matrix(&scene, &cfg), &cfg).unwrap();
        let sv = xp.singular_values();
        let smax = sv.max();
        assert_eq!(sv.iter().filter(|&&s| s > 1e-10 * smax).count(), 3);
    }

    #[test]
    fn noiseless_single_target_rank_one() {
        let cfg = RadarConfig::standard();
        let scene = Scene::new(vec![Target::deg(12.0, 3.0, 20.0)], 0.0, 1);
        let frame = FrameSelection::identity(&cfg);
        let y = synthesize(&scene, &cfg, &frame, 2, false).unwrap().y;
        let sv = y.singular_values();
        assert!(sv.min() < 1e-10 * sv.max());
    }

    #[test]
    fn synthesis_is_deterministic_and_pm_derotates() {
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frame = FrameSelection::random(&cfg, 2, &mut rng).unwrap();
        let scene = Scene::new(Scene::standard_targets(), 0.1, 1234);
        let a = synthesize(&scene, &cfg, &frame, 2, true).unwrap();
        let b = synthesize(&scene, &cfg, &frame, 2, true).unwrap();
        assert_eq!(a.y, b.y);
        let clean = Scene { sigma2: 0.0, ..scene };
        let rotated = synthesize(&clean, &cfg, &frame, 2, true).unwrap();
        let plain = synthesize(&clean, &cfg, &frame, 2, false).unwrap();
        assert!((rotated.derotated() - &plain.y).norm() < 1e-12);
    }

    #[test]
    fn snr_definition() {
        let cfg = RadarConfig::standard();
        let frame = FrameSelection::identity(&cfg);
        let scene = Scene::new(vec![Target::new(10.0, 1.0, 0.2, C64::new(2.0, 0.0))], 0.0, 1);
        let s0 = snr_to_sigma2(0.0, &scene, &cfg, &frame);
        assert!((s0 - 4.0).abs() < 1e-12);
        assert!((snr_to_sigma2(10.0, &scene, &cfg, &frame) - s0 / 10.0).abs() < 1e-12);
        assert!(snr_to_sigma2(300.0, &scene, &cfg, &frame) < 1e-29);
    }

    #[test]
    fn reshapes_round_trip() {
        let cfg = RadarConfig::standard();
        let x = CMat::from_fn(cfg.reference_rows(), cfg.qr, |i, j| C64::new(i as f64, j as f64));
        let xp = reshape_xprime(&x, &cfg).unwrap();
        assert_eq!(unshape_xprime(&xp, &cfg).unwrap(), x);
        assert_eq!(xp[(cfg.n + 2, 3 * cfg.qr + 1)], x[(reference_row(&cfg, 1, 2, 3), 1)]);
        let t = xprime_to_tensor(&xp, &cfg).unwrap();
        assert_eq!(t[(1, 2, 7)], xp[(cfg.n + 2, 7)]);
        assert!(matches!(reshape_xprime(&xp, &cfg), Err(FracError::DimensionMismatch(_))));

        let tiny = RadarConfig { m: 1, n: 1, p: 1, qr: 1, k: 1, ..RadarConfig::standard() };
        let one = CMat::from_element(1, 1, C64::new(3.0, -1.0));
        assert_eq!(reshape_xprime(&one, &tiny).unwrap(), one);
    }

    #[test]
    fn noiseless_tensor_unfoldings_rank_one() {
        let cfg = RadarConfig::standard();
        let scene = Scene::new(vec![Target::deg(22.0, -4.0, 15.0)], 0.0, 1);
        let t = reshape_tensor(&reference_matrix(&scene, &cfg), &cfg).unwrap();
        for mode in 0..3 {
            let sv = t.unfold(mode).singular_values();
            let smax = sv.max();
            assert_eq!(sv.iter().filter(|&&s| s > 1e-10 * smax).count(), 1, "mode {mode}");
        }
    }
}
