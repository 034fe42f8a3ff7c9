//! Fisher information and Cramér-Rao bounds for angle, range and velocity with
//! known amplitudes.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::codec::FrameSelection;
use crate::config::{RadarConfig, Scene, SPEED_OF_LIGHT};
use crate::error::{FracError, Result};
use crate::linalg::{CVec, C64};
use crate::signal::{build_selection, steer_range, steer_rx, steer_tx, steer_velocity};

/// Condition number above which the Fisher matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Real `3L × 3L` Fisher matrix ordered `θ₁..θ_L, r₁..r_L, v₁..v_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub f: DMatrix<f64>,
    pub sigma2: f64,
    pub targets: usize,
}

fn rows_of(frame: &FrameSelection, cfg: &RadarConfig) -> Result<Vec<(usize, usize, usize)>> {
    build_selection(frame, cfg)?;
    Ok(frame.pulses.iter().enumerate().flat_map(|(n, pulse)| pulse.pairs().map(move |(m, p, _)| (n, m, p))).collect())
}

/// Vectorised noiseless snapshot, receive index outermost (column-major `Y`).
pub fn mean_vector(scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection) -> Result<CVec> {
    let rows = rows_of(frame, cfg)?;
    let nk = rows.len();
    let mut out = CVec::zeros(nk * cfg.qr);
    for t in &scene.targets {
        let (ar, av, at, br) =
            (steer_range(cfg, t.r), steer_velocity(cfg, t.v), steer_tx(cfg, t.theta), steer_rx(cfg, t.theta));
        for q in 0..cfg.qr {
            for (i, &(n, m, p)) in rows.iter().enumerate() {
                out[q * nk + i] += t.beta * br[q] * ar[m] * av[n] * at[p];
            }
        }
    }
    Ok(out)
}

/// `(∂ỹ/∂θ_l, ∂ỹ/∂r_l, ∂ỹ/∂v_l)` for target `l`.
pub fn mean_derivatives(scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection, l: usize) -> Result<[CVec; 3]> {
    let t = scene.targets.get(l).ok_or_else(|| FracError::InvalidScene(format!("target index {l} out of range")))?;
    let rows = rows_of(frame, cfg)?;
    let nk = rows.len();
    let (ar, av, at, br) =
        (steer_range(cfg, t.r), steer_velocity(cfg, t.v), steer_tx(cfg, t.theta), steer_rx(cfg, t.theta));
    let j2pi = C64::new(0.0, 2.0 * PI);
    // d(phase)/dθ per element index of the transmit and receive arrays
    let dtx = j2pi * (cfg.fc * cfg.d_t * t.theta.cos() / SPEED_OF_LIGHT);
    let drx = j2pi * (cfg.fc * cfg.d_r * t.theta.cos() / SPEED_OF_LIGHT);
    let dr = -j2pi * (cfg.delta_f * 2.0 / SPEED_OF_LIGHT);
    let dv = -j2pi * (cfg.fc * 2.0 * cfg.t0 / SPEED_OF_LIGHT);
    let mut out = [CVec::zeros(nk * cfg.qr), CVec::zeros(nk * cfg.qr), CVec::zeros(nk * cfg.qr)];
    for q in 0..cfg.qr {
        for (i, &(n, m, p)) in rows.iter().enumerate() {
            let base = t.beta * br[q] * ar[m] * av[n] * at[p];
            let idx = q * nk + i;
            out[0][idx] = base * (drx * q as f64 + dtx * p as f64);
            out[1][idx] = base * (dr * m as f64);
            out[2][idx] = base * (dv * n as f64);
        }
    }
    Ok(out)
}

fn gram(derivs: &[CVec], sigma2: f64) -> DMatrix<f64> {
    let k = derivs.len();
    DMatrix::from_fn(k, k, |i, j| 2.0 / sigma2 * derivs[j].dotc(&derivs[i]).re)
}

fn ordered_derivatives(scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection) -> Result<Vec<CVec>> {
    let l = scene.targets.len();
    let per: Vec<[CVec; 3]> = (0..l).map(|i| mean_derivatives(scene, cfg, frame, i)).collect::<Result<_>>()?;
    Ok((0..3).flat_map(|axis| per.iter().map(move |d| d[axis].clone())).collect())
}

pub fn fisher(scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection, sigma2: f64) -> Result<FisherMatrix> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(FracError::InvalidScene(format!("noise variance must be positive (got {sigma2})")));
    }
    let derivs = ordered_derivatives(scene, cfg, frame)?;
    Ok(FisherMatrix { f: gram(&derivs, sigma2), sigma2, targets: scene.targets.len() })
}

/// Fisher matrix from central finite differences of [`mean_vector`].
pub fn fisher_numeric(scene: &Scene, cfg: &RadarConfig, frame: &FrameSelection, sigma2: f64) -> Result<FisherMatrix> {
    let (rmax, vmax) = cfg.ambiguity_limits();
    let scales = [1.0, rmax, vmax];
    let mut derivs = Vec::new();
    for (axis, scale) in scales.iter().enumerate() {
        for l in 0..scene.targets.len() {
            let h = 1e-6 * scale;
            let shifted = |delta: f64| {
                let mut s = scene.clone();
                let t = &mut s.targets[l];
                match axis {
                    0 => t.theta += delta,
                    1 => t.r += delta,
                    _ => t.v += delta,
                }
                mean_vector(&s, cfg, frame)
            };
            derivs.push((shifted(h)? - shifted(-h)?) / C64::new(2.0 * h, 0.0));
        }
    }
    Ok(FisherMatrix { f: gram(&derivs, sigma2), sigma2, targets: scene.targets.len() })
}

/// Diagonal of `F⁻¹`.
pub fn crlb(fm: &FisherMatrix) -> Result<Vec<f64>> {
    let f = &fm.f;
    let sv = f.singular_values();
    let (max, min) = (sv.max(), sv.min());
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < MAX_CONDITION) {
        return Err(FracError::SingularFisher(cond));
    }
    let inv = f.clone().try_inverse().ok_or(FracError::SingularFisher(cond))?;
    Ok((0..f.nrows()).map(|i| inv[(i, i)]).collect())
}

/// Per-target bounds as `(θ variance in rad², r variance in m², v variance in (m/s)²)`.
pub fn per_target(bounds: &[f64], targets: usize) -> Vec<(f64, f64, f64)> {
    (0..targets).map(|l| (bounds[l], bounds[targets + l], bounds[2 * targets + l])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Target;
    use crate::signal::{noiseless_snapshot, snr_to_sigma2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(cfg: &RadarConfig, seed: u64) -> FrameSelection {
        FrameSelection::random(cfg, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn mean_vector_basics() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 1);
        let zero = Scene::new(vec![Target::deg(0.0, 0.0, 0.0)], 0.0, 0);
        assert!(mean_vector(&zero, &cfg, &fr).unwrap().iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-12));

        let scene = Scene::new(Scene::standard_targets(), 0.0, 0);
        let y = noiseless_snapshot(&scene, &cfg, &fr);
        let v = mean_vector(&scene, &cfg, &fr).unwrap();
        assert!(v.iter().zip(y.as_slice()).all(|(a, b)| (a - b).norm() < 1e-12));

        let mut doubled = scene.clone();
        doubled.targets.iter_mut().for_each(|t| t.beta *= C64::new(0.0, 2.0));
        let v2 = mean_vector(&doubled, &cfg, &fr).unwrap();
        assert!((v2 - v * C64::new(0.0, 2.0)).norm() < 1e-10);
    }

    #[test]
    fn derivative_examples() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 2);
        let scene = Scene::new(vec![Target::deg(30.0, 7.0, 12.0)], 0.0, 0);
        let [_, dr, dv] = mean_derivatives(&scene, &cfg, &fr, 0).unwrap();
        let nk = cfg.snapshot_rows();
        for q in 0..cfg.qr {
            for k in 0..cfg.k {
                assert_eq!(dv[q * nk + k], C64::new(0.0, 0.0));
            }
        }
        let at_zero = Scene::new(vec![Target::deg(0.0, 7.0, 12.0)], 0.0, 0);
        let [_, dr0, _] = mean_derivatives(&at_zero, &cfg, &fr, 0).unwrap();
        assert!(dr.iter().zip(dr0.iter()).all(|(a, b)| (a.norm() - b.norm()).abs() < 1e-9));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 3);
        let scene = Scene::new(Scene::standard_targets(), 0.0, 0);
        let (rmax, vmax) = cfg.ambiguity_limits();
        for l in 0..3 {
            let an = mean_derivatives(&scene, &cfg, &fr, l).unwrap();
            for (axis, scale) in [1.0, rmax, vmax].into_iter().enumerate() {
                let h = 1e-6 * scale;
                let bump = |d: f64| {
                    let mut s = scene.clone();
                    let t = &mut s.targets[l];
                    match axis {
                        0 => t.theta += d,
                        1 => t.r += d,
                        _ => t.v += d,
                    }
                    mean_vector(&s, &cfg, &fr).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / C64::new(2.0 * h, 0.0);
                let rel = (&fd - &an[axis]).norm() / an[axis].norm();
                assert!(rel < 1e-5, "target {l} axis {axis}: rel {rel}");
            }
        }
    }

    #[test]
    fn fisher_matches_numeric_and_scales() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 4);
        let scene = Scene::new(Scene::standard_targets(), 0.0, 0);
        let f = fisher(&scene, &cfg, &fr, 0.3).unwrap();
        let num = fisher_numeric(&scene, &cfg, &fr, 0.3).unwrap();
        assert!((&f.f - &num.f).norm() / f.f.norm() < 1e-4);
        assert!((&f.f - f.f.transpose()).norm() < 1e-9 * f.f.norm());
        let f2 = fisher(&scene, &cfg, &fr, 0.6).unwrap();
        assert!((&f.f * 0.5 - &f2.f).norm() < 1e-12 * f.f.norm());

        let single = Scene::new(vec![scene.targets[0]], 0.0, 0);
        let f1 = fisher(&single, &cfg, &fr, 1.0).unwrap();
        assert_eq!(f1.f.shape(), (3, 3));
        let eig = f1.f.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-10 * eig.eigenvalues.max());
    }

    #[test]
    fn crlb_of_diagonal() {
        let fm = FisherMatrix {
            f: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0, 16.0])),
            sigma2: 1.0,
            targets: 1,
        };
        let b = crlb(&fm).unwrap();
        for (got, want) in b.iter().zip([0.25, 1.0 / 9.0, 1.0 / 16.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_targets_are_singular() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 5);
        let t = Target::deg(20.0, 5.0, 10.0);
        let f = fisher(&Scene::new(vec![t, t], 0.0, 0), &cfg, &fr, 1.0).unwrap();
        assert!(matches!(crlb(&f), Err(FracError::SingularFisher(_))));
    }

    #[test]
    fn bound_slope_is_half_decade_per_ten_db() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 6);
        let scene = Scene::new(vec![Target::deg(15.0, 10.0, -30.0)], 0.0, 0);
        let sqrt_bounds: Vec<Vec<f64>> = [0.0, 10.0, 20.0]
            .iter()
            .map(|&snr| {
                let s2 = snr_to_sigma2(snr, &scene, &cfg, &fr);
                crlb(&fisher(&scene, &cfg, &fr, s2).unwrap()).unwrap().iter().map(|b| b.sqrt()).collect()
            })
            .collect();
        for w in sqrt_bounds.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(((a / b).log10() - 0.5).abs() < 1e-9);
            }
        }
        assert!(sqrt_bounds[2].iter().all(|&b| b > 0.0));
    }

    #[test]
    fn far_second_target_barely_changes_bound() {
        let cfg = RadarConfig::standard();
        let fr = frame(&cfg, 7);
        let a = Target::deg(15.0, 10.0, -30.0);
        let b = Target::deg(45.0, -20.0, 40.0);
        let one = crlb(&fisher(&Scene::new(vec![a], 0.0, 0), &cfg, &fr, 1.0).unwrap()).unwrap();
        let two = crlb(&fisher(&Scene::new(vec![a, b], 0.0, 0), &cfg, &fr, 1.0).unwrap()).unwrap();
        let first = per_target(&two, 2)[0];
        for (x, y) in [one[0], one[1], one[2]].iter().zip([first.0, first.1, first.2]) {
            assert!((x - y).abs() / x < 0.05, "{x} vs {y}");
        }
    }
}
