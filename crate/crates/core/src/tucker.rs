//! Third-order complex tensors, Tucker decomposition (HOSVD, HOOI) and core-peak pairing.
//!
//! Modes are zero-based: 0 = range (M), 1 = velocity (N), 2 = angle (PQr).

use std::ops::{Index, IndexMut};

use crate::error::{FracError, Result};
use crate::linalg::{dominant_subspace, frob_sq, least_squares, CMat, C64, ZERO};

/// Dense `d0 × d1 × d2` tensor, first index fastest in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![ZERO; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> C64) -> Self {
        let mut t = Self::zeros(dims);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    t[(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Column index of entry `(i, j, k)` in the mode-`mode` unfolding.
    fn unfold_col(dims: [usize; 3], mode: usize, idx: [usize; 3]) -> usize {
        match mode {
            0 => idx[1] + dims[1] * idx[2],
            1 => idx[0] + dims[0] * idx[2],
            2 => idx[0] + dims[0] * idx[1],
            _ => panic!("tensor mode {mode} out of range"),
        }
    }

    /// Mode-`mode` unfolding: `dims[mode]` rows, remaining indices in increasing order,
    /// lower mode fastest.
    pub fn unfold(&self, mode: usize) -> CMat {
        let d = self.dims;
        let cols = d.iter().product::<usize>() / d[mode].max(1);
        let mut out = CMat::zeros(d[mode], if d[mode] == 0 { 0 } else { cols });
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let idx = [i, j, k];
                    out[(idx[mode], Self::unfold_col(d, mode, idx))] = self[(i, j, k)];
                }
            }
        }
        out
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &CMat, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let total: usize = dims.iter().product();
        if m.nrows() != dims[mode] || m.len() != total {
            return Err(FracError::DimensionMismatch(format!(
                "cannot fold {}x{} into {:?} along mode {mode}",
                m.nrows(),
                m.ncols(),
                dims
            )));
        }
        Ok(Self::from_fn(dims, |i, j, k| {
            let idx = [i, j, k];
            m[(idx[mode], Self::unfold_col(dims, mode, idx))]
        }))
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = C64;
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &C64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut C64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

/// `χ ×_mode U`.
pub fn mode_product(t: &Tensor3, u: &CMat, mode: usize) -> Result<Tensor3> {
    let mut dims = t.dims();
    if u.ncols() != dims[mode] {
        return Err(FracError::DimensionMismatch(format!(
            "mode-{mode} product with {}x{} matrix on dimension {}",
            u.nrows(),
            u.ncols(),
            dims[mode]
        )));
    }
    dims[mode] = u.nrows();
    Tensor3::fold(&(u * t.unfold(mode)), mode, dims)
}

/// Apply one matrix per mode.
pub fn multi_mode_product(t: &Tensor3, mats: [&CMat; 3]) -> Result<Tensor3> {
    let a = mode_product(t, mats[0], 0)?;
    let b = mode_product(&a, mats[1], 1)?;
    mode_product(&b, mats[2], 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerResult {
    pub core: Tensor3,
    /// Range, velocity and angle factors with orthonormal columns.
    pub factors: [CMat; 3],
    /// `‖χ − Ω ×₁ A_r ×₂ A_v ×₃ A_θ‖_F / ‖χ‖_F`.
    pub fit: f64,
    /// Fit after initialisation and after every HOOI sweep.
    pub fit_trace: Vec<f64>,
    pub iterations: usize,
}

impl TuckerResult {
    pub fn reconstruct(&self) -> Result<Tensor3> {
        multi_mode_product(&self.core, [&self.factors[0], &self.factors[1], &self.factors[2]])
    }
}

fn relative_error(t: &Tensor3, core: &Tensor3, factors: &[CMat; 3]) -> Result<f64> {
    let norm = t.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let rec = multi_mode_product(core, [&factors[0], &factors[1], &factors[2]])?;
    let err: f64 = t.data.iter().zip(rec.data.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((err.sqrt() / norm).min(1.0))
}

fn project_core(t: &Tensor3, factors: &[CMat; 3]) -> Result<Tensor3> {
    multi_mode_product(t, [&factors[0].adjoint(), &factors[1].adjoint(), &factors[2].adjoint()])
}

fn leading_left(m: &CMat, l: usize) -> Result<CMat> {
    dominant_subspace(&(m * m.adjoint()), l)
}

pub fn hosvd(t: &Tensor3, l: usize) -> Result<TuckerResult> {
    if l == 0 {
        return Err(FracError::DimensionMismatch("Tucker rank must be at least 1".into()));
    }
    let factors = [leading_left(&t.unfold(0), l)?, leading_left(&t.unfold(1), l)?, leading_left(&t.unfold(2), l)?];
    let core = project_core(t, &factors)?;
    let fit = relative_error(t, &core, &factors)?;
    Ok(TuckerResult { core, factors, fit, fit_trace: vec![fit], iterations: 0 })
}

/// Higher-order orthogonal iteration from `init`. Stops when the fit changes by less
/// than `tol` between sweeps or after `max_iter` sweeps, returning the last iterate.
pub fn hooi(t: &Tensor3, l: usize, init: TuckerResult, max_iter: usize, tol: f64) -> Result<TuckerResult> {
    let mut factors = init.factors;
    let mut fit = init.fit;
    let mut trace = vec![fit];
    let mut core = init.core;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        for mode in 0..3 {
            let mut partial = t.clone();
            for other in (0..3).filter(|&o| o != mode) {
                partial = mode_product(&partial, &factors[other].adjoint(), other)?;
            }
            factors[mode] = leading_left(&partial.unfold(mode), l)?;
        }
        core = project_core(t, &factors)?;
        let new_fit = relative_error(t, &core, &factors)?;
        trace.push(new_fit);
        let change = (fit - new_fit).abs();
        fit = new_fit;
        if change < tol {
            break;
        }
    }
    Ok(TuckerResult { core, factors, fit, fit_trace: trace, iterations })
}

/// Greedy extraction of the `l` largest core entries with pairwise distinct
/// coordinates on every mode.
pub fn core_match(core: &Tensor3, l: usize) -> Result<Vec<(usize, usize, usize)>> {
    let d = core.dims();
    if l == 0 || l > d[0].min(d[1]).min(d[2]) {
        return Err(FracError::DimensionMismatch(format!("cannot extract {l} peaks from a {:?} core", d)));
    }
    let mut used = [vec![false; d[0]], vec![false; d[1]], vec![false; d[2]]];
    let mut out = Vec::with_capacity(l);
    let mut first = 0.0;
    let mut last = 0.0;
    for step in 0..l {
        let mut best: Option<((usize, usize, usize), f64)> = None;
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    if used[0][i] || used[1][j] || used[2][k] {
                        continue;
                    }
                    let mag = core[(i, j, k)].norm();
                    if best.is_none_or(|(_, b)| mag > b) {
                        best = Some(((i, j, k), mag));
                    }
                }
            }
        }
        let ((i, j, k), mag) = best.expect("free coordinates remain while step < min dim");
        if step == 0 {
            first = mag;
        }
        last = mag;
        used[0][i] = true;
        used[1][j] = true;
        used[2][k] = true;
        out.push((i, j, k));
    }
    let threshold = 1e-6 * first;
    if !(last >= threshold) || first == 0.0 {
        return Err(FracError::DegenerateCore { magnitude: last, threshold });
    }
    Ok(out)
}

/// Moore-Penrose pseudo-inverse of a full-column-rank matrix.
pub fn pseudo_inverse(a: &CMat) -> Result<CMat> {
    least_squares(a, &CMat::identity(a.nrows(), a.nrows()))
}

/// Core of `χ` in a non-orthogonal basis: `χ ×₁ A_r⁺ ×₂ A_v⁺ ×₃ A_θ⁺`.
pub fn basis_core(t: &Tensor3, bases: [&CMat; 3]) -> Result<Tensor3> {
    let p = [pseudo_inverse(bases[0])?, pseudo_inverse(bases[1])?, pseudo_inverse(bases[2])?];
    multi_mode_product(t, [&p[0], &p[1], &p[2]])
}

/// Relative energy of `χ` outside the span of its Tucker factors, computed directly.
pub fn residual_energy(t: &Tensor3, res: &TuckerResult) -> Result<f64> {
    let rec = res.reconstruct()?;
    let n = frob_sq(&t.unfold(0));
    if n == 0.0 {
        return Ok(0.0);
    }
    Ok(t.data.iter().zip(rec.data.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cis;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: [usize; 3], seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn orthonormal_error(a: &CMat) -> f64 {
        (a.adjoint() * a - CMat::identity(a.ncols(), a.ncols())).norm()
    }

    #[test]
    fn scalar_tensor_identities() {
        let t = Tensor3::from_fn([1, 1, 1], |_, _, _| C64::new(2.0, -1.0));
        for mode in 0..3 {
            assert_eq!(t.unfold(mode)[(0, 0)], C64::new(2.0, -1.0));
        }
        let u = CMat::from_element(1, 1, C64::new(0.0, 1.0));
        assert_eq!(mode_product(&t, &u, 1).unwrap()[(0, 0, 0)], C64::new(1.0, 2.0));
    }

    #[test]
    fn unfold_fold_round_trip() {
        let t = random_tensor([3, 4, 5], 1);
        for mode in 0..3 {
            let u = t.unfold(mode);
            assert_eq!(u.nrows(), t.dims()[mode]);
            assert_eq!(Tensor3::fold(&u, mode, t.dims()).unwrap(), t);
        }
        assert!(Tensor3::fold(&CMat::zeros(3, 3), 0, [3, 4, 5]).is_err());
    }

    #[test]
    fn mode_product_identity_and_direct_sum() {
        let t = random_tensor([3, 4, 5], 2);
        for mode in 0..3 {
            let id = CMat::identity(t.dims()[mode], t.dims()[mode]);
            assert_eq!(mode_product(&t, &id, mode).unwrap(), t);
        }
        // direct summation oracle on mode 2
        let u = CMat::from_fn(2, 5, |a, b| C64::new(a as f64 + 1.0, b as f64 * 0.5));
        let p = mode_product(&t, &u, 2).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                for a in 0..2 {
                    let s: C64 = (0..5).map(|k| u[(a, k)] * t[(i, j, k)]).sum();
                    assert!((p[(i, j, a)] - s).norm() < 1e-12);
                }
            }
        }
        assert!(mode_product(&t, &u, 0).is_err());
    }

    fn rank_one(dims: [usize; 3], f: [f64; 3]) -> Tensor3 {
        Tensor3::from_fn(dims, |i, j, k| {
            cis(2.0 * std::f64::consts::PI * (f[0] * i as f64 + f[1] * j as f64 + f[2] * k as f64))
        })
    }

    #[test]
    fn hosvd_exact_cases() {
        let t = rank_one([4, 5, 6], [0.1, -0.2, 0.33]);
        let r = hosvd(&t, 1).unwrap();
        assert!(r.fit <= 1e-10);
        let full = random_tensor([3, 4, 5], 3);
        let r = hosvd(&full, 5).unwrap();
        assert!(r.fit <= 1e-12, "{}", r.fit);
    }

    #[test]
    fn hooi_stops_immediately_on_exact_input() {
        let t = rank_one([4, 5, 6], [0.1, -0.2, 0.33]);
        let init = hosvd(&t, 1).unwrap();
        let r = hooi(&t, 1, init.clone(), 100, 1e-8).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.fit <= 1e-10);
        let overlap = (init.factors[2].adjoint() * &r.factors[2])[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hooi_improves_on_hosvd_and_stays_orthonormal() {
        let t = random_tensor([6, 6, 6], 4);
        let init = hosvd(&t, 2).unwrap();
        let r = hooi(&t, 2, init.clone(), 100, 1e-8).unwrap();
        assert!(r.fit <= init.fit + 1e-12);
        for f in &r.factors {
            assert!(orthonormal_error(f) < 1e-10);
        }
        for w in r.fit_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let direct = residual_energy(&t, &r).unwrap().sqrt();
        assert!((direct - r.fit).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn hooi_fit_never_increases(seed in any::<u64>(), l in 1usize..4) {
            let t = random_tensor([5, 4, 6], seed);
            let r = hooi(&t, l, hosvd(&t, l).unwrap(), 50, 1e-10).unwrap();
            for w in r.fit_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            prop_assert!((0.0..=1.0).contains(&r.fit));
        }
    }

    #[test]
    fn core_match_diagonal_and_permuted() {
        let mut core = Tensor3::zeros([3, 3, 3]);
        core[(0, 0, 0)] = C64::new(3.0, 0.0);
        core[(1, 1, 1)] = C64::new(2.0, 0.0);
        core[(2, 2, 2)] = C64::new(1.0, 0.0);
        assert_eq!(core_match(&core, 3).unwrap(), vec![(0, 0, 0), (1, 1, 1), (2, 2, 2)]);

        let mut perm = Tensor3::zeros([3, 3, 3]);
        perm[(0, 2, 1)] = C64::new(0.0, 3.0);
        perm[(1, 0, 2)] = C64::new(-2.0, 0.0);
        perm[(2, 1, 0)] = C64::new(1.0, 0.0);
        assert_eq!(core_match(&perm, 3).unwrap(), vec![(0, 2, 1), (1, 0, 2), (2, 1, 0)]);
    }

    #[test]
    fn core_match_flags_degenerate_core() {
        let mut core = Tensor3::zeros([2, 2, 2]);
        core[(0, 0, 0)] = C64::new(1.0, 0.0);
        core[(1, 1, 1)] = C64::new(1e-9, 0.0);
        assert!(matches!(core_match(&core, 2), Err(FracError::DegenerateCore { .. })));
        assert!(matches!(core_match(&core, 3), Err(FracError::DimensionMismatch(_))));
    }

    #[test]
    fn basis_core_of_separable_sum_is_diagonal() {
        let dims = [4, 5, 6];
        let f = [[0.1, -0.2, 0.3], [-0.27, 0.15, -0.05]];
        let basis =
            |mode: usize| CMat::from_fn(dims[mode], 2, |i, c| cis(2.0 * std::f64::consts::PI * f[c][mode] * i as f64));
        let b = [basis(0), basis(1), basis(2)];
        let t = Tensor3::from_fn(dims, |i, j, k| {
            b[0][(i, 0)] * b[1][(j, 0)] * b[2][(k, 0)] * 2.0 + b[0][(i, 1)] * b[1][(j, 1)] * b[2][(k, 1)]
        });
        let core = basis_core(&t, [&b[0], &b[1], &b[2]]).unwrap();
        assert!((core[(0, 0, 0)] - C64::new(2.0, 0.0)).norm() < 1e-10);
        assert!((core[(1, 1, 1)] - C64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(core[(0, 1, 0)].norm() < 1e-10);
        assert_eq!(core_match(&core, 2).unwrap(), vec![(0, 0, 0), (1, 1, 1)]);
    }
}
