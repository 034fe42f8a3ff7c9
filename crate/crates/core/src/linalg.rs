//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{FracError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `exp(j*phase)`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    let (s, c) = phase.sin_cos();
    C64::new(c, s)
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Hermitian part `(H + Hᴴ)/2`.
pub fn hermitian_part(h: &CMat) -> CMat {
    let mut out = h.clone();
    let n = h.nrows();
    for i in 0..n {
        out[(i, i)] = C64::new(h[(i, i)].re, 0.0);
        for j in 0..i {
            let z = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            out[(i, j)] = z;
            out[(j, i)] = z.conj();
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted ascending.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: CMat,
}

pub fn hermitian_eigen(h: &CMat) -> Result<HermitianEigen> {
    if h.nrows() != h.ncols() {
        return Err(FracError::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    if !is_finite(h) {
        return Err(FracError::EigFailure("non-finite input".into()));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(hermitian_part(h), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| FracError::EigFailure("symmetric QR did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FracError::EigFailure("non-finite eigenvalue".into()));
    }
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Columns spanning the `l` dominant eigenvectors of `h` (largest eigenvalues first).
pub fn dominant_subspace(h: &CMat, l: usize) -> Result<CMat> {
    let eig = hermitian_eigen(h)?;
    let n = h.nrows();
    let l = l.min(n);
    let mut out = CMat::zeros(n, l);
    for i in 0..l {
        out.set_column(i, &eig.vectors.column(n - 1 - i));
    }
    Ok(out)
}

/// Least-squares solve `min ‖A x − b‖` via the normal equations with a Cholesky
/// factorisation, falling back to SVD when the Gram matrix is not positive definite.
pub fn least_squares(a: &CMat, b: &CMat) -> Result<CMat> {
    let gram = a.adjoint() * a;
    let rhs = a.adjoint() * b;
    if let Some(ch) = gram.clone().cholesky() {
        let x = ch.solve(&rhs);
        if is_finite(&x) {
            return Ok(x);
        }
    }
    let svd = nalgebra::linalg::SVD::try_new(a.clone(), true, true, f64::EPSILON, 1000 * a.ncols().max(10))
        .ok_or_else(|| FracError::NonFinite("least squares: SVD did not converge".into()))?;
    let x = svd
        .solve(b, 1e-12 * svd.singular_values.max())
        .map_err(|e| FracError::NonFinite(format!("least squares: {e}")))?;
    if !is_finite(&x) {
        return Err(FracError::NonFinite("least squares".into()));
    }
    Ok(x)
}

/// Roots of `Σ coeffs[k] z^k`. Trailing (highest-degree) zero coefficients are dropped.
pub fn poly_roots(coeffs: &[C64]) -> Vec<C64> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1].norm() <= 1e-300_f64.max(scale * 1e-300) {
        deg -= 1;
    }
    if deg <= 1 || coeffs[..deg].iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return vec![];
    }
    let d = deg - 1;
    let lead = coeffs[d];
    let mut comp = CMat::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = ONE;
    }
    for i in 0..d {
        comp[(i, d - 1)] = -coeffs[i] / lead;
    }
    // nalgebra's `eigenvalues()` iterates without bound, so cap the Schur sweep
    let mut roots: Vec<C64> = nalgebra::linalg::Schur::try_new(comp, 1e-15, 20 * d.max(10))
        .and_then(|s| s.eigenvalues())
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|| aberth(&coeffs[..deg]));
    // Newton polish against the original polynomial
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (mut p, mut dp) = (ZERO, ZERO);
            for &c in coeffs[..deg].iter().rev() {
                dp = dp * *z + p;
                p = p * *z + c;
            }
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
                break;
            }
            *z -= step;
        }
    }
    roots
}

/// Aberth-Ehrlich simultaneous root iteration for the rare companion-matrix failure.
fn aberth(coeffs: &[C64]) -> Vec<C64> {
    let d = coeffs.len() - 1;
    let radius = 1.0 + coeffs[..d].iter().map(|c| (c / coeffs[d]).norm()).fold(0.0, f64::max);
    let mut z: Vec<C64> = (0..d)
        .map(|k| C64::from_polar(0.5 * radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / d as f64))
        .collect();
    let eval = |x: C64| {
        let (mut p, mut dp) = (ZERO, ZERO);
        for &c in coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    };
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..d {
            let (p, dp) = eval(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulse: C64 = (0..d).filter(|&j| j != i).map(|j| ONE / (z[i] - z[j])).sum();
            let w = ratio / (ONE - ratio * repulse);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm() / (1.0 + z[i].norm()));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_roots_of_known_cubic() {
        // (z-1)(z-2j)(z+0.5) = z^3 + (-0.5-2j) z^2 + (-0.5+j) z + j
        let coeffs = [C64::new(0.0, 1.0), C64::new(-0.5, 1.0), C64::new(-0.5, -2.0), ONE];
        let mut roots = poly_roots(&coeffs);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let expect = [C64::new(-0.5, 0.0), C64::new(0.0, 2.0), C64::new(1.0, 0.0)];
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip(expect.iter()) {
            assert!((r - e).norm() < 1e-10, "{r} vs {e}");
        }
    }

    #[test]
    fn aberth_matches_known_roots() {
        let coeffs = [C64::new(0.0, 1.0), C64::new(-0.5, 1.0), C64::new(-0.5, -2.0), ONE];
        let roots = aberth(&coeffs);
        for e in [C64::new(-0.5, 0.0), C64::new(0.0, 2.0), C64::new(1.0, 0.0)] {
            assert!(roots.iter().any(|r| (r - e).norm() < 1e-10), "{e} missing from {roots:?}");
        }
    }

    #[test]
    fn poly_roots_terminates_on_unit_circle_and_repeated_roots() {
        // z^d - 1 and (z - 1)^2 (z^d - 1): symmetric companions that stall unshifted QR
        for d in 2..40 {
            let mut unity = vec![ZERO; d + 1];
            unity[0] = -ONE;
            unity[d] = ONE;
            let roots = poly_roots(&unity);
            assert_eq!(roots.len(), d);
            assert!(roots.iter().all(|r| (r.powu(d as u32) - ONE).norm() < 1e-8), "d = {d}");

            let mut doubled = vec![ZERO; d + 3];
            for (i, &c) in unity.iter().enumerate() {
                doubled[i] += c;
                doubled[i + 1] -= c * 2.0;
                doubled[i + 2] += c;
            }
            assert_eq!(poly_roots(&doubled).len(), d + 2);
        }
        assert!(poly_roots(&[ONE, C64::new(f64::NAN, 0.0), ONE]).is_empty());
    }

    #[test]
    fn hermitian_eigen_sorted_ascending() {
        let h = CMat::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let e = hermitian_eigen(&h).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12 && (e.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = CMat::from_fn(6, 2, |i, j| cis(0.3 * (i * (j + 1)) as f64));
        let x = CMat::from_row_slice(2, 1, &[C64::new(1.0, -2.0), C64::new(0.5, 0.25)]);
        let b = &a * &x;
        let got = least_squares(&a, &b).unwrap();
        assert!((got - x).norm() < 1e-10);
    }
}
