//! Small dense linear-algebra helpers used by the stability analysis.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{lit, Real};

/// Convergence tolerance on the change of the unit iterate.
pub const POWER_ITERATION_TOL: f64 = 1e-9;
/// Iteration cap for the power iteration.
pub const POWER_ITERATION_MAX_ITER: usize = 500;

/// Largest singular value together with its singular vectors.
#[derive(Clone, Debug)]
pub struct SpectralNorm<T: Real> {
    pub value: T,
    /// Left singular vector (unit length, zero when `value == 0`).
    pub left: DVector<T>,
    /// Right singular vector (unit length, zero when `value == 0`).
    pub right: DVector<T>,
    pub iterations: usize,
}

fn start_vector<T: Real>(n: usize) -> DVector<T> {
    // Deterministic, with no zero entries and no symmetry that could make it
    // orthogonal to the dominant direction of a structured matrix.
    let v = DVector::from_fn(n, |i, _| lit::<T>(1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract()));
    let norm = v.norm();
    v / norm
}

/// Spectral norm `||m||_2` by power iteration on `m' m`.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> SpectralNorm<T> {
    let (rows, cols) = m.shape();
    let zero = SpectralNorm {
        value: T::zero(),
        left: DVector::zeros(rows),
        right: DVector::zeros(cols),
        iterations: 0,
    };
    if rows == 0 || cols == 0 {
        return zero;
    }
    let tol = lit::<T>(POWER_ITERATION_TOL);
    let mut v = start_vector::<T>(cols);
    let mut sigma = T::zero();
    let mut iterations = 0;
    for it in 1..=POWER_ITERATION_MAX_ITER {
        iterations = it;
        let mv = m * &v;
        let w = m.tr_mul(&mv);
        let wn = w.norm();
        if wn == T::zero() {
            return zero;
        }
        let next_v = w / wn;
        let step = (&next_v - &v).norm();
        v = next_v;
        sigma = (m * &v).norm();
        // Converging the direction (not only the value) keeps the singular
        // vectors accurate enough for gradients of the norm.
        let converged = step <= tol;
        if converged {
            break;
        }
    }
    if sigma == T::zero() {
        return zero;
    }
    let left = (m * &v) / sigma;
    SpectralNorm {
        value: sigma,
        left,
        right: v,
        iterations,
    }
}

/// Spectral radius `max |lambda_i(m)|`.
///
/// Eigenvalues come from a real Schur decomposition; if that fails to
/// converge the Gelfand bound `||m^k||^(1/k)` with k = 64 is returned.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return T::zero();
    }
    let eps = T::default_epsilon();
    if let Some(schur) = m.clone().try_schur(eps, 10_000) {
        return schur
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re * z.re + z.im * z.im).sqrt())
            .fold(T::zero(), |a, b| a.max(b));
    }
    log::warn!("Schur decomposition did not converge; using Gelfand bound");
    let mut p = m.clone();
    let mut scale = T::zero();
    // Repeated squaring with renormalization: ||m^(2^s)||^(2^-s).
    for s in 0..6 {
        let n = p.norm();
        if n == T::zero() {
            return T::zero();
        }
        scale += n.ln() / lit::<T>(2f64.powi(s));
        p /= n;
        p = &p * &p;
    }
    scale.exp()
}

/// Numerical rank: singular values below `rel_tol * sigma_max` count as zero.
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag<T: Real>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, c);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// `||v||_inf`, zero for empty vectors.
pub fn inf_norm<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -2.0, 1.5]));
        let s = spectral_norm(&m);
        assert!((s.value - 2.0f64).abs() < 1e-8);
        assert!((s.left.dot(&(&m * &s.right)) - s.value).abs() < 1e-8);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let m: DMatrix<f64> = DMatrix::from_row_slice(3, 4, &[
            0.2, -0.7, 0.1, 0.4, 1.1, 0.3, -0.5, 0.0, -0.2, 0.9, 0.8, -1.3,
        ]);
        let svd_max = m.clone().svd(false, false).singular_values.max();
        assert!((spectral_norm(&m).value - svd_max).abs() < 1e-7);
    }

    #[test]
    fn zero_matrix_has_zero_norm() {
        let s = spectral_norm(&DMatrix::<f64>::zeros(2, 3));
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn spectral_radius_of_rotation_and_shift() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((spectral_radius(&r) - 0.9f64).abs() < 1e-12);
        let mut shift = DMatrix::<f64>::zeros(4, 4);
        for i in 0..3 {
            shift[(i, i + 1)] = 1.0;
        }
        assert!(spectral_radius(&shift) < 1e-6);
    }

    #[test]
    fn rank_threshold() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0 + 1e-12]);
        assert_eq!(numerical_rank(&m, 1e-8), 1);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(3, 3), 1e-8), 3);
    }
}
