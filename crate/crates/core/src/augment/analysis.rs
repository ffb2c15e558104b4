use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{numerical_rank, spectral_radius};
use crate::scalar::{lit, to_f64, Real};

/// Margin below 1 required of a spectral radius to count as stable.
pub const SCHUR_MARGIN: f64 = 1e-9;
/// Relative singular-value threshold for Kalman ranks.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurCheck {
    pub stable: bool,
    pub spectral_radius: f64,
}

pub fn check_schur<T: Real>(a: &DMatrix<T>) -> SchurCheck {
    let rho = to_f64(spectral_radius(a));
    SchurCheck {
        stable: rho < 1.0 - SCHUR_MARGIN,
        spectral_radius: rho,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralReport<T: Real> {
    pub reachable: bool,
    /// Kalman rank test.
    pub observable: bool,
    /// Unobservable states are flushed in `n` steps: `ker O` lies in
    /// `ker A^n`. For a shift-register state with `N >= 2` the Kalman test
    /// always fails on the oldest block, so this is the check that gates
    /// controller synthesis.
    pub reconstructible: bool,
    pub dc_gain_nonsingular: bool,
    /// `C (I - A)^-1 B`.
    pub dc_gain: DMatrix<T>,
}

impl<T: Real> StructuralReport<T> {
    pub fn passed(&self) -> bool {
        self.reachable && self.reconstructible && self.dc_gain_nonsingular
    }
}

fn kalman_matrix<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let m = b.ncols();
    let mut k = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        k.columns_mut(i * m, m).copy_from(&block);
        block = a * block;
    }
    k
}

/// Whether every state invisible in the output is driven to zero by `A^n`.
fn reconstructible<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> bool {
    let n = a.nrows();
    let obs = kalman_matrix(&a.transpose(), &c.transpose()).transpose();
    let svd = obs.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    if smax == T::zero() {
        return a.pow(n as u32).norm() <= lit::<T>(RANK_TOL);
    }
    let cut = smax * lit::<T>(RANK_TOL);
    let a_n = a.pow(n as u32);
    let scale = a_n.norm().max(T::one());
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cut)
        .all(|(i, _)| (&a_n * v_t.row(i).transpose()).norm() <= lit::<T>(1e-6) * scale)
}

/// `C (I - A)^-1 B`; fails when `I - A` is singular.
pub fn dc_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = DMatrix::<T>::identity(n, n) - a;
    let sol = m.lu().solve(b).ok_or_else(|| {
        Error::Inconsistent("I - A is singular although A was reported Schur stable".into())
    })?;
    Ok(c * sol)
}

/// Reachability, observability and absence of an invariant zero at 1
/// (nonsingular dc gain, equivalent given Schur `A`).
pub fn check_structural<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<StructuralReport<T>> {
    let n = a.nrows();
    dim_check(a.is_square() && b.nrows() == n && c.ncols() == n, || "inconsistent (A, B, C) sizes".into())?;
    let rank = |k: DMatrix<T>| numerical_rank(&k, lit(RANK_TOL));
    let reachable = rank(kalman_matrix(a, b)) == n;
    let observable = rank(kalman_matrix(&a.transpose(), &c.transpose())) == n;
    let reconstructible = observable || reconstructible(a, c);
    let g = dc_gain(a, b, c)?;
    let p = g.nrows();
    let dc_gain_nonsingular = g.is_square() && numerical_rank(&g, lit(RANK_TOL)) == p && to_f64(g.norm()) > 0.0;
    Ok(StructuralReport {
        reachable,
        observable,
        reconstructible,
        dc_gain_nonsingular,
        dc_gain: g,
    })
}

/// Integral-action gain and the spectral radius of the linearized loop.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorGain<T: Real> {
    pub mu: DMatrix<T>,
    pub mu_tilde: T,
    pub dc_gain: DMatrix<T>,
    pub loop_radius: f64,
}

/// `[[A, B], [-mu C, I]]` acting on `(dx, dxi)`.
pub fn loop_matrix<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>, mu: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let m = b.ncols();
    let mut l = DMatrix::zeros(n + m, n + m);
    l.view_mut((0, 0), (n, n)).copy_from(a);
    l.view_mut((0, n), (n, m)).copy_from(b);
    l.view_mut((n, 0), (m, n)).copy_from(&(-(mu * c)));
    l.view_mut((n, n), (m, m)).fill_with_identity();
    l
}

/// `mu = mu_tilde * G^-1` with `G = C (I - A)^-1 B`.
pub fn compute_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>, mu_tilde: T) -> Result<IntegratorGain<T>> {
    if !(mu_tilde > T::zero()) {
        return Err(Error::InvalidArgument("mu_tilde must be positive".into()));
    }
    let g = dc_gain(a, b, c)?;
    let g_inv = g.clone().try_inverse().ok_or(Error::SingularDcGain)?;
    let mu = g_inv * mu_tilde;
    let loop_radius = to_f64(spectral_radius(&loop_matrix(a, b, c, &mu)));
    Ok(IntegratorGain {
        mu,
        mu_tilde,
        dc_gain: g,
        loop_radius,
    })
}

/// Largest certified `mu_tilde` and the matching `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct MuBound<T: Real> {
    pub mu_tilde_max: T,
    pub mu_max: DMatrix<T>,
}

const MU_FLOOR: f64 = 1e-6;
const MU_CEILING: f64 = 1e6;
const GRID: usize = 10;

/// Bisection for the largest `mu_tilde` such that every tested value in
/// `(0, mu_tilde]` (the candidate and a 10-point interior grid) gives a
/// Schur-stable loop.
pub fn find_mu_max<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>, resolution: f64) -> Result<MuBound<T>> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let g = dc_gain(a, b, c)?;
    let g_inv = g.try_inverse().ok_or(Error::SingularDcGain)?;
    let stable_at = |mt: f64| {
        let mu = &g_inv * lit::<T>(mt);
        spectral_radius(&loop_matrix(a, b, c, &mu)) < lit::<T>(1.0 - SCHUR_MARGIN)
    };
    let certified = |mt: f64| stable_at(mt) && (1..=GRID).all(|j| stable_at(mt * j as f64 / (GRID + 1) as f64));
    if !stable_at(MU_FLOOR) {
        return Err(Error::Tuning(format!("integral loop is unstable even for mu_tilde = {MU_FLOOR}")));
    }
    let mut lo = MU_FLOOR;
    let mut hi = 2.0 * lo;
    while certified(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > MU_CEILING {
            return Err(Error::Tuning(format!("no stability boundary found below mu_tilde = {MU_CEILING}")));
        }
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if certified(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MuBound {
        mu_tilde_max: lit(lo),
        mu_max: g_inv * lit::<T>(lo),
    })
}
