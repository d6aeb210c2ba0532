//! Dense numerical primitives shared by every design and monitoring routine.
//!
//! All rank decisions go through singular values. Ranks are counted relative
//! to the largest singular value; "is this matrix zero" questions use an
//! absolute threshold. Both knobs live in [`Tolerance`].

mod dense;
mod staircase;

pub use staircase::{controllability_staircase, deadbeat_feedback, is_reconstructable, Staircase};

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex<f64>>;

/// Eigenvalues with modulus below this fraction of `max(1, |M|_max)` are
/// treated as zero when collecting candidate rank-drop points. Defective zero
/// eigenvalues are computed with errors of order `eps^(1/k)`, so the cut has
/// to sit well above `sqrt(eps)`.
pub const NONZERO_EIGENVALUE_REL: f64 = 1e-5;

/// Rank and zero-test tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Singular values at or below `rel_rank_tol * sigma_max` count as zero.
    pub rel_rank_tol: f64,
    /// Entrywise threshold for "numerically zero" matrices.
    pub abs_zero_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_rank_tol: 1e-9,
            abs_zero_tol: 1e-8,
        }
    }
}

impl Tolerance {
    pub fn new(rel_rank_tol: f64, abs_zero_tol: f64) -> Result<Self> {
        if !(rel_rank_tol > 0.0 && rel_rank_tol < 1.0) {
            return Err(Error::InvalidTolerance(format!(
                "rel_rank_tol must lie in (0, 1), got {rel_rank_tol}"
            )));
        }
        if !(abs_zero_tol > 0.0) || !abs_zero_tol.is_finite() {
            return Err(Error::InvalidTolerance(format!(
                "abs_zero_tol must be positive, got {abs_zero_tol}"
            )));
        }
        Ok(Self {
            rel_rank_tol,
            abs_zero_tol,
        })
    }
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max(1, |m|_max)`, the normalisation used by every post-hoc identity check.
pub fn unit_scale(m: &Mat) -> f64 {
    max_abs(m).max(1.0)
}

pub fn singular_values(m: &Mat) -> Vector {
    if m.is_empty() {
        return Vector::zeros(0);
    }
    Vector::from_vec(dense::singular_values(m))
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).iter().fold(0.0_f64, |acc, s| acc.max(*s))
}

fn count_above(sv: impl Iterator<Item = f64> + Clone, rel: f64) -> usize {
    let smax = sv.clone().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.filter(|s| *s > rel * smax).count()
}

/// Number of singular values above `rel_rank_tol * sigma_max`.
pub fn numerical_rank(m: &Mat, tol: &Tolerance) -> usize {
    count_above(singular_values(m).iter().copied(), tol.rel_rank_tol)
}

/// Rank with an explicit reference scale: singular values above
/// `rel_rank_tol * scale` are counted. Used where a block can be tiny relative
/// to the data it was carved out of (e.g. `Y_E` when `r = 0`).
pub fn rank_against_scale(m: &Mat, tol: &Tolerance, scale: f64) -> usize {
    singular_values(m)
        .iter()
        .filter(|s| **s > tol.rel_rank_tol * scale)
        .count()
}

pub fn complex_rank(m: &CMat, tol: &Tolerance) -> usize {
    if m.is_empty() {
        return 0;
    }
    count_above(dense::complex_singular_values(m).into_iter(), tol.rel_rank_tol)
}

/// Moore-Penrose inverse with the default tolerance.
pub fn pseudo_inverse(m: &Mat) -> Mat {
    pseudo_inverse_with(m, &Tolerance::default())
}

pub fn pseudo_inverse_with(m: &Mat, tol: &Tolerance) -> Mat {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return Mat::zeros(cols, rows);
    }
    let svd = dense::thin_svd(m);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let mut out = Mat::zeros(cols, rows);
    if !(smax > 0.0) {
        return out;
    }
    for (i, s) in svd.s.iter().enumerate() {
        if *s > tol.rel_rank_tol * smax {
            // out += v_i * u_i^T / s
            out += svd.v.column(i) * svd.u.column(i).transpose() / *s;
        }
    }
    out
}

/// Pseudo-inverse truncated to the `rank` leading singular triplets.
pub(crate) fn truncated_pseudo_inverse(m: &Mat, rank: usize) -> Mat {
    let (rows, cols) = m.shape();
    let mut out = Mat::zeros(cols, rows);
    if rank == 0 || m.is_empty() {
        return out;
    }
    let svd = dense::thin_svd(m);
    for (i, &s) in svd.s.iter().enumerate().take(rank) {
        if !(s > 0.0) {
            break;
        }
        out += svd.v.column(i) * svd.u.column(i).transpose() / s;
    }
    out
}

/// Orthonormal basis of the row space of `m` (as columns) and its complement.
fn row_space_split(m: &Mat, tol: &Tolerance) -> (Mat, Mat) {
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 {
        return (Mat::zeros(cols, 0), Mat::identity(cols, cols));
    }
    let svd = dense::thin_svd(m);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = svd
        .s
        .iter()
        .enumerate()
        .filter(|(_, s)| smax > 0.0 && **s > tol.rel_rank_tol * smax)
        .map(|(i, _)| i)
        .collect();
    let mut basis = Mat::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &svd.v.column(i));
    }
    let complement = orthonormal_complement(&basis);
    (basis, complement)
}

/// Columns spanning the orthogonal complement of the (orthonormal) columns of
/// `basis`. Householder QR of `[basis | I]` yields a full orthogonal factor
/// whose leading columns span `basis`.
pub fn orthonormal_complement(basis: &Mat) -> Mat {
    let (n, k) = basis.shape();
    if k == 0 {
        return Mat::identity(n, n);
    }
    if k >= n {
        return Mat::zeros(n, 0);
    }
    let mut aug = Mat::zeros(n, k + n);
    aug.view_mut((0, 0), (n, k)).copy_from(basis);
    aug.view_mut((0, k), (n, n)).fill_with_identity();
    let q = aug.qr().q();
    q.columns(k, n - k).into_owned()
}

/// Orthonormal kernel basis of `m` (columns).
pub fn null_space_basis(m: &Mat, tol: &Tolerance) -> Mat {
    row_space_split(m, tol).1
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: &Mat, tol: &Tolerance) -> Mat {
    row_space_split(&m.transpose(), tol).0
}

/// Least `k <= n` with `|(M/s)^k|_max < abs_zero_tol`, `s = max(1, |M|_max)`.
/// `None` when the matrix is not (numerically) nilpotent.
pub fn nilpotency_index(m: &Mat, tol: &Tolerance) -> Option<usize> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "nilpotency test needs a square matrix");
    if n == 0 {
        return Some(0);
    }
    let scaled = m / unit_scale(m);
    let mut power = scaled.clone();
    for k in 1..=n {
        if max_abs(&power) < tol.abs_zero_tol {
            return Some(k);
        }
        power = &power * &scaled;
    }
    None
}

pub fn is_nilpotent(m: &Mat, tol: &Tolerance) -> bool {
    nilpotency_index(m, tol).is_some()
}

/// Spectral radius; NaN when the eigenvalue iteration fails.
pub fn spectral_radius(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let ev = dense::eigenvalues(m);
    if ev.is_empty() {
        return f64::NAN;
    }
    ev.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex::new(v, 0.0))
}

/// Rank of `[zI - a; c]`.
pub fn pbh_rank_at(a: &Mat, c: &Mat, z: Complex<f64>, tol: &Tolerance) -> usize {
    let n = a.nrows();
    let p = c.nrows();
    let mut pencil = CMat::zeros(n + p, n);
    for i in 0..n {
        for j in 0..n {
            let diag = if i == j { z } else { Complex::new(0.0, 0.0) };
            pencil[(i, j)] = diag - a[(i, j)];
        }
    }
    for i in 0..p {
        for j in 0..n {
            pencil[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
        }
    }
    complex_rank(&pencil, tol)
}

/// Eigenvalues of `m` whose modulus exceeds the [`NONZERO_EIGENVALUE_REL`] cut,
/// one representative per conjugate pair.
pub fn nonzero_eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
        return Vec::new();
    }
    let cut = NONZERO_EIGENVALUE_REL * unit_scale(m);
    dense::eigenvalues(m)
        .into_iter()
        .filter(|z| z.norm() > cut && z.im >= 0.0)
        .collect()
}

/// Deterministic pseudo-random nonzero complex points with moduli in
/// `[0.2, 1.5] * radius`, used as generic-rank witnesses.
pub fn witness_points(seed: u64, count: usize, radius: f64) -> Vec<Complex<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rho = rng.random_range(0.2..1.5) * radius;
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            Complex::from_polar(rho, theta)
        })
        .collect()
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((offset, 0), (b.nrows(), cols)).copy_from(*b);
        offset += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(*b);
        offset += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn ex1_c() -> Mat {
        dmatrix![1.0, 0.0, 0.0, 0.0, 0.0;
                 0.0, 0.0, 1.0, -2.0, 0.0;
                 -1.0, 0.0, 0.0, 1.0, 0.0]
    }

    fn ex1_e() -> Mat {
        dmatrix![0.0, 0.0; 0.0, 0.0; 1.0, 1.0; 0.0, 1.0; 0.0, 0.0]
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 1e-8).is_err());
        assert!(Tolerance::new(1.0, 1e-8).is_err());
        assert!(Tolerance::new(1e-9, 0.0).is_err());
        assert!(Tolerance::new(1e-9, 1e-8).is_ok());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Mat::identity(3, 3), &tol()), 3);
        assert_eq!(numerical_rank(&Mat::zeros(3, 4), &tol()), 0);
        let ce = ex1_c() * ex1_e();
        assert_eq!(ce, dmatrix![0.0, 0.0; 1.0, -1.0; 0.0, 1.0]);
        assert_eq!(numerical_rank(&ce, &tol()), 2);
        let cb = ex1_c() * dmatrix![1.0; 0.0; 0.0; 0.0; 0.0];
        assert_eq!(numerical_rank(&hstack(&[&cb, &ce]), &tol()), 3);
    }

    #[test]
    fn pseudo_inverse_examples() {
        assert_eq!(pseudo_inverse(&Mat::identity(4, 4)), Mat::identity(4, 4));
        let col = dmatrix![1.0; 0.0; -1.0];
        let pinv = pseudo_inverse(&col);
        let expected = dmatrix![0.5, 0.0, -0.5];
        assert!(max_abs(&(pinv - expected)) < 1e-15);
        let z = pseudo_inverse(&Mat::zeros(2, 3));
        assert_eq!(z.shape(), (3, 2));
        assert_eq!(max_abs(&z), 0.0);
    }

    #[test]
    fn null_space_examples() {
        let row = dmatrix![1.0, 0.0, 0.0];
        let basis = null_space_basis(&row, &tol());
        assert_eq!(basis.shape(), (3, 2));
        assert!(max_abs(&(&row * &basis)) < 1e-12);
        assert!(max_abs(&(basis.transpose() * &basis - Mat::identity(2, 2))) < 1e-12);
        // no component along e1
        assert!(basis.row(0).iter().all(|v| v.abs() < 1e-12));

        let fcr = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 7.0];
        assert_eq!(null_space_basis(&fcr, &tol()).ncols(), 0);
    }

    #[test]
    fn nilpotency_examples() {
        assert_eq!(nilpotency_index(&Mat::zeros(4, 4), &tol()), Some(1));
        assert_eq!(nilpotency_index(&Mat::identity(4, 4), &tol()), None);
        let shift = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 0.0, 0.0, 0.0];
        assert_eq!(nilpotency_index(&shift, &tol()), Some(3));
        let a_uio = dmatrix![0.0, 0.0, 0.0, 0.0, 0.0;
                             -0.8, 0.0, 0.0, 0.0, 0.0;
                             0.8, 0.0, 0.0, 0.0, 0.0;
                             -1.6, 0.0, 0.0, 0.0, 0.0;
                             0.8, -0.9, 0.6, 0.1, 0.0];
        assert_eq!(nilpotency_index(&a_uio, &tol()), Some(3));
    }

    #[test]
    fn pbh_examples() {
        let z = Complex::new(0.7, -0.3);
        assert_eq!(pbh_rank_at(&Mat::zeros(3, 3), &Mat::identity(3, 3), z, &tol()), 3);
        let a = dmatrix![1.0, 0.0; 0.0, 0.0];
        let c = dmatrix![0.0, 1.0];
        assert_eq!(pbh_rank_at(&a, &c, Complex::new(1.0, 0.0), &tol()), 1);
        assert_eq!(pbh_rank_at(&a, &c, Complex::new(0.5, 0.0), &tol()), 2);
    }

    #[test]
    fn complement_is_orthonormal() {
        let basis = range_basis(&dmatrix![1.0, 1.0; 1.0, -1.0; 0.0, 0.0; 0.0, 0.0], &tol());
        assert_eq!(basis.ncols(), 2);
        let comp = orthonormal_complement(&basis);
        assert_eq!(comp.ncols(), 2);
        assert!(max_abs(&(basis.transpose() * &comp)) < 1e-14);
        assert!(max_abs(&(comp.transpose() * &comp - Mat::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn nonzero_eigenvalues_skip_defective_zero() {
        // Jordan block at zero plus one real mode; the spurious O(sqrt(eps))
        // splitting of the zero block must not be reported.
        let m = dmatrix![0.0, 1.0, 0.3; 0.0, 0.0, 0.2; 0.0, 0.0, 0.8];
        let q = dmatrix![0.6, 0.8, 0.0; -0.8, 0.6, 0.0; 0.0, 0.0, 1.0];
        let similar = &q * m * q.transpose();
        let eig = nonzero_eigenvalues(&similar);
        assert_eq!(eig.len(), 1);
        assert!((eig[0].re - 0.8).abs() < 1e-12);
    }

    #[test]
    fn witness_points_are_deterministic_and_nonzero() {
        let a = witness_points(7, 8, 1.0);
        let b = witness_points(7, 8, 1.0);
        assert_eq!(a, b);
        assert!(a.iter().all(|z| z.norm() >= 0.2 - 1e-12));
    }
}
