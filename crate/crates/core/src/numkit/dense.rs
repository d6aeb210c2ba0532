//! SVD and eigenvalue kernels. Matrices stay in nalgebra form everywhere else;
//! the factorizations themselves run through faer.

use faer::MatRef;
use nalgebra::Complex;

use super::{CMat, Mat};

fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `m = u diag(s) v^T` with `s` nonincreasing.
pub(crate) struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// Thin factorization: `u` is `rows x k`, `v` is `cols x k`, `k = min(rows, cols)`.
pub(crate) fn thin_svd(m: &Mat) -> Svd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Svd {
            u: Mat::zeros(m.nrows(), 0),
            s: Vec::new(),
            v: Mat::zeros(m.ncols(), 0),
        };
    }
    match to_faer(m).thin_svd() {
        Ok(svd) => Svd {
            u: from_faer(svd.U()),
            s: (0..k).map(|i| svd.S()[i]).collect(),
            v: from_faer(svd.V()),
        },
        Err(_) => non_convergent(m.nrows(), m.ncols(), k),
    }
}

/// NaN singular values make every downstream rank test fail loudly instead of
/// returning a plausible number.
fn non_convergent(rows: usize, cols: usize, k: usize) -> Svd {
    Svd {
        u: Mat::from_element(rows, k, f64::NAN),
        s: vec![f64::NAN; k],
        v: Mat::from_element(cols, k, f64::NAN),
    }
}

pub(crate) fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m)
        .singular_values()
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())])
}

pub(crate) fn complex_singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let fm = faer::Mat::<faer::c64>::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        faer::c64::new(z.re, z.im)
    });
    fm.singular_values()
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())])
}

pub(crate) fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    match to_faer(m).eigenvalues() {
        Ok(ev) => ev.into_iter().map(|z| Complex::new(z.re, z.im)).collect(),
        Err(_) => Vec::new(),
    }
}
