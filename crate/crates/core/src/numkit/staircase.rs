//! Orthogonal controllability staircase and minimum-index dead-beat feedback.
//!
//! Observer problems are handled through duality: `(A, C)` reconstructable is
//! `(A^T, C^T)` having a nilpotent uncontrollable part, and an output
//! injection `L` with `A - L C` nilpotent is the transpose of a state feedback
//! `K` with `A^T - C^T K` nilpotent.

use super::{nilpotency_index, orthonormal_complement, pseudo_inverse, spectral_norm, Mat, Tolerance};
use crate::error::{Error, Result};

/// `Q^T F Q` is block upper Hessenberg on its leading `controllable_dim`
/// coordinates, `Q^T G` vanishes below the first block, and the trailing
/// block is the uncontrollable part.
#[derive(Debug, Clone)]
pub struct Staircase {
    pub q: Mat,
    pub f: Mat,
    pub g: Mat,
    pub blocks: Vec<usize>,
    pub controllable_dim: usize,
}

impl Staircase {
    pub fn uncontrollable_block(&self) -> Mat {
        let n = self.f.nrows();
        let c = self.controllable_dim;
        self.f.view((c, c), (n - c, n - c)).into_owned()
    }
}

fn leading_left_vectors(m: &Mat, threshold: f64) -> Mat {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return Mat::zeros(rows, 0);
    }
    let svd = super::dense::thin_svd(m);
    let keep: Vec<usize> = svd
        .s
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > threshold)
        .map(|(i, _)| i)
        .collect();
    let mut out = Mat::zeros(rows, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &svd.u.column(i));
    }
    out
}

pub fn controllability_staircase(f: &Mat, g: &Mat, tol: &Tolerance) -> Staircase {
    let n = f.nrows();
    assert_eq!(n, f.ncols(), "staircase needs a square state matrix");
    assert_eq!(n, g.nrows(), "staircase input matrix row mismatch");

    let threshold = tol.rel_rank_tol * spectral_norm(f).max(spectral_norm(g));
    let mut q = Mat::identity(n, n);
    let mut ft = f.clone();
    let mut gt = g.clone();
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut prev = 0;

    while offset < n && threshold > 0.0 {
        let rem = n - offset;
        let driver = if blocks.is_empty() {
            gt.rows(offset, rem).into_owned()
        } else {
            ft.view((offset, prev), (rem, offset - prev)).into_owned()
        };
        let lead = leading_left_vectors(&driver, threshold);
        let rho = lead.ncols();
        if rho == 0 {
            break;
        }
        let mut w = Mat::zeros(rem, rem);
        w.columns_mut(0, rho).copy_from(&lead);
        if rho < rem {
            w.columns_mut(rho, rem - rho).copy_from(&orthonormal_complement(&lead));
        }
        let mut step = Mat::identity(n, n);
        step.view_mut((offset, offset), (rem, rem)).copy_from(&w);
        ft = step.transpose() * &ft * &step;
        gt = step.transpose() * &gt;
        q = &q * &step;
        blocks.push(rho);
        prev = offset;
        offset += rho;
    }

    Staircase {
        q,
        f: ft,
        g: gt,
        blocks,
        controllable_dim: offset,
    }
}

/// True when every unobservable mode of `(a, c)` sits at zero.
pub fn is_reconstructable(a: &Mat, c: &Mat, tol: &Tolerance) -> bool {
    let st = controllability_staircase(&a.transpose(), &c.transpose(), tol);
    nilpotency_index(&st.uncontrollable_block(), tol).is_some()
}

/// State feedback `K` such that `f - g K` is nilpotent.
///
/// The controllable part is brought to block Hessenberg form; a unit block
/// upper triangular similarity then clears every block row below the first
/// except the subdiagonal, and the first block row is cancelled through the
/// full-row-rank leading input block. The closed loop is nilpotent with index
/// equal to the number of staircase blocks plus that of the uncontrollable
/// part.
pub fn deadbeat_feedback(f: &Mat, g: &Mat, tol: &Tolerance) -> Result<Mat> {
    let n = f.nrows();
    let m = g.ncols();
    let st = controllability_staircase(f, g, tol);
    let unc = st.uncontrollable_block();
    if nilpotency_index(&unc, tol).is_none() {
        return Err(Error::NotReconstructable(format!(
            "{}-dimensional uncontrollable part is not nilpotent",
            unc.nrows()
        )));
    }
    let nc = st.controllable_dim;
    if nc == 0 {
        return Ok(Mat::zeros(m, n));
    }

    let offsets: Vec<usize> = st
        .blocks
        .iter()
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += b;
            Some(o)
        })
        .collect();
    let blk = |i: usize| (offsets[i], st.blocks[i]);

    let mut h = st.f.view((0, 0), (nc, nc)).into_owned();
    let mut t = Mat::identity(nc, nc);
    let k = st.blocks.len();

    for i in (1..k).rev() {
        let (oi, bi) = blk(i);
        let (op, bp) = blk(i - 1);
        let sub_pinv = pseudo_inverse(&h.view((oi, op), (bi, bp)).into_owned());
        for j in i..k {
            let (oj, bj) = blk(j);
            let z = &sub_pinv * h.view((oi, oj), (bi, bj));
            let shift_cols = h.view((0, op), (nc, bp)) * &z;
            let mut cols = h.view_mut((0, oj), (nc, bj));
            cols -= shift_cols;
            let shift_rows = &z * h.view((oj, 0), (bj, nc));
            let mut rows = h.view_mut((op, 0), (bp, nc));
            rows += shift_rows;
            let shift_t = t.view((0, op), (nc, bp)) * &z;
            let mut tcols = t.view_mut((0, oj), (nc, bj));
            tcols -= shift_t;
        }
    }

    let (_, b0) = blk(0);
    let g1 = st.g.view((0, 0), (b0, m)).into_owned();
    let k_local = pseudo_inverse(&g1) * h.view((0, 0), (b0, nc));
    let t_inv = t
        .try_inverse()
        .ok_or_else(|| Error::GuaranteeViolated("staircase similarity is singular".into()))?;
    let mut k_stair = Mat::zeros(m, n);
    k_stair.columns_mut(0, nc).copy_from(&(k_local * t_inv));
    Ok(k_stair * st.q.transpose())
}
