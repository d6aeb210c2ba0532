//! Residual generator design from recorded input/state/output data only.
//!
//! The historical trace yields `U_p, X_p, Y_p` (samples `0..T-1`) and `X_f, Y_f`
//! (samples `1..T`). Solvability is read off rank tests on those blocks; the
//! design compresses the columns of the data so that the unknown disturbance
//! contribution appears in an isolated block, solves for the decoupler there,
//! and completes the generator with a dead-beat gain.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti_model::{SignalTrace, UioMatrices};
use crate::mb_design::{
    assemble_uio, deadbeat_gain, PencilEvidence, PencilSample, RankEvidence, SampleSource, WITNESS_COUNT,
};
use crate::numkit::{
    complex_rank, is_reconstructable, max_abs, nilpotency_index, nonzero_eigenvalues, null_space_basis,
    numerical_rank, pseudo_inverse_with, rank_against_scale, truncated_pseudo_inverse, vstack, witness_points,
    CMat, Mat, Tolerance, Vector,
};

/// Relative threshold for every post-hoc data identity.
pub const IDENTITY_TOL: f64 = 1e-8;
const WITNESS_SEED: u64 = 0xda7a_0f2a;

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub u_p: Mat,
    pub x_p: Mat,
    pub y_p: Mat,
    pub x_f: Mat,
    pub y_f: Mat,
    pub horizon: usize,
    pub r_claimed: usize,
}

fn columns(seq: &[Vector], width: usize) -> Mat {
    let mut m = Mat::zeros(width, seq.len());
    for (j, v) in seq.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

impl DataMatrices {
    /// Checks that all blocks share `T - 1` columns and that `n > 0`, `m > 0`,
    /// `p > 0`.
    pub fn from_blocks(u_p: Mat, x_p: Mat, y_p: Mat, x_f: Mat, y_f: Mat, r_claimed: usize) -> Result<Self> {
        let w = x_p.ncols();
        for (name, block) in [("U_p", &u_p), ("Y_p", &y_p), ("X_f", &x_f), ("Y_f", &y_f)] {
            if block.ncols() != w {
                return Err(Error::dims(name, format!("{w} columns"), block.ncols()));
            }
        }
        if x_f.nrows() != x_p.nrows() || y_f.nrows() != y_p.nrows() {
            return Err(Error::dims("future blocks", "same row count as past blocks", "mismatch"));
        }
        if u_p.nrows() == 0 || x_p.nrows() == 0 || y_p.nrows() == 0 {
            return Err(Error::dims("data blocks", "positive n, m, p", "empty block"));
        }
        let dm = Self {
            u_p,
            x_p,
            y_p,
            x_f,
            y_f,
            horizon: w + 1,
            r_claimed,
        };
        let required = dm.n() + dm.m() + r_claimed + 2;
        if dm.horizon < required {
            return Err(Error::HorizonTooShort {
                required,
                actual: dm.horizon,
            });
        }
        Ok(dm)
    }

    pub fn n(&self) -> usize {
        self.x_p.nrows()
    }
    pub fn m(&self) -> usize {
        self.u_p.nrows()
    }
    pub fn p(&self) -> usize {
        self.y_p.nrows()
    }

    /// `max(1, largest |entry|)` over all five blocks.
    pub fn scale(&self) -> f64 {
        [&self.u_p, &self.x_p, &self.y_p, &self.x_f, &self.y_f]
            .iter()
            .map(|m| max_abs(m))
            .fold(1.0, f64::max)
    }

    pub fn regressor(&self) -> Mat {
        vstack(&[&self.u_p, &self.x_p])
    }
}

/// Slices a fault-free trace into the five data blocks.
pub fn build_data_matrices(trace: &SignalTrace, r_claimed: usize) -> Result<DataMatrices> {
    let dims = trace.validate()?;
    if let Some(k) = trace.f.iter().position(|f| f.iter().any(|v| *v != 0.0)) {
        return Err(Error::FaultyHistoricalData { k });
    }
    let t = trace.horizon();
    let required = dims.n + dims.m + r_claimed + 2;
    if t < required {
        return Err(Error::HorizonTooShort { required, actual: t });
    }
    DataMatrices::from_blocks(
        columns(&trace.u, dims.m),
        columns(&trace.x[..t - 1], dims.n),
        columns(&trace.y[..t - 1], dims.p),
        columns(&trace.x[1..], dims.n),
        columns(&trace.y[1..], dims.p),
        r_claimed,
    )
}

fn excess_rank(dm: &DataMatrices, tol: &Tolerance) -> usize {
    let stacked = vstack(&[&dm.u_p, &dm.x_p, &dm.x_f]);
    numerical_rank(&stacked, tol).saturating_sub(dm.n() + dm.m())
}

/// Largest `rank([U_p; X_p; X_f]) - (n + m)` over the datasets.
pub fn estimate_disturbance_dim(datasets: &[DataMatrices], tol: &Tolerance) -> usize {
    datasets.iter().map(|dm| excess_rank(dm, tol)).max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RichnessEvidence {
    /// `rank([U_p; X_p])`, required `n + m`.
    pub regressor_rank: usize,
    pub regressor_required: usize,
    /// `rank([U_p; X_p; X_f]) - (n + m)`, required `r_claimed`.
    pub excess_rank: usize,
    pub r_claimed: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdSolvabilityReport {
    pub cond_iia: PencilEvidence,
    pub cond_iib: RankEvidence,
    pub richness: RichnessEvidence,
    pub overall: bool,
}

impl DdSolvabilityReport {
    pub fn describe_failure(&self) -> String {
        let mut parts = Vec::new();
        let rich = &self.richness;
        if rich.regressor_rank != rich.regressor_required {
            parts.push(format!(
                "data not rich enough: rank([U_p; X_p]) = {} < n + m = {}",
                rich.regressor_rank, rich.regressor_required
            ));
        }
        if rich.excess_rank != rich.r_claimed {
            parts.push(format!(
                "data not rich enough: rank([U_p; X_p; X_f]) - (n + m) = {} but r = {}",
                rich.excess_rank, rich.r_claimed
            ));
        }
        if !self.cond_iib.holds {
            parts.push(format!(
                "rank([X_p; Y_f]) = {} != n + r + m = {}",
                self.cond_iib.rank, self.cond_iib.required
            ));
        }
        for s in self.cond_iia.failures() {
            parts.push(format!(
                "rank([z X_p - X_f; Y_p; U_p]) = {} < {} at z = {:.6}{:+.6}i",
                s.rank, self.cond_iia.required, s.re, s.im
            ));
        }
        parts.join("; ")
    }
}

fn data_pencil_rank(dm: &DataMatrices, z: Complex<f64>, tol: &Tolerance) -> usize {
    let (n, p, m, w) = (dm.n(), dm.p(), dm.m(), dm.x_p.ncols());
    let mut pencil = CMat::zeros(n + p + m, w);
    for j in 0..w {
        for i in 0..n {
            pencil[(i, j)] = z * dm.x_p[(i, j)] - dm.x_f[(i, j)];
        }
        for i in 0..p {
            pencil[(n + i, j)] = Complex::new(dm.y_p[(i, j)], 0.0);
        }
        for i in 0..m {
            pencil[(n + p + i, j)] = Complex::new(dm.u_p[(i, j)], 0.0);
        }
    }
    complex_rank(&pencil, tol)
}

pub fn check_dd_solvability(dm: &DataMatrices, tol: &Tolerance) -> DdSolvabilityReport {
    let (n, m, r) = (dm.n(), dm.m(), dm.r_claimed);
    let regressor_rank = numerical_rank(&dm.regressor(), tol);
    let excess = excess_rank(dm, tol);
    let richness = RichnessEvidence {
        regressor_rank,
        regressor_required: n + m,
        excess_rank: excess,
        r_claimed: r,
        holds: regressor_rank == n + m && excess == r,
    };

    let cond_iib = RankEvidence::new(numerical_rank(&vstack(&[&dm.x_p, &dm.y_f]), tol), n + r + m);

    let mut candidates: Vec<(Complex<f64>, SampleSource)> = witness_points(WITNESS_SEED, WITNESS_COUNT, 1.0)
        .into_iter()
        .map(|z| (z, SampleSource::Witness))
        .collect();
    if regressor_rank == n + m {
        if let Some(t3) = candidate_t3(dm, tol) {
            candidates.extend(
                nonzero_eigenvalues(&t3)
                    .into_iter()
                    .map(|z| (z, SampleSource::EigenvalueOfT3)),
            );
        }
    }
    let samples = candidates
        .into_iter()
        .map(|(z, source)| PencilSample {
            re: z.re,
            im: z.im,
            rank: data_pencil_rank(dm, z, tol),
            source,
        })
        .collect();
    let cond_iia = PencilEvidence::from_samples(n + r + m, samples);
    let overall = cond_iia.holds && cond_iib.holds && richness.holds;
    DdSolvabilityReport {
        cond_iia,
        cond_iib,
        richness,
        overall,
    }
}

/// `T3* = X_A - T4 Y_A` with `T4` from the rank-`r` truncated solve, no
/// residual checks.
fn candidate_t3(dm: &DataMatrices, tol: &Tolerance) -> Option<Mat> {
    let comp = compress_columns(dm, tol).ok()?;
    let scale = max_abs(&comp.x_e).max(max_abs(&comp.y_e)).max(1.0);
    let rank = rank_against_scale(&comp.y_e, tol, scale).min(dm.r_claimed);
    let t4 = &comp.x_e * truncated_pseudo_inverse(&comp.y_e, rank);
    Some(&comp.x_a - &t4 * &comp.y_a)
}

/// `S = [S1 S2 S3]` with `[U_p; X_p] S = [I 0 0; 0 0 I]`, and the future
/// blocks read through it.
#[derive(Debug, Clone)]
pub struct ColumnCompression {
    pub s: Mat,
    pub y_b: Mat,
    pub y_e: Mat,
    pub y_a: Mat,
    pub x_b: Mat,
    pub x_e: Mat,
    pub x_a: Mat,
}

pub fn compress_columns(dm: &DataMatrices, tol: &Tolerance) -> Result<ColumnCompression> {
    let (n, m) = (dm.n(), dm.m());
    let regressor = dm.regressor();
    let rank = numerical_rank(&regressor, tol);
    if rank != n + m {
        return Err(Error::RankDeficientRegressor { rank, expected: n + m });
    }
    let w = regressor.ncols();
    let pinv = pseudo_inverse_with(&regressor, tol);
    let s1 = pinv.columns(0, m).into_owned();
    let s3 = pinv.columns(m, n).into_owned();
    let s2 = null_space_basis(&regressor, tol);
    if s2.ncols() != w - n - m {
        return Err(Error::RankMismatch {
            context: "kernel of [U_p; X_p]",
            expected: w - n - m,
            actual: s2.ncols(),
        });
    }
    let mut s = Mat::zeros(w, w);
    s.columns_mut(0, m).copy_from(&s1);
    s.columns_mut(m, s2.ncols()).copy_from(&s2);
    s.columns_mut(w - n, n).copy_from(&s3);

    let mut pattern = Mat::zeros(n + m, w);
    pattern.view_mut((0, 0), (m, m)).fill_with_identity();
    pattern.view_mut((m, w - n), (n, n)).fill_with_identity();
    let residual = max_abs(&(&regressor * &s - pattern));
    let tolerance = IDENTITY_TOL * dm.scale();
    if residual >= tolerance {
        return Err(Error::ResidualTooLarge {
            context: "[U_p; X_p] S block pattern",
            residual,
            tolerance,
        });
    }

    let yfs = &dm.y_f * &s;
    let xfs = &dm.x_f * &s;
    let we = w - n - m;
    Ok(ColumnCompression {
        y_b: yfs.columns(0, m).into_owned(),
        y_e: yfs.columns(m, we).into_owned(),
        y_a: yfs.columns(w - n, n).into_owned(),
        x_b: xfs.columns(0, m).into_owned(),
        x_e: xfs.columns(m, we).into_owned(),
        x_a: xfs.columns(w - n, n).into_owned(),
        s,
    })
}

/// Rank-`r` solution of `X_E = T4 Y_E`: the minimum-norm solution built from
/// the `r` leading singular triplets of `Y_E`.
pub fn solve_t4(x_e: &Mat, y_e: &Mat, r: usize, tol: &Tolerance) -> Result<Mat> {
    let n = x_e.nrows();
    let p = y_e.nrows();
    if x_e.ncols() != y_e.ncols() {
        return Err(Error::dims("X_E / Y_E", x_e.ncols(), y_e.ncols()));
    }
    let scale = max_abs(x_e).max(max_abs(y_e)).max(1.0);
    let rank_y = rank_against_scale(y_e, tol, scale);
    if rank_y < r {
        return Err(Error::RankMismatch {
            context: "Y_E",
            expected: r,
            actual: rank_y,
        });
    }
    let t4 = if r == 0 {
        Mat::zeros(n, p)
    } else {
        x_e * truncated_pseudo_inverse(y_e, r)
    };
    let residual = max_abs(&(x_e - &t4 * y_e));
    let tolerance = IDENTITY_TOL * scale;
    if residual >= tolerance {
        return Err(Error::ResidualTooLarge {
            context: "X_E = T4 Y_E",
            residual,
            tolerance,
        });
    }
    let rank_t4 = if r == 0 { 0 } else { numerical_rank(&t4, tol) };
    if rank_t4 != r {
        return Err(Error::RankMismatch {
            context: "T4",
            expected: r,
            actual: rank_t4,
        });
    }
    Ok(t4)
}

#[derive(Debug, Clone)]
pub struct AlgorithmOneTrace {
    pub compression: ColumnCompression,
    pub t1: Mat,
    pub t3_star: Mat,
    pub t4: Mat,
    pub l: Mat,
    /// `T3* - L C_hat`.
    pub t3: Mat,
    pub c_hat: Mat,
    /// Max entrywise residual of `X_f = T1 U_p + L Y_p + T3 X_p + T4 Y_f`.
    pub data_identity_residual: f64,
}

impl AlgorithmOneTrace {
    pub fn named_matrices(&self) -> Vec<(&'static str, &Mat)> {
        let c = &self.compression;
        vec![
            ("S", &c.s),
            ("Y_B", &c.y_b),
            ("Y_E", &c.y_e),
            ("Y_A", &c.y_a),
            ("X_B", &c.x_b),
            ("X_E", &c.x_e),
            ("X_A", &c.x_a),
            ("T1", &self.t1),
            ("T3_star", &self.t3_star),
            ("T3", &self.t3),
            ("T4", &self.t4),
            ("L", &self.l),
            ("C_hat", &self.c_hat),
        ]
    }
}

/// Properties that any rank-`r` solution `T4` of `X_E = T4 Y_E` must give the
/// derived `(T1, T3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct T4Assessment {
    pub rank_t4: usize,
    pub rank_ok: bool,
    pub reconstructable: bool,
    pub ct1_rank: usize,
    pub ct1_fcr: bool,
}

impl T4Assessment {
    /// A candidate that passes the rank filter must satisfy both properties.
    pub fn consistent(&self) -> bool {
        !self.rank_ok || (self.reconstructable && self.ct1_fcr)
    }
}

pub fn assess_t4(comp: &ColumnCompression, c_hat: &Mat, t4: &Mat, r: usize, tol: &Tolerance) -> T4Assessment {
    let m = comp.x_b.ncols();
    let rank_t4 = if r == 0 && max_abs(t4) == 0.0 { 0 } else { numerical_rank(t4, tol) };
    let t1 = &comp.x_b - t4 * &comp.y_b;
    let t3 = &comp.x_a - t4 * &comp.y_a;
    let ct1_rank = numerical_rank(&(c_hat * &t1), tol);
    T4Assessment {
        rank_t4,
        rank_ok: rank_t4 == r,
        reconstructable: is_reconstructable(&t3, c_hat, tol),
        ct1_rank,
        ct1_fcr: ct1_rank == m,
    }
}

pub fn identify_output_matrix(dm: &DataMatrices, tol: &Tolerance) -> Mat {
    &dm.y_p * pseudo_inverse_with(&dm.x_p, tol)
}

pub fn run_algorithm_one(dm: &DataMatrices, tol: &Tolerance) -> Result<(UioMatrices, AlgorithmOneTrace)> {
    let report = check_dd_solvability(dm, tol);
    if !report.overall {
        return Err(Error::SolvabilityFailed(report.describe_failure()));
    }
    let m = dm.m();
    let comp = compress_columns(dm, tol)?;
    let t4 = solve_t4(&comp.x_e, &comp.y_e, dm.r_claimed, tol)?;
    let c_hat = identify_output_matrix(dm, tol);
    let t1 = &comp.x_b - &t4 * &comp.y_b;
    let t3_star = &comp.x_a - &t4 * &comp.y_a;

    if !is_reconstructable(&t3_star, &c_hat, tol) {
        return Err(Error::GuaranteeViolated("(T3*, C) is not reconstructable".into()));
    }
    let ct1_rank = numerical_rank(&(&c_hat * &t1), tol);
    if ct1_rank != m {
        return Err(Error::GuaranteeViolated(format!("rank(C T1) = {ct1_rank} < m = {m}")));
    }
    let l = deadbeat_gain(&t3_star, &c_hat, tol).map_err(|e| match e {
        Error::NotReconstructable(msg) => Error::GuaranteeViolated(msg),
        other => other,
    })?;
    let uio = assemble_uio(&c_hat, &t3_star, t1.clone(), t4.clone(), l.clone())?;
    if nilpotency_index(&uio.a_uio, tol).is_none() {
        return Err(Error::GuaranteeViolated("A_uio is not nilpotent".into()));
    }

    let predicted = &uio.b_u * &dm.u_p + &l * &dm.y_p + &uio.a_uio * &dm.x_p + &t4 * &dm.y_f;
    let residual = max_abs(&(&dm.x_f - predicted));
    let tolerance = IDENTITY_TOL * dm.scale();
    if residual >= tolerance {
        return Err(Error::ResidualTooLarge {
            context: "X_f = T1 U_p + T2 Y_p + T3 X_p + T4 Y_f",
            residual,
            tolerance,
        });
    }

    let trace = AlgorithmOneTrace {
        compression: comp,
        t1,
        t3: uio.a_uio.clone(),
        t3_star,
        t4,
        l,
        c_hat,
        data_identity_residual: residual,
    };
    Ok((uio, trace))
}

/// Full row rank of `[U_p; D_p; X_p]`, checkable only when the simulator
/// exposes the disturbance record.
pub fn oracle_excitation_holds(trace: &SignalTrace, tol: &Tolerance) -> Result<bool> {
    let dims = trace.validate()?;
    let t = trace.horizon();
    let stacked = vstack(&[
        &columns(&trace.u, dims.m),
        &columns(&trace.d, dims.r),
        &columns(&trace.x[..t - 1], dims.n),
    ]);
    Ok(numerical_rank(&stacked, tol) == dims.n + dims.m + dims.r)
}
