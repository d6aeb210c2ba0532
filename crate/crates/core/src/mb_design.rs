//! Model-based existence tests and dead-beat residual generator synthesis
//! from a known realization. Serves as the oracle for the data-driven path.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti_model::{SystemRealization, UioMatrices};
use crate::numkit::{
    complex_rank, deadbeat_feedback, hstack, max_abs, nilpotency_index, nonzero_eigenvalues, numerical_rank,
    pseudo_inverse_with, spectral_norm, unit_scale, witness_points, CMat, Mat, Tolerance,
};

/// Absolute threshold on normalized constraint residuals.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Number of random generic-rank witnesses per pencil test.
pub const WITNESS_COUNT: usize = 8;
const WITNESS_SEED: u64 = 0x5eed_0f1b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    EigenvalueOfA,
    EigenvalueOfDecoupled,
    EigenvalueOfT3,
    Witness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PencilSample {
    pub re: f64,
    pub im: f64,
    pub rank: usize,
    pub source: SampleSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilEvidence {
    pub required: usize,
    pub samples: Vec<PencilSample>,
    pub holds: bool,
}

impl PencilEvidence {
    pub(crate) fn from_samples(required: usize, samples: Vec<PencilSample>) -> Self {
        let holds = samples.iter().all(|s| s.rank == required);
        Self {
            required,
            samples,
            holds,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &PencilSample> {
        self.samples.iter().filter(move |s| s.rank != self.required)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEvidence {
    pub rank: usize,
    pub required: usize,
    pub holds: bool,
}

impl RankEvidence {
    pub(crate) fn new(rank: usize, required: usize) -> Self {
        Self {
            rank,
            required,
            holds: rank == required,
        }
    }
}

/// `overall = cond_1b && cond_prop5`; `cond_1a` is implied by the latter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceVerdict {
    pub cond_1a: RankEvidence,
    pub cond_1b: PencilEvidence,
    pub cond_prop5: RankEvidence,
    pub overall: bool,
}

/// Rank of `[zI - A, -E; C, 0]`.
pub fn rosenbrock_rank(a: &Mat, e: &Mat, c: &Mat, z: Complex<f64>, tol: &Tolerance) -> usize {
    let n = a.nrows();
    let r = e.ncols();
    let p = c.nrows();
    let mut m = CMat::zeros(n + p, n + r);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += z;
        for j in 0..r {
            m[(i, n + j)] = Complex::new(-e[(i, j)], 0.0);
        }
    }
    for i in 0..p {
        for j in 0..n {
            m[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
        }
    }
    complex_rank(&m, tol)
}

pub(crate) fn witness_radius(m: &Mat) -> f64 {
    spectral_norm(m).max(1.0)
}

pub fn check_strong_star_reconstructability(sys: &SystemRealization, tol: &Tolerance) -> ExistenceVerdict {
    let dims = sys.dims();
    let ce = sys.c() * sys.e();
    let cond_1a = RankEvidence::new(if dims.r == 0 { 0 } else { numerical_rank(&ce, tol) }, dims.r);

    let mut candidates: Vec<(Complex<f64>, SampleSource)> = nonzero_eigenvalues(sys.a())
        .into_iter()
        .map(|z| (z, SampleSource::EigenvalueOfA))
        .collect();
    if cond_1a.holds {
        let d = disturbance_decoupler_unchecked(sys, tol);
        let abar = decoupled_dynamics(sys, &d);
        candidates.extend(
            nonzero_eigenvalues(&abar)
                .into_iter()
                .map(|z| (z, SampleSource::EigenvalueOfDecoupled)),
        );
    }
    candidates.extend(
        witness_points(WITNESS_SEED, WITNESS_COUNT, witness_radius(sys.a()))
            .into_iter()
            .map(|z| (z, SampleSource::Witness)),
    );
    let samples = candidates
        .into_iter()
        .map(|(z, source)| PencilSample {
            re: z.re,
            im: z.im,
            rank: rosenbrock_rank(sys.a(), sys.e(), sys.c(), z, tol),
            source,
        })
        .collect();
    let cond_1b = PencilEvidence::from_samples(dims.n + dims.r, samples);

    let cb_ce = hstack(&[&(sys.c() * sys.b()), &ce]);
    let cond_prop5 = RankEvidence::new(numerical_rank(&cb_ce, tol), dims.m + dims.r);
    let overall = cond_1b.holds && cond_prop5.holds;
    ExistenceVerdict {
        cond_1a,
        cond_1b,
        cond_prop5,
        overall,
    }
}

fn disturbance_decoupler_unchecked(sys: &SystemRealization, tol: &Tolerance) -> Mat {
    let dims = sys.dims();
    if dims.r == 0 {
        return Mat::zeros(dims.n, dims.p);
    }
    sys.e() * pseudo_inverse_with(&(sys.c() * sys.e()), tol)
}

/// `(I - D C) A`.
pub fn decoupled_dynamics(sys: &SystemRealization, d: &Mat) -> Mat {
    projector(d, sys.c()) * sys.a()
}

/// `I - D C`.
pub fn projector(d: &Mat, c: &Mat) -> Mat {
    Mat::identity(d.nrows(), d.nrows()) - d * c
}

/// `D = E (CE)^+`, the canonical rank-`r` solution of `(I - DC) E = 0`.
pub fn solve_disturbance_decoupler(sys: &SystemRealization, tol: &Tolerance) -> Result<Mat> {
    let dims = sys.dims();
    if dims.r == 0 {
        return Ok(Mat::zeros(dims.n, dims.p));
    }
    let rank = numerical_rank(&(sys.c() * sys.e()), tol);
    if rank < dims.r {
        return Err(Error::RankDeficientCe { rank, r: dims.r });
    }
    let d = disturbance_decoupler_unchecked(sys, tol);
    let residual = max_abs(&(projector(&d, sys.c()) * sys.e())) / unit_scale(sys.a());
    if residual >= CONSTRAINT_TOL {
        return Err(Error::ResidualTooLarge {
            context: "(I - DC)E",
            residual,
            tolerance: CONSTRAINT_TOL,
        });
    }
    Ok(d)
}

/// Output injection `L` with `abar - L c` nilpotent (index at most `n`).
pub fn deadbeat_gain(abar: &Mat, c: &Mat, tol: &Tolerance) -> Result<Mat> {
    let n = abar.nrows();
    if abar.ncols() != n || c.ncols() != n {
        return Err(Error::dims(
            "deadbeat_gain",
            format!("{n} x {n} and p x {n}"),
            format!("{:?} and {:?}", abar.shape(), c.shape()),
        ));
    }
    let l = deadbeat_feedback(&abar.transpose(), &c.transpose(), tol)?.transpose();
    if nilpotency_index(&(abar - &l * c), tol).is_none() {
        return Err(Error::GuaranteeViolated(
            "closed-loop observer matrix failed the nilpotency test".into(),
        ));
    }
    Ok(l)
}

/// Assembles the residual generator from a decoupler `d`, the decoupled
/// dynamics and the dead-beat gain.
pub(crate) fn assemble_uio(c: &Mat, abar: &Mat, bu: Mat, d: Mat, l: Mat) -> Result<UioMatrices> {
    let a_uio = abar - &l * c;
    let b_y = &l + &a_uio * &d;
    UioMatrices::new(a_uio, bu, b_y, d, c.clone())
}

pub fn synthesize_uio(sys: &SystemRealization, tol: &Tolerance) -> Result<UioMatrices> {
    let verdict = check_strong_star_reconstructability(sys, tol);
    if !verdict.cond_1a.holds {
        return Err(Error::RankDeficientCe {
            rank: verdict.cond_1a.rank,
            r: verdict.cond_1a.required,
        });
    }
    if !verdict.overall {
        return Err(Error::SolvabilityFailed(describe_failure(&verdict)));
    }
    let d = solve_disturbance_decoupler(sys, tol)?;
    let pi = projector(&d, sys.c());
    let abar = &pi * sys.a();
    let l = deadbeat_gain(&abar, sys.c(), tol)?;
    let uio = assemble_uio(sys.c(), &abar, &pi * sys.b(), d, l)?;
    let res = constraint_residuals(sys, &uio, tol);
    if !res.satisfied() {
        return Err(Error::GuaranteeViolated(format!("synthesized UIO violates constraints: {res:?}")));
    }
    Ok(uio)
}

pub(crate) fn describe_failure(v: &ExistenceVerdict) -> String {
    let mut parts = Vec::new();
    if !v.cond_1a.holds {
        parts.push(format!("rank(CE) = {} < r = {}", v.cond_1a.rank, v.cond_1a.required));
    }
    if !v.cond_prop5.holds {
        parts.push(format!(
            "rank([CB CE]) = {} != m + r = {}",
            v.cond_prop5.rank, v.cond_prop5.required
        ));
    }
    for s in v.cond_1b.failures() {
        parts.push(format!(
            "pencil rank {} < {} at z = {:.6}{:+.6}i",
            s.rank, v.cond_1b.required, s.re, s.im
        ));
    }
    parts.join("; ")
}

/// `rank([CB CE]) = m + r`.
pub fn check_fault_identifiability(sys: &SystemRealization, tol: &Tolerance) -> bool {
    let dims = sys.dims();
    let cb_ce = hstack(&[&(sys.c() * sys.b()), &(sys.c() * sys.e())]);
    numerical_rank(&cb_ce, tol) == dims.m + dims.r
}

/// Entrywise maxima of the four design constraints, each divided by
/// `max(1, |A|_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// `(I - DC)A - A_uio (I - DC) - B_y C`
    pub sylvester: f64,
    /// `B_u - (I - DC)B`
    pub input: f64,
    /// `(I - DC)E`
    pub decoupling: f64,
    pub nilpotency_index: Option<usize>,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.sylvester.max(self.input).max(self.decoupling)
    }

    pub fn satisfied(&self) -> bool {
        self.max() < CONSTRAINT_TOL && self.nilpotency_index.is_some()
    }
}

/// Evaluates the design constraints of `uio` against the true plant.
pub fn constraint_residuals(sys: &SystemRealization, uio: &UioMatrices, tol: &Tolerance) -> ConstraintResiduals {
    let scale = unit_scale(sys.a());
    let pi = projector(&uio.d_uio, sys.c());
    let sylvester = &pi * sys.a() - &uio.a_uio * &pi - &uio.b_y * sys.c();
    let input = &uio.b_u - &pi * sys.b();
    let decoupling = &pi * sys.e();
    ConstraintResiduals {
        sylvester: max_abs(&sylvester) / scale,
        input: max_abs(&input) / scale,
        decoupling: max_abs(&decoupling) / scale,
        nilpotency_index: nilpotency_index(&uio.a_uio, tol),
    }
}
