//! Online detection and reconstruction of actuator faults from the residual.
//!
//! Once the generator has settled, the residual obeys
//! `e(k+1) = A_uio e(k) + B_u f(k)`, `r(k) = C e(k)`, so a fault at `k` first
//! shows up in `r(k+1)`. Estimates are therefore timestamped one step before
//! the residual that reveals them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti_model::{stack, StackedVector, UioMatrices};
use crate::mb_design::deadbeat_gain;
use crate::numkit::{
    nilpotency_index, pseudo_inverse_with, singular_values, spectral_norm, Mat, Tolerance, Vector,
};

pub const DEFAULT_THRESHOLD: f64 = 1e-9;

/// Block lower-triangular Toeplitz map from `f_N(k)` to `r_N(k+1)`.
#[derive(Debug, Clone)]
pub struct MarkovStack {
    pub depth: usize,
    pub m_n: Mat,
    pub p: usize,
    pub m: usize,
    /// `|C| |B_u|`; ranks are cut relative to this, so a product that
    /// cancels to rounding noise counts as zero.
    pub scale: f64,
}

fn factor_scale(uio: &UioMatrices) -> f64 {
    spectral_norm(&uio.c) * spectral_norm(&uio.b_u)
}

/// Singular values above both `rel_rank_tol * scale` and `abs_zero_tol`.
fn rank_with_floor(m: &Mat, tol: &Tolerance, scale: f64) -> usize {
    let cut = (tol.rel_rank_tol * scale).max(tol.abs_zero_tol);
    singular_values(m).iter().filter(|s| **s > cut).count()
}

/// Block `(i, j)`, `i >= j`, is `C A_uio^(i-j) B_u`.
pub fn build_markov_stack(uio: &UioMatrices, depth: usize) -> Result<MarkovStack> {
    if depth == 0 {
        return Err(Error::OutOfRange { start: 0, depth, len: 0 });
    }
    let (p, m) = (uio.p(), uio.m());
    let mut markov = Vec::with_capacity(depth);
    let mut power_b = uio.b_u.clone();
    for _ in 0..depth {
        markov.push(&uio.c * &power_b);
        power_b = &uio.a_uio * power_b;
    }
    let mut m_n = Mat::zeros(depth * p, depth * m);
    for i in 0..depth {
        for j in 0..=i {
            m_n.view_mut((i * p, j * m), (p, m)).copy_from(&markov[i - j]);
        }
    }
    let scale = factor_scale(uio);
    Ok(MarkovStack { depth, m_n, p, m, scale })
}

impl MarkovStack {
    /// Block lower-triangular Toeplitz: full column rank exactly when the
    /// diagonal block `C B_u` is. The explicit stack can have condition number
    /// near `cond(C B_u)^depth`, so its SVD rank is not used for the verdict.
    pub fn is_full_column_rank(&self, tol: &Tolerance) -> bool {
        let diag = self.m_n.view((0, 0), (self.p, self.m)).into_owned();
        rank_with_floor(&diag, tol, self.scale) == self.m
    }

    /// SVD rank of the explicit stack.
    pub fn explicit_rank(&self, tol: &Tolerance) -> usize {
        rank_with_floor(&self.m_n, tol, self.scale.max(spectral_norm(&self.m_n)))
    }
}

/// Least-squares fault window `f_N(k-1)` from `r_N(k)`.
pub fn identify_fault_window(stack: &MarkovStack, window: &StackedVector, tol: &Tolerance) -> Result<Vector> {
    if window.depth != stack.depth || window.value.len() != stack.depth * stack.p {
        return Err(Error::dims(
            "residual window",
            format!("depth {} ({} entries)", stack.depth, stack.depth * stack.p),
            format!("depth {} ({} entries)", window.depth, window.value.len()),
        ));
    }
    let rank = stack.explicit_rank(tol);
    if rank < stack.depth * stack.m {
        return Err(Error::NotIdentifiable(format!(
            "M_N has rank {rank} < N m = {}",
            stack.depth * stack.m
        )));
    }
    Ok(pseudo_inverse_with(&stack.m_n, tol) * &window.value)
}

/// How the internal error estimate is corrected from the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// Dead-beat output injection on the estimate error, so a wrong initial
    /// estimate is forgotten in finitely many steps.
    #[default]
    DeadBeat,
    /// Plain propagation `e(k+1) = A_uio e(k) + B_u f(k)`.
    OneStep,
}

/// Streaming one-step fault estimator.
///
/// Feed `r(k_start), r(k_start + 1), ...`; every residual after the first
/// yields `f(k)` for the previous step. The internal error estimate starts at
/// zero, which is exact when the generator had settled and no fault acted
/// before `k_start`.
#[derive(Debug, Clone)]
pub struct RecursiveFaultEstimator {
    a_uio: Mat,
    b_u: Mat,
    c: Mat,
    c_a: Mat,
    cbu_pinv: Mat,
    injection: Mat,
    settles_in: Option<usize>,
    e_hat: Vector,
    prev: Option<Vector>,
    next_k: usize,
}

impl RecursiveFaultEstimator {
    pub fn new(uio: &UioMatrices, k_start: usize, mode: InjectionMode, tol: &Tolerance) -> Result<Self> {
        let (n, m, p) = (uio.n(), uio.m(), uio.p());
        let cbu = &uio.c * &uio.b_u;
        let rank = rank_with_floor(&cbu, tol, factor_scale(uio));
        if rank < m {
            return Err(Error::NotIdentifiable(format!("C B_u has rank {rank} < m = {m}")));
        }
        let cbu_pinv = pseudo_inverse_with(&cbu, tol);
        // error of the estimate evolves under Pi A_uio - L2 C
        let pi_a = (Mat::identity(n, n) - &uio.b_u * &cbu_pinv * &uio.c) * &uio.a_uio;
        let (injection, settles_in) = match mode {
            InjectionMode::OneStep => (Mat::zeros(n, p), nilpotency_index(&pi_a, tol)),
            InjectionMode::DeadBeat => match deadbeat_gain(&pi_a, &uio.c, tol) {
                Ok(l2) => {
                    let idx = nilpotency_index(&(&pi_a - &l2 * &uio.c), tol);
                    (l2, idx)
                }
                Err(Error::NotReconstructable(_)) => (Mat::zeros(n, p), nilpotency_index(&pi_a, tol)),
                Err(e) => return Err(e),
            },
        };
        Ok(Self {
            c_a: &uio.c * &uio.a_uio,
            a_uio: uio.a_uio.clone(),
            b_u: uio.b_u.clone(),
            c: uio.c.clone(),
            cbu_pinv,
            injection,
            settles_in,
            e_hat: Vector::zeros(n),
            prev: None,
            next_k: k_start,
        })
    }

    /// Steps after which a wrong initial error estimate no longer affects the
    /// output; `None` when no finite bound exists for this generator.
    pub fn settles_in(&self) -> Option<usize> {
        self.settles_in
    }

    /// Consumes `r(k+1)` and returns `(k, f_hat(k))`; the first call only
    /// records `r(k_start)`.
    pub fn push(&mut self, residual: &Vector) -> Result<Option<(usize, Vector)>> {
        if residual.len() != self.c.nrows() {
            return Err(Error::dims("residual sample", self.c.nrows(), residual.len()));
        }
        let Some(prev) = self.prev.replace(residual.clone()) else {
            return Ok(None);
        };
        let f_hat = &self.cbu_pinv * (residual - &self.c_a * &self.e_hat);
        let innovation = &prev - &self.c * &self.e_hat;
        self.e_hat = &self.a_uio * &self.e_hat + &self.b_u * &f_hat + &self.injection * innovation;
        let k = self.next_k;
        self.next_k += 1;
        Ok(Some((k, f_hat)))
    }
}

/// Estimates `f(k)` for `k = k_start .. residuals.len() - 1` from a residual
/// sequence indexed from zero.
pub fn identify_fault_recursive(
    uio: &UioMatrices,
    residuals: &[Vector],
    k_start: usize,
    mode: InjectionMode,
    tol: &Tolerance,
) -> Result<Vec<Vector>> {
    let mut est = RecursiveFaultEstimator::new(uio, k_start, mode, tol)?;
    let mut out = Vec::with_capacity(residuals.len().saturating_sub(k_start + 1));
    for r in residuals.iter().skip(k_start) {
        if let Some((_, f)) = est.push(r)? {
            out.push(f);
        }
    }
    Ok(out)
}

/// First `k` with `|r(k)|_2 > threshold`.
pub fn detect(residuals: &[Vector], threshold: f64) -> Option<usize> {
    detect_from(residuals, 0, threshold)
}

/// First `k >= start` with `|r(k)|_2 > threshold`. Residual samples before the
/// generator settles carry the initial estimation error, so monitoring starts
/// the search at the identification time.
pub fn detect_from(residuals: &[Vector], start: usize, threshold: f64) -> Option<usize> {
    residuals
        .iter()
        .enumerate()
        .skip(start)
        .find(|(_, r)| r.norm() > threshold)
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub threshold: f64,
    pub k_id: usize,
    pub mode: InjectionMode,
    /// Window length for the least-squares estimate taken at detection.
    pub window: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            k_id: 0,
            mode: InjectionMode::DeadBeat,
            window: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    /// Time of the first estimated fault sample (`K* - 1`).
    pub start: usize,
    pub values: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultTrace {
    pub residuals: Vec<Vector>,
    pub detection_time: Option<usize>,
    /// `estimates[i]` is `f_hat(k_id + i)`.
    pub estimates: Vec<Vector>,
    pub k_id: usize,
    pub threshold: f64,
    pub settles_in: Option<usize>,
    pub window: Option<WindowEstimate>,
}

impl FaultTrace {
    pub fn estimate_at(&self, k: usize) -> Option<&Vector> {
        k.checked_sub(self.k_id).and_then(|i| self.estimates.get(i))
    }
}

/// Detection, recursive estimation from `k_id`, and a least-squares window at
/// the detection time when enough samples follow it.
pub fn monitor(uio: &UioMatrices, residuals: &[Vector], cfg: &MonitorConfig, tol: &Tolerance) -> Result<FaultTrace> {
    if !(cfg.threshold >= 0.0) {
        return Err(Error::InvalidTolerance(format!("threshold must be nonnegative, got {}", cfg.threshold)));
    }
    let detection_time = detect_from(residuals, cfg.k_id, cfg.threshold);
    let mut est = RecursiveFaultEstimator::new(uio, cfg.k_id, cfg.mode, tol)?;
    let mut estimates = Vec::new();
    for r in residuals.iter().skip(cfg.k_id) {
        if let Some((_, f)) = est.push(r)? {
            estimates.push(f);
        }
    }
    let window = match detection_time {
        Some(k_star) if k_star >= 1 && cfg.window >= 1 && k_star + cfg.window <= residuals.len() => {
            let stack_n = build_markov_stack(uio, cfg.window)?;
            let r_n = stack(residuals, k_star, cfg.window)?;
            let f_n = identify_fault_window(&stack_n, &r_n, tol)?;
            let m = uio.m();
            Some(WindowEstimate {
                start: k_star - 1,
                values: (0..cfg.window).map(|i| f_n.rows(i * m, m).into_owned()).collect(),
            })
        }
        _ => None,
    };
    Ok(FaultTrace {
        residuals: residuals.to_vec(),
        detection_time,
        estimates,
        k_id: cfg.k_id,
        threshold: cfg.threshold,
        settles_in: est.settles_in(),
        window,
    })
}
