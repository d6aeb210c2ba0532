//! Seeded generators of admissible and deliberately broken plants for the
//! property and equivalence suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lti_model::{Dims, SystemRealization};
use crate::mb_design::check_strong_star_reconstructability;
use crate::numkit::{null_space_basis, spectral_radius, Mat, Tolerance, Vector};

/// Spectral radius every generated `A` is scaled to (when larger).
pub const TARGET_SPECTRAL_RADIUS: f64 = 0.95;
const ATTEMPTS: u64 = 16;

pub type SystemSpec = Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrokenKind {
    /// One disturbance direction is invisible at the output: `C e_1 = 0`.
    DisturbanceInOutputKernel,
    /// `A v = lambda v`, `C v = 0`, `lambda != 0`.
    UnobservableMode,
    /// `p = m + r - 1`.
    TooFewOutputs,
}

impl BrokenKind {
    pub const ALL: [BrokenKind; 3] = [
        BrokenKind::DisturbanceInOutputKernel,
        BrokenKind::UnobservableMode,
        BrokenKind::TooFewOutputs,
    ];
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn contract(a: Mat) -> Mat {
    let rho = spectral_radius(&a);
    if rho > TARGET_SPECTRAL_RADIUS {
        a * (TARGET_SPECTRAL_RADIUS / rho)
    } else {
        a
    }
}

/// A random plant passing the model-based existence test, or `None` when
/// `ATTEMPTS` draws all fail (or the dimensions make success impossible).
pub fn admissible_system(spec: &SystemSpec, seed: u64) -> Option<SystemRealization> {
    let tol = Tolerance::default();
    if spec.n == 0 || spec.m == 0 || spec.p < spec.m + spec.r || spec.p > spec.n.max(spec.m + spec.r) {
        return None;
    }
    (0..ATTEMPTS).find_map(|attempt| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(ATTEMPTS).wrapping_add(attempt));
        let a = contract(uniform_matrix(&mut rng, spec.n, spec.n));
        let b = uniform_matrix(&mut rng, spec.n, spec.m);
        let c = uniform_matrix(&mut rng, spec.p, spec.n);
        let e = uniform_matrix(&mut rng, spec.n, spec.r);
        let sys = SystemRealization::new(a, b, c, e, &tol).ok()?;
        check_strong_star_reconstructability(&sys, &tol).overall.then_some(sys)
    })
}

/// A random plant violating the existence conditions in the way named by
/// `kind`. Dimensions are adjusted where the construction needs it (`p < n`
/// for the kernel constructions, `p = m + r - 1` for the output shortage).
pub fn broken_system(spec: &SystemSpec, kind: BrokenKind, seed: u64) -> Option<SystemRealization> {
    let tol = Tolerance::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b40_ce11);
    let (n, m, r) = (spec.n, spec.m, spec.r);
    match kind {
        BrokenKind::DisturbanceInOutputKernel => {
            if r == 0 || spec.p >= n {
                return None;
            }
            let c = uniform_matrix(&mut rng, spec.p, n);
            let kernel = null_space_basis(&c, &tol);
            let mut e = uniform_matrix(&mut rng, n, r);
            let weights = uniform_matrix(&mut rng, kernel.ncols(), 1);
            e.set_column(0, &(&kernel * weights).column(0));
            let a = contract(uniform_matrix(&mut rng, n, n));
            let b = uniform_matrix(&mut rng, n, m);
            SystemRealization::new(a, b, c, e, &tol).ok()
        }
        BrokenKind::UnobservableMode => {
            if spec.p >= n {
                return None;
            }
            let c = uniform_matrix(&mut rng, spec.p, n);
            let kernel = null_space_basis(&c, &tol);
            let v: Vector = (&kernel * uniform_matrix(&mut rng, kernel.ncols(), 1)).column(0).into_owned();
            let v = &v / v.norm();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lambda = sign * rng.random_range(0.3..0.9);
            let a0 = uniform_matrix(&mut rng, n, n) * 0.5;
            // rank-one correction making v an eigenvector for lambda
            let a = &a0 + (&v * lambda - &a0 * &v) * v.transpose();
            let a = contract(a);
            let b = uniform_matrix(&mut rng, n, m);
            let e = uniform_matrix(&mut rng, n, r);
            SystemRealization::new(a, b, c, e, &tol).ok()
        }
        BrokenKind::TooFewOutputs => {
            let p = m + r - 1;
            if p == 0 || p > n {
                return None;
            }
            let a = contract(uniform_matrix(&mut rng, n, n));
            let b = uniform_matrix(&mut rng, n, m);
            let c = uniform_matrix(&mut rng, p, n);
            let e = uniform_matrix(&mut rng, n, r);
            SystemRealization::new(a, b, c, e, &tol).ok()
        }
    }
}

/// Draws dimensions with `n <= max_n`, `p >= m + r` and `p <= n`.
pub fn random_spec(rng: &mut ChaCha8Rng, max_n: usize) -> SystemSpec {
    let n = rng.random_range(3..=max_n.max(3));
    let m = rng.random_range(1..=2.min(n - 1));
    let r = rng.random_range(0..=2.min(n - m - 1));
    let p = rng.random_range(m + r..=n.min(m + r + 2));
    Dims { n, m, p, r }
}

/// Dimensions for a broken draw: at least one disturbance, `m + r < n` so
/// that the kernel constructions have room.
pub fn random_broken_spec(rng: &mut ChaCha8Rng, max_n: usize) -> SystemSpec {
    let n = rng.random_range(4..=max_n.max(4));
    let m = rng.random_range(1..=2);
    let r = rng.random_range(1..=2.min(n - m - 1));
    let p = rng.random_range(m + r..n);
    Dims { n, m, p, r }
}
