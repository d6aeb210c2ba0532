//! The five-state benchmark plant, its published residual generator, and the
//! excitation and fault-scenario fixtures built around it.

use nalgebra::dmatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lti_model::{random_experiment, simulate_plant, Excitation, SignalTrace, SystemRealization, UioMatrices};
use crate::numkit::{Mat, Tolerance, Vector};

/// Offline experiment: `x(0)` in `(-1, 1)`, `u` in `(-5, 5)`, `d` in `(-2, 2)`.
pub const HISTORICAL_EXCITATION: Excitation = Excitation {
    x0_amplitude: 1.0,
    u_amplitude: HISTORICAL_U_AMPLITUDE,
    d_amplitude: HISTORICAL_D_AMPLITUDE,
};

/// Offline experiment length.
pub const HISTORICAL_HORIZON: usize = 150;
/// Known-input amplitude of the offline experiment, `u ~ U(-5, 5)`.
pub const HISTORICAL_U_AMPLITUDE: f64 = 5.0;
/// Disturbance amplitude of the offline experiment, `d ~ U(-2, 2)`.
pub const HISTORICAL_D_AMPLITUDE: f64 = 2.0;
/// Nilpotency index of the published `A_uio`.
pub const PUBLISHED_NILPOTENCY_INDEX: usize = 3;
/// Samples simulated per monitoring scenario.
pub const SCENARIO_HORIZON: usize = 60;

pub fn a() -> Mat {
    dmatrix![
        0.8, 0.0, 0.0, 0.0, 0.0;
        -0.8, 0.0, 0.0, 0.0, 0.0;
        -1.0, 0.0, -1.2, -0.5, -1.3;
        2.0, -0.6, 2.6, 1.0, 2.3;
        0.8, -0.9, 0.6, 0.1, 0.0
    ]
}

pub fn b() -> Mat {
    dmatrix![1.0; 0.0; 0.0; 0.0; 0.0]
}

pub fn c() -> Mat {
    dmatrix![
        1.0, 0.0, 0.0, 0.0, 0.0;
        0.0, 0.0, 1.0, -2.0, 0.0;
        -1.0, 0.0, 0.0, 1.0, 0.0
    ]
}

pub fn e() -> Mat {
    dmatrix![0.0, 0.0; 0.0, 0.0; 1.0, 1.0; 0.0, 1.0; 0.0, 0.0]
}

pub fn system() -> SystemRealization {
    SystemRealization::new(a(), b(), c(), e(), &Tolerance::default())
        .expect("benchmark plant is well formed")
}

/// The residual generator printed alongside the plant.
pub fn published_uio() -> UioMatrices {
    let a_uio = dmatrix![
        0.0, 0.0, 0.0, 0.0, 0.0;
        -0.8, 0.0, 0.0, 0.0, 0.0;
        0.8, 0.0, 0.0, 0.0, 0.0;
        -1.6, 0.0, 0.0, 0.0, 0.0;
        0.8, -0.9, 0.6, 0.1, 0.0
    ];
    let b_u = dmatrix![1.0; 0.0; 1.0; -2.0; 0.0];
    let b_y = dmatrix![
        0.8, 0.0, 0.0;
        0.0, 0.0, 0.0;
        0.0, 0.0, 0.0;
        0.0, 0.0, 0.0;
        0.9, 0.6, 1.3
    ];
    let d_uio = dmatrix![
        0.0, 0.0, 0.0;
        0.0, 0.0, 0.0;
        1.0, 1.0, 2.0;
        3.0, 0.0, 1.0;
        0.0, 0.0, 0.0
    ];
    UioMatrices::new(a_uio, b_u, b_y, d_uio, c()).expect("published residual generator is well formed")
}

/// Fault shape after onset. `PaperMax` is the printed formula
/// `max{0.1 + exp(-10/(k-k_f+1)), 0.9}`, which sits at 0.9 until the
/// exponential overtakes it; `SaturatingMin` is the `min` reading, a ramp from
/// about 0.1 that saturates at 0.9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultProfile {
    PaperMax,
    SaturatingMin,
    Step { level: f64 },
}

impl FaultProfile {
    pub fn value(&self, k: usize, k_f: usize) -> f64 {
        if k < k_f {
            return 0.0;
        }
        let ramp = 0.1 + (-10.0 / (k - k_f + 1) as f64).exp();
        match self {
            FaultProfile::PaperMax => ramp.max(0.9),
            FaultProfile::SaturatingMin => ramp.min(0.9),
            FaultProfile::Step { level } => *level,
        }
    }

    /// Samples `f(0..len)` as 1-vectors.
    pub fn sequence(&self, k_f: usize, len: usize) -> Vec<Vector> {
        (0..len).map(|k| Vector::from_element(1, self.value(k, k_f))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: char,
    pub k_f: usize,
    pub k_id: usize,
}

/// (a) identification from the settling index, fault later; (b) fault before
/// settling; (c) identification before settling, fault later; (d)
/// identification well after the fault.
pub const SCENARIOS: [Scenario; 4] = [
    Scenario { name: 'a', k_f: 10, k_id: 3 },
    Scenario { name: 'b', k_f: 1, k_id: 3 },
    Scenario { name: 'c', k_f: 10, k_id: 1 },
    Scenario { name: 'd', k_f: 5, k_id: 20 },
];

pub fn scenario(name: char) -> Option<Scenario> {
    SCENARIOS.iter().copied().find(|s| s.name == name)
}

fn uniform_vectors(rng: &mut ChaCha8Rng, len: usize, amplitudes: &[f64]) -> Vec<Vector> {
    (0..len)
        .map(|_| Vector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| rng.random_range(-a..*a))))
        .collect()
}

/// Offline, fault-free experiment: uniform input and disturbance, random
/// initial state.
pub fn collect_historical(sys: &SystemRealization, seed: u64, horizon: usize) -> Result<SignalTrace> {
    random_experiment(sys, &HISTORICAL_EXCITATION, seed, horizon, None)
}

/// Monitoring input `u(k) = 0.9 sin(0.4 k + 3)`.
pub fn monitoring_input(len: usize) -> Vec<Vector> {
    (0..len)
        .map(|k| Vector::from_element(1, 0.9 * (0.4 * k as f64 + 3.0).sin()))
        .collect()
}

/// Monitoring disturbance with entries uniform in `(-5, 5)` and `(-2, 2)`.
pub fn monitoring_disturbance(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vector> {
    uniform_vectors(rng, len, &[5.0, 2.0])
}

/// Closed-loop plant trace for one scenario: sinusoidal input, random
/// disturbance, random initial state, fault from `profile`.
pub fn scenario_trace(
    sys: &SystemRealization,
    sc: &Scenario,
    profile: FaultProfile,
    seed: u64,
    horizon: usize,
) -> Result<SignalTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = sys.dims();
    let steps = horizon.saturating_sub(1);
    let x0 = Vector::from_iterator(dims.n, (0..dims.n).map(|_| rng.random_range(-1.0..1.0)));
    let u = monitoring_input(steps);
    let d = if dims.r == 2 {
        monitoring_disturbance(&mut rng, steps)
    } else {
        uniform_vectors(&mut rng, steps, &vec![HISTORICAL_D_AMPLITUDE; dims.r])
    };
    let f = profile.sequence(sc.k_f, steps);
    simulate_plant(sys, &x0, &u, Some(&d), Some(&f), horizon)
}
