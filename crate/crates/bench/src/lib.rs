//! Fixtures shared by the pipeline benchmarks.

use ddfdi_core::example1::HISTORICAL_EXCITATION;
use ddfdi_core::lti_model::{random_experiment, run_residual_generator};
use ddfdi_core::random_systems::admissible_system;
use ddfdi_core::{build_data_matrices, synthesize_uio, DataMatrices, Dims, SystemRealization, Tolerance, UioMatrices, Vector};

pub const HORIZON: usize = 150;

/// An admissible plant with its recorded data, its generator, and the
/// fault-free residual sequence of that record.
pub struct Fixture {
    pub sys: SystemRealization,
    pub data: DataMatrices,
    pub uio: UioMatrices,
    pub residuals: Vec<Vector>,
}

/// First admissible plant of the given shape found from `seed` upward.
pub fn fixture(dims: Dims, seed: u64) -> Fixture {
    let tol = Tolerance::default();
    let sys = (seed..seed + 64)
        .find_map(|s| admissible_system(&dims, s))
        .unwrap_or_else(|| panic!("no admissible plant with {dims:?}"));
    let trace = random_experiment(&sys, &HISTORICAL_EXCITATION, seed, HORIZON, None).expect("simulation");
    let data = build_data_matrices(&trace, dims.r).expect("data matrices");
    let uio = synthesize_uio(&sys, &tol).expect("admissible plant");
    let residuals = run_residual_generator(&uio, None, &trace.u, &trace.y).expect("residuals").residuals;
    Fixture { sys, data, uio, residuals }
}

/// Shapes from small to the largest used in the property suites.
pub fn shapes() -> Vec<(&'static str, Dims)> {
    vec![
        ("n3", Dims { n: 3, m: 1, p: 2, r: 1 }),
        ("n5", Dims { n: 5, m: 1, p: 3, r: 2 }),
        ("n8", Dims { n: 8, m: 2, p: 5, r: 3 }),
    ]
}
