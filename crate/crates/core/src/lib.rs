//! Data-driven design of dead-beat unknown-input observers for actuator fault
//! detection and identification in discrete-time LTI plants.
//!
//! The pipeline is: record a fault-free trajectory, build the data matrices,
//! test solvability from data alone, compute the residual generator, then
//! monitor the residual and reconstruct the fault. A model-based path built on
//! the true realization is kept alongside as the oracle.

pub mod dd_design;
pub mod error;
pub mod example1;
pub mod fdi_runtime;
pub mod lti_model;
pub mod mb_design;
pub mod numkit;
pub mod random_systems;
pub mod reproduce;

pub use dd_design::{
    build_data_matrices, check_dd_solvability, run_algorithm_one, AlgorithmOneTrace, DataMatrices,
    DdSolvabilityReport,
};
pub use error::{Error, Result};
pub use fdi_runtime::{build_markov_stack, detect, FaultTrace, MarkovStack, RecursiveFaultEstimator};
pub use lti_model::{Dims, Excitation, SignalTrace, StackedVector, SystemRealization, UioMatrices};
pub use mb_design::{check_strong_star_reconstructability, synthesize_uio, ExistenceVerdict};
pub use numkit::{Mat, Tolerance, Vector};
