//! End-to-end run on the benchmark plant: collect data, check, design, then
//! monitor the four fault scenarios, with a pass/fail line per check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dd_design::{
    build_data_matrices, check_dd_solvability, estimate_disturbance_dim, run_algorithm_one, DdSolvabilityReport,
};
use crate::error::Result;
use crate::example1::{self, FaultProfile, Scenario};
use crate::fdi_runtime::{monitor, InjectionMode, MonitorConfig, DEFAULT_THRESHOLD};
use crate::lti_model::{run_residual_generator, SystemRealization, UioMatrices};
use crate::mb_design::{constraint_residuals, ConstraintResiduals};
use crate::numkit::{Mat, Tolerance};

/// Acceptance level for fault reconstruction.
pub const FAULT_TOL: f64 = 1e-6;
/// Acceptance level for the settled fault-free residual.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub seed: u64,
    pub horizon: usize,
    pub r: usize,
    pub profile: FaultProfile,
    pub threshold: f64,
    pub mode: InjectionMode,
    /// Replace the output matrix with zeros before collecting data.
    pub zero_output: bool,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            horizon: example1::HISTORICAL_HORIZON,
            r: 2,
            profile: FaultProfile::PaperMax,
            threshold: DEFAULT_THRESHOLD,
            mode: InjectionMode::DeadBeat,
            zero_output: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub detection_time: Option<usize>,
    /// Estimates are required to be exact from this time on.
    pub exact_from: usize,
    pub max_error: f64,
    /// `(k, f(k), f_hat(k))` for `k >= k_id`.
    pub series: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ReproduceReport {
    pub config: ReproduceConfig,
    pub estimated_r: usize,
    pub solvability: DdSolvabilityReport,
    pub uio: Option<UioMatrices>,
    pub constraints: Option<ConstraintResiduals>,
    pub settled_residual: Option<f64>,
    pub scenarios: Vec<ScenarioOutcome>,
    pub checks: Vec<CheckLine>,
}

impl ReproduceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs one monitoring scenario against `uio` on the true plant `sys`.
pub fn run_scenario(
    sys: &SystemRealization,
    uio: &UioMatrices,
    sc: &Scenario,
    profile: FaultProfile,
    mode: InjectionMode,
    threshold: f64,
    seed: u64,
    tol: &Tolerance,
) -> Result<ScenarioOutcome> {
    let n = sys.dims().n;
    let trace = example1::scenario_trace(sys, sc, profile, seed, example1::SCENARIO_HORIZON)?;
    let run = run_residual_generator(uio, None, &trace.u, &trace.y)?;
    let cfg = MonitorConfig {
        threshold,
        k_id: sc.k_id,
        mode,
        window: 1,
    };
    let ft = monitor(uio, &run.residuals, &cfg, tol)?;
    // exact from k_id only when nothing disturbed the settled error before it
    let exact_from = if sc.k_id >= n.min(example1::PUBLISHED_NILPOTENCY_INDEX) && sc.k_f >= sc.k_id {
        sc.k_id
    } else {
        sc.k_id + n
    };
    let series: Vec<(usize, f64, f64)> = ft
        .estimates
        .iter()
        .enumerate()
        .map(|(i, fh)| (sc.k_id + i, trace.f[sc.k_id + i][0], fh[0]))
        .collect();
    let max_error = series
        .iter()
        .filter(|(k, _, _)| *k >= exact_from)
        .map(|(_, f, fh)| (f - fh).abs())
        .fold(0.0, f64::max);
    Ok(ScenarioOutcome {
        scenario: *sc,
        detection_time: ft.detection_time,
        exact_from,
        max_error,
        series,
    })
}

pub fn reproduce_example(cfg: &ReproduceConfig, tol: &Tolerance) -> Result<ReproduceReport> {
    let mut sys = example1::system();
    if cfg.zero_output {
        sys = sys.with_output_matrix(Mat::zeros(3, 5))?;
    }
    let n = sys.dims().n;
    let mut checks = Vec::new();

    let published = constraint_residuals(&example1::system(), &example1::published_uio(), tol);
    checks.push(check(
        "published generator",
        published.satisfied() && published.nilpotency_index == Some(example1::PUBLISHED_NILPOTENCY_INDEX),
        format!(
            "max constraint residual {:.2e}, nilpotency index {:?}",
            published.max(),
            published.nilpotency_index
        ),
    ));

    let historical = example1::collect_historical(&sys, cfg.seed, cfg.horizon)?;
    let dm = build_data_matrices(&historical, cfg.r)?;
    let estimated_r = estimate_disturbance_dim(std::slice::from_ref(&dm), tol);
    let solvability = check_dd_solvability(&dm, tol);
    checks.push(check(
        "data solvability",
        solvability.overall,
        if solvability.overall {
            format!("conditions hold, estimated r = {estimated_r}")
        } else {
            solvability.describe_failure()
        },
    ));
    let mut report = ReproduceReport {
        config: *cfg,
        estimated_r,
        solvability,
        uio: None,
        constraints: None,
        settled_residual: None,
        scenarios: Vec::new(),
        checks,
    };
    if !report.solvability.overall {
        return Ok(report);
    }

    let uio = match run_algorithm_one(&dm, tol) {
        Ok((uio, _)) => uio,
        Err(e) => {
            report.checks.push(check("data-driven design", false, e.to_string()));
            return Ok(report);
        }
    };
    let res = constraint_residuals(&sys, &uio, tol);
    report.checks.push(check(
        "design constraints",
        res.satisfied(),
        format!("max residual {:.2e}, nilpotency index {:?}", res.max(), res.nilpotency_index),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ca1ab1e);
    let quiet = example1::scenario_trace(
        &sys,
        &Scenario { name: '-', k_f: usize::MAX, k_id: 0 },
        FaultProfile::Step { level: 0.0 },
        rng.random(),
        example1::SCENARIO_HORIZON,
    )?;
    let run = run_residual_generator(&uio, None, &quiet.u, &quiet.y)?;
    let settled = run.residuals[n..].iter().map(|r| r.norm()).fold(0.0, f64::max);
    report.checks.push(check(
        "fault-free residual",
        settled < RESIDUAL_TOL,
        format!("max |r(k)| for k >= {n}: {settled:.2e}"),
    ));

    for sc in &example1::SCENARIOS {
        let outcome = run_scenario(&sys, &uio, sc, cfg.profile, cfg.mode, cfg.threshold, rng.random(), tol)?;
        report.checks.push(check(
            &format!("scenario ({})", sc.name),
            outcome.max_error < FAULT_TOL,
            format!(
                "k_f = {}, k_id = {}, K* = {:?}, max |f_hat - f| for k >= {}: {:.2e}",
                sc.k_f, sc.k_id, outcome.detection_time, outcome.exact_from, outcome.max_error
            ),
        ));
        report.scenarios.push(outcome);
    }
    report.uio = Some(uio);
    report.constraints = Some(res);
    report.settled_residual = Some(settled);
    Ok(report)
}
