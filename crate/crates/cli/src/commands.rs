use std::io::Write;
use std::path::Path;

use ddfdi_core::dd_design::{build_data_matrices, check_dd_solvability, estimate_disturbance_dim, run_algorithm_one};
use ddfdi_core::example1::{self, FaultProfile};
use ddfdi_core::fdi_runtime::{monitor, InjectionMode, MonitorConfig, DEFAULT_THRESHOLD};
use ddfdi_core::lti_model::{random_experiment, run_residual_generator, SignalTrace};
use ddfdi_core::mb_design::constraint_residuals;
use ddfdi_core::numkit::nilpotency_index;
use ddfdi_core::reproduce::{reproduce_example, ReproduceConfig};
use ddfdi_core::{DataMatrices, DdSolvabilityReport, SystemRealization, Tolerance, UioMatrices, Vector};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{exit, CliError, CliResult};
use crate::io;
use crate::{CheckArgs, Cli, Command, DesignArgs, IdentifyArgs, ReproduceArgs, SimulateArgs};

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> CliResult<()> {
    writeln!(out, "{}", text.as_ref()).map_err(|e| CliError::io("<stdout>", e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut std::fs::File) -> CliResult<()>) -> CliResult<()> {
    let mut file = io::create(path)?;
    f(&mut file).map_err(|e| e.at(path))?;
    file.flush().map_err(|e| CliError::io(path, e))
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<u8> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let tol = cfg.tolerance(cli.tol_rank, cli.tol_zero)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &cfg, &tol, out),
        Command::Check(a) => check(a, &cfg, &tol, out),
        Command::Design(a) => design(a, &cfg, &tol, out),
        Command::Identify(a) => identify(a, &cfg, &tol, out),
        Command::ReproduceExample(a) => reproduce(a, &cfg, &tol, out),
    }
}

/// Plant from the flag, then the config, then the built-in benchmark.
fn load_system(flag: Option<&Path>, cfg: &ExperimentConfig, tol: &Tolerance) -> CliResult<SystemRealization> {
    match flag.map(Path::to_path_buf).or_else(|| cfg.system_file()) {
        Some(path) => io::read_system_file(&path, tol),
        None => Ok(example1::system()),
    }
}

pub fn simulate(args: &SimulateArgs, cfg: &ExperimentConfig, tol: &Tolerance, out: &mut dyn Write) -> CliResult<u8> {
    let sys = load_system(args.system.as_deref(), cfg, tol)?;
    let dims = sys.dims();
    let horizon = args.horizon.unwrap_or_else(|| cfg.horizon());
    let seed = args.seed.unwrap_or_else(|| cfg.seed());
    cfg.check_against(dims, horizon)?;
    let f = cfg.fault.map(|spec| spec.sequence(dims.m, horizon - 1)).transpose()?;
    let trace = random_experiment(&sys, &cfg.excitation(), seed, horizon, f.as_deref())?;
    write_file(&args.out, |w| io::write_trace(&trace, w))?;
    say(
        out,
        format!(
            "wrote {horizon} samples (n = {}, m = {}, p = {}, r = {}, seed {seed}) to {}",
            dims.n,
            dims.m,
            dims.p,
            dims.r,
            args.out.display()
        ),
    )?;
    Ok(exit::SUCCESS)
}

/// Reads a fault-free trace and builds the data matrices, estimating `r` when
/// neither the flag nor the config gives it.
fn load_data(path: &Path, r: Option<usize>, tol: &Tolerance) -> CliResult<(DataMatrices, usize, bool)> {
    let trace = io::read_trace_file(path)?;
    if trace.x[0].is_empty() {
        return Err(CliError::Schema(format!("{}: design data need x columns", path.display())));
    }
    let estimated = estimate_disturbance_dim(&[build_data_matrices(&trace, 0)?], tol);
    let (r, was_estimated) = match r {
        Some(r) => (r, false),
        None => (estimated, true),
    };
    Ok((build_data_matrices(&trace, r)?, estimated, was_estimated))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn solvability_lines(report: &DdSolvabilityReport, dm: &DataMatrices) -> Vec<String> {
    let (n, m, r) = (dm.n(), dm.m(), dm.r_claimed);
    let rich = &report.richness;
    let mut lines = vec![
        format!("data: T = {}, n = {n}, m = {m}, p = {}, r = {r}", dm.horizon, dm.p()),
        format!(
            "excitation: rank [U_p; X_p] = {} (need {}), rank [U_p; X_p; X_f] - (n + m) = {} (need {r})  {}",
            rich.regressor_rank,
            rich.regressor_required,
            rich.excess_rank,
            mark(rich.holds)
        ),
        format!(
            "output coupling: rank [X_p; Y_f] = {} (need {})  {}",
            report.cond_iib.rank,
            report.cond_iib.required,
            mark(report.cond_iib.holds)
        ),
        format!(
            "pencil: rank [z X_p - X_f; Y_p; U_p] >= {} at {} sample points  {}",
            report.cond_iia.required,
            report.cond_iia.samples.len(),
            mark(report.cond_iia.holds)
        ),
    ];
    if report.overall {
        lines.push("solvable: yes".into());
    } else {
        lines.push(format!("solvable: no ({})", report.describe_failure()));
    }
    lines
}

#[derive(Serialize)]
struct CheckJson<'a> {
    horizon: usize,
    n: usize,
    m: usize,
    p: usize,
    r: usize,
    r_estimated_from_data: usize,
    report: &'a DdSolvabilityReport,
}

pub fn check(args: &CheckArgs, cfg: &ExperimentConfig, tol: &Tolerance, out: &mut dyn Write) -> CliResult<u8> {
    let (dm, estimated, was_estimated) = load_data(&args.data, args.r.or(cfg.design.r), tol)?;
    let report = check_dd_solvability(&dm, tol);
    if was_estimated {
        say(out, format!("r not given; estimated r = {estimated} from the data"))?;
    }
    for line in solvability_lines(&report, &dm) {
        say(out, line)?;
    }
    if let Some(path) = &args.report {
        let json = CheckJson {
            horizon: dm.horizon,
            n: dm.n(),
            m: dm.m(),
            p: dm.p(),
            r: dm.r_claimed,
            r_estimated_from_data: estimated,
            report: &report,
        };
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &json).map_err(|e| CliError::Schema(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::io(path, e))
        })?;
    }
    Ok(if report.overall { exit::SUCCESS } else { exit::UNSOLVABLE })
}

pub fn design(args: &DesignArgs, cfg: &ExperimentConfig, tol: &Tolerance, out: &mut dyn Write) -> CliResult<u8> {
    let (dm, estimated, was_estimated) = load_data(&args.data, args.r.or(cfg.design.r), tol)?;
    if was_estimated {
        say(out, format!("r not given; estimated r = {estimated} from the data"))?;
    }
    let (uio, trace) = run_algorithm_one(&dm, tol)?;
    write_file(&args.out, |w| io::write_uio(&uio, w))?;
    if let Some(path) = &args.diagnostics {
        write_file(path, |w| io::write_bundle(&trace.named_matrices(), w))?;
    }
    say(
        out,
        format!(
            "residual generator: n = {}, m = {}, p = {}, written to {}",
            uio.n(),
            uio.m(),
            uio.p(),
            args.out.display()
        ),
    )?;
    say(out, format!("nilpotency index of A_uio: {:?}", nilpotency_index(&uio.a_uio, tol)))?;
    say(out, format!("data identity residual: {:.3e}", trace.data_identity_residual))?;

    let truth = match args.system.as_deref().map(Path::to_path_buf).or_else(|| cfg.system_file()) {
        Some(path) => Some(io::read_system_file(&path, tol)?),
        None => None,
    };
    if let Some(sys) = truth {
        let res = constraint_residuals(&sys, &uio, tol);
        say(
            out,
            format!(
                "constraints against the true plant: sylvester {:.3e}, input {:.3e}, decoupling {:.3e}  {}",
                res.sylvester,
                res.input,
                res.decoupling,
                mark(res.satisfied())
            ),
        )?;
        if !res.satisfied() {
            return Ok(exit::NUMERICAL);
        }
    }
    Ok(exit::SUCCESS)
}

/// Residuals plus the true fault record when the input carries one.
struct MonitoringInput {
    residuals: Vec<Vector>,
    faults: Option<Vec<Vector>>,
    k_id: Option<usize>,
}

fn residuals_from_trace(uio: &UioMatrices, trace: &SignalTrace) -> CliResult<Vec<Vector>> {
    Ok(run_residual_generator(uio, None, &trace.u, &trace.y)?.residuals)
}

pub fn identify(args: &IdentifyArgs, cfg: &ExperimentConfig, tol: &Tolerance, out: &mut dyn Write) -> CliResult<u8> {
    let scenario = match &args.scenario {
        Some(name) => Some(
            example1::scenario(name.chars().next().unwrap_or('?'))
                .ok_or_else(|| CliError::Schema(format!("unknown scenario {name:?}")))?,
        ),
        None => None,
    };
    let uio = match (&args.uio, scenario) {
        (Some(path), _) => io::read_uio_file(path)?,
        (None, Some(_)) => example1::published_uio(),
        (None, None) => return Err(CliError::Schema("--uio is required unless --scenario is given".into())),
    };

    let input = if let Some(sc) = scenario {
        let seed = args.seed.unwrap_or_else(|| cfg.seed());
        let profile: FaultProfile = args.profile.into();
        let trace = example1::scenario_trace(&example1::system(), &sc, profile, seed, example1::SCENARIO_HORIZON)?;
        MonitoringInput {
            residuals: residuals_from_trace(&uio, &trace)?,
            faults: Some(trace.f),
            k_id: Some(sc.k_id),
        }
    } else if let Some(path) = &args.trace {
        let trace = io::read_trace_file(path)?;
        MonitoringInput {
            residuals: residuals_from_trace(&uio, &trace).map_err(|e| e.at(path))?,
            faults: Some(trace.f),
            k_id: None,
        }
    } else if let Some(path) = &args.residuals {
        let residuals = io::read_residuals(io::open(path)?).map_err(|e| e.at(path))?;
        if residuals.first().is_some_and(|r| r.len() != uio.p()) {
            return Err(CliError::Schema(format!(
                "{}: residuals have {} entries, the generator has p = {}",
                path.display(),
                residuals[0].len(),
                uio.p()
            )));
        }
        MonitoringInput {
            residuals,
            faults: None,
            k_id: None,
        }
    } else {
        return Err(CliError::Schema("one of --trace, --residuals or --scenario is required".into()));
    };

    let k_id = args
        .k_id
        .or(input.k_id)
        .or(cfg.monitor.k_id)
        .unwrap_or_else(|| nilpotency_index(&uio.a_uio, tol).unwrap_or(uio.n()));
    let mcfg = MonitorConfig {
        threshold: args.threshold.or(cfg.monitor.threshold).unwrap_or(DEFAULT_THRESHOLD),
        k_id,
        mode: InjectionMode::DeadBeat,
        window: args.window,
    };
    let ft = monitor(&uio, &input.residuals, &mcfg, tol)?;

    match ft.detection_time {
        Some(k) => say(out, format!("fault detected at K* = {k} (threshold {:e}, k_id = {k_id})", mcfg.threshold))?,
        None => say(out, format!("no fault detected from k_id = {k_id} (threshold {:e})", mcfg.threshold))?,
    }
    match ft.settles_in {
        Some(s) => say(out, format!("estimator exact from k = {}", k_id + s))?,
        None => say(out, "estimator error dynamics are not nilpotent")?,
    }
    if let Some(w) = &ft.window {
        let first: Vec<String> = w.values[0].iter().map(|v| format!("{v:.6}")).collect();
        say(out, format!("window estimate at detection: f({}) = [{}]", w.start, first.join(", ")))?;
    }
    let true_f = |k: usize| input.faults.as_ref().and_then(|f| f.get(k));
    if let (Some(s), Some(_)) = (ft.settles_in, &input.faults) {
        let err = (k_id + s..k_id + ft.estimates.len())
            .filter_map(|k| Some((ft.estimate_at(k)? - true_f(k)?).amax()))
            .fold(0.0, f64::max);
        say(out, format!("max |fhat(k) - f(k)| for k >= {}: {err:.3e}", k_id + s))?;
    }

    if let Some(path) = &args.out {
        let m = uio.m();
        write_file(path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["k".to_string(), "r_norm".to_string()];
            header.extend((0..m).map(|i| format!("fhat_{i}")));
            if input.faults.is_some() {
                header.extend((0..m).map(|i| format!("f_{i}")));
            }
            let bad = |e: csv::Error| CliError::Schema(e.to_string());
            csv.write_record(&header).map_err(bad)?;
            for (k, r) in ft.residuals.iter().enumerate() {
                let mut row = vec![k.to_string(), io::fmt(r.norm())];
                match ft.estimate_at(k) {
                    Some(fh) => row.extend(fh.iter().map(|v| io::fmt(*v))),
                    None => row.extend(std::iter::repeat_n(String::new(), m)),
                }
                if input.faults.is_some() {
                    match true_f(k) {
                        Some(f) => row.extend(f.iter().map(|v| io::fmt(*v))),
                        None => row.extend(std::iter::repeat_n(String::new(), m)),
                    }
                }
                csv.write_record(&row).map_err(bad)?;
            }
            csv.flush().map_err(|e| CliError::io(path, e))
        })?;
    }
    if let Some(path) = &args.plot {
        let rows: Vec<(usize, Vec<f64>, Vec<f64>)> = ft
            .estimates
            .iter()
            .enumerate()
            .map(|(i, fh)| {
                let k = k_id + i;
                let f = true_f(k).map(|f| f.iter().copied().collect()).unwrap_or_default();
                (k, f, fh.iter().copied().collect())
            })
            .collect();
        write_file(path, |w| io::write_plot_data(&rows, w))?;
    }
    Ok(exit::SUCCESS)
}

pub fn reproduce(args: &ReproduceArgs, cfg: &ExperimentConfig, tol: &Tolerance, out: &mut dyn Write) -> CliResult<u8> {
    let rcfg = ReproduceConfig {
        seed: args.seed.unwrap_or_else(|| cfg.seed()),
        horizon: cfg.horizon(),
        profile: args.profile.into(),
        threshold: args.threshold.or(cfg.monitor.threshold).unwrap_or(DEFAULT_THRESHOLD),
        zero_output: args.zero_output,
        ..ReproduceConfig::default()
    };
    let report = reproduce_example(&rcfg, tol)?;
    let summary = report.summary();
    say(out, &summary)?;

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_file(&dir.join("summary.txt"), |w| {
            writeln!(w, "{summary}").map_err(|e| CliError::io("summary.txt", e))
        })?;
        write_file(&dir.join("plant.csv"), |w| io::write_system(&example1::system(), w))?;
        write_file(&dir.join("published_uio.csv"), |w| io::write_uio(&example1::published_uio(), w))?;
        if let Some(uio) = &report.uio {
            write_file(&dir.join("uio.csv"), |w| io::write_uio(uio, w))?;
        }
        for sc in &report.scenarios {
            let rows: Vec<(usize, Vec<f64>, Vec<f64>)> =
                sc.series.iter().map(|(k, f, fh)| (*k, vec![*f], vec![*fh])).collect();
            write_file(&dir.join(format!("plot_{}.dat", sc.scenario.name)), |w| {
                io::write_plot_data(&rows, w)
            })?;
        }
    }
    Ok(if report.passed() {
        exit::SUCCESS
    } else if !report.solvability.overall {
        exit::UNSOLVABLE
    } else {
        exit::NUMERICAL
    })
}
