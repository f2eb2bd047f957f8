use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::args::{
    CapacityArgs, Cli, Command, DesignArg, Format, LmiArgs, LocalArgs, LocalMethodArg, ModelPreset, OutputArgs, PlantArgs,
    ScalarArgs, SimulateArgs, SweepArgs, SweepMode,
};
use super::{format_number, EXIT_INFEASIBLE, EXIT_NO_CONVERGENCE, EXIT_OK};
use crate::error::{Error, Result};
use crate::estimator::{error_dynamics, exact_steady_covariance, simulate, Design, DesignKind, Provenance, SimulationOptions};
use crate::graph::Graph;
use crate::linalg::{spectral_norm, spectral_radius};
use crate::lmi_design::{ccl_design, CclOptions, CclStatus, StopReason};
use crate::local_design::{local_alpha_interval, LambdaMaxSource, LocalMethod, LocalOptions};
use crate::model::Plant;
use crate::norm_design::{compute_ntc, design_for_system, performance_design, steady_state_bound, NtcOptions, PerformanceOptions};
use crate::scalar_design::{optimal_design, scalar_capacity, scalar_performance_bound, scalar_report, Interval};

const THREADS_ENV: &str = "NETTRACK_THREADS";
const SWEEP_MIN_N: usize = 2;
const SWEEP_MAX_N: usize = 32;

pub(super) fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Capacity(a) => cmd_capacity(a, out),
        Command::Scalar(a) => cmd_scalar(a, out),
        Command::LocalAlpha(a) => cmd_local_alpha(a, out),
        Command::Lmi(a) => cmd_lmi(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
    }
}

fn build_plant(args: &PlantArgs) -> Result<Plant> {
    let plant = if let Some(path) = &args.plant {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Plant::from_json(&text)?
    } else {
        let spec = args.graph.as_deref().ok_or_else(|| Error::BadParams("need --plant or --graph".into()))?;
        let graph: Graph = spec.parse()?;
        let a = args.a.unwrap_or(1.0);
        match args.model {
            ModelPreset::CanonicalScalar => {
                if args.dim.is_some_and(|d| d != graph.n()) {
                    return Err(Error::BadParams("--dim must equal N for the canonical scalar model".into()));
                }
                Plant::canonical_scalar(graph, a)?
            }
            ModelPreset::None => Plant::unobserved(graph, args.dim.unwrap_or(1), a)?,
        }
    };
    match args.a {
        Some(a) if args.plant.is_some() => plant.with_instability(a),
        _ => Ok(plant),
    }
}

fn write_to(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_to(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string())),
    }
}

fn emit_report(json: String, csv: impl FnOnce() -> String, args: &OutputArgs, out: &mut dyn Write) -> Result<()> {
    let mut text = match args.format {
        Format::Json => json,
        Format::Csv => csv(),
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    emit(&text, args.output.as_deref(), out)
}

/// Two-column `key,value` CSV.
fn kv_csv(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in pairs {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn interval_pairs(interval: Option<Interval>) -> [(&'static str, String); 2] {
    match interval {
        Some(i) => [("interval_lo", format_number(i.lo)), ("interval_hi", format_number(i.hi))],
        None => [("interval_lo", String::new()), ("interval_hi", String::new())],
    }
}

/// Runs `f` on a pool capped by `NETTRACK_THREADS` when set.
fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(f());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::BadParams(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::BadParams(e.to_string()))?;
    Ok(pool.install(f))
}

fn cmd_capacity(args: &CapacityArgs, out: &mut dyn Write) -> Result<i32> {
    let plant = build_plant(&args.plant)?;
    let opts = NtcOptions { max_iter: args.max_iter, ..NtcOptions::default() };
    let r = compute_ntc(&plant, &opts)?;
    emit_report(
        r.to_json(),
        || {
            kv_csv(&[
                ("capacity", format_number(r.capacity)),
                ("infinite", r.infinite.to_string()),
                ("achieved_norm", format_number(r.achieved_norm)),
                ("iterations", r.iterations.to_string()),
                ("converged", r.converged.to_string()),
                ("method", serde_plain(&r.method)),
            ])
        },
        &args.out,
        out,
    )?;
    Ok(if r.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

fn cmd_scalar(args: &ScalarArgs, out: &mut dyn Write) -> Result<i32> {
    let plant = build_plant(&args.plant)?;
    let r = scalar_report(&plant, plant.instability())?;
    emit_report(
        r.to_json(),
        || {
            let mut pairs = vec![
                ("lambda_min", format_number(r.lambda_min)),
                ("lambda_max", format_number(r.lambda_max)),
                ("c_alpha", format_number(r.c_alpha)),
                ("alpha_opt", format_number(r.alpha_opt)),
                ("min_norm", format_number(r.min_norm)),
                ("a", format_number(r.a)),
            ];
            pairs.extend(interval_pairs(r.interval));
            kv_csv(&pairs)
        },
        &args.out,
        out,
    )?;
    Ok(if r.interval.is_some() { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn cmd_local_alpha(args: &LocalArgs, out: &mut dyn Write) -> Result<i32> {
    let plant = build_plant(&args.plant)?;
    let lambda_max = match args.lambda_max.as_str() {
        "exact" => LambdaMaxSource::Exact,
        "degree" => LambdaMaxSource::DegreeBound,
        v => LambdaMaxSource::Supplied(
            v.parse().map_err(|_| Error::BadParams(format!("--lambda-max expects exact, degree or a number, got `{v}`")))?,
        ),
    };
    let method = match args.method {
        LocalMethodArg::Auto => None,
        LocalMethodArg::Circulant => Some(LocalMethod::CirculantIsomorphic),
        LocalMethodArg::Cycle => Some(LocalMethod::CycleSubgraph),
    };
    let opts = LocalOptions { method, relabeling: None, cycle: args.cycle.clone(), lambda_max };
    let r = local_alpha_interval(&plant, plant.instability(), &opts)?;
    emit_report(
        r.to_json(),
        || {
            let mut pairs = vec![
                ("method", serde_plain(&r.method)),
                ("tau", format_number(r.tau)),
                ("lambda2", format_number(r.lambda2)),
                ("lambda_max_laplacian", format_number(r.lambda_max_laplacian)),
                ("lambda_max_dh", format_number(r.lambda_max_dh)),
                ("lambda_max_bound", format_number(r.lambda_max_bound)),
                ("c_loc", format_number(r.c_loc)),
                ("a", format_number(r.a)),
            ];
            pairs.extend(interval_pairs(r.interval));
            kv_csv(&pairs)
        },
        &args.out,
        out,
    )?;
    Ok(if r.interval.is_some() { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn cmd_lmi(args: &LmiArgs, out: &mut dyn Write) -> Result<i32> {
    let plant = build_plant(&args.plant)?;
    let mut opts = CclOptions { seed: args.seed, max_outer: args.max_outer, lmi_tol: args.lmi_tol, ..CclOptions::default() };
    if args.trace_target {
        opts = opts.with_trace_target();
    }
    let r = ccl_design(&plant, &opts)?;
    emit_report(
        r.to_json(),
        || {
            kv_csv(&[
                ("status", serde_plain(&r.status)),
                ("stop", serde_plain(&r.stop)),
                ("start", serde_plain(&r.start)),
                ("rho", format_number(r.rho)),
                ("lmi_margin", format_number(r.lmi_margin)),
                ("coupling_margin", format_number(r.coupling_margin)),
                ("trace_gap", format_number(r.trace_gap)),
                ("iterations", r.iterations().to_string()),
            ])
        },
        &args.out,
        out,
    )?;
    Ok(match (r.status, r.stop) {
        (CclStatus::Success, _) => EXIT_OK,
        (CclStatus::Infeasible, StopReason::MaxIterations) => EXIT_NO_CONVERGENCE,
        (CclStatus::Infeasible, _) => EXIT_INFEASIBLE,
    })
}

#[derive(Serialize)]
struct DesignSummary {
    kind: DesignKind,
    provenance: Provenance,
    alpha: Option<f64>,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    design: DesignSummary,
    /// `‖P‖₂`.
    contraction_norm: f64,
    /// `‖S_∞‖₂` from the Lyapunov equation; absent when `ρ(P) ≥ 1`.
    exact_cov_norm: Option<f64>,
    /// Analytic bound on `(1/N)‖S_∞‖₂`; absent when `‖P‖₂ ≥ 1`.
    per_agent_bound: Option<f64>,
    simulation: &'a crate::estimator::SimulationResult,
}

fn simulation_design(plant: &Plant, args: &SimulateArgs) -> Result<Design> {
    match args.design {
        DesignArg::Scalar => match args.alpha.as_str() {
            "opt" => optimal_design(plant),
            v => {
                let alpha: f64 = v.parse().map_err(|_| Error::BadParams(format!("--alpha expects opt or a number, got `{v}`")))?;
                Design::scalar(plant, alpha, Provenance::User)
            }
        },
        DesignArg::Ntc => design_for_system(plant, &NtcOptions::default()),
        DesignArg::Performance => Ok(performance_design(plant, &PerformanceOptions::default())?.design),
    }
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let plant = build_plant(&args.plant)?;
    let design = simulation_design(&plant, args)?;
    let opts = SimulationOptions {
        steps: args.steps,
        trials: args.trials,
        seed: args.seed,
        allow_unstable: args.allow_unstable,
        ..SimulationOptions::default()
    };
    let sim = with_pool(|| simulate(&plant, &design, &opts))??;

    let ed = error_dynamics(&plant, &design)?;
    let exact_cov_norm = if spectral_radius(&ed.p)? < 1.0 {
        Some(spectral_norm(&exact_steady_covariance(&ed)?))
    } else {
        None
    };
    let per_agent_bound = match (design.kind(), design.alpha()) {
        (DesignKind::Scalar, Some(alpha)) => scalar_performance_bound(&plant, alpha).ok(),
        _ => steady_state_bound(&plant, &design).ok(),
    };
    let report = SimulateReport {
        design: DesignSummary { kind: design.kind(), provenance: design.provenance(), alpha: design.alpha() },
        contraction_norm: ed.norm(),
        exact_cov_norm,
        per_agent_bound,
        simulation: &sim,
    };
    if let Some(path) = &args.series {
        write_to(path, &sim.to_csv())?;
    }
    emit_report(
        serde_json::to_string_pretty(&report).expect("report serializes"),
        || sim.to_csv(),
        &args.out,
        out,
    )?;
    Ok(if sim.diverged_at.is_some() { EXIT_INFEASIBLE } else { EXIT_OK })
}

/// One cell of a capacity sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// `null` in JSON and `inf` in CSV when infinite; NaN on failure.
    pub capacity: f64,
    pub status: &'static str,
}

fn sweep_cell(mode: SweepMode, m: usize, n: usize) -> SweepRow {
    let run = || -> Result<(f64, &'static str)> {
        // m ≥ N−1 already gives the complete graph
        let plant = Plant::canonical_scalar(Graph::circulant(n, m.min(n - 1))?, 1.0)?;
        Ok(match mode {
            SweepMode::Scalar => {
                let r = scalar_capacity(&plant)?;
                (r.c_alpha, if r.c_alpha_infinite { "infinite" } else { "ok" })
            }
            SweepMode::Full => {
                let r = compute_ntc(&plant, &NtcOptions::default())?;
                let status = if r.infinite {
                    "infinite"
                } else if r.converged {
                    "ok"
                } else {
                    "not-converged"
                };
                (r.capacity, status)
            }
        })
    };
    match run() {
        Ok((capacity, status)) => SweepRow { m, n, capacity, status },
        Err(_) => SweepRow { m, n, capacity: f64::NAN, status: "failed" },
    }
}

/// Capacity of `circulant(N, m)` with the canonical scalar model for every
/// `m` in `ms` and `N` in `lo..=hi`, ordered by `(m, N)`.
pub fn sweep_rows(mode: SweepMode, ms: &[usize], lo: usize, hi: usize) -> Vec<SweepRow> {
    let mut ms = ms.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let cells: Vec<(usize, usize)> = ms.iter().flat_map(|&m| (lo..=hi).map(move |n| (m, n))).collect();
    cells.par_iter().map(|&(m, n)| sweep_cell(mode, m, n)).collect()
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::BadParams(format!("--n expects lo..hi, got `{s}`"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo < SWEEP_MIN_N || hi > SWEEP_MAX_N || lo > hi {
        return Err(Error::BadParams(format!("N range must lie within {SWEEP_MIN_N}..{SWEEP_MAX_N}, got {lo}..{hi}")));
    }
    Ok((lo, hi))
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let (lo, hi) = parse_range(&args.n)?;
    if args.m.is_empty() || args.m.contains(&0) {
        return Err(Error::BadParams("--m needs positive circulant parameters".into()));
    }
    let rows = with_pool(|| sweep_rows(args.mode, &args.m, lo, hi))?;
    let text = match args.format {
        Format::Csv => {
            let mut s = String::from("m,N,capacity,status\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{}\n", r.m, r.n, format_number(r.capacity), r.status));
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
    };
    emit(&text, args.output.as_deref(), out)?;
    let partial = rows.iter().any(|r| matches!(r.status, "failed" | "not-converged"));
    Ok(if partial { EXIT_NO_CONVERGENCE } else { EXIT_OK })
}

/// A unit enum variant's serde name, e.g. `circulant-isomorphic`.
fn serde_plain<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}
