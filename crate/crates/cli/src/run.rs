//! Experiment driver: solve, then emit plans, marginals, pressure,
//! convergence log and a run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

use coneflow::diagnostics::{determinism_index, extract_pressure, PlanAnalysis};
use coneflow::gibbs::{build_cost_matrices, build_gibbs};
use coneflow::grid::build_grid;
use coneflow::io::{write_matrix_csv, write_pgm_heatmap, write_plan_slice_csv};
use coneflow::solver::{sinkhorn_solve, LogDomainMode, SolverReport};

use crate::config::ExperimentConfig;

/// Process exit codes for the failure modes callers branch on.
pub const EXIT_NON_CONVERGENCE: i32 = 2;
pub const EXIT_STARVED: i32 = 3;

/// Solve and write artifacts; the returned code is the process exit code.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    log_domain_override: Option<LogDomainMode>,
    seed_override: Option<u64>,
) -> anyhow::Result<i32> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let grid = build_grid(&config.grid_config())?;
    let map = config.boundary_map()?;
    let costs = build_cost_matrices(&grid, &map)?;
    let factors = build_gibbs(&costs, &grid, config.solver.epsilon, config.solver.alpha)?;
    let mut options = config.solver_options()?;
    if let Some(mode) = log_domain_override {
        options.log_domain = mode;
    }
    let seed = seed_override.unwrap_or(config.output.seed);
    let snapshots = config.snapshots();

    write_manifest(config, out_dir, &options.log_domain, seed, &snapshots)?;

    let (duals, report) = match sinkhorn_solve(&factors, &grid, &options) {
        Ok(pair) => pair,
        Err(coneflow::Error::StarvedNodes { level, nodes }) => {
            eprintln!(
                "starved base nodes at time level {level}: {nodes:?}; \
                 no artifacts written (epsilon too small for dense mode?)"
            );
            return Ok(EXIT_STARVED);
        }
        Err(e) => return Err(e.into()),
    };

    write_convergence_log(out_dir, &report)?;

    let analysis = PlanAnalysis::new(&factors, &grid, &duals)?;
    for &level in &snapshots {
        let k = level - 1;
        let plan = analysis.base_transport_plan(k)?;
        write_plan_slice_csv(&out_dir.join(format!("plan_k{level}.csv")), &plan)?;
        write_pgm_heatmap(&out_dir.join(format!("plan_k{level}.pgm")), plan.data())?;
        log::info!(
            "snapshot k={level}: plan mass {:.6e}, determinism index {:.4}",
            plan.mass(),
            determinism_index(&plan)
        );

        let cone = analysis.cone_marginal(k)?;
        write_plan_slice_csv(&out_dir.join(format!("cone_k{level}.csv")), &cone)?;
        write_pgm_heatmap(&out_dir.join(format!("cone_k{level}.pgm")), cone.data())?;
    }

    let pressure = extract_pressure(&duals, &grid, factors.eps())?;
    write_matrix_csv(
        &out_dir.join("pressure.csv"),
        &pressure,
        "t",
        "x",
        grid.ts(),
        grid.xs(),
    )?;

    let action = analysis.action();
    log::info!(
        "action: transport {:.6e}, coupling {:.6e}; entropy {:.6e}",
        action.transport,
        action.coupling,
        analysis.entropy()
    );

    if !report.converged {
        eprintln!(
            "did not converge: violation {:.3e} after {} sweeps (tolerance {:.1e}); \
             artifacts and violation history written to {}",
            report.final_violation,
            report.sweeps,
            options.tolerance,
            out_dir.display()
        );
        return Ok(EXIT_NON_CONVERGENCE);
    }
    Ok(0)
}

fn write_convergence_log(out_dir: &Path, report: &SolverReport) -> anyhow::Result<()> {
    let mut text = String::new();
    let mut elapsed = 0.0;
    for (i, violation) in report.violation_history.iter().enumerate() {
        elapsed += report.sweep_seconds[i];
        writeln!(
            text,
            "sweep={} violation={:.6e} dual_obj={:.12e} elapsed={:.3}",
            i + 1,
            violation,
            report.objective_history[i],
            elapsed
        )?;
    }
    writeln!(
        text,
        "final converged={} violation={:.6e} sweeps={} log_domain={}",
        report.converged, report.final_violation, report.sweeps, report.log_domain_used
    )?;
    std::fs::write(out_dir.join("convergence.log"), text)?;
    Ok(())
}

fn write_manifest(
    config: &ExperimentConfig,
    out_dir: &Path,
    log_domain: &LogDomainMode,
    seed: u64,
    snapshots: &[usize],
) -> anyhow::Result<()> {
    let mut m = String::new();
    writeln!(m, "artifact = coneflow")?;
    writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(m)?;
    writeln!(m, "[grid]")?;
    writeln!(m, "n_x = {}", config.grid.n_x)?;
    writeln!(m, "n_r = {}", config.grid.n_r)?;
    writeln!(m, "r_lo = {}", config.grid.r_lo)?;
    writeln!(m, "r_hi = {}", config.grid.r_hi)?;
    writeln!(m, "k_levels = {}", config.grid.k_levels)?;
    writeln!(m, "t_total = {}", config.grid.t_total)?;
    writeln!(m)?;
    writeln!(m, "[map]")?;
    writeln!(m, "map = {}", config.map_description())?;
    writeln!(m)?;
    writeln!(m, "[solver]")?;
    writeln!(m, "epsilon = {}", config.solver.epsilon)?;
    writeln!(m, "alpha = {}", config.solver.alpha)?;
    writeln!(m, "tolerance = {}", config.solver.tolerance)?;
    writeln!(m, "max_sweeps = {}", config.solver.max_sweeps)?;
    writeln!(m, "log_domain = {log_domain:?}")?;
    writeln!(m)?;
    writeln!(m, "[output]")?;
    writeln!(m, "snapshots = {snapshots:?}")?;
    writeln!(m, "seed = {seed}")?;
    std::fs::write(out_dir.join("manifest.txt"), m)?;
    Ok(())
}

pub fn resolve_out_dir(config: &ExperimentConfig, cli_out: Option<PathBuf>) -> PathBuf {
    cli_out
        .or_else(|| config.output.directory.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}
