use coneflow::boundary::BoundaryMap;
use coneflow::gibbs::{build_cost_matrices, build_gibbs};
use coneflow::grid::{build_grid, GridConfig};
use coneflow::solver::*;
use std::time::Instant;

fn main() {
    let grid = build_grid(&GridConfig { n_x: 3, n_r: 2, r_lo: 0.5, r_hi: 1.0, k_levels: 3, t_total: 1.0 }).unwrap();
    let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).unwrap();
    let factors = build_gibbs(&costs, &grid, 0.1, 1.0).unwrap();
    let t0 = Instant::now();
    let options = SolverOptions { tolerance: 1e-10, max_sweeps: 20000, ..Default::default() };
    let (_d, report) = sinkhorn_solve(&factors, &grid, &options).unwrap();
    println!("tiny: converged={} final={:e} sweeps={} time={:?}", report.converged, report.final_violation, report.sweeps, t0.elapsed());

    let grid = build_grid(&GridConfig { n_x: 16, n_r: 17, r_lo: 0.55, r_hi: 1.45, k_levels: 9, t_total: 1.0 }).unwrap();
    let costs = build_cost_matrices(&grid, &BoundaryMap::peakon()).unwrap();
    let factors = build_gibbs(&costs, &grid, 5e-3, 40.0).unwrap();
    let t0 = Instant::now();
    let options = SolverOptions { tolerance: 1e-6, max_sweeps: 400, ..Default::default() };
    match sinkhorn_solve(&factors, &grid, &options) {
        Ok((_d, report)) => {
            println!("peakon: converged={} final={:e} sweeps={} log={} time={:?}", report.converged, report.final_violation, report.sweeps, report.log_domain_used, t0.elapsed());
            let n = report.violation_history.len();
            for i in [0usize, 1, 2, 5, 10, 20, 40, 80, 150, 250, 399] {
                if i < n { println!("  sweep {} viol {:e} obj {:.9}", i + 1, report.violation_history[i], report.objective_history[i]); }
            }
        }
        Err(e) => println!("peakon error: {e}"),
    }
}
