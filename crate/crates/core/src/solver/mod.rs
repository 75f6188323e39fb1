//! Cycle-structured multi-marginal Sinkhorn with homogeneous second-moment
//! constraints.
//!
//! The discrete plan lives over `K` time levels of cone nodes and is never
//! materialized: it is the product of Gibbs kernels along the time cycle,
//! scaled per level by dual factors `exp(p_k[i] r^2)`. A sweep enforces, at
//! each level in turn, the constraint that the radial second moment per
//! base node equals `1/N_x`; each enforcement is a scalar Newton solve per
//! base node and is an exact block maximization of the concave dual
//! functional, so the dual objective is non-decreasing across updates.
//!
//! Convergence is declared when the relative moment violation
//! `max_{k,i} |N_x * M_2[S_k]_i - 1|` drops below the tolerance, first
//! measured level-by-level during the sweep and then confirmed with a
//! fresh pass at the final duals.
//!
//! Plain cyclic updates alone crawl here: constant-per-level dual shifts
//! with zero sum change path weights only through the radial spread
//! `r^2 - 1`, so that `K`-dimensional subspace is nearly flat (it would be
//! an exact gauge if every radius were 1) and cyclic block ascent zigzags
//! along it. Two safeguarded accelerations fix this without changing the
//! fixed point: each sweep ends with an exact Newton step over per-level
//! constant shifts, and the sweep map is wrapped in Anderson extrapolation
//! whose steps are accepted only when they do not decrease the dual
//! objective. Every accepted state is therefore still an ascent step.

mod messages;
mod newton;

pub(crate) use messages::{auto_engine, MessageEngine};

use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gibbs::GibbsFactors;
use crate::grid::Grid;

/// Message representation policy.
///
/// `Auto` uses dense linear messages for comfortable regularization
/// strengths and switches to log-domain messages when `eps <= 1e-3`, when
/// the dense kernels underflow to exact zero, or when a dense sweep
/// overflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogDomainMode {
    #[default]
    Auto,
    On,
    Off,
}

/// Dual potentials: one vector of `N_x` scalars per time level. These are
/// the discrete pressure multipliers of the second-moment constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    levels: Vec<Vec<f64>>,
}

impl DualPotentials {
    pub fn zeros(k_levels: usize, n_x: usize) -> Self {
        Self { levels: vec![vec![0.0; n_x]; k_levels] }
    }

    pub fn from_levels(levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|l| l.len() != levels[0].len()) {
            return Err(Error::Shape("dual levels must share one length".into()));
        }
        if levels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual potentials"));
        }
        Ok(Self { levels })
    }

    pub fn k_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_x(&self) -> usize {
        self.levels[0].len()
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn set_level(&mut self, k: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.n_x());
        self.levels[k] = values;
    }

    pub fn total_sum(&self) -> f64 {
        self.levels.iter().flatten().sum()
    }

    /// Copy with each level shifted to zero mean, the reporting gauge for
    /// exported duals and pressures.
    pub fn gauge_fixed(&self) -> Self {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                let mean = l.iter().sum::<f64>() / l.len() as f64;
                l.iter().map(|v| v - mean).collect()
            })
            .collect();
        Self { levels }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Threshold on the relative moment violation.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub log_domain: LogDomainMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-7, max_sweeps: 5000, log_domain: LogDomainMode::Auto }
    }
}

/// Outcome of [`sinkhorn_solve`].
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub sweeps: usize,
    pub converged: bool,
    /// Violation measured with a fresh pass at the final duals.
    pub final_violation: f64,
    /// Maximum pre-update violation seen in each sweep.
    pub violation_history: Vec<f64>,
    /// Dual objective after each sweep; non-decreasing.
    pub objective_history: Vec<f64>,
    pub sweep_seconds: Vec<f64>,
    pub wall_seconds: f64,
    pub log_domain_used: bool,
}

/// Run sweeps until the moment constraints hold within tolerance.
pub fn sinkhorn_solve(
    factors: &GibbsFactors,
    grid: &Grid,
    options: &SolverOptions,
) -> Result<(DualPotentials, SolverReport)> {
    if !(options.tolerance > 0.0) {
        return Err(Error::Shape(format!("tolerance must be positive, got {}", options.tolerance)));
    }
    match options.log_domain {
        LogDomainMode::On => run_sweeps(factors, grid, options, true),
        LogDomainMode::Off => run_sweeps(factors, grid, options, false),
        LogDomainMode::Auto => {
            if factors.eps() <= messages::AUTO_LOG_EPS {
                return run_sweeps(factors, grid, options, true);
            }
            match run_sweeps(factors, grid, options, false) {
                Err(Error::KernelUnderflow) | Err(Error::DenseOverflow { .. }) => {
                    log::warn!("dense messages not representable; restarting in log-domain mode");
                    run_sweeps(factors, grid, options, true)
                }
                other => other,
            }
        }
    }
}

fn run_sweeps(
    factors: &GibbsFactors,
    grid: &Grid,
    options: &SolverOptions,
    use_log: bool,
) -> Result<(DualPotentials, SolverReport)> {
    let start = Instant::now();
    let mut engine = messages::make_engine(factors, grid, use_log)?;
    let k_levels = grid.k_levels();
    let n_x = grid.n_x();
    let rsq = grid.radii_sq();
    let log_rsq: Vec<f64> = rsq.iter().map(|s| s.ln()).collect();
    let log_target = -(n_x as f64).ln();

    let mut duals = DualPotentials::zeros(k_levels, n_x);
    let mut anderson = Anderson::new(20);
    let mut violation_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut sweep_seconds = Vec::new();
    let mut converged = false;
    let mut final_violation = f64::NAN;
    let mut sweeps = 0;

    // Over-relaxation of the block updates: grown on streaks of accepted
    // sweeps, reset (and the sweep redone plain) whenever a relaxed sweep
    // fails the ascent check, and disabled close to convergence so the
    // final accepted updates are the exact Newton roots.
    let mut omega = 1.0f64;
    let mut streak = 0usize;
    let mut last_objective = f64::NEG_INFINITY;

    for sweep in 1..=options.max_sweeps {
        let sweep_start = Instant::now();
        sweeps = sweep;
        let sweep_input = duals.clone();

        let mut pre_violation;
        let mut mass;
        let mut objective;
        loop {
            pre_violation = do_sweep(
                engine.as_mut(),
                &mut duals,
                omega,
                &rsq,
                &log_rsq,
                log_target,
                n_x,
            )?;
            if pre_violation < 10.0 * options.tolerance {
                omega = 1.0;
            }
            mass = engine.mass();
            if !mass.is_finite() {
                return Err(Error::DenseOverflow { level: k_levels - 1 });
            }
            objective = duals.total_sum() / n_x as f64 - mass;
            if omega == 1.0 || objective >= last_objective - 1e-13 * (1.0 + objective.abs()) {
                break;
            }
            // Relaxed sweep lost ground; redo it as plain block ascent.
            omega = 1.0;
            streak = 0;
            duals = sweep_input.clone();
        }
        if objective >= last_objective {
            streak += 1;
            if streak >= 3 && omega < 1.9 {
                omega = (omega + 0.15).min(1.9);
                streak = 0;
            }
        }
        last_objective = objective.max(last_objective);
        let mut objective = objective;

        // Safeguarded Anderson step on the sweep map. The safeguard is a
        // freshly measured violation at the candidate against the sweep's
        // input violation: near the optimum the objective cannot resolve
        // progress in float, but the violation can. Accepted candidates
        // perturb the recorded objective by at most a few ulps, well
        // inside the monotonicity budget.
        let mut fresh_violation = None;
        anderson.push(&sweep_input, &duals);
        if let Some(candidate) = anderson.candidate(k_levels, n_x) {
            if let Ok((viol_cand, mass_cand)) =
                violation_and_mass(engine.as_mut(), &candidate, &rsq, n_x)
            {
                let cand_objective = candidate.total_sum() / n_x as f64 - mass_cand;
                if viol_cand <= 0.98 * pre_violation
                    && mass_cand.is_finite()
                    && cand_objective >= last_objective - 1e-13 * (1.0 + last_objective.abs())
                {
                    objective = cand_objective;
                    duals = candidate;
                    fresh_violation = Some(viol_cand);
                }
            }
        }

        let elapsed = start.elapsed().as_secs_f64();
        violation_history.push(pre_violation);
        objective_history.push(objective);
        sweep_seconds.push(sweep_start.elapsed().as_secs_f64());
        log::info!("sweep={sweep} violation={pre_violation:.6e} dual_obj={objective:.12e} elapsed={elapsed:.3}");

        last_objective = last_objective.max(objective);
        let candidate_converged = fresh_violation.is_some_and(|v| v < options.tolerance);
        if candidate_converged || pre_violation < options.tolerance {
            let fresh = match fresh_violation {
                Some(v) => v,
                None => measure_violation(engine.as_mut(), &duals, &rsq, n_x)?,
            };
            final_violation = fresh;
            if fresh < options.tolerance {
                converged = true;
                break;
            }
        }
    }

    if final_violation.is_nan() {
        final_violation = measure_violation(engine.as_mut(), &duals, &rsq, n_x)?;
        converged = final_violation < options.tolerance;
    }

    let report = SolverReport {
        sweeps,
        converged,
        final_violation,
        violation_history,
        objective_history,
        sweep_seconds,
        wall_seconds: start.elapsed().as_secs_f64(),
        log_domain_used: use_log,
    };
    Ok((duals, report))
}

/// One cyclic pass over the levels: measure the pre-update violation,
/// solve each level's Newton updates, write the (possibly over-relaxed)
/// duals, and push the prefix messages forward. Returns the pre-update
/// violation; on return the engine's forward state matches the written
/// duals, so `engine.mass()` is the current plan mass.
fn do_sweep(
    engine: &mut dyn MessageEngine,
    duals: &mut DualPotentials,
    omega: f64,
    rsq: &[f64],
    log_rsq: &[f64],
    log_target: f64,
    n_x: usize,
) -> Result<f64> {
    engine.backward(duals)?;
    engine.forward_reset();
    let mut pre_violation: f64 = 0.0;
    for k in 0..duals.k_levels() {
        let b = engine.b_log();
        if b.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::DenseOverflow { level: k });
        }
        pre_violation = pre_violation.max(level_violation(&b, duals.level(k), rsq, n_x));

        let mut p_new = vec![0.0; n_x];
        let mut starved = Vec::new();
        for i in 0..n_x {
            let row = b.row(i);
            if row.iter().all(|v| *v == f64::NEG_INFINITY) {
                starved.push(i);
                continue;
            }
            let log_terms: Vec<f64> = row.iter().zip(log_rsq).map(|(b, lr)| b + lr).collect();
            let root = newton::solve_log_terms(&log_terms, rsq, log_target)?;
            let old = duals.level(k)[i];
            p_new[i] = old + omega * (root - old);
        }
        if !starved.is_empty() {
            return Err(Error::StarvedNodes { level: k + 1, nodes: starved });
        }
        duals.set_level(k, p_new);
        engine.advance(duals.level(k))?;
    }
    Ok(pre_violation)
}

/// Anderson extrapolation over the sweep map, depth-limited window of
/// `(input, output)` pairs.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    gs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self { depth, xs: Vec::new(), gs: Vec::new() }
    }

    fn push(&mut self, input: &DualPotentials, output: &DualPotentials) {
        if self.xs.len() == self.depth {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        self.xs.push(flatten(input));
        self.gs.push(flatten(output));
    }

    /// Least-squares residual extrapolation `g_last - sum_a gamma_a dg_a`,
    /// with `gamma` minimizing the extrapolated residual norm.
    fn candidate(&self, k_levels: usize, n_x: usize) -> Option<DualPotentials> {
        let m = self.xs.len();
        if m < 2 {
            return None;
        }
        let n = self.xs[0].len();
        let f: Vec<Vec<f64>> = self
            .xs
            .iter()
            .zip(&self.gs)
            .map(|(x, g)| g.iter().zip(x).map(|(g, x)| g - x).collect())
            .collect();
        let cols = m - 1;
        let df: Vec<Vec<f64>> = (0..cols)
            .map(|a| f[a + 1].iter().zip(&f[a]).map(|(b, a)| b - a).collect())
            .collect();
        // Normal equations with a small relative ridge.
        let mut ata = vec![0.0; cols * cols];
        let mut atb = vec![0.0; cols];
        for a in 0..cols {
            for b in a..cols {
                let dot: f64 = df[a].iter().zip(&df[b]).map(|(x, y)| x * y).sum();
                ata[a * cols + b] = dot;
                ata[b * cols + a] = dot;
            }
            atb[a] = df[a].iter().zip(&f[m - 1]).map(|(x, y)| x * y).sum();
        }
        let scale = (0..cols).map(|a| ata[a * cols + a]).fold(0.0f64, f64::max);
        if scale == 0.0 {
            return None;
        }
        for a in 0..cols {
            ata[a * cols + a] += 1e-10 * scale;
        }
        let gamma = solve_dense(ata, atb, cols)?;
        if gamma.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let mut out = self.gs[m - 1].clone();
        for a in 0..cols {
            for i in 0..n {
                out[i] -= gamma[a] * (self.gs[a + 1][i] - self.gs[a][i]);
            }
        }
        let levels = out.chunks(n_x).map(<[f64]>::to_vec).collect::<Vec<_>>();
        debug_assert_eq!(levels.len(), k_levels);
        DualPotentials::from_levels(levels).ok()
    }
}

fn flatten(duals: &DualPotentials) -> Vec<f64> {
    duals.levels().iter().flatten().copied().collect()
}

/// Gaussian elimination with partial pivoting on a small row-major system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).expect("finite matrix")
        })?;
        if a[pivot * n + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col * n + k] * b[k];
        }
        b[col] = sum / a[col * n + col];
    }
    Some(b)
}

/// `max_i |N_x * M_2 - 1|` at one level, from the level's `log B` and dual row.
fn level_violation(b_log: &Array2<f64>, p: &[f64], rsq: &[f64], n_x: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n_x {
        let mut m2 = 0.0;
        for (jr, s) in rsq.iter().enumerate() {
            m2 += (b_log[[i, jr]] + p[i] * s).exp() * s;
        }
        worst = worst.max((n_x as f64 * m2 - 1.0).abs());
    }
    worst
}

/// Violation of the second-moment constraints at fixed duals, plus the
/// plan mass from the same pass.
fn violation_and_mass(
    engine: &mut dyn MessageEngine,
    duals: &DualPotentials,
    rsq: &[f64],
    n_x: usize,
) -> Result<(f64, f64)> {
    engine.backward(duals)?;
    engine.forward_reset();
    let mut worst: f64 = 0.0;
    for k in 0..duals.k_levels() {
        let b = engine.b_log();
        worst = worst.max(level_violation(&b, duals.level(k), rsq, n_x));
        engine.advance(duals.level(k))?;
    }
    Ok((worst, engine.mass()))
}

/// Violation of the second-moment constraints at fixed duals.
fn measure_violation(
    engine: &mut dyn MessageEngine,
    duals: &DualPotentials,
    rsq: &[f64],
    n_x: usize,
) -> Result<f64> {
    Ok(violation_and_mass(engine, duals, rsq, n_x)?.0)
}

/// Violation of the second-moment constraints for externally supplied duals.
pub fn constraint_violation(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
) -> Result<f64> {
    let mut engine = auto_engine(factors, grid)?;
    measure_violation(engine.as_mut(), duals, &grid.radii_sq(), grid.n_x())
}

/// Plan marginal at time level `k` (0-based), length `N`.
pub fn marginal_s(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
    k: usize,
) -> Result<Vec<f64>> {
    check_level(grid, duals, k)?;
    let mut engine = auto_engine(factors, grid)?;
    engine.backward(duals)?;
    engine.forward_all(duals)?;
    Ok(engine.marginal(k))
}

/// All plan marginals, shape `K x N`.
pub fn all_marginals(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
) -> Result<Array2<f64>> {
    check_level(grid, duals, 0)?;
    let mut engine = auto_engine(factors, grid)?;
    engine.backward(duals)?;
    engine.forward_all(duals)?;
    let mut out = Array2::zeros((grid.k_levels(), grid.n_nodes()));
    for k in 0..grid.k_levels() {
        for (j, v) in engine.marginal(k).into_iter().enumerate() {
            out[[k, j]] = v;
        }
    }
    Ok(out)
}

fn check_level(grid: &Grid, duals: &DualPotentials, k: usize) -> Result<()> {
    if duals.k_levels() != grid.k_levels() || duals.n_x() != grid.n_x() {
        return Err(Error::Shape(format!(
            "duals are {}x{} but grid needs {}x{}",
            duals.k_levels(),
            duals.n_x(),
            grid.k_levels(),
            grid.n_x()
        )));
    }
    if k >= grid.k_levels() {
        return Err(Error::Shape(format!("level {k} out of range 0..{}", grid.k_levels())));
    }
    Ok(())
}

/// Radial moment of order `n` (0, 1 or 2) of a node vector, per base node.
pub fn moment(grid: &Grid, values: &[f64], order: u8) -> Result<Vec<f64>> {
    if values.len() != grid.n_nodes() {
        return Err(Error::Shape(format!(
            "expected {} node values, got {}",
            grid.n_nodes(),
            values.len()
        )));
    }
    if order > 2 {
        return Err(Error::Shape(format!("moment order must be 0, 1 or 2, got {order}")));
    }
    let mut out = vec![0.0; grid.n_x()];
    for (j, v) in values.iter().enumerate() {
        let r = grid.radius_of(j);
        out[grid.base_of(j)] += r.powi(order as i32) * v;
    }
    Ok(out)
}

/// One dual update in isolation: for each row `i` of `b`, the unique root
/// `p` of `sum_j b[i,j] exp(p r_j^2) r_j^2 = target`. Residuals are within
/// `1e-12 * target`. Rows with no positive entry are reported as starved
/// (with level 0, meaning "outside a sweep").
pub fn newton_dual_update(b: &Array2<f64>, radii: &[f64], target: f64) -> Result<Vec<f64>> {
    if b.ncols() != radii.len() {
        return Err(Error::Shape(format!(
            "b has {} columns but {} radii were given",
            b.ncols(),
            radii.len()
        )));
    }
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Shape(format!("target must be positive, got {target}")));
    }
    if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("dual update weights"));
    }
    let rsq: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let log_target = target.ln();
    let mut out = vec![0.0; b.nrows()];
    let mut starved = Vec::new();
    for i in 0..b.nrows() {
        let log_terms: Vec<f64> =
            b.row(i).iter().zip(&rsq).map(|(v, s)| (v * s).ln()).collect();
        if log_terms.iter().all(|t| !t.is_finite()) {
            starved.push(i);
            continue;
        }
        out[i] = newton::solve_log_terms(&log_terms, &rsq, log_target)?;
    }
    if !starved.is_empty() {
        return Err(Error::StarvedNodes { level: 0, nodes: starved });
    }
    Ok(out)
}

/// Dense dual-weighted kernels: `K-1` transition matrices
/// `W_k[j, j'] = exp(p_k[base(j)] r_j^2) xi[j, j']` and the closing matrix
/// `H[j, i] = exp(p_{K-1}[base(j)] r_j^2) xi_close[j, slice(i)]`. The plan
/// entry for a path is the product of its transitions and the closing
/// factor, with the first index restricted to the radius-1 slice.
pub fn weighted_kernels(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
    check_level(grid, duals, 0)?;
    let xi = factors.xi();
    let xi_close = factors.xi_close();
    let n = grid.n_nodes();
    let mut transitions = Vec::with_capacity(grid.k_levels() - 1);
    for k in 0..grid.k_levels() - 1 {
        let p = duals.level(k);
        let mut w = xi.clone();
        for j in 0..n {
            let a = (p[grid.base_of(j)] * grid.radius_of(j).powi(2)).exp();
            w.row_mut(j).mapv_inplace(|v| v * a);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::DenseOverflow { level: k });
        }
        transitions.push(w);
    }
    let p = duals.level(grid.k_levels() - 1);
    let slice = grid.first_slice_nodes();
    let mut closing = Array2::zeros((n, grid.n_x()));
    for j in 0..n {
        let a = (p[grid.base_of(j)] * grid.radius_of(j).powi(2)).exp();
        for (i, &f) in slice.iter().enumerate() {
            closing[[j, i]] = a * xi_close[[j, f]];
        }
    }
    if closing.iter().any(|v| !v.is_finite()) {
        return Err(Error::DenseOverflow { level: grid.k_levels() - 1 });
    }
    Ok((transitions, closing))
}

/// Dual objective `sum_{k,i} p_k[i]/N_x - mass(plan)`, in units of the
/// regularization strength (the unscaled Lagrangian dual is `eps` times
/// this). Strictly non-decreasing across Newton block updates.
pub fn dual_objective(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
) -> Result<f64> {
    check_level(grid, duals, 0)?;
    let mut engine = auto_engine(factors, grid)?;
    engine.forward_all(duals)?;
    Ok(duals.total_sum() / grid.n_x() as f64 - engine.mass())
}

#[cfg(test)]
mod tests;
