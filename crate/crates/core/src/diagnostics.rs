//! Post-processing of solved plans: transport plans, cone marginals,
//! action and entropy, discrete pressure, determinism metrics.
//!
//! Everything is computed by message passing against the solved dual
//! potentials; the plan tensor itself is never formed. [`PlanAnalysis`]
//! does the two message passes once and answers any number of queries;
//! the free functions are one-shot conveniences with the same contracts.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gibbs::GibbsFactors;
use crate::grid::Grid;
use crate::solver::{auto_engine, DualPotentials, MessageEngine};

/// A labeled nonnegative matrix extracted from the plan at one time level.
#[derive(Debug, Clone)]
pub struct PlanSlice {
    data: Array2<f64>,
    row_axis: &'static str,
    col_axis: &'static str,
    row_labels: Vec<f64>,
    col_labels: Vec<f64>,
    level: usize,
    mass: f64,
}

impl PlanSlice {
    fn new(
        data: Array2<f64>,
        row_axis: &'static str,
        col_axis: &'static str,
        row_labels: Vec<f64>,
        col_labels: Vec<f64>,
        level: usize,
    ) -> Self {
        let mass = data.iter().sum();
        Self { data, row_axis, col_axis, row_labels, col_labels, level, mass }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row_axis(&self) -> &'static str {
        self.row_axis
    }

    pub fn col_axis(&self) -> &'static str {
        self.col_axis
    }

    pub fn row_labels(&self) -> &[f64] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[f64] {
        &self.col_labels
    }

    /// Time level the slice was taken at (0-based).
    pub fn level(&self) -> usize {
        self.level
    }

    /// Total mass recorded at construction (equals the entry sum).
    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Transport plus coupling-penalty parts of the plan cost `<C, mu>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBreakdown {
    /// `(K-1)/T * sum of squared consecutive cone distances`, plan-weighted.
    pub transport: f64,
    /// `alpha * sum of squared distances to the mapped endpoints`, plan-weighted.
    pub coupling: f64,
}

impl ActionBreakdown {
    pub fn total(&self) -> f64 {
        self.transport + self.coupling
    }
}

/// Message passes done once, queries answered many times.
pub struct PlanAnalysis<'a> {
    factors: &'a GibbsFactors,
    grid: &'a Grid,
    duals: DualPotentials,
    engine: Box<dyn MessageEngine>,
}

impl<'a> PlanAnalysis<'a> {
    pub fn new(factors: &'a GibbsFactors, grid: &'a Grid, duals: &DualPotentials) -> Result<Self> {
        if duals.k_levels() != grid.k_levels() || duals.n_x() != grid.n_x() {
            return Err(Error::Shape(format!(
                "duals are {}x{} but grid needs {}x{}",
                duals.k_levels(),
                duals.n_x(),
                grid.k_levels(),
                grid.n_x()
            )));
        }
        let mut engine = auto_engine(factors, grid)?;
        engine.backward(duals)?;
        engine.forward_all(duals)?;
        Ok(Self { factors, grid, duals: duals.clone(), engine })
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k >= self.grid.k_levels() {
            return Err(Error::Shape(format!(
                "level {k} out of range 0..{}",
                self.grid.k_levels()
            )));
        }
        Ok(())
    }

    /// Base-to-base transport: entry `(i0, i)` is the plan mass starting at
    /// base node `i0` and sitting over base node `i` at level `k`. Row sums
    /// reproduce the starting base distribution for every `k`.
    pub fn base_transport_plan(&self, k: usize) -> Result<PlanSlice> {
        self.check_level(k)?;
        Ok(PlanSlice::new(
            self.engine.base_plan(k),
            "x_start",
            "x",
            self.grid.xs().to_vec(),
            self.grid.xs().to_vec(),
            k,
        ))
    }

    /// Plan marginal at level `k` reshaped onto base x radius axes.
    pub fn cone_marginal(&self, k: usize) -> Result<PlanSlice> {
        self.check_level(k)?;
        let m = self.engine.marginal(k);
        let data = Array2::from_shape_fn((self.grid.n_x(), self.grid.n_r()), |(i, jr)| {
            m[i * self.grid.n_r() + jr]
        });
        Ok(PlanSlice::new(
            data,
            "x",
            "r",
            self.grid.xs().to_vec(),
            self.grid.rs().to_vec(),
            k,
        ))
    }

    /// Squared-distance arrays recovered from the stored log-kernels.
    fn cost_arrays(&self) -> (Array2<f64>, Array2<f64>) {
        let time_weight = (self.grid.k_levels() - 1) as f64 / self.grid.t_total();
        let d0 = self.factors.log_xi().mapv(|l| -l * self.factors.eps() / time_weight);
        let d1 = self
            .factors
            .log_xi_close()
            .mapv(|l| -l * self.factors.eps() / self.factors.alpha());
        (d0, d1)
    }

    /// Plan-weighted cost `<C, mu>`, split into its two parts.
    pub fn action(&self) -> ActionBreakdown {
        let (d0, d1) = self.cost_arrays();
        let time_weight = (self.grid.k_levels() - 1) as f64 / self.grid.t_total();
        let mut transport = 0.0;
        for k in 0..self.grid.k_levels() - 1 {
            transport += self.engine.edge_sum(k, &d0);
        }
        ActionBreakdown {
            transport: time_weight * transport,
            coupling: self.factors.alpha() * self.engine.close_sum(&d1),
        }
    }

    /// Plan entropy `-<mu, log mu - 1>`, computed from the log-linear form
    /// of the plan: `E = mass + <C, mu>/eps - sum_k <p_k, M_2[S_k]>`.
    pub fn entropy(&self) -> f64 {
        let mass = self.mass();
        let cost = self.action().total();
        let mut dual_term = 0.0;
        for k in 0..self.grid.k_levels() {
            let m2 = crate::solver::moment(self.grid, &self.engine.marginal(k), 2)
                .expect("marginal has grid length");
            dual_term += self
                .duals
                .level(k)
                .iter()
                .zip(&m2)
                .map(|(p, m)| p * m)
                .sum::<f64>();
        }
        mass + cost / self.factors.eps() - dual_term
    }

    /// Regularized objective `<C, mu> - eps * E(mu)`.
    pub fn objective(&self) -> f64 {
        self.action().total() - self.factors.eps() * self.entropy()
    }

    pub fn mass(&self) -> f64 {
        self.engine.mass()
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }
}

/// Base-to-base transport plan at level `k` (0-based).
pub fn base_transport_plan(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
    k: usize,
) -> Result<PlanSlice> {
    PlanAnalysis::new(factors, grid, duals)?.base_transport_plan(k)
}

/// Cone marginal at level `k` on base x radius axes.
pub fn cone_marginal(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
    k: usize,
) -> Result<PlanSlice> {
    PlanAnalysis::new(factors, grid, duals)?.cone_marginal(k)
}

/// Plan-weighted cost split into transport and coupling parts.
pub fn plan_action(
    factors: &GibbsFactors,
    grid: &Grid,
    duals: &DualPotentials,
) -> Result<ActionBreakdown> {
    Ok(PlanAnalysis::new(factors, grid, duals)?.action())
}

/// Plan entropy `-<mu, log mu - 1>`.
pub fn plan_entropy(factors: &GibbsFactors, grid: &Grid, duals: &DualPotentials) -> Result<f64> {
    Ok(PlanAnalysis::new(factors, grid, duals)?.entropy())
}

/// Discrete pressure `eps * p_k[i] / dt` on the zero-mean gauge, one row
/// per time level. An approximation of the continuous multiplier up to
/// discretization; the normalization pins the dual exponent against the
/// time-integrated pairing, so treat it as diagnostic output.
pub fn extract_pressure(duals: &DualPotentials, grid: &Grid, eps: f64) -> Result<Array2<f64>> {
    if duals.k_levels() != grid.k_levels() || duals.n_x() != grid.n_x() {
        return Err(Error::Shape("duals do not match grid".into()));
    }
    let dt = grid.t_total() / (grid.k_levels() - 1) as f64;
    let fixed = duals.gauge_fixed();
    let mut out = Array2::zeros((grid.k_levels(), grid.n_x()));
    for k in 0..grid.k_levels() {
        for i in 0..grid.n_x() {
            out[[k, i]] = eps * fixed.level(k)[i] / dt;
        }
    }
    Ok(out)
}

/// How deterministic a base transport plan is: 1 minus the mass-weighted
/// mean conditional entropy of its rows, normalized by `ln(columns)`.
/// 1 for permutation-supported plans, 0 for uniform rows. Zero-mass rows
/// are skipped; a plan with no mass (or a single column) counts as fully
/// deterministic.
pub fn determinism_index(plan: &PlanSlice) -> f64 {
    let data = plan.data();
    let cols = data.ncols();
    if cols < 2 {
        return 1.0;
    }
    let norm = (cols as f64).ln();
    let mut weighted_entropy = 0.0;
    let mut total_mass = 0.0;
    for row in data.rows() {
        let mass: f64 = row.sum();
        if mass <= 0.0 {
            continue;
        }
        let mut h = 0.0;
        for &v in row {
            if v > 0.0 {
                let q = v / mass;
                h -= q * q.ln();
            }
        }
        weighted_entropy += mass * h;
        total_mass += mass;
    }
    if total_mass == 0.0 {
        return 1.0;
    }
    1.0 - weighted_entropy / (total_mass * norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryMap;
    use crate::exhaustive::Oracle;
    use crate::gibbs::{build_cost_matrices, build_gibbs};
    use crate::grid::{build_grid, GridConfig};
    use crate::solver::{moment, sinkhorn_solve, SolverOptions};

    fn tiny() -> (Grid, crate::gibbs::CostMatrices, GibbsFactors) {
        let grid = build_grid(&GridConfig {
            n_x: 3,
            n_r: 2,
            r_lo: 0.5,
            r_hi: 1.0,
            k_levels: 3,
            t_total: 1.0,
        })
        .unwrap();
        let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).unwrap();
        let factors = build_gibbs(&costs, &grid, 0.1, 1.0).unwrap();
        (grid, costs, factors)
    }

    fn random_duals(grid: &Grid, seed: u64) -> DualPotentials {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DualPotentials::from_levels(
            (0..grid.k_levels())
                .map(|_| (0..grid.n_x()).map(|_| rng.gen_range(-0.7..0.7)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn level_zero_plan_is_diagonal() {
        let (grid, _, factors) = tiny();
        let duals = random_duals(&grid, 1);
        let plan = base_transport_plan(&factors, &grid, &duals, 0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(plan.data()[[i, j]], 0.0);
                } else {
                    assert!(plan.data()[[i, j]] > 0.0);
                }
            }
        }
        assert_eq!(plan.level(), 0);
        assert!((plan.mass() - plan.data().sum()).abs() < 1e-12 * plan.mass());
    }

    #[test]
    fn plan_row_sums_reproduce_start_distribution() {
        let (grid, _, factors) = tiny();
        let duals = random_duals(&grid, 2);
        let analysis = PlanAnalysis::new(&factors, &grid, &duals).unwrap();
        let start = analysis.base_transport_plan(0).unwrap();
        let start_masses: Vec<f64> = (0..3).map(|i| start.data().row(i).sum()).collect();
        for k in 1..3 {
            let plan = analysis.base_transport_plan(k).unwrap();
            for i in 0..3 {
                let row: f64 = plan.data().row(i).sum();
                assert!(
                    (row - start_masses[i]).abs() < 1e-10 * (1.0 + start_masses[i]),
                    "level {k} row {i}"
                );
            }
        }
    }

    #[test]
    fn cone_marginal_reshapes_marginal_and_matches_moment() {
        let (grid, _, factors) = tiny();
        let duals = random_duals(&grid, 3);
        let analysis = PlanAnalysis::new(&factors, &grid, &duals).unwrap();
        for k in 0..3 {
            let slice = analysis.cone_marginal(k).unwrap();
            let s = crate::solver::marginal_s(&factors, &grid, &duals, k).unwrap();
            let m2 = moment(&grid, &s, 2).unwrap();
            for i in 0..grid.n_x() {
                let weighted: f64 = (0..grid.n_r())
                    .map(|jr| slice.data()[[i, jr]] * grid.rs()[jr] * grid.rs()[jr])
                    .sum();
                assert!((weighted - m2[i]).abs() < 1e-12 * (1.0 + m2[i].abs()));
            }
        }
        // Level 0 lives on the unit-radius row.
        let slice0 = analysis.cone_marginal(0).unwrap();
        for i in 0..grid.n_x() {
            for jr in 0..grid.n_r() {
                if jr != grid.unit_radius_index() {
                    assert_eq!(slice0.data()[[i, jr]], 0.0);
                }
            }
        }
    }

    #[test]
    fn action_and_entropy_match_exhaustive() {
        let (grid, costs, factors) = tiny();
        let oracle = Oracle::new(&grid, &costs, 0.1, 1.0).unwrap();
        let duals = random_duals(&grid, 4);
        let analysis = PlanAnalysis::new(&factors, &grid, &duals).unwrap();

        let got = analysis.action();
        let want = oracle.action_parts(&duals);
        assert!((got.transport - want.transport).abs() < 1e-12 * (1.0 + want.transport));
        assert!((got.coupling - want.coupling).abs() < 1e-12 * (1.0 + want.coupling));

        let e_got = analysis.entropy();
        let e_want = oracle.entropy(&duals);
        assert!((e_got - e_want).abs() < 1e-10 * (1.0 + e_want.abs()), "{e_got} vs {e_want}");

        let o_got = analysis.objective();
        let o_want = oracle.objective(&duals);
        assert!((o_got - o_want).abs() < 1e-10 * (1.0 + o_want.abs()));
    }

    #[test]
    fn entropy_closed_form_for_uniform_kernels() {
        // Enormous eps wipes out the cost: every admissible tuple has
        // weight 1, so E = mass * (1 - ln(mass/count)) with mass = count.
        let (grid, _, factors_small) = tiny();
        let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).unwrap();
        let factors = build_gibbs(&costs, &grid, 1e14, 1e-12).unwrap();
        let duals = DualPotentials::zeros(3, 3);
        let analysis = PlanAnalysis::new(&factors, &grid, &duals).unwrap();
        let count = (grid.n_x() * grid.n_nodes() * grid.n_nodes()) as f64;
        let mass = analysis.mass();
        assert!((mass - count).abs() < 1e-6);
        let want = mass * (1.0 - (mass / count).ln());
        assert!((analysis.entropy() - want).abs() < 1e-6 * want);
        let _ = factors_small;
    }

    #[test]
    fn entropy_decreases_with_regularization() {
        // Node spacing small enough that some diffusion survives even at
        // the smallest regularization; on coarser grids the plan becomes
        // exactly atomic in floating point and the trend saturates.
        let grid = build_grid(&GridConfig {
            n_x: 9,
            n_r: 5,
            r_lo: 0.8,
            r_hi: 1.2,
            k_levels: 3,
            t_total: 1.0,
        })
        .unwrap();
        let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).unwrap();
        let mut previous = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let factors = build_gibbs(&costs, &grid, eps, 1.0).unwrap();
            let options = SolverOptions { tolerance: 1e-8, ..Default::default() };
            let (duals, report) = sinkhorn_solve(&factors, &grid, &options).unwrap();
            assert!(report.converged);
            let e = plan_entropy(&factors, &grid, &duals).unwrap();
            assert!(e < previous, "entropy {e} did not decrease (prev {previous})");
            previous = e;
        }
    }

    #[test]
    fn zero_duals_give_zero_pressure_and_gauge_invariance() {
        let (grid, _, _) = tiny();
        let zeros = DualPotentials::zeros(3, 3);
        let p = extract_pressure(&zeros, &grid, 0.1).unwrap();
        assert!(p.iter().all(|v| *v == 0.0));

        let duals = random_duals(&grid, 5);
        let base = extract_pressure(&duals, &grid, 0.1).unwrap();
        let mut shifted_levels: Vec<Vec<f64>> = duals.levels().to_vec();
        for v in &mut shifted_levels[1] {
            *v += 17.25;
        }
        let shifted =
            extract_pressure(&DualPotentials::from_levels(shifted_levels).unwrap(), &grid, 0.1)
                .unwrap();
        for (a, b) in base.iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-9, "pressure not gauge invariant: {a} vs {b}");
        }
    }

    #[test]
    fn determinism_index_reference_values() {
        let diag = PlanSlice::new(
            Array2::from_diag(&ndarray::Array1::from_vec(vec![0.2, 0.5, 0.3])),
            "x_start",
            "x",
            vec![0.0, 0.5, 1.0],
            vec![0.0, 0.5, 1.0],
            0,
        );
        assert_eq!(determinism_index(&diag), 1.0);

        let uniform = PlanSlice::new(
            Array2::from_elem((4, 4), 0.0625),
            "x_start",
            "x",
            vec![0.0; 4],
            vec![0.0; 4],
            0,
        );
        assert!((determinism_index(&uniform) - 0.0).abs() < 1e-15);

        // Mixed rows: one deterministic, one uniform, equal masses.
        let mixed = PlanSlice::new(
            Array2::from_shape_vec((2, 2), vec![0.5, 0.0, 0.25, 0.25]).unwrap(),
            "x_start",
            "x",
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            0,
        );
        assert!((determinism_index(&mixed) - 0.5).abs() < 1e-15);

        // Zero-mass rows are skipped.
        let with_empty = PlanSlice::new(
            Array2::from_shape_vec((2, 2), vec![0.7, 0.0, 0.0, 0.0]).unwrap(),
            "x_start",
            "x",
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            0,
        );
        assert_eq!(determinism_index(&with_empty), 1.0);
    }
}
