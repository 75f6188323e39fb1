use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::boundary::BoundaryMap;
use crate::exhaustive::Oracle;
use crate::gibbs::{build_cost_matrices, build_gibbs, CostMatrices};
use crate::grid::{build_grid, Grid, GridConfig};

fn tiny_grid() -> Grid {
    build_grid(&GridConfig {
        n_x: 3,
        n_r: 2,
        r_lo: 0.5,
        r_hi: 1.0,
        k_levels: 3,
        t_total: 1.0,
    })
    .unwrap()
}

fn tiny_problem(eps: f64, alpha: f64) -> (Grid, CostMatrices, GibbsFactors) {
    let grid = tiny_grid();
    let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).unwrap();
    let factors = build_gibbs(&costs, &grid, eps, alpha).unwrap();
    (grid, costs, factors)
}

fn random_duals(grid: &Grid, rng: &mut impl Rng, scale: f64) -> DualPotentials {
    let levels = (0..grid.k_levels())
        .map(|_| (0..grid.n_x()).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect();
    DualPotentials::from_levels(levels).unwrap()
}

#[test]
fn zero_dual_marginals_match_exhaustive() {
    let (grid, costs, factors) = tiny_problem(0.1, 1.0);
    let oracle = Oracle::new(&grid, &costs, 0.1, 1.0).unwrap();
    let duals = DualPotentials::zeros(3, 3);
    for k in 0..3 {
        let got = marginal_s(&factors, &grid, &duals, k).unwrap();
        let want = oracle.marginal(&duals, k);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "level {k}: {g} vs {w}");
        }
    }
}

#[test]
fn random_dual_marginals_match_exhaustive() {
    let (grid, costs, factors) = tiny_problem(0.25, 2.0);
    let oracle = Oracle::new(&grid, &costs, 0.25, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let duals = random_duals(&grid, &mut rng, 0.8);
        for k in 0..3 {
            let got = marginal_s(&factors, &grid, &duals, k).unwrap();
            let want = oracle.marginal(&duals, k);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12 * (1.0 + w.abs()));
            }
        }
    }
}

#[test]
fn weighted_kernel_products_match_exhaustive_weights() {
    let (grid, costs, factors) = tiny_problem(0.2, 1.5);
    let oracle = Oracle::new(&grid, &costs, 0.2, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let duals = random_duals(&grid, &mut rng, 0.6);
    let (transitions, closing) = weighted_kernels(&factors, &grid, &duals).unwrap();
    assert_eq!(transitions.len(), 2);

    oracle.for_each_path(&duals, |path, want| {
        let i0 = grid.base_of(path[0]);
        let mut got = transitions[0][[path[0], path[1]]];
        got *= transitions[1][[path[1], path[2]]];
        got *= closing[[path[2], i0]];
        assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
    });
}

#[test]
fn single_level_dual_scales_kernel_rows() {
    // All radii 1 cannot happen on a grid (the ladder is strictly
    // increasing), so check the row-scaling law directly on the r = 1 rows.
    let (grid, _, factors) = tiny_problem(0.3, 1.0);
    let mut duals = DualPotentials::zeros(3, 3);
    let c = 0.7;
    duals.set_level(1, vec![0.0, c, 0.0]);
    let (transitions, _) = weighted_kernels(&factors, &grid, &duals).unwrap();
    let xi = factors.xi();
    let j = grid.node_index(1, grid.unit_radius_index());
    for jn in 0..grid.n_nodes() {
        let want = c.exp() * xi[[j, jn]];
        assert!((transitions[1][[j, jn]] - want).abs() < 1e-14);
    }
}

#[test]
fn total_mass_is_level_independent() {
    let (grid, _, factors) = tiny_problem(0.15, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let duals = random_duals(&grid, &mut rng, 1.0);
    let marginals = all_marginals(&factors, &grid, &duals).unwrap();
    let masses: Vec<f64> = (0..3).map(|k| marginals.row(k).sum()).collect();
    for m in &masses[1..] {
        assert!((m - masses[0]).abs() < 1e-12 * masses[0]);
    }
}

#[test]
fn first_level_marginal_lives_on_unit_slice() {
    let (grid, _, factors) = tiny_problem(0.15, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let duals = random_duals(&grid, &mut rng, 1.0);
    let m0 = marginal_s(&factors, &grid, &duals, 0).unwrap();
    for j in 0..grid.n_nodes() {
        if grid.radius_index_of(j) != grid.unit_radius_index() {
            assert_eq!(m0[j], 0.0);
        }
    }
}

#[test]
fn two_level_chain_with_trivial_closing_kernel() {
    // K = 2 and a vanishing coupling weight: the closing kernel is 1 and the
    // first marginal reduces to the slice-row sums of xi.
    let grid = build_grid(&GridConfig {
        n_x: 3,
        n_r: 2,
        r_lo: 0.5,
        r_hi: 1.0,
        k_levels: 2,
        t_total: 1.0,
    })
    .unwrap();
    let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).unwrap();
    let factors = build_gibbs(&costs, &grid, 0.5, 1e-300).unwrap();
    let duals = DualPotentials::zeros(2, 3);
    let m0 = marginal_s(&factors, &grid, &duals, 0).unwrap();
    let xi = factors.xi();
    for (i, &f) in grid.first_slice_nodes().iter().enumerate() {
        let want: f64 = xi.row(f).sum();
        assert!((m0[grid.first_slice_nodes()[i]] - want).abs() < 1e-12 * want);
        let _ = f;
    }
}

#[test]
fn moment_operator_cases() {
    let grid = build_grid(&GridConfig {
        n_x: 2,
        n_r: 2,
        r_lo: 1.0,
        r_hi: 2.0,
        k_levels: 2,
        t_total: 1.0,
    })
    .unwrap();
    let n = grid.n_nodes() as f64;
    // Zeroth moment: plain per-base sums.
    let values = vec![0.25, 0.5, 0.125, 0.125];
    let m0 = moment(&grid, &values, 0).unwrap();
    assert_eq!(m0, vec![0.75, 0.25]);
    // Mass m at a single node with r = 2 contributes 4m to its base node.
    let mut single = vec![0.0; 4];
    single[grid.node_index(1, 1)] = 0.3;
    let m2 = moment(&grid, &single, 2).unwrap();
    assert_eq!(m2, vec![0.0, 1.2]);
    // Uniform 1/N over radii {1, 2}: every base node gets (1 + 4)/N.
    let uniform = vec![1.0 / n; 4];
    let m2 = moment(&grid, &uniform, 2).unwrap();
    for v in m2 {
        assert!((v - 5.0 / n).abs() < 1e-15);
    }
    assert!(moment(&grid, &uniform, 3).is_err());
    assert!(moment(&grid, &uniform[..3], 2).is_err());
}

#[test]
fn newton_dual_update_examples() {
    // Single positive entry at r = 1: closed form ln(target / B).
    let b = Array2::from_shape_vec((1, 2), vec![0.5, 0.0]).unwrap();
    let p = newton_dual_update(&b, &[1.0, 2.0], 0.25).unwrap();
    assert!((p[0] - 0.5f64.ln()).abs() < 1e-12);

    // With all radii 1, scaling the weights by c shifts every root by
    // exactly -ln(c).
    let b = Array2::from_shape_vec((2, 2), vec![0.3, 0.8, 1.1, 0.2]).unwrap();
    let p0 = newton_dual_update(&b, &[1.0, 1.0], 0.4).unwrap();
    let p1 = newton_dual_update(&b.mapv(|v| 3.0 * v), &[1.0, 1.0], 0.4).unwrap();
    for (a, b) in p0.iter().zip(&p1) {
        assert!((b - (a - 3.0f64.ln())).abs() < 1e-12);
    }

    // Residual bound, checked in the linear domain.
    let radii = [0.5, 1.0, 1.45];
    let rsq: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let b = Array2::from_shape_vec((1, 3), vec![1e-8, 3.0, 40.0]).unwrap();
    let target = 0.0625;
    let p = newton_dual_update(&b, &radii, target).unwrap();
    let f: f64 = b
        .row(0)
        .iter()
        .zip(&rsq)
        .map(|(v, s)| v * (p[0] * s).exp() * s)
        .sum::<f64>()
        - target;
    assert!(f.abs() <= 1e-12 * target);

    // All-zero row is a starved node.
    let b = Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    match newton_dual_update(&b, &[1.0, 2.0], 0.4) {
        Err(Error::StarvedNodes { level: 0, nodes }) => assert_eq!(nodes, vec![1]),
        other => panic!("expected starved nodes, got {other:?}"),
    }
}

#[test]
fn sinkhorn_reaches_feasibility_and_matches_oracle() {
    let (grid, costs, factors) = tiny_problem(0.1, 1.0);
    let options = SolverOptions { tolerance: 1e-10, max_sweeps: 5000, ..Default::default() };
    let (duals, report) = sinkhorn_solve(&factors, &grid, &options).unwrap();
    assert!(report.converged);
    assert!(report.final_violation < 1e-10);
    assert!(!report.log_domain_used);

    // Feasibility: N_x * M_2[S_k] = 1 for every level and node.
    for k in 0..3 {
        let s = marginal_s(&factors, &grid, &duals, k).unwrap();
        for v in moment(&grid, &s, 2).unwrap() {
            assert!((3.0 * v - 1.0).abs() < 1e-9);
        }
    }

    // Independent dual ascent lands on the same fixed point.
    let oracle = Oracle::new(&grid, &costs, 0.1, 1.0).unwrap();
    let (oracle_duals, _, oracle_viol) = oracle.dual_ascent(1e-10, 5000).unwrap();
    assert!(oracle_viol < 1e-10);
    let ours = duals.gauge_fixed();
    let theirs = oracle_duals.gauge_fixed();
    for k in 0..3 {
        for i in 0..3 {
            assert!(
                (ours.level(k)[i] - theirs.level(k)[i]).abs() < 1e-6,
                "dual mismatch at level {k} node {i}"
            );
        }
    }
    for k in 0..3 {
        let got = marginal_s(&factors, &grid, &duals, k).unwrap();
        let want = oracle.marginal(&oracle_duals, k);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8);
        }
    }
}

#[test]
fn dual_objective_base_point_and_ascent() {
    let (grid, _, factors) = tiny_problem(0.1, 1.0);
    let zeros = DualPotentials::zeros(3, 3);
    let obj0 = dual_objective(&factors, &grid, &zeros).unwrap();
    // With zero duals the objective is minus the total kernel mass.
    let m0 = marginal_s(&factors, &grid, &zeros, 0).unwrap();
    let mass: f64 = m0.iter().sum();
    assert!((obj0 + mass).abs() < 1e-12 * mass);

    let options = SolverOptions { tolerance: 1e-9, ..Default::default() };
    let (duals, report) = sinkhorn_solve(&factors, &grid, &options).unwrap();
    for w in report.objective_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-10, "objective decreased: {} -> {}", w[0], w[1]);
    }
    // The recorded head of the history matches a fresh evaluation at the
    // final duals.
    let last = *report.objective_history.last().unwrap();
    let fresh = dual_objective(&factors, &grid, &duals).unwrap();
    assert!((last - fresh).abs() < 1e-9 * (1.0 + fresh.abs()));
}

#[test]
fn objective_increases_after_single_block_update() {
    let (grid, _, factors) = tiny_problem(0.2, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let duals = random_duals(&grid, &mut rng, 0.5);
        let before = dual_objective(&factors, &grid, &duals).unwrap();
        // Exact block update at one level via the solver's own machinery:
        // one full sweep only improves, and its first level update alone
        // must too. Use a single-sweep solve seeded at `duals` by running
        // the update manually through newton_dual_update on B at level 1.
        let k = 1;
        let s = marginal_s(&factors, &grid, &duals, k).unwrap();
        // Remove the level's own factor to get B, reshaped per base node.
        let mut b = Array2::zeros((grid.n_x(), grid.n_r()));
        for j in 0..grid.n_nodes() {
            let (i, jr) = (grid.base_of(j), grid.radius_index_of(j));
            let r = grid.radius_of(j);
            b[[i, jr]] = s[j] / (duals.level(k)[i] * r * r).exp();
        }
        let p = newton_dual_update(&b, grid.rs(), 1.0 / grid.n_x() as f64).unwrap();
        let mut updated = duals.clone();
        updated.set_level(k, p);
        let after = dual_objective(&factors, &grid, &updated).unwrap();
        assert!(after >= before - 1e-10, "{before} -> {after}");
    }
}

#[test]
fn log_and_dense_modes_agree() {
    let (grid, _, factors) = tiny_problem(0.1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let duals = random_duals(&grid, &mut rng, 0.7);

    let dense = SolverOptions { log_domain: LogDomainMode::Off, tolerance: 1e-10, ..Default::default() };
    let logm = SolverOptions { log_domain: LogDomainMode::On, tolerance: 1e-10, ..Default::default() };
    let (d_dense, r_dense) = sinkhorn_solve(&factors, &grid, &dense).unwrap();
    let (d_log, r_log) = sinkhorn_solve(&factors, &grid, &logm).unwrap();
    assert!(!r_dense.log_domain_used && r_log.log_domain_used);
    // Raw duals may differ along the nearly flat per-level-constant
    // subspace; the zero-mean gauge removes exactly that freedom.
    let (fd, fl) = (d_dense.gauge_fixed(), d_log.gauge_fixed());
    for k in 0..3 {
        for i in 0..3 {
            assert!((fd.level(k)[i] - fl.level(k)[i]).abs() < 1e-8);
        }
    }
    // And the marginals agree between modes at fixed duals.
    for k in 0..3 {
        let md = marginal_s(&factors, &grid, &d_dense, k).unwrap();
        let ml = marginal_s(&factors, &grid, &d_log, k).unwrap();
        for (a, b) in md.iter().zip(&ml) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
    let _ = duals;
}

#[test]
fn auto_mode_switches_to_log_on_underflow() {
    // eps small enough that exp(-(K-1)/(T eps) d^2) underflows to exact
    // zero for far-apart nodes, but above the fixed auto threshold, so the
    // switch happens through the underflow detection.
    let (grid, _, factors) = tiny_problem(2e-3, 1.0);
    assert!(factors.xi().iter().any(|v| *v == 0.0));

    let auto = SolverOptions { tolerance: 1e-8, ..Default::default() };
    let (_, report) = sinkhorn_solve(&factors, &grid, &auto).unwrap();
    assert!(report.log_domain_used);
    assert!(report.converged);

    let off = SolverOptions { log_domain: LogDomainMode::Off, ..Default::default() };
    assert!(matches!(sinkhorn_solve(&factors, &grid, &off), Err(Error::KernelUnderflow)));
}

#[test]
fn small_eps_auto_prefers_log_domain() {
    let (grid, _, factors) = tiny_problem(5e-4, 1.0);
    let options = SolverOptions { tolerance: 1e-8, ..Default::default() };
    let (duals, report) = sinkhorn_solve(&factors, &grid, &options).unwrap();
    assert!(report.log_domain_used);
    assert!(report.converged);
    let viol = constraint_violation(&factors, &grid, &duals).unwrap();
    assert!(viol < 1e-8);
}

#[test]
fn gauge_fixing_zeroes_level_means() {
    let duals = DualPotentials::from_levels(vec![vec![1.0, 2.0, 3.0], vec![-4.0, 0.0, 1.0]])
        .unwrap();
    let fixed = duals.gauge_fixed();
    for k in 0..2 {
        let mean: f64 = fixed.level(k).iter().sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15);
    }
    assert!((fixed.level(0)[1] - 0.0).abs() < 1e-15);
}
