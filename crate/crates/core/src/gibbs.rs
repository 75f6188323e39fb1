//! Cost arrays and Gibbs kernels for the regularized cycle problem.
//!
//! The cost of a discrete path `(j_1, ..., j_K)` splits into a transport
//! part, `(K-1)/T` times the sum of squared cone distances between
//! consecutive nodes, and a terminal coupling penalty,
//! `alpha * d(z_{j_K}, [h(x_{j_1}), sqrt(|Jac h|)])^2`. Only two `N x N`
//! arrays are ever stored: `D0` with all pairwise squared distances and
//! `D1` with squared distances to the mapped endpoints. The corresponding
//! Gibbs kernels are entrywise exponentials of the scaled negative costs;
//! they are kept in log form so extreme regularization strengths stay
//! representable, and exponentiated only when the dense solver mode asks
//! for them.

use ndarray::Array2;
use rayon::prelude::*;

use crate::boundary::BoundaryMap;
use crate::cone::{cone_distance_sq, ConePoint};
use crate::error::Result;
use crate::grid::Grid;

/// Squared cone distances between grid nodes (`d0`) and from grid nodes to
/// the mapped endpoint targets (`d1`).
#[derive(Debug, Clone)]
pub struct CostMatrices {
    d0: Array2<f64>,
    d1: Array2<f64>,
}

impl CostMatrices {
    pub fn d0(&self) -> &Array2<f64> {
        &self.d0
    }

    /// `d1[[i, j]]` is the squared distance from node `i` to the image of
    /// node `j`'s base point under the boundary map.
    pub fn d1(&self) -> &Array2<f64> {
        &self.d1
    }
}

/// Build the two cost arrays for a grid and boundary map.
///
/// The mapped radius `sqrt(|Jac h|)` is used as-is even when it falls
/// outside the radial grid range; that situation is only reported (the
/// terminal coupling is enforced softly through its penalty weight, so an
/// off-grid target is meaningful).
pub fn build_cost_matrices(grid: &Grid, map: &BoundaryMap) -> Result<CostMatrices> {
    let n = grid.n_nodes();
    let points: Vec<ConePoint> = (0..n).map(|j| grid.point(j)).collect();

    let mut targets = Vec::with_capacity(grid.n_x());
    for i in 0..grid.n_x() {
        let (h, jac) = map.eval(grid.xs()[i])?;
        let r = jac.sqrt();
        if r < grid.rs()[0] || r > *grid.rs().last().unwrap() {
            log::warn!(
                "mapped radius sqrt(|Jac h|) = {r:.6} at base node {i} leaves the radial grid range [{}, {}]",
                grid.rs()[0],
                grid.rs().last().unwrap()
            );
        }
        targets.push(ConePoint::new(h, r)?);
    }

    let mut d0 = Array2::zeros((n, n));
    let mut d1 = Array2::zeros((n, n));
    d0.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .zip(d1.axis_iter_mut(ndarray::Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(i, (mut row0, mut row1))| {
            for j in 0..n {
                row0[j] = cone_distance_sq(&points[i], &points[j]);
                row1[j] = cone_distance_sq(&points[i], &targets[grid.base_of(j)]);
            }
        });

    Ok(CostMatrices { d0, d1 })
}

/// Gibbs kernels of the regularized problem, stored in log form.
///
/// `xi = exp(-(K-1)/(T eps) * D0)` is the transition kernel between
/// consecutive time levels; `xi_close = exp(-(alpha/eps) * D1)` closes the
/// cycle between the last level and the (radius-1 restricted) first level.
#[derive(Debug, Clone)]
pub struct GibbsFactors {
    log_xi: Array2<f64>,
    log_xi_close: Array2<f64>,
    /// Flattened node indices of the radius-1 slice; the first path index
    /// is restricted to these nodes.
    first_slice: Vec<usize>,
    eps: f64,
    alpha: f64,
}

impl GibbsFactors {
    pub fn log_xi(&self) -> &Array2<f64> {
        &self.log_xi
    }

    pub fn log_xi_close(&self) -> &Array2<f64> {
        &self.log_xi_close
    }

    pub fn first_slice(&self) -> &[usize] {
        &self.first_slice
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Dense transition kernel. Entries may underflow to zero for very
    /// small regularization; dense-mode callers must check for that.
    pub fn xi(&self) -> Array2<f64> {
        self.log_xi.mapv(f64::exp)
    }

    /// Dense cycle-closing kernel.
    pub fn xi_close(&self) -> Array2<f64> {
        self.log_xi_close.mapv(f64::exp)
    }
}

/// Assemble the Gibbs kernels from costs and regularization parameters.
pub fn build_gibbs(costs: &CostMatrices, grid: &Grid, eps: f64, alpha: f64) -> Result<GibbsFactors> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(crate::error::Error::GridConfig(format!(
            "regularization eps must be positive, got {eps}"
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(crate::error::Error::GridConfig(format!(
            "coupling weight alpha must be positive, got {alpha}"
        )));
    }
    let time_weight = (grid.k_levels() - 1) as f64 / grid.t_total();
    let log_xi = costs.d0().mapv(|d| -time_weight / eps * d);
    let log_xi_close = costs.d1().mapv(|d| -alpha / eps * d);
    Ok(GibbsFactors {
        log_xi,
        log_xi_close,
        first_slice: grid.first_slice_nodes(),
        eps,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};

    fn small_grid() -> Grid {
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

    #[test]
    fn d0_symmetric_zero_diagonal() {
        let g = small_grid();
        let c = build_cost_matrices(&g, &BoundaryMap::Identity).unwrap();
        let n = g.n_nodes();
        for i in 0..n {
            assert_eq!(c.d0()[[i, i]], 0.0);
            for j in 0..n {
                assert_eq!(c.d0()[[i, j]], c.d0()[[j, i]]);
                assert!(c.d0()[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn identity_map_targets_unit_radius() {
        let g = small_grid();
        let c = build_cost_matrices(&g, &BoundaryMap::Identity).unwrap();
        for i in 0..g.n_nodes() {
            for j in 0..g.n_nodes() {
                let target = ConePoint::new(g.xs()[g.base_of(j)], 1.0).unwrap();
                let want = cone_distance_sq(&g.point(i), &target);
                assert_eq!(c.d1()[[i, j]], want);
            }
        }
    }

    #[test]
    fn peakon_target_radius_is_sqrt_jacobian() {
        let g = build_grid(&GridConfig {
            n_x: 5,
            n_r: 3,
            r_lo: 0.55,
            r_hi: 1.45,
            k_levels: 4,
            t_total: 1.0,
        })
        .unwrap();
        let c = build_cost_matrices(&g, &BoundaryMap::peakon()).unwrap();
        // Base node 1 sits at x = 0.25; its image is [0.35, sqrt(1.4)].
        let target = ConePoint::new(0.35, 1.4f64.sqrt()).unwrap();
        assert!((target.r() - 1.18322).abs() < 1e-5);
        let j = g.node_index(1, 0);
        for i in 0..g.n_nodes() {
            let want = cone_distance_sq(&g.point(i), &target);
            assert!((c.d1()[[i, j]] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn radial_scaling_scales_d0_quadratically() {
        let lo = build_grid(&GridConfig {
            n_x: 3,
            n_r: 3,
            r_lo: 0.5,
            r_hi: 1.5,
            k_levels: 3,
            t_total: 1.0,
        })
        .unwrap();
        let hi = build_grid(&GridConfig {
            n_x: 3,
            n_r: 3,
            r_lo: 1.0,
            r_hi: 3.0,
            k_levels: 3,
            t_total: 1.0,
        })
        .unwrap();
        // Same ladder scaled by 2 (the snapped node moves, so compare only
        // node pairs whose radii are exactly doubled).
        let c_lo = build_cost_matrices(&lo, &BoundaryMap::Identity).unwrap();
        let c_hi = build_cost_matrices(&hi, &BoundaryMap::Identity).unwrap();
        for (i_lo, i_hi) in [(0usize, 0usize), (2, 2)] {
            for (j_lo, j_hi) in [(0usize, 0usize), (2, 2)] {
                for bi in 0..3 {
                    for bj in 0..3 {
                        let a = c_lo.d0()[[lo.node_index(bi, i_lo), lo.node_index(bj, j_lo)]];
                        let b = c_hi.d0()[[hi.node_index(bi, i_hi), hi.node_index(bj, j_hi)]];
                        assert!((b - 4.0 * a).abs() <= 1e-12 * (1.0 + b.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn gibbs_diagonal_and_limits() {
        let g = small_grid();
        let c = build_cost_matrices(&g, &BoundaryMap::Identity).unwrap();
        let f = build_gibbs(&c, &g, 0.1, 1.0).unwrap();
        let xi = f.xi();
        for i in 0..g.n_nodes() {
            assert_eq!(xi[[i, i]], 1.0);
        }
        assert!(xi.iter().all(|v| *v > 0.0 && *v <= 1.0));
        // Vanishing cost influence: eps -> infinity sends every entry to 1.
        let f_inf = build_gibbs(&c, &g, 1e12, 1.0).unwrap();
        assert!(f_inf.xi().iter().all(|v| (*v - 1.0).abs() < 1e-9));
        assert!(f_inf.xi_close().iter().all(|v| (*v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn kernel_exponent_scaling() {
        // K = 35, T = 1, eps = 5e-4, alpha = 40 gives coefficients
        // (K-1)/(T eps) = 68000 and alpha/eps = 80000.
        let g = build_grid(&GridConfig {
            n_x: 3,
            n_r: 3,
            r_lo: 0.55,
            r_hi: 1.45,
            k_levels: 35,
            t_total: 1.0,
        })
        .unwrap();
        let c = build_cost_matrices(&g, &BoundaryMap::peakon()).unwrap();
        let f = build_gibbs(&c, &g, 5e-4, 40.0).unwrap();
        for i in 0..g.n_nodes() {
            for j in 0..g.n_nodes() {
                assert!((f.log_xi()[[i, j]] + 68000.0 * c.d0()[[i, j]]).abs() < 1e-6);
                assert!((f.log_xi_close()[[i, j]] + 80000.0 * c.d1()[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = small_grid();
        let c = build_cost_matrices(&g, &BoundaryMap::Identity).unwrap();
        assert!(build_gibbs(&c, &g, 0.0, 1.0).is_err());
        assert!(build_gibbs(&c, &g, 0.1, -1.0).is_err());
    }
}
