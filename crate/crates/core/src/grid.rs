//! Tensor discretization of the time-dependent problem on the cone.
//!
//! The cone section `[0,1] x [r_lo, r_hi]` is sampled on `N_x` uniform base
//! nodes and `N_r` uniform radii, one of which is snapped to exactly 1 so
//! the initial-time slice (all paths start at radius 1) is representable on
//! the grid. A flattened cone node index `j` decomposes as
//! `j = base_index * n_r + radius_index`.

use crate::cone::ConePoint;
use crate::error::{Error, Result};

/// Parameters for [`build_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub n_x: usize,
    pub n_r: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    /// Number of time levels (at least 2).
    pub k_levels: usize,
    pub t_total: f64,
}

/// Discretization: base nodes, radius ladder, time ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    xs: Vec<f64>,
    rs: Vec<f64>,
    ts: Vec<f64>,
    unit_radius_index: usize,
}

impl Grid {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn rs(&self) -> &[f64] {
        &self.rs
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    /// Index `j` in the radius ladder with `rs[j] == 1` exactly.
    pub fn unit_radius_index(&self) -> usize {
        self.unit_radius_index
    }

    pub fn n_x(&self) -> usize {
        self.xs.len()
    }

    pub fn n_r(&self) -> usize {
        self.rs.len()
    }

    pub fn k_levels(&self) -> usize {
        self.ts.len()
    }

    pub fn t_total(&self) -> f64 {
        *self.ts.last().expect("grid has at least two time levels")
    }

    /// Total number of cone nodes `N = N_x * N_r`.
    pub fn n_nodes(&self) -> usize {
        self.xs.len() * self.rs.len()
    }

    pub fn node_index(&self, base: usize, radius: usize) -> usize {
        debug_assert!(base < self.n_x() && radius < self.n_r());
        base * self.n_r() + radius
    }

    /// Base projection of a flattened node index.
    pub fn base_of(&self, node: usize) -> usize {
        node / self.n_r()
    }

    /// Radius-ladder projection of a flattened node index.
    pub fn radius_index_of(&self, node: usize) -> usize {
        node % self.n_r()
    }

    pub fn radius_of(&self, node: usize) -> f64 {
        self.rs[self.radius_index_of(node)]
    }

    pub fn point(&self, node: usize) -> ConePoint {
        ConePoint::new(self.xs[self.base_of(node)], self.radius_of(node))
            .expect("grid nodes are valid cone points")
    }

    /// Flattened node indices of the radius-1 slice, one per base node.
    /// The first time level of any admissible plan is supported here.
    pub fn first_slice_nodes(&self) -> Vec<usize> {
        (0..self.n_x())
            .map(|i| self.node_index(i, self.unit_radius_index))
            .collect()
    }

    /// Squared radii indexed by the radius ladder.
    pub fn radii_sq(&self) -> Vec<f64> {
        self.rs.iter().map(|r| r * r).collect()
    }
}

/// Build a uniform grid, snapping the radius node nearest to 1 to exactly 1.
pub fn build_grid(config: &GridConfig) -> Result<Grid> {
    let GridConfig { n_x, n_r, r_lo, r_hi, k_levels, t_total } = *config;
    if n_x < 2 || n_r < 2 {
        return Err(Error::GridConfig(format!(
            "need at least 2 base nodes and 2 radii, got {n_x} x {n_r}"
        )));
    }
    if k_levels < 2 {
        return Err(Error::GridConfig(format!("need at least 2 time levels, got {k_levels}")));
    }
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(Error::GridConfig(format!("total time must be positive, got {t_total}")));
    }
    if !(r_lo > 0.0) || !r_lo.is_finite() || !r_hi.is_finite() || r_lo >= r_hi {
        return Err(Error::GridConfig(format!(
            "radial bounds must satisfy 0 < r_lo < r_hi, got [{r_lo}, {r_hi}]"
        )));
    }
    if r_lo > 1.0 || r_hi < 1.0 {
        return Err(Error::GridConfig(format!(
            "radius 1 must lie inside [{r_lo}, {r_hi}] so the unit slice exists"
        )));
    }

    let xs: Vec<f64> = (0..n_x).map(|i| i as f64 / (n_x - 1) as f64).collect();
    let mut rs: Vec<f64> = (0..n_r)
        .map(|j| r_lo + (r_hi - r_lo) * j as f64 / (n_r - 1) as f64)
        .collect();
    let unit_radius_index = rs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (**a - 1.0).abs().partial_cmp(&(**b - 1.0).abs()).expect("finite radii")
        })
        .map(|(j, _)| j)
        .expect("nonempty ladder");
    // Snapping moves the node by at most half a step, which cannot reorder
    // the ladder.
    rs[unit_radius_index] = 1.0;
    debug_assert!(rs.windows(2).all(|w| w[0] < w[1]));

    let ts: Vec<f64> = (0..k_levels)
        .map(|k| t_total * k as f64 / (k_levels - 1) as f64)
        .collect();

    Ok(Grid { xs, rs, ts, unit_radius_index })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_experiment_grid() {
        let g = build_grid(&GridConfig {
            n_x: 40,
            n_r: 41,
            r_lo: 0.55,
            r_hi: 1.45,
            k_levels: 35,
            t_total: 1.0,
        })
        .unwrap();
        assert_eq!(g.n_nodes(), 40 * 41);
        assert_eq!(g.unit_radius_index(), 20);
        assert_eq!(g.rs()[20], 1.0);
        assert_eq!(g.ts().len(), 35);
        assert_eq!(g.t_total(), 1.0);
    }

    #[test]
    fn minimal_grid() {
        let g = build_grid(&GridConfig {
            n_x: 2,
            n_r: 2,
            r_lo: 1.0,
            r_hi: 2.0,
            k_levels: 2,
            t_total: 1.0,
        })
        .unwrap();
        assert_eq!(g.unit_radius_index(), 0);
        assert_eq!(g.rs(), &[1.0, 2.0]);
        assert_eq!(g.xs(), &[0.0, 1.0]);
    }

    #[test]
    fn oracle_grid() {
        let g = build_grid(&GridConfig {
            n_x: 3,
            n_r: 2,
            r_lo: 0.5,
            r_hi: 1.0,
            k_levels: 3,
            t_total: 1.0,
        })
        .unwrap();
        assert_eq!(g.unit_radius_index(), 1);
        assert_eq!(g.rs(), &[0.5, 1.0]);
        assert_eq!(g.first_slice_nodes(), vec![1, 3, 5]);
    }

    #[test]
    fn node_index_roundtrip() {
        let g = build_grid(&GridConfig {
            n_x: 4,
            n_r: 3,
            r_lo: 0.5,
            r_hi: 1.5,
            k_levels: 3,
            t_total: 2.0,
        })
        .unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let node = g.node_index(i, j);
                assert_eq!(g.base_of(node), i);
                assert_eq!(g.radius_index_of(node), j);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let base = GridConfig {
            n_x: 3,
            n_r: 3,
            r_lo: 0.5,
            r_hi: 1.5,
            k_levels: 3,
            t_total: 1.0,
        };
        assert!(build_grid(&GridConfig { n_x: 1, ..base }).is_err());
        assert!(build_grid(&GridConfig { r_lo: 0.0, ..base }).is_err());
        assert!(build_grid(&GridConfig { r_lo: 1.5, r_hi: 0.5, ..base }).is_err());
        assert!(build_grid(&GridConfig { r_lo: 1.1, r_hi: 1.5, ..base }).is_err());
        assert!(build_grid(&GridConfig { r_hi: 0.9, ..base }).is_err());
        assert!(build_grid(&GridConfig { k_levels: 1, ..base }).is_err());
        assert!(build_grid(&GridConfig { t_total: 0.0, ..base }).is_err());
    }
}
