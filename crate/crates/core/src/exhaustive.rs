//! Brute-force reference computations on tiny grids.
//!
//! Everything here enumerates the full plan tensor over all
//! `N_x * N^(K-1)` index tuples and works directly from the squared
//! distance arrays: kernels, weights, marginals, moments, action, entropy
//! and the dual ascent (with plain bisection updates) are all recomputed
//! from first principles, independently of the message-passing solver they
//! are used to cross-check. Only feasible for very small problems; the
//! constructor enforces a tuple-count cap.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gibbs::CostMatrices;
use crate::grid::Grid;
use crate::solver::DualPotentials;

const MAX_TUPLES: u128 = 4_000_000;
const BISECT_REL_TOL: f64 = 1e-13;

/// Split of the plan cost into transport and coupling-penalty parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionParts {
    pub transport: f64,
    pub coupling: f64,
}

impl ActionParts {
    pub fn total(&self) -> f64 {
        self.transport + self.coupling
    }
}

pub struct Oracle<'a> {
    grid: &'a Grid,
    d0: &'a Array2<f64>,
    d1: &'a Array2<f64>,
    eps: f64,
    alpha: f64,
    time_weight: f64,
    slice: Vec<usize>,
    tuples: usize,
}

impl<'a> Oracle<'a> {
    pub fn new(grid: &'a Grid, costs: &'a CostMatrices, eps: f64, alpha: f64) -> Result<Self> {
        let n = grid.n_nodes() as u128;
        let count = grid.n_x() as u128 * n.pow(grid.k_levels() as u32 - 1);
        if count > MAX_TUPLES {
            return Err(Error::ExhaustiveTooLarge(count));
        }
        Ok(Self {
            grid,
            d0: costs.d0(),
            d1: costs.d1(),
            eps,
            alpha,
            time_weight: (grid.k_levels() - 1) as f64 / grid.t_total(),
            slice: grid.first_slice_nodes(),
            tuples: count as usize,
        })
    }

    pub fn tuple_count(&self) -> usize {
        self.tuples
    }

    fn dual_factor(&self, duals: &DualPotentials, k: usize, node: usize) -> f64 {
        let r = self.grid.radius_of(node);
        (duals.level(k)[self.grid.base_of(node)] * r * r).exp()
    }

    /// Plan weight of one path of node indices (length `K`, first entry on
    /// the radius-1 slice).
    pub fn weight(&self, duals: &DualPotentials, path: &[usize]) -> f64 {
        debug_assert_eq!(path.len(), self.grid.k_levels());
        let mut cost = 0.0;
        for w in path.windows(2) {
            cost += self.time_weight * self.d0[[w[0], w[1]]];
        }
        cost += self.alpha * self.d1[[path[path.len() - 1], path[0]]];
        let mut exponent = -cost / self.eps;
        for (k, &node) in path.iter().enumerate() {
            let r = self.grid.radius_of(node);
            exponent += duals.level(k)[self.grid.base_of(node)] * r * r;
        }
        exponent.exp()
    }

    /// Visit every admissible path with its weight.
    pub fn for_each_path(&self, duals: &DualPotentials, mut f: impl FnMut(&[usize], f64)) {
        let k_levels = self.grid.k_levels();
        let n = self.grid.n_nodes();
        let mut path = vec![0usize; k_levels];
        for &first in &self.slice {
            path[0] = first;
            for slot in path.iter_mut().skip(1) {
                *slot = 0;
            }
            loop {
                f(&path, self.weight(duals, &path));
                // Odometer over levels 1..K-1.
                let mut level = k_levels - 1;
                loop {
                    path[level] += 1;
                    if path[level] < n {
                        break;
                    }
                    path[level] = 0;
                    if level == 1 {
                        break;
                    }
                    level -= 1;
                }
                if level == 1 && path[1] == 0 {
                    break;
                }
            }
        }
    }

    /// Fully materialized tensor in odometer order (first slice index
    /// outermost, then each free level).
    pub fn tensor(&self, duals: &DualPotentials) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.tuples);
        self.for_each_path(duals, |_, w| out.push(w));
        out
    }

    pub fn mass(&self, duals: &DualPotentials) -> f64 {
        let mut total = 0.0;
        self.for_each_path(duals, |_, w| total += w);
        total
    }

    pub fn marginal(&self, duals: &DualPotentials, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_nodes()];
        self.for_each_path(duals, |path, w| out[path[k]] += w);
        out
    }

    /// Radial second moment of a node vector, per base node.
    pub fn moment2(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_x()];
        for (j, v) in values.iter().enumerate() {
            let r = self.grid.radius_of(j);
            out[self.grid.base_of(j)] += r * r * v;
        }
        out
    }

    pub fn action_parts(&self, duals: &DualPotentials) -> ActionParts {
        let mut transport = 0.0;
        let mut coupling = 0.0;
        self.for_each_path(duals, |path, w| {
            let mut d = 0.0;
            for pair in path.windows(2) {
                d += self.d0[[pair[0], pair[1]]];
            }
            transport += w * self.time_weight * d;
            coupling += w * self.alpha * self.d1[[path[path.len() - 1], path[0]]];
        });
        ActionParts { transport, coupling }
    }

    /// Plan entropy `-<mu, log mu - 1>`.
    pub fn entropy(&self, duals: &DualPotentials) -> f64 {
        let mut e = 0.0;
        self.for_each_path(duals, |_, w| {
            if w > 0.0 {
                e -= w * (w.ln() - 1.0);
            }
        });
        e
    }

    /// Regularized primal objective `<C, mu> - eps * E(mu)`.
    pub fn objective(&self, duals: &DualPotentials) -> f64 {
        self.action_parts(duals).total() - self.eps * self.entropy(duals)
    }

    /// Constraint violation `max_{k,i} |N_x * M_2[S_k]_i - 1|`.
    pub fn violation(&self, duals: &DualPotentials) -> f64 {
        let n_x = self.grid.n_x() as f64;
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.k_levels() {
            let m2 = self.moment2(&self.marginal(duals, k));
            for v in m2 {
                worst = worst.max((n_x * v - 1.0).abs());
            }
        }
        worst
    }

    /// Direct dual ascent: sweep the levels, rebuilding each level's `B`
    /// from the materialized tensor and solving every scalar constraint by
    /// bisection; each sweep finishes with an exact Newton step over
    /// per-level constant shifts (the nearly flat subspace of the dual;
    /// gradient, pair-moment Hessian and step acceptance are all computed
    /// by full enumeration). Returns the duals, sweep count and final
    /// violation.
    pub fn dual_ascent(
        &self,
        tolerance: f64,
        max_sweeps: usize,
    ) -> Result<(DualPotentials, usize, f64)> {
        let n_x = self.grid.n_x();
        let n_r = self.grid.n_r();
        let rsq = self.grid.radii_sq();
        let target = 1.0 / n_x as f64;
        let mut duals = DualPotentials::zeros(self.grid.k_levels(), n_x);
        let mut sweeps = 0;
        for _ in 0..max_sweeps {
            sweeps += 1;
            for k in 0..self.grid.k_levels() {
                let mut b = vec![vec![0.0; n_r]; n_x];
                self.for_each_path(&duals, |path, w| {
                    let node = path[k];
                    b[self.grid.base_of(node)][self.grid.radius_index_of(node)] +=
                        w / self.dual_factor(&duals, k, node);
                });
                let mut row = duals.level(k).to_vec();
                for (i, b_row) in b.iter().enumerate() {
                    row[i] = bisect_moment_root(b_row, &rsq, target)?;
                }
                duals.set_level(k, row);
            }
            duals = self.rebalance_levels(&duals)?;
            if self.violation(&duals) < tolerance {
                break;
            }
        }
        let final_violation = self.violation(&duals);
        Ok((duals, sweeps, final_violation))
    }

    /// One exact Newton ascent step over per-level constant dual shifts,
    /// with everything enumerated: level moments `m_k = sum w r_k^2`, pair
    /// moments `sum w r_k^2 r_l^2`, and a backtracking acceptance test on
    /// `sum_k c_k - mass`.
    fn rebalance_levels(&self, duals: &DualPotentials) -> Result<DualPotentials> {
        let k_levels = self.grid.k_levels();
        let mut mass = 0.0;
        let mut level_m2 = vec![0.0; k_levels];
        let mut pair = vec![0.0; k_levels * k_levels];
        self.for_each_path(duals, |path, w| {
            mass += w;
            let mut r2 = Vec::with_capacity(k_levels);
            for &node in path {
                let r = self.grid.radius_of(node);
                r2.push(r * r);
            }
            for k in 0..k_levels {
                level_m2[k] += w * r2[k];
                for l in 0..k_levels {
                    pair[k * k_levels + l] += w * r2[k] * r2[l];
                }
            }
        });
        let grad: Vec<f64> = level_m2.iter().map(|m| 1.0 - m).collect();
        if grad.iter().all(|g| g.abs() < 1e-15) {
            return Ok(duals.clone());
        }
        let ridge = 1e-12
            * (0..k_levels)
                .map(|k| pair[k * k_levels + k])
                .fold(1.0f64, f64::max);
        for k in 0..k_levels {
            pair[k * k_levels + k] += ridge;
        }
        let Some(direction) = solve_small(pair, grad, k_levels) else {
            return Ok(duals.clone());
        };

        let mut t = 1.0;
        for _ in 0..24 {
            let mut levels = duals.levels().to_vec();
            for (level, d) in levels.iter_mut().zip(&direction) {
                for v in level.iter_mut() {
                    *v += t * d;
                }
            }
            let candidate = DualPotentials::from_levels(levels)?;
            let gain = t * direction.iter().sum::<f64>() - (self.mass(&candidate) - mass);
            if gain >= 0.0 {
                return Ok(candidate);
            }
            t *= 0.5;
        }
        Ok(duals.clone())
    }
}

/// Gaussian elimination with partial pivoting (row-major `n x n`).
fn solve_small(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
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

/// Bisection for `sum_j b_j exp(p r_j^2) r_j^2 = target` (increasing in `p`).
fn bisect_moment_root(b: &[f64], rsq: &[f64], target: f64) -> Result<f64> {
    let f = |p: f64| -> f64 {
        b.iter().zip(rsq).map(|(b, s)| b * (p * s).exp() * s).sum::<f64>() - target
    };
    if b.iter().all(|v| *v == 0.0) {
        return Err(Error::RootSolve("all-zero bisection row".into()));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(Error::RootSolve("bisection bracket ran away downward".into()));
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::RootSolve("bisection bracket ran away upward".into()));
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..300 {
        let v = f(mid);
        if v.abs() <= BISECT_REL_TOL * target {
            return Ok(mid);
        }
        if v > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = 0.5 * (lo + hi);
    }
    Ok(mid)
}
