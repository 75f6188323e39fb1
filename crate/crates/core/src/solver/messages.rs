//! Chain message passing over the time cycle.
//!
//! The implied plan factorizes along time levels `0..K-1` as
//!
//! ```text
//! mu(j_0, ..., j_{K-1}) = a_0(j_0) xi[j_0, j_1] a_1(j_1) ... xi[j_{K-2}, j_{K-1}]
//!                         a_{K-1}(j_{K-1}) xi_close[j_{K-1}, j_0]
//! ```
//!
//! with `j_0` restricted to the radius-1 slice (so it is determined by a
//! base index) and `a_k(j) = exp(p_k[base(j)] * r_j^2)`. Conditioning on
//! `j_0` turns the cycle into `N_x` independent chains: prefix products
//! `fwd_k` (`N_x x N`) run forward, suffix products `bwd_k` (`N x N_x`,
//! ending in the cycle-closing kernel) run backward, and every marginal or
//! pairwise sum contracts one prefix against one suffix. The full tensor is
//! never materialized.
//!
//! Two engines share this structure: a dense one working on linear values
//! (fast, but kernels must not underflow) and a log-domain one replacing
//! products with sums and sums with log-sum-exp (stable for small
//! regularization). Either way, per-entry reductions are sequential, so
//! results are bitwise reproducible regardless of thread count.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::gibbs::GibbsFactors;
use crate::grid::Grid;
use crate::solver::DualPotentials;

/// Regularization strength at or below which auto mode prefers log-domain
/// messages outright.
pub(crate) const AUTO_LOG_EPS: f64 = 1e-3;

pub(crate) trait MessageEngine: Send {
    fn k_levels(&self) -> usize;
    /// Rebuild all suffix messages for the given duals.
    fn backward(&mut self, duals: &DualPotentials) -> Result<()>;
    /// Restart the forward recursion at level 0.
    fn forward_reset(&mut self);
    /// `log B` at the cursor level, shape `N_x x N_r`: the marginal with the
    /// cursor level's own dual factor removed. Entries may be `-inf`.
    fn b_log(&self) -> Array2<f64>;
    /// Fold the cursor level's dual row into the prefix and advance.
    fn advance(&mut self, p_level: &[f64]) -> Result<()>;
    /// Total plan mass; valid once the cursor has passed the last level.
    fn mass(&self) -> f64;

    /// Convenience: full forward pass with fixed duals (after `backward`,
    /// the per-level queries below become valid).
    fn forward_all(&mut self, duals: &DualPotentials) -> Result<()> {
        self.forward_reset();
        for k in 0..self.k_levels() {
            self.advance(duals.level(k))?;
        }
        Ok(())
    }

    /// Marginal of the plan at level `k` (length `N`; level 0 is supported
    /// on the radius-1 slice only).
    fn marginal(&self, k: usize) -> Vec<f64>;
    /// Mass arriving at base node pairs `(start, level-k position)`,
    /// shape `N_x x N_x`.
    fn base_plan(&self, k: usize) -> Array2<f64>;
    /// Pairwise level-(k, k+1) marginal contracted against a weight matrix.
    fn edge_sum(&self, k: usize, w: &Array2<f64>) -> f64;
    /// Closing-pair marginal (last level vs start) contracted against a
    /// weight matrix (full `N x N`; only slice columns carry mass).
    fn close_sum(&self, w: &Array2<f64>) -> f64;
}

/// Shared index data.
#[derive(Clone)]
struct Dims {
    n: usize,
    n_x: usize,
    n_r: usize,
    k_levels: usize,
    unit_r: usize,
    /// Squared radius per flattened node.
    rsq: Vec<f64>,
    /// Slice node per base index.
    slice: Vec<usize>,
}

impl Dims {
    fn new(grid: &Grid) -> Self {
        let rsq_ladder = grid.radii_sq();
        Self {
            n: grid.n_nodes(),
            n_x: grid.n_x(),
            n_r: grid.n_r(),
            k_levels: grid.k_levels(),
            unit_r: grid.unit_radius_index(),
            rsq: (0..grid.n_nodes()).map(|j| rsq_ladder[j % grid.n_r()]).collect(),
            slice: grid.first_slice_nodes(),
        }
    }

    fn base_of(&self, node: usize) -> usize {
        node / self.n_r
    }

    /// Dual scaling factors `a_k(j)` over all nodes, linear domain.
    fn a_vec(&self, p: &[f64]) -> Array1<f64> {
        Array1::from_iter((0..self.n).map(|j| (p[self.base_of(j)] * self.rsq[j]).exp()))
    }

    /// Log-domain dual exponents `p[base(j)] * r_j^2`.
    fn la_vec(&self, p: &[f64]) -> Array1<f64> {
        Array1::from_iter((0..self.n).map(|j| p[self.base_of(j)] * self.rsq[j]))
    }

    fn reshape_to_base_radius(&self, node_values: impl Fn(usize) -> f64) -> Array2<f64> {
        Array2::from_shape_fn((self.n_x, self.n_r), |(i, jr)| node_values(i * self.n_r + jr))
    }
}

fn lse_two_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut m = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        let t = x + y;
        if t > m {
            m = t;
        }
    }
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += (x + y - m).exp();
    }
    m + sum.ln()
}

// ---------------------------------------------------------------------------
// Dense engine
// ---------------------------------------------------------------------------

pub(crate) struct DenseEngine {
    dims: Dims,
    /// Transition kernel, symmetric.
    xi: Array2<f64>,
    /// Closing kernel columns restricted to the radius-1 slice (`N x N_x`).
    xic: Array2<f64>,
    /// Suffix messages; slot `k` (for `1 <= k <= K-1`) holds `N x N_x`.
    bwd: Vec<Array2<f64>>,
    /// Level-1 suffix with its own dual factor folded in (used by level 0).
    bwd_a1: Array2<f64>,
    /// Dual factors per level cached by the last `backward` call.
    a_cache: Vec<Array1<f64>>,
    /// Prefix with the cursor level's dual factor still missing.
    fwdx: Array2<f64>,
    /// Stored prefixes per level (level 0 kept as `a0`).
    fwd: Vec<Array2<f64>>,
    a0: Array1<f64>,
    cursor: usize,
}

impl DenseEngine {
    /// Materializes the kernels; errors if any entry underflowed to exact
    /// zero, in which case the caller should use the log engine.
    pub(crate) fn new(factors: &GibbsFactors, grid: &Grid) -> Result<Self> {
        let dims = Dims::new(grid);
        let xi = factors.xi();
        let xi_close = factors.xi_close();
        if xi.iter().any(|v| *v == 0.0) || xi_close.iter().any(|v| *v == 0.0) {
            return Err(Error::KernelUnderflow);
        }
        let mut xic = Array2::zeros((dims.n, dims.n_x));
        for (i, &f) in dims.slice.iter().enumerate() {
            xic.column_mut(i).assign(&xi_close.column(f));
        }
        Ok(Self {
            bwd: vec![Array2::zeros((0, 0)); dims.k_levels],
            bwd_a1: Array2::zeros((0, 0)),
            a_cache: vec![Array1::zeros(0); dims.k_levels],
            fwdx: Array2::zeros((0, 0)),
            fwd: vec![Array2::zeros((0, 0)); dims.k_levels],
            a0: Array1::zeros(0),
            cursor: 0,
            dims,
            xi,
            xic,
        })
    }

    fn check_finite(values: &Array2<f64>, level: usize) -> Result<()> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::DenseOverflow { level })
        }
    }

    /// `B` restricted to the slice at level 0: one scalar per base node.
    fn b0(&self) -> Array1<f64> {
        let d = &self.dims;
        Array1::from_iter((0..d.n_x).map(|i| {
            self.xi.row(d.slice[i]).dot(&self.bwd_a1.column(i))
        }))
    }
}

impl MessageEngine for DenseEngine {
    fn k_levels(&self) -> usize {
        self.dims.k_levels
    }

    fn backward(&mut self, duals: &DualPotentials) -> Result<()> {
        let d = &self.dims;
        let last = d.k_levels - 1;
        for k in 1..d.k_levels {
            self.a_cache[k] = d.a_vec(duals.level(k));
        }
        self.bwd[last] = self.xic.clone();
        for k in (1..last).rev() {
            let a_next = &self.a_cache[k + 1];
            let mut scaled = self.bwd[k + 1].clone();
            for (mut row, a) in scaled.axis_iter_mut(Axis(0)).zip(a_next.iter()) {
                row.mapv_inplace(|v| v * a);
            }
            self.bwd[k] = self.xi.dot(&scaled);
            Self::check_finite(&self.bwd[k], k)?;
        }
        let a1 = &self.a_cache[1];
        self.bwd_a1 = self.bwd[1].clone();
        for (mut row, a) in self.bwd_a1.axis_iter_mut(Axis(0)).zip(a1.iter()) {
            row.mapv_inplace(|v| v * a);
        }
        Ok(())
    }

    fn forward_reset(&mut self) {
        self.cursor = 0;
    }

    fn b_log(&self) -> Array2<f64> {
        let d = &self.dims;
        if self.cursor == 0 {
            let b0 = self.b0();
            let mut out = Array2::from_elem((d.n_x, d.n_r), f64::NEG_INFINITY);
            for i in 0..d.n_x {
                out[[i, d.unit_r]] = b0[i].ln();
            }
            out
        } else {
            let k = self.cursor;
            let bwd = &self.bwd[k];
            d.reshape_to_base_radius(|j| {
                self.fwdx.column(j).dot(&bwd.row(j)).ln()
            })
        }
    }

    fn advance(&mut self, p_level: &[f64]) -> Result<()> {
        let d = &self.dims;
        let k = self.cursor;
        debug_assert!(k < d.k_levels);
        if k == 0 {
            self.a0 = Array1::from_iter(p_level.iter().map(|p| p.exp()));
            let mut fwdx = Array2::zeros((d.n_x, d.n));
            for i in 0..d.n_x {
                let mut row = fwdx.row_mut(i);
                row.assign(&self.xi.row(d.slice[i]));
                row.mapv_inplace(|v| v * self.a0[i]);
            }
            self.fwdx = fwdx;
        } else {
            let a_k = d.a_vec(p_level);
            let mut fwd = self.fwdx.clone();
            for mut row in fwd.axis_iter_mut(Axis(0)) {
                Zip::from(&mut row).and(&a_k).for_each(|v, a| *v *= a);
            }
            if k < d.k_levels - 1 {
                self.fwdx = fwd.dot(&self.xi);
                Self::check_finite(&self.fwdx, k)?;
            }
            self.fwd[k] = fwd;
        }
        self.cursor += 1;
        Ok(())
    }

    fn mass(&self) -> f64 {
        debug_assert_eq!(self.cursor, self.dims.k_levels);
        let last = self.dims.k_levels - 1;
        let mut total = 0.0;
        for i in 0..self.dims.n_x {
            total += self.fwd[last].row(i).dot(&self.xic.column(i));
        }
        total
    }

    fn marginal(&self, k: usize) -> Vec<f64> {
        let d = &self.dims;
        if k == 0 {
            let b0 = self.b0();
            let mut out = vec![0.0; d.n];
            for i in 0..d.n_x {
                out[d.slice[i]] = self.a0[i] * b0[i];
            }
            out
        } else {
            (0..d.n).map(|j| self.fwd[k].column(j).dot(&self.bwd[k].row(j))).collect()
        }
    }

    fn base_plan(&self, k: usize) -> Array2<f64> {
        let d = &self.dims;
        let mut plan = Array2::zeros((d.n_x, d.n_x));
        if k == 0 {
            let b0 = self.b0();
            for i in 0..d.n_x {
                plan[[i, i]] = self.a0[i] * b0[i];
            }
        } else {
            for i0 in 0..d.n_x {
                for ib in 0..d.n_x {
                    let mut total = 0.0;
                    for jr in 0..d.n_r {
                        let j = ib * d.n_r + jr;
                        total += self.fwd[k][[i0, j]] * self.bwd[k][[j, i0]];
                    }
                    plan[[i0, ib]] = total;
                }
            }
        }
        plan
    }

    fn edge_sum(&self, k: usize, w: &Array2<f64>) -> f64 {
        let d = &self.dims;
        let wxi = &self.xi * w;
        if k == 0 {
            let mut total = 0.0;
            for i in 0..d.n_x {
                total += self.a0[i] * wxi.row(d.slice[i]).dot(&self.bwd_a1.column(i));
            }
            return total;
        }
        // Suffix for the (k+1)-th slot with its dual factor attached.
        let a_next = &self.a_cache[k + 1];
        let mut scaled = self.bwd[k + 1].clone();
        for (mut row, a) in scaled.axis_iter_mut(Axis(0)).zip(a_next.iter()) {
            row.mapv_inplace(|v| v * a);
        }
        let m = wxi.dot(&scaled);
        let mut total = 0.0;
        for i in 0..d.n_x {
            total += self.fwd[k].row(i).dot(&m.column(i));
        }
        total
    }

    fn close_sum(&self, w: &Array2<f64>) -> f64 {
        let d = &self.dims;
        let last = d.k_levels - 1;
        let mut total = 0.0;
        for i in 0..d.n_x {
            let f = d.slice[i];
            for j in 0..d.n {
                total += self.fwd[last][[i, j]] * self.xic[[j, i]] * w[[j, f]];
            }
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Log-domain engine
// ---------------------------------------------------------------------------

pub(crate) struct LogEngine {
    dims: Dims,
    lxi: Array2<f64>,
    /// Closing kernel log-columns at the slice (`N x N_x`).
    lxic: Array2<f64>,
    /// Suffix log-messages; slot `k` (for `1 <= k <= K-1`) holds `N x N_x`.
    lbwd: Vec<Array2<f64>>,
    /// Transposed level-1 suffix with its dual exponent folded in
    /// (`N_x x N`, contiguous rows for the level-0 contraction).
    lbwd_a1_t: Array2<f64>,
    la_cache: Vec<Array1<f64>>,
    lfwdx: Array2<f64>,
    lfwd: Vec<Array2<f64>>,
    la0: Array1<f64>,
    cursor: usize,
}

impl LogEngine {
    pub(crate) fn new(factors: &GibbsFactors, grid: &Grid) -> Result<Self> {
        let dims = Dims::new(grid);
        let lxi = factors.log_xi().clone();
        let lxi_close = factors.log_xi_close();
        let mut lxic = Array2::zeros((dims.n, dims.n_x));
        for (i, &f) in dims.slice.iter().enumerate() {
            lxic.column_mut(i).assign(&lxi_close.column(f));
        }
        Ok(Self {
            lbwd: vec![Array2::zeros((0, 0)); dims.k_levels],
            lbwd_a1_t: Array2::zeros((0, 0)),
            la_cache: vec![Array1::zeros(0); dims.k_levels],
            lfwdx: Array2::zeros((0, 0)),
            lfwd: vec![Array2::zeros((0, 0)); dims.k_levels],
            la0: Array1::zeros(0),
            cursor: 0,
            dims,
            lxi,
            lxic,
        })
    }

    fn b0_log(&self) -> Array1<f64> {
        let d = &self.dims;
        Array1::from_iter((0..d.n_x).map(|i| {
            lse_two_slices(
                self.lxi.row(d.slice[i]).to_slice().expect("contiguous row"),
                self.lbwd_a1_t.row(i).to_slice().expect("contiguous row"),
            )
        }))
    }
}

impl MessageEngine for LogEngine {
    fn k_levels(&self) -> usize {
        self.dims.k_levels
    }

    fn backward(&mut self, duals: &DualPotentials) -> Result<()> {
        let d = &self.dims;
        let last = d.k_levels - 1;
        for k in 1..d.k_levels {
            self.la_cache[k] = d.la_vec(duals.level(k));
        }
        self.lbwd[last] = self.lxic.clone();
        for k in (1..last).rev() {
            // Transposed scaled suffix: rows indexed by start node, entries
            // contiguous over the summed index.
            let la_next = &self.la_cache[k + 1];
            let mut t = Array2::zeros((d.n_x, d.n));
            for i in 0..d.n_x {
                for j in 0..d.n {
                    t[[i, j]] = la_next[j] + self.lbwd[k + 1][[j, i]];
                }
            }
            let mut next = Array2::zeros((d.n, d.n_x));
            let lxi = &self.lxi;
            ndarray::parallel::par_azip!((index (j, i), v in &mut next) {
                *v = lse_two_slices(
                    lxi.row(j).to_slice().expect("contiguous row"),
                    t.row(i).to_slice().expect("contiguous row"),
                );
            });
            self.lbwd[k] = next;
        }
        let la1 = &self.la_cache[1];
        let mut t = Array2::zeros((d.n_x, d.n));
        for i in 0..d.n_x {
            for j in 0..d.n {
                t[[i, j]] = la1[j] + self.lbwd[1][[j, i]];
            }
        }
        self.lbwd_a1_t = t;
        Ok(())
    }

    fn forward_reset(&mut self) {
        self.cursor = 0;
    }

    fn b_log(&self) -> Array2<f64> {
        let d = &self.dims;
        if self.cursor == 0 {
            let b0 = self.b0_log();
            let mut out = Array2::from_elem((d.n_x, d.n_r), f64::NEG_INFINITY);
            for i in 0..d.n_x {
                out[[i, d.unit_r]] = b0[i];
            }
            out
        } else {
            let k = self.cursor;
            d.reshape_to_base_radius(|j| {
                let mut m = f64::NEG_INFINITY;
                for i in 0..d.n_x {
                    let t = self.lfwdx[[i, j]] + self.lbwd[k][[j, i]];
                    if t > m {
                        m = t;
                    }
                }
                if m == f64::NEG_INFINITY {
                    return m;
                }
                let mut sum = 0.0;
                for i in 0..d.n_x {
                    sum += (self.lfwdx[[i, j]] + self.lbwd[k][[j, i]] - m).exp();
                }
                m + sum.ln()
            })
        }
    }

    fn advance(&mut self, p_level: &[f64]) -> Result<()> {
        let d = &self.dims;
        let k = self.cursor;
        debug_assert!(k < d.k_levels);
        if k == 0 {
            self.la0 = Array1::from_iter(p_level.iter().copied());
            let mut lfwdx = Array2::zeros((d.n_x, d.n));
            for i in 0..d.n_x {
                let mut row = lfwdx.row_mut(i);
                row.assign(&self.lxi.row(d.slice[i]));
                row.mapv_inplace(|v| v + self.la0[i]);
            }
            self.lfwdx = lfwdx;
        } else {
            let la_k = d.la_vec(p_level);
            let mut lfwd = self.lfwdx.clone();
            for mut row in lfwd.axis_iter_mut(Axis(0)) {
                Zip::from(&mut row).and(&la_k).for_each(|v, a| *v += a);
            }
            if k < d.k_levels - 1 {
                // xi is symmetric, so the column contraction can read rows.
                let mut next = Array2::zeros((d.n_x, d.n));
                let lxi = &self.lxi;
                ndarray::parallel::par_azip!((index (i, jn), v in &mut next) {
                    *v = lse_two_slices(
                        lfwd.row(i).to_slice().expect("contiguous row"),
                        lxi.row(jn).to_slice().expect("contiguous row"),
                    );
                });
                self.lfwdx = next;
            }
            self.lfwd[k] = lfwd;
        }
        self.cursor += 1;
        Ok(())
    }

    fn mass(&self) -> f64 {
        debug_assert_eq!(self.cursor, self.dims.k_levels);
        let last = self.dims.k_levels - 1;
        let mut total = 0.0;
        for i in 0..self.dims.n_x {
            for j in 0..self.dims.n {
                total += (self.lfwd[last][[i, j]] + self.lxic[[j, i]]).exp();
            }
        }
        total
    }

    fn marginal(&self, k: usize) -> Vec<f64> {
        let d = &self.dims;
        if k == 0 {
            let b0 = self.b0_log();
            let mut out = vec![0.0; d.n];
            for i in 0..d.n_x {
                out[d.slice[i]] = (self.la0[i] + b0[i]).exp();
            }
            out
        } else {
            (0..d.n)
                .map(|j| {
                    (0..d.n_x)
                        .map(|i| (self.lfwd[k][[i, j]] + self.lbwd[k][[j, i]]).exp())
                        .sum()
                })
                .collect()
        }
    }

    fn base_plan(&self, k: usize) -> Array2<f64> {
        let d = &self.dims;
        let mut plan = Array2::zeros((d.n_x, d.n_x));
        if k == 0 {
            let b0 = self.b0_log();
            for i in 0..d.n_x {
                plan[[i, i]] = (self.la0[i] + b0[i]).exp();
            }
        } else {
            for i0 in 0..d.n_x {
                for ib in 0..d.n_x {
                    let mut total = 0.0;
                    for jr in 0..d.n_r {
                        let j = ib * d.n_r + jr;
                        total += (self.lfwd[k][[i0, j]] + self.lbwd[k][[j, i0]]).exp();
                    }
                    plan[[i0, ib]] = total;
                }
            }
        }
        plan
    }

    fn edge_sum(&self, k: usize, w: &Array2<f64>) -> f64 {
        let d = &self.dims;
        if k == 0 {
            let mut total = 0.0;
            for i in 0..d.n_x {
                let f = d.slice[i];
                for j in 0..d.n {
                    let l = self.la0[i] + self.lxi[[f, j]] + self.lbwd_a1_t[[i, j]];
                    total += l.exp() * w[[f, j]];
                }
            }
            return total;
        }
        let la_next = &self.la_cache[k + 1];
        // Deterministic parallel reduction: one partial per start node,
        // combined in index order.
        let partials: Vec<f64> = (0..d.n_x)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..d.n {
                    let base = self.lfwd[k][[i, j]];
                    for jn in 0..d.n {
                        let l = base + self.lxi[[j, jn]] + la_next[jn] + self.lbwd[k + 1][[jn, i]];
                        s += l.exp() * w[[j, jn]];
                    }
                }
                s
            })
            .collect();
        partials.iter().sum()
    }

    fn close_sum(&self, w: &Array2<f64>) -> f64 {
        let d = &self.dims;
        let last = d.k_levels - 1;
        let mut total = 0.0;
        for i in 0..d.n_x {
            let f = d.slice[i];
            for j in 0..d.n {
                total += (self.lfwd[last][[i, j]] + self.lxic[[j, i]]).exp() * w[[j, f]];
            }
        }
        total
    }
}

/// Engine selection: forced log, or dense with the underflow check.
pub(crate) fn make_engine(
    factors: &GibbsFactors,
    grid: &Grid,
    force_log: bool,
) -> Result<Box<dyn MessageEngine>> {
    if force_log {
        Ok(Box::new(LogEngine::new(factors, grid)?))
    } else {
        Ok(Box::new(DenseEngine::new(factors, grid)?))
    }
}

/// Auto rule: log-domain for small regularization or when the dense
/// kernels underflow, dense otherwise.
pub(crate) fn auto_engine(factors: &GibbsFactors, grid: &Grid) -> Result<Box<dyn MessageEngine>> {
    if factors.eps() <= AUTO_LOG_EPS {
        return make_engine(factors, grid, true);
    }
    match DenseEngine::new(factors, grid) {
        Ok(engine) => Ok(Box::new(engine)),
        Err(Error::KernelUnderflow) => make_engine(factors, grid, true),
        Err(e) => Err(e),
    }
}
