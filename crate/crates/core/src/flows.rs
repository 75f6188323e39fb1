//! Discrete path measures on the cone: the sandbox for the homogeneous
//! constraint calculus.
//!
//! A [`PathMeasure`] is a finite weighted family of cone paths sampled on
//! one uniform time ladder. The operations mirror the continuous calculus:
//! the discrete action uses chord-squared sums with weight `(K-1)/T`
//! (matching the solver's cost array exactly), homogeneous marginals weight
//! base positions by `r^2`, and dilation rescales radii by `1/theta` while
//! multiplying weights by `theta^2` -- which leaves actions and homogeneous
//! marginals invariant and, normalized by a 1-homogeneous functional,
//! rescales any measure to unit mass concentrated on a sigma level set.

use rand::Rng;

use crate::cone::{cone_distance_sq, ConePoint};
use crate::error::{Error, Result};

/// Finite weighted family of time-sampled cone paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    times: Vec<f64>,
    paths: Vec<Vec<ConePoint>>,
    weights: Vec<f64>,
}

/// Outcome of [`PathMeasure::strong_coupling_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongCouplingReport {
    /// Mass carried by paths starting at the apex.
    pub mass_r0_zero: f64,
    /// Mass carried by paths starting and ending at the apex.
    pub mass_r0_rt_zero: f64,
    /// True when no mass starts at the apex, in which case the measure can
    /// be rescaled to satisfy the endpoint coupling exactly.
    pub rescalable: bool,
}

impl PathMeasure {
    /// Paths must all be sampled on `times`, a uniform ladder with at least
    /// two levels; weights must be finite and nonnegative.
    pub fn new(times: Vec<f64>, paths: Vec<Vec<ConePoint>>, weights: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::PathMeasure("need at least two time samples".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::PathMeasure("times must be finite and increasing".into()));
        }
        let dt = times[1] - times[0];
        if times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.max(1.0))
        {
            return Err(Error::PathMeasure("time ladder must be uniform".into()));
        }
        if paths.len() != weights.len() {
            return Err(Error::PathMeasure("one weight per path required".into()));
        }
        if paths.iter().any(|p| p.len() != times.len()) {
            return Err(Error::PathMeasure("every path must be sampled on the ladder".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::PathMeasure("weights must be finite and nonnegative".into()));
        }
        Ok(Self { times, paths, weights })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn k_levels(&self) -> usize {
        self.times.len()
    }

    pub fn t_total(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, i: usize) -> &[ConePoint] {
        &self.paths[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Discrete action of one path.
    pub fn path_action(&self, i: usize) -> f64 {
        path_action(&self.paths[i], self.t_total())
    }

    /// Plan action: weight-summed path actions.
    pub fn total_action(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.paths)
            .map(|(w, p)| w * path_action(p, self.t_total()))
            .sum()
    }

    /// Action minus the trapezoid quadrature of `psi(t, x, r)` along path
    /// `i`. For a pressure field `P`, pass `psi = |t, x, r| P(t, x) * r * r`.
    pub fn b_functional(&self, i: usize, psi: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let path = &self.paths[i];
        let dt = self.times[1] - self.times[0];
        let mut quad = 0.0;
        for (k, point) in path.iter().enumerate() {
            let value = psi(self.times[k], point.x(), point.r());
            let factor = if k == 0 || k == path.len() - 1 { 0.5 } else { 1.0 };
            quad += factor * value * dt;
        }
        self.path_action(i) - quad
    }

    /// Homogeneous marginal at level `k`: per-bin sums of `weight * r^2`
    /// over a uniform partition of `[0, 1]`. Apex samples contribute
    /// nothing (their `r^2` vanishes).
    pub fn homogeneous_marginal(&self, k: usize, base_bins: usize) -> Result<Vec<f64>> {
        if k >= self.k_levels() {
            return Err(Error::Shape(format!("level {k} out of range 0..{}", self.k_levels())));
        }
        if base_bins == 0 {
            return Err(Error::Shape("need at least one bin".into()));
        }
        let mut out = vec![0.0; base_bins];
        for (path, w) in self.paths.iter().zip(&self.weights) {
            let p = path[k];
            if p.r() == 0.0 {
                continue;
            }
            let bin = ((p.x() * base_bins as f64) as usize).min(base_bins - 1);
            out[bin] += w * p.r() * p.r();
        }
        Ok(out)
    }

    /// Dilation: divide path radii by `theta`, multiply weights by
    /// `theta^2`. `theta` must be positive on every charged path.
    pub fn dilate(&self, theta: &[f64]) -> Result<PathMeasure> {
        if theta.len() != self.len() {
            return Err(Error::Shape("one dilation factor per path required".into()));
        }
        let mut paths = Vec::with_capacity(self.len());
        let mut weights = Vec::with_capacity(self.len());
        for (i, (path, &w)) in self.paths.iter().zip(&self.weights).enumerate() {
            if w == 0.0 {
                paths.push(path.clone());
                weights.push(0.0);
                continue;
            }
            let th = theta[i];
            if !(th > 0.0) || !th.is_finite() {
                return Err(Error::DilationFactor { path: i, theta: th });
            }
            paths.push(
                path.iter()
                    .map(|p| ConePoint::new(p.x(), p.r() / th).expect("scaled radius stays valid"))
                    .collect(),
            );
            weights.push(w * th * th);
        }
        PathMeasure::new(self.times.clone(), paths, weights)
    }

    /// Rescale by a 1-homogeneous functional's per-path values: with
    /// `C^2 = sum w sigma^2`, dilation by `sigma / C` produces a unit-mass
    /// measure concentrated on the level set `sigma = C`.
    pub fn rescale_to_unit(&self, sigma: &[f64]) -> Result<PathMeasure> {
        if sigma.len() != self.len() {
            return Err(Error::Shape("one sigma value per path required".into()));
        }
        for (i, (&s, &w)) in sigma.iter().zip(&self.weights).enumerate() {
            if w > 0.0 && (!(s > 0.0) || !s.is_finite()) {
                return Err(Error::DilationFactor { path: i, theta: s });
            }
        }
        let c_sq: f64 = sigma.iter().zip(&self.weights).map(|(s, w)| w * s * s).sum();
        if !(c_sq > 0.0) {
            return Err(Error::ZeroNormalization);
        }
        let c = c_sq.sqrt();
        let theta: Vec<f64> = sigma.iter().map(|s| s / c).collect();
        self.dilate(&theta)
    }

    /// Initial radius per path, the 1-homogeneous functional `sigma = r_0`.
    pub fn sigma_initial_radius(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p[0].r()).collect()
    }

    /// `sigma = sqrt(r_0^2 + r_T^2 + integral of r^2 dt)` per path
    /// (trapezoid quadrature on the ladder). On a measure whose
    /// homogeneous marginals all have unit mass, `sum w sigma^2 = T + 2`.
    pub fn sigma_radial_norm(&self) -> Vec<f64> {
        let dt = self.times[1] - self.times[0];
        self.paths
            .iter()
            .map(|path| {
                let mut quad = 0.0;
                for (k, p) in path.iter().enumerate() {
                    let factor = if k == 0 || k == path.len() - 1 { 0.5 } else { 1.0 };
                    quad += factor * p.r() * p.r() * dt;
                }
                let r0 = path[0].r();
                let rt = path[path.len() - 1].r();
                (r0 * r0 + rt * rt + quad).sqrt()
            })
            .collect()
    }

    /// Mass starting (and starting-and-ending) at the apex; the measure is
    /// rescalable to a strong endpoint coupling exactly when no mass starts
    /// there.
    pub fn strong_coupling_check(&self) -> StrongCouplingReport {
        let mut mass_r0_zero = 0.0;
        let mut mass_r0_rt_zero = 0.0;
        for (path, &w) in self.paths.iter().zip(&self.weights) {
            if path[0].r() == 0.0 {
                mass_r0_zero += w;
                if path[path.len() - 1].r() == 0.0 {
                    mass_r0_rt_zero += w;
                }
            }
        }
        StrongCouplingReport {
            mass_r0_zero,
            mass_r0_rt_zero,
            rescalable: mass_r0_zero == 0.0,
        }
    }
}

/// Discrete action of a uniformly sampled path over total time `t_total`:
/// `(K-1)/T` times the sum of squared chord distances. This is the same
/// quadrature as the solver's cost array, and it is exact on geodesics
/// (their equal-parameter chords are equal).
pub fn path_action(points: &[ConePoint], t_total: f64) -> f64 {
    debug_assert!(points.len() >= 2 && t_total > 0.0);
    let weight = (points.len() - 1) as f64 / t_total;
    weight
        * points
            .windows(2)
            .map(|w| cone_distance_sq(&w[0], &w[1]))
            .sum::<f64>()
}

/// Lift of a deterministic flow: one path `t_k -> [phi[a][k], lam[a][k]]`
/// per atom, weighted by the atom masses. All `lam` must be positive.
pub fn lift_deterministic(
    times: Vec<f64>,
    phi: &[Vec<f64>],
    lam: &[Vec<f64>],
    masses: &[f64],
) -> Result<PathMeasure> {
    if phi.len() != lam.len() || phi.len() != masses.len() {
        return Err(Error::PathMeasure("phi, lam and masses must have one entry per atom".into()));
    }
    let mut paths = Vec::with_capacity(phi.len());
    for (atom, (positions, radii)) in phi.iter().zip(lam).enumerate() {
        if positions.len() != times.len() || radii.len() != times.len() {
            return Err(Error::PathMeasure(format!(
                "atom {atom} is not sampled on the time ladder"
            )));
        }
        if radii.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::PathMeasure(format!("atom {atom} has a non-positive radius")));
        }
        let path: Result<Vec<ConePoint>> = positions
            .iter()
            .zip(radii)
            .map(|(&x, &l)| ConePoint::new(x, l))
            .collect();
        paths.push(path?);
    }
    PathMeasure::new(times, paths, masses.to_vec())
}

/// Seeded random measure for property suites. Radii stay in a moderate
/// positive band so 1-homogeneous functionals stay well conditioned; with
/// `allow_apex` some paths are the constant apex path.
pub fn random_measure(rng: &mut impl Rng, allow_apex: bool) -> PathMeasure {
    let k_levels = rng.gen_range(2..=6);
    let n_paths = rng.gen_range(1..=8);
    let t_total = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let times: Vec<f64> = (0..k_levels)
        .map(|k| t_total * k as f64 / (k_levels - 1) as f64)
        .collect();
    let mut paths = Vec::with_capacity(n_paths);
    let mut weights = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        if allow_apex && rng.gen_bool(0.25) {
            paths.push(vec![ConePoint::apex(); k_levels]);
        } else {
            paths.push(
                (0..k_levels)
                    .map(|_| {
                        ConePoint::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.2..2.5))
                            .expect("sampled point is valid")
                    })
                    .collect(),
            );
        }
        weights.push(rng.gen_range(0.05..2.0));
    }
    PathMeasure::new(times, paths, weights).expect("sampled measure is valid")
}
