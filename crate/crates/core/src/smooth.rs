//! Deterministic reference solutions of the geodesic boundary system.
//!
//! Per base atom, the position/radius pair `(phi, lambda)` obeys
//!
//! ```text
//! lambda phi'' + 2 lambda' phi' + (1/2) lambda P_x(t, phi) = 0
//! lambda''  - lambda phi'^2 + lambda P(t, phi) = 0
//! ```
//!
//! integrated here with an implicit-midpoint one-step method (symmetric,
//! second order, with the mild energy drift a fixed-step symmetric scheme
//! gives). `lambda > 0` is a standing invariant: trajectories that touch
//! the radius floor abort with a blow-up report instead of clamping,
//! since apex-reaching behavior belongs to the generalized setting, not
//! this smooth one.

use crate::cone::{cone_distance_sq_coords, develop, ConePoint};
use crate::error::{Error, Result};
use crate::flows::PathMeasure;

/// Default radius floor for blow-up detection.
pub const LAMBDA_FLOOR: f64 = 1e-8;

/// Time-dependent pressure field on the base interval.
pub trait PressureField {
    fn value(&self, t: f64, x: f64) -> f64;
    fn grad_x(&self, t: f64, x: f64) -> f64;
    /// Second spatial derivative; default is a central difference of the
    /// gradient, good enough for the condition checks below.
    fn hess_xx(&self, t: f64, x: f64) -> f64 {
        let h = 1e-5;
        (self.grad_x(t, x + h) - self.grad_x(t, x - h)) / (2.0 * h)
    }
}

pub struct ZeroPressure;

impl PressureField for ZeroPressure {
    fn value(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn grad_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn hess_xx(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

pub struct ConstantPressure(pub f64);

impl PressureField for ConstantPressure {
    fn value(&self, _: f64, _: f64) -> f64 {
        self.0
    }
    fn grad_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn hess_xx(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// State of one atom: position, radius and their velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    pub phi: f64,
    pub lam: f64,
    pub dphi: f64,
    pub dlam: f64,
}

impl AtomState {
    /// Conserved energy `lam^2 dphi^2 + dlam^2 + P lam^2` (for
    /// time-independent pressure).
    pub fn energy(&self, pressure: &dyn PressureField, t: f64) -> f64 {
        self.lam * self.lam * self.dphi * self.dphi
            + self.dlam * self.dlam
            + pressure.value(t, self.phi) * self.lam * self.lam
    }
}

/// Atom states at each time level.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<AtomState>>,
}

impl Trajectory {
    pub fn n_atoms(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn t_total(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Lift to a path measure (one weighted cone path per atom), the
    /// exchange format with the path-measure sandbox. Positions must lie
    /// in `[0, 1]`.
    pub fn to_path_measure(&self, masses: &[f64]) -> Result<PathMeasure> {
        if masses.len() != self.n_atoms() {
            return Err(Error::Shape("one mass per atom required".into()));
        }
        let mut paths = Vec::with_capacity(self.n_atoms());
        for atom in 0..self.n_atoms() {
            let path: Result<Vec<ConePoint>> = self
                .states
                .iter()
                .map(|level| ConePoint::new(level[atom].phi, level[atom].lam))
                .collect();
            paths.push(path?);
        }
        PathMeasure::new(self.times.clone(), paths, masses.to_vec())
    }
}

fn rhs(pressure: &dyn PressureField, t: f64, s: &AtomState) -> AtomState {
    AtomState {
        phi: s.dphi,
        lam: s.dlam,
        dphi: -2.0 * (s.dlam / s.lam) * s.dphi - 0.5 * pressure.grad_x(t, s.phi),
        dlam: s.lam * (s.dphi * s.dphi - pressure.value(t, s.phi)),
    }
}

fn midpoint(a: &AtomState, b: &AtomState) -> AtomState {
    AtomState {
        phi: 0.5 * (a.phi + b.phi),
        lam: 0.5 * (a.lam + b.lam),
        dphi: 0.5 * (a.dphi + b.dphi),
        dlam: 0.5 * (a.dlam + b.dlam),
    }
}

fn add_scaled(s: &AtomState, h: f64, d: &AtomState) -> AtomState {
    AtomState {
        phi: s.phi + h * d.phi,
        lam: s.lam + h * d.lam,
        dphi: s.dphi + h * d.dphi,
        dlam: s.dlam + h * d.dlam,
    }
}

fn max_abs_diff(a: &AtomState, b: &AtomState) -> f64 {
    (a.phi - b.phi)
        .abs()
        .max((a.lam - b.lam).abs())
        .max((a.dphi - b.dphi).abs())
        .max((a.dlam - b.dlam).abs())
}

/// Integrate the geodesic system with the default radius floor.
pub fn integrate_geodesic(
    initial: &[AtomState],
    pressure: &dyn PressureField,
    t_total: f64,
    steps: usize,
) -> Result<Trajectory> {
    integrate_geodesic_floored(initial, pressure, t_total, steps, LAMBDA_FLOOR)
}

/// Integrate with an explicit radius floor for blow-up detection.
pub fn integrate_geodesic_floored(
    initial: &[AtomState],
    pressure: &dyn PressureField,
    t_total: f64,
    steps: usize,
    lambda_floor: f64,
) -> Result<Trajectory> {
    if initial.is_empty() || steps == 0 || !(t_total > 0.0) {
        return Err(Error::Shape("need atoms, steps >= 1 and positive total time".into()));
    }
    for (atom, s) in initial.iter().enumerate() {
        if !(s.lam > lambda_floor) {
            return Err(Error::BlowUp { atom, time: 0.0, floor: lambda_floor });
        }
        if ![s.phi, s.lam, s.dphi, s.dlam].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("initial atom state"));
        }
    }
    let h = t_total / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|n| t_total * n as f64 / steps as f64).collect();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial.to_vec());

    for n in 0..steps {
        let t_mid = times[n] + 0.5 * h;
        let current = &states[n];
        let mut next = Vec::with_capacity(current.len());
        for (atom, y) in current.iter().enumerate() {
            // Implicit midpoint stage solved by fixed-point iteration from
            // an explicit Euler predictor.
            let mut z = add_scaled(y, h, &rhs(pressure, times[n], y));
            let mut converged = false;
            for _ in 0..100 {
                let mid = midpoint(y, &z);
                if !(mid.lam > lambda_floor) {
                    return Err(Error::BlowUp { atom, time: t_mid, floor: lambda_floor });
                }
                let z_new = add_scaled(y, h, &rhs(pressure, t_mid, &mid));
                let delta = max_abs_diff(&z, &z_new);
                z = z_new;
                if delta <= 1e-14 * (1.0 + z.phi.abs().max(z.lam.abs())) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::RootSolve(
                    "implicit midpoint stage did not converge; reduce the step size".into(),
                ));
            }
            if !(z.lam > lambda_floor) {
                return Err(Error::BlowUp { atom, time: times[n + 1], floor: lambda_floor });
            }
            if !(pressure.value(times[n + 1], z.phi).is_finite()) {
                return Err(Error::NonFinite("pressure value along trajectory"));
            }
            next.push(z);
        }
        states.push(next);
    }
    Ok(Trajectory { times, states })
}

/// Initial state of the constant-speed geodesic from `p` to `q` traversed
/// over `[0, t_total]` (velocities read off the planar development).
pub fn geodesic_state(p: &ConePoint, q: &ConePoint, t_total: f64) -> Result<AtomState> {
    if p.is_apex() {
        return Err(Error::Shape("geodesic initial state needs a positive starting radius".into()));
    }
    let (u0, v0) = develop(p);
    let (u1, v1) = develop(q);
    let du = (u1 - u0) / t_total;
    let dv = (v1 - v0) / t_total;
    let r0 = p.r();
    Ok(AtomState {
        phi: p.x(),
        lam: r0,
        dphi: (u0 * dv - v0 * du) / (r0 * r0),
        dlam: (u0 * du + v0 * dv) / r0,
    })
}

/// Residual of the Eulerian compatibility relation `2 alpha = div u`.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub max_residual: f64,
    pub per_level: Vec<f64>,
}

/// Reconstruct `u = dphi o phi^{-1}` and `alpha = (dlam/lam) o phi^{-1}`
/// on a uniform evaluation grid by linear interpolation, and report
/// `max |2 alpha - du/dx|` over interior nodes (central differences).
/// Fails when the atom positions overlap or cross (non-invertible flow).
pub fn eulerian_consistency(traj: &Trajectory, grid_points: usize) -> Result<ConsistencyReport> {
    if traj.n_atoms() < 2 || grid_points < 3 {
        return Err(Error::Shape("need at least 2 atoms and 3 grid points".into()));
    }
    let mut per_level = Vec::with_capacity(traj.states.len());
    for (level, states) in traj.states.iter().enumerate() {
        let mut samples: Vec<(f64, f64, f64)> =
            states.iter().map(|s| (s.phi, s.dphi, s.dlam / s.lam)).collect();
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite positions"));
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::NonInvertibleFlow { level });
        }
        let lo = samples[0].0;
        let hi = samples[samples.len() - 1].0;
        let dx = (hi - lo) / (grid_points - 1) as f64;
        let interp = |y: f64, pick: fn(&(f64, f64, f64)) -> f64| -> f64 {
            let idx = samples.partition_point(|s| s.0 <= y).clamp(1, samples.len() - 1);
            let (a, b) = (&samples[idx - 1], &samples[idx]);
            let t = (y - a.0) / (b.0 - a.0);
            pick(a) + t * (pick(b) - pick(a))
        };
        let u: Vec<f64> = (0..grid_points)
            .map(|g| interp(lo + dx * g as f64, |s| s.1))
            .collect();
        let alpha: Vec<f64> = (0..grid_points)
            .map(|g| interp(lo + dx * g as f64, |s| s.2))
            .collect();
        let mut worst: f64 = 0.0;
        for g in 1..grid_points - 1 {
            let div_u = (u[g + 1] - u[g - 1]) / (2.0 * dx);
            worst = worst.max((2.0 * alpha[g] - div_u).abs());
        }
        per_level.push(worst);
    }
    let max_residual = per_level.iter().copied().fold(0.0, f64::max);
    Ok(ConsistencyReport { max_residual, per_level })
}

/// Outcome of the short-time optimality condition checks.
#[derive(Debug, Clone, Copy)]
pub struct GvReport {
    pub r_min: f64,
    pub r_max: f64,
    /// `2 r_max / r_min`.
    pub radius_ratio: f64,
    /// Sup of `|P|` over the sampled time-space window.
    pub pressure_sup: f64,
    /// `[ratio^2 + (ratio + 1)^2] * sup|P| < 3 / (2 T^2)`.
    pub rho_condition: bool,
    /// Right side minus left side of the inequality above.
    pub rho_margin: f64,
    /// `pi^2 C0 / T^2`, the bound the Hessian block must stay under.
    pub hessian_bound_required: f64,
    /// Max operator norm of `[[2P + P_xx, P_x], [P_x, 2P]]` along the
    /// trajectory.
    pub hessian_bound_observed: f64,
    /// Per-atom oscillation `sup d_cone(z_t0, z_t1) <= r_min / 4`.
    pub oscillation_ok: bool,
    pub max_oscillation: f64,
    pub oscillation_bound: f64,
}

/// Evaluate the short-time sufficient conditions for a trajectory to be
/// the unique action minimizer: the pressure-size inequality, the Hessian
/// operator-norm bound (against `pi^2 C0 / T^2` with caller-supplied
/// `C0`), and the per-atom oscillation bound. Both sides of each
/// inequality are reported, not just verdicts.
pub fn gv_condition_check(
    traj: &Trajectory,
    pressure: &dyn PressureField,
    c0: f64,
) -> Result<GvReport> {
    if traj.n_atoms() == 0 || traj.times.len() < 2 {
        return Err(Error::Shape("need a nonempty trajectory".into()));
    }
    let t_total = traj.t_total();
    let mut r_min = f64::INFINITY;
    let mut r_max: f64 = 0.0;
    for level in &traj.states {
        for s in level {
            r_min = r_min.min(s.lam);
            r_max = r_max.max(s.lam);
        }
    }
    let radius_ratio = 2.0 * r_max / r_min;

    // Sup of |P| over trajectory times x (a fine base grid plus the atom
    // positions themselves).
    let mut pressure_sup: f64 = 0.0;
    const SUP_GRID: usize = 257;
    for (level, &t) in traj.times.iter().enumerate() {
        for g in 0..SUP_GRID {
            let x = g as f64 / (SUP_GRID - 1) as f64;
            pressure_sup = pressure_sup.max(pressure.value(t, x).abs());
        }
        for s in &traj.states[level] {
            pressure_sup = pressure_sup.max(pressure.value(t, s.phi).abs());
        }
    }

    let rho_rhs = 3.0 / (2.0 * t_total * t_total);
    let rho_lhs =
        (radius_ratio * radius_ratio + (radius_ratio + 1.0).powi(2)) * pressure_sup;

    // Operator norm of the symmetric 2x2 Hessian block at trajectory points.
    let mut hessian_observed: f64 = 0.0;
    for (level, &t) in traj.times.iter().enumerate() {
        for s in &traj.states[level] {
            let p = pressure.value(t, s.phi);
            let px = pressure.grad_x(t, s.phi);
            let pxx = pressure.hess_xx(t, s.phi);
            let (a, b, d) = (2.0 * p + pxx, px, 2.0 * p);
            let mean = 0.5 * (a + d);
            let disc = (0.5 * (a - d)).hypot(b);
            hessian_observed = hessian_observed.max((mean + disc).abs().max((mean - disc).abs()));
        }
    }

    let mut max_oscillation: f64 = 0.0;
    for atom in 0..traj.n_atoms() {
        for i in 0..traj.times.len() {
            for j in i + 1..traj.times.len() {
                let a = &traj.states[i][atom];
                let b = &traj.states[j][atom];
                let d = cone_distance_sq_coords(a.phi, a.lam, b.phi, b.lam).sqrt();
                max_oscillation = max_oscillation.max(d);
            }
        }
    }
    let oscillation_bound = r_min / 4.0;

    Ok(GvReport {
        r_min,
        r_max,
        radius_ratio,
        pressure_sup,
        rho_condition: rho_lhs < rho_rhs,
        rho_margin: rho_rhs - rho_lhs,
        hessian_bound_required: std::f64::consts::PI.powi(2) * c0 / (t_total * t_total),
        hessian_bound_observed: hessian_observed,
        oscillation_ok: max_oscillation <= oscillation_bound,
        max_oscillation,
        oscillation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{cone_distance, cone_geodesic};

    fn geodesic_endpoint_error(steps: usize) -> f64 {
        let p = ConePoint::new(0.0, 1.0).unwrap();
        let q = ConePoint::new(1.0, 1.0).unwrap();
        let state0 = geodesic_state(&p, &q, 1.0).unwrap();
        let traj = integrate_geodesic(&[state0], &ZeroPressure, 1.0, steps).unwrap();
        let mut worst: f64 = 0.0;
        for (k, level) in traj.states.iter().enumerate() {
            let s = traj.times[k];
            let want = cone_geodesic(&p, &q, s).unwrap();
            let got = ConePoint::new(level[0].phi.clamp(0.0, 1.0), level[0].lam).unwrap();
            worst = worst.max(cone_distance(&want, &got));
        }
        worst
    }

    #[test]
    fn zero_pressure_matches_closed_form_at_second_order() {
        let e1 = geodesic_endpoint_error(40);
        let e2 = geodesic_endpoint_error(80);
        assert!(e1 > 0.0 && e2 > 0.0);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
        assert!(e2 < 1e-4);
    }

    #[test]
    fn equilibrium_stays_put() {
        let state = AtomState { phi: 0.4, lam: 1.3, dphi: 0.0, dlam: 0.0 };
        let traj = integrate_geodesic(&[state], &ZeroPressure, 1.0, 20).unwrap();
        for level in &traj.states {
            assert!((level[0].phi - 0.4).abs() < 1e-14);
            assert!((level[0].lam - 1.3).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_pressure_radial_cosine() {
        let c = 1.2;
        let lam0 = 0.9;
        let err = |steps: usize| -> f64 {
            let state = AtomState { phi: 0.5, lam: lam0, dphi: 0.0, dlam: 0.0 };
            let traj =
                integrate_geodesic(&[state], &ConstantPressure(c), 1.0, steps).unwrap();
            let mut worst: f64 = 0.0;
            for (k, level) in traj.states.iter().enumerate() {
                let want = lam0 * (c.sqrt() * traj.times[k]).cos();
                worst = worst.max((level[0].lam - want).abs());
                assert!((level[0].phi - 0.5).abs() < 1e-13);
            }
            worst
        };
        let e1 = err(40);
        let e2 = err(80);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn energy_drift_is_second_order() {
        let drift = |steps: usize| -> f64 {
            let state = AtomState { phi: 0.2, lam: 1.1, dphi: 0.8, dlam: -0.3 };
            let pressure = ConstantPressure(0.4);
            let traj = integrate_geodesic(&[state], &pressure, 1.0, steps).unwrap();
            let e0 = traj.states[0][0].energy(&pressure, 0.0);
            traj.states
                .iter()
                .zip(&traj.times)
                .map(|(level, &t)| (level[0].energy(&pressure, t) - e0).abs())
                .fold(0.0, f64::max)
        };
        let d1 = drift(50);
        let d2 = drift(100);
        assert!(d1 > 0.0);
        let order = (d1 / d2).log2();
        assert!(order > 1.6, "energy drift order {order}");
    }

    #[test]
    fn blow_up_is_detected_not_clamped() {
        // lambda'' = -c lambda crosses zero before t = 1 for large c.
        let state = AtomState { phi: 0.5, lam: 1.0, dphi: 0.0, dlam: 0.0 };
        match integrate_geodesic(&[state], &ConstantPressure(30.0), 1.0, 400) {
            Err(Error::BlowUp { atom: 0, time, .. }) => {
                let t_cross = std::f64::consts::FRAC_PI_2 / 30.0f64.sqrt();
                assert!((time - t_cross).abs() < 0.05, "blow-up at {time}, expected ~{t_cross}");
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    fn compression_trajectory(decouple: bool) -> Trajectory {
        let n_atoms = 30;
        let times: Vec<f64> = (0..6).map(|k| k as f64 / 5.0).collect();
        let states = times
            .iter()
            .map(|&t| {
                (0..n_atoms)
                    .map(|a| {
                        let x = a as f64 / (n_atoms - 1) as f64;
                        let scale = 1.0 - 0.5 * t;
                        AtomState {
                            phi: x * scale,
                            lam: if decouple { 1.0 } else { scale.sqrt() },
                            dphi: -0.5 * x,
                            dlam: if decouple { 0.0 } else { -0.25 / scale.sqrt() },
                        }
                    })
                    .collect()
            })
            .collect();
        Trajectory { times, states }
    }

    #[test]
    fn eulerian_consistency_cases() {
        // Identity flow: zero residual.
        let times: Vec<f64> = (0..4).map(|k| k as f64 / 3.0).collect();
        let states = times
            .iter()
            .map(|_| {
                (0..10)
                    .map(|a| AtomState {
                        phi: a as f64 / 9.0,
                        lam: 1.0,
                        dphi: 0.0,
                        dlam: 0.0,
                    })
                    .collect()
            })
            .collect();
        let identity = Trajectory { times, states };
        let report = eulerian_consistency(&identity, 33).unwrap();
        assert_eq!(report.max_residual, 0.0);

        // Linear compression with the matched radius: u is linear in x, so
        // interpolation and central differences are exact.
        let report = eulerian_consistency(&compression_trajectory(false), 33).unwrap();
        assert!(report.max_residual < 1e-10, "residual {}", report.max_residual);

        // Radius decoupled from the Jacobian: residual bounded away from 0.
        let report = eulerian_consistency(&compression_trajectory(true), 33).unwrap();
        assert!(report.max_residual > 0.4, "residual {}", report.max_residual);
    }

    #[test]
    fn eulerian_consistency_rejects_crossing_atoms() {
        let times = vec![0.0, 1.0];
        let states = vec![
            vec![
                AtomState { phi: 0.2, lam: 1.0, dphi: 0.0, dlam: 0.0 },
                AtomState { phi: 0.8, lam: 1.0, dphi: 0.0, dlam: 0.0 },
            ],
            vec![
                AtomState { phi: 0.5, lam: 1.0, dphi: 0.0, dlam: 0.0 },
                AtomState { phi: 0.5, lam: 1.0, dphi: 0.0, dlam: 0.0 },
            ],
        ];
        assert!(matches!(
            eulerian_consistency(&Trajectory { times, states }, 9),
            Err(Error::NonInvertibleFlow { level: 1 })
        ));
    }

    fn constant_trajectory(lam: f64, k: usize) -> Trajectory {
        let times: Vec<f64> = (0..k).map(|n| n as f64 / (k - 1) as f64).collect();
        let states = times
            .iter()
            .map(|_| vec![AtomState { phi: 0.5, lam, dphi: 0.0, dlam: 0.0 }])
            .collect();
        Trajectory { times, states }
    }

    #[test]
    fn gv_zero_pressure_margin() {
        let traj = constant_trajectory(1.0, 5);
        let report = gv_condition_check(&traj, &ZeroPressure, 1.0).unwrap();
        assert!(report.rho_condition);
        assert_eq!(report.rho_margin, 1.5);
        assert_eq!(report.pressure_sup, 0.0);
        assert_eq!(report.hessian_bound_observed, 0.0);
        assert!(report.oscillation_ok);
    }

    #[test]
    fn gv_threshold_for_ratio_two() {
        // Constant radius gives ratio exactly 2; with T = 1 the pressure
        // inequality flips exactly at |P| = 3/26.
        let traj = constant_trajectory(1.0, 5);
        let threshold: f64 = 3.0 / 26.0;
        assert!((threshold - 0.115385).abs() < 1e-6);
        let below =
            gv_condition_check(&traj, &ConstantPressure(threshold - 1e-9), 1.0).unwrap();
        assert!((below.radius_ratio - 2.0).abs() < 1e-15);
        assert!(below.rho_condition);
        let at = gv_condition_check(&traj, &ConstantPressure(threshold), 1.0).unwrap();
        assert!(!at.rho_condition, "inequality is strict");
        let above =
            gv_condition_check(&traj, &ConstantPressure(threshold + 1e-9), 1.0).unwrap();
        assert!(!above.rho_condition);
        // Hessian block for constant pressure is diag(2P, 2P).
        assert!((at.hessian_bound_observed - 2.0 * threshold).abs() < 1e-15);
    }

    #[test]
    fn gv_monotone_in_pressure_scale() {
        let traj = constant_trajectory(0.8, 4);
        for c in [0.01, 0.05, 0.2, 1.0] {
            let base = gv_condition_check(&traj, &ConstantPressure(c), 1.0).unwrap();
            let scaled = gv_condition_check(&traj, &ConstantPressure(2.0 * c), 1.0).unwrap();
            // Scaling up the pressure can only lose the condition.
            assert!(!(scaled.rho_condition && !base.rho_condition));
            assert!(scaled.rho_margin <= base.rho_margin);
        }
    }

    #[test]
    fn trajectory_exports_to_path_measure() {
        let p = ConePoint::new(0.1, 1.0).unwrap();
        let q = ConePoint::new(0.6, 1.3).unwrap();
        let state0 = geodesic_state(&p, &q, 1.0).unwrap();
        let traj = integrate_geodesic(&[state0], &ZeroPressure, 1.0, 16).unwrap();
        let measure = traj.to_path_measure(&[1.0]).unwrap();
        assert_eq!(measure.k_levels(), 17);
        // Geodesic action equals squared distance over T.
        let want = cone_distance(&p, &q).powi(2);
        assert!((measure.total_action() - want).abs() < 1e-3 * want);
    }
}
