//! Verification suites: seeded re-runs of the library invariants plus the
//! tiny-grid exhaustive-oracle comparison, with machine-readable output
//! (one `[PASS]`/`[FAIL]` line per check and a trailing summary line).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coneflow::boundary::BoundaryMap;
use coneflow::cone::{
    cone_distance, cone_geodesic, develop, metric_norm_sq, ConePoint, ConeVelocity,
};
use coneflow::diagnostics::PlanAnalysis;
use coneflow::exhaustive::Oracle;
use coneflow::flows::random_measure;
use coneflow::gibbs::{build_cost_matrices, build_gibbs};
use coneflow::grid::{build_grid, GridConfig};
use coneflow::smooth::{
    eulerian_consistency, geodesic_state, gv_condition_check, integrate_geodesic, AtomState,
    ConstantPressure, Trajectory, ZeroPressure,
};
use coneflow::solver::{marginal_s, moment, sinkhorn_solve, SolverOptions};

type Check = (&'static str, Box<dyn FnOnce() -> Result<(), String>>);

fn run_checks(suite: &str, checks: Vec<Check>) -> i32 {
    let total = checks.len();
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("[PASS] {suite}::{name}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {suite}::{name}: {detail}");
            }
        }
    }
    println!("suite={suite} checks={total} passed={} failed={failed}", total - failed);
    if failed > 0 {
        1
    } else {
        0
    }
}

fn ensure(cond: bool, detail: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(detail)
    }
}

fn random_point(rng: &mut impl Rng) -> ConePoint {
    ConePoint::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..3.0)).expect("valid sample")
}

pub fn run_suite(suite: &str, seed: u64) -> anyhow::Result<i32> {
    match suite {
        "geometry" => Ok(geometry_suite(seed)),
        "sandbox" => Ok(sandbox_suite(seed)),
        "oracle" => Ok(oracle_suite()),
        "smooth" => Ok(smooth_suite()),
        other => anyhow::bail!("unknown suite {other:?} (geometry | sandbox | oracle | smooth)"),
    }
}

fn geometry_suite(seed: u64) -> i32 {
    let checks: Vec<Check> = vec![
        ("distance_symmetry", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..10_000 {
                let (p, q) = (random_point(&mut rng), random_point(&mut rng));
                if cone_distance(&p, &q) != cone_distance(&q, &p) {
                    return Err(format!("asymmetry at {p:?}, {q:?}"));
                }
            }
            Ok(())
        })),
        ("triangle_inequality", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            for _ in 0..10_000 {
                let (p, q, s) =
                    (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
                let slack = cone_distance(&p, &s) + cone_distance(&s, &q) + 1e-12
                    - cone_distance(&p, &q);
                if slack < 0.0 {
                    return Err(format!("violated by {slack:e} at {p:?}, {q:?}, {s:?}"));
                }
            }
            Ok(())
        })),
        ("development_isometry", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
            for _ in 0..10_000 {
                let (p, q) = (random_point(&mut rng), random_point(&mut rng));
                let (u0, v0) = develop(&p);
                let (u1, v1) = develop(&q);
                let planar = (u0 - u1).hypot(v0 - v1);
                if (planar - cone_distance(&p, &q)).abs() > 1e-12 {
                    return Err(format!("development mismatch at {p:?}, {q:?}"));
                }
            }
            Ok(())
        })),
        ("radial_one_homogeneity", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
            for _ in 0..10_000 {
                let (p, q) = (random_point(&mut rng), random_point(&mut rng));
                let lambda: f64 = rng.gen_range(0.05..5.0);
                let ps = ConePoint::new(p.x(), lambda * p.r()).expect("scaled");
                let qs = ConePoint::new(q.x(), lambda * q.r()).expect("scaled");
                let d = cone_distance(&p, &q);
                let ds = cone_distance(&ps, &qs);
                if (ds - lambda * d).abs() > 1e-12 * (1.0 + ds) {
                    return Err(format!("homogeneity off at {p:?}, {q:?}, lambda {lambda}"));
                }
            }
            Ok(())
        })),
        ("geodesic_endpoints_and_length", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
            for _ in 0..200 {
                let (p, q) = (random_point(&mut rng), random_point(&mut rng));
                let a = cone_geodesic(&p, &q, 0.0).map_err(|e| e.to_string())?;
                let b = cone_geodesic(&p, &q, 1.0).map_err(|e| e.to_string())?;
                if !a.approx_eq(&p, 0.0) || !b.approx_eq(&q, 0.0) {
                    return Err("endpoints not reproduced exactly".into());
                }
                // Chords of the geodesic add up to the distance.
                let n = 64;
                let mut total = 0.0;
                for i in 0..n {
                    let s0 = i as f64 / n as f64;
                    let s1 = (i + 1) as f64 / n as f64;
                    let z0 = cone_geodesic(&p, &q, s0).map_err(|e| e.to_string())?;
                    let z1 = cone_geodesic(&p, &q, s1).map_err(|e| e.to_string())?;
                    total += cone_distance(&z0, &z1);
                }
                if (total - cone_distance(&p, &q)).abs() > 1e-10 {
                    return Err(format!("chord sum off by {:e}", total - cone_distance(&p, &q)));
                }
            }
            Ok(())
        })),
        ("speed_integral_second_order", Box::new(|| {
            let p = ConePoint::new(0.1, 0.7).expect("valid");
            let q = ConePoint::new(0.9, 1.8).expect("valid");
            let d = cone_distance(&p, &q);
            let length = |n: usize| -> f64 {
                let h = 1.0 / n as f64;
                (0..n)
                    .map(|k| {
                        let s0 = k as f64 * h;
                        let s1 = s0 + h;
                        let a = cone_geodesic(&p, &q, s0).expect("on segment");
                        let b = cone_geodesic(&p, &q, s1).expect("on segment");
                        let mid = cone_geodesic(&p, &q, s0 + 0.5 * h).expect("on segment");
                        let vel = ConeVelocity::new((b.x() - a.x()) / h, (b.r() - a.r()) / h)
                            .expect("finite");
                        h * metric_norm_sq(&mid, &vel).sqrt()
                    })
                    .sum()
            };
            let e1 = (length(64) - d).abs();
            let e2 = (length(128) - d).abs();
            let order = (e1 / e2).log2();
            ensure((order - 2.0).abs() < 0.3, format!("observed order {order}"))
        })),
        ("worked_values", Box::new(|| {
            let p = ConePoint::new(0.0, 1.0).expect("valid");
            let q = ConePoint::new(1.0, 1.0).expect("valid");
            let d = cone_distance(&p, &q);
            ensure((d - 0.958851).abs() < 1e-6, format!("distance {d}"))?;
            let mid = cone_geodesic(&p, &q, 0.5).expect("interior");
            ensure(
                (mid.x() - 0.5).abs() < 1e-6 && (mid.r() - 0.877583).abs() < 1e-6,
                format!("midpoint {mid:?}"),
            )
        })),
    ];
    run_checks("geometry", checks)
}

fn sandbox_suite(seed: u64) -> i32 {
    let checks: Vec<Check> = vec![
        ("action_two_homogeneity", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let measure = random_measure(&mut rng, true);
                let lambda: f64 = rng.gen_range(0.3..2.5);
                let scaled_paths: Vec<Vec<ConePoint>> = (0..measure.len())
                    .map(|i| {
                        measure
                            .path(i)
                            .iter()
                            .map(|p| ConePoint::new(p.x(), lambda * p.r()).expect("valid"))
                            .collect()
                    })
                    .collect();
                let scaled = coneflow::flows::PathMeasure::new(
                    measure.times().to_vec(),
                    scaled_paths,
                    (0..measure.len()).map(|i| measure.weight(i)).collect(),
                )
                .expect("valid measure");
                let (a, b) = (measure.total_action(), scaled.total_action());
                if (b - lambda * lambda * a).abs() > 1e-12 * (1.0 + b.abs()) {
                    return Err(format!("2-homogeneity off: {a} vs {b} at lambda {lambda}"));
                }
            }
            Ok(())
        })),
        ("dilation_invariance", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            for _ in 0..200 {
                let measure = random_measure(&mut rng, false);
                let sigma = measure.sigma_radial_norm();
                let c = sigma
                    .iter()
                    .enumerate()
                    .map(|(i, s)| measure.weight(i) * s * s)
                    .sum::<f64>()
                    .sqrt();
                let theta: Vec<f64> = sigma.iter().map(|s| s / c).collect();
                let dilated = measure.dilate(&theta).map_err(|e| e.to_string())?;
                let (a0, a1) = (measure.total_action(), dilated.total_action());
                if (a0 - a1).abs() > 1e-12 * (1.0 + a0.abs()) {
                    return Err(format!("action changed under dilation: {a0} vs {a1}"));
                }
                for k in [0, measure.k_levels() - 1] {
                    let m0 = measure.homogeneous_marginal(k, 6).map_err(|e| e.to_string())?;
                    let m1 = dilated.homogeneous_marginal(k, 6).map_err(|e| e.to_string())?;
                    for (a, b) in m0.iter().zip(&m1) {
                        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                            return Err("homogeneous marginal changed under dilation".into());
                        }
                    }
                }
            }
            Ok(())
        })),
        ("rescale_to_unit_conclusions", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
            for trial in 0..200 {
                let measure = random_measure(&mut rng, false);
                let sigma = if trial % 2 == 0 {
                    measure.sigma_initial_radius()
                } else {
                    measure.sigma_radial_norm()
                };
                let c = sigma
                    .iter()
                    .enumerate()
                    .map(|(i, s)| measure.weight(i) * s * s)
                    .sum::<f64>()
                    .sqrt();
                let rescaled = measure.rescale_to_unit(&sigma).map_err(|e| e.to_string())?;
                if (rescaled.mass() - 1.0).abs() > 1e-12 {
                    return Err(format!("mass {} after rescaling", rescaled.mass()));
                }
                let sigma_out = if trial % 2 == 0 {
                    rescaled.sigma_initial_radius()
                } else {
                    rescaled.sigma_radial_norm()
                };
                for (i, s) in sigma_out.iter().enumerate() {
                    if rescaled.weight(i) > 0.0 && (s - c).abs() > 1e-12 * (1.0 + c) {
                        return Err(format!("sigma {s} != C {c} on charged path"));
                    }
                }
            }
            Ok(())
        })),
        ("b_functional_zero_pressure", Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
            for _ in 0..200 {
                let measure = random_measure(&mut rng, true);
                for i in 0..measure.len() {
                    let b = measure.b_functional(i, |_, _, _| 0.0);
                    if b != measure.path_action(i) {
                        return Err("b functional with zero pressure differs from action".into());
                    }
                }
            }
            Ok(())
        })),
    ];
    run_checks("sandbox", checks)
}

fn oracle_suite() -> i32 {
    let checks: Vec<Check> = vec![("sinkhorn_vs_exhaustive_dual_ascent", Box::new(|| {
        let grid = build_grid(&GridConfig {
            n_x: 3,
            n_r: 2,
            r_lo: 0.5,
            r_hi: 1.0,
            k_levels: 3,
            t_total: 1.0,
        })
        .map_err(|e| e.to_string())?;
        let costs = build_cost_matrices(&grid, &BoundaryMap::Identity).map_err(|e| e.to_string())?;
        let factors = build_gibbs(&costs, &grid, 0.1, 1.0).map_err(|e| e.to_string())?;
        let options = SolverOptions { tolerance: 1e-10, max_sweeps: 20_000, ..Default::default() };
        let (duals, report) = sinkhorn_solve(&factors, &grid, &options).map_err(|e| e.to_string())?;
        ensure(report.converged, format!("solver violation {:e}", report.final_violation))?;

        let oracle = Oracle::new(&grid, &costs, 0.1, 1.0).map_err(|e| e.to_string())?;
        let (oracle_duals, _, viol) = oracle.dual_ascent(1e-10, 20_000).map_err(|e| e.to_string())?;
        ensure(viol < 1e-10, format!("oracle violation {viol:e}"))?;

        for k in 0..3 {
            let got = marginal_s(&factors, &grid, &duals, k).map_err(|e| e.to_string())?;
            let want = oracle.marginal(&oracle_duals, k);
            for (g, w) in got.iter().zip(&want) {
                ensure((g - w).abs() < 1e-8, format!("marginal mismatch at level {k}"))?;
            }
            let m2_got = moment(&grid, &got, 2).map_err(|e| e.to_string())?;
            let m2_want = oracle.moment2(&want);
            for (g, w) in m2_got.iter().zip(&m2_want) {
                ensure((g - w).abs() < 1e-8, format!("moment mismatch at level {k}"))?;
            }
        }

        let analysis = PlanAnalysis::new(&factors, &grid, &duals).map_err(|e| e.to_string())?;
        let got = analysis.action();
        let want = oracle.action_parts(&oracle_duals);
        ensure(
            (got.transport - want.transport).abs() < 1e-8
                && (got.coupling - want.coupling).abs() < 1e-8,
            "action mismatch".into(),
        )?;
        ensure(
            (analysis.entropy() - oracle.entropy(&oracle_duals)).abs() < 1e-8,
            "entropy mismatch".into(),
        )?;
        ensure(
            (analysis.objective() - oracle.objective(&oracle_duals)).abs() < 1e-6,
            "objective mismatch".into(),
        )?;
        // Duals agree after the per-level zero-mean gauge.
        let ours = duals.gauge_fixed();
        let theirs = oracle_duals.gauge_fixed();
        for k in 0..3 {
            for i in 0..3 {
                ensure(
                    (ours.level(k)[i] - theirs.level(k)[i]).abs() < 1e-6,
                    format!("gauge-fixed dual mismatch at level {k}"),
                )?;
            }
        }
        Ok(())
    }))];
    run_checks("oracle", checks)
}

fn smooth_suite() -> i32 {
    let checks: Vec<Check> = vec![
        ("zero_pressure_second_order", Box::new(|| {
            let p = ConePoint::new(0.0, 1.0).expect("valid");
            let q = ConePoint::new(1.0, 1.0).expect("valid");
            let err = |steps: usize| -> f64 {
                let state0 = geodesic_state(&p, &q, 1.0).expect("valid state");
                let traj = integrate_geodesic(&[state0], &ZeroPressure, 1.0, steps)
                    .expect("integration succeeds");
                traj.states
                    .iter()
                    .zip(&traj.times)
                    .map(|(level, &t)| {
                        let want = cone_geodesic(&p, &q, t).expect("on segment");
                        let got = ConePoint::new(level[0].phi.clamp(0.0, 1.0), level[0].lam)
                            .expect("valid");
                        cone_distance(&want, &got)
                    })
                    .fold(0.0, f64::max)
            };
            let order = (err(40) / err(80)).log2();
            ensure((order - 2.0).abs() < 0.2, format!("observed order {order}"))
        })),
        ("radial_cosine_second_order", Box::new(|| {
            let c: f64 = 1.2;
            let err = |steps: usize| -> f64 {
                let state = AtomState { phi: 0.5, lam: 1.0, dphi: 0.0, dlam: 0.0 };
                let traj = integrate_geodesic(&[state], &ConstantPressure(c), 1.0, steps)
                    .expect("integration succeeds");
                traj.states
                    .iter()
                    .zip(&traj.times)
                    .map(|(level, &t)| (level[0].lam - (c.sqrt() * t).cos()).abs())
                    .fold(0.0, f64::max)
            };
            let order = (err(40) / err(80)).log2();
            ensure((order - 2.0).abs() < 0.2, format!("observed order {order}"))
        })),
        ("energy_drift_second_order", Box::new(|| {
            let drift = |steps: usize| -> f64 {
                let state = AtomState { phi: 0.2, lam: 1.1, dphi: 0.8, dlam: -0.3 };
                let pressure = ConstantPressure(0.4);
                let traj = integrate_geodesic(&[state], &pressure, 1.0, steps)
                    .expect("integration succeeds");
                let e0 = traj.states[0][0].energy(&pressure, 0.0);
                traj.states
                    .iter()
                    .zip(&traj.times)
                    .map(|(level, &t)| (level[0].energy(&pressure, t) - e0).abs())
                    .fold(0.0, f64::max)
            };
            let order = (drift(50) / drift(100)).log2();
            ensure(order > 1.6, format!("energy drift order {order}"))
        })),
        ("eulerian_consistency", Box::new(|| {
            let times: Vec<f64> = (0..5).map(|k| k as f64 / 4.0).collect();
            let compression = |decouple: bool| -> Trajectory {
                let states = times
                    .iter()
                    .map(|&t| {
                        (0..24)
                            .map(|a| {
                                let x = a as f64 / 23.0;
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
                Trajectory { times: times.clone(), states }
            };
            let matched = eulerian_consistency(&compression(false), 33).map_err(|e| e.to_string())?;
            ensure(matched.max_residual < 1e-10, format!("residual {}", matched.max_residual))?;
            let decoupled = eulerian_consistency(&compression(true), 33).map_err(|e| e.to_string())?;
            ensure(decoupled.max_residual > 0.4, "decoupled radius not detected".into())
        })),
        ("gv_threshold", Box::new(|| {
            let times: Vec<f64> = (0..5).map(|k| k as f64 / 4.0).collect();
            let states = times
                .iter()
                .map(|_| vec![AtomState { phi: 0.5, lam: 1.0, dphi: 0.0, dlam: 0.0 }])
                .collect();
            let traj = Trajectory { times, states };
            let threshold = 3.0 / 26.0;
            let below = gv_condition_check(&traj, &ConstantPressure(threshold - 1e-9), 1.0)
                .map_err(|e| e.to_string())?;
            let at = gv_condition_check(&traj, &ConstantPressure(threshold), 1.0)
                .map_err(|e| e.to_string())?;
            ensure((below.radius_ratio - 2.0).abs() < 1e-12, "ratio is not 2".into())?;
            ensure(below.rho_condition && !at.rho_condition, "threshold not exact".into())
        })),
    ];
    run_checks("smooth", checks)
}
