use std::f64::consts::PI;

use nalgebra::{vector, Vector3};
use sigmalift::*;

fn attitude() -> LiftedDynamics<Attitude, 3> {
    LiftedDynamics::new(
        Attitude::new(vector![1.0, 2.0, 3.0]).unwrap(),
        LiftConfig::uniform(Bounds::new(Vector3::repeat(PI / 3.0)).unwrap(), SigmoidFamily::Atanh),
        LiftConfig::uniform(Bounds::new(vector![0.03, 0.02, 0.01]).unwrap(), SigmoidFamily::Atanh),
    )
}

fn speed_limited_di() -> LiftedDynamics<DoubleIntegrator, 1> {
    sigmalift::studies::comparison_plant()
}

#[test]
fn rk4_converges_at_fourth_order() {
    let l = LiftedDynamics::new(
        DoubleIntegrator,
        LiftConfig::uniform(Bounds::new(vector![1.0]).unwrap(), SigmoidFamily::Atanh),
        LiftConfig::uniform(Bounds::new(vector![1.0]).unwrap(), SigmoidFamily::Atanh),
    );
    let cc = ControllerConfig::new(&l, 1.0, vector![0.3]).unwrap();
    let final_x1 = |dt: f64| {
        let traj = simulate(&l, &cc, &vector![-0.5], &vector![0.2], &IntegratorConfig::rk4(dt, 4.0)).unwrap();
        let last = traj.last().unwrap();
        assert!((last.t - 4.0).abs() < 1e-9);
        last.x1[0]
    };
    let (a, b, c) = (final_x1(0.04), final_x1(0.02), final_x1(0.01));
    let order = ((a - b) / (b - c)).abs().log2();
    assert!(order >= 3.5, "observed order {order}");

    // explicit Euler is first order on the same problem
    let euler = |dt: f64| {
        let ic = IntegratorConfig { method: Method::Euler, ..IntegratorConfig::rk4(dt, 4.0) };
        simulate(&l, &cc, &vector![-0.5], &vector![0.2], &ic).unwrap().last().unwrap().x1[0]
    };
    let (a, b, c) = (euler(0.004), euler(0.002), euler(0.001));
    let order = ((a - b) / (b - c)).abs().log2();
    assert!((order - 1.0).abs() < 0.2, "observed order {order}");
}

#[test]
fn torque_free_rotation_conserves_energy_and_momentum() {
    let plant = Attitude::new(vector![1.0, 2.0, 3.0]).unwrap();
    let j = vector![1.0, 2.0, 3.0];
    let energy = |w: &Vector3<f64>| 0.5 * w.dot(&w.component_mul(&j));
    let momentum = |w: &Vector3<f64>| w.component_mul(&j).norm();
    let (mut q, mut w) = (vector![0.1, -0.2, 0.3], vector![0.3, -0.5, 0.2]);
    let (e0, h0) = (energy(&w), momentum(&w));
    let f = |q: &Vector3<f64>, w: &Vector3<f64>| plant.vector_field(q, w, &Vector3::zeros()).unwrap();
    let dt = 1e-3;
    for _ in 0..2000 {
        let k1 = f(&q, &w);
        let k2 = f(&(q + 0.5 * dt * k1.0), &(w + 0.5 * dt * k1.1));
        let k3 = f(&(q + 0.5 * dt * k2.0), &(w + 0.5 * dt * k2.1));
        let k4 = f(&(q + dt * k3.0), &(w + dt * k3.1));
        q += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        w += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    assert!((energy(&w) - e0).abs() < 1e-12, "{} vs {e0}", energy(&w));
    assert!((momentum(&w) - h0).abs() < 1e-12);
    // the rates actually moved, so the check is not vacuous
    assert!((w - vector![0.3, -0.5, 0.2]).amax() > 1e-2);
}

#[test]
fn monte_carlo_is_deterministic() {
    let l = attitude();
    let gains = Gains { k1: 0.1, k2: None };
    let mc = MonteCarloConfig {
        keep_trajectories: true,
        ..MonteCarloConfig::new(4, 11, IntegratorConfig::rk4(1e-2, 20.0).record_every(10))
    };
    let a = monte_carlo_with(&l, &gains, &mc, Execution::Sequential).unwrap();
    let b = monte_carlo_with(&l, &gains, &mc, Execution::Parallel).unwrap();
    let c = monte_carlo_with(&l, &gains, &mc, Execution::Parallel).unwrap();
    assert_eq!(a.runs, b.runs);
    assert_eq!(b.runs, c.runs);
    let csv = |s: &MonteCarloSummary<3>| {
        s.trajectories
            .iter()
            .map(|t| {
                let mut buf = Vec::new();
                t.write_csv(&mut buf).unwrap();
                buf
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.trajectories.len(), 4);

    // a larger sweep with the same seed reproduces the first draws
    let more = MonteCarloConfig { count: 6, keep_trajectories: false, ..mc };
    let d = monte_carlo_with(&l, &gains, &more, Execution::Sequential).unwrap();
    assert_eq!(&d.runs[..4], &a.runs[..]);
}

#[test]
fn attitude_runs_are_invariant_and_dissipative() {
    let mc = MonteCarloConfig::new(3, 5, IntegratorConfig::rk4(1e-2, 200.0).record_every(10));
    let s = monte_carlo(&attitude(), &Gains { k1: 0.1, k2: None }, &mc).unwrap();
    assert_eq!(s.invariance_pass, 3);
    assert_eq!(s.dissipation_pass, 3);
    for r in &s.runs {
        assert!(r.report.min_margin.unwrap() > 0.0);
        assert!(r.report.min_margin_x2.iter().all(|m| m.unwrap() > 0.0));
    }
}

/// Same draws as the acceptance Monte-Carlo sweep, run long enough for the
/// slowest axis to settle.
#[test]
fn attitude_draws_settle_with_a_long_horizon() {
    let mc = MonteCarloConfig::new(10, 2024, IntegratorConfig::rk4(1e-2, 7500.0).record_every(100));
    let s = monte_carlo(&attitude(), &Gains { k1: 0.1, k2: None }, &mc).unwrap();
    assert!(s.all_pass(), "{:#?}", s.runs.iter().map(|r| r.report.settling_time).collect::<Vec<_>>());
    let slowest = s.runs.iter().filter_map(|r| r.report.settling_time).fold(0.0, f64::max);
    assert!(slowest > 2000.0 && slowest < 7500.0, "{slowest}");
}

#[test]
fn velocity_limit_holds_from_aggressive_starts() {
    let l = speed_limited_di();
    let ic = IntegratorConfig::rk4(1e-3, 40.0).record_every(10);
    // far from the target the lifted velocity runs out to |z₂| ≈ 20, where x₂
    // is no longer resolvable in f64, so these run in lifted coordinates
    for (x1d, x1, x2) in [(0.0, 20.0, 0.999), (5.0, -5.0, -0.999), (-3.0, 3.0, 0.0)] {
        let cc = ControllerConfig::new(&l, 1.0, vector![x1d]).unwrap();
        let s0 = l.state_from_x(&vector![x1], &vector![x2]).unwrap();
        let traj = simulate_lifted(&l, &cc, &s0.z1, &s0.z2, &ic).unwrap();
        let rep = monitor(&traj, &cc, 1e-2);
        // z₂ winds up while the position error is large, so settling is slow
        assert!(rep.invariance_ok && rep.v_monotone_ok, "{rep:?}");
        assert!(traj.last().unwrap().v < traj.samples[0].v);
    }
    for (x1d, x1, x2) in [(0.0, 2.0, 0.9), (1.0, 0.5, -0.99), (-1.0, 0.0, 0.0)] {
        let cc = ControllerConfig::new(&l, 1.0, vector![x1d]).unwrap();
        let traj = simulate(&l, &cc, &vector![x1], &vector![x2], &ic).unwrap();
        let rep = monitor(&traj, &cc, 1e-2);
        assert!(rep.invariance_ok && rep.v_monotone_ok && rep.settled(), "{rep:?}");
        assert!(traj.stage_margin_x2[0] > 0.0);
    }
}

#[test]
fn lifted_and_physical_runs_agree_on_attitude() {
    let l = attitude();
    let cc = ControllerConfig::new(&l, 0.1, vector![0.3, -0.4, 0.5]).unwrap();
    let (x1, x2) = (vector![-0.5, 0.2, 0.1], vector![0.01, -0.015, 0.005]);
    let ic = IntegratorConfig::rk4(1e-2, 100.0).record_every(100);
    let a = simulate(&l, &cc, &x1, &x2, &ic).unwrap();
    let s0 = l.state_from_x(&x1, &x2).unwrap();
    let b = simulate_lifted(&l, &cc, &s0.z1, &s0.z2, &ic).unwrap();
    for (p, q) in a.samples.iter().zip(&b.samples) {
        assert!((p.x1 - q.x1).amax() < 1e-9);
        assert!((p.x2 - q.x2).amax() < 1e-9);
    }
}
