//! Fixed-step closed-loop simulation with safety, dissipation and
//! convergence monitors.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ControlRecord, ControllerConfig};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::lifting::Vector;
use crate::plant::{LiftedDynamics, LiftedState, Plant};

/// Per-step allowance for `V` increases, relative to `max(1, V)`.
pub const V_SLACK: f64 = 1e-8;

pub const DEFAULT_SETTLE_TOL: f64 = 1e-2;

pub const DEFAULT_INTERIOR_SCALE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_final: f64) -> Self {
        IntegratorConfig {
            dt,
            t_final,
            method: Method::Rk4,
            record_every: 1,
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final ({}) must be at least dt ({})",
                self.t_final, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of integration steps; guards against `t_final/dt` landing a
    /// hair under an integer.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt + 1e-9).floor() as usize
    }

    pub fn expected_samples(&self) -> usize {
        self.steps() / self.record_every + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<const N: usize> {
    pub t: f64,
    pub x1: Vector<N>,
    pub x2: Vector<N>,
    pub z1: Vector<N>,
    pub z2: Vector<N>,
    pub zeta2: Vector<N>,
    pub e1: Vector<N>,
    pub e2: Vector<N>,
    pub u: Vector<N>,
    pub v: f64,
    pub vdot: f64,
    pub in_safe_set: bool,
}

impl<const N: usize> Sample<N> {
    fn new(t: f64, s: &LiftedState<N>, rec: &ControlRecord<N>, in_safe_set: bool) -> Self {
        Sample {
            t,
            x1: s.x1,
            x2: s.x2,
            z1: s.z1,
            z2: s.z2,
            zeta2: s.zeta2,
            e1: rec.e1,
            e2: rec.e2,
            u: rec.u,
            v: rec.v,
            vdot: rec.vdot,
            in_safe_set,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Integration step during which the violation occurred.
    pub step: usize,
    pub time: f64,
    /// Number of samples kept; the trajectory is truncated here.
    pub truncated_at: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub samples: Vec<Sample<N>>,
    pub violation: Option<Violation>,
    /// Smallest relative margin seen at any evaluated state (every RK4 stage
    /// for `simulate`); `+∞` for unconstrained components.
    pub stage_margin_x1: Vector<N>,
    pub stage_margin_x2: Vector<N>,
}

impl<const N: usize> Trajectory<N> {
    fn new() -> Self {
        Trajectory {
            samples: Vec::new(),
            violation: None,
            stage_margin_x1: Vector::repeat(f64::INFINITY),
            stage_margin_x2: Vector::repeat(f64::INFINITY),
        }
    }

    fn track<P: Plant<N>>(&mut self, lifted: &LiftedDynamics<P, N>, x1: &Vector<N>, x2: &Vector<N>) {
        fold_margins(&mut self.stage_margin_x1, &lifted.cfg1.margins(x1));
        fold_margins(&mut self.stage_margin_x2, &lifted.cfg2.margins(x2));
    }

    pub fn last(&self) -> Option<&Sample<N>> {
        self.samples.last()
    }

    pub fn csv_header() -> String {
        let mut cols = vec!["t".to_string()];
        for name in ["x1", "x2", "z1", "z2", "e1", "e2", "u"] {
            cols.extend((1..=N).map(|i| format!("{name}_{i}")));
        }
        cols.extend(["V", "Vdot", "in_safe_set"].map(String::from));
        cols.join(",")
    }

    /// Header row, then one row per sample; floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::csv_header())?;
        for s in &self.samples {
            let mut row = format!("{:.16e}", s.t);
            for v in [&s.x1, &s.x2, &s.z1, &s.z2, &s.e1, &s.e2, &s.u] {
                for x in v.iter() {
                    row.push_str(&format!(",{x:.16e}"));
                }
            }
            row.push_str(&format!(
                ",{:.16e},{:.16e},{}",
                s.v,
                s.vdot,
                u8::from(s.in_safe_set)
            ));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn fold_margins<const N: usize>(acc: &mut Vector<N>, m: &[Option<f64>; N]) {
    for (a, m) in acc.iter_mut().zip(m) {
        if let Some(m) = m {
            *a = a.min(*m);
        }
    }
}

type State<const N: usize> = (Vector<N>, Vector<N>);

fn axpy<const N: usize>(y: &State<N>, h: f64, k: &State<N>) -> State<N> {
    (y.0 + h * k.0, y.1 + h * k.1)
}

fn finite<const N: usize>(k: &State<N>) -> bool {
    k.0.iter().chain(k.1.iter()).all(|v| v.is_finite())
}

/// One step from `y` given the derivative `k1` already evaluated there.
fn advance<const N: usize, F>(method: Method, dt: f64, y: &State<N>, k1: State<N>, mut f: F) -> Result<State<N>>
where
    F: FnMut(&State<N>) -> Result<State<N>>,
{
    match method {
        Method::Euler => Ok(axpy(y, dt, &k1)),
        Method::Rk4 => {
            let k2 = f(&axpy(y, 0.5 * dt, &k1))?;
            let k3 = f(&axpy(y, 0.5 * dt, &k2))?;
            let k4 = f(&axpy(y, dt, &k3))?;
            let w = dt / 6.0;
            Ok((
                y.0 + w * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                y.1 + w * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            ))
        }
    }
}

/// Integrates the closed loop in physical coordinates. The input is
/// recomputed at every stage, and every stage state must lie strictly inside
/// the safe set; the run halts with a [`Violation`] otherwise.
///
/// States closer to a bound than f64 resolves (|z| beyond about 18 for
/// atanh) cannot be represented here; use [`simulate_lifted`] for those.
pub fn simulate<P: Plant<N>, const N: usize>(
    lifted: &LiftedDynamics<P, N>,
    cc: &ControllerConfig<N>,
    x1_0: &Vector<N>,
    x2_0: &Vector<N>,
    ic: &IntegratorConfig,
) -> Result<Trajectory<N>> {
    ic.validate()?;
    lifted.state_from_x(x1_0, x2_0)?;

    let field = |y: &State<N>| -> Result<(State<N>, LiftedState<N>)> {
        let s = lifted.state_from_x(&y.0, &y.1)?;
        let u = cc.input(lifted, &s)?;
        let k = lifted.plant.vector_field(&y.0, &y.1, &u)?;
        if !finite(&k) {
            return Err(Error::Singular("non-finite closed-loop vector field".into()));
        }
        Ok((k, s))
    };

    let mut traj = Trajectory::new();
    traj.samples.reserve(ic.expected_samples());
    let mut y: State<N> = (*x1_0, *x2_0);
    let steps = ic.steps();
    for step in 0..=steps {
        let t = step as f64 * ic.dt;
        let halt = |traj: &mut Trajectory<N>, e: Error| {
            traj.violation = Some(Violation {
                step,
                time: t,
                truncated_at: traj.samples.len(),
                reason: e.to_string(),
            });
        };
        traj.track(lifted, &y.0, &y.1);
        let (k1, s) = match field(&y) {
            Ok(v) => v,
            Err(e) => {
                halt(&mut traj, e);
                break;
            }
        };
        if step % ic.record_every == 0 {
            match cc.evaluate(lifted, &s) {
                Ok(rec) => traj.samples.push(Sample::new(t, &s, &rec, true)),
                Err(e) => {
                    halt(&mut traj, e);
                    break;
                }
            }
        }
        if step == steps {
            break;
        }
        let next = advance(ic.method, ic.dt, &y, k1, |stage| {
            traj.track(lifted, &stage.0, &stage.1);
            field(stage).map(|(k, _)| k)
        });
        match next {
            Ok(n) if n.0.iter().chain(n.1.iter()).all(|v| v.is_finite()) => y = n,
            Ok(_) => {
                halt(&mut traj, Error::Singular("state became non-finite".into()));
                break;
            }
            Err(e) => {
                halt(&mut traj, e);
                break;
            }
        }
    }
    Ok(traj)
}

/// Integrates the lifted dynamics `ż₁ = 𝒢₁`, `ż₂ = ℱ₂ + 𝒢₂u` directly and
/// attaches the recovered physical trajectory.
pub fn simulate_lifted<P: Plant<N>, const N: usize>(
    lifted: &LiftedDynamics<P, N>,
    cc: &ControllerConfig<N>,
    z1_0: &Vector<N>,
    z2_0: &Vector<N>,
    ic: &IntegratorConfig,
) -> Result<Trajectory<N>> {
    ic.validate()?;
    let field = |y: &State<N>| -> Result<(State<N>, LiftedState<N>)> {
        let s = lifted.state_from_z(&y.0, &y.1);
        let u = cc.input(lifted, &s)?;
        let k = (lifted.g1_lifted(&s)?, lifted.f2_lifted(&s) + lifted.g2_lifted(&s)? * u);
        if !finite(&k) {
            return Err(Error::Singular("non-finite lifted vector field".into()));
        }
        Ok((k, s))
    };

    let mut traj = Trajectory::new();
    traj.samples.reserve(ic.expected_samples());
    let mut y: State<N> = (*z1_0, *z2_0);
    let steps = ic.steps();
    for step in 0..=steps {
        let t = step as f64 * ic.dt;
        let outcome = field(&y).and_then(|(k1, s)| {
            traj.track(lifted, &s.x1, &s.x2);
            if step % ic.record_every == 0 {
                let rec = cc.evaluate(lifted, &s)?;
                let inside = lifted.cfg1.contains(&s.x1) && lifted.cfg2.contains(&s.x2);
                traj.samples.push(Sample::new(t, &s, &rec, inside));
            }
            if step == steps {
                return Ok(None);
            }
            advance(ic.method, ic.dt, &y, k1, |stage| field(stage).map(|(k, _)| k)).map(Some)
        });
        match outcome {
            Ok(Some(n)) => y = n,
            Ok(None) => break,
            Err(e) => {
                traj.violation = Some(Violation {
                    step,
                    time: t,
                    truncated_at: traj.samples.len(),
                    reason: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub invariance_ok: bool,
    /// Smallest relative margin `(x̄ᵢ - |xᵢ|)/x̄ᵢ` over constrained components;
    /// `None` when nothing is constrained.
    pub min_margin: Option<f64>,
    pub min_margin_x1: Vec<Option<f64>>,
    pub min_margin_x2: Vec<Option<f64>>,
    pub v_monotone_ok: bool,
    /// Largest increase of `V` between consecutive samples (≤ 0 if none).
    pub worst_v_increase: f64,
    /// First sample time after which `‖x₁ - x₁d‖∞` stays below the tolerance.
    pub settling_time: Option<f64>,
    pub settle_tol: f64,
    pub final_x1_error: Option<f64>,
    pub final_x2_norm: Option<f64>,
    pub truncated_at: Option<usize>,
    pub violation: Option<String>,
}

impl MonitorReport {
    pub fn settled(&self) -> bool {
        self.settling_time.is_some()
    }

    pub fn all_ok(&self) -> bool {
        self.invariance_ok && self.v_monotone_ok && self.settled()
    }
}

pub fn monitor<const N: usize>(
    traj: &Trajectory<N>,
    cc: &ControllerConfig<N>,
    settle_tol: f64,
) -> MonitorReport {
    let mut m1 = traj.stage_margin_x1;
    let mut m2 = traj.stage_margin_x2;
    for s in &traj.samples {
        fold_margins(&mut m1, &cc.cfg1.margins(&s.x1));
        fold_margins(&mut m2, &cc.cfg2.margins(&s.x2));
    }
    let as_opts = |m: &Vector<N>| -> Vec<Option<f64>> {
        m.iter().map(|&v| v.is_finite().then_some(v)).collect()
    };
    let min_margin_x1 = as_opts(&m1);
    let min_margin_x2 = as_opts(&m2);
    let min_margin = min_margin_x1
        .iter()
        .chain(&min_margin_x2)
        .flatten()
        .copied()
        .reduce(f64::min);

    let invariance_ok = traj.violation.is_none()
        && traj.samples.iter().all(|s| s.in_safe_set)
        && min_margin.is_none_or(|m| m > 0.0);

    let mut worst = f64::NEG_INFINITY;
    let mut monotone = true;
    for w in traj.samples.windows(2) {
        let dv = w[1].v - w[0].v;
        worst = worst.max(dv);
        if !(dv <= V_SLACK * w[0].v.max(1.0)) {
            monotone = false;
        }
    }
    if traj.samples.iter().any(|s| !s.v.is_finite()) {
        monotone = false;
    }

    let err = |s: &Sample<N>| (s.x1 - cc.x1d).amax();
    let mut settling_time = None;
    for s in traj.samples.iter().rev() {
        if err(s) < settle_tol {
            settling_time = Some(s.t);
        } else {
            break;
        }
    }
    if traj.violation.is_some() {
        settling_time = None;
    }

    MonitorReport {
        invariance_ok,
        min_margin,
        min_margin_x1,
        min_margin_x2,
        v_monotone_ok: monotone,
        worst_v_increase: if worst.is_finite() { worst } else { 0.0 },
        settling_time,
        settle_tol,
        final_x1_error: traj.last().map(err),
        final_x2_norm: traj.last().map(|s| s.x2.amax()),
        truncated_at: traj.violation.as_ref().map(|v| v.truncated_at),
        violation: traj.violation.as_ref().map(|v| v.reason.clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
}

impl Gains {
    pub fn controller<P: Plant<N>, const N: usize>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        x1d: Vector<N>,
    ) -> Result<ControllerConfig<N>> {
        let cc = ControllerConfig::new(lifted, self.k1, x1d)?;
        match self.k2 {
            Some(k2) => cc.with_k2(k2),
            None => Ok(cc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub count: usize,
    pub seed: u64,
    /// Draws are uniform over the safe box scaled by this factor.
    pub interior_scale: f64,
    pub integrator: IntegratorConfig,
    pub settle_tol: f64,
    pub keep_trajectories: bool,
}

impl MonteCarloConfig {
    pub fn new(count: usize, seed: u64, integrator: IntegratorConfig) -> Self {
        MonteCarloConfig {
            count,
            seed,
            interior_scale: DEFAULT_INTERIOR_SCALE,
            integrator,
            settle_tol: DEFAULT_SETTLE_TOL,
            keep_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub index: usize,
    pub x1_0: Vec<f64>,
    pub x2_0: Vec<f64>,
    pub x1d: Vec<f64>,
    pub report: MonitorReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary<const N: usize> {
    pub count: usize,
    pub seed: u64,
    pub interior_scale: f64,
    pub invariance_pass: usize,
    pub dissipation_pass: usize,
    pub settled: usize,
    pub runs: Vec<RunOutcome>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory<N>>,
}

impl<const N: usize> MonteCarloSummary<N> {
    pub fn all_pass(&self) -> bool {
        self.runs.iter().all(|r| r.report.all_ok())
    }
}

/// The initial state and command of draw `index`; independent of how many
/// other draws exist or in which order they run.
pub fn draw_case<const N: usize>(
    b1: &Vector<N>,
    b2: &Vector<N>,
    scale: f64,
    seed: u64,
    index: usize,
) -> (Vector<N>, Vector<N>, Vector<N>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut draw = |b: &Vector<N>| Vector::<N>::from_fn(|i, _| scale * b[i] * rng.gen_range(-1.0..1.0));
    let x1 = draw(b1);
    let x2 = draw(b2);
    let x1d = draw(b1);
    (x1, x2, x1d)
}

pub fn monte_carlo<P: Plant<N>, const N: usize>(
    lifted: &LiftedDynamics<P, N>,
    gains: &Gains,
    mc: &MonteCarloConfig,
) -> Result<MonteCarloSummary<N>> {
    monte_carlo_with(lifted, gains, mc, Execution::default())
}

/// Seeded sweep over random initial states and commands. Results come back
/// in draw order regardless of `exec`.
pub fn monte_carlo_with<P: Plant<N>, const N: usize>(
    lifted: &LiftedDynamics<P, N>,
    gains: &Gains,
    mc: &MonteCarloConfig,
    exec: Execution,
) -> Result<MonteCarloSummary<N>> {
    if mc.count == 0 {
        return Err(Error::Config("Monte-Carlo count must be at least 1".into()));
    }
    if !(mc.interior_scale > 0.0 && mc.interior_scale < 1.0) {
        return Err(Error::Config(format!(
            "interior scale must lie in (0, 1), got {}",
            mc.interior_scale
        )));
    }
    mc.integrator.validate()?;
    let b1 = *lifted.cfg1.bounds.limits();
    let b2 = *lifted.cfg2.bounds.limits();

    let run = |index: usize| -> Result<(RunOutcome, Trajectory<N>)> {
        let (x1, x2, x1d) = draw_case(&b1, &b2, mc.interior_scale, mc.seed, index);
        let cc = gains.controller(lifted, x1d)?;
        let traj = simulate(lifted, &cc, &x1, &x2, &mc.integrator)?;
        let report = monitor(&traj, &cc, mc.settle_tol);
        Ok((
            RunOutcome {
                index,
                x1_0: x1.as_slice().to_vec(),
                x2_0: x2.as_slice().to_vec(),
                x1d: x1d.as_slice().to_vec(),
                report,
            },
            traj,
        ))
    };
    let results = exec::map_indices(exec, mc.count, run);

    let mut summary = MonteCarloSummary {
        count: mc.count,
        seed: mc.seed,
        interior_scale: mc.interior_scale,
        invariance_pass: 0,
        dissipation_pass: 0,
        settled: 0,
        runs: Vec::with_capacity(mc.count),
        trajectories: Vec::new(),
    };
    for r in results {
        let (outcome, traj) = r?;
        summary.invariance_pass += usize::from(outcome.report.invariance_ok);
        summary.dissipation_pass += usize::from(outcome.report.v_monotone_ok);
        summary.settled += usize::from(outcome.report.settled());
        summary.runs.push(outcome);
        if mc.keep_trajectories {
            summary.trajectories.push(traj);
        }
    }
    Ok(summary)
}
