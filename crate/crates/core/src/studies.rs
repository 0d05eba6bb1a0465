//! Two numerical illustrations on the double integrator: how much of the
//! position box a second-order barrier condition gives up, and how a
//! quadratic second-stage Lyapunov term makes the lifted closed loop stiff.

use std::io::{self, Write};

use nalgebra::vector;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::lifting::{Bounds, LiftConfig};
use crate::plant::{DoubleIntegrator, LiftedDynamics};
use crate::sigmoid::SigmoidFamily;

pub const DEFAULT_ALPHA1: f64 = 1.0;
pub const DEFAULT_X2_MAX: f64 = 2.0;
pub const MIN_RESOLUTION: usize = 10;

/// Membership in `C₀ = {h ≥ 0}` and `C₁ = {ḣ + α₁h ≥ 0}` for
/// `h = 1 - x₁²` along `ẋ₁ = x₂`, so `ḣ = -2x₁x₂`.
pub fn hocbf_membership(x1: f64, x2: f64, alpha1: f64) -> (bool, bool) {
    let h = 1.0 - x1 * x1;
    let hdot = -2.0 * x1 * x2;
    (h >= 0.0, hdot + alpha1 * h >= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub x1: f64,
    pub x2: f64,
    pub in_c0: bool,
    pub in_c1: bool,
}

impl GridPoint {
    pub fn excluded(&self) -> bool {
        self.in_c0 && !self.in_c1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HocbfGrid {
    pub alpha1: f64,
    pub resolution: usize,
    pub x2_max: f64,
    /// Row-major: `x₁` varies slowest.
    pub points: Vec<GridPoint>,
}

/// `n` points spanning `[-half, half]` inclusive, exactly antisymmetric.
fn symmetric_linspace(half: f64, n: usize) -> impl Iterator<Item = f64> {
    let d = (n - 1) as f64;
    (0..n).map(move |i| half * (2.0 * i as f64 - d) / d)
}

impl HocbfGrid {
    /// `resolution × resolution` grid over `[-1, 1] × [-x2_max, x2_max]`.
    pub fn compute(alpha1: f64, resolution: usize, x2_max: f64, exec: Execution) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha1.is_finite()) {
            return Err(Error::Config(format!("alpha1 must be positive, got {alpha1}")));
        }
        if resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "grid resolution must be at least {MIN_RESOLUTION}, got {resolution}"
            )));
        }
        if !(x2_max > 0.0 && x2_max.is_finite()) {
            return Err(Error::Config(format!("x2_max must be positive, got {x2_max}")));
        }
        let x2s: Vec<f64> = symmetric_linspace(x2_max, resolution).collect();
        let x1s: Vec<f64> = symmetric_linspace(1.0, resolution).collect();
        let rows = exec::map_indices(exec, resolution, |i| {
            let x1 = x1s[i];
            x2s.iter()
                .map(|&x2| {
                    let (in_c0, in_c1) = hocbf_membership(x1, x2, alpha1);
                    GridPoint { x1, x2, in_c0, in_c1 }
                })
                .collect::<Vec<_>>()
        });
        Ok(HocbfGrid {
            alpha1,
            resolution,
            x2_max,
            points: rows.into_iter().flatten().collect(),
        })
    }

    /// Share of grid points inside `C₀` but outside `C₁`.
    pub fn fraction_excluded(&self) -> f64 {
        let n = self.points.iter().filter(|p| p.excluded()).count();
        n as f64 / self.points.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x1,x2,inC0,inC1")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.16e},{:.16e},{},{}",
                p.x1,
                p.x2,
                u8::from(p.in_c0),
                u8::from(p.in_c1)
            )?;
        }
        Ok(())
    }
}

/// Fraction of a `resolution²` grid over `[-1, 1] × [-2, 2]` that satisfies
/// the position constraint but not the derived barrier condition.
pub fn conservatism_fraction(alpha1: f64, resolution: usize) -> Result<f64> {
    Ok(HocbfGrid::compute(alpha1, resolution, DEFAULT_X2_MAX, Execution::default())?.fraction_excluded())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    /// Sigmoid-integral second stage.
    Proposed,
    /// Quadratic `½e₂²` second stage.
    Classical,
}

impl LawKind {
    pub fn name(self) -> &'static str {
        match self {
            LawKind::Proposed => "proposed",
            LawKind::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub k1: f64,
    pub k2: f64,
    pub z1d: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Only every `record_every`-th step is kept for CSV output; the
    /// maxima are taken over every step.
    pub record_every: usize,
    /// A run converges if `max(|e₁|, |x₂|)` ends below this.
    pub converge_tol: f64,
}

impl ComparisonConfig {
    pub fn new(k1: f64, z1d: f64) -> Self {
        ComparisonConfig {
            k1,
            k2: k1.recip(),
            z1d,
            dt: 1e-4,
            t_final: 20.0,
            record_every: 10,
            converge_tol: 1e-3,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("k1", self.k1), ("k2", self.k2), ("dt", self.dt), ("t_final", self.t_final)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.z1d.is_finite() {
            return Err(Error::Config(format!("z1d must be finite, got {}", self.z1d)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.t_final < self.dt {
            return Err(Error::Config("t_final must be at least dt".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonStep {
    pub t: f64,
    pub z1: f64,
    pub z2: f64,
    pub e1: f64,
    pub u: f64,
    pub z2dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawRun {
    pub law: LawKind,
    pub z1_0: f64,
    pub z2_0: f64,
    /// `|ż₂|` at the initial state.
    pub first_step_z2dot: f64,
    pub max_abs_z2dot: f64,
    pub max_abs_u: f64,
    pub max_abs_e1: f64,
    pub steps_completed: usize,
    pub failed: bool,
    pub failure: Option<String>,
    pub failure_time: Option<f64>,
    pub final_e1: f64,
    pub final_z2: f64,
    pub converged: bool,
    #[serde(skip)]
    pub steps: Vec<ComparisonStep>,
}

impl LawRun {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,z1,z2,e1,u,z2dot")?;
        for s in &self.steps {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.z1, s.z2, s.e1, s.u, s.z2dot
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCase {
    pub z1_0: f64,
    pub z2_0: f64,
    pub proposed: LawRun,
    pub classical: LawRun,
}

impl ComparisonCase {
    /// Classical over proposed `|ż₂|` at the initial state.
    pub fn first_step_ratio(&self) -> f64 {
        self.classical.first_step_z2dot / self.proposed.first_step_z2dot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: ComparisonConfig,
    pub cases: Vec<ComparisonCase>,
}

/// Double integrator with a free position and `|x₂| < 1` lifted by atanh,
/// i.e. `ż₁ = tanh z₂`, `ż₂ = cosh²(z₂) u`.
pub fn comparison_plant() -> LiftedDynamics<DoubleIntegrator, 1> {
    let unit = Bounds::new(vector![1.0]).expect("unit bound is valid");
    LiftedDynamics::new(
        DoubleIntegrator,
        LiftConfig::uniform(unit, SigmoidFamily::Identity),
        LiftConfig::uniform(unit, SigmoidFamily::Atanh),
    )
}

struct LawEval {
    u: f64,
    dz1: f64,
    dz2: f64,
}

fn eval_law(
    lifted: &LiftedDynamics<DoubleIntegrator, 1>,
    cc: &ControllerConfig<1>,
    law: LawKind,
    z1: f64,
    z2: f64,
) -> Result<LawEval> {
    let (z1v, z2v) = (vector![z1], vector![z2]);
    let u = match law {
        LawKind::Proposed => cc.control(lifted, &z1v, &z2v)?[0],
        LawKind::Classical => cc.classical_control_di(lifted, &z1v, &z2v)?,
    };
    let (dz1, dz2) = lifted.lifted_field(&z1v, &z2v, &vector![u])?;
    let ev = LawEval { u, dz1: dz1[0], dz2: dz2[0] };
    if !(ev.u.is_finite() && ev.dz1.is_finite() && ev.dz2.is_finite()) {
        return Err(Error::Singular(format!(
            "non-finite closed loop at z = ({z1:e}, {z2:e})"
        )));
    }
    Ok(ev)
}

/// Runs one law from one initial condition with RK4 in lifted
/// coordinates. Numerical breakdown ends the run and is recorded.
pub fn run_law(cfg: &ComparisonConfig, law: LawKind, z1_0: f64, z2_0: f64) -> Result<LawRun> {
    cfg.validate()?;
    let lifted = comparison_plant();
    // x₁ is the identity lift, so z₁d is also the position command
    let cc = ControllerConfig::new(&lifted, cfg.k1, vector![cfg.z1d])?;
    let cc = if (cfg.k2 - cc.k2).abs() > 0.0 { cc.with_k2(cfg.k2)? } else { cc };

    let f = |z1: f64, z2: f64| eval_law(&lifted, &cc, law, z1, z2);
    let mut run = LawRun {
        law,
        z1_0,
        z2_0,
        first_step_z2dot: f64::NAN,
        max_abs_z2dot: 0.0,
        max_abs_u: 0.0,
        max_abs_e1: 0.0,
        steps_completed: 0,
        failed: false,
        failure: None,
        failure_time: None,
        final_e1: z1_0 - cfg.z1d,
        final_z2: z2_0,
        converged: false,
        steps: Vec::new(),
    };
    let n = (cfg.t_final / cfg.dt + 1e-9).floor() as usize;
    let (mut z1, mut z2) = (z1_0, z2_0);
    for step in 0..=n {
        let t = step as f64 * cfg.dt;
        let stepped = f(z1, z2).and_then(|k1| {
            let e1 = z1 - cfg.z1d;
            if step == 0 {
                run.first_step_z2dot = k1.dz2.abs();
            }
            run.max_abs_z2dot = run.max_abs_z2dot.max(k1.dz2.abs());
            run.max_abs_u = run.max_abs_u.max(k1.u.abs());
            run.max_abs_e1 = run.max_abs_e1.max(e1.abs());
            if step % cfg.record_every == 0 {
                run.steps.push(ComparisonStep { t, z1, z2, e1, u: k1.u, z2dot: k1.dz2 });
            }
            if step == n {
                return Ok(None);
            }
            let h = cfg.dt;
            let k2 = f(z1 + 0.5 * h * k1.dz1, z2 + 0.5 * h * k1.dz2)?;
            let k3 = f(z1 + 0.5 * h * k2.dz1, z2 + 0.5 * h * k2.dz2)?;
            let k4 = f(z1 + h * k3.dz1, z2 + h * k3.dz2)?;
            let w = h / 6.0;
            Ok(Some((
                z1 + w * (k1.dz1 + 2.0 * k2.dz1 + 2.0 * k3.dz1 + k4.dz1),
                z2 + w * (k1.dz2 + 2.0 * k2.dz2 + 2.0 * k3.dz2 + k4.dz2),
            )))
        });
        match stepped {
            Ok(Some((a, b))) if a.is_finite() && b.is_finite() => {
                z1 = a;
                z2 = b;
                run.steps_completed = step + 1;
            }
            Ok(Some(_)) => {
                run.failed = true;
                run.failure = Some("state became non-finite".into());
                run.failure_time = Some(t);
                break;
            }
            Ok(None) => break,
            Err(e) => {
                run.failed = true;
                run.failure = Some(e.to_string());
                run.failure_time = Some(t);
                break;
            }
        }
    }
    run.final_e1 = z1 - cfg.z1d;
    run.final_z2 = z2;
    run.converged = !run.failed && run.final_e1.abs().max(z2.tanh().abs()) < cfg.converge_tol;
    Ok(run)
}

/// Both laws from every initial condition `(e₁(0), z₂(0))`, expressed as
/// `z₁(0) = z₁d + e₁(0)`.
pub fn conditioning_comparison(cfg: &ComparisonConfig, ics: &[(f64, f64)], exec: Execution) -> Result<ComparisonReport> {
    cfg.validate()?;
    let cases = exec::map_indices(exec, ics.len(), |i| -> Result<ComparisonCase> {
        let (e1_0, z2_0) = ics[i];
        let z1_0 = cfg.z1d + e1_0;
        Ok(ComparisonCase {
            z1_0,
            z2_0,
            proposed: run_law(cfg, LawKind::Proposed, z1_0, z2_0)?,
            classical: run_law(cfg, LawKind::Classical, z1_0, z2_0)?,
        })
    });
    Ok(ComparisonReport {
        config: *cfg,
        cases: cases.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_examples() {
        assert_eq!(hocbf_membership(0.0, 0.0, 1.0), (true, true));
        assert_eq!(hocbf_membership(0.9, 1.0, 1.0), (true, false));
        assert_eq!(hocbf_membership(1.5, 0.0, 1.0), (false, false));
        // boundary of C₀ belongs to it
        assert_eq!(hocbf_membership(1.0, 0.0, 1.0), (true, true));
    }

    #[test]
    fn grid_shape_and_symmetry() {
        let g = HocbfGrid::compute(1.0, 21, 2.0, Execution::Sequential).unwrap();
        assert_eq!(g.points.len(), 441);
        assert_eq!(g.points[0].x1, -1.0);
        assert_eq!(g.points[440].x2, 2.0);
        assert_eq!(g.points[220].x1, 0.0);
        for (i, p) in g.points.iter().enumerate() {
            let q = g.points[440 - i];
            assert_eq!((p.x1, p.x2), (-q.x1, -q.x2));
            assert_eq!(p.excluded(), q.excluded());
            assert!(p.in_c0);
        }
        let par = HocbfGrid::compute(1.0, 21, 2.0, Execution::Parallel).unwrap();
        assert_eq!(g, par);
    }

    #[test]
    fn fraction_behaviour() {
        let f1 = conservatism_fraction(1.0, 200).unwrap();
        assert!(f1 > 0.0 && f1 < 1.0);
        let f100 = conservatism_fraction(100.0, 200).unwrap();
        assert!(f100 < f1);
        // only the rows on ∂C₀ survive a huge gain: h = 0 there, so x₁x₂ > 0
        // is excluded for any α₁
        let boundary = 2.0 * 100.0 / 40_000.0;
        assert_eq!(conservatism_fraction(1e12, 200).unwrap(), boundary);
        assert!(conservatism_fraction(1.0, 5).is_err());
        assert!(conservatism_fraction(0.0, 50).is_err());
    }

    #[test]
    fn fraction_matches_area_estimate() {
        // excluded where 2x₁x₂ > 1 - x₁²; region area over the 4 × 2 box
        let area = {
            // ∫_{-1}^{1} max(0, 2 - (1 - x²)/(2|x|)) dx over x₂ ∈ (…, 2]
            let g = |x: f64| (2.0 - (1.0 - x * x) / (2.0 * x.abs())).max(0.0);
            2.0 * crate::quad::integrate(g, 0.0, 1.0, 1e-12)
        };
        let f = conservatism_fraction(1.0, 1000).unwrap();
        assert!((f - area / 8.0).abs() < 5e-3, "{f} vs {}", area / 8.0);
    }

    #[test]
    fn csv_rows() {
        let g = HocbfGrid::compute(1.0, 10, 2.0, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert_eq!(text.lines().next(), Some("x1,x2,inC0,inC1"));
    }

    fn short(k1: f64) -> ComparisonConfig {
        ComparisonConfig { t_final: 1.0, ..ComparisonConfig::new(k1, 0.0) }
    }

    #[test]
    fn proposed_rate_is_bounded() {
        let cfg = ComparisonConfig { k2: 1.0, ..short(1.0) };
        for z2 in [0.1, 3.0, 10.0] {
            let run = run_law(&cfg, LawKind::Proposed, 0.1, z2).unwrap();
            assert!(!run.failed);
            assert!(run.max_abs_z2dot <= cfg.k2 * (1.0 + cfg.k1 * run.max_abs_e1));
        }
    }

    #[test]
    fn classical_blows_up_from_large_z2() {
        let cfg = short(1.0);
        let rep = conditioning_comparison(&cfg, &[(0.1, 10.0)], Execution::Sequential).unwrap();
        let case = &rep.cases[0];
        assert!(case.classical.failed);
        assert!(!case.proposed.failed);
        assert!(case.first_step_ratio() > 1e6);
        // both first-step rates in closed form
        let (e1, t) = (0.1, f64::tanh(10.0));
        let p = (t + e1).abs();
        let c = f64::cosh(10.0).powi(2) * (e1 + t + (t + e1)).abs();
        assert!((case.proposed.first_step_z2dot / p - 1.0).abs() < 1e-12);
        assert!((case.classical.first_step_z2dot / c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn both_converge_from_small_state() {
        let cfg = ComparisonConfig::new(1.0, 0.0);
        let rep = conditioning_comparison(&cfg, &[(0.1, 0.1)], Execution::Sequential).unwrap();
        let case = &rep.cases[0];
        for run in [&case.proposed, &case.classical] {
            assert!(run.converged, "{run:?}");
            assert!(run.final_e1.abs() < 1e-3);
        }
        assert_eq!(case.proposed.steps.len(), 200_000 / 10 + 1);
    }

    #[test]
    fn comparison_rejects_bad_config() {
        assert!(run_law(&ComparisonConfig::new(0.0, 0.0), LawKind::Proposed, 0.0, 0.0).is_err());
        let cfg = ComparisonConfig { record_every: 0, ..ComparisonConfig::new(1.0, 0.0) };
        assert!(conditioning_comparison(&cfg, &[(0.0, 0.0)], Execution::Sequential).is_err());
    }
}
