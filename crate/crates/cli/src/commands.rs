use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sigmalift::studies::{self, ComparisonCase, HocbfGrid, LawRun};
use sigmalift::{
    check_assumptions, list_families, monitor, monte_carlo_with, simulate, Attitude, DoubleIntegrator,
    Execution, MonteCarloConfig, Plant, SigmoidFamily, Trajectory, Vector,
};

use crate::scenario::{self, Families, Loaded, Overrides, PlantSpec, Scenario};
use crate::{CliError, Status};

const TOOL: &str = "sigmalift";
const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_AUDIT_SAMPLES: usize = 10_000;

pub struct Context {
    pub out_dir: Option<PathBuf>,
    pub overrides: Overrides,
    pub exec: Execution,
}

impl Context {
    fn out_dir(&self, sc: Option<&Scenario>) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| sc.and_then(|s| s.output.as_ref()).map(|o| o.dir.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn header(command: &str, raw: &Value) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), TOOL.into());
    m.insert("version".into(), VERSION.into());
    m.insert("command".into(), command.into());
    m.insert("scenario".into(), raw.clone());
    m
}

fn write_trajectory<const N: usize>(path: &Path, traj: &Trajectory<N>) -> Result<(), CliError> {
    write_with(path, |w| traj.write_csv(w))
}

fn status(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Calls `$body` with the scenario plant bound to `$p` at its dimension.
macro_rules! with_plant {
    ($sc:expr, |$p:ident| $body:expr) => {
        match &$sc.plant {
            PlantSpec::Attitude { inertia } => {
                let $p = Attitude::new(Vector::<3>::from_column_slice(inertia))?;
                $body
            }
            PlantSpec::DoubleIntegrator => {
                let $p = DoubleIntegrator;
                $body
            }
        }
    };
}

/// `run`: a single trajectory if the scenario has an initial condition,
/// otherwise its Monte-Carlo block.
pub fn run(ctx: &Context, path: &Path) -> Result<Status, CliError> {
    let loaded = scenario::load(path, &ctx.overrides)?;
    if loaded.scenario.initial.is_some() {
        with_plant!(loaded.scenario, |p| single(ctx, &loaded, p))
    } else if loaded.scenario.monte_carlo.is_some() {
        with_plant!(loaded.scenario, |p| batch(ctx, &loaded, p))
    } else {
        Err(CliError::Config(
            "scenario needs either `initial` or `monte_carlo`".into(),
        ))
    }
}

pub fn monte_carlo(ctx: &Context, path: &Path) -> Result<Status, CliError> {
    let loaded = scenario::load(path, &ctx.overrides)?;
    loaded.scenario.monte_carlo()?;
    with_plant!(loaded.scenario, |p| batch(ctx, &loaded, p))
}

fn single<P: Plant<N>, const N: usize>(ctx: &Context, loaded: &Loaded, plant: P) -> Result<Status, CliError> {
    let sc = &loaded.scenario;
    let lifted = sc.lifted(plant)?;
    let x1d = sc.x1d(&lifted.cfg1)?;
    let (x1, x2) = sc.initial(&lifted)?;
    let cc = sc.gains()?.controller(&lifted, x1d)?;
    let ic = sc.integrator()?;
    let tol = sc.settle_tol()?;

    let traj = simulate(&lifted, &cc, &x1, &x2, &ic)?;
    let report = monitor(&traj, &cc, tol);

    let dir = ctx.out_dir(Some(sc));
    write_trajectory(&dir.join("trajectory.csv"), &traj)?;
    let mut summary = header("run", &loaded.raw);
    summary.insert("gains".into(), json!({ "k1": cc.k1, "k2": cc.k2 }));
    summary.insert("samples".into(), traj.samples.len().into());
    summary.insert("trajectory".into(), "trajectory.csv".into());
    summary.insert("report".into(), serde_json::to_value(&report)?);
    summary.insert("pass".into(), report.all_ok().into());
    write_json(&dir.join("summary.json"), &summary)?;

    println!(
        "{}: invariance {}, dissipation {}, settling time {}",
        sc.name.as_deref().unwrap_or("run"),
        ok(report.invariance_ok),
        ok(report.v_monotone_ok),
        report
            .settling_time
            .map_or_else(|| "none".to_string(), |t| format!("{t} s")),
    );
    if let Some(v) = &report.violation {
        println!("  halted: {v}");
    }
    println!("wrote {}", dir.display());
    Ok(status(report.all_ok()))
}

fn batch<P: Plant<N>, const N: usize>(ctx: &Context, loaded: &Loaded, plant: P) -> Result<Status, CliError> {
    let sc = &loaded.scenario;
    let lifted = sc.lifted(plant)?;
    let gains = sc.gains()?;
    let spec = sc.monte_carlo()?;
    let mut mc = MonteCarloConfig::new(spec.count, spec.seed, sc.integrator()?);
    if let Some(s) = spec.interior_scale {
        mc.interior_scale = s;
    }
    mc.settle_tol = sc.settle_tol()?;
    mc.keep_trajectories = true;
    if sc.x1d.is_some() || sc.initial.is_some() {
        log::warn!("x1d and initial are ignored in Monte-Carlo mode; draws supply both");
    }

    log::info!("running {} draws with seed {}", mc.count, mc.seed);
    let summary = monte_carlo_with(&lifted, &gains, &mc, ctx.exec)?;

    let dir = ctx.out_dir(Some(sc));
    let mut files = Vec::with_capacity(summary.count);
    for (i, traj) in summary.trajectories.iter().enumerate() {
        let name = format!("run_{i:03}.csv");
        write_trajectory(&dir.join(&name), traj)?;
        files.push(name);
    }
    let mut out = header("monte-carlo", &loaded.raw);
    out.insert("gains".into(), json!({ "k1": gains.k1, "k2": gains.k2.unwrap_or(gains.k1.recip()) }));
    out.insert("trajectories".into(), files.into());
    out.insert("summary".into(), serde_json::to_value(&summary)?);
    out.insert("pass".into(), summary.all_pass().into());
    write_json(&dir.join("summary.json"), &out)?;

    for r in &summary.runs {
        println!(
            "draw {:>3}: invariance {}, dissipation {}, settling time {}",
            r.index,
            ok(r.report.invariance_ok),
            ok(r.report.v_monotone_ok),
            r.report
                .settling_time
                .map_or_else(|| "none".to_string(), |t| format!("{t} s")),
        );
    }
    println!(
        "{} draws: {} invariant, {} dissipative, {} settled",
        summary.count, summary.invariance_pass, summary.dissipation_pass, summary.settled
    );
    println!("wrote {}", dir.display());
    Ok(status(summary.all_pass()))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

#[derive(Serialize)]
struct CaseReport<'a> {
    e1_0: f64,
    z2_0: f64,
    cosh2_z2_0: f64,
    first_step_ratio: f64,
    proposed_csv: String,
    classical_csv: String,
    proposed: &'a LawRun,
    classical: &'a LawRun,
}

pub fn compare_lyapunov(ctx: &Context, path: &Path) -> Result<Status, CliError> {
    let loaded = scenario::load(path, &ctx.overrides)?;
    let sc = &loaded.scenario;
    if !matches!(sc.plant, PlantSpec::DoubleIntegrator) {
        return Err(CliError::Config(format!(
            "compare-lyapunov needs the double_integrator plant, got {}",
            sc.plant.name()
        )));
    }
    check_comparison_lifting(sc)?;
    let spec = sc.comparison()?;
    if spec.ics.is_empty() {
        return Err(CliError::Config("comparison.ics is empty".into()));
    }
    let cfg = spec.config();
    let ics: Vec<(f64, f64)> = spec.ics.iter().map(|&[e, z]| (e, z)).collect();
    let report = studies::conditioning_comparison(&cfg, &ics, ctx.exec)?;

    let dir = ctx.out_dir(Some(sc));
    let mut cases = Vec::with_capacity(report.cases.len());
    for (i, case) in report.cases.iter().enumerate() {
        let (p, c) = (format!("proposed_{i}.csv"), format!("classical_{i}.csv"));
        write_with(&dir.join(&p), |w| case.proposed.write_csv(w))?;
        write_with(&dir.join(&c), |w| case.classical.write_csv(w))?;
        cases.push(case_report(case, ics[i].0, p, c));
    }
    let mut out = header("compare-lyapunov", &loaded.raw);
    out.insert("config".into(), serde_json::to_value(report.config)?);
    out.insert("cases".into(), serde_json::to_value(&cases)?);
    write_json(&dir.join("comparison.json"), &out)?;

    println!(
        "{:>8} {:>8} {:>14} {:>14} {:>12} {:>12}  classical",
        "e1(0)", "z2(0)", "max|z2'| prop", "max|z2'| clas", "ratio(0)", "cosh^2"
    );
    for c in &cases {
        println!(
            "{:>8} {:>8} {:>14.6e} {:>14.6e} {:>12.6e} {:>12.6e}  {}",
            c.e1_0,
            c.z2_0,
            c.proposed.max_abs_z2dot,
            c.classical.max_abs_z2dot,
            c.first_step_ratio,
            c.cosh2_z2_0,
            if c.classical.failed {
                "failed"
            } else if c.classical.converged {
                "converged"
            } else {
                "not converged"
            },
        );
    }
    println!("wrote {}", dir.display());
    Ok(Status::Pass)
}

fn case_report(case: &ComparisonCase, e1_0: f64, proposed_csv: String, classical_csv: String) -> CaseReport<'_> {
    CaseReport {
        e1_0,
        z2_0: case.z2_0,
        cosh2_z2_0: case.z2_0.cosh().powi(2),
        first_step_ratio: case.first_step_ratio(),
        proposed_csv,
        classical_csv,
        proposed: &case.proposed,
        classical: &case.classical,
    }
}

/// The study's plant is fixed: free position, `|x₂| < 1` through atanh. A
/// scenario that spells out something else is rejected rather than ignored.
fn check_comparison_lifting(sc: &Scenario) -> Result<(), CliError> {
    let is = |f: &Families, want: SigmoidFamily| match f {
        Families::Uniform(s) => s == want.id(),
        Families::Each(v) => v.len() == 1 && v[0] == want.id(),
    };
    if let Some(f) = &sc.families {
        if !is(&f.x1, SigmoidFamily::Identity) || !is(&f.x2, SigmoidFamily::Atanh) {
            return Err(CliError::Config(
                "compare-lyapunov uses families x1 = identity, x2 = atanh".into(),
            ));
        }
    }
    if let Some(b) = &sc.bounds {
        if b.x2 != [1.0] {
            return Err(CliError::Config(
                "compare-lyapunov uses the velocity bound x2 = [1]".into(),
            ));
        }
    }
    Ok(())
}

pub struct HocbfArgs {
    pub scenario: Option<PathBuf>,
    pub alpha1: Option<f64>,
    pub resolution: Option<usize>,
    pub x2_max: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn hocbf_set(ctx: &Context, args: &HocbfArgs) -> Result<Status, CliError> {
    let loaded = args
        .scenario
        .as_deref()
        .map(|p| scenario::load(p, &ctx.overrides))
        .transpose()?;
    let sc = loaded.as_ref().map(|l| &l.scenario);
    let spec = sc.and_then(|s| s.hocbf.clone()).unwrap_or_default();
    let alpha1 = args.alpha1.or(spec.alpha1).unwrap_or(studies::DEFAULT_ALPHA1);
    let resolution = args.resolution.or(spec.resolution).unwrap_or(200);
    let x2_max = args.x2_max.or(spec.x2_max).unwrap_or(studies::DEFAULT_X2_MAX);

    let grid = HocbfGrid::compute(alpha1, resolution, x2_max, ctx.exec)?;
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.out_dir(sc).join("hocbf_grid.csv"));
    write_with(&path, |w| grid.write_csv(w))?;

    println!("alpha1 = {alpha1}, resolution = {resolution}, x2_max = {x2_max}");
    println!("fraction_excluded = {}", grid.fraction_excluded());
    println!("wrote {}", path.display());
    Ok(Status::Pass)
}

pub fn validate(ctx: &Context, path: &Path, samples: usize) -> Result<Status, CliError> {
    let loaded = scenario::load(path, &ctx.overrides)?;
    let sc = &loaded.scenario;
    let seed = ctx
        .overrides
        .seed
        .or(sc.monte_carlo.as_ref().map(|m| m.seed))
        .unwrap_or(0);
    let report = with_plant!(sc, |p| {
        let lifted = sc.lifted(p)?;
        check_assumptions(&lifted.plant, &lifted.cfg1.bounds, &lifted.cfg2.bounds, samples, seed)?
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(status(report.passed()))
}

pub fn families() -> Result<Status, CliError> {
    println!(
        "{:<14} {:<26} {:<28} integral V(s)",
        "id", "lift phi(x)", "unlift psi(z)"
    );
    for f in list_families() {
        let note = if f.unconstrained_only { "  (unconstrained)" } else { "" };
        println!("{:<14} {:<26} {:<28} {}{}", f.id, f.lift, f.unlift, f.integral, note);
    }
    Ok(Status::Pass)
}
