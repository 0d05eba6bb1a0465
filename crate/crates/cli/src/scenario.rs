//! Scenario files: one JSON document fully determines a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use sigmalift::{
    studies::ComparisonConfig, Bounds, Gains, IntegratorConfig, LiftConfig, LiftedDynamics, Plant,
    SigmoidFamily, Vector,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Attitude { inertia: [f64; 3] },
    DoubleIntegrator,
}

impl PlantSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PlantSpec::Attitude { .. } => "attitude",
            PlantSpec::DoubleIntegrator => "double_integrator",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec<T> {
    pub x1: T,
    pub x2: T,
}

/// A single family for every component, or one per component.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Families {
    Uniform(String),
    Each(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub count: usize,
    pub seed: u64,
    pub interior_scale: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    pub settle_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub k1: f64,
    pub k2: Option<f64>,
    #[serde(default)]
    pub z1d: f64,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub record_every: Option<usize>,
    pub converge_tol: Option<f64>,
    /// Initial conditions as `[e1(0), z2(0)]` pairs.
    pub ics: Vec<[f64; 2]>,
}

impl ComparisonSpec {
    pub fn config(&self) -> ComparisonConfig {
        let mut cfg = ComparisonConfig::new(self.k1, self.z1d);
        if let Some(k2) = self.k2 {
            cfg.k2 = k2;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(t) = self.t_final {
            cfg.t_final = t;
        }
        if let Some(r) = self.record_every {
            cfg.record_every = r;
        }
        if let Some(tol) = self.converge_tol {
            cfg.converge_tol = tol;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HocbfSpec {
    pub alpha1: Option<f64>,
    pub resolution: Option<usize>,
    pub x2_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: Option<String>,
    /// Free text; only echoed through the raw JSON.
    #[allow(dead_code)]
    pub description: Option<String>,
    pub plant: PlantSpec,
    pub bounds: Option<PairSpec<Vec<f64>>>,
    pub families: Option<PairSpec<Families>>,
    pub gains: Option<Gains>,
    pub x1d: Option<Vec<f64>>,
    pub initial: Option<PairSpec<Vec<f64>>>,
    pub monte_carlo: Option<MonteCarloSpec>,
    pub integrator: Option<IntegratorConfig>,
    pub monitor: Option<MonitorSpec>,
    pub comparison: Option<ComparisonSpec>,
    pub hocbf: Option<HocbfSpec>,
    pub output: Option<OutputSpec>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub count: Option<usize>,
}

/// A parsed scenario together with the JSON it was parsed from, after
/// overrides. Echoing `raw` and re-running it reproduces the run.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub raw: Value,
}

fn set_field(raw: &mut Value, section: &str, key: &str, v: Value) -> bool {
    match raw.get_mut(section).and_then(Value::as_object_mut) {
        Some(obj) => {
            obj.insert(key.to_string(), v);
            true
        }
        None => false,
    }
}

pub fn load(path: &Path, ov: &Overrides) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut raw: Value = serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    if !raw.is_object() {
        return Err(CliError::Config(format!(
            "{}: a scenario must be a JSON object",
            path.display()
        )));
    }
    if let Some(dt) = ov.dt {
        let hit = set_field(&mut raw, "integrator", "dt", dt.into())
            | set_field(&mut raw, "comparison", "dt", dt.into());
        if !hit {
            log::warn!("--dt given but the scenario has no integrator or comparison block");
        }
    }
    if let Some(seed) = ov.seed {
        if !set_field(&mut raw, "monte_carlo", "seed", seed.into()) {
            log::debug!("--seed given but the scenario has no monte_carlo block");
        }
    }
    if let Some(count) = ov.count {
        if !set_field(&mut raw, "monte_carlo", "count", count.into()) {
            return Err(CliError::Config("--count needs a monte_carlo block".into()));
        }
    }
    let scenario = Scenario::deserialize(&raw).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Loaded { scenario, raw })
}

fn vector<const N: usize>(name: &str, plant: &str, v: &[f64]) -> Result<Vector<N>, CliError> {
    if v.len() != N {
        return Err(CliError::Config(format!(
            "{name} has {} entries but plant {plant} has dimension {N}",
            v.len()
        )));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(CliError::Config(format!("{name}[{i}] is not finite")));
    }
    Ok(Vector::from_column_slice(v))
}

fn families<const N: usize>(name: &str, plant: &str, f: &Families) -> Result<[SigmoidFamily; N], CliError> {
    let parse = |s: &str| {
        s.parse::<SigmoidFamily>()
            .map_err(|e| CliError::Config(format!("{name}: {e}")))
    };
    match f {
        Families::Uniform(s) => Ok([parse(s)?; N]),
        Families::Each(v) => {
            if v.len() != N {
                return Err(CliError::Config(format!(
                    "{name} has {} entries but plant {plant} has dimension {N}",
                    v.len()
                )));
            }
            let mut out = [SigmoidFamily::Identity; N];
            for (slot, s) in out.iter_mut().zip(v) {
                *slot = parse(s)?;
            }
            Ok(out)
        }
    }
}

/// Strict membership in the safe box, naming the first offending component.
pub fn check_inside<const N: usize>(name: &str, x: &Vector<N>, cfg: &LiftConfig<N>) -> Result<(), CliError> {
    let b = cfg.bounds.limits();
    for i in 0..N {
        if cfg.is_constrained(i) && !(x[i].abs() < b[i]) {
            return Err(CliError::Config(format!(
                "{name}[{i}] = {} is outside the safe set: need |{name}[{i}]| < {}",
                x[i], b[i]
            )));
        }
    }
    Ok(())
}

impl Scenario {
    fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        field
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("scenario is missing `{name}`")))
    }

    pub fn lifted<P: Plant<N>, const N: usize>(&self, plant: P) -> Result<LiftedDynamics<P, N>, CliError> {
        let pname = self.plant.name();
        let bounds = Self::require(&self.bounds, "bounds")?;
        let fams = Self::require(&self.families, "families")?;
        let b1 = Bounds::new(vector::<N>("bounds.x1", pname, &bounds.x1)?)?;
        let b2 = Bounds::new(vector::<N>("bounds.x2", pname, &bounds.x2)?)?;
        let f1 = families::<N>("families.x1", pname, &fams.x1)?;
        let f2 = families::<N>("families.x2", pname, &fams.x2)?;
        Ok(LiftedDynamics::new(
            plant,
            LiftConfig::new(b1, f1),
            LiftConfig::new(b2, f2),
        ))
    }

    pub fn gains(&self) -> Result<Gains, CliError> {
        Self::require(&self.gains, "gains").copied()
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, CliError> {
        let ic = *Self::require(&self.integrator, "integrator")?;
        ic.validate()?;
        Ok(ic)
    }

    pub fn settle_tol(&self) -> Result<f64, CliError> {
        let tol = self
            .monitor
            .as_ref()
            .map_or(sigmalift::sim::DEFAULT_SETTLE_TOL, |m| m.settle_tol);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Config(format!("monitor.settle_tol must be positive, got {tol}")));
        }
        Ok(tol)
    }

    pub fn x1d<const N: usize>(&self, lifted_cfg: &LiftConfig<N>) -> Result<Vector<N>, CliError> {
        let x1d = vector::<N>("x1d", self.plant.name(), Self::require(&self.x1d, "x1d")?)?;
        check_inside("x1d", &x1d, lifted_cfg)?;
        Ok(x1d)
    }

    pub fn initial<const N: usize, P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
    ) -> Result<(Vector<N>, Vector<N>), CliError> {
        let init = Self::require(&self.initial, "initial")?;
        let pname = self.plant.name();
        let x1 = vector::<N>("initial.x1", pname, &init.x1)?;
        let x2 = vector::<N>("initial.x2", pname, &init.x2)?;
        check_inside("initial.x1", &x1, &lifted.cfg1)?;
        check_inside("initial.x2", &x2, &lifted.cfg2)?;
        Ok((x1, x2))
    }

    pub fn monte_carlo(&self) -> Result<&MonteCarloSpec, CliError> {
        Self::require(&self.monte_carlo, "monte_carlo")
    }

    pub fn comparison(&self) -> Result<&ComparisonSpec, CliError> {
        Self::require(&self.comparison, "comparison")
    }
}
