//! Declarative experiment configuration.

use crate::CliError;
use fasris::channel::{build_config, SystemConfig};
use fasris::optimize::{AscentOptions, RateBounds, Solver, DEFAULT_GRID_POINTS};
use fasris::outage::{EvalOptions, Model, OverheadPolicy, DEFAULT_INNER_SAMPLES, DEFAULT_QUAD_NODES};
use fasris::Scheme;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

pub const DEFAULT_RATE: f64 = 2.0;
pub const DEFAULT_TRIALS: usize = 100_000;
pub const DEFAULT_BINS: usize = 100;

/// Key holding the target rate inside override tables.
pub const RATE_KEY: &str = "R";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Outage,
    Throughput,
    Pdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    P,
    N,
    R,
    M,
    W,
}

impl SweepVar {
    pub fn key(self) -> &'static str {
        match self {
            SweepVar::P => "P_dBm",
            SweepVar::N => "N",
            SweepVar::R => RATE_KEY,
            SweepVar::M => "M",
            SweepVar::W => "W",
        }
    }

    fn integral(self) -> bool {
        matches!(self, SweepVar::N | SweepVar::M)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVar,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Sweep {
    /// Evenly spaced values from `from` to `to` inclusive.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        let h = (self.to - self.from) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.to } else { self.from + i as f64 * h })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub scheme: Scheme,
    pub model: Model,
}

impl ModelSpec {
    pub fn label(&self) -> String {
        format!("{}_{}", self.scheme, self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub scheme: Scheme,
    #[serde(deserialize_with = "solver_from_str")]
    pub solver: Solver,
}

fn solver_from_str<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Solver, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl SolverSpec {
    pub fn label(&self) -> String {
        format!("{}_{}", self.scheme, self.solver)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Overrides applied to every point: configuration fields and `R`.
    #[serde(default)]
    pub fixed: IndexMap<String, Value>,
    /// One curve per entry; each entry overrides `fixed`.
    #[serde(default)]
    pub series: Vec<IndexMap<String, Value>>,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub solvers: Vec<SolverSpec>,
    #[serde(default = "default_overheads")]
    pub overheads: Vec<OverheadPolicy>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Seed of the Monte Carlo trial streams.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub bounds: Option<RateBounds>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default = "default_inner")]
    pub inner_samples: usize,
    #[serde(default = "default_quad")]
    pub quad_nodes: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Port whose envelope is histogrammed by `pdf` experiments.
    #[serde(default)]
    pub port: usize,
}

fn default_overheads() -> Vec<OverheadPolicy> {
    vec![OverheadPolicy::None]
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}
fn default_inner() -> usize {
    DEFAULT_INNER_SAMPLES
}
fn default_quad() -> usize {
    DEFAULT_QUAD_NODES
}
fn default_bins() -> usize {
    DEFAULT_BINS
}

/// One evaluation point: the series labels, the sweep value and the resolved parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub series: IndexMap<String, Value>,
    pub sweep_value: Option<f64>,
    pub cfg: SystemConfig,
    pub r: f64,
}

impl Experiment {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let exp: Experiment = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let exp: Experiment = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        exp.validate()?;
        Ok(exp)
    }

    /// Load by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn bounds(&self) -> RateBounds {
        self.bounds.unwrap_or_default()
    }

    pub fn ascent_options(&self) -> AscentOptions {
        let d = AscentOptions::default();
        AscentOptions {
            step: self.step.unwrap_or(d.step),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            record_trace: false,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            inner_samples: self.inner_samples,
            quad_nodes: self.quad_nodes,
        }
    }

    /// Policies charged against a scheme; the CSI-free scheme never estimates CSI.
    pub fn policies_for(&self, scheme: Scheme) -> Vec<OverheadPolicy> {
        match scheme {
            Scheme::CsiBased => self.overheads.clone(),
            Scheme::CsiFree => vec![OverheadPolicy::None],
        }
    }

    pub fn needs_simulation(&self) -> bool {
        self.models.iter().any(|m| m.model == Model::Simulation)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        match (&self.sweep, self.kind) {
            (None, Kind::Outage | Kind::Throughput) => return bad("outage and throughput experiments need a sweep".into()),
            (Some(_), Kind::Pdf) => return bad("pdf experiments take no sweep".into()),
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if s.steps == 0 {
                return bad("sweep.steps must be >= 1".into());
            }
            if !(s.from.is_finite() && s.to.is_finite()) {
                return bad("sweep bounds must be finite".into());
            }
            if s.variable.integral() {
                for v in s.values() {
                    if v.fract() != 0.0 || v < 1.0 {
                        return bad(format!("sweep over {:?} needs positive integer values (got {v})", s.variable));
                    }
                }
            }
        }
        if self.models.is_empty() && self.solvers.is_empty() {
            return bad("list at least one model or solver".into());
        }
        match self.kind {
            Kind::Outage if !self.solvers.is_empty() => return bad("outage experiments take no solvers".into()),
            Kind::Pdf => {
                if !self.solvers.is_empty() {
                    return bad("pdf experiments take no solvers".into());
                }
                if self.models.iter().any(|m| m.model != Model::Simulation) {
                    return bad("pdf experiments accept only simulation models".into());
                }
                if self.bins == 0 {
                    return bad("bins must be >= 1".into());
                }
            }
            _ => {}
        }
        for s in &self.solvers {
            let ok = match s.solver {
                Solver::Gda | Solver::Bsm => s.scheme == Scheme::CsiBased,
                Solver::Pgda | Solver::ClosedForm => s.scheme == Scheme::CsiFree,
                Solver::Exhaustive => true,
            };
            if !ok {
                return bad(format!("solver {} does not apply to scheme {}", s.solver, s.scheme));
            }
        }
        if self.overheads.is_empty() {
            return bad("overheads must not be empty".into());
        }
        if self.needs_simulation() && self.trials < fasris::montecarlo::MIN_TRIALS {
            return bad(format!("trials must be >= {}", fasris::montecarlo::MIN_TRIALS));
        }
        if self.grid_points < 2 {
            return bad("grid_points must be >= 2".into());
        }
        if let Some(b) = self.bounds {
            RateBounds::new(b.r_min, b.r_max).map_err(|e| CliError::Config(e.to_string()))?;
        }
        let points = self.points()?;
        if self.kind == Kind::Pdf {
            for p in &points {
                if self.port >= p.cfg.n {
                    return bad(format!("port {} is out of range for N = {}", self.port, p.cfg.n));
                }
            }
        }
        Ok(())
    }

    /// Resolve every evaluation point, series-major then in sweep order.
    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        let base = serde_json::to_value(SystemConfig::new(2, 100, 10.0)).expect("config serializes");
        let series: Vec<IndexMap<String, Value>> =
            if self.series.is_empty() { vec![IndexMap::new()] } else { self.series.clone() };
        let sweep: Vec<Option<f64>> = match &self.sweep {
            Some(s) => s.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::with_capacity(series.len() * sweep.len());
        for ser in &series {
            for &v in &sweep {
                let mut obj = base.as_object().cloned().expect("object");
                let mut r = DEFAULT_RATE;
                let mut apply = |k: &str, val: &Value| -> Result<(), CliError> {
                    if k == RATE_KEY {
                        r = val
                            .as_f64()
                            .ok_or_else(|| CliError::Config(format!("{RATE_KEY} must be a number")))?;
                    } else {
                        obj.insert(k.to_string(), val.clone());
                    }
                    Ok(())
                };
                for (k, val) in self.fixed.iter().chain(ser.iter()) {
                    apply(k, val)?;
                }
                if let (Some(s), Some(v)) = (&self.sweep, v) {
                    let val = if s.variable.integral() { Value::from(v as u64) } else { Value::from(v) };
                    apply(s.variable.key(), &val)?;
                }
                if !(r.is_finite() && r >= 0.0) {
                    return Err(CliError::Config(format!("R must be finite and >= 0 (got {r})")));
                }
                let cfg = build_config(&Value::Object(obj)).map_err(|e| CliError::Config(e.to_string()))?;
                out.push(Point {
                    series: ser.clone(),
                    sweep_value: v,
                    cfg,
                    r,
                });
            }
        }
        Ok(out)
    }

    /// Series label columns in order of first appearance.
    pub fn series_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = Vec::new();
        for s in &self.series {
            for k in s.keys() {
                if !keys.contains(k) {
                    keys.push(k.clone());
                }
            }
        }
        keys
    }
}
