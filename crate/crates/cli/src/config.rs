//! Scenario configuration: strict JSON with every violation reported.
//!
//! The text is parsed into a JSON tree first and then walked field by field,
//! so one pass reports all unknown keys, missing fields, type mismatches and
//! range violations together, each with its dotted path.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};

use gravcollapse::kernel::SelfTermMode;
use gravcollapse::mass::{MassDistribution, MassGrid, RegulatorShape, SmearedPoint, Vec3};
use gravcollapse::planck::KernelSettings;
use gravcollapse::self_energy::{QuadratureSettings, DEFAULT_CELLS_PER_LENGTH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax { line: usize, column: usize, message: String },
    Schema(Vec<Violation>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, column, message } => {
                write!(f, "JSON syntax error at line {line}, column {column}: {message}")
            }
            ConfigError::Schema(v) => write!(f, "{} schema violation(s)", v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct QuadratureConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells_per_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub padding: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_term: Option<SelfTermMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cells: Option<usize>,
}

impl QuadratureConfig {
    /// Defaults derived from the distribution, then explicit overrides.
    pub fn resolve(&self, rho: &MassDistribution) -> QuadratureSettings {
        let mut q = QuadratureSettings::for_distribution(rho, self.cells_per_length.unwrap_or(DEFAULT_CELLS_PER_LENGTH));
        if let Some(h) = self.cell_size {
            q.cell_size = h;
        }
        if let Some(p) = self.padding {
            q.padding = p;
        }
        if let Some(m) = self.self_term {
            q.self_term = m;
        }
        if let Some(n) = self.max_cells {
            q.max_cells = n;
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StochasticConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub separations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestMassSection {
    pub mass: f64,
    pub r: f64,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanckConfig {
    pub r_values: Vec<f64>,
    pub c_values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dt_separations: Vec<f64>,
}

impl PlanckConfig {
    pub fn settings(&self) -> KernelSettings {
        let d = KernelSettings::default();
        KernelSettings {
            k_max: self.k_max.unwrap_or(d.k_max),
            k_min: self.k_min.unwrap_or(d.k_min),
            resolution: self.resolution.unwrap_or(d.resolution),
            theta_width: self.theta_width.unwrap_or(d.theta_width),
            time_window: self.time_window.unwrap_or(d.time_window),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: String,
}

/// A parsed and validated configuration. Sections a subcommand does not use
/// may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<MassDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Vec3>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<StochasticConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<TradeoffConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub testmass: Option<TestMassSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planck: Option<PlanckConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Clone, Copy)]
enum Range {
    Any,
    Positive,
    NonNegative,
}

/// Collects violations while reading one JSON object.
struct Walker {
    errors: Vec<Violation>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Walker {
    fn report(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    /// The object at `path`, with keys outside `allowed` reported.
    fn object<'v>(&mut self, v: &'v Value, path: &str, allowed: &[&str]) -> Option<&'v Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.report(path, "expected an object");
            return None;
        };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                self.report(join(path, key), format!("unknown key \"{key}\""));
            }
        }
        Some(map)
    }

    fn number_value(&mut self, v: &Value, path: &str, range: Range) -> Option<f64> {
        let Some(x) = v.as_f64() else {
            self.report(path, "expected a number");
            return None;
        };
        let ok = match range {
            Range::Any => true,
            Range::Positive => x > 0.0,
            Range::NonNegative => x >= 0.0,
        };
        if !ok {
            let what = match range {
                Range::Positive => "must be > 0",
                _ => "must be >= 0",
            };
            self.report(path, format!("{what}, got {x}"));
            return None;
        }
        Some(x)
    }

    fn number(&mut self, map: &Map<String, Value>, path: &str, key: &str, range: Range) -> Option<f64> {
        let v = map.get(key)?;
        self.number_value(v, &join(path, key), range)
    }

    fn required_number(&mut self, map: &Map<String, Value>, path: &str, key: &str, range: Range) -> Option<f64> {
        if !map.contains_key(key) {
            self.report(join(path, key), "missing required field");
            return None;
        }
        self.number(map, path, key, range)
    }

    fn integer(&mut self, map: &Map<String, Value>, path: &str, key: &str, min: u64) -> Option<u64> {
        let v = map.get(key)?;
        let p = join(path, key);
        match v.as_u64() {
            Some(n) if n >= min => Some(n),
            Some(n) => {
                self.report(p, format!("must be >= {min}, got {n}"));
                None
            }
            None => {
                self.report(p, "expected a non-negative integer");
                None
            }
        }
    }

    fn vec3_value(&mut self, v: &Value, path: &str) -> Option<Vec3> {
        match v.as_array() {
            Some(a) if a.len() == 3 => {
                let xs: Vec<Option<f64>> = a
                    .iter()
                    .enumerate()
                    .map(|(i, x)| self.number_value(x, &format!("{path}[{i}]"), Range::Any))
                    .collect();
                Some([xs[0]?, xs[1]?, xs[2]?])
            }
            _ => {
                self.report(path, "expected an array of three numbers");
                None
            }
        }
    }

    fn vec3(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<Vec3> {
        let v = map.get(key)?;
        self.vec3_value(v, &join(path, key))
    }

    fn number_list(&mut self, map: &Map<String, Value>, path: &str, key: &str, range: Range, non_empty: bool) -> Option<Vec<f64>> {
        let p = join(path, key);
        let Some(v) = map.get(key) else {
            if non_empty {
                self.report(p, "missing required field");
            }
            return None;
        };
        let Some(a) = v.as_array() else {
            self.report(p, "expected an array of numbers");
            return None;
        };
        if non_empty && a.is_empty() {
            self.report(p.clone(), "must not be empty");
        }
        let xs: Vec<Option<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, x)| self.number_value(x, &format!("{p}[{i}]"), range))
            .collect();
        xs.into_iter().collect()
    }

    fn choice<T: Copy>(&mut self, map: &Map<String, Value>, path: &str, key: &str, options: &[(&str, T)]) -> Option<T> {
        let v = map.get(key)?;
        let p = join(path, key);
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        match v.as_str().and_then(|s| options.iter().find(|(n, _)| *n == s)) {
            Some((_, t)) => Some(*t),
            None => {
                self.report(p, format!("expected one of {names:?}"));
                None
            }
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "distribution",
    "displacement",
    "quadrature",
    "stochastic",
    "sweep",
    "tradeoff",
    "testmass",
    "planck",
    "output",
];

fn distribution(w: &mut Walker, v: &Value) -> Option<MassDistribution> {
    let path = "distribution";
    let kind = v.get("kind").and_then(Value::as_str);
    let allowed: &[&str] = match kind {
        Some("gaussian") => &["kind", "center", "mass", "sigma"],
        Some("uniform-sphere") => &["kind", "center", "mass", "radius"],
        Some("smeared-points") => &["kind", "points"],
        Some("grid") => &["kind", "origin", "cell_size", "shape", "masses"],
        _ => {
            if v.is_object() {
                w.report(
                    "distribution.kind",
                    "expected one of \"gaussian\", \"uniform-sphere\", \"smeared-points\", \"grid\"",
                );
            } else {
                w.report(path, "expected an object");
            }
            return None;
        }
    };
    let map = w.object(v, path, allowed)?;
    match kind? {
        "gaussian" | "uniform-sphere" => {
            let center = w.vec3(map, path, "center").unwrap_or([0.0; 3]);
            let mass = w.required_number(map, path, "mass", Range::Positive);
            let width_key = if kind == Some("gaussian") { "sigma" } else { "radius" };
            let width = w.required_number(map, path, width_key, Range::Positive);
            let (mass, width) = (mass?, width?);
            Some(if width_key == "sigma" {
                MassDistribution::Gaussian { center, mass, sigma: width }
            } else {
                MassDistribution::UniformSphere { center, mass, radius: width }
            })
        }
        "smeared-points" => {
            let p = join(path, "points");
            let Some(list) = map.get("points").and_then(Value::as_array) else {
                w.report(p, "expected a non-empty array of points");
                return None;
            };
            if list.is_empty() {
                w.report(p.clone(), "must not be empty");
            }
            let shapes = [("uniform-ball", RegulatorShape::UniformBall), ("gaussian", RegulatorShape::Gaussian)];
            let mut points = Vec::new();
            let mut total = 0.0;
            for (i, item) in list.iter().enumerate() {
                let ip = format!("{p}[{i}]");
                let Some(m) = w.object(item, &ip, &["position", "mass", "regulator_radius", "regulator_shape"]) else {
                    continue;
                };
                if !m.contains_key("position") {
                    w.report(join(&ip, "position"), "missing required field");
                }
                let position = w.vec3(m, &ip, "position");
                let mass = w.required_number(m, &ip, "mass", Range::NonNegative);
                let radius = w.required_number(m, &ip, "regulator_radius", Range::Positive);
                let shape = w.choice(m, &ip, "regulator_shape", &shapes).unwrap_or_default();
                if let (Some(position), Some(mass), Some(regulator_radius)) = (position, mass, radius) {
                    total += mass;
                    points.push(SmearedPoint {
                        position,
                        mass,
                        regulator_radius,
                        regulator_shape: shape,
                    });
                }
            }
            if points.len() == list.len() && !list.is_empty() && total <= 0.0 {
                w.report(p, "total mass must be > 0");
            }
            Some(MassDistribution::SmearedPoints { points })
        }
        _ => {
            if !map.contains_key("origin") {
                w.report(join(path, "origin"), "missing required field");
            }
            let origin = w.vec3(map, path, "origin");
            let h = w.required_number(map, path, "cell_size", Range::Positive);
            let shape = match map.get("shape").and_then(Value::as_array) {
                Some(a) if a.len() == 3 && a.iter().all(|x| x.as_u64().is_some_and(|n| n > 0)) => {
                    Some([0, 1, 2].map(|i| a[i].as_u64().unwrap() as usize))
                }
                _ => {
                    w.report(join(path, "shape"), "expected three positive integers");
                    None
                }
            };
            let masses = w.number_list(map, path, "masses", Range::NonNegative, true);
            if let (Some(s), Some(m)) = (shape, &masses) {
                let want: usize = s.iter().product();
                if m.len() != want {
                    w.report(join(path, "masses"), format!("expected {want} cell masses for shape {s:?}, got {}", m.len()));
                    return None;
                }
                if m.iter().sum::<f64>() <= 0.0 {
                    w.report(join(path, "masses"), "total mass must be > 0");
                }
            }
            Some(MassDistribution::Grid(MassGrid {
                origin: origin?,
                cell_size: h?,
                shape: shape?,
                masses: masses?,
            }))
        }
    }
}

fn quadrature(w: &mut Walker, v: &Value) -> Option<QuadratureConfig> {
    let path = "quadrature";
    let map = w.object(v, path, &["cell_size", "cells_per_length", "padding", "self_term", "max_cells"])?;
    let modes = [("calibrated", SelfTermMode::Calibrated), ("none", SelfTermMode::None)];
    Some(QuadratureConfig {
        cell_size: w.number(map, path, "cell_size", Range::Positive),
        cells_per_length: w.number(map, path, "cells_per_length", Range::Positive),
        padding: w.number(map, path, "padding", Range::NonNegative),
        self_term: w.choice(map, path, "self_term", &modes),
        max_cells: w.integer(map, path, "max_cells", 1).map(|n| n as usize),
    })
}

fn stochastic(w: &mut Walker, v: &Value) -> Option<StochasticConfig> {
    let path = "stochastic";
    let map = w.object(
        v,
        path,
        &["seed", "dt", "total_time", "steps", "trajectories", "samples", "tau"],
    )?;
    let cfg = StochasticConfig {
        seed: w.integer(map, path, "seed", 0),
        dt: w.number(map, path, "dt", Range::Positive),
        total_time: w.number(map, path, "total_time", Range::Positive),
        steps: w.integer(map, path, "steps", 1).map(|n| n as usize),
        trajectories: w.integer(map, path, "trajectories", 1).map(|n| n as usize),
        samples: w.integer(map, path, "samples", 0).map(|n| n as usize),
        tau: w.number(map, path, "tau", Range::Positive),
    };
    if map.contains_key("dt") && map.contains_key("total_time") {
        w.report("stochastic.total_time", "give either dt or total_time, not both");
    }
    Some(cfg)
}

fn planck(w: &mut Walker, v: &Value) -> Option<PlanckConfig> {
    let path = "planck";
    let map = w.object(
        v,
        path,
        &[
            "r_values",
            "c_values",
            "k_max",
            "k_min",
            "resolution",
            "theta_width",
            "time_window",
            "tolerance",
            "dt_separations",
        ],
    )?;
    let r_values = w.number_list(map, path, "r_values", Range::Positive, true);
    let c_values = w.number_list(map, path, "c_values", Range::Positive, true);
    if let Some(cs) = &c_values {
        if cs.windows(2).any(|p| p[1] <= p[0]) {
            w.report("planck.c_values", "must be strictly increasing");
        }
    }
    let cfg = PlanckConfig {
        r_values: r_values.unwrap_or_default(),
        c_values: c_values.unwrap_or_default(),
        k_max: w.number(map, path, "k_max", Range::Positive),
        k_min: w.number(map, path, "k_min", Range::Positive),
        resolution: w.integer(map, path, "resolution", 16).map(|n| n as usize),
        theta_width: w.number(map, path, "theta_width", Range::Positive),
        time_window: w.number(map, path, "time_window", Range::Positive),
        tolerance: w.number(map, path, "tolerance", Range::Positive),
        dt_separations: w.number_list(map, path, "dt_separations", Range::Any, false).unwrap_or_default(),
    };
    let ks = cfg.settings();
    if ks.k_min >= ks.k_max {
        w.report("planck.k_min", format!("must be < k_max ({})", ks.k_max));
    }
    Some(cfg)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut w = Walker { errors: Vec::new() };
    let Some(map) = w.object(&root, "", TOP_KEYS) else {
        return Err(ConfigError::Schema(w.errors));
    };
    let mut cfg = ScenarioConfig::default();
    if let Some(v) = map.get("distribution") {
        cfg.distribution = distribution(&mut w, v);
    }
    cfg.displacement = w.vec3(map, "", "displacement");
    if let Some(v) = map.get("quadrature") {
        cfg.quadrature = quadrature(&mut w, v);
    }
    if let Some(v) = map.get("stochastic") {
        cfg.stochastic = stochastic(&mut w, v);
    }
    if let Some(v) = map.get("sweep") {
        if let Some(m) = w.object(v, "sweep", &["separations"]) {
            let separations = w.number_list(m, "sweep", "separations", Range::NonNegative, true);
            cfg.sweep = separations.map(|separations| SweepConfig { separations });
        }
    }
    if let Some(v) = map.get("tradeoff") {
        if let Some(m) = w.object(v, "tradeoff", &["a", "b"]) {
            let a = w.required_number(m, "tradeoff", "a", Range::Positive);
            let b = w.required_number(m, "tradeoff", "b", Range::Positive);
            if let (Some(a), Some(b)) = (a, b) {
                cfg.tradeoff = Some(TradeoffConfig { a, b });
            }
        }
    }
    if let Some(v) = map.get("testmass") {
        if let Some(m) = w.object(v, "testmass", &["mass", "r", "t", "volume", "g"]) {
            let p = "testmass";
            let mass = w.required_number(m, p, "mass", Range::Positive);
            let r = w.required_number(m, p, "r", Range::Positive);
            let t = w.required_number(m, p, "t", Range::Positive);
            let volume = w.number(m, p, "volume", Range::Positive);
            let g = w.number(m, p, "g", Range::Any);
            if let (Some(mass), Some(r), Some(t)) = (mass, r, t) {
                cfg.testmass = Some(TestMassSection { mass, r, t, volume, g });
            }
        }
    }
    if let Some(v) = map.get("planck") {
        cfg.planck = planck(&mut w, v);
    }
    if let Some(v) = map.get("output") {
        if let Some(m) = w.object(v, "output", &["dir"]) {
            match m.get("dir").and_then(Value::as_str) {
                Some(dir) => cfg.output = Some(OutputConfig { dir: dir.to_string() }),
                None => w.report("output.dir", "expected a string"),
            }
        }
    }
    if w.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Schema(w.errors))
    }
}

/// Canonical JSON form; re-parses to an equal configuration.
pub fn to_json(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("configuration serializes")
}
