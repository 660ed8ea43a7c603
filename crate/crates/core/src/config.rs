//! TOML simulation configuration.
//!
//! ```toml
//! model = "ooc"
//!
//! [geometry]
//! points = "maze_3_data/points.csv"   # relative to the config file
//! lines = "maze_3_data/lines.csv"
//! length_scale = 50.0
//!
//! [physical]
//! nu = 200.0
//! # ...
//!
//! [time]
//! T_final = 640.0
//! dt_init = 64.0
//! adaptive = true
//! [time.newton]
//! eps_abs = 1e-9
//! max_iterations = 25
//! strategy = "line_search"            # or "damped" with `alpha`
//!
//! [discretization]
//! h = 15.0
//! tau = [0.5, 0.5, 0.5, 0.5]
//!
//! [initial]
//! u = 0.0
//!
//! [boundary.B3]
//! u = { type = "dirichlet", value = "1 + 0*t" }
//!
//! [domains.17.initial]
//! v = 2.5
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;
use toml::{Table, Value};

use crate::expressions::{resolve, ConfigValue, ExprError, FunctionRegistry, ResolvedFunction};
use crate::hdg::ConditionSpec;
use crate::problems::{self, Model, ProblemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid TOML: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    MissingRequiredKey(String),
    #[error("type mismatch at `{path}`: {expected}")]
    TypeMismatch { path: String, expected: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("at `{path}`: {source}")]
    UnresolvableFunction { path: String, source: ExprError },
    #[error("unknown domain id {id} (geometry has {n_domains} arcs)")]
    UnknownDomainId { id: usize, n_domains: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NewtonStrategy {
    Damped(f64),
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub eps_abs: f64,
    pub max_iterations: usize,
    pub strategy: NewtonStrategy,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { eps_abs: 1e-9, max_iterations: 25, strategy: NewtonStrategy::LineSearch }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt_init: f64,
    pub adaptive: bool,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton: NewtonConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationConfig {
    pub h_target: f64,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySource {
    Files { points: PathBuf, lines: PathBuf, length_scale: f64 },
    /// One of the programmatic builders: `segment`, `chain`, `star`.
    Builder { name: String, arcs: usize, length: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainOverride {
    pub x0: Option<f64>,
    pub physical: BTreeMap<String, f64>,
    pub initial: BTreeMap<usize, ResolvedFunction>,
    pub sources: BTreeMap<usize, ResolvedFunction>,
}

/// Parameters and functions in effect on one arc after overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDomain {
    pub x0: f64,
    pub physical: BTreeMap<String, f64>,
    pub initial: Vec<ResolvedFunction>,
    pub sources: Vec<ResolvedFunction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub model: Model,
    pub physical: BTreeMap<String, f64>,
    pub time: TimeConfig,
    pub discretization: DiscretizationConfig,
    pub initial: Vec<ResolvedFunction>,
    pub sources: Vec<ResolvedFunction>,
    /// Per node tag, per equation; `None` means the default condition.
    pub boundary: BTreeMap<String, Vec<Option<ConditionSpec>>>,
    pub geometry: Option<GeometrySource>,
    pub domains: BTreeMap<usize, DomainOverride>,
}

const PHYSICAL_KEYS: &[&str] =
    &["nu", "mu", "epsilon", "sigma", "a", "b", "c", "d", "k1", "k2", "m1", "m2", "chi0", "omega_kk"];

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn mismatch(path: &str, expected: &str) -> ConfigError {
    ConfigError::TypeMismatch { path: path.to_string(), expected: expected.to_string() }
}

fn as_f64(value: &Value, path: &str) -> Result<f64, ConfigError> {
    match value {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(mismatch(path, "expected a number")),
    }
}

fn as_table<'a>(value: &'a Value, path: &str) -> Result<&'a Table, ConfigError> {
    value.as_table().ok_or_else(|| mismatch(path, "expected a table"))
}

fn opt_table<'a>(root: &'a Table, key: &str, path: &str) -> Result<Option<&'a Table>, ConfigError> {
    root.get(key).map(|v| as_table(v, &join(path, key))).transpose()
}

fn opt_f64(table: &Table, key: &str, path: &str) -> Result<Option<f64>, ConfigError> {
    table.get(key).map(|v| as_f64(v, &join(path, key))).transpose()
}

fn req_f64(table: &Table, key: &str, path: &str) -> Result<f64, ConfigError> {
    opt_f64(table, key, path)?.ok_or_else(|| ConfigError::MissingRequiredKey(join(path, key)))
}

fn positive(value: f64, path: &str) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(mismatch(path, "expected a positive number"))
    }
}

fn check_keys(table: &Table, allowed: &[&str], path: &str) -> Result<(), ConfigError> {
    match table.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ConfigError::UnknownKey(join(path, k))),
        None => Ok(()),
    }
}

fn function(value: &Value, path: &str, registry: &FunctionRegistry) -> Result<ResolvedFunction, ConfigError> {
    let raw = match value {
        Value::Float(f) => ConfigValue::Number(*f),
        Value::Integer(i) => ConfigValue::Number(*i as f64),
        Value::String(s) => ConfigValue::Text(s.clone()),
        _ => return Err(mismatch(path, "expected a number or an expression string")),
    };
    resolve(&raw, registry).map_err(|source| ConfigError::UnresolvableFunction { path: path.to_string(), source })
}

fn per_equation_functions(
    table: &Table,
    model: Model,
    path: &str,
    registry: &FunctionRegistry,
) -> Result<BTreeMap<usize, ResolvedFunction>, ConfigError> {
    let mut out = BTreeMap::new();
    for (key, value) in table {
        let eq = model.equation_index(key).ok_or_else(|| ConfigError::UnknownKey(join(path, key)))?;
        out.insert(eq, function(value, &join(path, key), registry)?);
    }
    Ok(out)
}

fn physical_table(table: &Table, path: &str) -> Result<BTreeMap<String, f64>, ConfigError> {
    check_keys(table, PHYSICAL_KEYS, path)?;
    table.iter().map(|(k, v)| Ok((k.clone(), as_f64(v, &join(path, k))?))).collect()
}

fn condition(
    value: &Value,
    path: &str,
    registry: &FunctionRegistry,
    default_permeability: f64,
) -> Result<ConditionSpec, ConfigError> {
    let (kind, table) = match value {
        Value::String(s) => (s.as_str(), None),
        Value::Table(t) => {
            let kind = t
                .get("type")
                .ok_or_else(|| ConfigError::MissingRequiredKey(join(path, "type")))?
                .as_str()
                .ok_or_else(|| mismatch(&join(path, "type"), "expected a string"))?;
            (kind, Some(t))
        }
        _ => return Err(mismatch(path, "expected a condition name or table")),
    };
    let empty = Table::new();
    let table = table.unwrap_or(&empty);
    let value_fn = || match table.get("value") {
        Some(v) => function(v, &join(path, "value"), registry),
        None => Ok(ResolvedFunction::zero()),
    };
    let spec = match kind {
        "neumann" => {
            check_keys(table, &["type", "value"], path)?;
            ConditionSpec::Neumann(value_fn()?)
        }
        "dirichlet" => {
            check_keys(table, &["type", "value"], path)?;
            ConditionSpec::Dirichlet(value_fn()?)
        }
        "robin" => {
            check_keys(table, &["type", "value", "alpha", "beta"], path)?;
            let alpha = req_f64(table, "alpha", path)?;
            let beta = req_f64(table, "beta", path)?;
            if alpha == 0.0 && beta == 0.0 {
                return Err(mismatch(path, "robin condition needs (alpha, beta) != (0, 0)"));
            }
            ConditionSpec::Robin { alpha, beta, g: value_fn()? }
        }
        "continuity" | "trace_continuity" => {
            check_keys(table, &["type"], path)?;
            ConditionSpec::TraceContinuity
        }
        "kedem_katchalsky" | "kk" => {
            check_keys(table, &["type", "permeability"], path)?;
            let permeability = opt_f64(table, "permeability", path)?.unwrap_or(default_permeability);
            if !(permeability >= 0.0) {
                return Err(mismatch(&join(path, "permeability"), "expected a non-negative number"));
            }
            ConditionSpec::KedemKatchalsky { permeability }
        }
        other => {
            return Err(mismatch(
                path,
                &format!("unknown condition `{other}` (neumann, dirichlet, robin, continuity, kedem_katchalsky)"),
            ))
        }
    };
    Ok(spec)
}

/// Loads a configuration with the default function registry plus the
/// model profiles.
pub fn load_config(toml_text: &str, model: &str) -> Result<SimulationConfig, ConfigError> {
    let mut registry = FunctionRegistry::default();
    problems::register_profiles(&mut registry);
    load_config_with_registry(toml_text, model, &registry)
}

pub fn load_config_with_registry(
    toml_text: &str,
    model: &str,
    registry: &FunctionRegistry,
) -> Result<SimulationConfig, ConfigError> {
    let root: Table = toml_text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    check_keys(
        &root,
        &["model", "geometry", "physical", "time", "discretization", "initial", "sources", "boundary", "domains"],
        "",
    )?;
    let model: Model = model.parse()?;
    if let Some(declared) = root.get("model") {
        let declared = declared.as_str().ok_or_else(|| mismatch("model", "expected a string"))?;
        let declared: Model = declared.parse()?;
        if declared != model {
            return Err(mismatch("model", &format!("file declares `{declared}` but `{model}` was requested")));
        }
    }
    let n = model.n_equations();

    let physical = match opt_table(&root, "physical", "")? {
        Some(t) => physical_table(t, "physical")?,
        None => BTreeMap::new(),
    };
    for key in model.diffusivity_keys() {
        if !physical.contains_key(*key) {
            return Err(ConfigError::MissingRequiredKey(format!("physical.{key}")));
        }
    }
    let default_permeability = physical.get("omega_kk").copied().unwrap_or(0.0);

    let time_table = opt_table(&root, "time", "")?.ok_or_else(|| ConfigError::MissingRequiredKey("time".into()))?;
    check_keys(time_table, &["T_final", "dt_init", "adaptive", "dt_min", "dt_max", "newton"], "time")?;
    let t_final = positive(req_f64(time_table, "T_final", "time")?, "time.T_final")?;
    let dt_init = positive(req_f64(time_table, "dt_init", "time")?, "time.dt_init")?;
    let adaptive = match time_table.get("adaptive") {
        None => false,
        Some(v) => v.as_bool().ok_or_else(|| mismatch("time.adaptive", "expected a boolean"))?,
    };
    let dt_min = positive(opt_f64(time_table, "dt_min", "time")?.unwrap_or(1e-6 * dt_init), "time.dt_min")?;
    let dt_max = positive(opt_f64(time_table, "dt_max", "time")?.unwrap_or(1e2 * dt_init), "time.dt_max")?;
    if dt_min > dt_max {
        return Err(mismatch("time.dt_min", "must not exceed time.dt_max"));
    }
    let mut newton = NewtonConfig::default();
    if let Some(t) = opt_table(time_table, "newton", "time")? {
        let path = "time.newton";
        check_keys(t, &["eps_abs", "max_iterations", "strategy", "alpha"], path)?;
        if let Some(eps) = opt_f64(t, "eps_abs", path)? {
            newton.eps_abs = positive(eps, "time.newton.eps_abs")?;
        }
        if let Some(v) = t.get("max_iterations") {
            let n = v.as_integer().filter(|&n| n >= 1);
            newton.max_iterations =
                n.ok_or_else(|| mismatch("time.newton.max_iterations", "expected an integer >= 1"))? as usize;
        }
        let alpha = opt_f64(t, "alpha", path)?;
        let strategy = match t.get("strategy") {
            None => None,
            Some(v) => Some(v.as_str().ok_or_else(|| mismatch("time.newton.strategy", "expected a string"))?),
        };
        let default = if alpha.is_some() { "damped" } else { "line_search" };
        newton.strategy = match strategy.unwrap_or(default) {
            "line_search" if alpha.is_some() => {
                return Err(mismatch("time.newton.alpha", "only valid with strategy = \"damped\""))
            }
            "line_search" => NewtonStrategy::LineSearch,
            "damped" => {
                let alpha = alpha.unwrap_or(1.0);
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(mismatch("time.newton.alpha", "expected a value in (0, 1]"));
                }
                NewtonStrategy::Damped(alpha)
            }
            other => {
                return Err(mismatch(
                    "time.newton.strategy",
                    &format!("unknown strategy `{other}` (damped, line_search)"),
                ))
            }
        };
    }

    let disc = opt_table(&root, "discretization", "")?
        .ok_or_else(|| ConfigError::MissingRequiredKey("discretization".into()))?;
    check_keys(disc, &["h", "tau"], "discretization")?;
    let h_target = positive(req_f64(disc, "h", "discretization")?, "discretization.h")?;
    let tau_value = disc.get("tau").ok_or_else(|| ConfigError::MissingRequiredKey("discretization.tau".into()))?;
    let tau_array = tau_value.as_array().ok_or_else(|| mismatch("discretization.tau", "expected an array"))?;
    if tau_array.len() != n {
        return Err(mismatch(
            "discretization.tau",
            &format!("expected {n} values for model `{model}`, got {}", tau_array.len()),
        ));
    }
    let tau = tau_array
        .iter()
        .enumerate()
        .map(|(i, v)| positive(as_f64(v, &format!("discretization.tau[{i}]"))?, &format!("discretization.tau[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;

    let mut initial = vec![ResolvedFunction::zero(); n];
    if let Some(t) = opt_table(&root, "initial", "")? {
        for (eq, f) in per_equation_functions(t, model, "initial", registry)? {
            initial[eq] = f;
        }
    }
    let mut sources = vec![ResolvedFunction::zero(); n];
    if let Some(t) = opt_table(&root, "sources", "")? {
        for (eq, f) in per_equation_functions(t, model, "sources", registry)? {
            sources[eq] = f;
        }
    }

    let mut boundary = BTreeMap::new();
    if let Some(t) = opt_table(&root, "boundary", "")? {
        for (tag, entry) in t {
            let path = join("boundary", tag);
            let entry = as_table(entry, &path)?;
            let mut per_eq = vec![None; n];
            for (key, value) in entry {
                let eq = model.equation_index(key).ok_or_else(|| ConfigError::UnknownKey(join(&path, key)))?;
                per_eq[eq] = Some(condition(value, &join(&path, key), registry, default_permeability)?);
            }
            boundary.insert(tag.to_ascii_uppercase(), per_eq);
        }
    }

    let geometry = match opt_table(&root, "geometry", "")? {
        None => None,
        Some(t) => {
            check_keys(t, &["points", "lines", "length_scale", "builder", "arcs", "length"], "geometry")?;
            let text = |key: &str| -> Result<Option<String>, ConfigError> {
                t.get(key)
                    .map(|v| {
                        v.as_str().map(str::to_string).ok_or_else(|| mismatch(&join("geometry", key), "expected a string"))
                    })
                    .transpose()
            };
            if let Some(name) = text("builder")? {
                if !matches!(name.as_str(), "segment" | "chain" | "star") {
                    return Err(mismatch("geometry.builder", "expected `segment`, `chain` or `star`"));
                }
                let arcs = match t.get("arcs") {
                    None => 1,
                    Some(v) => v
                        .as_integer()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| mismatch("geometry.arcs", "expected an integer >= 1"))?
                        as usize,
                };
                let length = positive(req_f64(t, "length", "geometry")?, "geometry.length")?;
                Some(GeometrySource::Builder { name, arcs, length })
            } else {
                let points = text("points")?.ok_or_else(|| ConfigError::MissingRequiredKey("geometry.points".into()))?;
                let lines = text("lines")?.ok_or_else(|| ConfigError::MissingRequiredKey("geometry.lines".into()))?;
                let length_scale = positive(opt_f64(t, "length_scale", "geometry")?.unwrap_or(1.0), "geometry.length_scale")?;
                Some(GeometrySource::Files { points: points.into(), lines: lines.into(), length_scale })
            }
        }
    };

    let mut domains = BTreeMap::new();
    if let Some(t) = opt_table(&root, "domains", "")? {
        for (key, entry) in t {
            let path = join("domains", key);
            let id: usize = key.parse().map_err(|_| mismatch(&path, "domain keys must be arc indices"))?;
            let entry = as_table(entry, &path)?;
            check_keys(entry, &["x0", "physical", "initial", "sources"], &path)?;
            let mut o = DomainOverride { x0: opt_f64(entry, "x0", &path)?, ..Default::default() };
            if let Some(p) = opt_table(entry, "physical", &path)? {
                o.physical = physical_table(p, &join(&path, "physical"))?;
            }
            if let Some(p) = opt_table(entry, "initial", &path)? {
                o.initial = per_equation_functions(p, model, &join(&path, "initial"), registry)?;
            }
            if let Some(p) = opt_table(entry, "sources", &path)? {
                o.sources = per_equation_functions(p, model, &join(&path, "sources"), registry)?;
            }
            domains.insert(id, o);
        }
    }

    let config = SimulationConfig {
        model,
        physical,
        time: TimeConfig { t_final, dt_init, adaptive, dt_min, dt_max, newton },
        discretization: DiscretizationConfig { h_target, tau },
        initial,
        sources,
        boundary,
        geometry,
        domains,
    };
    // catches invalid parameter combinations (zero diffusivity, k2 <= 0, ...) at load time
    problems::build_problem(model.key(), &config)?;
    for id in config.domains.keys() {
        problems::ProblemSpec::from_parameters(
            model,
            &config.apply_domain_overrides(*id, usize::MAX)?.physical,
            &config.discretization.tau,
            config.sources.clone(),
        )?;
    }
    Ok(config)
}

fn toml_value(v: &ConfigValue) -> String {
    match v {
        ConfigValue::Number(x) => format_number(*x),
        ConfigValue::Text(s) => Value::String(s.clone()).to_string(),
    }
}

fn format_number(x: f64) -> String {
    // `{:?}` always keeps a decimal point or exponent, which TOML reads back as a float
    format!("{x:?}")
}

fn write_functions(out: &mut String, header: &str, model: Model, funcs: &BTreeMap<usize, ResolvedFunction>) {
    if funcs.is_empty() {
        return;
    }
    let _ = writeln!(out, "\n[{header}]");
    for (eq, f) in funcs {
        let _ = writeln!(out, "{} = {}", model.equation_names()[*eq], toml_value(&f.source()));
    }
}

impl SimulationConfig {
    /// Parameters and functions in effect on `domain_id`.
    ///
    /// `n_domains` is the arc count of the geometry the configuration is
    /// applied to.
    pub fn apply_domain_overrides(&self, domain_id: usize, n_domains: usize) -> Result<EffectiveDomain, ConfigError> {
        if domain_id >= n_domains {
            return Err(ConfigError::UnknownDomainId { id: domain_id, n_domains });
        }
        let mut eff = EffectiveDomain {
            x0: 0.0,
            physical: self.physical.clone(),
            initial: self.initial.clone(),
            sources: self.sources.clone(),
        };
        if let Some(o) = self.domains.get(&domain_id) {
            eff.x0 = o.x0.unwrap_or(0.0);
            eff.physical.extend(o.physical.iter().map(|(k, v)| (k.clone(), *v)));
            for (eq, f) in &o.initial {
                eff.initial[*eq] = f.clone();
            }
            for (eq, f) in &o.sources {
                eff.sources[*eq] = f.clone();
            }
        }
        Ok(eff)
    }

    /// Checks that every `[domains.<id>]` table names an existing arc.
    pub fn check_domains(&self, n_domains: usize) -> Result<(), ConfigError> {
        match self.domains.keys().find(|&&id| id >= n_domains) {
            Some(&id) => Err(ConfigError::UnknownDomainId { id, n_domains }),
            None => Ok(()),
        }
    }

    pub fn equation_names(&self) -> &'static [&'static str] {
        self.model.equation_names()
    }

    /// Serialises back to TOML; reloading yields an equivalent configuration.
    pub fn to_toml(&self) -> String {
        let model = self.model;
        let mut out = String::new();
        let _ = writeln!(out, "model = \"{model}\"");
        match &self.geometry {
            None => {}
            Some(GeometrySource::Files { points, lines, length_scale }) => {
                let _ = writeln!(out, "\n[geometry]");
                let _ = writeln!(out, "points = {}", Value::String(points.display().to_string()));
                let _ = writeln!(out, "lines = {}", Value::String(lines.display().to_string()));
                let _ = writeln!(out, "length_scale = {}", format_number(*length_scale));
            }
            Some(GeometrySource::Builder { name, arcs, length }) => {
                let _ = writeln!(out, "\n[geometry]");
                let _ = writeln!(out, "builder = \"{name}\"\narcs = {arcs}\nlength = {}", format_number(*length));
            }
        }
        let _ = writeln!(out, "\n[physical]");
        for (k, v) in &self.physical {
            let _ = writeln!(out, "{k} = {}", format_number(*v));
        }
        let t = &self.time;
        let _ = writeln!(out, "\n[time]");
        let _ = writeln!(out, "T_final = {}", format_number(t.t_final));
        let _ = writeln!(out, "dt_init = {}", format_number(t.dt_init));
        let _ = writeln!(out, "adaptive = {}", t.adaptive);
        let _ = writeln!(out, "dt_min = {}", format_number(t.dt_min));
        let _ = writeln!(out, "dt_max = {}", format_number(t.dt_max));
        let _ = writeln!(out, "\n[time.newton]");
        let _ = writeln!(out, "eps_abs = {}", format_number(t.newton.eps_abs));
        let _ = writeln!(out, "max_iterations = {}", t.newton.max_iterations);
        match t.newton.strategy {
            NewtonStrategy::LineSearch => {
                let _ = writeln!(out, "strategy = \"line_search\"");
            }
            NewtonStrategy::Damped(alpha) => {
                let _ = writeln!(out, "strategy = \"damped\"\nalpha = {}", format_number(alpha));
            }
        }
        let _ = writeln!(out, "\n[discretization]");
        let _ = writeln!(out, "h = {}", format_number(self.discretization.h_target));
        let tau: Vec<String> = self.discretization.tau.iter().map(|v| format_number(*v)).collect();
        let _ = writeln!(out, "tau = [{}]", tau.join(", "));
        let all = |fs: &[ResolvedFunction]| fs.iter().cloned().enumerate().collect::<BTreeMap<_, _>>();
        write_functions(&mut out, "initial", model, &all(&self.initial));
        write_functions(&mut out, "sources", model, &all(&self.sources));
        for (tag, per_eq) in &self.boundary {
            let _ = writeln!(out, "\n[boundary.{tag}]");
            for (eq, cond) in per_eq.iter().enumerate() {
                let Some(cond) = cond else { continue };
                let name = model.equation_names()[eq];
                let body = match cond {
                    ConditionSpec::Neumann(g) => format!("type = \"neumann\", value = {}", toml_value(&g.source())),
                    ConditionSpec::Dirichlet(g) => format!("type = \"dirichlet\", value = {}", toml_value(&g.source())),
                    ConditionSpec::Robin { alpha, beta, g } => format!(
                        "type = \"robin\", alpha = {}, beta = {}, value = {}",
                        format_number(*alpha),
                        format_number(*beta),
                        toml_value(&g.source())
                    ),
                    ConditionSpec::TraceContinuity => "type = \"continuity\"".to_string(),
                    ConditionSpec::KedemKatchalsky { permeability } => {
                        format!("type = \"kedem_katchalsky\", permeability = {}", format_number(*permeability))
                    }
                };
                let _ = writeln!(out, "{name} = {{ {body} }}");
            }
        }
        for (id, o) in &self.domains {
            let _ = writeln!(out, "\n[domains.{id}]");
            if let Some(x0) = o.x0 {
                let _ = writeln!(out, "x0 = {}", format_number(x0));
            }
            if !o.physical.is_empty() {
                let _ = writeln!(out, "\n[domains.{id}.physical]");
                for (k, v) in &o.physical {
                    let _ = writeln!(out, "{k} = {}", format_number(*v));
                }
            }
            write_functions(&mut out, &format!("domains.{id}.initial"), model, &o.initial);
            write_functions(&mut out, &format!("domains.{id}.sources"), model, &o.sources);
        }
        out
    }
}
