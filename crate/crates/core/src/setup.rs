//! Builds a ready-to-run [`HdgSystem`] from a configuration and a geometry.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ConfigError, GeometrySource, SimulationConfig};
use crate::expressions::ResolvedFunction;
use crate::geometry::{GeometryError, NetworkGeometry};
use crate::hdg::{build_discretization, HdgError, HdgSystem, SystemState};
use crate::problems::{ProblemError, ProblemSpec};

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    GeometryFile { path: PathBuf, source: GeometryError },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Hdg(#[from] HdgError),
    #[error("no geometry given in the configuration or on the command line")]
    MissingGeometry,
    #[error("unknown geometry builder `{0}` (expected segment, chain or star)")]
    UnknownBuilder(String),
    #[error("boundary.{0}: no such node in the geometry")]
    UnknownNode(String),
}

fn read(path: &Path) -> Result<String, SetupError> {
    std::fs::read_to_string(path).map_err(|source| SetupError::Io { path: path.to_path_buf(), source })
}

/// Loads a geometry from a pair of CSV files.
pub fn load_geometry_files(points: &Path, lines: &Path, length_scale: f64) -> Result<NetworkGeometry, SetupError> {
    let points_text = read(points)?;
    let lines_text = read(lines)?;
    let pts = crate::geometry::parse_points(&points_text)
        .map_err(|source| SetupError::GeometryFile { path: points.to_path_buf(), source })?;
    let lns = crate::geometry::parse_lines(&lines_text)
        .map_err(|source| SetupError::GeometryFile { path: lines.to_path_buf(), source })?;
    Ok(crate::geometry::build_geometry(&pts, &lns, length_scale)?)
}

/// Resolves the `[geometry]` table; relative file paths are taken from
/// `base_dir`.
pub fn load_geometry(source: &GeometrySource, base_dir: &Path) -> Result<NetworkGeometry, SetupError> {
    match source {
        GeometrySource::Files { points, lines, length_scale } => {
            load_geometry_files(&base_dir.join(points), &base_dir.join(lines), *length_scale)
        }
        GeometrySource::Builder { name, arcs, length } => Ok(match name.as_str() {
            "segment" => NetworkGeometry::segment(*length)?,
            "chain" => NetworkGeometry::chain(*arcs, *length)?,
            "star" => NetworkGeometry::star(*arcs, *length)?,
            other => return Err(SetupError::UnknownBuilder(other.to_string())),
        }),
    }
}

/// Configuration, discretized system and per-arc initial data.
#[derive(Debug)]
pub struct SimulationSetup {
    pub config: SimulationConfig,
    pub system: HdgSystem,
    pub initial: Vec<Vec<ResolvedFunction>>,
}

pub fn build_setup(config: SimulationConfig, geometry: NetworkGeometry) -> Result<SimulationSetup, SetupError> {
    let n_arcs = geometry.arcs.len();
    config.check_domains(n_arcs)?;
    if let Some(tag) = config.boundary.keys().find(|t| geometry.connection(t).is_none()) {
        return Err(SetupError::UnknownNode(tag.clone()));
    }
    let mut problems = Vec::with_capacity(n_arcs);
    let mut initial = Vec::with_capacity(n_arcs);
    let mut origins = Vec::with_capacity(n_arcs);
    for a in 0..n_arcs {
        let eff = config.apply_domain_overrides(a, n_arcs)?;
        let problem =
            ProblemSpec::from_parameters(config.model, &eff.physical, &config.discretization.tau, eff.sources)?;
        problems.push(Arc::new(problem));
        initial.push(eff.initial);
        origins.push(eff.x0);
    }
    let n_eq = config.model.n_equations();
    let disc = build_discretization(&geometry, config.discretization.h_target, n_eq)?;
    let mut system = HdgSystem::with_conditions(geometry, disc, problems, &config.boundary)?;
    system.set_arc_origins(origins)?;
    Ok(SimulationSetup { config, system, initial })
}

impl SimulationSetup {
    pub fn initial_state(&self) -> Result<SystemState, HdgError> {
        self.system.initial_state(&self.initial, 0.0)
    }
}
