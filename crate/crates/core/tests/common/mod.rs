#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use netflux_core::config::load_config;
use netflux_core::expressions::{resolve, ConfigValue, FunctionRegistry, ResolvedFunction};
use netflux_core::geometry::NetworkGeometry;
use netflux_core::hdg::{build_discretization, ConditionSpec, HdgSystem, StepInput, SystemState};
use netflux_core::problems::{Model, ProblemSpec};
use netflux_core::setup::{build_setup, load_geometry, SimulationSetup};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn func(text: &str) -> ResolvedFunction {
    resolve(&ConfigValue::Text(text.into()), &FunctionRegistry::default()).unwrap()
}

/// Same problem on every arc, default conditions unless overridden.
pub fn system(
    model: Model,
    geometry: NetworkGeometry,
    h: f64,
    physical: &BTreeMap<String, f64>,
    tau: f64,
    overrides: &BTreeMap<String, Vec<Option<ConditionSpec>>>,
) -> HdgSystem {
    let n = model.n_equations();
    let problem =
        Arc::new(ProblemSpec::from_parameters(model, physical, &vec![tau; n], vec![ResolvedFunction::zero(); n]).unwrap());
    let disc = build_discretization(&geometry, h, n).unwrap();
    let problems = vec![problem; geometry.arcs.len()];
    HdgSystem::with_conditions(geometry, disc, problems, overrides).unwrap()
}

/// Initial state from one expression per equation, shared by all arcs.
pub fn state_from(system: &HdgSystem, exprs: &[&str]) -> SystemState {
    let funcs: Vec<ResolvedFunction> = exprs.iter().map(|e| func(e)).collect();
    let n_arcs = system.geometry().arcs.len();
    system.initial_state(&vec![funcs; n_arcs], 0.0).unwrap()
}

/// Loads the maze configuration and applies `edit` to it before building.
pub fn maze_setup(h: f64, edit: impl FnOnce(&mut netflux_core::config::SimulationConfig)) -> SimulationSetup {
    let dir = repo_root().join("configs");
    let text = std::fs::read_to_string(dir.join("ooc_maze.toml")).unwrap();
    let mut cfg = load_config(&text, "ooc").unwrap();
    cfg.discretization.h_target = h;
    edit(&mut cfg);
    let geometry = load_geometry(cfg.geometry.as_ref().unwrap(), &dir).unwrap();
    build_setup(cfg, geometry).unwrap()
}

/// Worst entrywise discrepancy between the assembled Jacobian and central
/// differences of the residual.
///
/// Entries are compared relative to `max(|J|, |FD|)`; entries smaller than
/// the rounding noise of the difference quotient for their column are
/// compared against that noise instead.
pub struct JacobianCheck {
    pub max_relative: f64,
    pub checked: usize,
    pub worst: (usize, usize, f64, f64),
}

pub fn check_jacobian(system: &HdgSystem, step: &StepInput, state: &SystemState, steps: &[f64]) -> JacobianCheck {
    let jac = system.full_jacobian(step, state).unwrap().to_dense();
    let x0 = system.flatten(state);
    assert_eq!(steps.len(), x0.len());
    let mut out = JacobianCheck { max_relative: 0.0, checked: 0, worst: (0, 0, 0.0, 0.0) };
    for j in 0..x0.len() {
        let h = steps[j];
        let mut xp = x0.clone();
        xp[j] += h;
        let mut xm = x0.clone();
        xm[j] -= h;
        let rp = system.full_residual_vector(step, &system.unflatten(&xp, state.time)).unwrap();
        let rm = system.full_residual_vector(step, &system.unflatten(&xm, state.time)).unwrap();
        let scale = rp.iter().chain(&rm).fold(0.0f64, |m, v| m.max(v.abs()));
        let noise = 1e3 * f64::EPSILON * scale / h;
        for i in 0..x0.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            let an = jac[(i, j)];
            let size = an.abs().max(fd.abs());
            if size == 0.0 {
                continue;
            }
            let rel = if size > 1e5 * noise { (an - fd).abs() / size } else { (an - fd).abs() / (1e5 * noise) };
            out.checked += 1;
            if rel > out.max_relative {
                out.max_relative = rel;
                out.worst = (i, j, an, fd);
            }
        }
    }
    out
}
