//! Convergence studies against the exact decaying-cosine heat solution
//! `u = exp(-D (π/L)² t) cos(π s / L)` with zero-flux ends.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{NewtonConfig, TimeConfig};
use crate::expressions::ResolvedFunction;
use crate::geometry::{GeometryError, NetworkGeometry};
use crate::hdg::{build_discretization, HdgError, HdgSystem, SystemState};
use crate::problems::{ProblemError, ProblemSpec};
use crate::time_integration::{advance, StepMode, TimeError};

#[derive(Debug, Error)]
pub enum VerificationError {
    #[error("need at least 2 refinement levels, got {0}")]
    TooFewLevels(usize),
    #[error("invalid sweep parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Hdg(#[from] HdgError),
    #[error(transparent)]
    Time(#[from] TimeError),
}

/// Single-arc heat problem with its exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatScenario {
    pub length: f64,
    pub diffusivity: f64,
    pub t_final: f64,
    pub tau: f64,
    pub flux_order: usize,
}

impl Default for HeatScenario {
    fn default() -> Self {
        HeatScenario { length: 1.0, diffusivity: 1.0, t_final: 0.1, tau: 1.0, flux_order: 1 }
    }
}

impl HeatScenario {
    pub fn exact(&self, s: f64, t: f64) -> f64 {
        let k = PI / self.length;
        (-self.diffusivity * k * k * t).exp() * (k * s).cos()
    }

    /// Runs `n_steps` backward-Euler steps on `n_elements` uniform elements
    /// and returns the L2 error of the bulk solution at the final time.
    pub fn l2_error(&self, n_elements: usize, n_steps: usize) -> Result<f64, VerificationError> {
        if n_elements == 0 || n_steps == 0 {
            return Err(VerificationError::InvalidParameter("element and step counts must be positive".into()));
        }
        let geometry = NetworkGeometry::segment(self.length)?;
        let disc = build_discretization(&geometry, self.length / n_elements as f64, 1)?;
        let problem = Arc::new(ProblemSpec::heat(self.diffusivity, self.tau, self.flux_order)?);
        let system = HdgSystem::with_conditions(geometry, disc, vec![problem], &BTreeMap::new())?;
        let length = self.length;
        let initial = ResolvedFunction::Builtin {
            name: "cosine".into(),
            func: Arc::new(move |s, _| (PI * s / length).cos()),
        };
        let state0 = system.initial_state(&[vec![initial]], 0.0)?;
        let dt = self.t_final / n_steps as f64;
        let time = TimeConfig {
            t_final: self.t_final,
            dt_init: dt,
            adaptive: false,
            dt_min: dt,
            dt_max: dt,
            newton: NewtonConfig { eps_abs: 1e-11, ..NewtonConfig::default() },
        };
        let out = advance(&system, state0, &time, StepMode::Fixed(n_steps), |_, _| {})?;
        Ok(self.error_of(&system, &out.state))
    }

    fn error_of(&self, system: &HdgSystem, state: &SystemState) -> f64 {
        // 5-point Gauss rule on each element
        const X: [f64; 5] = [
            0.046_910_077_030_668,
            0.230_765_344_947_158_5,
            0.5,
            0.769_234_655_052_841_5,
            0.953_089_922_969_332,
        ];
        const W: [f64; 5] = [
            0.118_463_442_528_094_5,
            0.239_314_335_249_683_2,
            0.284_444_444_444_444_4,
            0.239_314_335_249_683_2,
            0.118_463_442_528_094_5,
        ];
        let d = system.discretization();
        let uo = system.layout(0).u[0];
        let mut sum = 0.0;
        for (e, el) in d.elements.iter().enumerate() {
            let (u0, u1) = (state.bulk[e][uo], state.bulk[e][uo + 1]);
            for (x, w) in X.iter().zip(W) {
                let uh = u0 * (1.0 - x) + u1 * x;
                let err = uh - self.exact(el.s0 + x * el.h, state.time);
                sum += w * el.h * err * err;
            }
        }
        sum.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceLevel {
    pub h: f64,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<ConvergenceLevel>,
    /// Observed order between consecutive levels.
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    fn from_levels(levels: Vec<ConvergenceLevel>, spatial: bool) -> Self {
        let orders = levels
            .windows(2)
            .map(|w| {
                let ratio = if spatial { w[0].h / w[1].h } else { w[0].dt / w[1].dt };
                (w[0].error / w[1].error).ln() / ratio.ln()
            })
            .collect();
        ConvergenceReport { levels, orders }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>12}  {:>12}  {:>14}  {:>8}\n", "h", "dt", "L2 error", "order");
        for (i, l) in self.levels.iter().enumerate() {
            let order = if i == 0 { "-".to_string() } else { format!("{:.3}", self.orders[i - 1]) };
            out.push_str(&format!("{:>12.4e}  {:>12.4e}  {:>14.6e}  {:>8}\n", l.h, l.dt, l.error, order));
        }
        out
    }
}

/// h-refinement with `dt ≈ dt_factor · h²` (rounded so the steps land on
/// the final time).
pub fn spatial_sweep(
    scenario: &HeatScenario,
    elements: &[usize],
    dt_factor: f64,
) -> Result<ConvergenceReport, VerificationError> {
    if elements.len() < 2 {
        return Err(VerificationError::TooFewLevels(elements.len()));
    }
    let mut levels = Vec::new();
    for &n in elements {
        let h = scenario.length / n as f64;
        let n_steps = (scenario.t_final / (dt_factor * h * h)).ceil().max(1.0) as usize;
        let error = scenario.l2_error(n, n_steps)?;
        levels.push(ConvergenceLevel { h, dt: scenario.t_final / n_steps as f64, error });
    }
    Ok(ConvergenceReport::from_levels(levels, true))
}

/// dt-refinement on a fixed mesh.
pub fn temporal_sweep(
    scenario: &HeatScenario,
    n_elements: usize,
    steps: &[usize],
) -> Result<ConvergenceReport, VerificationError> {
    if steps.len() < 2 {
        return Err(VerificationError::TooFewLevels(steps.len()));
    }
    let h = scenario.length / n_elements as f64;
    let mut levels = Vec::new();
    for &n in steps {
        let error = scenario.l2_error(n_elements, n)?;
        levels.push(ConvergenceLevel { h, dt: scenario.t_final / n as f64, error });
    }
    Ok(ConvergenceReport::from_levels(levels, false))
}
