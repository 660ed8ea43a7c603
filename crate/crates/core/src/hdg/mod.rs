//! Hybridizable DG discretization on arc networks: local element systems,
//! static condensation, the global trace/multiplier system and bulk recovery.

mod discretization;
mod local;
mod system;

use thiserror::Error;

use crate::elements::ElementError;
use crate::expressions::{ExprError, ResolvedFunction};
use crate::linalg::LinalgError;
use crate::problems::ProblemError;

pub use discretization::{build_discretization, ArcMesh, Discretization, ElementRef};
pub use local::{assemble_local, condense, CondensedElement, ElementInput, LocalBlocks, LocalLayout};
pub use system::{FullResidual, GlobalSystem, HdgSystem, StepInput};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HdgError {
    #[error("no condition for node {node}, equation {eq}")]
    MissingCondition { node: String, eq: usize },
    #[error("Kedem-Katchalsky condition at {node} needs exactly 2 arcs, found {members}")]
    UnsupportedKkArity { node: String, members: usize },
    #[error("invalid condition at {node}: {reason}")]
    InvalidCondition { node: String, reason: String },
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),
    #[error("singular local block")]
    SingularLocalBlock,
    #[error("state does not match the discretization: {0}")]
    StateMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Expression(#[from] ExprError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Condition imposed at a network node, per equation.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionSpec {
    /// Prescribed inward flux `λ = g`.
    Neumann(ResolvedFunction),
    /// Prescribed trace `û = g`.
    Dirichlet(ResolvedFunction),
    /// `α û + β λ = g`.
    Robin { alpha: f64, beta: f64, g: ResolvedFunction },
    TraceContinuity,
    /// Membrane law: the flux into one side is `ω` times the trace jump.
    KedemKatchalsky { permeability: f64 },
}

impl ConditionSpec {
    pub fn homogeneous_neumann() -> Self {
        ConditionSpec::Neumann(ResolvedFunction::zero())
    }

    pub fn is_boundary_kind(&self) -> bool {
        matches!(self, ConditionSpec::Neumann(_) | ConditionSpec::Dirichlet(_) | ConditionSpec::Robin { .. })
    }
}

/// Traces, multipliers and element bulk coefficients at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub traces: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Per global element, laid out as described by [`LocalLayout`].
    pub bulk: Vec<Vec<f64>>,
    pub time: f64,
}

impl SystemState {
    /// Largest absolute difference over all unknowns.
    pub fn max_abs_diff(&self, other: &SystemState) -> f64 {
        let flat = |s: &SystemState| -> Vec<f64> {
            s.traces.iter().chain(&s.multipliers).chain(s.bulk.iter().flatten()).copied().collect()
        };
        flat(self).iter().zip(flat(other)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.traces.iter().chain(&self.multipliers).chain(self.bulk.iter().flatten()).all(|v| v.is_finite())
    }
}

/// Newton increment in the same shape as [`SystemState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Increment {
    pub traces: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub bulk: Vec<Vec<f64>>,
}

impl Increment {
    pub fn apply(&self, state: &SystemState, alpha: f64) -> SystemState {
        let add = |a: &[f64], d: &[f64]| -> Vec<f64> { a.iter().zip(d).map(|(x, y)| x + alpha * y).collect() };
        SystemState {
            traces: add(&state.traces, &self.traces),
            multipliers: add(&state.multipliers, &self.multipliers),
            bulk: state.bulk.iter().zip(&self.bulk).map(|(a, d)| add(a, d)).collect(),
            time: state.time,
        }
    }
}
