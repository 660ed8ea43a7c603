//! Equation systems: Keller–Segel (2 equations) and Organ-on-Chip
//! (4 equations), plus a single-equation heat model used for
//! verification runs.
//!
//! Point-wise reaction terms and their exact partial derivatives live
//! here. The chemotaxis drift `-∂s[χ(φ) u ∂sφ]` involves spatial
//! derivatives and is assembled by the HDG element kernel instead.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::config::SimulationConfig;
use crate::expressions::{ExprError, FunctionRegistry, ResolvedFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown model `{0}` (expected `ks` or `ooc`)")]
    UnknownModel(String),
    #[error("chemotaxis sensitivity pole crossed: k2 + phi = {0} <= 0")]
    PoleCrossing(f64),
    #[error("equation index {index} out of range for a {n}-equation model")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("state has {got} components, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("source term: {0}")]
    Source(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    KellerSegel,
    OrganOnChip,
    Heat,
}

impl Model {
    pub fn equation_names(self) -> &'static [&'static str] {
        match self {
            Model::KellerSegel => &["u", "phi"],
            Model::OrganOnChip => &["u", "omega", "v", "phi"],
            Model::Heat => &["u"],
        }
    }

    pub fn n_equations(self) -> usize {
        self.equation_names().len()
    }

    pub fn flux_orders(self) -> &'static [usize] {
        match self {
            Model::KellerSegel => &[0, 1],
            Model::OrganOnChip => &[0, 1, 1, 1],
            Model::Heat => &[1],
        }
    }

    /// Physical symbol of each equation's diffusivity.
    pub fn diffusivity_keys(self) -> &'static [&'static str] {
        match self {
            Model::KellerSegel => &["nu", "mu"],
            Model::OrganOnChip => &["nu", "epsilon", "sigma", "mu"],
            Model::Heat => &["nu"],
        }
    }

    pub fn equation_index(self, name: &str) -> Option<usize> {
        self.equation_names().iter().position(|n| *n == name)
    }

    pub fn key(self) -> &'static str {
        match self {
            Model::KellerSegel => "ks",
            Model::OrganOnChip => "ooc",
            Model::Heat => "heat",
        }
    }
}

impl FromStr for Model {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ks" | "keller-segel" | "keller_segel" => Ok(Model::KellerSegel),
            "ooc" | "organ-on-chip" | "organ_on_chip" => Ok(Model::OrganOnChip),
            _ => Err(ProblemError::UnknownModel(s.to_string())),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChemotaxisSensitivity {
    /// `χ(φ) = k1 / (k2 + φ)²`.
    ReceptorSaturation { k1: f64, k2: f64 },
    Constant(f64),
}

impl ChemotaxisSensitivity {
    /// Returns `(χ(φ), χ'(φ))`.
    pub fn eval(&self, phi: f64) -> Result<(f64, f64), ProblemError> {
        match *self {
            ChemotaxisSensitivity::Constant(chi0) => Ok((chi0, 0.0)),
            ChemotaxisSensitivity::ReceptorSaturation { k1, k2 } => {
                let base = k2 + phi;
                if !(base > 0.0) {
                    return Err(ProblemError::PoleCrossing(base));
                }
                let sq = base * base;
                Ok((k1 / sq, -2.0 * k1 / (sq * base)))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ChemotaxisSensitivity::Constant(c) => c == 0.0,
            ChemotaxisSensitivity::ReceptorSaturation { k1, .. } => k1 == 0.0,
        }
    }
}

/// `λ(ω) = m1 / (m2 + ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumourSuppression {
    pub m1: f64,
    pub m2: f64,
}

impl TumourSuppression {
    /// Returns `(λ(ω), λ'(ω))`; identically zero when `m1 = 0`.
    pub fn eval(&self, omega: f64) -> Result<(f64, f64), ProblemError> {
        if self.m1 == 0.0 {
            return Ok((0.0, 0.0));
        }
        let base = self.m2 + omega;
        if base == 0.0 {
            return Err(ProblemError::InvalidParameter {
                name: "m2".into(),
                reason: format!("suppression pole at omega = {omega}"),
            });
        }
        Ok((self.m1 / base, -self.m1 / (base * base)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chemotaxis {
    /// Equation of the migrating cells (`u`).
    pub cells: usize,
    /// Equation of the chemoattractant whose gradient drives the drift.
    pub signal: usize,
    pub sensitivity: ChemotaxisSensitivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationSpec {
    pub name: &'static str,
    pub diffusivity: f64,
    pub flux_order: usize,
    pub tau: f64,
    pub source: ResolvedFunction,
}

/// Rate constants; unused ones are zero for the chosen model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coupling {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub model: Model,
    pub equations: Vec<EquationSpec>,
    pub coupling: Coupling,
    pub chemotaxis: Option<Chemotaxis>,
    pub suppression: Option<TumourSuppression>,
}

fn param(physical: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    physical.get(key).copied().unwrap_or(default)
}

impl ProblemSpec {
    /// Builds a model from a physical-parameter table.
    ///
    /// Diffusivities default to 1, rate constants to 0, `k2`/`m2` to 1.
    /// `chi0` selects the constant sensitivity when present.
    pub fn from_parameters(
        model: Model,
        physical: &BTreeMap<String, f64>,
        tau: &[f64],
        sources: Vec<ResolvedFunction>,
    ) -> Result<Self, ProblemError> {
        let n = model.n_equations();
        if tau.len() != n {
            return Err(ProblemError::InvalidParameter {
                name: "tau".into(),
                reason: format!("expected {n} values, got {}", tau.len()),
            });
        }
        if sources.len() != n {
            return Err(ProblemError::InvalidParameter {
                name: "sources".into(),
                reason: format!("expected {n} functions, got {}", sources.len()),
            });
        }
        let mut equations = Vec::with_capacity(n);
        for (i, source) in sources.into_iter().enumerate() {
            let key = model.diffusivity_keys()[i];
            let diffusivity = param(physical, key, 1.0);
            if !(diffusivity > 0.0 && diffusivity.is_finite()) {
                return Err(ProblemError::InvalidParameter {
                    name: key.into(),
                    reason: format!("diffusivity must be strictly positive, got {diffusivity}"),
                });
            }
            if !(tau[i] > 0.0 && tau[i].is_finite()) {
                return Err(ProblemError::InvalidParameter {
                    name: "tau".into(),
                    reason: format!("stabilisation must be positive, got {}", tau[i]),
                });
            }
            equations.push(EquationSpec {
                name: model.equation_names()[i],
                diffusivity,
                flux_order: model.flux_orders()[i],
                tau: tau[i],
                source,
            });
        }
        let coupling = Coupling {
            a: param(physical, "a", 0.0),
            b: param(physical, "b", 0.0),
            c: param(physical, "c", 0.0),
            d: param(physical, "d", 0.0),
        };
        let sensitivity = match physical.get("chi0") {
            Some(&chi0) => ChemotaxisSensitivity::Constant(chi0),
            None => {
                let k2 = param(physical, "k2", 1.0);
                if !(k2 > 0.0) {
                    return Err(ProblemError::InvalidParameter {
                        name: "k2".into(),
                        reason: format!("must be positive, got {k2}"),
                    });
                }
                ChemotaxisSensitivity::ReceptorSaturation { k1: param(physical, "k1", 0.0), k2 }
            }
        };
        let (chemotaxis, suppression) = match model {
            Model::KellerSegel => (Some(Chemotaxis { cells: 0, signal: 1, sensitivity }), None),
            Model::OrganOnChip => {
                let m1 = param(physical, "m1", 0.0);
                let m2 = param(physical, "m2", 1.0);
                if m1 < 0.0 || !(m2 > 0.0) {
                    return Err(ProblemError::InvalidParameter {
                        name: "m1/m2".into(),
                        reason: format!("need m1 >= 0 and m2 > 0, got m1={m1}, m2={m2}"),
                    });
                }
                (Some(Chemotaxis { cells: 0, signal: 3, sensitivity }), Some(TumourSuppression { m1, m2 }))
            }
            Model::Heat => (None, None),
        };
        Ok(ProblemSpec { model, equations, coupling, chemotaxis, suppression })
    }

    /// Single-equation heat problem `∂t u = D ∂ss u`.
    pub fn heat(diffusivity: f64, tau: f64, flux_order: usize) -> Result<Self, ProblemError> {
        let physical = BTreeMap::from([("nu".to_string(), diffusivity)]);
        let mut spec = Self::from_parameters(Model::Heat, &physical, &[tau], vec![ResolvedFunction::zero()])?;
        if flux_order > 1 {
            return Err(ProblemError::InvalidParameter {
                name: "flux_order".into(),
                reason: format!("must be 0 or 1, got {flux_order}"),
            });
        }
        spec.equations[0].flux_order = flux_order;
        Ok(spec)
    }

    pub fn n_equations(&self) -> usize {
        self.equations.len()
    }

    /// Chemotaxis that actually contributes (non-zero sensitivity).
    pub fn active_chemotaxis(&self) -> Option<&Chemotaxis> {
        self.chemotaxis.as_ref().filter(|c| !c.sensitivity.is_zero())
    }

    /// Evaluates `R_eq` at a point and writes `∂R_eq/∂U_m` into `partials`.
    pub fn reaction_into(
        &self,
        eq: usize,
        state: &[f64],
        s: f64,
        t: f64,
        partials: &mut [f64],
    ) -> Result<f64, ProblemError> {
        let n = self.n_equations();
        if eq >= n {
            return Err(ProblemError::IndexOutOfRange { index: eq, n });
        }
        if state.len() != n || partials.len() != n {
            return Err(ProblemError::StateLength { got: state.len().min(partials.len()), expected: n });
        }
        partials.iter_mut().for_each(|p| *p = 0.0);
        let source = &self.equations[eq].source;
        let mut value = if source.is_zero_literal() { 0.0 } else { source.eval(s, t)? };
        let Coupling { a, b, c, d } = self.coupling;
        match (self.model, eq) {
            (Model::KellerSegel, 1) => {
                value += b * state[0] - a * state[1];
                partials[0] = b;
                partials[1] = -a;
            }
            (Model::OrganOnChip, 1) => {
                value += -c * state[1] + d * state[0];
                partials[0] = d;
                partials[1] = -c;
            }
            (Model::OrganOnChip, 2) => {
                if let Some(supp) = &self.suppression {
                    let (lambda, dlambda) = supp.eval(state[1])?;
                    value += -lambda * state[2];
                    partials[1] = -dlambda * state[2];
                    partials[2] = -lambda;
                }
            }
            (Model::OrganOnChip, 3) => {
                value += -a * state[3] + b * state[0];
                partials[0] = b;
                partials[3] = -a;
            }
            _ => {}
        }
        Ok(value)
    }

    /// Allocating wrapper around [`ProblemSpec::reaction_into`].
    pub fn reaction_eval(&self, eq: usize, state: &[f64], s: f64, t: f64) -> Result<(f64, Vec<f64>), ProblemError> {
        let mut partials = vec![0.0; self.n_equations()];
        let value = self.reaction_into(eq, state, s, t, &mut partials)?;
        Ok((value, partials))
    }
}

/// Registers the model-specific named initial profiles.
pub fn register_profiles(registry: &mut FunctionRegistry) {
    // smooth cosine bump on s in [0, 1], zero-flux at both ends
    registry.register("cosine_bump", |s, _| 1.0 + 0.5 * (std::f64::consts::PI * s).cos());
    registry.register("unit_step", |s, _| if s < 0.5 { 1.0 } else { 0.0 });
}

/// Builds the problem for a loaded configuration using its global values.
pub fn build_problem(model: &str, config: &SimulationConfig) -> Result<ProblemSpec, ProblemError> {
    let model: Model = model.parse()?;
    if model != config.model {
        return Err(ProblemError::InvalidParameter {
            name: "model".into(),
            reason: format!("configuration was loaded for `{}`", config.model),
        });
    }
    ProblemSpec::from_parameters(model, &config.physical, &config.discretization.tau, config.sources.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn physical(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn zeros(n: usize) -> Vec<ResolvedFunction> {
        vec![ResolvedFunction::zero(); n]
    }

    fn maze_problem() -> ProblemSpec {
        let p = physical(&[
            ("nu", 200.0),
            ("epsilon", 900.0),
            ("sigma", 1e-9),
            ("mu", 900.0),
            ("a", 1e-4),
            ("c", 1e-4),
            ("b", 0.2),
            ("d", 0.1),
            ("k1", 3.9e-9),
            ("k2", 5e-6),
            ("m1", 0.0),
        ]);
        ProblemSpec::from_parameters(Model::OrganOnChip, &p, &[0.5; 4], zeros(4)).unwrap()
    }

    #[test]
    fn receptor_saturation_values() {
        // direct evaluation: 3.9e-9 / (5e-6)^2 = 156, -2 * 3.9e-9 / (5e-6)^3 = -6.24e7
        let chi = ChemotaxisSensitivity::ReceptorSaturation { k1: 3.9e-9, k2: 5e-6 };
        let (v, d) = chi.eval(0.0).unwrap();
        assert!((v - 156.0).abs() < 1e-10 * 156.0);
        assert!((d + 6.24e7).abs() < 1e-10 * 6.24e7);
        assert!(matches!(chi.eval(-5e-6), Err(ProblemError::PoleCrossing(_))));
        assert!(matches!(chi.eval(-1.0), Err(ProblemError::PoleCrossing(_))));
        assert_eq!(ChemotaxisSensitivity::Constant(2.0).eval(17.0).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn ks_signal_reaction() {
        let p = physical(&[("nu", 1.0), ("mu", 1.0), ("a", 1e-4), ("b", 0.2)]);
        let spec = ProblemSpec::from_parameters(Model::KellerSegel, &p, &[1.0, 1.0], zeros(2)).unwrap();
        let (r, d) = spec.reaction_eval(1, &[1.0, 0.0], 0.0, 0.0).unwrap();
        assert!((r - 0.2).abs() < 1e-15);
        assert_eq!(d, vec![0.2, -1e-4]);
        let (r0, d0) = spec.reaction_eval(0, &[1.0, 0.0], 0.0, 0.0).unwrap();
        assert_eq!((r0, d0), (0.0, vec![0.0, 0.0]));
    }

    #[test]
    fn suppression_off_leaves_tumour_unchanged() {
        let mut spec = maze_problem();
        spec.equations[2].source = ResolvedFunction::Literal(0.3);
        for (w, v) in [(0.0, 2.5), (10.0, 1.0), (1e-3, 7.0)] {
            let (r, d) = spec.reaction_eval(2, &[0.1, w, v, 0.2], 0.0, 0.0).unwrap();
            assert_eq!(r, 0.3);
            assert_eq!(d, vec![0.0; 4]);
        }
    }

    #[test]
    fn homogeneous_state_gives_zero_reaction() {
        let spec = maze_problem();
        for eq in 0..4 {
            assert_eq!(spec.reaction_eval(eq, &[0.0; 4], 1.0, 2.0).unwrap().0, 0.0);
        }
        assert!(matches!(spec.reaction_eval(4, &[0.0; 4], 0.0, 0.0), Err(ProblemError::IndexOutOfRange { .. })));
        assert!(matches!(spec.reaction_eval(0, &[0.0; 3], 0.0, 0.0), Err(ProblemError::StateLength { .. })));
    }

    #[test]
    fn maze_problem_shape() {
        let spec = maze_problem();
        assert_eq!(spec.n_equations(), 4);
        let d: Vec<f64> = spec.equations.iter().map(|e| e.diffusivity).collect();
        assert_eq!(d, vec![200.0, 900.0, 1e-9, 900.0]);
        let orders: Vec<usize> = spec.equations.iter().map(|e| e.flux_order).collect();
        assert_eq!(orders, vec![0, 1, 1, 1]);
        assert_eq!(spec.chemotaxis.unwrap().signal, 3);
    }

    #[test]
    fn unknown_model() {
        assert_eq!("xyz".parse::<Model>(), Err(ProblemError::UnknownModel("xyz".into())));
        assert_eq!("KS".parse::<Model>(), Ok(Model::KellerSegel));
    }

    #[test]
    fn rejects_zero_diffusivity() {
        let p = physical(&[("nu", 1.0), ("mu", 0.0)]);
        assert!(ProblemSpec::from_parameters(Model::KellerSegel, &p, &[1.0, 1.0], zeros(2)).is_err());
    }

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-12
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let chi = ChemotaxisSensitivity::ReceptorSaturation { k1: 3.9e-9, k2: 5e-6 };
        for phi in [0.0, 1e-6, 3e-5, 0.01, 1.0] {
            let (_, d) = chi.eval(phi).unwrap();
            // the pole sits at -k2, so step relative to the distance from it
            let h = 1e-6 * (phi + 5e-6);
            let fd = (chi.eval(phi + h).unwrap().0 - chi.eval(phi - h).unwrap().0) / (2.0 * h);
            assert!(rel_close(d, fd, 1e-5), "chi' at {phi}: {d} vs {fd}");
        }
        let supp = TumourSuppression { m1: 0.7, m2: 0.3 };
        for w in [0.0, 0.5, 4.0, 100.0] {
            let (_, d) = supp.eval(w).unwrap();
            assert!(rel_close(d, central(|x| supp.eval(x).unwrap().0, w), 1e-5));
        }
        let mut spec = maze_problem();
        spec.suppression = Some(supp);
        let state = [0.4, 1.3, 2.5, 0.02];
        for eq in 0..4 {
            let (_, partials) = spec.reaction_eval(eq, &state, 0.0, 0.0).unwrap();
            for m in 0..4 {
                let f = |x: f64| {
                    let mut st = state;
                    st[m] = x;
                    spec.reaction_eval(eq, &st, 0.0, 0.0).unwrap().0
                };
                let fd = central(f, state[m]);
                assert!(rel_close(partials[m], fd, 1e-5), "dR{eq}/dU{m}: {} vs {fd}", partials[m]);
            }
        }
    }
}
