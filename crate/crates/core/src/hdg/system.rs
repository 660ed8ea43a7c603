use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::local::{assemble_local, condense, CondensedElement, ElementInput, LocalBlocks, LocalLayout};
use super::{ConditionSpec, Discretization, HdgError, Increment, SystemState};
use crate::elements::{ElementCache, ElementMatrices, NORMALS};
use crate::expressions::ResolvedFunction;
use crate::geometry::{NetworkGeometry, PointKind};
use crate::linalg::SparseMatrix;
use crate::problems::ProblemSpec;

/// One backward-Euler step: previous state, step size and target time.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub prev: &'a SystemState,
    pub dt: f64,
    pub t_next: f64,
}

/// Condensed Newton system over traces followed by multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSystem {
    pub jacobian: SparseMatrix,
    pub residual: Vec<f64>,
}

/// Uncondensed residual split by row group.
#[derive(Debug, Clone, PartialEq)]
pub struct FullResidual {
    pub bulk: Vec<DVector<f64>>,
    pub traces: Vec<f64>,
    pub constraints: Vec<f64>,
}

impl FullResidual {
    pub fn norm(&self) -> f64 {
        let sq: f64 = self.bulk.iter().map(|b| b.norm_squared()).sum::<f64>()
            + self.traces.iter().map(|v| v * v).sum::<f64>()
            + self.constraints.iter().map(|v| v * v).sum::<f64>();
        sq.sqrt()
    }
}

/// A discretized network problem ready for time stepping.
#[derive(Debug)]
pub struct HdgSystem {
    geometry: NetworkGeometry,
    discretization: Discretization,
    problems: Vec<Arc<ProblemSpec>>,
    layouts: Vec<LocalLayout>,
    conditions: Vec<Vec<ConditionSpec>>,
    matrices: Vec<Vec<Arc<ElementMatrices>>>,
    bulk_offset: Vec<usize>,
    n_bulk: usize,
    origins: Vec<f64>,
}

/// Default conditions: homogeneous Neumann at boundary points, trace
/// continuity at junctions and T-junctions.
pub(crate) fn default_condition(kind: PointKind) -> ConditionSpec {
    match kind {
        PointKind::Boundary => ConditionSpec::homogeneous_neumann(),
        PointKind::Junction | PointKind::TJunction => ConditionSpec::TraceContinuity,
    }
}

impl HdgSystem {
    /// `problems` holds one spec per arc; `conditions` one list per
    /// connection with an entry per equation.
    pub fn new(
        geometry: NetworkGeometry,
        discretization: Discretization,
        problems: Vec<Arc<ProblemSpec>>,
        conditions: Vec<Vec<ConditionSpec>>,
    ) -> Result<Self, HdgError> {
        let n_eq = discretization.n_equations;
        if problems.len() != geometry.arcs.len() {
            return Err(HdgError::StateMismatch(format!(
                "{} problem specs for {} arcs",
                problems.len(),
                geometry.arcs.len()
            )));
        }
        if let Some(p) = problems.iter().find(|p| p.n_equations() != n_eq) {
            return Err(HdgError::StateMismatch(format!(
                "problem has {} equations, discretization {}",
                p.n_equations(),
                n_eq
            )));
        }
        if conditions.len() != geometry.connections.len() {
            return Err(HdgError::StateMismatch(format!(
                "{} condition sets for {} connections",
                conditions.len(),
                geometry.connections.len()
            )));
        }
        for (conn, conds) in geometry.connections.iter().zip(&conditions) {
            if conds.len() != n_eq {
                return Err(HdgError::MissingCondition { node: conn.node_tag.clone(), eq: conds.len().min(n_eq) });
            }
            let k = conn.members.len();
            for cond in conds {
                match cond {
                    ConditionSpec::Robin { alpha, beta, .. } if *alpha == 0.0 && *beta == 0.0 => {
                        return Err(HdgError::InvalidCondition {
                            node: conn.node_tag.clone(),
                            reason: "Robin needs (alpha, beta) != (0, 0)".into(),
                        })
                    }
                    c if c.is_boundary_kind() && k != 1 => {
                        return Err(HdgError::InvalidCondition {
                            node: conn.node_tag.clone(),
                            reason: format!("boundary condition at a node shared by {k} arcs"),
                        })
                    }
                    ConditionSpec::KedemKatchalsky { permeability } => {
                        if k != 2 {
                            return Err(HdgError::UnsupportedKkArity { node: conn.node_tag.clone(), members: k });
                        }
                        if !(*permeability >= 0.0 && permeability.is_finite()) {
                            return Err(HdgError::InvalidCondition {
                                node: conn.node_tag.clone(),
                                reason: format!("permeability must be >= 0, got {permeability}"),
                            });
                        }
                    }
                    _ => {}
                }
            }
        }

        let cache = ElementCache::new();
        let layouts: Vec<LocalLayout> = problems.iter().map(|p| LocalLayout::new(p)).collect();
        let mut matrices = Vec::with_capacity(discretization.n_elements());
        let mut bulk_offset = Vec::with_capacity(discretization.n_elements());
        let mut n_bulk = 0;
        for el in &discretization.elements {
            let problem = &problems[el.arc];
            let mats = problem
                .equations
                .iter()
                .map(|eq| cache.get(eq.flux_order, el.h))
                .collect::<Result<Vec<_>, _>>()?;
            matrices.push(mats);
            bulk_offset.push(n_bulk);
            n_bulk += layouts[el.arc].n_interior;
        }
        let origins = vec![0.0; geometry.arcs.len()];
        Ok(HdgSystem { geometry, discretization, problems, layouts, conditions, matrices, bulk_offset, n_bulk, origins })
    }

    /// Builds a system with the default condition at every connection,
    /// overridden per node tag by `overrides` (entries may be `None`).
    pub fn with_conditions(
        geometry: NetworkGeometry,
        discretization: Discretization,
        problems: Vec<Arc<ProblemSpec>>,
        overrides: &std::collections::BTreeMap<String, Vec<Option<ConditionSpec>>>,
    ) -> Result<Self, HdgError> {
        let n_eq = discretization.n_equations;
        let conditions = geometry
            .connections
            .iter()
            .map(|conn| {
                let given = overrides.get(&conn.node_tag);
                (0..n_eq)
                    .map(|eq| {
                        given
                            .and_then(|v| v.get(eq).cloned().flatten())
                            .unwrap_or_else(|| default_condition(conn.kind))
                    })
                    .collect()
            })
            .collect();
        Self::new(geometry, discretization, problems, conditions)
    }

    pub fn geometry(&self) -> &NetworkGeometry {
        &self.geometry
    }

    pub fn discretization(&self) -> &Discretization {
        &self.discretization
    }

    pub fn problem(&self, arc: usize) -> &ProblemSpec {
        &self.problems[arc]
    }

    pub fn layout(&self, arc: usize) -> &LocalLayout {
        &self.layouts[arc]
    }

    pub fn conditions(&self) -> &[Vec<ConditionSpec>] {
        &self.conditions
    }

    pub fn n_equations(&self) -> usize {
        self.discretization.n_equations
    }

    /// Sets the coordinate `x0` of each arc's start; data functions are
    /// evaluated at `x0 + s`.
    pub fn set_arc_origins(&mut self, origins: Vec<f64>) -> Result<(), HdgError> {
        if origins.len() != self.geometry.arcs.len() || origins.iter().any(|x| !x.is_finite()) {
            return Err(HdgError::StateMismatch("one finite origin per arc required".into()));
        }
        self.origins = origins;
        Ok(())
    }

    pub fn arc_origin(&self, arc: usize) -> f64 {
        self.origins[arc]
    }

    /// Number of bulk unknowns over all elements.
    pub fn n_bulk(&self) -> usize {
        self.n_bulk
    }

    pub fn element_matrices(&self, element: usize) -> &[Arc<ElementMatrices>] {
        &self.matrices[element]
    }

    pub fn zero_state(&self, time: f64) -> SystemState {
        let d = &self.discretization;
        SystemState {
            traces: vec![0.0; d.n_traces],
            multipliers: vec![0.0; d.n_multipliers],
            bulk: d.elements.iter().map(|el| vec![0.0; self.layouts[el.arc].n_interior]).collect(),
            time,
        }
    }

    /// Nodal interpolation of `initial[arc][eq]`, with traces equal to the
    /// nodal values and fluxes consistent with them.
    pub fn initial_state(&self, initial: &[Vec<ResolvedFunction>], time: f64) -> Result<SystemState, HdgError> {
        let d = &self.discretization;
        let n_eq = self.n_equations();
        if initial.len() != d.arcs.len() || initial.iter().any(|v| v.len() != n_eq) {
            return Err(HdgError::StateMismatch("initial data must give every arc one function per equation".into()));
        }
        let mut state = self.zero_state(time);
        for (a, mesh) in d.arcs.iter().enumerate() {
            for eq in 0..n_eq {
                for (node, &s) in mesh.nodes.iter().enumerate() {
                    state.traces[d.trace_index(a, eq, node)] = initial[a][eq].eval(self.origins[a] + s, time)?;
                }
            }
        }
        for (e, el) in d.elements.iter().enumerate() {
            let layout = &self.layouts[el.arc];
            for eq in 0..n_eq {
                for j in 0..2 {
                    state.bulk[e][layout.u[eq] + j] = state.traces[d.trace_index(el.arc, eq, el.left + j)];
                }
            }
        }
        self.relax_fluxes(&mut state);
        if !state.is_finite() {
            return Err(HdgError::NonFinite("initial state"));
        }
        Ok(state)
    }

    /// Replaces the flux coefficients by the solution of the flux equations
    /// for the current bulk values and traces.
    pub fn relax_fluxes(&self, state: &mut SystemState) {
        let d = &self.discretization;
        for (e, el) in d.elements.iter().enumerate() {
            let layout = &self.layouts[el.arc];
            let problem = &self.problems[el.arc];
            for (eq, spec) in problem.equations.iter().enumerate() {
                let em = &self.matrices[e][eq];
                let nq = layout.flux_dofs[eq];
                let uo = layout.u[eq];
                let mut rhs = DVector::zeros(nq);
                for k in 0..nq {
                    let mut v = 0.0;
                    for j in 0..2 {
                        v += spec.diffusivity * em.bulk_grad[(k, j)] * state.bulk[e][uo + j];
                    }
                    for end in 0..2 {
                        let tr = state.traces[d.trace_index(el.arc, eq, el.left + end)];
                        v -= spec.diffusivity * NORMALS[end] * em.trace_flux[(end, k)] * tr;
                    }
                    rhs[k] = v;
                }
                if let Some(q) = em.flux_mass.clone().lu().solve(&rhs) {
                    let qo = layout.q[eq];
                    state.bulk[e][qo..qo + nq].copy_from_slice(q.as_slice());
                }
            }
        }
    }

    fn element_traces(&self, state: &SystemState, element: usize) -> Vec<f64> {
        let d = &self.discretization;
        let el = &d.elements[element];
        let mut out = vec![0.0; 2 * self.n_equations()];
        for eq in 0..self.n_equations() {
            for end in 0..2 {
                out[LocalLayout::boundary(eq, end)] = state.traces[d.trace_index(el.arc, eq, el.left + end)];
            }
        }
        out
    }

    fn element_trace_dofs(&self, element: usize) -> Vec<usize> {
        let d = &self.discretization;
        let el = &d.elements[element];
        let mut out = vec![0; 2 * self.n_equations()];
        for eq in 0..self.n_equations() {
            for end in 0..2 {
                out[LocalLayout::boundary(eq, end)] = d.trace_index(el.arc, eq, el.left + end);
            }
        }
        out
    }

    fn check_state(&self, state: &SystemState) -> Result<(), HdgError> {
        let d = &self.discretization;
        if state.traces.len() != d.n_traces
            || state.multipliers.len() != d.n_multipliers
            || state.bulk.len() != d.n_elements()
            || state.bulk.iter().zip(&d.elements).any(|(b, el)| b.len() != self.layouts[el.arc].n_interior)
        {
            return Err(HdgError::StateMismatch("array sizes differ from the discretization".into()));
        }
        Ok(())
    }

    /// Linearized local system of one element about `state`.
    pub fn local_blocks(&self, step: &StepInput, state: &SystemState, element: usize) -> Result<LocalBlocks, HdgError> {
        let el = &self.discretization.elements[element];
        let mats: Vec<&ElementMatrices> = self.matrices[element].iter().map(|m| m.as_ref()).collect();
        let traces = self.element_traces(state, element);
        assemble_local(&ElementInput {
            problem: &self.problems[el.arc],
            layout: &self.layouts[el.arc],
            matrices: &mats,
            s0: self.origins[el.arc] + el.s0,
            bulk: &state.bulk[element],
            prev_bulk: &step.prev.bulk[element],
            traces: &traces,
            dt: step.dt,
            t_next: step.t_next,
        })
    }

    fn all_blocks(&self, step: &StepInput, state: &SystemState) -> Result<Vec<LocalBlocks>, HdgError> {
        self.check_state(state)?;
        self.check_state(step.prev)?;
        if !(step.dt > 0.0) {
            return Err(HdgError::StateMismatch(format!("dt must be positive, got {}", step.dt)));
        }
        (0..self.discretization.n_elements())
            .into_par_iter()
            .map(|e| self.local_blocks(step, state, e))
            .collect()
    }

    /// Visits every constraint row: `emit(row, col, value)` for Jacobian
    /// entries (rows and columns relative to the trace/multiplier block) and
    /// returns the row residuals.
    fn constraints(
        &self,
        state: &SystemState,
        t_next: f64,
        mut emit: impl FnMut(usize, usize, f64),
    ) -> Result<Vec<f64>, HdgError> {
        let d = &self.discretization;
        let nt = d.n_traces;
        let mut res = vec![0.0; d.n_multipliers];
        for (ci, conn) in self.geometry.connections.iter().enumerate() {
            let nodes = &d.member_nodes[ci];
            for eq in 0..self.n_equations() {
                let tr = |m: usize| d.trace_index(conn.members[m].arc, eq, nodes[m]);
                let mu = |m: usize| d.multiplier_index(ci, eq, m);
                let k = conn.members.len();
                match &self.conditions[ci][eq] {
                    cond @ (ConditionSpec::Neumann(_) | ConditionSpec::Dirichlet(_) | ConditionSpec::Robin { .. }) => {
                        let (alpha, beta, g) = match cond {
                            ConditionSpec::Neumann(g) => (0.0, 1.0, g),
                            ConditionSpec::Dirichlet(g) => (1.0, 0.0, g),
                            ConditionSpec::Robin { alpha, beta, g } => (*alpha, *beta, g),
                            _ => unreachable!(),
                        };
                        let arc = conn.members[0].arc;
                        let s = self.origins[arc] + d.arcs[arc].nodes[nodes[0]];
                        let row = mu(0);
                        res[row] =
                            alpha * state.traces[tr(0)] + beta * state.multipliers[row] - g.eval(s, t_next)?;
                        emit(nt + row, tr(0), alpha);
                        emit(nt + row, nt + row, beta);
                    }
                    ConditionSpec::TraceContinuity => {
                        for j in 1..k {
                            let row = mu(j - 1);
                            res[row] = state.traces[tr(0)] - state.traces[tr(j)];
                            emit(nt + row, tr(0), 1.0);
                            emit(nt + row, tr(j), -1.0);
                        }
                        let row = mu(k - 1);
                        res[row] = (0..k).map(|j| state.multipliers[mu(j)]).sum();
                        for j in 0..k {
                            emit(nt + row, nt + mu(j), 1.0);
                        }
                    }
                    ConditionSpec::KedemKatchalsky { permeability: w } => {
                        let (r0, r1) = (mu(0), mu(1));
                        res[r0] = state.multipliers[mu(0)] + w * (state.traces[tr(0)] - state.traces[tr(1)]);
                        emit(nt + r0, nt + mu(0), 1.0);
                        emit(nt + r0, tr(0), *w);
                        emit(nt + r0, tr(1), -w);
                        res[r1] = state.multipliers[mu(0)] + state.multipliers[mu(1)];
                        emit(nt + r1, nt + mu(0), 1.0);
                        emit(nt + r1, nt + mu(1), 1.0);
                    }
                }
            }
        }
        Ok(res)
    }

    /// Adds `λ` of every constrained node to that node's flux-balance row.
    fn multiplier_coupling(&self, mut emit: impl FnMut(usize, usize)) {
        let d = &self.discretization;
        for (ci, conn) in self.geometry.connections.iter().enumerate() {
            for (m, member) in conn.members.iter().enumerate() {
                for eq in 0..self.n_equations() {
                    emit(d.trace_index(member.arc, eq, d.member_nodes[ci][m]), d.multiplier_index(ci, eq, m));
                }
            }
        }
    }

    fn residual_from_blocks(
        &self,
        state: &SystemState,
        t_next: f64,
        blocks: &[LocalBlocks],
    ) -> Result<FullResidual, HdgError> {
        let mut traces = vec![0.0; self.discretization.n_traces];
        for (e, blk) in blocks.iter().enumerate() {
            for (local, global) in self.element_trace_dofs(e).into_iter().enumerate() {
                traces[global] += blk.r_b[local];
            }
        }
        self.multiplier_coupling(|row, mult| traces[row] += state.multipliers[mult]);
        let constraints = self.constraints(state, t_next, |_, _, _| {})?;
        let res = FullResidual { bulk: blocks.iter().map(|b| b.r_i.clone()).collect(), traces, constraints };
        if !res.norm().is_finite() {
            return Err(HdgError::NonFinite("residual"));
        }
        Ok(res)
    }

    /// Full (uncondensed) residual of the backward-Euler step at `state`.
    pub fn residual(&self, step: &StepInput, state: &SystemState) -> Result<FullResidual, HdgError> {
        let blocks = self.all_blocks(step, state)?;
        self.residual_from_blocks(state, step.t_next, &blocks)
    }

    /// Condenses every element and assembles the trace/multiplier system.
    pub fn assemble_global(
        &self,
        step: &StepInput,
        state: &SystemState,
    ) -> Result<(GlobalSystem, Vec<CondensedElement>), HdgError> {
        let blocks = self.all_blocks(step, state)?;
        let condensed: Vec<CondensedElement> =
            blocks.par_iter().map(condense).collect::<Result<Vec<_>, _>>()?;
        let d = &self.discretization;
        let n = d.n_unknowns();
        let mut jac = SparseMatrix::new(n);
        let mut residual = vec![0.0; n];
        for (e, c) in condensed.iter().enumerate() {
            let dofs = self.element_trace_dofs(e);
            for (a, &ga) in dofs.iter().enumerate() {
                residual[ga] += c.residual[a];
                for (b, &gb) in dofs.iter().enumerate() {
                    jac.push(ga, gb, c.matrix[(a, b)]);
                }
            }
        }
        let nt = d.n_traces;
        self.multiplier_coupling(|row, mult| {
            residual[row] += state.multipliers[mult];
            jac.push(row, nt + mult, 1.0);
        });
        let cons = self.constraints(state, step.t_next, |r, c, v| jac.push(r, c, v))?;
        residual[nt..].copy_from_slice(&cons);
        if residual.iter().any(|v| !v.is_finite()) {
            return Err(HdgError::NonFinite("global residual"));
        }
        Ok((GlobalSystem { jacobian: jac, residual }, condensed))
    }

    /// Newton increment via static condensation: global solve for traces
    /// and multipliers, then element-wise bulk recovery.
    pub fn newton_increment(&self, step: &StepInput, state: &SystemState) -> Result<Increment, HdgError> {
        let (global, condensed) = self.assemble_global(step, state)?;
        let rhs: Vec<f64> = global.residual.iter().map(|v| -v).collect();
        let delta = global.jacobian.solve(&rhs)?;
        Ok(self.recover_bulk(&condensed, &delta))
    }

    /// Bulk increments from a trace/multiplier increment.
    pub fn recover_bulk(&self, condensed: &[CondensedElement], delta: &[f64]) -> Increment {
        let d = &self.discretization;
        let bulk = condensed
            .par_iter()
            .enumerate()
            .map(|(e, c)| {
                let db = DVector::from_iterator(
                    c.inv_ib.ncols(),
                    self.element_trace_dofs(e).into_iter().map(|g| delta[g]),
                );
                c.recover(&db).as_slice().to_vec()
            })
            .collect();
        Increment {
            traces: delta[..d.n_traces].to_vec(),
            multipliers: delta[d.n_traces..].to_vec(),
            bulk,
        }
    }

    /// Flattened unknown vector: bulk (element order), traces, multipliers.
    pub fn flatten(&self, state: &SystemState) -> Vec<f64> {
        state.bulk.iter().flatten().chain(&state.traces).chain(&state.multipliers).copied().collect()
    }

    pub fn unflatten(&self, x: &[f64], time: f64) -> SystemState {
        let d = &self.discretization;
        let bulk = d
            .elements
            .iter()
            .enumerate()
            .map(|(e, el)| x[self.bulk_offset[e]..self.bulk_offset[e] + self.layouts[el.arc].n_interior].to_vec())
            .collect();
        let nb = self.n_bulk;
        SystemState {
            traces: x[nb..nb + d.n_traces].to_vec(),
            multipliers: x[nb + d.n_traces..].to_vec(),
            bulk,
            time,
        }
    }

    /// Full residual as a flat vector in [`HdgSystem::flatten`] order.
    pub fn full_residual_vector(&self, step: &StepInput, state: &SystemState) -> Result<Vec<f64>, HdgError> {
        let r = self.residual(step, state)?;
        Ok(r.bulk.iter().flat_map(|b| b.iter().copied()).chain(r.traces).chain(r.constraints).collect())
    }

    /// Jacobian of the uncondensed system in [`HdgSystem::flatten`] order.
    pub fn full_jacobian(&self, step: &StepInput, state: &SystemState) -> Result<SparseMatrix, HdgError> {
        let blocks = self.all_blocks(step, state)?;
        let nb = self.n_bulk;
        let mut jac = SparseMatrix::new(nb + self.discretization.n_unknowns());
        for (e, blk) in blocks.iter().enumerate() {
            let off = self.bulk_offset[e];
            let dofs = self.element_trace_dofs(e);
            for i in 0..blk.a_ii.nrows() {
                for j in 0..blk.a_ii.ncols() {
                    jac.push(off + i, off + j, blk.a_ii[(i, j)]);
                }
                for (b, &g) in dofs.iter().enumerate() {
                    jac.push(off + i, nb + g, blk.a_ib[(i, b)]);
                }
            }
            for (a, &ga) in dofs.iter().enumerate() {
                for j in 0..blk.a_bi.ncols() {
                    jac.push(nb + ga, off + j, blk.a_bi[(a, j)]);
                }
                for (b, &gb) in dofs.iter().enumerate() {
                    jac.push(nb + ga, nb + gb, blk.a_bb[(a, b)]);
                }
            }
        }
        let nt = self.discretization.n_traces;
        self.multiplier_coupling(|row, mult| jac.push(nb + row, nb + nt + mult, 1.0));
        self.constraints(state, step.t_next, |r, c, v| jac.push(nb + r, nb + c, v))?;
        Ok(jac)
    }

    /// Newton increment from a dense solve of the full block system,
    /// without condensation. Intended as a reference for small meshes.
    pub fn monolithic_increment(&self, step: &StepInput, state: &SystemState) -> Result<Increment, HdgError> {
        let jac: DMatrix<f64> = self.full_jacobian(step, state)?.to_dense();
        let r = DVector::from_vec(self.full_residual_vector(step, state)?);
        let x = jac.lu().solve(&(-r)).ok_or(HdgError::Linalg(crate::linalg::LinalgError::SolveFailure(
            "singular monolithic system".into(),
        )))?;
        let delta = self.unflatten(x.as_slice(), state.time);
        Ok(Increment { traces: delta.traces, multipliers: delta.multipliers, bulk: delta.bulk })
    }
}
