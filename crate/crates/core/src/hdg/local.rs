use nalgebra::{DMatrix, DVector};

use super::HdgError;
use crate::elements::{ElementMatrices, NORMALS};
use crate::problems::ProblemSpec;

/// Position of each equation's bulk coefficients inside an element vector.
///
/// Per equation the element stores two `u` coefficients followed by the
/// flux coefficients. Boundary (trace) slots are `2·eq + end`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLayout {
    pub u: Vec<usize>,
    pub q: Vec<usize>,
    pub flux_dofs: Vec<usize>,
    pub n_interior: usize,
}

impl LocalLayout {
    pub fn new(problem: &ProblemSpec) -> Self {
        let mut u = Vec::new();
        let mut q = Vec::new();
        let mut flux_dofs = Vec::new();
        let mut offset = 0;
        for eq in &problem.equations {
            u.push(offset);
            q.push(offset + 2);
            flux_dofs.push(eq.flux_order + 1);
            offset += 2 + eq.flux_order + 1;
        }
        LocalLayout { u, q, flux_dofs, n_interior: offset }
    }

    pub fn n_equations(&self) -> usize {
        self.u.len()
    }

    pub fn n_boundary(&self) -> usize {
        2 * self.u.len()
    }

    pub fn boundary(eq: usize, end: usize) -> usize {
        2 * eq + end
    }
}

/// Newton-linearized element system.
///
/// Rows are the element residual `r_i` (bulk and flux equations) and the
/// element's contribution `r_b` to the flux balance at its two end nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBlocks {
    pub a_ii: DMatrix<f64>,
    pub a_ib: DMatrix<f64>,
    pub a_bi: DMatrix<f64>,
    pub a_bb: DMatrix<f64>,
    pub r_i: DVector<f64>,
    pub r_b: DVector<f64>,
}

/// Inputs of one element evaluation.
pub struct ElementInput<'a> {
    pub problem: &'a ProblemSpec,
    pub layout: &'a LocalLayout,
    /// Operators per equation (they differ only in flux order).
    pub matrices: &'a [&'a ElementMatrices],
    pub s0: f64,
    pub bulk: &'a [f64],
    pub prev_bulk: &'a [f64],
    pub traces: &'a [f64],
    pub dt: f64,
    pub t_next: f64,
}

pub fn assemble_local(input: &ElementInput) -> Result<LocalBlocks, HdgError> {
    let ElementInput { problem, layout, matrices, bulk, prev_bulk, traces, dt, .. } = *input;
    let ni = layout.n_interior;
    let nb = layout.n_boundary();
    let n_eq = layout.n_equations();
    let mut blk = LocalBlocks {
        a_ii: DMatrix::zeros(ni, ni),
        a_ib: DMatrix::zeros(ni, nb),
        a_bi: DMatrix::zeros(nb, ni),
        a_bb: DMatrix::zeros(nb, nb),
        r_i: DVector::zeros(ni),
        r_b: DVector::zeros(nb),
    };
    let bd = LocalLayout::boundary;

    for m in 0..n_eq {
        let em = matrices[m];
        let spec = &problem.equations[m];
        let (d, tau) = (spec.diffusivity, spec.tau);
        let (uo, qo, nq) = (layout.u[m], layout.q[m], layout.flux_dofs[m]);
        let u = &bulk[uo..uo + 2];
        let q = &bulk[qo..qo + nq];
        let u_end = |e: usize| (0..2).map(|j| em.trace_bulk[(e, j)] * u[j]).sum::<f64>();
        let q_end = |e: usize| (0..nq).map(|l| em.trace_flux[(e, l)] * q[l]).sum::<f64>();

        for i in 0..2 {
            let row = uo + i;
            let mut r = 0.0;
            for j in 0..2 {
                let mij = em.mass[(i, j)] / dt;
                r += mij * (u[j] - prev_bulk[uo + j]);
                blk.a_ii[(row, uo + j)] += mij;
            }
            for l in 0..nq {
                let mut c = -em.flux_div[(i, l)];
                for e in 0..2 {
                    c += NORMALS[e] * em.trace_bulk[(e, i)] * em.trace_flux[(e, l)];
                }
                r += c * q[l];
                blk.a_ii[(row, qo + l)] += c;
            }
            for e in 0..2 {
                let w = em.trace_bulk[(e, i)];
                if w == 0.0 {
                    continue;
                }
                r += tau * w * (u_end(e) - traces[bd(m, e)]);
                for j in 0..2 {
                    blk.a_ii[(row, uo + j)] += tau * w * em.trace_bulk[(e, j)];
                }
                blk.a_ib[(row, bd(m, e))] -= tau * w;
            }
            blk.r_i[row] += r;
        }

        for k in 0..nq {
            let row = qo + k;
            let mut r = 0.0;
            for l in 0..nq {
                r += em.flux_mass[(k, l)] * q[l];
                blk.a_ii[(row, qo + l)] += em.flux_mass[(k, l)];
            }
            for j in 0..2 {
                r -= d * em.bulk_grad[(k, j)] * u[j];
                blk.a_ii[(row, uo + j)] -= d * em.bulk_grad[(k, j)];
            }
            for e in 0..2 {
                let c = d * NORMALS[e] * em.trace_flux[(e, k)];
                r += c * traces[bd(m, e)];
                blk.a_ib[(row, bd(m, e))] += c;
            }
            blk.r_i[row] += r;
        }

        for e in 0..2 {
            let row = bd(m, e);
            blk.r_b[row] += NORMALS[e] * q_end(e) + tau * (u_end(e) - traces[row]);
            for l in 0..nq {
                blk.a_bi[(row, qo + l)] += NORMALS[e] * em.trace_flux[(e, l)];
            }
            for j in 0..2 {
                blk.a_bi[(row, uo + j)] += tau * em.trace_bulk[(e, j)];
            }
            blk.a_bb[(row, row)] -= tau;
        }
    }

    add_reactions(input, &mut blk)?;
    add_chemotaxis(input, &mut blk)?;
    Ok(blk)
}

fn add_reactions(input: &ElementInput, blk: &mut LocalBlocks) -> Result<(), HdgError> {
    let ElementInput { problem, layout, matrices, s0, bulk, t_next, .. } = *input;
    let n_eq = layout.n_equations();
    let em = matrices[0];
    let mut state = vec![0.0; n_eq];
    let mut partials = vec![0.0; n_eq];
    for (k, phi) in em.bulk_at_quad.iter().enumerate() {
        for (n, value) in state.iter_mut().enumerate() {
            let uo = layout.u[n];
            *value = phi[0] * bulk[uo] + phi[1] * bulk[uo + 1];
        }
        let s = s0 + em.quad_nodes[k];
        for m in 0..n_eq {
            let rv = problem.reaction_into(m, &state, s, t_next, &mut partials)?;
            for i in 0..2 {
                let row = layout.u[m] + i;
                let w = em.quad[(i, k)];
                blk.r_i[row] -= w * rv;
                for (n, dr) in partials.iter().enumerate() {
                    if *dr == 0.0 {
                        continue;
                    }
                    for j in 0..2 {
                        blk.a_ii[(row, layout.u[n] + j)] -= w * dr * phi[j];
                    }
                }
            }
        }
    }
    Ok(())
}

/// Advective flux `χ(φ) u ∂sφ` of the cell equation with `∂sφ = -q_φ/μ`.
fn add_chemotaxis(input: &ElementInput, blk: &mut LocalBlocks) -> Result<(), HdgError> {
    let ElementInput { problem, layout, matrices, bulk, traces, .. } = *input;
    let Some(chemo) = problem.active_chemotaxis() else {
        return Ok(());
    };
    let (c, p) = (chemo.cells, chemo.signal);
    let mu = problem.equations[p].diffusivity;
    let ec = matrices[c];
    let ep = matrices[p];
    let (uc, up, qp, nqp) = (layout.u[c], layout.u[p], layout.q[p], layout.flux_dofs[p]);
    let bd = LocalLayout::boundary;

    for k in 0..ec.quad_weights.len() {
        let phi = ec.bulk_at_quad[k];
        let psi = &ep.flux_at_quad[k];
        let uk = phi[0] * bulk[uc] + phi[1] * bulk[uc + 1];
        let sk = phi[0] * bulk[up] + phi[1] * bulk[up + 1];
        let gk = -(0..nqp).map(|l| psi[l] * bulk[qp + l]).sum::<f64>() / mu;
        let (chi, dchi) = chemo.sensitivity.eval(sk)?;
        for i in 0..2 {
            let row = uc + i;
            let coef = -ec.quad_weights[k] * ec.bulk_deriv[i];
            blk.r_i[row] += coef * chi * uk * gk;
            for j in 0..2 {
                blk.a_ii[(row, uc + j)] += coef * chi * phi[j] * gk;
                blk.a_ii[(row, up + j)] += coef * dchi * phi[j] * uk * gk;
            }
            for l in 0..nqp {
                blk.a_ii[(row, qp + l)] += coef * chi * uk * (-psi[l] / mu);
            }
        }
    }

    for e in 0..2 {
        let nu = NORMALS[e];
        let sig = traces[bd(p, e)];
        let cell = traces[bd(c, e)];
        let g = -(0..nqp).map(|l| ep.trace_flux[(e, l)] * bulk[qp + l]).sum::<f64>() / mu;
        let (chi, dchi) = chemo.sensitivity.eval(sig)?;
        let value = nu * chi * cell * g;
        let d_sig = nu * dchi * cell * g;
        let d_cell = nu * chi * g;
        let d_q: Vec<f64> = (0..nqp).map(|l| nu * chi * cell * (-ep.trace_flux[(e, l)] / mu)).collect();

        for i in 0..2 {
            let w = ec.trace_bulk[(e, i)];
            if w == 0.0 {
                continue;
            }
            let row = uc + i;
            blk.r_i[row] += w * value;
            blk.a_ib[(row, bd(p, e))] += w * d_sig;
            blk.a_ib[(row, bd(c, e))] += w * d_cell;
            for l in 0..nqp {
                blk.a_ii[(row, qp + l)] += w * d_q[l];
            }
        }
        let row = bd(c, e);
        blk.r_b[row] += value;
        blk.a_bb[(row, bd(p, e))] += d_sig;
        blk.a_bb[(row, bd(c, e))] += d_cell;
        for l in 0..nqp {
            blk.a_bi[(row, qp + l)] += d_q[l];
        }
    }
    Ok(())
}

/// Schur complement of an element with the factors needed for recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedElement {
    /// `Ã = A_bb − A_bi A_ii⁻¹ A_ib`.
    pub matrix: DMatrix<f64>,
    /// `r̃ = r_b − A_bi A_ii⁻¹ r_i`.
    pub residual: DVector<f64>,
    /// `A_ii⁻¹ A_ib`.
    pub inv_ib: DMatrix<f64>,
    /// `A_ii⁻¹ r_i`.
    pub inv_ri: DVector<f64>,
}

pub fn condense(blocks: &LocalBlocks) -> Result<CondensedElement, HdgError> {
    let lu = blocks.a_ii.clone().lu();
    let inv_ib = lu.solve(&blocks.a_ib).ok_or(HdgError::SingularLocalBlock)?;
    let inv_ri = lu.solve(&blocks.r_i).ok_or(HdgError::SingularLocalBlock)?;
    if inv_ib.iter().chain(inv_ri.iter()).any(|v| !v.is_finite()) {
        return Err(HdgError::SingularLocalBlock);
    }
    Ok(CondensedElement {
        matrix: &blocks.a_bb - &blocks.a_bi * &inv_ib,
        residual: &blocks.r_b - &blocks.a_bi * &inv_ri,
        inv_ib,
        inv_ri,
    })
}

impl CondensedElement {
    /// Bulk Newton increment for a given trace increment of this element.
    pub fn recover(&self, trace_increment: &DVector<f64>) -> DVector<f64> {
        -(&self.inv_ri + &self.inv_ib * trace_increment)
    }
}
