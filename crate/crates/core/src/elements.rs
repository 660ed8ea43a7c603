//! Reference-element operators for the P1 bulk space with P0 or P1 flux.
//!
//! Bulk basis on `[0, 1]`: `φ0 = 1 - x`, `φ1 = x`. Flux basis: the constant
//! `1` for P0, the same hat functions for P1. Entries are exact closed
//! forms; [`scale_to_physical`] maps them to an element of length `h`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("unsupported flux order {0} (expected 0 or 1)")]
    UnsupportedOrder(usize),
    #[error("element length must be positive, got {0}")]
    NonpositiveLength(f64),
}

/// Outward normal sign at the left and right endpoint.
pub const NORMALS: [f64; 2] = [-1.0, 1.0];

const GAUSS_NODES: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    pub flux_order: usize,
    pub h: f64,
    /// `M[i][j] = ∫ φi φj`.
    pub mass: DMatrix<f64>,
    pub mass_inv: DMatrix<f64>,
    /// `D[i][j] = ∫ φj' φi`.
    pub diff: DMatrix<f64>,
    /// `∫ ψk ψl` for the flux basis.
    pub flux_mass: DMatrix<f64>,
    /// `B[i][k] = ∫ ψk φi'`, the `-∫ q w'` coupling of the bulk rows.
    pub flux_div: DMatrix<f64>,
    /// `C[k][j] = ∫ φj ψk'`, the `∫ u r'` coupling of the flux rows.
    pub bulk_grad: DMatrix<f64>,
    /// `N̂`: bulk basis evaluated at the endpoints (rows: left, right).
    pub trace_bulk: DMatrix<f64>,
    /// `Ñ`: flux basis evaluated at the endpoints.
    pub trace_flux: DMatrix<f64>,
    /// `Gb`: outward-signed endpoint evaluation of the bulk basis, `[w ν]`.
    pub gb: DMatrix<f64>,
    /// `Mb`: unsigned endpoint sum of the bulk basis, `[w]`.
    pub mb: DVector<f64>,
    /// `T`: endpoint penalty operator for unit `τ`, `Σ_end φi φj`.
    pub penalty: DMatrix<f64>,
    /// `Av`: element mean of each bulk basis function.
    pub average: DVector<f64>,
    /// Quadrature nodes, mapped to `[0, h]`.
    pub quad_nodes: Vec<f64>,
    /// Quadrature weights, scaled by `h`.
    pub quad_weights: Vec<f64>,
    /// `Q[i][k] = wk φi(xk)`.
    pub quad: DMatrix<f64>,
    /// `φi(xk)`, indexed `[k][i]`.
    pub bulk_at_quad: Vec<[f64; 2]>,
    /// `ψl(xk)`, indexed `[k][l]`.
    pub flux_at_quad: Vec<Vec<f64>>,
    /// `φi'` (constant on the element).
    pub bulk_deriv: [f64; 2],
}

impl ElementMatrices {
    pub fn flux_dofs(&self) -> usize {
        self.flux_order + 1
    }
}

/// Builds the operator set on the reference element `[0, 1]`.
pub fn reference_matrices(flux_order: usize) -> Result<ElementMatrices, ElementError> {
    let mass = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]);
    let mass_inv = DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 4.0]);
    let diff = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, 0.5]);
    let (flux_mass, flux_div, bulk_grad, trace_flux) = match flux_order {
        0 => (
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]),
            DMatrix::zeros(1, 2),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        ),
        1 => (mass.clone(), diff.transpose(), diff.transpose(), DMatrix::identity(2, 2)),
        other => return Err(ElementError::UnsupportedOrder(other)),
    };
    let bulk_at_quad: Vec<[f64; 2]> = GAUSS_NODES.iter().map(|&x| [1.0 - x, x]).collect();
    let flux_at_quad = bulk_at_quad
        .iter()
        .map(|phi| if flux_order == 0 { vec![1.0] } else { phi.to_vec() })
        .collect();
    let quad = DMatrix::from_fn(2, 3, |i, k| GAUSS_WEIGHTS[k] * bulk_at_quad[k][i]);
    Ok(ElementMatrices {
        flux_order,
        h: 1.0,
        mass,
        mass_inv,
        diff,
        flux_mass,
        flux_div,
        bulk_grad,
        trace_bulk: DMatrix::identity(2, 2),
        trace_flux,
        gb: DMatrix::from_diagonal(&DVector::from_column_slice(&NORMALS)),
        mb: DVector::from_element(2, 1.0),
        penalty: DMatrix::identity(2, 2),
        average: DVector::from_element(2, 0.5),
        quad_nodes: GAUSS_NODES.to_vec(),
        quad_weights: GAUSS_WEIGHTS.to_vec(),
        quad,
        bulk_at_quad,
        flux_at_quad,
        bulk_deriv: [-1.0, 1.0],
    })
}

/// Maps a reference set to an element of physical length `h`.
pub fn scale_to_physical(reference: &ElementMatrices, h: f64) -> Result<ElementMatrices, ElementError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ElementError::NonpositiveLength(h));
    }
    let r = reference.h;
    let factor = h / r;
    Ok(ElementMatrices {
        h,
        mass: &reference.mass * factor,
        mass_inv: &reference.mass_inv / factor,
        flux_mass: &reference.flux_mass * factor,
        quad_nodes: reference.quad_nodes.iter().map(|x| x * factor).collect(),
        quad_weights: reference.quad_weights.iter().map(|w| w * factor).collect(),
        quad: &reference.quad * factor,
        bulk_deriv: reference.bulk_deriv.map(|d| d / factor),
        ..reference.clone()
    })
}

/// Thread-safe cache of scaled operator sets keyed by `(flux_order, h)`.
#[derive(Debug, Default)]
pub struct ElementCache {
    entries: RwLock<HashMap<(usize, u64), Arc<ElementMatrices>>>,
}

impl ElementCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, flux_order: usize, h: f64) -> Result<Arc<ElementMatrices>, ElementError> {
        let key = (flux_order, h.to_bits());
        if let Some(found) = self.entries.read().expect("element cache poisoned").get(&key) {
            return Ok(found.clone());
        }
        let built = Arc::new(scale_to_physical(&reference_matrices(flux_order)?, h)?);
        let mut entries = self.entries.write().expect("element cache poisoned");
        Ok(entries.entry(key).or_insert(built).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("element cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5-point Gauss-Legendre on [0, h], independent of the 3-point rule above.
    fn integrate(h: f64, f: impl Fn(f64) -> f64) -> f64 {
        let x = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        let w = [
            0.236_926_885_056_189_1,
            0.478_628_670_499_366_5,
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
        ];
        x.iter().zip(w).map(|(xi, wi)| 0.5 * h * wi * f(0.5 * h * (xi + 1.0))).sum()
    }

    fn phi(h: f64, i: usize, s: f64) -> f64 {
        if i == 0 {
            1.0 - s / h
        } else {
            s / h
        }
    }

    fn dphi(h: f64, i: usize) -> f64 {
        if i == 0 {
            -1.0 / h
        } else {
            1.0 / h
        }
    }

    fn psi(order: usize, h: f64, k: usize, s: f64) -> f64 {
        if order == 0 {
            1.0
        } else {
            phi(h, k, s)
        }
    }

    fn dpsi(order: usize, h: f64, k: usize) -> f64 {
        if order == 0 {
            0.0
        } else {
            dphi(h, k)
        }
    }

    fn check_against_oracle(order: usize, h: f64) {
        let m = scale_to_physical(&reference_matrices(order).unwrap(), h).unwrap();
        let nq = order + 1;
        for i in 0..2 {
            for j in 0..2 {
                let mij = integrate(h, |s| phi(h, i, s) * phi(h, j, s));
                assert!((m.mass[(i, j)] - mij).abs() < 1e-14 * h.max(1.0));
                let dij = integrate(h, |s| dphi(h, j) * phi(h, i, s));
                assert!((m.diff[(i, j)] - dij).abs() < 1e-14);
                let qij: f64 = (0..3).map(|k| m.quad[(i, k)] * phi(h, j, m.quad_nodes[k])).sum();
                assert!((qij - mij).abs() < 1e-14 * h.max(1.0));
            }
            for k in 0..nq {
                let b = integrate(h, |s| psi(order, h, k, s) * dphi(h, i));
                assert!((m.flux_div[(i, k)] - b).abs() < 1e-14);
                let c = integrate(h, |s| phi(h, i, s) * dpsi(order, h, k));
                assert!((m.bulk_grad[(k, i)] - c).abs() < 1e-14);
                assert_eq!(m.trace_flux[(0, k)], psi(order, h, k, 0.0));
                assert_eq!(m.trace_flux[(1, k)], psi(order, h, k, h));
            }
            assert!((m.bulk_deriv[i] - dphi(h, i)).abs() < 1e-15);
        }
        for k in 0..nq {
            for l in 0..nq {
                let f = integrate(h, |s| psi(order, h, k, s) * psi(order, h, l, s));
                assert!((m.flux_mass[(k, l)] - f).abs() < 1e-14 * h.max(1.0));
            }
        }
    }

    #[test]
    fn reference_entries_match_quadrature_oracle() {
        let m = reference_matrices(1).unwrap();
        assert!((m.mass[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.mass[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.diff[(0, 0)], -0.5);
        assert_eq!(reference_matrices(0).unwrap().flux_mass[(0, 0)], 1.0);
        check_against_oracle(0, 1.0);
        check_against_oracle(1, 1.0);
    }

    #[test]
    fn scaled_entries_match_change_of_variables_oracle() {
        for h in [2.0, 0.125, 12.5, 300.0] {
            check_against_oracle(0, h);
            check_against_oracle(1, h);
        }
        let two = scale_to_physical(&reference_matrices(1).unwrap(), 2.0).unwrap();
        assert!((two.mass[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(two.diff, reference_matrices(1).unwrap().diff);
    }

    #[test]
    fn unit_scaling_is_identity() {
        for order in [0, 1] {
            let r = reference_matrices(order).unwrap();
            assert_eq!(scale_to_physical(&r, 1.0).unwrap(), r);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(reference_matrices(2), Err(ElementError::UnsupportedOrder(2)));
        let r = reference_matrices(0).unwrap();
        assert_eq!(scale_to_physical(&r, 0.0), Err(ElementError::NonpositiveLength(0.0)));
        assert!(scale_to_physical(&r, -1.0).is_err());
    }

    #[test]
    fn scaling_invariants() {
        let r = reference_matrices(1).unwrap();
        for h in [0.01, 1.7, 15.0, 250.0] {
            let m = scale_to_physical(&r, h).unwrap();
            assert!((&m.mass - &r.mass * h).abs().max() < 1e-15 * h);
            assert_eq!(m.diff, r.diff);
            let id = &m.mass_inv * &m.mass;
            assert!((id - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-13);
            // quadrature weights integrate each basis function exactly
            for i in 0..2 {
                let row: f64 = m.quad.row(i).sum();
                assert!((row - 0.5 * h).abs() < 1e-14 * h);
            }
        }
        assert!((r.average.dot(&DVector::from_element(2, 1.0)) - 1.0).abs() < 1e-15);
        assert_eq!(r.mb.sum(), 2.0);
        assert_eq!(r.gb.diagonal().sum(), 0.0);
    }

    #[test]
    fn cache_shares_entries_across_threads() {
        let cache = Arc::new(ElementCache::new());
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let cache = cache.clone();
                std::thread::spawn(move || cache.get(i % 2, 12.5).unwrap())
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap().h, 12.5);
        }
        assert_eq!(cache.len(), 2);
    }
}
