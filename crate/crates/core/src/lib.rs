//! Reaction-diffusion-chemotaxis systems on networks of 1D arcs, solved with
//! a hybridizable discontinuous Galerkin method and backward Euler.

// NaN-rejecting `!(x > 0.0)` checks and index loops over small element
// arrays are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod elements;
pub mod expressions;
pub mod geometry;
pub mod hdg;
pub mod linalg;
pub mod problems;
pub mod output;
pub mod setup;
pub mod time_integration;
pub mod verification;
