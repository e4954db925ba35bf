//! Finite-element solver for nonlinear quasi-static poroelasticity in the
//! (u, ξ, η) reformulation: a generalized nonlinear Stokes problem for the
//! displacement and pseudo total pressure, coupled to a diffusion problem
//! for the pseudo fluid content.

// Negated comparisons reject NaN on purpose; index loops mirror the
// element formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constitutive;
pub mod fem;
pub mod mesh;
pub mod mms;
pub mod probes;
pub mod stepper;
