//! Numerical lab for solitons of the 1-D nonlinear Klein-Gordon equation
//! `u_tt - u_xx + u - f(u) = 0`.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] periodic grid, fields, spectral derivatives, quadrature
//! * [`soliton`] nonlinearities, ground states, Lorentz boosts
//! * [`spectral`] linearized operators and their eigen-directions
//! * [`evolve`] Strang-split time stepping and conserved quantities
//! * [`modulation`] soliton-sum decomposition, tube test, Lyapunov functional
//! * [`shoot`] backward shooting for multi-soliton final data

pub mod dense;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod krylov;
pub mod modulation;
pub mod ode;
pub mod shoot;
pub mod snapshot;
pub mod soliton;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{FieldPair, Grid, ScalarField};
pub use soliton::{Boost, GroundState, Nonlinearity, SolitonParams};
