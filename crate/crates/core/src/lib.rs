//! Discrete Euler–Poincaré fluid dynamics on open domains with boundary fluxes.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod brackets;
pub mod budgets;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod material;
pub mod models;
pub mod ops;
pub mod runner;
pub mod snapshot;
pub mod sources;
pub mod state;
pub mod tensor;
pub mod thermo;
pub mod verify;

pub use error::{Error, Result};
pub use field::{BoundaryField, Field, Kind};
pub use grid::{Grid, PatchSpec, Side};
