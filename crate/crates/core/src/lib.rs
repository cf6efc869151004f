//! Peaks-over-threshold estimation of extreme exceedance probabilities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod events;
pub mod gpd;
pub mod mde;
pub mod optim;
pub mod quadrature;
pub mod residual;
pub mod sim;
pub mod step;
pub mod threshold;

pub use error::{Error, Result};
pub use gpd::{Bound, GpdParams, GpdParams3};
