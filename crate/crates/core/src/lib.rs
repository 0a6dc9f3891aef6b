//! Rough paths on uniform grids, rough differential equations and
//! stochastic averaging for slow-fast systems driven by rough noise.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod algebra;
pub mod error;
pub mod experiment;
pub mod frozen;
pub mod integral;
pub mod lifts;
pub mod linalg;
pub mod quadrature;
pub mod rde;
pub mod slowfast;
pub mod stats;

pub use error::{Error, Result};
