//! Discrete rough paths, controlled paths and their seminorms.

mod controlled;
mod grid;
mod hoelder;
pub mod io;
mod rough_path;
mod smooth;

pub use controlled::{compose_smooth, composition_remainder_bound, concat_cp, GridControlledPath, RemainderField};
pub use grid::{ExponentTriple, Grid, HoelderExponent};
pub use hoelder::{
    hoelder_scan, hoelder_seminorm, homogeneous_norm, rough_path_seminorms, FnField, HoelderEstimate, Level2Field,
    PairSet, PathField, TwoParameterField, DEFAULT_PAIR_BUDGET,
};
pub use rough_path::GridRoughPath;
pub use smooth::{ClosureMap, Constant, Identity, Linear, SmoothMap};
