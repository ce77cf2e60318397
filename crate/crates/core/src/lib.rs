//! Exponentially tilted lattice distributions generated by a rate function,
//! convexity of tilted expectations as functions of the density, the
//! hydrodynamic flux and `ν`-measure of zero range and bricklayer processes,
//! and an event-driven zero range simulator.

// `!(a < b)` is used on purpose so NaN falls into the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convexity;
pub mod error;
pub mod flux;
pub mod instances;
pub mod measure;
pub mod sim;
pub mod tables;
pub mod tilt;
pub mod cli;

pub use error::{Error, Result};
pub use measure::{
    tilted_measure, Distribution, MeasureConfig, RateFunction, RateKind, SupportInterval,
    TiltedMeasure,
};
pub use tilt::{theta_of_rho, TiltConfig, TiltSolution};
