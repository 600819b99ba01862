//! Recovery of crossing point-source trajectories from a temporal stack of
//! blurred, noisy frames.
//!
//! Curves are lifted to the roto-translation space `M2 = R^2 x S^1`, where the
//! orientation channel separates trajectories that cross in the plane, and
//! regularized with the relaxed Reeds-Shepp kinetic energy. Reconstruction is
//! an Unravelling Frank-Wolfe loop over discretized curve families
//! (polygonal, Bezier, piecewise geodesic).

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod curves;
pub mod energy;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod metrics;
pub mod observation;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
