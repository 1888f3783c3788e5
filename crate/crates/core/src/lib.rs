//! Differentiable multi-patch surface representation.
//!
//! Each patch is a small Softplus MLP mapping the unit square to 3D. Its
//! normals, curvatures and area follow analytically from exact UV
//! derivatives, which also drive the conformal and overlap regularizers
//! used during training.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod geometry;
pub mod jets;
pub mod losses;
pub mod metrics;
pub mod neighbors;
pub mod surface;
pub mod trainer;
pub mod vec3;
