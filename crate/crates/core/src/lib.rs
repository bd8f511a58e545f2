//! Dynamic radiance fields with an explicit factorized motion field.
//!
//! A scene is represented by two factorized plane-grid models: a 4D motion
//! field that maps every point at time `t` into a shared canonical volume, and
//! a 3D canonical field that stores density and a latent feature decoded into
//! color by a tiny MLP. Everything here is differentiated by hand, so the
//! gradients of the photometric, flow-prior and depth-prior objectives are
//! exact and can be checked against finite differences.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grids;
pub mod image_io;
pub mod losses;
pub mod metrics;
pub mod priors;
pub mod renderer;
pub mod seed;
pub mod synthscene;
pub mod trainer;

pub use error::{Error, Result};
