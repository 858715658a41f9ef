//! Foveated Gaussian-splat rendering.
//!
//! The crate covers the whole offline and runtime pipeline: a multi-level
//! point model ([`model`]), a tile-based differentiable rasterizer
//! ([`raster`]), an eccentricity-aware perceptual metric ([`hvs`]),
//! efficiency-aware pruning ([`prune`]), level derivation and foveated
//! rendering ([`foveation`]) and a cycle-level accelerator model ([`sim`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod foveation;
pub mod hvs;
pub mod io;
pub mod loss;
pub mod model;
pub mod prune;
pub mod raster;
pub mod sh;
pub mod sim;
pub mod synthetic;

pub use camera::{Camera, DisplayGeometry};
pub use error::{Error, Result};
pub use model::{FrModel, LevelOverride, ScenePoint};
