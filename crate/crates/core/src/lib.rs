//! Concept activation vectors in an autoencoder's latent space, concept-guided
//! latent traversal for counterfactual images, and the evaluation harness that
//! scores both on synthetic phantoms with exact ground-truth masks.
//!
//! The pipeline runs in stages:
//!
//! 1. [`synthgen`] renders two dataset styles of 64x64 phantoms with three
//!    injectable concepts and their masks.
//! 2. [`models`] trains a dense autoencoder on images only, plus a small
//!    concept classifier used by the Latent Shift baseline.
//! 3. [`cav`] fits logistic regressions on balanced latent batches and keeps
//!    the unit normal of each hyperplane as the concept direction.
//! 4. [`explain`] shifts latents along a direction, decodes, and turns the
//!    pixel changes into an attribution map.
//! 5. [`eval`] scores direction stability by cosine similarity and attribution
//!    quality by IoU against the concept masks.
//!
//! [`pipeline`] wires the stages to disk and [`config`] holds the experiment
//! file format.

pub mod cav;
pub mod config;
pub mod error;
pub mod eval;
pub mod explain;
pub mod image;
pub mod models;
pub mod numerics;
pub mod pgm;
pub mod pipeline;
pub mod synthgen;

pub use error::{Error, Result};
