//! Fusion and restoration of speckle imagery degraded by thermal radiation
//! and heat haze, with a small subset-based DIC engine and a synthetic
//! degradation simulator for ground-truth testing.
//!
//! Pipeline outline:
//!
//! 1. [`fusion::enhance`] splits an image into positive and negative
//!    channels, gamma-corrects the illumination layer, smooths the
//!    reflectance layer with the edge-aware multiscale [`guided`] filter and
//!    fuses the results with the original image.
//! 2. [`restoration::optimize_params`] searches the turbulence transfer
//!    function parameters that maximize [`fsim::fsim`] against a clean
//!    reference, restoring with a Wiener filter.
//! 3. [`restoration::grayscale_average`] averages a frame stack.
//! 4. [`dic`] measures displacement and strain so the effect of each step on
//!    measurement error can be quantified.

pub mod config;
pub mod dic;
pub mod error;
pub mod experiment;
pub mod fsim;
pub mod fusion;
pub mod guided;
pub mod image;
pub mod restoration;
pub mod synthesis;

pub use error::{Error, Result};
pub use image::{GrayImage, Plane};
