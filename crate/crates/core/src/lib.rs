//! Prompted object removal with a three-stage refinement cascade.
//!
//! The crate is organized bottom-up:
//!
//! - [`imaging`]: RGB/gray rasters, luma, separable filtering, downsampling.
//! - [`maskops`]: logit thresholding (`t`) and Euclidean buffer dilation (`b`).
//! - [`iqa`]: NIQE, BRISQUE and PI computed from natural-scene statistics.
//! - [`inpaint`]: fast-marching and exemplar inpainting plus the external
//!   inpainter contract.
//! - [`backends`]: detector, captioner, prompt rewriter and generator
//!   contracts, their HTTP clients, deterministic mocks and the synthetic
//!   scene generator.
//! - [`pipeline`]: the detect / refine / inpaint / regenerate cascade,
//!   parameter sweeps and on-disk outcome layout.

pub mod backends;
pub mod error;
pub mod imaging;
pub mod inpaint;
pub mod iqa;
pub mod maskops;
pub mod pipeline;

pub use error::{Error, Result};
pub use imaging::{GrayImage, ImageBuffer, Kernel1D};
pub use maskops::{BinaryMask, LogitMap, MaskParams};
