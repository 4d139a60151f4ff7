//! Reversible 1-bit image binarization through learned textures.
//!
//! A fully convolutional encoder turns a color image into a binary image
//! whose visible textures carry the color information; a small decoder can
//! reconstruct the original colors from the binary image alone. The encoder
//! ends in a stack of discretized-tanh layers that step the representation
//! down from 8 bits per pixel to 1, trained with a straight-through
//! estimator. Training combines an L2 reconstruction loss with a
//! relative-intensity term (region brightness ordering must survive
//! binarization) and a color-continuity term (similar colors must map to
//! similar textures).
//!
//! This crate holds the algorithmic core and is `no_std`-compatible
//! (`alloc` required, disable default features). IO, file formats and the
//! CLI live in the companion `texturebit` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod baselines;
pub mod checkpoint;
pub mod image;
pub mod losses;
pub mod network;
pub mod quantize;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod train;

mod conv;

pub use image::{ImageTensor, PixelBuffer};
pub use losses::LossBreakdown;
pub use network::{ModelParams, NetworkConfig};
pub use quantize::{DiscretePlane, QuantSpec};
pub use scalar::Real;
pub use train::TrainConfig;
