//! Volumetric shape completion from a single depth view.
//!
//! The crate covers the whole pipeline: virtual scanning of meshes into paired
//! partial/complete occupancy grids ([`meshscan`], [`dataset`]), a small
//! reverse-mode autodiff engine with double-backward support ([`autodiff`]),
//! the encoder-decoder generator and conditional latent critic ([`nnarch`]),
//! the weighted reconstruction and WGAN-GP objectives ([`losses`]), training
//! ([`train`]) and evaluation ([`evalharness`]).

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod evalharness;
pub mod losses;
pub mod meshscan;
pub mod nnarch;
pub mod optim;
pub mod train;
pub mod voxelgrid;

pub use error::{Error, Result};
