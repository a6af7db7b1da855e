//! Radio-map estimation on rectangular grids.
//!
//! The crate simulates power and power-spectral-density maps over a 2-D area
//! (pathloss plus spatially correlated lognormal shadowing, expanded in a
//! small frequency basis), draws irregular measurement sets from those maps,
//! and reconstructs the full map from the measurements.  Estimators include a
//! convolutional autoencoder trained with masked losses, plus classical
//! baselines (K nearest neighbours, Gaussian-kernel ridge interpolation, and
//! nuclear-norm matrix completion).  Evaluation utilities compute RMSE
//! sweeps, render grayscale heatmaps, and probe the latent space of trained
//! autoencoders.
//!
//! All map values are carried in dB (dBm for powers, dBm/MHz for spectral
//! densities); conversions to and from the linear mW domain live in
//! [`units`].  Tensors are dense row-major [`ndarray`] arrays and can be
//! stored in a small self-describing binary format (see [`tensor`]).

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod network;
pub mod propagation;
pub mod tensor;
pub mod units;

pub use error::{Error, Result};
