//! Nowcasting of financial curves and surfaces.
//!
//! A daily time series of curves or surfaces (repo rates, implied
//! volatilities) is compressed into a few latent factors per observation.
//! The trained decoder is then used to complete partially observed days,
//! to flag outliers by reconstruction error, and to interpolate on
//! arbitrary grids. Works both on fixed grids (autoencoders, PCA) and on
//! moving grids (functional decoder taking the node location as input).

pub mod baselines;
pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod optim;
pub mod pipeline;

pub use data::{Dataset, MaskSpec, NodeLocation, Observation};
pub use error::CoreError;
pub use nn::{Activation, InitScheme, LayerSpec, Network, ParamVector, Tensor};
pub use optim::{AdamState, BatchMode, TrainConfig, TrainHistory};
pub use models::Model;
pub use pipeline::{
    BacktestConfig, BacktestReport, CompletionConfig, CompressConfig, CompressionResult, Method,
};
