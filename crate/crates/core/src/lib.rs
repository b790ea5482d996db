//! Generative autoencoders for asset-correlation matrices and credit VaR sensitivity.
//!
//! The crate builds rolling correlation datasets, trains variational,
//! deterministic and linear autoencoders on them, checks generated matrices
//! against the stylized facts of financial correlations, and measures how a
//! multi-factor Vasicek portfolio's VaR moves across the learned latent plane.

pub mod autoencoders;
pub mod corrdata;
pub mod creditrisk;
pub mod error;
pub mod facts;
pub mod fsio;
pub mod latent;
pub mod linalg;
pub mod neural;
pub mod rng;
pub mod sensitivity;
pub mod stats;

pub use autoencoders::{Autoencoder, LatentEncoding, TrainConfig, TrainReport, VaeModel};
pub use corrdata::{CorrelationMatrix, MatrixPanel, ReturnPanel};
pub use creditrisk::{LossDistribution, PortfolioSpec, SimConfig};
pub use error::{Error, ErrorKind, Result};
pub use latent::{LatentGrid, LatentSeries};
pub use sensitivity::{BootstrapConfig, VarSurface};
