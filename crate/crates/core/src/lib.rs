//! Selective adaptive learning: backpropagation-free training of multi-layer
//! perceptrons through hard per-sample routing into parameter areas and
//! fixed-feedback error projection, with dense backpropagation and top-1
//! mixture-of-experts baselines.
//!
//! ```
//! use sal_core::{Matrix, Method, Network, NetworkConfig};
//!
//! let config = NetworkConfig::shallow(Method::Sal, 4, 8, 3, 2);
//! let mut net = Network::build(config, 7).unwrap();
//! let x = Matrix::from_fn(5, 4, |r, c| (r + c) as f64 / 10.0);
//! let loss = net.train_step(&x, &[0, 1, 2, 0, 1]).unwrap();
//! assert!(loss.is_finite());
//! ```

pub mod data;
pub mod error;
pub mod experiment;
pub mod layers;
pub mod network;
pub mod numerics;

pub use data::{Dataset, DatasetKind};
pub use error::{Result, SalError};
pub use experiment::{ExperimentSpec, MetricsRecord, Preset, SweepAxis};
pub use layers::{FcLayer, LayerCache, MoeLayer, RoutingDecision, SalLayer};
pub use network::{Evaluation, Layer, Method, Network, NetworkConfig, UpdateOrder};
pub use numerics::{Activation, Matrix, Prng};
