//! Event-camera time-to-collision and impact-location pipeline: DVS simulation,
//! exponential filterbank encoding, motion-aware augmentation, a small CNN with
//! hand-written backpropagation, Bayesian smoothing and evaluation.

pub mod error;
pub mod event;
pub mod filterbank;
pub mod geom;
pub mod real;
pub mod seed;
pub mod sim;
pub mod augment;
pub mod nnet;
pub mod inference;
pub mod eval;
pub mod config;
pub mod pipeline;

/// Double-precision instantiations of the generic types.
pub type CameraModel = geom::CameraModel<f64>;
pub type RigidTransform = geom::RigidTransform<f64>;
pub type ImpactLabel = geom::ImpactLabel<f64>;
pub type TrajectorySample = geom::TrajectorySample<f64>;
pub type FilterBank = filterbank::FilterBank<f64>;
pub type Network = nnet::Network<f64>;
pub type Posterior = inference::Posterior<f64>;

pub use error::{Error, Result};
