//! Four-intensity decoy-state MDI-QKD over asymmetric and unstable channels.
//!
//! * [`sources`]: photon-number distributions of the `o`, `x`, `y`, `z` sources.
//! * [`channel`]: stable/unstable transmittances and loss compensation.
//! * [`bsm`]: modeled yields and error rates of the Bell-state measurement,
//!   plus an event-level Monte Carlo oracle.
//! * [`keyrate`]: decoy bounds, finite-size fluctuation and the `H` scan.
//! * [`optimizer`]: twelve-parameter gradient ascent with plateau escape.
//! * [`model`]: the key rate as a function of the source parameters.
//!
//! Every numerical type is generic over [`Scalar`]; the aliases below fix it
//! to `f64` (or `f32` for the `*32` variants).

// `!(x > 0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsm;
pub mod channel;
pub mod error;
pub mod keyrate;
pub mod model;
pub mod optimizer;
pub mod scalar;
pub mod sources;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PhotonDistribution = sources::PhotonDistribution<f64>;
pub type SourceSpec = sources::SourceSpec<f64>;
pub type ParamVector = sources::ParamVector<f64>;
pub type StableChannel = channel::StableChannel<f64>;
pub type UnstableChannel = channel::UnstableChannel<f64>;
pub type Channel = channel::Channel<f64>;
pub type CompensationPolicy = channel::CompensationPolicy<f64>;
pub type TransmittancePair = channel::TransmittancePair<f64>;
pub type DetectorSpec = bsm::DetectorSpec<f64>;
pub type FockYieldTable = bsm::FockYieldTable<f64>;
pub type ObservedStats = bsm::ObservedStats<f64>;
pub type FluctuationConfig = keyrate::FluctuationConfig<f64>;
pub type KeyRateReport = keyrate::KeyRateReport<f64>;
pub type OptimizerConfig = optimizer::OptimizerConfig<f64>;
pub type ParamBounds = optimizer::ParamBounds<f64>;
pub type OptimizationTrace = optimizer::OptimizationTrace<f64>;
pub type ProtocolConfig = model::ProtocolConfig<f64>;
pub type KeyRateModel = model::KeyRateModel<f64>;

pub type SourceSpec32 = sources::SourceSpec<f32>;
pub type ParamVector32 = sources::ParamVector<f32>;
pub type DetectorSpec32 = bsm::DetectorSpec<f32>;
pub type KeyRateModel32 = model::KeyRateModel<f32>;
