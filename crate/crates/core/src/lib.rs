//! Task-parameterised Gaussian mixture models with relevance-weighted
//! frame fusion.
//!
//! Demonstrations are recorded relative to several task frames. [`tpmodel`]
//! fits a mixture per frame and regresses a trajectory for new frames by
//! fusing them. [`relevance`] estimates how much each frame matters at each
//! time step and scales the fusion accordingly; [`optimize`] tunes the
//! exponent that turns local variability into weights.

pub mod dataio;
pub mod error;
pub mod evalx;
pub mod gaussian;
pub mod optimize;
pub mod relevance;
pub mod tpmodel;

pub use error::{Error, Result};
pub use evalx::{ConstraintBoxes, Method, TrajMetrics, Trained};
pub use gaussian::{Gaussian, Information};
pub use optimize::{AlphaSearchConfig, AlphaSearchResult, LossConfig, WeightMode};
pub use relevance::{RelevanceProfile, StepGaussians};
pub use tpmodel::{Dataset, DatasetMeta, Demonstration, EmConfig, TaskFrame, TpGmm, Trajectory};
