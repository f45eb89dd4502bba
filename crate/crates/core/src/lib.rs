//! Desk-scale, fully synthetic closed-loop EEG-BCI pipeline.
//!
//! The crate covers the whole loop: class-conditioned synthetic EEG with the
//! acquisition filters ([`signal`]), ocular-artifact correction via ICA
//! ([`ica`]), streaming spectral-topographic feature tensors ([`features`]),
//! the SmallNet classifier family with exact gradients ([`network`]),
//! chronological cross-validation and mental-task ranking ([`evaluation`]),
//! a race-game simulator ([`game`]), and the session protocol with adaptive
//! retraining ([`protocol`]).

pub mod evaluation;
pub mod features;
pub mod game;
pub mod ica;
pub mod network;
pub mod protocol;
pub mod seeds;
pub mod signal;

pub use evaluation::{ComboRanking, CvResult, Dataset, Example, ExampleOrigin};
pub use features::{ElectrodeGrid, FeatureTensor};
pub use ica::{CorrectionMatrix, UnmixingModel};
pub use network::{ArchVariant, Architecture, ModelParams, Prediction, TrainConfig};
pub use protocol::{ReplayBuffer, SessionPlan, SessionReport};
pub use signal::{FilterSpec, RawRecording, SignatureConfig};
