// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear probes over frozen language-model activations for analysing
//! persuasion in multi-turn conversations.
//!
//! The crate is organised bottom-up:
//!
//! - [`transcript`]: conversation model and the JSONL corpus format
//! - [`bundle`]: the `.ppab` activation bundle format
//! - [`dataset`]: window policies and labeled dataset assembly
//! - [`probe`]: softmax probes, gradients, training, probe files
//! - [`trajectory`]: probes applied per turn or per token
//! - [`metrics`]: AUROC, trait MSE, Jensen–Shannon distance, Cohen's kappa
//! - [`analysis`]: trait-threshold detection, correlations, calibration,
//!   knock-one-out ablation
//! - [`report`]: CSV readers and writers for the tabular outputs

pub mod analysis;
pub mod bundle;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod task;
pub mod trajectory;
pub mod transcript;

pub use bundle::{
    decode_bundle, encode_bundle, read_bundle, write_bundle, ActivationBundle, TurnSpan,
};
pub use dataset::{assemble, representation, Dataset, WindowPolicy};
pub use error::{Error, Result};
pub use probe::{
    load_probe, predict, save_probe, train, Optimizer, ProbVector, ProbeModel, TrainConfig,
};
pub use task::Task;
pub use trajectory::{Granularity, Trajectory, TrajectoryPoint};
pub use transcript::{
    parse_transcripts, parse_transcripts_str, write_transcripts, BigFive, Conversation,
    ConversationLabels, Outcome, Role, Strategy, Turn,
};
