//! Vertical federated learning: wire protocol, transports, the phase-driven training
//! pipeline, Paillier encryption, and the kernel and random forest algorithms.

pub mod audit;
pub mod data;
pub mod error;
pub mod forest;
pub mod he;
pub mod kernel;
pub mod party;
pub mod phase;
pub mod pipeline;
pub mod prediction;
pub mod seed;
pub mod transport;
pub mod wire;

pub use error::{Error, Result, Stage};
pub use party::{Party, MASTER};
pub use pipeline::{run_pipeline, EngineOptions, Pipeline, Round, TrainingReport};
pub use prediction::Predictions;
pub use transport::{LoopbackTransport, TcpTransport, Transport};
pub use wire::{Body, BodyValue, Message, MessageKind};
