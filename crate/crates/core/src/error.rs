use std::fmt;

use crate::data::DataError;
use crate::he::CryptoError;
use crate::transport::TransportError;
use crate::wire::{BodyError, WireError};

/// Lifecycle stage of a training pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Init,
    Loop,
    Finish,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Init => "init",
            Stage::Loop => "loop",
            Stage::Finish => "finish",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error("phase {0} is already registered")]
    DuplicatePhase(i32),
    #[error("{party} failed in phase {phase}: {message}")]
    Remote {
        party: String,
        phase: i32,
        message: String,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("iteration cap of {0} rounds reached")]
    IterationCap(usize),
    #[error("{stage} round {round} aborted: {source}")]
    Aborted {
        stage: Stage,
        round: usize,
        source: Box<Error>,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Strips `Aborted` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Aborted { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
