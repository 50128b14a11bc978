//! File formats, the coordinator wire protocol, the pipeline runtime and
//! the command line for the `dataforge-core` algorithms.

pub mod cli;
pub mod corpus;
pub mod formats;
pub mod pipeline;
pub mod protocol;
pub mod server;
pub mod stages;
pub mod train;
pub mod wav;

use std::path::PathBuf;

use dataforge_core::audio::AudioError;
use dataforge_core::grpo::GrpoError;
use dataforge_core::orchestrator::OrchestratorError;
use dataforge_core::phoneme::PhonemeError;
use dataforge_core::punct::PunctError;
use dataforge_core::qa::QaError;
use dataforge_core::vocab::VocabError;

pub use formats::ParseError;
pub use protocol::ProtocolError;

/// Seed used when neither `--seed` nor `DATAFORGE_SEED` is given.
pub const DEFAULT_SEED: u64 = 20_250_601;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Wav { path: PathBuf, source: hound::Error },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Punct(#[from] PunctError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Phoneme(#[from] PhonemeError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("{0}")]
    Data(String),
}
