use std::path::PathBuf;

use seqmatch::data::DataError;
use seqmatch::ot::OtError;
use seqmatch::retrieval::RetrievalError;
use seqmatch::synthgen::SynthError;
use seqmatch::tcc::TccError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{context}: {source}")]
    Ot {
        context: String,
        #[source]
        source: OtError,
    },
    #[error("{context}: {source}")]
    Tcc {
        context: String,
        #[source]
        source: TccError,
    },
    #[error("{count} of {total} OT solves did not converge (--strict)")]
    NonConverged { count: usize, total: usize },
    #[error("writing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn ot_code(e: &OtError) -> u8 {
    match e {
        OtError::InvalidConfig(_) => EXIT_USAGE,
        OtError::NumericalOverflow { .. } | OtError::NonFiniteCost { .. } => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Synth(SynthError::Data(_)) => EXIT_DATA,
            CliError::Synth(_) => EXIT_USAGE,
            CliError::Retrieval(RetrievalError::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Retrieval(RetrievalError::Ot { source, .. }) => ot_code(source),
            CliError::Retrieval(RetrievalError::Tcc { source: TccError::InvalidTemperature(_), .. }) => EXIT_USAGE,
            CliError::Ot { source, .. } => ot_code(source),
            CliError::Tcc { source: TccError::InvalidTemperature(_), .. } => EXIT_USAGE,
            CliError::NonConverged { .. } => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}
