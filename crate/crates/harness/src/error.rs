use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: crate::ppm::PpmError },
    #[error("no PPM/PGM images found in {0}")]
    NoCorpus(PathBuf),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("{0} has no data rows")]
    EmptyCsv(PathBuf),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{context}: {source}")]
    Core { context: String, source: semcode_core::Error },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub fn core(context: impl Into<String>, source: semcode_core::Error) -> Self {
        HarnessError::Core { context: context.into(), source }
    }

    /// Process exit status: 2 config, 3 I/O or malformed data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use semcode_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::UnknownColumn(_) => 2,
            HarnessError::Io { .. }
            | HarnessError::Image { .. }
            | HarnessError::NoCorpus(_)
            | HarnessError::EmptyCsv(_)
            | HarnessError::Csv(_) => 3,
            HarnessError::Core { source, .. } => match source {
                E::Format(_) | E::CorruptFrame(_) | E::CorruptBitstream(_) => 3,
                _ => 4,
            },
        }
    }
}

impl From<semcode_core::Error> for HarnessError {
    fn from(e: semcode_core::Error) -> Self {
        HarnessError::core("pipeline", e)
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
