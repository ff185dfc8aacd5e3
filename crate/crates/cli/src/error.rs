use std::fmt;
use std::io;

use trackagg::Error;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad arguments, bad configuration, or missing/invalid inputs.
    Usage,
    /// Anything that fails after inputs were accepted.
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: ExitKind::Usage, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: ExitKind::Runtime, error: error.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ExitKind::Usage => 2,
            ExitKind::Runtime => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

fn kind_of(e: &Error) -> ExitKind {
    match e {
        Error::InvalidConfig(_)
        | Error::NonPositiveMargin(_)
        | Error::Manifest { .. }
        | Error::DuplicateTrackId(_)
        | Error::UnknownTrack(_)
        | Error::MissingFeatureFile { .. }
        | Error::FrameCountMismatch { .. } => ExitKind::Usage,
        Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => ExitKind::Usage,
        _ => ExitKind::Runtime,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { kind: kind_of(&e), error: e.into() }
    }
}
