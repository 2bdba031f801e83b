use std::fmt;

use aavit::{Error, TensorError};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Error,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            error: Error::Config(msg.into()),
        }
    }

    /// Reclassifies a failure while writing run outputs.
    pub fn output(error: Error) -> Self {
        let code = match error {
            Error::Io { .. } => EXIT_OTHER,
            ref e => classify(e),
        };
        Self { code, error }
    }
}

fn classify(error: &Error) -> u8 {
    match error {
        Error::Config(_) => EXIT_CONFIG,
        Error::NonFiniteLoss { .. } | Error::Tensor(TensorError::NonFinite { .. }) => EXIT_NUMERIC,
        Error::Io { .. }
        | Error::Ppm { .. }
        | Error::Manifest(_)
        | Error::UndefinedMetric(_)
        | Error::ScoreFile(_)
        | Error::Checkpoint(_)
        | Error::CheckpointVersion { .. }
        | Error::Tensor(_)
        | Error::Contract(_) => EXIT_DATA,
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self {
            code: classify(&error),
            error,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub trait OutputContext<T> {
    fn output(self) -> CliResult<T>;
}

impl<T> OutputContext<T> for aavit::Result<T> {
    fn output(self) -> CliResult<T> {
        self.map_err(Failure::output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code, EXIT_CONFIG);
        assert_eq!(Failure::from(Error::NonFiniteLoss { step: 3 }).code, EXIT_NUMERIC);
        assert_eq!(
            Failure::from(Error::Tensor(TensorError::NonFinite { op: "gelu" })).code,
            EXIT_NUMERIC
        );
        assert_eq!(Failure::from(Error::Manifest(vec![])).code, EXIT_DATA);
        let io = || Error::Io {
            path: "x".into(),
            source: std::io::Error::other("boom"),
        };
        assert_eq!(Failure::from(io()).code, EXIT_DATA);
        assert_eq!(Failure::output(io()).code, EXIT_OTHER);
    }
}
