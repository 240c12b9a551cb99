use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mpcrn::Error),

    #[error("parse error: malformed WAV {path}: {msg}")]
    Wav { path: String, msg: String },

    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

impl CliError {
    /// 2 for bad input or usage, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(mpcrn::Error::Numerical(_)) | CliError::Gradcheck(_) => 3,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Core(mpcrn::Error::Numerical("x".into())).exit_code(), 3);
        assert_eq!(CliError::Gradcheck("gru".into()).exit_code(), 3);
        assert_eq!(CliError::Core(mpcrn::Error::InvalidInput("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(mpcrn::Error::Parse { line: 1, msg: "x".into() }).exit_code(), 2);
    }
}
