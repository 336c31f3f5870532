use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type. `exit_code` groups variants into the process exit
/// categories used by the CLI: 1 configuration or data, 2 convergence,
/// 3 verification failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("time step {dt} violates the stability bound dt < 1/(1 + 2 eta0) = {bound}")]
    UnstableStep { dt: f64, bound: f64 },

    #[error("boundary data at t = {t}: {detail}")]
    Boundary { t: f64, detail: String },

    #[error(
        "steady state at rho = {rho}, alpha = {alpha}: residual {residual:e} \
         after {steps} steps (tol {tol:e})"
    )]
    NoConvergence {
        rho: f64,
        alpha: f64,
        residual: f64,
        steps: u64,
        tol: f64,
    },

    #[error("{path}:{line}: {detail}")]
    ConfigSyntax {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("config key `{key}`: {detail}")]
    ConfigValue { key: String, detail: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::NoConvergence { .. } => 2,
            Error::Verification(_) => 3,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_group_by_category() {
        assert_eq!(Error::invalid("state", "x").exit_code(), 1);
        assert_eq!(
            Error::NoConvergence {
                rho: 0.5,
                alpha: 1.0,
                residual: 1e-3,
                steps: 10,
                tol: 1e-10
            }
            .exit_code(),
            2
        );
        assert_eq!(Error::Verification("bad".into()).exit_code(), 3);
        assert_eq!(
            Error::ConfigValue {
                key: "beta".into(),
                detail: "1.5 outside [0, 1]".into()
            }
            .exit_code(),
            1
        );
    }

    #[test]
    fn messages_name_key_and_constraint() {
        let e = Error::ConfigValue {
            key: "scenarios.beta".into(),
            detail: "1.5 outside [0, 1]".into(),
        };
        let msg = e.to_string();
        assert!(msg.contains("scenarios.beta"));
        assert!(msg.contains("[0, 1]"));
    }
}
