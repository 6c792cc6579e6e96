use std::path::{Path, PathBuf};

use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical failure: {error}")]
    Numerical {
        error: qlbgk_core::Error,
        /// Context of the failing run.
        snapshot: Value,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("selftest failed: {0} check(s)")]
    SelfTest(usize),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn numerical(error: qlbgk_core::Error) -> Self {
        Self::Numerical {
            error,
            snapshot: Value::Null,
        }
    }

    pub fn with_snapshot(self, context: Value) -> Self {
        match self {
            Self::Numerical { error, .. } => Self::Numerical {
                error,
                snapshot: context,
            },
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numerical { .. } | Self::SelfTest(_) => 3,
            Self::Io { .. } => 1,
        }
    }

    /// Machine-readable report written to stderr.
    pub fn report(&self) -> Value {
        let mut report = json!({
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            Self::Config { field, message } => {
                report["kind"] = "config".into();
                report["field"] = field.clone().into();
                report["detail"] = message.clone().into();
            }
            Self::Numerical { error, snapshot } => {
                report["kind"] = "numerical".into();
                report["snapshot"] = snapshot.clone();
                if let qlbgk_core::Error::NonConvergence {
                    iterations,
                    residual,
                    history,
                } = error
                {
                    report["iterations"] = (*iterations).into();
                    report["residual"] = (*residual).into();
                    report["residual_history"] = history.clone().into();
                }
            }
            Self::Io { path, .. } => {
                report["kind"] = "io".into();
                report["path"] = path.display().to_string().into();
            }
            Self::SelfTest(n) => {
                report["kind"] = "selftest".into();
                report["failed"] = (*n).into();
            }
        }
        report
    }
}

/// Core configuration errors surface as exit code 2, everything else as 3.
impl From<qlbgk_core::Error> for CliError {
    fn from(error: qlbgk_core::Error) -> Self {
        match error {
            qlbgk_core::Error::InvalidConfig(message) => Self::Config {
                field: String::new(),
                message,
            },
            error => Self::numerical(error),
        }
    }
}
