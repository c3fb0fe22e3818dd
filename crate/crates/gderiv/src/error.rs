use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration; `path` is the dotted field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: gderiv_core::Error,
    },

    #[error("acceptance failure: {0}")]
    Acceptance(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 2 for configuration errors, 3 for numerical precondition failures,
    /// 4 for acceptance failures and 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        use gderiv_core::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Core { source, .. } => match source {
                E::Domain(_) | E::Unsupported(_) => 2,
                E::Io(_) => 1,
                _ => 3,
            },
            CliError::Acceptance(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

/// Attaches experiment context to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for gderiv_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core { context: what(), source })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Io { context: what(), source })
    }
}
