use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] picrnn_core::Error),

    #[error(transparent)]
    Surrogate(#[from] picrnn_surrogate::Error),

    #[error("{0}")]
    Usage(String),
}

fn core_kind(e: &picrnn_core::Error) -> &'static str {
    use picrnn_core::Error as C;
    match e {
        C::Config { .. } | C::Json(_) => "config",
        C::Io { .. } => "io",
        C::Format(_) => "format",
        C::InvalidModel(_) | C::DuplicateWellCell { .. } | C::DegenerateWell(_) => "model",
        C::NoConvergence { .. } | C::Simulation { .. } | C::NotPositiveDefinite => "solver",
        _ => "input",
    }
}

impl CliError {
    fn core(&self) -> Option<&picrnn_core::Error> {
        match self {
            CliError::Core(e) | CliError::Surrogate(picrnn_surrogate::Error::Model(e)) => Some(e),
            _ => None,
        }
    }

    fn kind(&self) -> &'static str {
        match (self, self.core()) {
            (_, Some(e)) => core_kind(e),
            (CliError::Surrogate(picrnn_surrogate::Error::Diverged { .. }), _) => "diverged",
            (CliError::Surrogate(picrnn_surrogate::Error::Checkpoint { .. }), _) => "checkpoint",
            (CliError::Surrogate(_), _) => "surrogate",
            _ => "usage",
        }
    }

    /// One-line JSON diagnostic with `error` (kind) and `message`, plus
    /// `key` or `path` when known.
    pub fn to_json_line(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self.core() {
            Some(picrnn_core::Error::Config { key, .. }) => v["key"] = json!(key),
            Some(picrnn_core::Error::Io { path, .. }) => v["path"] = json!(path),
            _ => {}
        }
        if let CliError::Surrogate(picrnn_surrogate::Error::Checkpoint { path, .. }) = self {
            v["path"] = json!(path);
        }
        v.to_string()
    }
}
