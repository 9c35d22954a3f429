use thiserror::Error;

/// Failures of an experiment, each mapped to a process exit status.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run {run} failed: {source}")]
    Solver {
        run: String,
        #[source]
        source: homp_core::Error,
    },
    #[error("{}", format_violations(.0))]
    Monitor(Vec<String>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[String]) -> String {
    format!("{} monitor violation(s):\n  {}", v.len(), v.join("\n  "))
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Solver { .. } => 3,
            LabError::Monitor(_) => 4,
            LabError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
