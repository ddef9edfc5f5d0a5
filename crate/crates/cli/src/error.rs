use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", bullet_list(.0))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Core(#[from] regsynth::Error),
}

fn bullet_list(items: &[String]) -> String {
    items.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        }
    }

    /// 1 for a certified-infeasible program, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(regsynth::Error::Infeasible(_)) => 1,
            _ => 2,
        }
    }
}
