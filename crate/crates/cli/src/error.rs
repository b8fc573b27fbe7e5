use std::path::PathBuf;

use trajekt_core::Error as CoreError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DEPENDENCY: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage}: missing upstream artifact {}; run `{needs}` first", path.display())]
    Dependency { stage: &'static str, needs: &'static str, path: PathBuf },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Dependency { .. } => EXIT_DEPENDENCY,
            CliError::Stage { source, .. } => match source {
                CoreError::Config(_) => EXIT_CONFIG,
                CoreError::NonIdentifiable { .. } | CoreError::Numeric(_) | CoreError::UndefinedTest(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

/// Tags a core error with the stage it came from.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageContext<T> for trajekt_core::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
