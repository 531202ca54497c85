use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] hypmark::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for anything the user can fix by changing inputs, 3 for numeric
    /// trouble inside the computation.
    pub fn exit_code(&self) -> i32 {
        use hypmark::Error as E;
        match self {
            CliError::Core(E::Numeric { .. } | E::Overflow(_) | E::Divergence(_) | E::Convergence(_) | E::InsufficientData(_)) => 3,
            _ => 2,
        }
    }
}
