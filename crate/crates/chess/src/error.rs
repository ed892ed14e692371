use crate::fen::FenError;

#[derive(Debug, thiserror::Error)]
pub enum ChessError {
    #[error("invalid FEN {fen:?}: {source}")]
    Fen {
        fen: String,
        #[source]
        source: FenError,
    },
    #[error("no legal moves in {0}")]
    NoLegalMoves(String),
    #[error("{context}: move {mv} is not legal in {fen}")]
    IllegalMove { context: String, mv: String, fen: String },
    #[error("{file}:{line}: {message}")]
    Data { file: String, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] bpu_core::Error),
}

impl ChessError {
    /// True for errors caused by bad input rather than numeric failure.
    pub fn is_data_error(&self) -> bool {
        match self {
            ChessError::Core(e) => e.is_data_error(),
            _ => true,
        }
    }
}

pub type Result<T, E = ChessError> = std::result::Result<T, E>;
