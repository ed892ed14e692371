//! Chess rules, board encoders, a reservoir-backed value model and
//! minimax search for puzzle solving.
pub mod attacks;
pub mod board;
pub mod data;
pub mod embed;
pub mod encode;
pub mod error;
pub mod fen;
pub mod movegen;
pub mod puzzle;
pub mod search;
pub mod types;
pub mod value;

pub use board::{Board, Undo, START_FEN};
pub use error::{ChessError, Result};
pub use fen::{parse_fen, to_fen, FenError};
pub use movegen::{legal_moves, perft};
pub use search::{search, Evaluator, MaterialEvaluator, SearchResult};
pub use types::{Color, Move, Piece, PieceKind, Square};
pub use value::ValueModel;
