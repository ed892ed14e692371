//! Labeled-position and puzzle CSV ingestion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::board::Board;
use crate::error::{ChessError, Result};
use crate::fen::parse_fen;
use crate::types::Color;

/// Whose win probability the label column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perspective {
    White,
    #[default]
    SideToMove,
}

impl FromStr for Perspective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "white" => Ok(Perspective::White),
            "side-to-move" => Ok(Perspective::SideToMove),
            _ => Err(format!("unknown perspective {s:?}, expected white or side-to-move")),
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Perspective::White => "white",
            Perspective::SideToMove => "side-to-move",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPosition {
    pub board: Board,
    /// Win probability for the side to move.
    pub value: f64,
}

#[derive(Deserialize)]
struct LabelRow {
    fen: String,
    win_prob: f64,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn data_error(file: &str, line: usize, message: impl Into<String>) -> ChessError {
    ChessError::Data {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn row_line(pos: Option<&csv::Position>) -> usize {
    pos.map_or(0, |p| p.line() as usize)
}

/// CSV with header `fen,win_prob`; labels are converted to the side to move.
pub fn parse_labels(text: &str, file: &str, perspective: Perspective) -> Result<Vec<LabeledPosition>> {
    let mut out = Vec::new();
    let mut rdr = reader(text);
    for row in rdr.deserialize::<LabelRow>() {
        let row = row.map_err(|e| data_error(file, row_line(e.position()), e.to_string()))?;
        let line = out.len() + 2;
        let board = parse_fen(&row.fen).map_err(|e| data_error(file, line, e.to_string()))?;
        if !(0.0..=1.0).contains(&row.win_prob) {
            return Err(data_error(file, line, format!("win probability {} outside [0, 1]", row.win_prob)));
        }
        let value = match (perspective, board.side_to_move()) {
            (Perspective::White, Color::Black) => 1.0 - row.win_prob,
            _ => row.win_prob,
        };
        out.push(LabeledPosition { board, value });
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| bpu_core::Error::Io { path: path.into(), source }.into())
}

pub fn load_labels(path: &Path, perspective: Perspective) -> Result<Vec<LabeledPosition>> {
    parse_labels(&read_text(path)?, &path.display().to_string(), perspective)
}

/// Writes side-to-move labels in the format read by [`parse_labels`].
pub fn labels_csv(rows: &[LabeledPosition]) -> String {
    let mut s = String::from("fen,win_prob\n");
    for r in rows {
        s.push_str(&format!("{},{}\n", crate::fen::to_fen(&r.board), r.value));
    }
    s
}

pub const MIN_RATING: u32 = 399;
pub const MAX_RATING: u32 = 2867;

/// A puzzle in the public export convention: `moves[0]` is the opponent's
/// move that sets up the position, the solver plays `moves[1]`, `moves[3]`, ...
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Puzzle {
    pub id: String,
    pub fen: String,
    pub moves: Vec<String>,
    pub rating: u32,
}

#[derive(Deserialize)]
struct PuzzleRow {
    #[serde(rename = "PuzzleId")]
    id: String,
    #[serde(rename = "FEN")]
    fen: String,
    #[serde(rename = "Moves")]
    moves: String,
    #[serde(rename = "Rating")]
    rating: u32,
}

/// Reads puzzle rows by header name so extra export columns are ignored.
/// Rows with fewer than two moves or a rating outside the dataset range are
/// skipped with a warning.
pub fn parse_puzzles(text: &str, file: &str) -> Result<Vec<Puzzle>> {
    let mut out = Vec::new();
    let mut rdr = reader(text);
    for row in rdr.deserialize::<PuzzleRow>() {
        let row = row.map_err(|e| data_error(file, row_line(e.position()), e.to_string()))?;
        let moves: Vec<String> = row.moves.split_whitespace().map(str::to_string).collect();
        if moves.len() < 2 {
            log::warn!("{file}: puzzle {} has no solver move, skipped", row.id);
            continue;
        }
        if !(MIN_RATING..=MAX_RATING).contains(&row.rating) {
            log::warn!("{file}: puzzle {} rating {} outside {MIN_RATING}..={MAX_RATING}, skipped", row.id, row.rating);
            continue;
        }
        out.push(Puzzle {
            id: row.id,
            fen: row.fen,
            moves,
            rating: row.rating,
        });
    }
    Ok(out)
}

pub fn load_puzzles(path: &Path) -> Result<Vec<Puzzle>> {
    parse_puzzles(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perspective_switch_flips_black_to_move() {
        let text = "fen,win_prob\n4k3/8/8/8/8/8/8/4K3 b - - 0 1,0.8\n4k3/8/8/8/8/8/8/4K3 w - - 0 1,0.8\n";
        let white = parse_labels(text, "t", Perspective::White).unwrap();
        assert!((white[0].value - 0.2).abs() < 1e-15);
        assert_eq!(white[1].value, 0.8);
        let stm = parse_labels(text, "t", Perspective::SideToMove).unwrap();
        assert_eq!(stm[0].value, 0.8);
        assert_eq!(parse_labels(&labels_csv(&stm), "t", Perspective::SideToMove).unwrap(), stm);
    }

    #[test]
    fn bad_rows_report_their_line() {
        let text = "fen,win_prob\n4k3/8/8/8/8/8/8/4K3 w - - 0 1,0.5\n4k3/8/8/8/8/8/8/4K3 w - - 0 1,1.5\n";
        let err = parse_labels(text, "labels.csv", Perspective::White).unwrap_err();
        assert!(matches!(err, ChessError::Data { line: 3, .. }), "{err}");
    }

    #[test]
    fn puzzle_columns_by_name() {
        let text = "PuzzleId,FEN,Moves,Rating,RatingDeviation,Popularity\n\
                    a1,6k1/5ppp/8/8/8/8/R7/6K1 b - - 0 1,g8h8 a2a8,1000,80,90\n\
                    a2,6k1/5ppp/8/8/8/8/R7/6K1 b - - 0 1,g8h8,1000,80,90\n\
                    a3,6k1/5ppp/8/8/8/8/R7/6K1 b - - 0 1,g8h8 a2a8,3000,80,90\n";
        let p = parse_puzzles(text, "p.csv").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].moves, ["g8h8", "a2a8"]);
    }
}
