use rayon::prelude::*;
use serde::Serialize;

use crate::board::Board;
use crate::data::Puzzle;
use crate::error::{ChessError, Result};
use crate::fen::{parse_fen, to_fen};
use crate::movegen::find_move;
use crate::search::{search, Evaluator};

pub const ELO_BIN_WIDTH: u32 = 200;

fn illegal(p: &Puzzle, mv: &str, b: &Board) -> ChessError {
    ChessError::IllegalMove {
        context: format!("puzzle {}", p.id),
        mv: mv.to_string(),
        fen: to_fen(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PuzzleOutcome {
    pub solved: bool,
    /// Principal variation of the last search, in coordinate notation.
    pub pv: String,
}

/// Plays the opponent's setup move, then requires every search move to equal
/// the solution exactly while replies come from the solution.
pub fn solve_puzzle<E: Evaluator + ?Sized>(p: &Puzzle, eval: &E, depth: u32, use_pruning: bool) -> Result<bool> {
    solve_puzzle_detailed(p, eval, depth, use_pruning).map(|o| o.solved)
}

pub fn solve_puzzle_detailed<E: Evaluator + ?Sized>(p: &Puzzle, eval: &E, depth: u32, use_pruning: bool) -> Result<PuzzleOutcome> {
    let start = parse_fen(&p.fen).map_err(|source| ChessError::Fen { fen: p.fen.clone(), source })?;
    // Replay the whole line first so bad data is reported, not scored.
    let mut line = Vec::with_capacity(p.moves.len());
    let mut b = start.clone();
    for uci in &p.moves {
        let mv = find_move(&b, uci).ok_or_else(|| illegal(p, uci, &b))?;
        b.make_move(mv);
        line.push(mv);
    }

    let mut b = start;
    let mut history = vec![b.hash()];
    b.make_move(line[0]);
    let mut pv = String::new();
    for (i, &expected) in line.iter().enumerate().skip(1) {
        if i % 2 == 1 {
            let r = search(&b, depth, eval, use_pruning, &history)?;
            pv = r.pv_string();
            if r.best != expected {
                return Ok(PuzzleOutcome { solved: false, pv });
            }
        }
        history.push(b.hash());
        b.make_move(expected);
    }
    Ok(PuzzleOutcome { solved: true, pv })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EloBin {
    pub elo_lo: u32,
    pub elo_hi: u32,
    pub puzzles: usize,
    pub solved: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PuzzleReport {
    pub total: usize,
    pub solved: usize,
    /// Puzzles dropped for data errors.
    pub skipped: usize,
    /// Percentage of scored puzzles solved.
    pub accuracy: f64,
    pub bins: Vec<EloBin>,
    /// Per puzzle, `None` when skipped for bad data.
    pub outcomes: Vec<(String, u32, Option<PuzzleOutcome>)>,
}

impl PuzzleReport {
    pub fn bins_csv(&self) -> String {
        let mut s = String::from("elo_lo,elo_hi,puzzles,solved,accuracy\n");
        for b in &self.bins {
            s.push_str(&format!("{},{},{},{},{:.4}\n", b.elo_lo, b.elo_hi, b.puzzles, b.solved, b.accuracy));
        }
        s
    }

    pub fn puzzles_csv(&self) -> String {
        let mut s = String::from("id,rating,status,pv\n");
        for (id, rating, o) in &self.outcomes {
            let (status, pv) = match o {
                Some(o) if o.solved => ("solved", o.pv.as_str()),
                Some(o) => ("failed", o.pv.as_str()),
                None => ("skipped", ""),
            };
            s.push_str(&format!("{id},{rating},{status},{pv}\n"));
        }
        s
    }
}

/// Solves puzzles in parallel; data errors are logged and excluded.
pub fn puzzle_accuracy<E: Evaluator + ?Sized>(puzzles: &[Puzzle], eval: &E, depth: u32, use_pruning: bool) -> Result<PuzzleReport> {
    if puzzles.is_empty() {
        return Err(bpu_core::Error::Validation("puzzle set is empty".into()).into());
    }
    let results: Vec<Result<PuzzleOutcome>> = puzzles
        .par_iter()
        .map(|p| solve_puzzle_detailed(p, eval, depth, use_pruning))
        .collect();
    let mut outcomes = Vec::with_capacity(puzzles.len());
    let mut bins: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for (p, r) in puzzles.iter().zip(results) {
        match r {
            Ok(o) => {
                let e = bins.entry(p.rating / ELO_BIN_WIDTH * ELO_BIN_WIDTH).or_default();
                e.0 += 1;
                e.1 += o.solved as usize;
                outcomes.push((p.id.clone(), p.rating, Some(o)));
            }
            Err(e) if e.is_data_error() => {
                log::warn!("skipping puzzle {}: {e}", p.id);
                outcomes.push((p.id.clone(), p.rating, None));
            }
            Err(e) => return Err(e),
        }
    }
    let total: usize = bins.values().map(|b| b.0).sum();
    let solved: usize = bins.values().map(|b| b.1).sum();
    if total == 0 {
        return Err(bpu_core::Error::Validation("every puzzle was skipped".into()).into());
    }
    Ok(PuzzleReport {
        total,
        solved,
        skipped: puzzles.len() - total,
        accuracy: 100.0 * solved as f64 / total as f64,
        bins: bins
            .into_iter()
            .map(|(lo, (n, s))| EloBin {
                elo_lo: lo,
                elo_hi: lo + ELO_BIN_WIDTH,
                puzzles: n,
                solved: s,
                accuracy: 100.0 * s as f64 / n as f64,
            })
            .collect(),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::MaterialEvaluator;

    fn back_rank() -> Puzzle {
        Puzzle {
            id: "br".into(),
            fen: "6k1/5ppp/8/8/8/8/R7/6K1 b - - 0 1".into(),
            moves: vec!["g8h8".into(), "a2a8".into()],
            rating: 1000,
        }
    }

    #[test]
    fn mate_puzzle_solved_and_wrong_line_fails() {
        assert!(solve_puzzle(&back_rank(), &MaterialEvaluator, 1, true).unwrap());
        let mut wrong = back_rank();
        wrong.moves = vec!["g8h8".into(), "a2a7".into()];
        assert!(!solve_puzzle(&wrong, &MaterialEvaluator, 1, true).unwrap());
    }

    #[test]
    fn illegal_solution_is_a_data_error_and_skipped() {
        let mut bad = back_rank();
        bad.moves[1] = "a2h8".into();
        assert!(matches!(solve_puzzle(&bad, &MaterialEvaluator, 1, true), Err(ChessError::IllegalMove { .. })));
        let report = puzzle_accuracy(&[back_rank(), bad], &MaterialEvaluator, 1, true).unwrap();
        assert_eq!((report.total, report.solved, report.skipped), (1, 1, 1));
        assert_eq!(report.accuracy, 100.0);
        assert_eq!(report.bins[0].elo_lo, 1000);
        assert_eq!(report.puzzles_csv(), "id,rating,status,pv\nbr,1000,solved,a2a8\nbr,1000,skipped,\n");
        assert!(puzzle_accuracy(&[], &MaterialEvaluator, 1, true).is_err());
    }
}
