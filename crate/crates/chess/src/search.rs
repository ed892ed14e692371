//! Negamax over win probabilities with optional alpha-beta pruning.
//!
//! Values are the probability that the side to move wins, so a child value
//! `v` becomes `1 - v` for the parent and the window `(a, b)` becomes
//! `(1 - b, 1 - a)`.

use crate::board::Board;
use crate::error::{ChessError, Result};
use crate::fen::to_fen;
use crate::movegen::legal_moves_mut;
use crate::types::*;

pub const LOSS: f64 = 0.0;
pub const DRAW: f64 = 0.5;

/// Static value of a non-terminal position for the side to move, in `[0, 1]`.
pub trait Evaluator: Sync {
    fn value(&self, b: &Board) -> f64;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn value(&self, b: &Board) -> f64 {
        (**self).value(b)
    }
}

/// Material plus a small piece-square bonus, squashed by `sigmoid(cp / 400)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaterialEvaluator;

const CP: [i32; 6] = [100, 320, 330, 500, 900, 0];

/// Centipawns for the side to move.
pub fn material_cp(b: &Board) -> i32 {
    let mut score = 0;
    for sq in 0..64u8 {
        let Some(p) = b.piece_at(sq) else { continue };
        let (f, r) = (file_of(sq) as i32, rank_of(sq) as i32);
        let rel_rank = if p.color == Color::White { r } else { 7 - r };
        let center = 6 - ((2 * f - 7).abs() + (2 * r - 7).abs()) / 2;
        let bonus = match p.kind {
            PieceKind::Pawn => 5 * (rel_rank - 1),
            PieceKind::Knight | PieceKind::Bishop => 4 * center,
            PieceKind::Queen => center,
            _ => 0,
        };
        let v = CP[p.kind.index()] + bonus;
        score += if p.color == b.side_to_move() { v } else { -v };
    }
    score
}

impl Evaluator for MaterialEvaluator {
    fn value(&self, b: &Board) -> f64 {
        bpu_core::readout::sigmoid(material_cp(b) as f64 / 400.0)
    }
}

/// Captures first by victim value, then by `(from, to, promotion)`.
pub fn order_moves(b: &Board, moves: &mut [Move]) {
    let victim = |m: &Move| -> i32 {
        if m.is_en_passant() {
            PieceKind::Pawn.value() as i32
        } else {
            b.piece_at(m.to).map_or(-1, |p| p.kind.value() as i32)
        }
    };
    moves.sort_by_key(|m| (std::cmp::Reverse(victim(m)), m.from, m.to, m.promotion));
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Move,
    pub value: f64,
    /// Principal variation starting with `best`.
    pub pv: Vec<Move>,
    /// Positions visited, root included.
    pub nodes: u64,
}

impl SearchResult {
    pub fn pv_string(&self) -> String {
        self.pv.iter().map(Move::uci).collect::<Vec<_>>().join(" ")
    }
}

struct Searcher<'a, E: ?Sized> {
    eval: &'a E,
    pruning: bool,
    nodes: u64,
    /// Hashes of earlier positions, oldest first, excluding the current one.
    path: Vec<u64>,
}

impl<E: Evaluator + ?Sized> Searcher<'_, E> {
    fn is_repetition_draw(&self, b: &Board) -> bool {
        self.path.iter().filter(|&&h| h == b.hash()).count() >= 2
    }

    /// Draw rules are not applied at the root so a move is always returned.
    fn negamax(&mut self, b: &mut Board, depth: u32, mut alpha: f64, beta: f64, pv: &mut Vec<Move>, root: bool) -> f64 {
        self.nodes += 1;
        pv.clear();
        let mut moves = legal_moves_mut(b);
        if moves.is_empty() {
            return if b.in_check() { LOSS } else { DRAW };
        }
        if !root && (b.halfmove() >= 100 || b.insufficient_material() || self.is_repetition_draw(b)) {
            return DRAW;
        }
        if depth == 0 {
            return self.eval.value(b);
        }
        order_moves(b, &mut moves);
        let mut best = f64::NEG_INFINITY;
        let mut child_pv = Vec::new();
        for mv in moves {
            self.path.push(b.hash());
            let undo = b.make_move(mv);
            let v = 1.0 - self.negamax(b, depth - 1, 1.0 - beta, 1.0 - alpha, &mut child_pv, false);
            b.unmake_move(mv, undo);
            self.path.pop();
            if v > best {
                best = v;
                pv.clear();
                pv.push(mv);
                pv.extend_from_slice(&child_pv);
            }
            if self.pruning {
                alpha = alpha.max(v);
                if alpha >= beta {
                    break;
                }
            }
        }
        best
    }
}

/// Best move for the side to move. `history` holds the hashes of earlier
/// game positions for repetition detection.
pub fn search<E: Evaluator + ?Sized>(b: &Board, depth: u32, eval: &E, use_pruning: bool, history: &[u64]) -> Result<SearchResult> {
    if depth == 0 {
        return Err(ChessError::Core(bpu_core::Error::Validation("search depth must be at least 1".into())));
    }
    let mut board = b.clone();
    if legal_moves_mut(&mut board).is_empty() {
        return Err(ChessError::NoLegalMoves(to_fen(b)));
    }
    let mut s = Searcher {
        eval,
        pruning: use_pruning,
        nodes: 0,
        path: history.to_vec(),
    };
    let mut pv = Vec::new();
    let value = s.negamax(&mut board, depth, f64::NEG_INFINITY, f64::INFINITY, &mut pv, true);
    Ok(SearchResult {
        best: pv[0],
        value,
        pv,
        nodes: s.nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fen::parse_fen;

    #[test]
    fn finds_back_rank_mate() {
        let b = parse_fen("6k1/5ppp/8/8/8/8/8/R5K1 w - - 0 1").unwrap();
        let r = search(&b, 1, &MaterialEvaluator, true, &[]).unwrap();
        assert_eq!(r.best.uci(), "a1a8");
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn pruning_preserves_result_and_saves_nodes() {
        let b = parse_fen("r1bqkb1r/pppp1ppp/2n2n2/4p2Q/2B1P3/8/PPPP1PPP/RNB1K1NR w KQkq - 4 4").unwrap();
        let full = search(&b, 3, &MaterialEvaluator, false, &[]).unwrap();
        let ab = search(&b, 3, &MaterialEvaluator, true, &[]).unwrap();
        assert_eq!((full.best, full.value), (ab.best, ab.value));
        assert!(ab.nodes < full.nodes);
        assert_eq!(full.best.uci(), "h5f7");
    }

    #[test]
    fn pv_value_composes_from_leaf() {
        let b = parse_fen("r1bqkbnr/pppp1ppp/2n5/4p3/4P3/5N2/PPPP1PPP/RNBQKB1R w KQkq - 2 3").unwrap();
        for depth in 1..=3 {
            let r = search(&b, depth, &MaterialEvaluator, true, &[]).unwrap();
            assert_eq!(r.pv.len(), depth as usize);
            let mut leaf = b.clone();
            for &mv in &r.pv {
                leaf.make_move(mv);
            }
            let v = MaterialEvaluator.value(&leaf);
            let expect = if depth % 2 == 0 { v } else { 1.0 - v };
            assert!((r.value - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stalemate_scores_half() {
        // Kh6 stalemates; with only a king and queen left any other move
        // keeps a winning material score.
        let b = parse_fen("7k/8/5K2/6Q1/8/8/8/8 w - - 0 1").unwrap();
        let mut after = b.clone();
        after.make_move(crate::movegen::find_move(&b, "g5g6").unwrap());
        assert!(crate::movegen::legal_moves(&after).is_empty() && !after.in_check());
        assert!(search(&after, 1, &MaterialEvaluator, false, &[]).is_err());
        let r = search(&b, 1, &MaterialEvaluator, false, &[]).unwrap();
        assert_ne!(r.best.uci(), "g5g6");
    }

    #[test]
    fn repeated_children_score_half() {
        let b = Board::startpos();
        let mut history = Vec::new();
        for mv in crate::movegen::legal_moves(&b) {
            let mut c = b.clone();
            c.make_move(mv);
            history.extend([c.hash(), c.hash()]);
        }
        let r = search(&b, 2, &MaterialEvaluator, true, &history).unwrap();
        assert_eq!(r.value, DRAW);
        assert_eq!(r.pv.len(), 1);
    }

    #[test]
    fn no_legal_moves_is_an_error() {
        let mate = parse_fen("R5k1/5ppp/8/8/8/8/8/6K1 b - - 1 1").unwrap();
        assert!(matches!(search(&mate, 1, &MaterialEvaluator, true, &[]), Err(ChessError::NoLegalMoves(_))));
    }
}
