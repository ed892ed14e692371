use crate::attacks::{self, squares, Bitboard};
use crate::board::Board;
use crate::types::*;

const PROMOTIONS: [PieceKind; 4] = [PieceKind::Queen, PieceKind::Rook, PieceKind::Bishop, PieceKind::Knight];

fn push_pawn_move(out: &mut Vec<Move>, from: Square, to: Square, flags: u8) {
    if rank_of(to) == 0 || rank_of(to) == 7 {
        for p in PROMOTIONS {
            out.push(Move { from, to, promotion: Some(p), flags });
        }
    } else {
        out.push(Move { from, to, promotion: None, flags });
    }
}

fn push_targets(out: &mut Vec<Move>, b: &Board, from: Square, targets: Bitboard) {
    let them = b.occupancy(b.side_to_move().other());
    for to in squares(targets) {
        let flags = if them & (1 << to) != 0 { FLAG_CAPTURE } else { 0 };
        out.push(Move { from, to, promotion: None, flags });
    }
}

/// Moves that obey piece movement rules but may leave the own king in check.
pub fn pseudo_legal_moves(b: &Board) -> Vec<Move> {
    let mut out = Vec::with_capacity(64);
    let us = b.side_to_move();
    let own = b.occupancy(us);
    let them = b.occupancy(us.other());
    let occ = b.all();

    let (up, start_rank): (i8, u8) = if us == Color::White { (8, 1) } else { (-8, 6) };
    for from in squares(b.pieces(us, PieceKind::Pawn)) {
        let one = (from as i8 + up) as Square;
        if occ & (1 << one) == 0 {
            push_pawn_move(&mut out, from, one, 0);
            let two = (one as i8 + up) as Square;
            if rank_of(from) == start_rank && occ & (1 << two) == 0 {
                out.push(Move { from, to: two, promotion: None, flags: FLAG_DOUBLE_PUSH });
            }
        }
        let attacks = attacks::pawn(us, from);
        for to in squares(attacks & them) {
            push_pawn_move(&mut out, from, to, FLAG_CAPTURE);
        }
        if let Some(ep) = b.ep_square() {
            if attacks & (1 << ep) != 0 {
                out.push(Move { from, to: ep, promotion: None, flags: FLAG_CAPTURE | FLAG_EN_PASSANT });
            }
        }
    }
    for from in squares(b.pieces(us, PieceKind::Knight)) {
        push_targets(&mut out, b, from, attacks::knight(from) & !own);
    }
    for from in squares(b.pieces(us, PieceKind::Bishop)) {
        push_targets(&mut out, b, from, attacks::bishop(from, occ) & !own);
    }
    for from in squares(b.pieces(us, PieceKind::Rook)) {
        push_targets(&mut out, b, from, attacks::rook(from, occ) & !own);
    }
    for from in squares(b.pieces(us, PieceKind::Queen)) {
        push_targets(&mut out, b, from, attacks::queen(from, occ) & !own);
    }
    let king = b.king_square(us);
    push_targets(&mut out, b, king, attacks::king(king) & !own);

    let (ks, qs, home) = match us {
        Color::White => (WHITE_KINGSIDE, WHITE_QUEENSIDE, 4),
        Color::Black => (BLACK_KINGSIDE, BLACK_QUEENSIDE, 60),
    };
    let enemy = us.other();
    if b.castling() & (ks | qs) != 0 && king == home && !b.is_attacked(home, enemy) {
        if b.castling() & ks != 0
            && occ & (0b110 << home) == 0
            && !b.is_attacked(home + 1, enemy)
            && !b.is_attacked(home + 2, enemy)
        {
            out.push(Move { from: home, to: home + 2, promotion: None, flags: FLAG_CASTLE });
        }
        if b.castling() & qs != 0
            && occ & (0b1110 << (home - 4)) == 0
            && !b.is_attacked(home - 1, enemy)
            && !b.is_attacked(home - 2, enemy)
        {
            out.push(Move { from: home, to: home - 2, promotion: None, flags: FLAG_CASTLE });
        }
    }
    out
}

/// Pseudo-legal moves filtered by whether the mover's king is safe afterwards.
pub fn legal_moves(b: &Board) -> Vec<Move> {
    let mut scratch = b.clone();
    legal_moves_mut(&mut scratch)
}

/// Same as [`legal_moves`], reusing `b` as scratch; `b` is unchanged on return.
pub fn legal_moves_mut(b: &mut Board) -> Vec<Move> {
    let us = b.side_to_move();
    let mut moves = pseudo_legal_moves(b);
    moves.retain(|&mv| {
        let undo = b.make_move(mv);
        let ok = !b.is_attacked(b.king_square(us), us.other());
        b.unmake_move(mv, undo);
        ok
    });
    moves
}

/// Resolves coordinate notation against the legal moves of `b`.
pub fn find_move(b: &Board, uci: &str) -> Option<Move> {
    legal_moves(b).into_iter().find(|m| m.uci() == uci)
}

pub fn perft(b: &mut Board, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = legal_moves_mut(b);
    if depth == 1 {
        return moves.len() as u64;
    }
    moves
        .into_iter()
        .map(|mv| {
            let undo = b.make_move(mv);
            let n = perft(b, depth - 1);
            b.unmake_move(mv, undo);
            n
        })
        .sum()
}

/// Leaf counts per root move, in generation order.
pub fn divide(b: &mut Board, depth: u32) -> Vec<(Move, u64)> {
    legal_moves_mut(b)
        .into_iter()
        .map(|mv| {
            let undo = b.make_move(mv);
            let n = perft(b, depth.saturating_sub(1));
            b.unmake_move(mv, undo);
            (mv, n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::START_FEN;
    use crate::fen::parse_fen;

    const KIWIPETE: &str = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1";

    fn perft_fen(fen: &str, depth: u32) -> u64 {
        perft(&mut parse_fen(fen).unwrap(), depth)
    }

    #[test]
    fn initial_position_counts() {
        assert_eq!(perft_fen(START_FEN, 0), 1);
        assert_eq!(perft_fen(START_FEN, 1), 20);
        assert_eq!(perft_fen(START_FEN, 2), 400);
        assert_eq!(perft_fen(START_FEN, 3), 8902);
    }

    #[test]
    fn kiwipete_counts() {
        assert_eq!(perft_fen(KIWIPETE, 1), 48);
        assert_eq!(perft_fen(KIWIPETE, 2), 2039);
        assert_eq!(perft_fen(KIWIPETE, 3), 97862);
    }

    #[test]
    fn stalemate_has_no_moves() {
        let b = parse_fen("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1").unwrap();
        assert!(legal_moves(&b).is_empty());
        assert!(!b.in_check());
    }

    #[test]
    fn make_unmake_restores_every_move() {
        let mut b = parse_fen(KIWIPETE).unwrap();
        let before = b.clone();
        for mv in legal_moves(&b) {
            let undo = b.make_move(mv);
            assert_eq!(b.hash(), b.compute_hash(), "{mv}");
            b.unmake_move(mv, undo);
            assert_eq!(b, before, "{mv}");
        }
    }
}
