use thiserror::Error;

use crate::board::Board;
use crate::types::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FenError {
    #[error("expected 6 fields, found {0}")]
    FieldCount(usize),
    #[error("illegal piece character {0:?}")]
    BadPiece(char),
    #[error("expected 8 ranks, found {0}")]
    RankCount(usize),
    #[error("rank {rank} describes {len} squares")]
    RankLength { rank: u8, len: usize },
    #[error("side to move must be 'w' or 'b', found {0:?}")]
    BadSide(String),
    #[error("malformed castling field {0:?}")]
    BadCastling(String),
    #[error("castling right {0} without king and rook on their home squares")]
    ImpossibleCastling(char),
    #[error("invalid en-passant square {0:?}")]
    BadEnPassant(String),
    #[error("invalid move clock {0:?}")]
    BadClock(String),
    #[error("{color:?} has {count} kings")]
    KingCount { color: Color, count: u32 },
    #[error("pawn on the first or last rank")]
    PawnOnBackRank,
    #[error("side not to move is in check")]
    OpponentInCheck,
}

pub fn parse_fen(text: &str) -> Result<Board, FenError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(FenError::FieldCount(fields.len()));
    }
    let mut board = Board::empty();

    let ranks: Vec<&str> = fields[0].split('/').collect();
    if ranks.len() != 8 {
        return Err(FenError::RankCount(ranks.len()));
    }
    for (i, row) in ranks.iter().enumerate() {
        let rank = 7 - i as u8;
        let mut file = 0usize;
        for ch in row.chars() {
            if let Some(d) = ch.to_digit(10).filter(|d| (1..=8).contains(d)) {
                file += d as usize;
            } else {
                let p = Piece::from_char(ch).ok_or(FenError::BadPiece(ch))?;
                if file < 8 {
                    board.put(square(file as u8, rank), p);
                }
                file += 1;
            }
        }
        if file != 8 {
            return Err(FenError::RankLength { rank: rank + 1, len: file });
        }
    }

    let side = match fields[1] {
        "w" => Color::White,
        "b" => Color::Black,
        s => return Err(FenError::BadSide(s.to_string())),
    };

    let mut castling = 0u8;
    if fields[2] != "-" {
        for ch in fields[2].chars() {
            let (bit, king, rook, color) = match ch {
                'K' => (WHITE_KINGSIDE, 4, 7, Color::White),
                'Q' => (WHITE_QUEENSIDE, 4, 0, Color::White),
                'k' => (BLACK_KINGSIDE, 60, 63, Color::Black),
                'q' => (BLACK_QUEENSIDE, 60, 56, Color::Black),
                _ => return Err(FenError::BadCastling(fields[2].to_string())),
            };
            if castling & bit != 0 {
                return Err(FenError::BadCastling(fields[2].to_string()));
            }
            if board.piece_at(king) != Some(Piece::new(color, PieceKind::King))
                || board.piece_at(rook) != Some(Piece::new(color, PieceKind::Rook))
            {
                return Err(FenError::ImpossibleCastling(ch));
            }
            castling |= bit;
        }
    }

    let ep = if fields[3] == "-" {
        None
    } else {
        let bad = || FenError::BadEnPassant(fields[3].to_string());
        let sq = parse_square(fields[3]).ok_or_else(bad)?;
        // The pawn that just double-pushed must sit in front of the target,
        // with the target and its origin square empty.
        let (want_rank, pawn_sq, origin) = match side {
            Color::White => (5, sq.wrapping_sub(8), sq.wrapping_add(8)),
            Color::Black => (2, sq.wrapping_add(8), sq.wrapping_sub(8)),
        };
        if rank_of(sq) != want_rank
            || board.piece_at(sq).is_some()
            || board.piece_at(origin).is_some()
            || board.piece_at(pawn_sq) != Some(Piece::new(side.other(), PieceKind::Pawn))
        {
            return Err(bad());
        }
        Some(sq)
    };

    let clock = |s: &str| s.parse::<u32>().map_err(|_| FenError::BadClock(s.to_string()));
    let halfmove = clock(fields[4])?;
    let fullmove = clock(fields[5])?;
    if fullmove == 0 {
        return Err(FenError::BadClock(fields[5].to_string()));
    }
    board.set_state(side, castling, ep, halfmove, fullmove);

    for color in [Color::White, Color::Black] {
        let count = board.pieces(color, PieceKind::King).count_ones();
        if count != 1 {
            return Err(FenError::KingCount { color, count });
        }
    }
    let pawns = board.pieces(Color::White, PieceKind::Pawn) | board.pieces(Color::Black, PieceKind::Pawn);
    if pawns & 0xff00_0000_0000_00ff != 0 {
        return Err(FenError::PawnOnBackRank);
    }
    let them = side.other();
    if board.is_attacked(board.king_square(them), side) {
        return Err(FenError::OpponentInCheck);
    }
    Ok(board)
}

pub fn to_fen(b: &Board) -> String {
    let mut s = String::with_capacity(90);
    for rank in (0..8).rev() {
        let mut empty = 0;
        for file in 0..8 {
            match b.piece_at(square(file, rank)) {
                Some(p) => {
                    if empty > 0 {
                        s.push(char::from(b'0' + empty));
                        empty = 0;
                    }
                    s.push(p.to_char());
                }
                None => empty += 1,
            }
        }
        if empty > 0 {
            s.push(char::from(b'0' + empty));
        }
        if rank > 0 {
            s.push('/');
        }
    }
    s.push_str(if b.side_to_move() == Color::White { " w " } else { " b " });
    if b.castling() == 0 {
        s.push('-');
    }
    for (bit, ch) in [(WHITE_KINGSIDE, 'K'), (WHITE_QUEENSIDE, 'Q'), (BLACK_KINGSIDE, 'k'), (BLACK_QUEENSIDE, 'q')] {
        if b.castling() & bit != 0 {
            s.push(ch);
        }
    }
    match b.ep_square() {
        Some(sq) => {
            s.push(' ');
            s.push_str(&square_name(sq));
        }
        None => s.push_str(" -"),
    }
    s.push_str(&format!(" {} {}", b.halfmove(), b.fullmove()));
    s
}

/// Whitespace-normalized FEN with castling letters in KQkq order.
pub fn canonical(text: &str) -> Result<String, FenError> {
    parse_fen(text).map(|b| to_fen(&b))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::START_FEN;

    #[test]
    fn start_position() {
        let b = parse_fen(START_FEN).unwrap();
        assert_eq!(b.all().count_ones(), 32);
        assert_eq!(b.side_to_move(), Color::White);
        assert_eq!(b.castling(), 0xf);
        assert_eq!(to_fen(&b), START_FEN);
    }

    #[test]
    fn rejects_invalid_positions() {
        let cases: [(&str, fn(&FenError) -> bool); 8] = [
            ("8/8/8/8/8/8/8/8 w - - 0 1", |e| matches!(e, FenError::KingCount { .. })),
            ("8/8/8/8/8/8/8/8 w - - 0", |e| matches!(e, FenError::FieldCount(5))),
            ("4k3/8/8/8/8/8/8/4KX2 w - - 0 1", |e| matches!(e, FenError::BadPiece('X'))),
            ("4k3/8/8/8/8/8/8/4K4 w - - 0 1", |e| matches!(e, FenError::RankLength { rank: 1, len: 9 })),
            ("4k3/8/8/8/8/8/8/4K3 w K - 0 1", |e| matches!(e, FenError::ImpossibleCastling('K'))),
            ("4k3/8/8/8/8/8/8/4K3 w - e6 0 1", |e| matches!(e, FenError::BadEnPassant(_))),
            ("4k3/4R3/8/8/8/8/8/4K3 w - - 0 1", |e| matches!(e, FenError::OpponentInCheck)),
            ("P3k3/8/8/8/8/8/8/4K3 w - - 0 1", |e| matches!(e, FenError::PawnOnBackRank)),
        ];
        for (fen, check) in cases {
            let err = parse_fen(fen).unwrap_err();
            assert!(check(&err), "{fen}: {err}");
        }
    }

    #[test]
    fn canonicalizes_castling_order_and_spacing() {
        let c = canonical("r3k2r/8/8/8/8/8/8/R3K2R  b  qkQK - 3 20").unwrap();
        assert_eq!(c, "r3k2r/8/8/8/8/8/8/R3K2R b KQkq - 3 20");
    }

    #[test]
    fn en_passant_round_trip() {
        let fen = "rnbqkbnr/ppp1pppp/8/3pP3/8/8/PPPP1PPP/RNBQKBNR w KQkq d6 0 3";
        let b = parse_fen(fen).unwrap();
        assert_eq!(b.ep_square(), parse_square("d6"));
        assert_eq!(to_fen(&b), fen);
    }
}
