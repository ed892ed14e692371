use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::{self, Bitboard};
use crate::types::*;

struct ZobristKeys {
    piece: [[u64; 64]; 12],
    side: u64,
    castling: [u64; 16],
    ep_file: [u64; 8],
}

static ZOBRIST: LazyLock<ZobristKeys> = LazyLock::new(|| {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a6f_6272_6973_74);
    let mut keys = ZobristKeys {
        piece: [[0; 64]; 12],
        side: rng.random(),
        castling: [0; 16],
        ep_file: [0; 8],
    };
    for p in keys.piece.iter_mut() {
        for k in p.iter_mut() {
            *k = rng.random();
        }
    }
    for k in keys.castling.iter_mut().chain(keys.ep_file.iter_mut()) {
        *k = rng.random();
    }
    keys
});

/// Castling rights kept when a move touches each square.
static CASTLE_MASK: LazyLock<[u8; 64]> = LazyLock::new(|| {
    let mut m = [0xfu8; 64];
    m[0] &= !WHITE_QUEENSIDE;
    m[7] &= !WHITE_KINGSIDE;
    m[4] &= !(WHITE_KINGSIDE | WHITE_QUEENSIDE);
    m[56] &= !BLACK_QUEENSIDE;
    m[63] &= !BLACK_KINGSIDE;
    m[60] &= !(BLACK_KINGSIDE | BLACK_QUEENSIDE);
    m
});

/// State needed to take a move back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Undo {
    captured: Option<Piece>,
    castling: u8,
    ep: Option<Square>,
    halfmove: u32,
    fullmove: u32,
    hash: u64,
}

/// Mailbox plus per-piece bitboards. Construct through FEN parsing or
/// [`Board::startpos`] so the invariants hold.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Board {
    squares: [Option<Piece>; 64],
    pieces: [[Bitboard; 6]; 2],
    occ: [Bitboard; 2],
    side: Color,
    castling: u8,
    ep: Option<Square>,
    halfmove: u32,
    fullmove: u32,
    hash: u64,
}

pub const START_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

impl Board {
    pub(crate) fn empty() -> Self {
        Board {
            squares: [None; 64],
            pieces: [[0; 6]; 2],
            occ: [0; 2],
            side: Color::White,
            castling: 0,
            ep: None,
            halfmove: 0,
            fullmove: 1,
            hash: 0,
        }
    }

    pub fn startpos() -> Self {
        crate::fen::parse_fen(START_FEN).expect("start position parses")
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        self.squares[sq as usize]
    }

    pub fn side_to_move(&self) -> Color {
        self.side
    }

    pub fn castling(&self) -> u8 {
        self.castling
    }

    pub fn ep_square(&self) -> Option<Square> {
        self.ep
    }

    pub fn halfmove(&self) -> u32 {
        self.halfmove
    }

    pub fn fullmove(&self) -> u32 {
        self.fullmove
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn pieces(&self, color: Color, kind: PieceKind) -> Bitboard {
        self.pieces[color.index()][kind.index()]
    }

    pub fn occupancy(&self, color: Color) -> Bitboard {
        self.occ[color.index()]
    }

    pub fn all(&self) -> Bitboard {
        self.occ[0] | self.occ[1]
    }

    pub fn king_square(&self, color: Color) -> Square {
        self.pieces(color, PieceKind::King).trailing_zeros() as Square
    }

    pub(crate) fn put(&mut self, sq: Square, p: Piece) {
        debug_assert!(self.squares[sq as usize].is_none());
        self.squares[sq as usize] = Some(p);
        self.pieces[p.color.index()][p.kind.index()] |= 1 << sq;
        self.occ[p.color.index()] |= 1 << sq;
        self.hash ^= ZOBRIST.piece[p.index()][sq as usize];
    }

    fn remove(&mut self, sq: Square) -> Piece {
        let p = self.squares[sq as usize].take().expect("piece on square");
        self.pieces[p.color.index()][p.kind.index()] &= !(1 << sq);
        self.occ[p.color.index()] &= !(1 << sq);
        self.hash ^= ZOBRIST.piece[p.index()][sq as usize];
        p
    }

    pub(crate) fn set_state(&mut self, side: Color, castling: u8, ep: Option<Square>, halfmove: u32, fullmove: u32) {
        self.side = side;
        self.castling = castling;
        self.ep = ep;
        self.halfmove = halfmove;
        self.fullmove = fullmove;
        self.hash = self.compute_hash();
    }

    /// Hash recomputed from scratch; equals [`Board::hash`] at all times.
    pub fn compute_hash(&self) -> u64 {
        let mut h = 0;
        for sq in 0..64 {
            if let Some(p) = self.squares[sq] {
                h ^= ZOBRIST.piece[p.index()][sq];
            }
        }
        if self.side == Color::Black {
            h ^= ZOBRIST.side;
        }
        h ^= ZOBRIST.castling[self.castling as usize];
        if let Some(ep) = self.ep {
            h ^= ZOBRIST.ep_file[file_of(ep) as usize];
        }
        h
    }

    /// True if any piece of `by` attacks `sq`.
    pub fn is_attacked(&self, sq: Square, by: Color) -> bool {
        let occ = self.all();
        let p = |k| self.pieces(by, k);
        attacks::pawn(by.other(), sq) & p(PieceKind::Pawn) != 0
            || attacks::knight(sq) & p(PieceKind::Knight) != 0
            || attacks::king(sq) & p(PieceKind::King) != 0
            || attacks::bishop(sq, occ) & (p(PieceKind::Bishop) | p(PieceKind::Queen)) != 0
            || attacks::rook(sq, occ) & (p(PieceKind::Rook) | p(PieceKind::Queen)) != 0
    }

    pub fn in_check(&self) -> bool {
        self.is_attacked(self.king_square(self.side), self.side.other())
    }

    pub fn make_move(&mut self, mv: Move) -> Undo {
        let undo = Undo {
            captured: None,
            castling: self.castling,
            ep: self.ep,
            halfmove: self.halfmove,
            fullmove: self.fullmove,
            hash: self.hash,
        };
        let mut captured = None;
        let us = self.side;
        let piece = self.remove(mv.from);
        if mv.is_en_passant() {
            let victim = if us == Color::White { mv.to - 8 } else { mv.to + 8 };
            captured = Some(self.remove(victim));
        } else if self.squares[mv.to as usize].is_some() {
            captured = Some(self.remove(mv.to));
        }
        if mv.is_castle() {
            let (rook_from, rook_to) = if mv.to > mv.from { (mv.from + 3, mv.from + 1) } else { (mv.from - 4, mv.from - 1) };
            let rook = self.remove(rook_from);
            self.put(rook_to, rook);
        }
        let placed = match mv.promotion {
            Some(kind) => Piece::new(us, kind),
            None => piece,
        };
        self.put(mv.to, placed);

        self.hash ^= ZOBRIST.castling[self.castling as usize];
        self.castling &= CASTLE_MASK[mv.from as usize] & CASTLE_MASK[mv.to as usize];
        self.hash ^= ZOBRIST.castling[self.castling as usize];
        if let Some(ep) = self.ep {
            self.hash ^= ZOBRIST.ep_file[file_of(ep) as usize];
        }
        self.ep = mv.is_double_push().then(|| (mv.from + mv.to) / 2);
        if let Some(ep) = self.ep {
            self.hash ^= ZOBRIST.ep_file[file_of(ep) as usize];
        }
        if piece.kind == PieceKind::Pawn || captured.is_some() {
            self.halfmove = 0;
        } else {
            self.halfmove += 1;
        }
        if us == Color::Black {
            self.fullmove += 1;
        }
        self.side = us.other();
        self.hash ^= ZOBRIST.side;
        Undo { captured, ..undo }
    }

    pub fn unmake_move(&mut self, mv: Move, undo: Undo) {
        let us = self.side.other();
        self.side = us;
        let moved = self.remove(mv.to);
        let original = if mv.promotion.is_some() { Piece::new(us, PieceKind::Pawn) } else { moved };
        self.put(mv.from, original);
        if mv.is_castle() {
            let (rook_from, rook_to) = if mv.to > mv.from { (mv.from + 3, mv.from + 1) } else { (mv.from - 4, mv.from - 1) };
            let rook = self.remove(rook_to);
            self.put(rook_from, rook);
        }
        if let Some(c) = undo.captured {
            let at = if mv.is_en_passant() {
                if us == Color::White { mv.to - 8 } else { mv.to + 8 }
            } else {
                mv.to
            };
            self.put(at, c);
        }
        self.castling = undo.castling;
        self.ep = undo.ep;
        self.halfmove = undo.halfmove;
        self.fullmove = undo.fullmove;
        self.hash = undo.hash;
    }

    /// Ranks flipped and colors swapped, so the side to move changes color
    /// while the position is otherwise the same.
    pub fn mirrored(&self) -> Board {
        let mut b = Board::empty();
        for sq in 0..64u8 {
            if let Some(p) = self.squares[sq as usize] {
                b.put(sq ^ 56, Piece::new(p.color.other(), p.kind));
            }
        }
        let c = self.castling;
        let castling = ((c & (WHITE_KINGSIDE | WHITE_QUEENSIDE)) << 2) | ((c & (BLACK_KINGSIDE | BLACK_QUEENSIDE)) >> 2);
        b.set_state(self.side.other(), castling, self.ep.map(|e| e ^ 56), self.halfmove, self.fullmove);
        b
    }

    /// Neither side can possibly mate: bare kings, or king and one minor
    /// piece against a bare king, or same-colored bishops only.
    pub fn insufficient_material(&self) -> bool {
        let heavy = |c: Color| {
            self.pieces(c, PieceKind::Pawn) | self.pieces(c, PieceKind::Rook) | self.pieces(c, PieceKind::Queen)
        };
        if heavy(Color::White) | heavy(Color::Black) != 0 {
            return false;
        }
        let knights = self.pieces(Color::White, PieceKind::Knight) | self.pieces(Color::Black, PieceKind::Knight);
        let bishops = self.pieces(Color::White, PieceKind::Bishop) | self.pieces(Color::Black, PieceKind::Bishop);
        let minors = (knights | bishops).count_ones();
        if minors <= 1 {
            return true;
        }
        const LIGHT: u64 = 0x55aa_55aa_55aa_55aa;
        knights == 0 && (bishops & LIGHT == 0 || bishops & !LIGHT == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fen::parse_fen;

    #[test]
    fn hash_tracks_incremental_updates() {
        let mut b = Board::startpos();
        let mv = Move { from: 12, to: 28, promotion: None, flags: FLAG_DOUBLE_PUSH };
        let before = b.clone();
        let undo = b.make_move(mv);
        assert_eq!(b.hash(), b.compute_hash());
        assert_eq!(b.ep_square(), Some(20));
        b.unmake_move(mv, undo);
        assert_eq!(b, before);
    }

    #[test]
    fn mirror_is_an_involution_and_preserves_move_counts() {
        let fen = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K1R1 w Qkq - 0 1";
        let b = parse_fen(fen).unwrap();
        let m = b.mirrored();
        assert_eq!(m.mirrored(), b);
        assert_eq!(crate::fen::to_fen(&m), "r3k1r1/pppbbppp/2n2q1P/1P2p3/3pn3/BN2PNP1/P1PPQPB1/R3K2R b KQq - 0 1");
        let mut mm = m.clone();
        let mut bb = b.clone();
        assert_eq!(crate::movegen::perft(&mut mm, 2), crate::movegen::perft(&mut bb, 2));
    }

    #[test]
    fn insufficient_material_cases() {
        assert!(parse_fen("8/8/8/4k3/8/8/8/4K3 w - - 0 1").unwrap().insufficient_material());
        assert!(parse_fen("8/8/8/4k3/8/8/8/4KN2 w - - 0 1").unwrap().insufficient_material());
        assert!(!parse_fen("8/8/8/4k3/8/8/8/4KR2 w - - 0 1").unwrap().insufficient_material());
        assert!(!parse_fen("8/8/8/4k3/8/8/8/3NKN2 w - - 0 1").unwrap().insufficient_material());
    }
}
