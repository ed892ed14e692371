//! Board encoders: a 65-node move graph and a 24-plane tensor.

use ndarray::{Array2, Array3};

use crate::attacks::{self, squares};
use crate::board::Board;
use crate::movegen::legal_moves;
use crate::types::*;

pub const NODE_DIM: usize = 34;
pub const EDGE_DIM: usize = 7;
pub const HUB: usize = 64;
pub const HUB_EDGES: usize = 128;
pub const TENSOR_CHANNELS: usize = 24;

/// Hub feature slots. Castling `KQkq`, en-passant target one-hot over
/// a3..h3 then a6..h6, scaled clocks, and the side to move (white = 1).
pub const HUB_CASTLING: usize = 0;
pub const HUB_EN_PASSANT: usize = 4;
pub const HUB_HALFMOVE: usize = 20;
pub const HUB_FULLMOVE: usize = 21;
pub const HUB_SIDE: usize = 22;
/// Bumped whenever the hub slot layout above changes.
pub const HUB_LAYOUT_VERSION: u32 = 1;

pub const ATTR_LEGAL: usize = 0;
pub const ATTR_CAPTURE: usize = 1;
pub const ATTR_DEFENSE: usize = 2;
pub const ATTR_PROMOTION: usize = 3;
pub const ATTR_SIDE: usize = 4;
pub const ATTR_DIRECTION: usize = 5;
pub const ATTR_GLOBAL: usize = 6;

pub const HALFMOVE_SCALE: f64 = 100.0;
pub const FULLMOVE_SCALE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub source: usize,
    pub target: usize,
    pub attr: [f64; EDGE_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardGraph {
    /// `(65, 34)`, square nodes first, hub last.
    pub nodes: Array2<f64>,
    pub edges: Vec<GraphEdge>,
}

impl BoardGraph {
    pub fn move_edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.iter().filter(|e| e.attr[ATTR_GLOBAL] == 0.0)
    }

    pub fn hub_edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.iter().filter(|e| e.attr[ATTR_GLOBAL] == 1.0)
    }
}

fn clock(value: u32, scale: f64) -> f64 {
    (value as f64 / scale).min(1.0)
}

struct EdgeBuilder<'a> {
    board: &'a Board,
    legal: Vec<(Square, Square)>,
    edges: Vec<GraphEdge>,
}

impl EdgeBuilder<'_> {
    fn push(&mut self, color: Color, from: Square, to: Square, capture: bool, defense: bool) {
        let promotion = self.board.piece_at(from).map(|p| p.kind) == Some(PieceKind::Pawn) && (rank_of(to) == 0 || rank_of(to) == 7);
        let progress = rank_of(to) as i32 - rank_of(from) as i32;
        let progress = if color == Color::White { progress } else { -progress };
        let legal = color == self.board.side_to_move() && !defense && self.legal.contains(&(from, to));
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        self.edges.push(GraphEdge {
            source: from as usize,
            target: to as usize,
            attr: [
                flag(legal),
                flag(capture),
                flag(defense),
                flag(promotion),
                flag(color == Color::White),
                progress.signum() as f64,
                0.0,
            ],
        });
    }

    /// Piece-movement targets: empty squares are moves, enemy pieces
    /// captures, own pieces defenses.
    fn targets(&mut self, color: Color, from: Square, bb: u64) {
        let own = self.board.occupancy(color);
        let enemy = self.board.occupancy(color.other());
        for to in squares(bb) {
            let bit = 1u64 << to;
            self.push(color, from, to, enemy & bit != 0, own & bit != 0);
        }
    }
}

/// Graph with one edge per pseudo-legal (from, to) of either color, own-piece
/// attacks as defense edges, and bidirectional hub links.
pub fn encode_graph(b: &Board) -> BoardGraph {
    let mut nodes = Array2::zeros((65, NODE_DIM));
    for sq in 0..64u8 {
        if let Some(p) = b.piece_at(sq) {
            nodes[[sq as usize, p.index()]] = 1.0;
        }
    }
    for (i, bit) in [WHITE_KINGSIDE, WHITE_QUEENSIDE, BLACK_KINGSIDE, BLACK_QUEENSIDE].into_iter().enumerate() {
        if b.castling() & bit != 0 {
            nodes[[HUB, HUB_CASTLING + i]] = 1.0;
        }
    }
    if let Some(ep) = b.ep_square() {
        let slot = file_of(ep) as usize + if rank_of(ep) == 5 { 8 } else { 0 };
        nodes[[HUB, HUB_EN_PASSANT + slot]] = 1.0;
    }
    nodes[[HUB, HUB_HALFMOVE]] = clock(b.halfmove(), HALFMOVE_SCALE);
    nodes[[HUB, HUB_FULLMOVE]] = clock(b.fullmove(), FULLMOVE_SCALE);
    nodes[[HUB, HUB_SIDE]] = if b.side_to_move() == Color::White { 1.0 } else { 0.0 };

    let mut builder = EdgeBuilder {
        board: b,
        legal: legal_moves(b).iter().map(|m| (m.from, m.to)).collect(),
        edges: Vec::with_capacity(256),
    };
    let occ = b.all();
    for color in [Color::White, Color::Black] {
        let enemy = b.occupancy(color.other());
        let own = b.occupancy(color);
        let (up, start_rank): (i8, u8) = if color == Color::White { (8, 1) } else { (-8, 6) };
        for from in squares(b.pieces(color, PieceKind::Pawn)) {
            let one = (from as i8 + up) as Square;
            if occ & (1 << one) == 0 {
                builder.push(color, from, one, false, false);
                let two = (one as i8 + up) as Square;
                if rank_of(from) == start_rank && occ & (1 << two) == 0 {
                    builder.push(color, from, two, false, false);
                }
            }
            for to in squares(attacks::pawn(color, from)) {
                let bit = 1u64 << to;
                let ep = b.side_to_move() == color && b.ep_square() == Some(to);
                if enemy & bit != 0 || ep {
                    builder.push(color, from, to, true, false);
                } else if own & bit != 0 {
                    builder.push(color, from, to, false, true);
                }
            }
        }
        for from in squares(b.pieces(color, PieceKind::Knight)) {
            builder.targets(color, from, attacks::knight(from));
        }
        for from in squares(b.pieces(color, PieceKind::Bishop)) {
            builder.targets(color, from, attacks::bishop(from, occ));
        }
        for from in squares(b.pieces(color, PieceKind::Rook)) {
            builder.targets(color, from, attacks::rook(from, occ));
        }
        for from in squares(b.pieces(color, PieceKind::Queen)) {
            builder.targets(color, from, attacks::queen(from, occ));
        }
        let king = b.king_square(color);
        builder.targets(color, king, attacks::king(king));
        // Castling with rights and an empty path; safety only affects legality.
        let (ks, qs, home) = match color {
            Color::White => (WHITE_KINGSIDE, WHITE_QUEENSIDE, 4u8),
            Color::Black => (BLACK_KINGSIDE, BLACK_QUEENSIDE, 60u8),
        };
        if b.castling() & ks != 0 && occ & (0b110 << home) == 0 {
            builder.push(color, home, home + 2, false, false);
        }
        if b.castling() & qs != 0 && occ & (0b1110 << (home - 4)) == 0 {
            builder.push(color, home, home - 2, false, false);
        }
    }
    let mut edges = builder.edges;
    let mut hub = [0.0; EDGE_DIM];
    hub[ATTR_GLOBAL] = 1.0;
    for sq in 0..64 {
        edges.push(GraphEdge { source: sq, target: HUB, attr: hub });
        edges.push(GraphEdge { source: HUB, target: sq, attr: hub });
    }
    BoardGraph { nodes, edges }
}

pub const CH_SIDE: usize = 12;
pub const CH_CASTLING: usize = 13;
pub const CH_EN_PASSANT: usize = 17;
pub const CH_HALFMOVE: usize = 18;
pub const CH_FULLMOVE: usize = 19;
pub const CH_WHITE_PROMOTION: usize = 20;
pub const CH_BLACK_PROMOTION: usize = 21;
pub const CH_FILE: usize = 22;
pub const CH_RANK: usize = 23;

/// `(24, 8, 8)` planes indexed `[channel, rank, file]`. Channel 12 is 1 when
/// white is to move; 20 and 21 mark pawns one step from promotion.
pub fn encode_tensor(b: &Board) -> Array3<f64> {
    let mut t = Array3::zeros((TENSOR_CHANNELS, 8, 8));
    let white = b.side_to_move() == Color::White;
    let rights = [WHITE_KINGSIDE, WHITE_QUEENSIDE, BLACK_KINGSIDE, BLACK_QUEENSIDE];
    let half = clock(b.halfmove(), HALFMOVE_SCALE);
    let full = clock(b.fullmove(), FULLMOVE_SCALE);
    for sq in 0..64u8 {
        let (r, f) = (rank_of(sq) as usize, file_of(sq) as usize);
        if let Some(p) = b.piece_at(sq) {
            t[[p.index(), r, f]] = 1.0;
            if p.kind == PieceKind::Pawn {
                if p.color == Color::White && r == 6 {
                    t[[CH_WHITE_PROMOTION, r, f]] = 1.0;
                }
                if p.color == Color::Black && r == 1 {
                    t[[CH_BLACK_PROMOTION, r, f]] = 1.0;
                }
            }
        }
        if white {
            t[[CH_SIDE, r, f]] = 1.0;
        }
        for (i, &bit) in rights.iter().enumerate() {
            if b.castling() & bit != 0 {
                t[[CH_CASTLING + i, r, f]] = 1.0;
            }
        }
        t[[CH_HALFMOVE, r, f]] = half;
        t[[CH_FULLMOVE, r, f]] = full;
        t[[CH_FILE, r, f]] = f as f64 / 7.0;
        t[[CH_RANK, r, f]] = r as f64 / 7.0;
    }
    if let Some(ep) = b.ep_square() {
        t[[CH_EN_PASSANT, rank_of(ep) as usize, file_of(ep) as usize]] = 1.0;
    }
    t
}
