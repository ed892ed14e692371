//! Precomputed leaper tables and ray-scan slider attacks.

use std::sync::LazyLock;

use crate::types::{Color, Square};

pub type Bitboard = u64;

/// Direction offsets as (file, rank) steps; the first four point toward
/// higher square indices.
const DIRS: [(i8, i8); 8] = [(0, 1), (1, 0), (1, 1), (-1, 1), (0, -1), (-1, 0), (1, -1), (-1, -1)];
const ROOK_DIRS: [usize; 4] = [0, 1, 4, 5];
const BISHOP_DIRS: [usize; 4] = [2, 3, 6, 7];

struct Tables {
    knight: [Bitboard; 64],
    king: [Bitboard; 64],
    pawn: [[Bitboard; 64]; 2],
    rays: [[Bitboard; 64]; 8],
}

fn offset(sq: usize, df: i8, dr: i8) -> Option<usize> {
    let f = (sq % 8) as i8 + df;
    let r = (sq / 8) as i8 + dr;
    ((0..8).contains(&f) && (0..8).contains(&r)).then(|| (r * 8 + f) as usize)
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let mut t = Tables {
        knight: [0; 64],
        king: [0; 64],
        pawn: [[0; 64]; 2],
        rays: [[0; 64]; 8],
    };
    for sq in 0..64 {
        for (df, dr) in [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)] {
            if let Some(to) = offset(sq, df, dr) {
                t.knight[sq] |= 1 << to;
            }
        }
        for &(df, dr) in &DIRS {
            if let Some(to) = offset(sq, df, dr) {
                t.king[sq] |= 1 << to;
            }
        }
        for (c, dr) in [(0usize, 1i8), (1, -1)] {
            for df in [-1, 1] {
                if let Some(to) = offset(sq, df, dr) {
                    t.pawn[c][sq] |= 1 << to;
                }
            }
        }
        for (d, &(df, dr)) in DIRS.iter().enumerate() {
            let mut cur = sq;
            while let Some(to) = offset(cur, df, dr) {
                t.rays[d][sq] |= 1 << to;
                cur = to;
            }
        }
    }
    t
});

pub fn knight(sq: Square) -> Bitboard {
    TABLES.knight[sq as usize]
}

pub fn king(sq: Square) -> Bitboard {
    TABLES.king[sq as usize]
}

/// Squares a pawn of `color` on `sq` attacks.
pub fn pawn(color: Color, sq: Square) -> Bitboard {
    TABLES.pawn[color.index()][sq as usize]
}

fn ray(dir: usize, sq: Square, occ: Bitboard) -> Bitboard {
    let ray = TABLES.rays[dir][sq as usize];
    let blockers = ray & occ;
    if blockers == 0 {
        return ray;
    }
    let first = if dir < 4 { blockers.trailing_zeros() } else { 63 - blockers.leading_zeros() };
    ray ^ TABLES.rays[dir][first as usize]
}

pub fn rook(sq: Square, occ: Bitboard) -> Bitboard {
    ROOK_DIRS.iter().fold(0, |acc, &d| acc | ray(d, sq, occ))
}

pub fn bishop(sq: Square, occ: Bitboard) -> Bitboard {
    BISHOP_DIRS.iter().fold(0, |acc, &d| acc | ray(d, sq, occ))
}

pub fn queen(sq: Square, occ: Bitboard) -> Bitboard {
    rook(sq, occ) | bishop(sq, occ)
}

/// Iterates set bits from least significant.
pub fn squares(mut bb: Bitboard) -> impl Iterator<Item = Square> {
    std::iter::from_fn(move || {
        if bb == 0 {
            None
        } else {
            let sq = bb.trailing_zeros() as Square;
            bb &= bb - 1;
            Some(sq)
        }
    })
}
