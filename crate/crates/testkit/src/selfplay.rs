//! Random-play positions, material teacher labels and mate-in-one puzzles,
//! all produced with the 0x88 oracle.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::chess0x88::{mating_moves, Minimax, Pos};

/// FENs reached by uniform random play from the initial position after a
/// ply count drawn from `plies`, keeping those with a legal move and at
/// least `min_pieces` pieces.
pub fn random_positions(seed: u64, n: usize, plies: std::ops::RangeInclusive<u32>, min_pieces: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let target = rng.random_range(plies.clone());
        let mut p = Pos::start();
        let mut ok = true;
        for _ in 0..target {
            let moves = p.legal();
            if moves.is_empty() {
                ok = false;
                break;
            }
            p = p.apply(*moves.choose(&mut rng).unwrap());
        }
        let pieces = (0..64).filter(|&s| p.piece64(s) != 0).count();
        if ok && pieces >= min_pieces && !p.legal().is_empty() {
            out.push(p.fen());
        }
    }
    out
}

/// Centipawn material balance for the side to move.
pub fn material(fen: &str) -> i32 {
    const CP: [i32; 7] = [0, 100, 300, 300, 500, 900, 0];
    let p = Pos::from_fen(fen).expect("oracle fen");
    let sign = if p.white_to_move() { 1 } else { -1 };
    (0..64)
        .map(|s| {
            let v = p.piece64(s);
            v.signum() as i32 * CP[v.unsigned_abs() as usize] * sign
        })
        .sum()
}

fn squash(cp: i32) -> f64 {
    1.0 / (1.0 + (-(cp as f64) / 400.0).exp())
}

/// Side-to-move win probability from a shallow material search.
pub fn teacher_label(fen: &str, depth: u32) -> f64 {
    if depth == 0 {
        return squash(material(fen));
    }
    let eval = |f: &str| squash(material(f));
    Minimax::new(&eval).search(fen, depth).1
}

/// `fen,win_prob` CSV of random-play positions labeled by [`teacher_label`].
pub fn value_labels_csv(seed: u64, n: usize, depth: u32) -> String {
    let mut s = String::from("fen,win_prob\n");
    for fen in random_positions(seed, n, 4..=80, 6) {
        s.push_str(&format!("{fen},{}\n", teacher_label(&fen, depth)));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MateFixture {
    /// Position before the opponent's setup move.
    pub fen: String,
    pub setup: String,
    pub mate: String,
}

/// Positions from random play where, after the opponent's move, the side to
/// move has exactly one mating move. One fixture per game.
pub fn mate_in_one(seed: u64, n: usize) -> Vec<MateFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<MateFixture> = Vec::with_capacity(n);
    while out.len() < n {
        let mut p = Pos::start();
        for _ in 0..300 {
            let moves = p.legal();
            if moves.is_empty() || p.halfmove() >= 100 {
                break;
            }
            let m = *moves.choose(&mut rng).unwrap();
            let next = p.apply(m);
            let mates = mating_moves(&next);
            if mates.len() == 1 && !next.in_check() {
                let f = MateFixture {
                    fen: p.fen(),
                    setup: m.uci(),
                    mate: mates[0].uci(),
                };
                if !out.contains(&f) {
                    out.push(f);
                }
                break;
            }
            p = next;
        }
    }
    out
}

/// Lichess-style puzzle CSV for the fixtures, with a flat rating.
pub fn mate_in_one_csv(fixtures: &[MateFixture], header_comment: &str) -> String {
    let mut s = String::new();
    for line in header_comment.lines() {
        s += &format!("# {line}\n");
    }
    s += "PuzzleId,FEN,Moves,Rating\n";
    for (i, f) in fixtures.iter().enumerate() {
        s += &format!("m1-{:03},{},{} {},1000\n", i + 1, f.fen, f.setup, f.mate);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(random_positions(3, 5, 10..=20, 20), random_positions(3, 5, 10..=20, 20));
        let m = mate_in_one(1, 3);
        assert_eq!(m, mate_in_one(1, 3));
        for f in &m {
            let p = Pos::from_fen(&f.fen).unwrap();
            let setup = p.legal().into_iter().find(|x| x.uci() == f.setup).unwrap();
            let mates = mating_moves(&p.apply(setup));
            assert_eq!(mates.len(), 1);
            assert_eq!(mates[0].uci(), f.mate);
        }
    }

    #[test]
    fn teacher_sees_hanging_queen() {
        // White to move can take the undefended queen on d5.
        let fen = "4k3/8/8/3q4/8/8/8/3QK3 w - - 0 1";
        assert_eq!(material(fen), 0);
        assert!(teacher_label(fen, 1) > 0.9);
    }
}
