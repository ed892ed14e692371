//! A deliberately simple 0x88 move generator using copy-make, for perft and
//! search cross-checks. Pieces are signed: positive white, negative black,
//! 1..=6 for pawn, knight, bishop, rook, queen, king.

const P: i8 = 1;
const N: i8 = 2;
const B: i8 = 3;
const R: i8 = 4;
const Q: i8 = 5;
const K: i8 = 6;

const KNIGHT: [i32; 8] = [33, 31, 18, 14, -33, -31, -18, -14];
const KING: [i32; 8] = [1, -1, 16, -16, 15, 17, -15, -17];
const BISHOP: [i32; 4] = [15, 17, -15, -17];
const ROOK: [i32; 4] = [1, -1, 16, -16];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pos {
    cells: [i8; 128],
    white: bool,
    /// K, Q, k, q
    castle: [bool; 4],
    ep: Option<usize>,
    half: u32,
    full: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OMove {
    pub from: usize,
    pub to: usize,
    /// Unsigned promotion piece, 0 for none.
    pub promo: i8,
}

fn on_board(sq: i32) -> bool {
    (0..128).contains(&sq) && sq & 0x88 == 0
}

fn name(sq: usize) -> String {
    format!("{}{}", (b'a' + (sq & 7) as u8) as char, (sq >> 4) + 1)
}

/// 0..64 index with a1 = 0.
pub fn index64(sq: usize) -> usize {
    (sq >> 4) * 8 + (sq & 7)
}

impl OMove {
    pub fn uci(&self) -> String {
        let mut s = name(self.from) + &name(self.to);
        if self.promo != 0 {
            s.push(b" pnbrqk"[self.promo as usize] as char);
        }
        s
    }
}

impl Pos {
    pub fn from_fen(fen: &str) -> Result<Pos, String> {
        let f: Vec<&str> = fen.split_whitespace().collect();
        if f.len() != 6 {
            return Err(format!("bad field count in {fen:?}"));
        }
        let mut cells = [0i8; 128];
        let mut rank = 7i32;
        let mut file = 0i32;
        for c in f[0].chars() {
            match c {
                '/' => {
                    rank -= 1;
                    file = 0;
                }
                '1'..='8' => file += c as i32 - '0' as i32,
                _ => {
                    let kind = match c.to_ascii_lowercase() {
                        'p' => P,
                        'n' => N,
                        'b' => B,
                        'r' => R,
                        'q' => Q,
                        'k' => K,
                        _ => return Err(format!("bad piece {c}")),
                    };
                    cells[(rank * 16 + file) as usize] = if c.is_ascii_uppercase() { kind } else { -kind };
                    file += 1;
                }
            }
        }
        let castle = ['K', 'Q', 'k', 'q'].map(|c| f[2].contains(c));
        let ep = if f[3] == "-" {
            None
        } else {
            let b = f[3].as_bytes();
            Some(((b[1] - b'1') as usize) * 16 + (b[0] - b'a') as usize)
        };
        Ok(Pos {
            cells,
            white: f[1] == "w",
            castle,
            ep,
            half: f[4].parse().map_err(|_| "bad halfmove")?,
            full: f[5].parse().map_err(|_| "bad fullmove")?,
        })
    }

    pub fn start() -> Pos {
        Pos::from_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1").unwrap()
    }

    /// First four FEN fields, used as the repetition key.
    pub fn key(&self) -> String {
        let full = self.fen();
        full.split(' ').take(4).collect::<Vec<_>>().join(" ")
    }

    pub fn fen(&self) -> String {
        let mut s = String::new();
        for rank in (0..8).rev() {
            let mut empty = 0;
            for file in 0..8 {
                let p = self.cells[rank * 16 + file];
                if p == 0 {
                    empty += 1;
                    continue;
                }
                if empty > 0 {
                    s += &empty.to_string();
                    empty = 0;
                }
                let c = b" pnbrqk"[p.unsigned_abs() as usize] as char;
                s.push(if p > 0 { c.to_ascii_uppercase() } else { c });
            }
            if empty > 0 {
                s += &empty.to_string();
            }
            if rank > 0 {
                s.push('/');
            }
        }
        s += if self.white { " w " } else { " b " };
        let rights: String = ['K', 'Q', 'k', 'q'].iter().zip(self.castle).filter(|(_, on)| *on).map(|(c, _)| *c).collect();
        s += if rights.is_empty() { "-" } else { &rights };
        s += " ";
        s += &self.ep.map_or("-".to_string(), name);
        s + &format!(" {} {}", self.half, self.full)
    }

    pub fn white_to_move(&self) -> bool {
        self.white
    }

    pub fn halfmove(&self) -> u32 {
        self.half
    }

    /// Signed piece on a 0..64 square.
    pub fn piece64(&self, sq: usize) -> i8 {
        self.cells[(sq / 8) * 16 + sq % 8]
    }

    pub fn attacked(&self, sq: usize, by_white: bool) -> bool {
        let s = sq as i32;
        let sign: i8 = if by_white { 1 } else { -1 };
        let at = |t: i32| on_board(t).then(|| self.cells[t as usize]);
        let pawn_from = if by_white { [-15, -17] } else { [15, 17] };
        if pawn_from.iter().any(|d| at(s + d) == Some(sign * P)) {
            return true;
        }
        if KNIGHT.iter().any(|d| at(s + d) == Some(sign * N)) || KING.iter().any(|d| at(s + d) == Some(sign * K)) {
            return true;
        }
        for (dirs, a, b) in [(&BISHOP, B, Q), (&ROOK, R, Q)] {
            for d in dirs.iter() {
                let mut t = s + d;
                while on_board(t) {
                    let p = self.cells[t as usize];
                    if p != 0 {
                        if p == sign * a || p == sign * b {
                            return true;
                        }
                        break;
                    }
                    t += d;
                }
            }
        }
        false
    }

    fn king(&self, white: bool) -> usize {
        let k = if white { K } else { -K };
        (0..128).find(|&i| i & 0x88 == 0 && self.cells[i] == k).expect("king present")
    }

    pub fn in_check(&self) -> bool {
        self.attacked(self.king(self.white), !self.white)
    }

    fn pseudo(&self) -> Vec<OMove> {
        let mut out = Vec::new();
        let sign: i8 = if self.white { 1 } else { -1 };
        let own = |p: i8| p != 0 && (p > 0) == self.white;
        let enemy = |p: i8| p != 0 && (p > 0) != self.white;
        for from in 0..128usize {
            if from & 0x88 != 0 || !own(self.cells[from]) {
                continue;
            }
            let kind = self.cells[from].abs();
            let f = from as i32;
            match kind {
                P => {
                    let up = 16 * sign as i32;
                    let last = if self.white { 7 } else { 0 };
                    let start = if self.white { 1 } else { 6 };
                    let mut add = |to: usize| {
                        if to >> 4 == last {
                            for promo in [Q, R, B, N] {
                                out.push(OMove { from, to, promo });
                            }
                        } else {
                            out.push(OMove { from, to, promo: 0 });
                        }
                    };
                    let one = f + up;
                    if on_board(one) && self.cells[one as usize] == 0 {
                        add(one as usize);
                        let two = one + up;
                        if from >> 4 == start && self.cells[two as usize] == 0 {
                            add(two as usize);
                        }
                    }
                    for d in [up - 1, up + 1] {
                        let t = f + d;
                        if on_board(t) && (enemy(self.cells[t as usize]) || self.ep == Some(t as usize)) {
                            add(t as usize);
                        }
                    }
                }
                N | K => {
                    let dirs: &[i32] = if kind == N { &KNIGHT } else { &KING };
                    for d in dirs {
                        let t = f + d;
                        if on_board(t) && !own(self.cells[t as usize]) {
                            out.push(OMove { from, to: t as usize, promo: 0 });
                        }
                    }
                }
                _ => {
                    let dirs: Vec<i32> = match kind {
                        B => BISHOP.to_vec(),
                        R => ROOK.to_vec(),
                        _ => BISHOP.iter().chain(ROOK.iter()).copied().collect(),
                    };
                    for d in dirs {
                        let mut t = f + d;
                        while on_board(t) {
                            let p = self.cells[t as usize];
                            if own(p) {
                                break;
                            }
                            out.push(OMove { from, to: t as usize, promo: 0 });
                            if p != 0 {
                                break;
                            }
                            t += d;
                        }
                    }
                }
            }
        }
        // Castling: rights, empty path, king not passing through attack.
        let (base, ks, qs) = if self.white { (0usize, 0, 1) } else { (112usize, 2, 3) };
        let them = !self.white;
        if self.castle[ks]
            && self.cells[base + 5] == 0
            && self.cells[base + 6] == 0
            && !self.attacked(base + 4, them)
            && !self.attacked(base + 5, them)
            && !self.attacked(base + 6, them)
        {
            out.push(OMove { from: base + 4, to: base + 6, promo: 0 });
        }
        if self.castle[qs]
            && self.cells[base + 1] == 0
            && self.cells[base + 2] == 0
            && self.cells[base + 3] == 0
            && !self.attacked(base + 4, them)
            && !self.attacked(base + 3, them)
            && !self.attacked(base + 2, them)
        {
            out.push(OMove { from: base + 4, to: base + 2, promo: 0 });
        }
        out
    }

    /// Copy-make.
    pub fn apply(&self, m: OMove) -> Pos {
        let mut n = self.clone();
        let piece = n.cells[m.from];
        let captured = n.cells[m.to];
        let kind = piece.abs();
        n.cells[m.from] = 0;
        n.cells[m.to] = if m.promo != 0 { m.promo * piece.signum() } else { piece };
        let mut capture = captured != 0;
        if kind == P && Some(m.to) == self.ep {
            let victim = if self.white { m.to - 16 } else { m.to + 16 };
            n.cells[victim] = 0;
            capture = true;
        }
        if kind == K && (m.to as i32 - m.from as i32).abs() == 2 {
            let (rf, rt) = if m.to > m.from { (m.from + 3, m.from + 1) } else { (m.from - 4, m.from - 1) };
            n.cells[rt] = n.cells[rf];
            n.cells[rf] = 0;
        }
        for (sq, right) in [(0usize, 1usize), (7, 0), (112, 3), (119, 2)] {
            if m.from == sq || m.to == sq {
                n.castle[right] = false;
            }
        }
        if m.from == 4 {
            n.castle[0] = false;
            n.castle[1] = false;
        }
        if m.from == 116 {
            n.castle[2] = false;
            n.castle[3] = false;
        }
        n.ep = (kind == P && (m.to as i32 - m.from as i32).abs() == 32).then(|| (m.from + m.to) / 2);
        n.half = if kind == P || capture { 0 } else { self.half + 1 };
        if !self.white {
            n.full += 1;
        }
        n.white = !self.white;
        n
    }

    pub fn is_capture(&self, m: OMove) -> bool {
        self.cells[m.to] != 0 || (self.cells[m.from].abs() == P && Some(m.to) == self.ep)
    }

    pub fn legal(&self) -> Vec<OMove> {
        self.pseudo()
            .into_iter()
            .filter(|&m| {
                let n = self.apply(m);
                !n.attacked(n.king(self.white), n.white)
            })
            .collect()
    }

    pub fn insufficient_material(&self) -> bool {
        let mut minors = 0;
        let mut knights = 0;
        let mut bishop_colors = [false; 2];
        for sq in 0..128 {
            if sq & 0x88 != 0 {
                continue;
            }
            match self.cells[sq].abs() {
                P | R | Q => return false,
                N => {
                    minors += 1;
                    knights += 1;
                }
                B => {
                    minors += 1;
                    bishop_colors[((sq >> 4) + (sq & 7)) % 2] = true;
                }
                _ => {}
            }
        }
        minors <= 1 || (knights == 0 && !(bishop_colors[0] && bishop_colors[1]))
    }
}

pub fn perft(p: &Pos, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = p.legal();
    if depth == 1 {
        return moves.len() as u64;
    }
    moves.iter().map(|&m| perft(&p.apply(m), depth - 1)).sum()
}

pub fn perft_fen(fen: &str, depth: u32) -> u64 {
    perft(&Pos::from_fen(fen).expect("oracle fen"), depth)
}

/// Sorted legal moves in coordinate notation.
pub fn legal_uci(fen: &str) -> Vec<String> {
    let mut v: Vec<String> = Pos::from_fen(fen).expect("oracle fen").legal().iter().map(OMove::uci).collect();
    v.sort();
    v
}

/// Legal moves that deliver checkmate.
pub fn mating_moves(p: &Pos) -> Vec<OMove> {
    p.legal()
        .into_iter()
        .filter(|&m| {
            let n = p.apply(m);
            n.in_check() && n.legal().is_empty()
        })
        .collect()
}

/// Move order of the engine under test, restated over 0x88 squares:
/// captures by victim value, then from, to and promotion piece.
fn order_key(p: &Pos, m: OMove) -> (i32, usize, usize, i8) {
    const VALUE: [i32; 7] = [0, 1, 3, 3, 5, 9, 100];
    let victim = if p.cells[m.to] != 0 {
        VALUE[p.cells[m.to].unsigned_abs() as usize]
    } else if p.is_capture(m) {
        1
    } else {
        -1
    };
    (-victim, index64(m.from), index64(m.to), m.promo)
}

/// Plain minimax in negamax form without pruning. `eval` scores a FEN for
/// its side to move; terminal and draw rules are applied below the root.
pub struct Minimax<'a> {
    pub eval: &'a dyn Fn(&str) -> f64,
    path: Vec<String>,
}

impl<'a> Minimax<'a> {
    pub fn new(eval: &'a dyn Fn(&str) -> f64) -> Self {
        Minimax { eval, path: Vec::new() }
    }

    fn value(&mut self, p: &Pos, depth: u32, root: bool) -> (f64, Option<OMove>) {
        let mut moves = p.legal();
        if moves.is_empty() {
            return (if p.in_check() { 0.0 } else { 0.5 }, None);
        }
        if !root {
            let key = p.key();
            let seen = self.path.iter().filter(|k| **k == key).count();
            if p.half >= 100 || p.insufficient_material() || seen >= 2 {
                return (0.5, None);
            }
        }
        if depth == 0 {
            return ((self.eval)(&p.fen()), None);
        }
        moves.sort_by_key(|&m| order_key(p, m));
        let mut best = (f64::NEG_INFINITY, None);
        self.path.push(p.key());
        for m in moves {
            let v = 1.0 - self.value(&p.apply(m), depth - 1, false).0;
            if v > best.0 {
                best = (v, Some(m));
            }
        }
        self.path.pop();
        best
    }

    /// Best move in coordinate notation and its value.
    pub fn search(&mut self, fen: &str, depth: u32) -> (String, f64) {
        let p = Pos::from_fen(fen).expect("oracle fen");
        let (v, m) = self.value(&p, depth, true);
        (m.expect("position has a legal move").uci(), v)
    }
}
