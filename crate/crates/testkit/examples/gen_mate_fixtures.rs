//! Regenerates the mate-in-one puzzle fixture on stdout.
use bpu_testkit::selfplay::{mate_in_one, mate_in_one_csv};

fn main() {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let fixtures = mate_in_one(2024, n);
    let header = "Mate-in-one positions from seeded random play (seed 2024).\n\
                  Each FEN is before the opponent's setup move; the second move is the\n\
                  only mating reply. Ratings are a flat placeholder.\n\
                  Regenerate: cargo run -p bpu-testkit --example gen_mate_fixtures";
    print!("{}", mate_in_one_csv(&fixtures, header));
}
