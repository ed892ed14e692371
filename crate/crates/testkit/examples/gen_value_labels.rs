//! Writes teacher-labeled random positions as `fen,win_prob` CSV on stdout.
//! Usage: gen_value_labels [N] [DEPTH] [SEED]
use bpu_testkit::selfplay::value_labels_csv;

fn main() {
    let arg = |i: usize, default: u64| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    print!("{}", value_labels_csv(arg(3, 0), arg(1, 10_000) as usize, arg(2, 1) as u32));
}
