//! Independent oracles used by tests. Nothing here shares code with the
//! implementations under test.
pub mod chess0x88;
pub mod linalg;
pub mod selfplay;
