pub mod chess;
pub mod graph;
pub mod vision;
