//! Trainable input/output projections around the frozen reservoir, and the
//! parameter-matched MLP baseline.

pub mod baseline;
pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod projection;
pub mod train;

pub use baseline::{solve_widths, BaselineMlp, Widths};
pub use model::{bpu_param_count, BpuModel, ReadoutInit};
pub use optim::{Optimizer, OptimizerKind};
pub use projection::LinearProjection;
pub use train::{argmax, evaluate, predict, sigmoid, train, Dataset, Labels, Loss, TrainConfig, TrainReport, Trainable};
