use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sgd-momentum" | "momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(format!("unknown optimizer `{s}`")),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd-momentum",
            OptimizerKind::Adam => "adam",
        })
    }
}

const MOMENTUM: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First-order optimizer over a fixed list of flat parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            lr,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter tensor");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            if self.kind == OptimizerKind::Adam {
                self.v = self.m.clone();
            }
        }
        self.t += 1;
        let (lr, wd) = (self.lr, self.weight_decay);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "gradient shape for tensor {k}");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in p.iter_mut().zip(g) {
                        *w -= lr * (gi + wd * *w);
                    }
                }
                OptimizerKind::SgdMomentum => {
                    for ((w, &gi), m) in p.iter_mut().zip(g).zip(&mut self.m[k]) {
                        *m = MOMENTUM * *m + gi + wd * *w;
                        *w -= lr * *m;
                    }
                }
                OptimizerKind::Adam => {
                    let c1 = 1.0 - BETA1.powi(self.t as i32);
                    let c2 = 1.0 - BETA2.powi(self.t as i32);
                    for (((w, &gi), m), v) in p.iter_mut().zip(g).zip(&mut self.m[k]).zip(&mut self.v[k]) {
                        let gi = gi + wd * *w;
                        *m = BETA1 * *m + (1.0 - BETA1) * gi;
                        *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut w = vec![1.0, -2.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, 0.0);
        opt.step(vec![&mut w[..]], &[vec![3.0, -0.5]]);
        assert!((w[0] - 0.9).abs() < 1e-7 && (w[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::SgdMomentum, OptimizerKind::Adam] {
            let mut w = vec![0.25, 4.0];
            let mut opt = Optimizer::new(kind, 0.0, 0.0);
            opt.step(vec![&mut w[..]], &[vec![1.0, 1.0]]);
            assert_eq!(w, vec![0.25, 4.0]);
        }
    }
}
