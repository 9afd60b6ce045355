//! SGD, Adam and averaged SGD over lists of parameter tensors.

use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Asgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            "asgd" => Ok(Self::Asgd),
            other => Err(Error::config(format!(
                "unknown optimizer `{other}` (expected sgd, adam or asgd)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
            Self::Asgd => "asgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// L2 coefficient added to the gradient.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// First step (1-based) whose iterate enters the ASGD average.
    pub asgd_start: u64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            asgd_start: 1,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn asgd(learning_rate: f64, asgd_start: u64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Asgd,
            asgd_start,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::config("adam epsilon must be positive"));
        }
        if self.asgd_start == 0 {
            return Err(Error::config("asgd averaging start step is 1-based"));
        }
        Ok(())
    }
}

/// Optimizer state for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Optimizer<T: Real> {
    cfg: OptimizerConfig,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
    average: Vec<Tensor<T>>,
    averaged_steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            average: Vec::new(),
            averaged_steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Running ASGD average, once averaging has started.
    pub fn averaged(&self) -> Option<&[Tensor<T>]> {
        (self.averaged_steps > 0).then_some(self.average.as_slice())
    }

    /// Applies one update in place; `params[i]` pairs with `grads[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Dimension {
                op: "optimizer step",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "optimizer step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        if self.cfg.kind == OptimizerKind::Adam && self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        self.step += 1;
        let lr = T::from_f64(self.cfg.learning_rate);
        let wd = T::from_f64(self.cfg.weight_decay);

        match self.cfg.kind {
            OptimizerKind::Sgd | OptimizerKind::Asgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &dw) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * (dw + wd * *w);
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let t = self.step as i32;
                let c1 = T::from_f64(1.0 - b1.powi(t));
                let c2 = T::from_f64(1.0 - b2.powi(t));
                let (b1, b2) = (T::from_f64(b1), T::from_f64(b2));
                let eps = T::from_f64(self.cfg.epsilon);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    for (j, (w, &dw)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        let grad = dw + wd * *w;
                        m[j] = b1 * m[j] + (T::one() - b1) * grad;
                        v[j] = b2 * v[j] + (T::one() - b2) * grad * grad;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }

        if self.cfg.kind == OptimizerKind::Asgd && self.step >= self.cfg.asgd_start {
            self.averaged_steps += 1;
            if self.averaged_steps == 1 {
                self.average = params.iter().map(|p| (**p).clone()).collect();
            } else {
                let k = T::from_f64(self.averaged_steps as f64);
                for (avg, p) in self.average.iter_mut().zip(params.iter()) {
                    for (a, &w) in avg.data_mut().iter_mut().zip(p.data()) {
                        *a += (w - *a) / k;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| {
            let v = v.as_f64();
            v * v
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// True when every gradient entry is finite.
pub fn all_finite<T: Real>(grads: &[Tensor<T>]) -> bool {
    grads.iter().all(Tensor::is_finite)
}
