use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::features::{featurize, PairedInput, SparseVector};
use super::model::{ScorerModel, DEFAULT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    /// Adam without weight decay.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Optimizer::Sgd => f.write_str("sgd"),
            Optimizer::Adam { beta1, beta2, eps } => {
                write!(f, "adam(beta1={beta1},beta2={beta2},eps={eps:e})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub dim: usize,
    pub hash_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 10,
            epochs: 5,
            seed: 0,
            optimizer: Optimizer::Sgd,
            dim: DEFAULT_DIM,
            hash_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if self.dim < 2 || !self.dim.is_power_of_two() {
            return Err(Error::config(format!("dim must be a power of two >= 2, got {}", self.dim)));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::config("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    /// MSE over the dev set after the epoch (train MSE when dev is empty).
    pub dev_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest dev MSE.
    pub model: ScorerModel<T>,
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
}

struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    m_bias: T,
    v_bias: T,
    step: i32,
}

fn featurize_all<T: Scalar>(data: &[(PairedInput, T)], dim: usize, hash_seed: u64) -> Result<Vec<(SparseVector<T>, T)>> {
    data.par_iter()
        .map(|(p, y)| {
            if !(*y >= T::zero() && *y <= T::one()) {
                return Err(Error::config(format!("target {y} outside [0, 1]")));
            }
            Ok((featurize(p, dim, hash_seed)?, *y))
        })
        .collect()
}

fn mean_squared_error<T: Scalar>(model: &ScorerModel<T>, data: &[(SparseVector<T>, T)]) -> Result<T> {
    let preds: Vec<T> = data
        .par_iter()
        .map(|(x, _)| model.predict_features(x))
        .collect::<Result<_>>()?;
    let sum: T = preds
        .iter()
        .zip(data)
        .map(|(&p, (_, y))| (p - *y) * (p - *y))
        .sum();
    Ok(sum / T::of_usize(data.len()))
}

/// Mini-batch training of the MSE objective. Batches follow an epoch-level
/// shuffle drawn from `cfg.seed`; the returned model is the best dev epoch.
pub fn train<T: Scalar>(
    train_set: &[(PairedInput, T)],
    dev_set: &[(PairedInput, T)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let train_x = featurize_all(train_set, cfg.dim, cfg.hash_seed)?;
    let dev_x = featurize_all(dev_set, cfg.dim, cfg.hash_seed)?;
    let eval_x = if dev_x.is_empty() { &train_x } else { &dev_x };

    let mut model = ScorerModel::<T>::zeros(cfg.dim, cfg.hash_seed)?;
    model.optimizer = cfg.optimizer.to_string();
    let lr = T::of(cfg.learning_rate);
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: vec![T::zero(); cfg.dim],
            v: vec![T::zero(); cfg.dim],
            m_bias: T::zero(),
            v_bias: T::zero(),
            step: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut best: Option<(T, usize, ScorerModel<T>)> = None;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = T::zero();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&SparseVector<T>, T)> =
                chunk.iter().map(|&i| (&train_x[i].0, train_x[i].1)).collect();
            let diverged = || Error::Diverged { epoch, batch: b + 1 };
            let grad = model.batch_gradient(&batch).map_err(|e| match e {
                Error::Numeric(_) => diverged(),
                other => other,
            })?;
            loss_sum = loss_sum + grad.loss;
            batches += 1;
            match (&mut adam, cfg.optimizer) {
                (Some(st), Optimizer::Adam { beta1, beta2, eps }) => {
                    adam_step(&mut model, st, &grad.weights, grad.bias, lr, beta1, beta2, eps);
                }
                _ => {
                    for &(i, g) in &grad.weights {
                        model.weights[i] = model.weights[i] - lr * g;
                    }
                    model.bias = model.bias - lr * grad.bias;
                }
            }
            if !model.bias.is_finite() || grad.weights.iter().any(|&(i, _)| !model.weights[i].is_finite()) {
                return Err(diverged());
            }
        }
        let dev_mse = mean_squared_error(&model, eval_x).map_err(|e| match e {
            Error::Numeric(_) => Error::Diverged { epoch, batch: batches },
            other => other,
        })?;
        trace.push(EpochRecord {
            epoch,
            train_loss: (loss_sum / T::of_usize(batches.max(1))).to_f64_lossy(),
            dev_mse: dev_mse.to_f64_lossy(),
        });
        if best.as_ref().map_or(true, |(b, _, _)| dev_mse < *b) {
            best = Some((dev_mse, epoch, model.clone()));
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, 0),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn adam_step<T: Scalar>(
    model: &mut ScorerModel<T>,
    st: &mut AdamState<T>,
    grad: &[(usize, T)],
    grad_bias: T,
    lr: T,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps));
    let one = T::one();
    st.step += 1;
    let c1 = one - b1.powi(st.step);
    let c2 = one - b2.powi(st.step);
    let update = |w: &mut T, m: &mut T, v: &mut T, g: T| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
    };
    // Every coordinate moves each step; zero-gradient entries still decay.
    let mut next = grad.iter().peekable();
    for i in 0..model.weights.len() {
        let g = match next.peek() {
            Some(&&(j, g)) if j == i => {
                next.next();
                g
            }
            _ => T::zero(),
        };
        update(&mut model.weights[i], &mut st.m[i], &mut st.v[i], g);
    }
    update(&mut model.bias, &mut st.m_bias, &mut st.v_bias, grad_bias);
}
