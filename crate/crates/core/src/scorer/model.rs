use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::features::{featurize, PairedInput, SparseVector};

pub const DEFAULT_DIM: usize = 1 << 18;
pub const MODEL_MAGIC: &str = "dapo-scorer v1";

/// Logistic function, kept strictly inside `(0, 1)`.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    let s = if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    };
    s.max(T::min_positive_value()).min(T::one() - T::epsilon())
}

/// Mean of squared differences.
pub fn mse_loss<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<T> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("mse over zero predictions".into()));
    }
    let sum: T = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of_usize(predictions.len()))
}

/// Linear layer over hashed features followed by a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel<T> {
    pub(crate) weights: Vec<T>,
    pub(crate) bias: T,
    pub(crate) hash_seed: u64,
    /// Free-form description of how the weights were produced.
    pub optimizer: String,
}

/// Gradient of the batch MSE with respect to the weights (sparse, sorted by
/// index) and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient<T> {
    pub loss: T,
    pub weights: Vec<(usize, T)>,
    pub bias: T,
}

impl<T: Scalar> ScorerModel<T> {
    pub fn zeros(dim: usize, hash_seed: u64) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::config(format!("model dimension must be a power of two >= 2, got {dim}")));
        }
        Ok(ScorerModel {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
            hash_seed,
            optimizer: "none".into(),
        })
    }

    pub fn from_parts(weights: Vec<T>, bias: T, hash_seed: u64) -> Result<Self> {
        let mut m = Self::zeros(weights.len(), hash_seed)?;
        if weights.iter().chain(std::iter::once(&bias)).any(|w| !w.is_finite()) {
            return Err(Error::Numeric("model parameters".into()));
        }
        m.weights = weights;
        m.bias = bias;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn featurize(&self, p: &PairedInput) -> Result<SparseVector<T>> {
        featurize(p, self.dim(), self.hash_seed)
    }

    fn check_dims(&self, x: &SparseVector<T>) -> Result<()> {
        match x.indices.last() {
            Some(&i) if i >= self.dim() => Err(Error::config(format!(
                "feature index {i} outside model dimension {}",
                self.dim()
            ))),
            _ => Ok(()),
        }
    }

    pub fn logit(&self, x: &SparseVector<T>) -> Result<T> {
        self.check_dims(x)?;
        let z = x.dot(&self.weights) + self.bias;
        if !z.is_finite() {
            return Err(Error::Numeric("linear output".into()));
        }
        Ok(z)
    }

    pub fn predict_features(&self, x: &SparseVector<T>) -> Result<T> {
        self.logit(x).map(sigmoid)
    }

    /// `sigmoid(w . x + b)` for a paired input.
    pub fn predict_score(&self, p: &PairedInput) -> Result<T> {
        self.predict_features(&self.featurize(p)?)
    }

    /// Loss and analytic gradient of the batch MSE through the sigmoid:
    /// `dL/dz_i = 2/b * (s_i - y_i) * s_i * (1 - s_i)`.
    pub fn batch_gradient(&self, batch: &[(&SparseVector<T>, T)]) -> Result<BatchGradient<T>> {
        if batch.is_empty() {
            return Err(Error::Empty("gradient over an empty batch".into()));
        }
        let scale = T::of(2.0) / T::of_usize(batch.len());
        let mut loss = T::zero();
        let mut bias = T::zero();
        let mut acc: std::collections::BTreeMap<usize, T> = std::collections::BTreeMap::new();
        for &(x, y) in batch {
            let s = self.predict_features(x)?;
            let err = s - y;
            loss = loss + err * err;
            let dz = scale * err * s * (T::one() - s);
            bias = bias + dz;
            for (i, v) in x.iter() {
                let g = acc.entry(i).or_insert_with(T::zero);
                *g = *g + dz * v;
            }
        }
        let loss = loss / T::of_usize(batch.len());
        if !loss.is_finite() {
            return Err(Error::Numeric("batch loss".into()));
        }
        Ok(BatchGradient {
            loss,
            weights: acc.into_iter().collect(),
            bias,
        })
    }

    /// Text model file: magic line, header, bias, then `index\tvalue` for
    /// every nonzero weight. Float formatting round-trips exactly.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let nonzero: Vec<(usize, T)> = self
            .weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != T::zero() || v.is_sign_negative())
            .collect();
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(
            w,
            "scalar={}\tdim={}\thash_seed={}\toptimizer={}\tnnz={}",
            T::NAME,
            self.dim(),
            self.hash_seed,
            self.optimizer,
            nonzero.len()
        )?;
        writeln!(w, "bias={}", self.bias)?;
        for (i, v) in nonzero {
            writeln!(w, "{i}\t{v}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, l)) => Ok((n, l?)),
                None => Err(Error::parse(0, format!("model file truncated before {what}"))),
            }
        };
        let (_, magic) = next("magic")?;
        if magic != MODEL_MAGIC {
            return Err(Error::parse(1, format!("expected `{MODEL_MAGIC}`, found `{magic}`")));
        }
        let (ln, header) = next("header")?;
        let mut scalar = None;
        let mut dim = None;
        let mut hash_seed = None;
        let mut optimizer = String::new();
        let mut nnz = None;
        for field in header.split('\t') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(ln, format!("bad header field `{field}`")))?;
            match k {
                "scalar" => scalar = Some(v.to_string()),
                "dim" => dim = v.parse::<usize>().ok(),
                "hash_seed" => hash_seed = v.parse::<u64>().ok(),
                "optimizer" => optimizer = v.to_string(),
                "nnz" => nnz = v.parse::<usize>().ok(),
                _ => return Err(Error::parse(ln, format!("unknown header field `{k}`"))),
            }
        }
        if scalar.as_deref() != Some(T::NAME) {
            return Err(Error::parse(ln, format!("model scalar is {scalar:?}, expected {}", T::NAME)));
        }
        let (dim, hash_seed, nnz) = match (dim, hash_seed, nnz) {
            (Some(d), Some(h), Some(n)) => (d, h, n),
            _ => return Err(Error::parse(ln, "header needs dim, hash_seed and nnz")),
        };
        let (ln, bias_line) = next("bias")?;
        let bias: T = bias_line
            .strip_prefix("bias=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(ln, "expected `bias=<value>`"))?;
        let mut model = Self::zeros(dim, hash_seed)?;
        model.bias = bias;
        model.optimizer = optimizer;
        for _ in 0..nnz {
            let (ln, row) = next("weights")?;
            let parsed = row.split_once('\t').and_then(|(i, v)| {
                Some((i.parse::<usize>().ok()?, v.parse::<T>().ok()?))
            });
            match parsed {
                Some((i, v)) if i < dim && v.is_finite() => model.weights[i] = v,
                _ => return Err(Error::parse(ln, format!("bad weight row `{row}`"))),
            }
        }
        if !model.bias.is_finite() {
            return Err(Error::Numeric("model bias".into()));
        }
        Ok(model)
    }
}
