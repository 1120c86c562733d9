//! Numeric substrate: a 2D value buffer, the three training losses and Adam.
//!
//! Buffers hold signals as `(channels, length)` and spectrograms as
//! `(frames, bins)`. Losses and the optimizer reduce in `f64` regardless of
//! the element type.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major 2D buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Buffer<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> Buffer<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![T::zero(); rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values do not fill a {rows}x{cols} buffer",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    /// Single-channel buffer.
    pub fn row(data: Vec<T>) -> Self {
        let cols = data.len();
        Self {
            data,
            rows: 1,
            cols,
        }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&v| T::c(v)).collect())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn channel(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn channel_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Reinterpret with a new shape holding the same number of values.
    pub fn reshaped(self, rows: usize, cols: usize) -> Result<Self> {
        Self::from_vec(rows, cols, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    /// Stack two buffers of equal length along the channel axis.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot concatenate length {} with length {}",
                self.cols, other.cols
            )));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            data,
            rows: self.rows + other.rows,
            cols: self.cols,
        })
    }

    /// Split off the first `rows` channels; the inverse of [`Self::concat_channels`].
    pub fn split_channels(&self, rows: usize) -> Result<(Self, Self)> {
        if rows > self.rows {
            return Err(Error::Shape(format!(
                "cannot split {} channels off a {}-channel buffer",
                rows, self.rows
            )));
        }
        let at = rows * self.cols;
        Ok((
            Self {
                data: self.data[..at].to_vec(),
                rows,
                cols: self.cols,
            },
            Self {
                data: self.data[at..].to_vec(),
                rows: self.rows - rows,
                cols: self.cols,
            },
        ))
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        same_shape(self, other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        same_shape(self, other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}

fn same_shape<T: Scalar>(a: &Buffer<T>, b: &Buffer<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(a: &Buffer<T>, b: &Buffer<T>) -> Result<f64> {
    same_shape(a, b, "l1_loss")?;
    finite_mean(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()), a.len(), "l1_loss")
}

/// L1 loss and its gradient with respect to `pred`.
///
/// The subgradient at a zero residual is taken as zero.
pub fn l1_loss_grad<T: Scalar>(pred: &Buffer<T>, target: &Buffer<T>) -> Result<(f64, Buffer<T>)> {
    let value = l1_loss(pred, target)?;
    let scale = 1.0 / pred.len().max(1) as f64;
    let grad = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            T::c(if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            })
        })
        .collect();
    Ok((value, Buffer::from_vec(pred.rows, pred.cols, grad)?))
}

/// Mean squared difference.
pub fn mse_loss<T: Scalar>(a: &Buffer<T>, b: &Buffer<T>) -> Result<f64> {
    same_shape(a, b, "mse_loss")?;
    finite_mean(
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        }),
        a.len(),
        "mse_loss",
    )
}

pub fn mse_loss_grad<T: Scalar>(pred: &Buffer<T>, target: &Buffer<T>) -> Result<(f64, Buffer<T>)> {
    let value = mse_loss(pred, target)?;
    let scale = 2.0 / pred.len().max(1) as f64;
    let grad = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| T::c(scale * (p.as_f64() - t.as_f64())))
        .collect();
    Ok((value, Buffer::from_vec(pred.rows, pred.cols, grad)?))
}

/// Clamp applied to predictions before taking logs.
pub const BCE_EPS: f64 = 1e-7;

fn check_targets<T: Scalar>(target: &Buffer<T>) -> Result<()> {
    for &t in target.as_slice() {
        let t = t.as_f64();
        if t != 0.0 && t != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "binary cross-entropy target {t} is not 0 or 1"
            )));
        }
    }
    Ok(())
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce_loss<T: Scalar>(pred: &Buffer<T>, target: &Buffer<T>) -> Result<f64> {
    same_shape(pred, target, "bce_loss")?;
    check_targets(target)?;
    finite_mean(
        pred.as_slice().iter().zip(target.as_slice()).map(|(&p, &t)| {
            let p = p.as_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
            let t = t.as_f64();
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        }),
        pred.len(),
        "bce_loss",
    )
}

pub fn bce_loss_grad<T: Scalar>(pred: &Buffer<T>, target: &Buffer<T>) -> Result<(f64, Buffer<T>)> {
    let value = bce_loss(pred, target)?;
    let n = pred.len().max(1) as f64;
    let grad = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            let p = p.as_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
            T::c((p - t.as_f64()) / (p * (1.0 - p)) / n)
        })
        .collect();
    Ok((value, Buffer::from_vec(pred.rows, pred.cols, grad)?))
}

/// BCE of every element against one constant target.
pub fn bce_against<T: Scalar>(pred: &Buffer<T>, target: f64) -> Result<(f64, Buffer<T>)> {
    let t = Buffer::from_vec(pred.rows, pred.cols, vec![T::c(target); pred.len()])?;
    bce_loss_grad(pred, &t)
}

fn finite_mean(values: impl Iterator<Item = f64>, n: usize, what: &'static str) -> Result<f64> {
    if n == 0 {
        return Err(Error::Empty(what));
    }
    let mean = values.sum::<f64>() / n as f64;
    if mean.is_finite() {
        Ok(mean)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one flat parameter vector. Moments are kept in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step<T: Scalar>(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g.as_f64();
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = T::c(p.as_f64() - lr * m_hat / (v_hat.sqrt() + eps));
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`]: returns the updated parameters.
pub fn adam_step<T: Scalar>(
    params: &Buffer<T>,
    grads: &Buffer<T>,
    state: &mut AdamState,
) -> Result<Buffer<T>> {
    same_shape(params, grads, "adam_step")?;
    let mut out = params.clone();
    state.step(out.as_mut_slice(), grads.as_slice())?;
    Ok(out)
}
