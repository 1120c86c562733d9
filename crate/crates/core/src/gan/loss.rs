use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{Stft, StftConfig};
use crate::tensor::{bce_against, bce_loss, l1_loss, l1_loss_grad, Buffer};

/// What the spectral L1 term compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralLoss {
    /// Squared-magnitude spectrogram.
    Power,
    /// Complex STFT coefficients (L1 of the complex difference).
    Complex,
}

impl SpectralLoss {
    pub fn name(self) -> &'static str {
        match self {
            SpectralLoss::Power => "power",
            SpectralLoss::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "power" => Some(SpectralLoss::Power),
            "complex" => Some(SpectralLoss::Complex),
            _ => None,
        }
    }
}

/// Mean L1 distance between the spectral representations of two signals.
#[derive(Clone, Debug)]
pub struct SpectralTerm {
    stft: Stft,
    kind: SpectralLoss,
}

impl SpectralTerm {
    pub fn new(config: StftConfig, kind: SpectralLoss) -> Result<Self> {
        Ok(Self {
            stft: Stft::new(config)?,
            kind,
        })
    }

    pub fn value<T: Scalar>(&self, target: &[T], pred: &[T]) -> Result<f64> {
        Ok(self.value_grad(target, pred)?.0)
    }

    /// Loss and gradient with respect to `pred`.
    pub fn value_grad<T: Scalar>(&self, target: &[T], pred: &[T]) -> Result<(f64, Vec<T>)> {
        if target.len() != pred.len() {
            return Err(Error::Shape(format!(
                "spectral loss: {} vs {} samples",
                target.len(),
                pred.len()
            )));
        }
        let ft = self.stft.transform(target)?;
        let fp = self.stft.transform(pred)?;
        let n = (fp.frames * fp.bins) as f64;
        let sign = |d: f64| {
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        match self.kind {
            SpectralLoss::Power => {
                let mut total = 0.0;
                let mut g = Vec::with_capacity(fp.re.len());
                for k in 0..fp.re.len() {
                    let pt = ft.re[k] * ft.re[k] + ft.im[k] * ft.im[k];
                    let pp = fp.re[k] * fp.re[k] + fp.im[k] * fp.im[k];
                    total += (pp - pt).abs();
                    g.push(sign(pp - pt) / n);
                }
                let grad = self.stft.power_backward(pred.len(), &fp, &g)?;
                finite(total / n, grad)
            }
            SpectralLoss::Complex => {
                let mut total = 0.0;
                let mut gr = Vec::with_capacity(fp.re.len());
                let mut gi = Vec::with_capacity(fp.re.len());
                for k in 0..fp.re.len() {
                    let (dr, di) = (fp.re[k] - ft.re[k], fp.im[k] - ft.im[k]);
                    let m = (dr * dr + di * di).sqrt();
                    total += m;
                    if m > 0.0 {
                        gr.push(dr / m / n);
                        gi.push(di / m / n);
                    } else {
                        gr.push(0.0);
                        gi.push(0.0);
                    }
                }
                let grad = self.stft.backward(pred.len(), &gr, &gi)?;
                finite(total / n, grad)
            }
        }
    }
}

fn finite<T>(v: f64, g: Vec<T>) -> Result<(f64, Vec<T>)> {
    if v.is_finite() {
        Ok((v, g))
    } else {
        Err(Error::NonFinite("spectral loss"))
    }
}

/// Components of the generator objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GLossParts {
    /// Adversarial term, BCE of `D(X, G(X, z))` against the "real" label.
    pub bce: f64,
    pub time: f64,
    pub stft: f64,
    pub total: f64,
}

impl GLossParts {
    pub fn combine(bce: f64, time: f64, stft: f64, lambda: f64) -> Self {
        Self {
            bce,
            time,
            stft,
            total: bce + lambda * (time + stft),
        }
    }
}

/// `BCE(D_fake, 1) + λ·(L1(Y, G) + L1(Spec Y, Spec G))`.
pub fn composite_g_loss<T: Scalar>(
    target: &Buffer<T>,
    generated: &Buffer<T>,
    d_fake: &Buffer<T>,
    lambda: f64,
    spectral: &SpectralTerm,
) -> Result<GLossParts> {
    let ones = Buffer::from_vec(d_fake.rows(), d_fake.cols(), vec![T::one(); d_fake.len()])?;
    let bce = bce_loss(d_fake, &ones)?;
    let time = l1_loss(target, generated)?;
    let stft = spectral.value(target.as_slice(), generated.as_slice())?;
    Ok(GLossParts::combine(bce, time, stft, lambda))
}

/// Gradients of the composite loss.
#[derive(Clone, Debug)]
pub struct GLossGrad<T> {
    pub parts: GLossParts,
    /// With respect to the generator output, from the λ-weighted terms only.
    pub generated: Buffer<T>,
    /// With respect to the discriminator output.
    pub d_fake: Buffer<T>,
}

pub fn composite_g_loss_grad<T: Scalar>(
    target: &Buffer<T>,
    generated: &Buffer<T>,
    d_fake: &Buffer<T>,
    lambda: f64,
    spectral: &SpectralTerm,
) -> Result<GLossGrad<T>> {
    let (bce, g_d) = bce_against(d_fake, 1.0)?;
    let (time, g_time) = l1_loss_grad(generated, target)?;
    let (stft, g_spec) = spectral.value_grad(target.as_slice(), generated.as_slice())?;
    let lam = T::c(lambda);
    let mut g = g_time;
    for (a, &b) in g.as_mut_slice().iter_mut().zip(&g_spec) {
        *a = lam * (*a + b);
    }
    Ok(GLossGrad {
        parts: GLossParts::combine(bce, time, stft, lambda),
        generated: g,
        d_fake: g_d,
    })
}
