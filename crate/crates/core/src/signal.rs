//! Segmentation, min-max normalization, Hanning window and the STFT power
//! spectrogram, including the spectrogram's gradient.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Buffer;

/// Sampling rate of every record, in Hz.
pub const SAMPLE_RATE: usize = 4096;
/// One-second, non-overlapping analysis segment.
pub const SEGMENT_LEN: usize = 4096;

/// Split a record into consecutive non-overlapping segments of one second.
/// A trailing partial segment is dropped.
pub fn segment_samples<T: Clone>(samples: &[T], sample_rate: usize) -> Result<Vec<Vec<T>>> {
    if sample_rate != SAMPLE_RATE {
        return Err(Error::InvalidArgument(format!(
            "records must be sampled at {SAMPLE_RATE} Hz, got {sample_rate}"
        )));
    }
    Ok(samples.chunks_exact(SEGMENT_LEN).map(<[T]>::to_vec).collect())
}

/// Result of min-max normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized<T> {
    pub values: Vec<T>,
    /// Set when the segment is constant; `values` is then all zeros.
    pub degenerate: bool,
}

/// Linear map of a segment onto `[-1, 1]`: `2(x − min)/(max − min) − 1`.
pub fn normalize_segment<T: Scalar>(x: &[T]) -> Result<Normalized<T>> {
    if x.is_empty() {
        return Err(Error::Empty("normalize_segment"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in x {
        let v = v.as_f64();
        if !v.is_finite() {
            return Err(Error::NonFinite("normalize_segment"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == lo {
        return Ok(Normalized {
            values: vec![T::zero(); x.len()],
            degenerate: true,
        });
    }
    if lo == -1.0 && hi == 1.0 {
        return Ok(Normalized {
            values: x.to_vec(),
            degenerate: false,
        });
    }
    let range = hi - lo;
    Ok(Normalized {
        values: x
            .iter()
            .map(|v| T::c(2.0 * (v.as_f64() - lo) / range - 1.0))
            .collect(),
        degenerate: false,
    })
}

/// Symmetric Hanning window `0.5·(1 − cos(2πn/(N−1)))`.
pub fn hanning(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Hanning window needs at least 2 samples, got {n}"
        )));
    }
    let d = (n - 1) as f64;
    Ok((0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / d).cos()))
        .collect())
}

/// In-place iterative radix-2 FFT, `X[k] = Σ x[m]·e^{−2πikm/N}`.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    let n = re.len();
    if im.len() != n {
        return Err(Error::Shape("fft: real and imaginary parts differ in length".into()));
    }
    if !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("fft length {n} is not a power of two")));
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) };
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (s, c) = (ang * k as f64).sin_cos();
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Window length and hop of the short-time transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 256,
            hop: 128,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// `floor((len − N)/hop) + 1`, or 0 when the signal is shorter than a window.
    pub fn frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// One-sided complex STFT frames, `(frames × bins)` real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct StftFrames {
    pub frames: usize,
    pub bins: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Squared-magnitude STFT, `(frames × bins)`.
pub type Spectrogram<T> = Buffer<T>;

/// Precomputed window for repeated transforms of equal-length signals.
#[derive(Clone, Debug)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        if config.hop == 0 {
            return Err(Error::InvalidArgument("STFT hop must be at least 1".into()));
        }
        if !config.window_len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "STFT window length {} is not a power of two",
                config.window_len
            )));
        }
        Ok(Self {
            window: hanning(config.window_len)?,
            config,
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn transform<T: Scalar>(&self, x: &[T]) -> Result<StftFrames> {
        let n = self.config.window_len;
        let frames = self.config.frames(x.len());
        if frames == 0 {
            return Err(Error::Shape(format!(
                "signal of {} samples is shorter than a {n}-sample window",
                x.len()
            )));
        }
        let bins = self.config.bins();
        let mut out = StftFrames {
            frames,
            bins,
            re: Vec::with_capacity(frames * bins),
            im: Vec::with_capacity(frames * bins),
        };
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for f in 0..frames {
            let start = f * self.config.hop;
            for (m, (r, i)) in re.iter_mut().zip(im.iter_mut()).enumerate() {
                *r = x[start + m].as_f64() * self.window[m];
                *i = 0.0;
            }
            fft_in_place(&mut re, &mut im)?;
            out.re.extend_from_slice(&re[..bins]);
            out.im.extend_from_slice(&im[..bins]);
        }
        Ok(out)
    }

    pub fn power<T: Scalar>(&self, x: &[T]) -> Result<Spectrogram<T>> {
        let frames = self.transform(x)?;
        Ok(power_of(&frames))
    }

    /// Gradient with respect to the signal, given `∂L/∂Re X` and `∂L/∂Im X`
    /// for every one-sided bin.
    pub fn backward<T: Scalar>(&self, len: usize, grad_re: &[f64], grad_im: &[f64]) -> Result<Vec<T>> {
        let n = self.config.window_len;
        let frames = self.config.frames(len);
        let bins = self.config.bins();
        if grad_re.len() != frames * bins || grad_im.len() != frames * bins {
            return Err(Error::Shape(format!(
                "STFT gradient holds {} bins, expected {}",
                grad_re.len(),
                frames * bins
            )));
        }
        let mut gx = vec![0.0f64; len];
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for f in 0..frames {
            // ∂L/∂a[m] = Re Σ_k G_k e^{+iθ_km} = Re FFT(conj G)[m]
            re.fill(0.0);
            im.fill(0.0);
            for k in 0..bins {
                re[k] = grad_re[f * bins + k];
                im[k] = -grad_im[f * bins + k];
            }
            fft_in_place(&mut re, &mut im)?;
            let start = f * self.config.hop;
            for m in 0..n {
                gx[start + m] += self.window[m] * re[m];
            }
        }
        Ok(gx.into_iter().map(T::c).collect())
    }

    /// Chain `∂L/∂Spec` through `|X|²` back to the signal.
    pub fn power_backward<T: Scalar>(&self, len: usize, frames: &StftFrames, grad_power: &[f64]) -> Result<Vec<T>> {
        let gr: Vec<f64> = frames.re.iter().zip(grad_power).map(|(x, g)| 2.0 * g * x).collect();
        let gi: Vec<f64> = frames.im.iter().zip(grad_power).map(|(x, g)| 2.0 * g * x).collect();
        self.backward(len, &gr, &gi)
    }
}

fn power_of<T: Scalar>(frames: &StftFrames) -> Spectrogram<T> {
    let data = frames
        .re
        .iter()
        .zip(&frames.im)
        .map(|(r, i)| T::c(r * r + i * i))
        .collect();
    Buffer::from_vec(frames.frames, frames.bins, data).expect("frames × bins")
}

/// Power spectrogram with the default 256-sample window and 128-sample hop.
pub fn spectrogram<T: Scalar>(x: &[T]) -> Result<Spectrogram<T>> {
    Stft::new(StftConfig::default())?.power(x)
}
