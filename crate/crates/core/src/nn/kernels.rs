//! Plain strided 1D correlation and its two adjoints.
//!
//! Everything operational is reduced to these three routines: the power stack
//! `[x, x², …, x^Q]` is just a wider plain input, and the transposed layer is
//! the data-adjoint of a correlation. Inputs are split into `stride` polyphase
//! components so that every inner loop is a contiguous axpy or dot product.
//!
//! Index convention, for output position `m` and tap `k`:
//! `y[o][m] = Σ_c Σ_k w[o][c][k] · x[c][m·stride + k − padding]`,
//! with out-of-range input positions reading as zero.

use crate::scalar::Scalar;

/// Geometry of one correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Correlation {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
    pub out_len: usize,
}

impl Correlation {
    /// Phase-array length that covers every tap of every output.
    #[inline]
    fn phase_len(&self) -> usize {
        self.out_len + (self.kernel - 1) / self.stride + 1
    }

    /// Scatter `x` (`in_channels × in_len`) into zero-padded polyphase arrays.
    ///
    /// Layout: `[channel][phase][j]` where `phase[j] = x[j·stride + phase − padding]`.
    fn scatter_phases<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let (s, jl) = (self.stride, self.phase_len());
        let mut out = vec![T::zero(); self.in_channels * s * jl];
        for c in 0..self.in_channels {
            let xc = &x[c * self.in_len..(c + 1) * self.in_len];
            let base = c * s * jl;
            for (i, &v) in xc.iter().enumerate() {
                let padded = i + self.padding;
                let j = padded / s;
                if j < jl {
                    out[base + (padded % s) * jl + j] = v;
                }
            }
        }
        out
    }

    /// Gather polyphase gradients back onto the unpadded input positions.
    fn gather_phases<T: Scalar>(&self, phases: &[T], gx: &mut [T]) {
        let (s, jl) = (self.stride, self.phase_len());
        for c in 0..self.in_channels {
            let base = c * s * jl;
            let gc = &mut gx[c * self.in_len..(c + 1) * self.in_len];
            for (i, g) in gc.iter_mut().enumerate() {
                let padded = i + self.padding;
                let j = padded / s;
                if j < jl {
                    *g += phases[base + (padded % s) * jl + j];
                }
            }
        }
    }

    /// `y += corr(x, w)`; `w` is `[out][in][kernel]`, `y` is `out × out_len`.
    pub fn forward<T: Scalar>(&self, x: &[T], w: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_channels * self.in_len);
        debug_assert_eq!(w.len(), self.out_channels * self.in_channels * self.kernel);
        debug_assert_eq!(y.len(), self.out_channels * self.out_len);
        let phases = self.scatter_phases(x);
        let (s, jl, k_len, ol) = (self.stride, self.phase_len(), self.kernel, self.out_len);
        for o in 0..self.out_channels {
            let yo = &mut y[o * ol..(o + 1) * ol];
            for c in 0..self.in_channels {
                let wk = &w[(o * self.in_channels + c) * k_len..][..k_len];
                let base = c * s * jl;
                for (k, &wv) in wk.iter().enumerate() {
                    let off = base + (k % s) * jl + k / s;
                    axpy(yo, wv, &phases[off..off + ol]);
                }
            }
        }
    }

    /// `gx += corrᵀ(gy, w)`: gradient of [`Self::forward`] with respect to `x`.
    pub fn backward_data<T: Scalar>(&self, gy: &[T], w: &[T], gx: &mut [T]) {
        debug_assert_eq!(gy.len(), self.out_channels * self.out_len);
        debug_assert_eq!(gx.len(), self.in_channels * self.in_len);
        let (s, jl, k_len, ol) = (self.stride, self.phase_len(), self.kernel, self.out_len);
        let mut phases = vec![T::zero(); self.in_channels * s * jl];
        for o in 0..self.out_channels {
            let go = &gy[o * ol..(o + 1) * ol];
            for c in 0..self.in_channels {
                let wk = &w[(o * self.in_channels + c) * k_len..][..k_len];
                let base = c * s * jl;
                for (k, &wv) in wk.iter().enumerate() {
                    let off = base + (k % s) * jl + k / s;
                    axpy(&mut phases[off..off + ol], wv, go);
                }
            }
        }
        self.gather_phases(&phases, gx);
    }

    /// `gw += ∂⟨gy, corr(x, w)⟩/∂w`.
    pub fn backward_weights<T: Scalar>(&self, x: &[T], gy: &[T], gw: &mut [T]) {
        debug_assert_eq!(gw.len(), self.out_channels * self.in_channels * self.kernel);
        let phases = self.scatter_phases(x);
        let (s, jl, k_len, ol) = (self.stride, self.phase_len(), self.kernel, self.out_len);
        for o in 0..self.out_channels {
            let go = &gy[o * ol..(o + 1) * ol];
            for c in 0..self.in_channels {
                let gk = &mut gw[(o * self.in_channels + c) * k_len..][..k_len];
                let base = c * s * jl;
                for (k, g) in gk.iter_mut().enumerate() {
                    let off = base + (k % s) * jl + k / s;
                    *g += dot(go, &phases[off..off + ol]);
                }
            }
        }
    }
}

#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with eight independent partial sums (fixed order, so results
/// are reproducible, and wide enough for the compiler to vectorize).
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for i in 0..chunks {
        let (ac, bc) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += ac[l] * bc[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
