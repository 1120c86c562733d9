//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use rand::Rng;

/// Direct evaluation of the operational correlation, weights `[out][in][q][k]`.
pub fn naive_op_conv(
    x: &[Vec<f64>],
    w: &[f64],
    b: &[f64],
    out: usize,
    k: usize,
    q: usize,
    stride: usize,
    pad: usize,
) -> Vec<Vec<f64>> {
    let cin = x.len();
    let l = x[0].len();
    let n = (l + 2 * pad - k) / stride + 1;
    let mut y = vec![vec![0.0; n]; out];
    for o in 0..out {
        for m in 0..n {
            let mut acc = b[o];
            for i in 0..cin {
                for qq in 0..q {
                    for r in 0..k {
                        let pos = (m * stride + r) as isize - pad as isize;
                        if pos < 0 || pos >= l as isize {
                            continue;
                        }
                        let v = x[i][pos as usize];
                        acc += w[((o * cin + i) * q + qq) * k + r] * v.powi(qq as i32 + 1);
                    }
                }
            }
            y[o][m] = acc;
        }
    }
    y
}

/// Direct scatter form of the transposed operational layer, weights `[in][q][out][k]`.
pub fn naive_op_tconv(
    x: &[Vec<f64>],
    w: &[f64],
    b: &[f64],
    out: usize,
    k: usize,
    q: usize,
    stride: usize,
    pad: usize,
    outpad: isize,
) -> Vec<Vec<f64>> {
    let cin = x.len();
    let l = x[0].len();
    let n = ((l - 1) * stride + k) as isize - 2 * pad as isize + outpad;
    let n = n as usize;
    let mut y: Vec<Vec<f64>> = (0..out).map(|o| vec![b[o]; n]).collect();
    for i in 0..cin {
        for qq in 0..q {
            for o in 0..out {
                for m in 0..l {
                    for r in 0..k {
                        let pos = (m * stride + r) as isize - pad as isize;
                        if pos < 0 || pos >= n as isize {
                            continue;
                        }
                        y[o][pos as usize] += w[((i * q + qq) * out + o) * k + r] * x[i][m].powi(qq as i32 + 1);
                    }
                }
            }
        }
    }
    y
}

/// Plain (textbook) multi-channel convolution, as a strided correlation with
/// zero padding; weights `[out][in][k]`.
pub fn plain_conv(x: &[Vec<f64>], w: &[f64], b: &[f64], out: usize, k: usize, stride: usize, pad: usize) -> Vec<Vec<f64>> {
    let cin = x.len();
    let l = x[0].len();
    let mut padded = vec![vec![0.0; l + 2 * pad]; cin];
    for i in 0..cin {
        padded[i][pad..pad + l].copy_from_slice(&x[i]);
    }
    let n = (l + 2 * pad - k) / stride + 1;
    (0..out)
        .map(|o| {
            (0..n)
                .map(|m| {
                    b[o] + (0..cin)
                        .map(|i| (0..k).map(|r| w[(o * cin + i) * k + r] * padded[i][m * stride + r]).sum::<f64>())
                        .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// O(N²) DFT.
pub fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..n {
        for (t, &v) in x.iter().enumerate() {
            let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            re[k] += v * a.cos();
            im[k] += v * a.sin();
        }
    }
    (re, im)
}

/// Spectrogram by the direct DFT of every symmetric-Hann-windowed frame.
pub fn naive_spectrogram(x: &[f64], win: usize, hop: usize) -> Vec<Vec<f64>> {
    let w: Vec<f64> = (0..win)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos()))
        .collect();
    let frames = (x.len() - win) / hop + 1;
    (0..frames)
        .map(|f| {
            let frame: Vec<f64> = (0..win).map(|n| x[f * hop + n] * w[n]).collect();
            let (re, im) = naive_dft(&frame);
            (0..win / 2 + 1).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
        })
        .collect()
}

/// Central finite-difference gradient of `f` at `p`.
pub fn numeric_grad(p: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + h;
            let a = f(&q);
            q[i] = p[i] - h;
            let b = f(&q);
            q[i] = p[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

/// Worst `|a − n| / max(|a|, |n|, floor)` over all entries.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lim: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-lim..lim)).collect()
}

pub fn rows(rng: &mut impl Rng, c: usize, l: usize, lim: f64) -> Vec<Vec<f64>> {
    (0..c).map(|_| uniform(rng, l, lim)).collect()
}

pub fn flat(x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().flatten().copied().collect()
}
