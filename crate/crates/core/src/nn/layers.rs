//! Operational (Self-ONN) layers with hand-derived gradients.
//!
//! A generative neuron replaces each kernel tap's product `w·x` by a
//! Q-term polynomial `Σ_q w_q·x^q`. Stacking the powers of the input turns
//! that into an ordinary correlation over `in_channels·Q` channels, which is
//! how both directions are computed here.
//!
//! Weight layouts (flat, row-major):
//! - operational conv: `[out][in][q][k]`
//! - operational transposed conv: `[in][q][out][k]`
//! - dense: `[out][in]`
//!
//! With these layouts a transposed layer mapping `a → b` channels and a conv
//! layer mapping `b → a` channels share the same weight array, which is the
//! pairing under which the two are adjoint at `Q = 1`.

use crate::error::{Error, Result};
use crate::nn::kernels::Correlation;
use crate::scalar::Scalar;
use crate::tensor::Buffer;

/// Borrowed view of one operational layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct KernelRef<'a, T> {
    pub weights: &'a [T],
    pub bias: &'a [T],
    pub in_channels: usize,
    pub out_channels: usize,
    /// Taps per kernel (`K`).
    pub size: usize,
    /// Polynomial order (`Q`).
    pub order: usize,
}

/// Owned operational kernel: `out·in·K·Q` weights plus one bias per output.
#[derive(Clone, Debug, PartialEq)]
pub struct OperationalKernel<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
    pub order: usize,
}

impl<T: Scalar> OperationalKernel<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, size: usize, order: usize) -> Self {
        Self {
            weights: vec![T::zero(); in_channels * out_channels * size * order],
            bias: vec![T::zero(); out_channels],
            in_channels,
            out_channels,
            size,
            order,
        }
    }

    pub fn view(&self) -> KernelRef<'_, T> {
        KernelRef {
            weights: &self.weights,
            bias: &self.bias,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            size: self.size,
            order: self.order,
        }
    }

    /// Conv-layout weight at `(out, in, tap, q)` with `q` starting at 1.
    pub fn conv_weight_mut(&mut self, o: usize, i: usize, k: usize, q: usize) -> &mut T {
        let idx = ((o * self.in_channels + i) * self.order + (q - 1)) * self.size + k;
        &mut self.weights[idx]
    }
}

impl<'a, T: Scalar> KernelRef<'a, T> {
    fn validate(&self, x: &Buffer<T>) -> Result<()> {
        if self.size == 0 || self.order == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel size {} and order {} must be at least 1",
                self.size, self.order
            )));
        }
        if self.weights.len() != self.in_channels * self.out_channels * self.size * self.order {
            return Err(Error::Shape(format!(
                "kernel holds {} weights, expected {}",
                self.weights.len(),
                self.in_channels * self.out_channels * self.size * self.order
            )));
        }
        if self.bias.len() != self.out_channels {
            return Err(Error::Shape(format!(
                "kernel holds {} biases for {} outputs",
                self.bias.len(),
                self.out_channels
            )));
        }
        if x.rows() != self.in_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, kernel expects {}",
                x.rows(),
                self.in_channels
            )));
        }
        Ok(())
    }
}

/// Output length of a strided, zero-padded correlation.
pub fn conv_out_len(in_len: usize, size: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let padded = in_len + 2 * padding;
    if padded < size {
        return Err(Error::Shape(format!(
            "kernel of {size} taps does not fit a padded length of {padded}"
        )));
    }
    Ok((padded - size) / stride + 1)
}

/// Output length of a transposed correlation:
/// `(L − 1)·stride − 2·padding + K + output_padding`.
pub fn tconv_out_len(
    in_len: usize,
    size: usize,
    stride: usize,
    padding: usize,
    output_padding: isize,
) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if in_len == 0 {
        return Err(Error::Shape("transposed layer on an empty input".into()));
    }
    let n = ((in_len - 1) * stride + size) as isize - 2 * padding as isize + output_padding;
    if n < 1 {
        return Err(Error::Shape(format!(
            "transposed layer output length {n} is not positive"
        )));
    }
    Ok(n as usize)
}

/// `[x, x², …, x^Q]` per input channel, stacked as `in·Q` rows.
pub fn power_stack<T: Scalar>(x: &Buffer<T>, order: usize) -> Buffer<T> {
    let (c, l) = x.shape();
    let mut out = Buffer::zeros(c * order, l);
    for i in 0..c {
        let xi = x.channel(i);
        out.channel_mut(i * order).copy_from_slice(xi);
        for q in 1..order {
            let (done, rest) = out.as_mut_slice().split_at_mut((i * order + q) * l);
            let prev = &done[(i * order + q - 1) * l..];
            for ((dst, &p), &v) in rest[..l].iter_mut().zip(prev).zip(xi) {
                *dst = p * v;
            }
        }
    }
    out
}

/// Chain the gradient of the power stack back to `x`:
/// `∂/∂x = Σ_q q·x^{q−1}·g_q`.
pub fn power_stack_backward<T: Scalar>(stack: &Buffer<T>, grad_stack: &Buffer<T>, order: usize) -> Buffer<T> {
    let (cq, l) = stack.shape();
    let c = cq / order;
    let mut gx = Buffer::zeros(c, l);
    for i in 0..c {
        let gi = gx.channel_mut(i);
        gi.copy_from_slice(grad_stack.channel(i * order));
        for q in 1..order {
            let coef = T::of_usize(q + 1);
            let lower = stack.channel(i * order + q - 1);
            let g = grad_stack.channel(i * order + q);
            for ((dst, &p), &gv) in gi.iter_mut().zip(lower).zip(g) {
                *dst += coef * p * gv;
            }
        }
    }
    gx
}

fn add_bias<T: Scalar>(y: &mut Buffer<T>, bias: &[T]) {
    for (o, &b) in bias.iter().enumerate() {
        for v in y.channel_mut(o) {
            *v += b;
        }
    }
}

fn bias_grad<T: Scalar>(grad_out: &Buffer<T>) -> Vec<T> {
    (0..grad_out.rows())
        .map(|o| grad_out.channel(o).iter().copied().sum())
        .collect()
}

fn conv_geometry<T: Scalar>(k: &KernelRef<'_, T>, in_len: usize, stride: usize, padding: usize) -> Result<Correlation> {
    Ok(Correlation {
        in_channels: k.in_channels * k.order,
        out_channels: k.out_channels,
        kernel: k.size,
        stride,
        padding,
        in_len,
        out_len: conv_out_len(in_len, k.size, stride, padding)?,
    })
}

fn tconv_geometry<T: Scalar>(
    k: &KernelRef<'_, T>,
    in_len: usize,
    stride: usize,
    padding: usize,
    output_padding: isize,
) -> Result<Correlation> {
    // The correlation runs from the transposed layer's output back to its input.
    Ok(Correlation {
        in_channels: k.out_channels,
        out_channels: k.in_channels * k.order,
        kernel: k.size,
        stride,
        padding,
        in_len: tconv_out_len(in_len, k.size, stride, padding, output_padding)?,
        out_len: in_len,
    })
}

/// Operational conv on a precomputed power stack (pre-activation output).
pub(crate) fn op_conv_stack<T: Scalar>(
    stack: &Buffer<T>,
    k: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
) -> Result<Buffer<T>> {
    let g = conv_geometry(k, stack.cols(), stride, padding)?;
    let mut y = Buffer::zeros(g.out_channels, g.out_len);
    g.forward(stack.as_slice(), k.weights, y.as_mut_slice());
    add_bias(&mut y, k.bias);
    Ok(y)
}

/// Returns the gradient with respect to the power stack; accumulates weight
/// and bias gradients into `gw`, `gb`.
pub(crate) fn op_conv_stack_backward<T: Scalar>(
    stack: &Buffer<T>,
    k: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
    grad_out: &Buffer<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Result<Buffer<T>> {
    let g = conv_geometry(k, stack.cols(), stride, padding)?;
    if grad_out.shape() != (g.out_channels, g.out_len) {
        return Err(Error::Shape(format!(
            "conv backward: gradient {:?}, output {:?}",
            grad_out.shape(),
            (g.out_channels, g.out_len)
        )));
    }
    let mut gs = Buffer::zeros(stack.rows(), stack.cols());
    g.backward_data(grad_out.as_slice(), k.weights, gs.as_mut_slice());
    g.backward_weights(stack.as_slice(), grad_out.as_slice(), gw);
    for (b, v) in gb.iter_mut().zip(bias_grad(grad_out)) {
        *b += v;
    }
    Ok(gs)
}

pub(crate) fn op_tconv_stack<T: Scalar>(
    stack: &Buffer<T>,
    k: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
    output_padding: isize,
) -> Result<Buffer<T>> {
    let g = tconv_geometry(k, stack.cols(), stride, padding, output_padding)?;
    let mut y = Buffer::zeros(g.in_channels, g.in_len);
    g.backward_data(stack.as_slice(), k.weights, y.as_mut_slice());
    add_bias(&mut y, k.bias);
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn op_tconv_stack_backward<T: Scalar>(
    stack: &Buffer<T>,
    k: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
    output_padding: isize,
    grad_out: &Buffer<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Result<Buffer<T>> {
    let g = tconv_geometry(k, stack.cols(), stride, padding, output_padding)?;
    if grad_out.shape() != (g.in_channels, g.in_len) {
        return Err(Error::Shape(format!(
            "transposed backward: gradient {:?}, output {:?}",
            grad_out.shape(),
            (g.in_channels, g.in_len)
        )));
    }
    let mut gs = Buffer::zeros(stack.rows(), stack.cols());
    g.forward(grad_out.as_slice(), k.weights, gs.as_mut_slice());
    g.backward_weights(grad_out.as_slice(), stack.as_slice(), gw);
    for (b, v) in gb.iter_mut().zip(bias_grad(grad_out)) {
        *b += v;
    }
    Ok(gs)
}

/// Gradients of one layer: input, weights, bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub input: Buffer<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// `y(m) = b + Σ_i Σ_q Σ_r w(r, q)·x_i(m·stride + r − padding)^q`.
pub fn op_conv1d_forward<T: Scalar>(
    x: &Buffer<T>,
    kernel: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
) -> Result<Buffer<T>> {
    kernel.validate(x)?;
    op_conv_stack(&power_stack(x, kernel.order), kernel, stride, padding)
}

pub fn op_conv1d_backward<T: Scalar>(
    x: &Buffer<T>,
    kernel: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
    grad_out: &Buffer<T>,
) -> Result<LayerGrads<T>> {
    kernel.validate(x)?;
    let stack = power_stack(x, kernel.order);
    let mut weights = vec![T::zero(); kernel.weights.len()];
    let mut bias = vec![T::zero(); kernel.out_channels];
    let gs = op_conv_stack_backward(&stack, kernel, stride, padding, grad_out, &mut weights, &mut bias)?;
    Ok(LayerGrads {
        input: power_stack_backward(&stack, &gs, kernel.order),
        weights,
        bias,
    })
}

/// Transposed operational conv: every power of the input is scattered with
/// the transposed index pattern and the results are summed over `q`.
pub fn op_tconv1d_forward<T: Scalar>(
    x: &Buffer<T>,
    kernel: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
    output_padding: isize,
) -> Result<Buffer<T>> {
    kernel.validate(x)?;
    op_tconv_stack(&power_stack(x, kernel.order), kernel, stride, padding, output_padding)
}

pub fn op_tconv1d_backward<T: Scalar>(
    x: &Buffer<T>,
    kernel: &KernelRef<'_, T>,
    stride: usize,
    padding: usize,
    output_padding: isize,
    grad_out: &Buffer<T>,
) -> Result<LayerGrads<T>> {
    kernel.validate(x)?;
    let stack = power_stack(x, kernel.order);
    let mut weights = vec![T::zero(); kernel.weights.len()];
    let mut bias = vec![T::zero(); kernel.out_channels];
    let gs = op_tconv_stack_backward(
        &stack,
        kernel,
        stride,
        padding,
        output_padding,
        grad_out,
        &mut weights,
        &mut bias,
    )?;
    Ok(LayerGrads {
        input: power_stack_backward(&stack, &gs, kernel.order),
        weights,
        bias,
    })
}

/// `y = W·x + b` on the flattened input; the result is `out × 1`.
pub fn dense_forward<T: Scalar>(x: &Buffer<T>, weights: &[T], bias: &[T]) -> Result<Buffer<T>> {
    let n_in = x.len();
    let n_out = bias.len();
    if weights.len() != n_in * n_out {
        return Err(Error::Shape(format!(
            "dense layer holds {} weights for {n_in} inputs and {n_out} outputs",
            weights.len()
        )));
    }
    let xs = x.as_slice();
    let data = (0..n_out)
        .map(|o| bias[o] + crate::nn::kernels::dot(&weights[o * n_in..(o + 1) * n_in], xs))
        .collect();
    Buffer::from_vec(n_out, 1, data)
}

/// Accumulates weight/bias gradients; returns the input gradient shaped like `x`.
pub(crate) fn dense_backward_into<T: Scalar>(
    x: &Buffer<T>,
    weights: &[T],
    grad_out: &Buffer<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Result<Buffer<T>> {
    let n_in = x.len();
    let n_out = gb.len();
    if grad_out.len() != n_out || weights.len() != n_in * n_out {
        return Err(Error::Shape(format!(
            "dense backward: gradient of {} for {n_out} outputs",
            grad_out.len()
        )));
    }
    let mut gx = Buffer::zeros(x.rows(), x.cols());
    for (o, &g) in grad_out.as_slice().iter().enumerate() {
        gb[o] += g;
        crate::nn::kernels::axpy(&mut gw[o * n_in..(o + 1) * n_in], g, x.as_slice());
        crate::nn::kernels::axpy(gx.as_mut_slice(), g, &weights[o * n_in..(o + 1) * n_in]);
    }
    Ok(gx)
}

pub fn dense_backward<T: Scalar>(
    x: &Buffer<T>,
    weights: &[T],
    bias: &[T],
    grad_out: &Buffer<T>,
) -> Result<LayerGrads<T>> {
    let mut gw = vec![T::zero(); weights.len()];
    let mut gb = vec![T::zero(); bias.len()];
    let input = dense_backward_into(x, weights, grad_out, &mut gw, &mut gb)?;
    Ok(LayerGrads {
        input,
        weights: gw,
        bias: gb,
    })
}

/// Elementwise activation applied after a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: &mut Buffer<T>) {
        match self {
            Activation::Tanh => x.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => x
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = T::one() / (T::one() + (-*v).exp())),
            Activation::Identity => {}
        }
    }

    /// Multiply `grad` by the derivative expressed through the activation's output `y`.
    pub fn backward<T: Scalar>(self, y: &Buffer<T>, grad: &mut Buffer<T>) {
        match self {
            Activation::Tanh => {
                for (g, &v) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *g *= T::one() - v * v;
                }
            }
            Activation::Sigmoid => {
                for (g, &v) in grad.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *g *= v * (T::one() - v);
                }
            }
            Activation::Identity => {}
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "none" | "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

pub fn tanh_forward<T: Scalar>(x: &Buffer<T>) -> Buffer<T> {
    x.map(|v| v.tanh())
}

/// Backward of tanh given the forward input `x`.
pub fn tanh_backward<T: Scalar>(x: &Buffer<T>, grad_out: &Buffer<T>) -> Result<Buffer<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape("tanh backward: shape mismatch".into()));
    }
    let mut g = grad_out.clone();
    Activation::Tanh.backward(&tanh_forward(x), &mut g);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tap_second_order_example() {
        // 0.5 + 0.5² with unit weights on both powers.
        let x = Buffer::<f64>::row(vec![0.5]);
        let k = OperationalKernel {
            weights: vec![1.0, 1.0],
            bias: vec![0.0],
            in_channels: 1,
            out_channels: 1,
            size: 1,
            order: 2,
        };
        let y = op_conv1d_forward(&x, &k.view(), 1, 0).unwrap();
        assert_eq!(y.as_slice(), &[0.75]);
    }

    #[test]
    fn zero_input_yields_bias() {
        let x = Buffer::<f32>::zeros(2, 9);
        let mut k = OperationalKernel::<f32>::zeros(2, 3, 3, 3);
        k.weights.iter_mut().enumerate().for_each(|(i, w)| *w = (i as f32).sin());
        k.bias = vec![0.1, -0.2, 0.3];
        let y = op_conv1d_forward(&x, &k.view(), 2, 1).unwrap();
        for o in 0..3 {
            assert!(y.channel(o).iter().all(|&v| v == k.bias[o]));
        }
        let t = op_tconv1d_forward(&Buffer::zeros(3, 5), &k_t(&k), 2, 1, 0).unwrap();
        assert!(t.channel(0).iter().all(|&v| v == 0.5));
    }

    fn k_t(k: &OperationalKernel<f32>) -> KernelRef<'_, f32> {
        // Same array viewed as a 3→2 transposed layer with a constant bias.
        KernelRef {
            weights: &k.weights,
            bias: &[0.5, 0.5],
            in_channels: 3,
            out_channels: 2,
            size: 3,
            order: 3,
        }
    }

    #[test]
    fn length_formulas() {
        assert_eq!(tconv_out_len(64, 6, 2, 2, 0).unwrap(), 128);
        assert_eq!(tconv_out_len(128, 5, 2, 2, 1).unwrap(), 256);
        assert_eq!(conv_out_len(4096, 81, 8, 0).unwrap(), 502);
        assert_eq!(conv_out_len(4096, 5, 2, 2).unwrap(), 2048);
        assert!(conv_out_len(3, 5, 1, 0).is_err());
        assert!(tconv_out_len(1, 1, 1, 2, 0).is_err());
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Buffer::<f32>::zeros(3, 10);
        let k = OperationalKernel::<f32>::zeros(2, 1, 3, 1);
        assert!(matches!(
            op_conv1d_forward(&x, &k.view(), 1, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let x = Buffer::<f64>::from_f64(1, 6, &[0.1, -0.3, 0.5, 0.2, -0.9, 0.4]).unwrap();
        let mut k = OperationalKernel::<f64>::zeros(1, 2, 3, 2);
        k.weights.iter_mut().enumerate().for_each(|(i, w)| *w = 0.1 * i as f64);
        let g = Buffer::zeros(2, 4);
        let out = op_conv1d_backward(&x, &k.view(), 1, 0, &g).unwrap();
        assert!(out.input.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.weights.iter().all(|&v| v == 0.0));
        assert!(out.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_identity_and_bias() {
        let x = Buffer::<f64>::from_f64(3, 1, &[1.0, 2.0, 3.0]).unwrap();
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let y = dense_forward(&x, &eye, &[0.0; 3]).unwrap();
        assert_eq!(y.as_slice(), x.as_slice());
        let y = dense_forward(&Buffer::zeros(3, 1), &eye, &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(y.as_slice(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn tanh_basics() {
        let x = Buffer::<f64>::from_f64(1, 4, &[0.0, 50.0, -50.0, 0.3]).unwrap();
        let y = tanh_forward(&x);
        assert_eq!(y.as_slice()[0], 0.0);
        assert!(y.as_slice().iter().all(|v| v.abs() <= 1.0));
        let y32 = tanh_forward(&Buffer::<f32>::row(vec![3.0, -3.0]));
        assert!(y32.as_slice().iter().all(|v| v.abs() < 1.0));
    }
}
