use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    dense_backward_into, dense_forward, op_conv_stack, op_conv_stack_backward, op_tconv_stack,
    op_tconv_stack_backward, power_stack, power_stack_backward, KernelRef,
};
use crate::nn::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::scalar::Scalar;
use crate::tensor::Buffer;

/// Where one layer's weights and bias live in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

/// Parameter offsets in spec order: layer 0 weights, layer 0 bias, layer 1 …
pub fn param_layout(spec: &NetworkSpec) -> Vec<ParamSlot> {
    let mut at = 0;
    spec.layers
        .iter()
        .map(|l| {
            let w = at..at + l.weight_count();
            let b = w.end..w.end + l.out_channels;
            at = b.end;
            ParamSlot { weights: w, bias: b }
        })
        .collect()
}

/// A network description together with its flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layout: Vec<ParamSlot>,
    shapes: Vec<(usize, usize)>,
    params: Vec<T>,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    input_shape: (usize, usize),
    layers: Vec<LayerTape<T>>,
}

#[derive(Clone, Debug)]
struct LayerTape<T> {
    /// Power stack for operational layers, flattened input for dense ones.
    input: Buffer<T>,
    output: Buffer<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &Buffer<T> {
        &self.layers.last().expect("non-empty network").output
    }
}

impl<T: Scalar> Network<T> {
    pub fn from_params(spec: NetworkSpec, params: Vec<T>) -> Result<Self> {
        let shapes = spec.shapes()?;
        let layout = param_layout(&spec);
        let expected = layout.last().map_or(0, |s| s.bias.end);
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "spec needs {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            spec,
            layout,
            shapes,
            params,
        })
    }

    /// Uniform initialization of weights and biases in `±sqrt(1 / fan_in)`,
    /// where `fan_in = in·K·Q` for operational layers, `out·K` for transposed
    /// ones and `in` for dense ones.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let count = spec.count_params()?;
        let mut params = vec![T::zero(); count];
        for (layer, slot) in spec.layers.iter().zip(param_layout(&spec)) {
            let fan_in = match layer.kind {
                LayerKind::Dense => layer.in_channels,
                LayerKind::OpConv => layer.in_channels * layer.kernel * layer.order,
                LayerKind::OpTConv => layer.out_channels * layer.kernel,
            };
            let bound = (1.0 / fan_in as f64).sqrt();
            for p in &mut params[slot.weights.start..slot.bias.end] {
                *p = T::c(rng.gen_range(-bound..bound));
            }
        }
        Self::from_params(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn layout(&self) -> &[ParamSlot] {
        &self.layout
    }

    /// Output shape of each layer.
    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.spec.input_channels, self.spec.input_len)
    }

    pub fn output_shape(&self) -> (usize, usize) {
        *self.shapes.last().expect("non-empty")
    }

    fn kernel(&self, i: usize) -> KernelRef<'_, T> {
        let l = &self.spec.layers[i];
        let s = &self.layout[i];
        KernelRef {
            weights: &self.params[s.weights.clone()],
            bias: &self.params[s.bias.clone()],
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            size: l.kernel,
            order: l.order,
        }
    }

    fn layer_input(&self, i: usize, x: &Buffer<T>, outputs: &[Buffer<T>]) -> Result<Buffer<T>> {
        let prev = if i == 0 { x } else { &outputs[i - 1] };
        match self.spec.skip_into(i) {
            Some(from) => prev.concat_channels(&outputs[from]),
            None => Ok(prev.clone()),
        }
    }

    fn run(&self, x: &Buffer<T>, keep: bool) -> Result<(Buffer<T>, Option<Tape<T>>)> {
        if x.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape(),
                x.shape()
            )));
        }
        let mut outputs: Vec<Buffer<T>> = Vec::with_capacity(self.spec.layers.len());
        let mut tapes = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let input = self.layer_input(i, x, &outputs)?;
            let (mut y, saved) = forward_layer(layer, &self.kernel(i), input)?;
            layer.activation.apply(&mut y);
            if keep {
                tapes.push(LayerTape {
                    input: saved,
                    output: y.clone(),
                });
            }
            outputs.push(y);
        }
        let out = outputs.pop().expect("non-empty");
        let tape = keep.then(|| Tape {
            input_shape: x.shape(),
            layers: tapes,
        });
        Ok((out, tape))
    }

    /// Pure forward pass.
    pub fn forward(&self, x: &Buffer<T>) -> Result<Buffer<T>> {
        Ok(self.run(x, false)?.0)
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward_tape(&self, x: &Buffer<T>) -> Result<Tape<T>> {
        Ok(self.run(x, true)?.1.expect("tape requested"))
    }

    /// Backpropagate `grad_out` through the taped pass.
    ///
    /// Parameter gradients are added into `grads` (so a batch can be summed in
    /// a fixed order); the gradient with respect to the network input is returned.
    pub fn backward(&self, tape: &Tape<T>, grad_out: &Buffer<T>, grads: &mut [T]) -> Result<Buffer<T>> {
        if grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer holds {}, network has {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        if grad_out.shape() != self.output_shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_out.shape(),
                self.output_shape()
            )));
        }
        let n = self.spec.layers.len();
        let mut pending: Vec<Option<Buffer<T>>> = vec![None; n];
        pending[n - 1] = Some(grad_out.clone());
        let mut grad_input = None;
        for i in (0..n).rev() {
            let layer = &self.spec.layers[i];
            let lt = &tape.layers[i];
            let mut g = pending[i]
                .take()
                .unwrap_or_else(|| Buffer::zeros(lt.output.rows(), lt.output.cols()));
            layer.activation.backward(&lt.output, &mut g);
            let slot = &self.layout[i];
            let (gw, gb) = split_grads(grads, slot);
            let g_in = backward_layer(layer, &self.kernel(i), &lt.input, &g, gw, gb)?;
            let prev_shape = if i == 0 { tape.input_shape } else { self.shapes[i - 1] };
            let (g_prev, g_skip) = match self.spec.skip_into(i) {
                Some(from) => {
                    let (a, b) = g_in.split_channels(prev_shape.0)?;
                    (a, Some((from, b)))
                }
                None => (g_in, None),
            };
            if let Some((from, b)) = g_skip {
                accumulate(&mut pending[from], b)?;
            }
            if i == 0 {
                grad_input = Some(g_prev);
            } else {
                accumulate(&mut pending[i - 1], g_prev)?;
            }
        }
        Ok(grad_input.expect("layer 0 visited"))
    }
}

fn split_grads<'g, T>(grads: &'g mut [T], slot: &ParamSlot) -> (&'g mut [T], &'g mut [T]) {
    let (head, tail) = grads.split_at_mut(slot.bias.start);
    (&mut head[slot.weights.clone()], &mut tail[..slot.bias.len()])
}

fn accumulate<T: Scalar>(slot: &mut Option<Buffer<T>>, g: Buffer<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn forward_layer<T: Scalar>(layer: &LayerSpec, k: &KernelRef<'_, T>, input: Buffer<T>) -> Result<(Buffer<T>, Buffer<T>)> {
    match layer.kind {
        LayerKind::OpConv => {
            let stack = power_stack(&input, layer.order);
            let y = op_conv_stack(&stack, k, layer.stride, layer.padding)?;
            Ok((y, stack))
        }
        LayerKind::OpTConv => {
            let stack = power_stack(&input, layer.order);
            let y = op_tconv_stack(&stack, k, layer.stride, layer.padding, layer.output_padding)?;
            Ok((y, stack))
        }
        LayerKind::Dense => {
            let y = dense_forward(&input, k.weights, k.bias)?;
            Ok((y, input))
        }
    }
}

fn backward_layer<T: Scalar>(
    layer: &LayerSpec,
    k: &KernelRef<'_, T>,
    saved: &Buffer<T>,
    g: &Buffer<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Result<Buffer<T>> {
    match layer.kind {
        LayerKind::OpConv => {
            let gs = op_conv_stack_backward(saved, k, layer.stride, layer.padding, g, gw, gb)?;
            Ok(power_stack_backward(saved, &gs, layer.order))
        }
        LayerKind::OpTConv => {
            let gs = op_tconv_stack_backward(
                saved,
                k,
                layer.stride,
                layer.padding,
                layer.output_padding,
                g,
                gw,
                gb,
            )?;
            Ok(power_stack_backward(saved, &gs, layer.order))
        }
        LayerKind::Dense => dense_backward_into(saved, k.weights, g, gw, gb),
    }
}

/// Free-function form of [`Network::forward`].
pub fn forward_network<T: Scalar>(net: &Network<T>, x: &Buffer<T>) -> Result<Buffer<T>> {
    net.forward(x)
}

/// Forward and backward in one call; returns the parameter gradients and
/// the input gradient for a given output gradient.
pub fn backward_network<T: Scalar>(
    net: &Network<T>,
    x: &Buffer<T>,
    grad_out: &Buffer<T>,
) -> Result<(Vec<T>, Buffer<T>)> {
    let tape = net.forward_tape(x)?;
    let mut grads = vec![T::zero(); net.num_params()];
    let gx = net.backward(&tape, grad_out, &mut grads)?;
    Ok((grads, gx))
}
