//! Network descriptions and their canonical text form.
//!
//! ```text
//! input channels=1 length=4096
//! op_conv in=1 out=16 k=81 q=3 stride=8 pad=0 act=tanh
//! dense in=32 out=2 act=tanh
//! skip from=3 to=5
//! ```
//!
//! A `skip from=a to=b` line feeds layer `b` the channel concatenation of
//! layer `b−1`'s output (or the network input when `b = 0`) followed by
//! layer `a`'s output.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::layers::{conv_out_len, tconv_out_len, Activation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    OpConv,
    OpTConv,
    Dense,
}

impl LayerKind {
    fn name(self) -> &'static str {
        match self {
            LayerKind::OpConv => "op_conv",
            LayerKind::OpTConv => "op_tconv",
            LayerKind::Dense => "dense",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Input channels; for dense layers, the flattened input length.
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub order: usize,
    pub stride: usize,
    pub padding: usize,
    /// Transposed layers only: signed adjustment of the right edge
    /// (positive keeps extra scattered samples, negative trims).
    pub output_padding: isize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn op_conv(in_channels: usize, out_channels: usize, kernel: usize, order: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::OpConv,
            in_channels,
            out_channels,
            kernel,
            order,
            stride,
            padding,
            output_padding: 0,
            activation: Activation::Tanh,
        }
    }

    pub fn op_tconv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        order: usize,
        stride: usize,
        padding: usize,
        output_padding: isize,
    ) -> Self {
        Self {
            kind: LayerKind::OpTConv,
            output_padding,
            ..Self::op_conv(in_channels, out_channels, kernel, order, stride, padding)
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Self {
            kind: LayerKind::Dense,
            in_channels: in_features,
            out_channels: out_features,
            kernel: 1,
            order: 1,
            stride: 1,
            padding: 0,
            output_padding: 0,
            activation: Activation::Tanh,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.in_channels * self.out_channels,
            _ => self.in_channels * self.out_channels * self.kernel * self.order,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    /// Output `(channels, length)` for an input of `(channels, length)`.
    pub fn output_shape(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        let (c, l) = input;
        match self.kind {
            LayerKind::Dense => {
                if c * l != self.in_channels {
                    return Err(Error::InvalidSpec(format!(
                        "dense layer expects {} inputs, got {c}x{l}",
                        self.in_channels
                    )));
                }
                Ok((self.out_channels, 1))
            }
            LayerKind::OpConv | LayerKind::OpTConv => {
                if self.kernel == 0 || self.order == 0 || self.stride == 0 {
                    return Err(Error::InvalidSpec(
                        "kernel, order and stride must be at least 1".into(),
                    ));
                }
                if c != self.in_channels {
                    return Err(Error::InvalidSpec(format!(
                        "{} layer expects {} channels, got {c}",
                        self.kind.name(),
                        self.in_channels
                    )));
                }
                let len = if self.kind == LayerKind::OpConv {
                    conv_out_len(l, self.kernel, self.stride, self.padding)
                } else {
                    tconv_out_len(l, self.kernel, self.stride, self.padding, self.output_padding)
                }
                .map_err(|e| Error::InvalidSpec(e.to_string()))?;
                Ok((self.out_channels, len))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Skip {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_len: usize,
    pub layers: Vec<LayerSpec>,
    pub skips: Vec<Skip>,
}

impl NetworkSpec {
    pub fn new(input_channels: usize, input_len: usize) -> Self {
        Self {
            input_channels,
            input_len,
            layers: Vec::new(),
            skips: Vec::new(),
        }
    }

    pub fn push(mut self, layer: LayerSpec) -> Self {
        self.layers.push(layer);
        self
    }

    pub fn skip(mut self, from: usize, to: usize) -> Self {
        self.skips.push(Skip { from, to });
        self
    }

    /// Layer whose output is concatenated onto layer `to`'s input, if any.
    pub fn skip_into(&self, to: usize) -> Option<usize> {
        self.skips.iter().find(|s| s.to == to).map(|s| s.from)
    }

    /// Output shape of every layer; fails if the chain does not fit.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        for (i, s) in self.skips.iter().enumerate() {
            if s.from >= s.to || s.to >= self.layers.len() {
                return Err(Error::InvalidSpec(format!(
                    "skip {} -> {} does not point forward inside the network",
                    s.from, s.to
                )));
            }
            if self.skips[..i].iter().any(|o| o.to == s.to) {
                return Err(Error::InvalidSpec(format!(
                    "layer {} has more than one skip input",
                    s.to
                )));
            }
        }
        let mut shapes: Vec<(usize, usize)> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut input = if i == 0 {
                (self.input_channels, self.input_len)
            } else {
                shapes[i - 1]
            };
            if let Some(from) = self.skip_into(i) {
                let extra = shapes[from];
                if extra.1 != input.1 {
                    return Err(Error::InvalidSpec(format!(
                        "skip {from} -> {i}: length {} does not match {}",
                        extra.1, input.1
                    )));
                }
                input.0 += extra.0;
            }
            let out = layer
                .output_shape(input)
                .map_err(|e| Error::InvalidSpec(format!("layer {i}: {e}")))?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<(usize, usize)> {
        Ok(*self.shapes()?.last().expect("non-empty"))
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    /// Total trainable parameters, after checking the shape chain.
    pub fn count_params(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.layers.iter().map(LayerSpec::param_count).sum())
    }
}

/// Closed-form parameter count; fails on specs whose shapes do not chain.
pub fn count_params(spec: &NetworkSpec) -> Result<usize> {
    spec.count_params()
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "input channels={} length={}",
            self.input_channels, self.input_len
        )?;
        for l in &self.layers {
            match l.kind {
                LayerKind::Dense => writeln!(
                    f,
                    "dense in={} out={} act={}",
                    l.in_channels,
                    l.out_channels,
                    l.activation.name()
                )?,
                LayerKind::OpConv => writeln!(
                    f,
                    "op_conv in={} out={} k={} q={} stride={} pad={} act={}",
                    l.in_channels,
                    l.out_channels,
                    l.kernel,
                    l.order,
                    l.stride,
                    l.padding,
                    l.activation.name()
                )?,
                LayerKind::OpTConv => writeln!(
                    f,
                    "op_tconv in={} out={} k={} q={} stride={} pad={} outpad={} act={}",
                    l.in_channels,
                    l.out_channels,
                    l.kernel,
                    l.order,
                    l.stride,
                    l.padding,
                    l.output_padding,
                    l.activation.name()
                )?,
            }
        }
        for s in &self.skips {
            writeln!(f, "skip from={} to={}", s.from, s.to)?;
        }
        Ok(())
    }
}

struct Fields<'a> {
    line: usize,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, tokens: &[&'a str]) -> Result<Self> {
        let pairs = tokens
            .iter()
            .map(|t| {
                t.split_once('=')
                    .ok_or_else(|| Error::InvalidSpec(format!("line {line}: expected key=value, got `{t}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { line, pairs })
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidSpec(format!("line {}: missing `{key}`", self.line)))
    }

    fn get<V: FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| Error::InvalidSpec(format!("line {}: bad value `{raw}` for `{key}`", self.line)))
    }

    fn activation(&self) -> Result<Activation> {
        let raw = self.raw("act")?;
        Activation::parse(raw)
            .ok_or_else(|| Error::InvalidSpec(format!("line {}: unknown activation `{raw}`", self.line)))
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut spec: Option<NetworkSpec> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let fields = Fields::parse(n + 1, &tokens[1..])?;
            if tokens[0] == "input" {
                if spec.is_some() {
                    return Err(Error::InvalidSpec(format!("line {}: duplicate input line", n + 1)));
                }
                spec = Some(NetworkSpec::new(fields.get("channels")?, fields.get("length")?));
                continue;
            }
            let s = spec
                .as_mut()
                .ok_or_else(|| Error::InvalidSpec("spec must start with an input line".into()))?;
            match tokens[0] {
                "op_conv" => s.layers.push(
                    LayerSpec::op_conv(
                        fields.get("in")?,
                        fields.get("out")?,
                        fields.get("k")?,
                        fields.get("q")?,
                        fields.get("stride")?,
                        fields.get("pad")?,
                    )
                    .with_activation(fields.activation()?),
                ),
                "op_tconv" => s.layers.push(
                    LayerSpec::op_tconv(
                        fields.get("in")?,
                        fields.get("out")?,
                        fields.get("k")?,
                        fields.get("q")?,
                        fields.get("stride")?,
                        fields.get("pad")?,
                        fields.get("outpad")?,
                    )
                    .with_activation(fields.activation()?),
                ),
                "dense" => s.layers.push(
                    LayerSpec::dense(fields.get("in")?, fields.get("out")?).with_activation(fields.activation()?),
                ),
                "skip" => s.skips.push(Skip {
                    from: fields.get("from")?,
                    to: fields.get("to")?,
                }),
                other => {
                    return Err(Error::InvalidSpec(format!(
                        "line {}: unknown entry `{other}`",
                        n + 1
                    )))
                }
            }
        }
        let spec = spec.ok_or_else(|| Error::InvalidSpec("empty spec".into()))?;
        spec.validate()?;
        Ok(spec)
    }
}
