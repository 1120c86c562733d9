use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::nn::{Activation, LayerSpec, NetworkSpec};

/// Encoder depth of the U-Net generator.
pub const GEN_DEPTH: usize = 5;

/// 1D operational U-Net.
///
/// Five stride-2 operational layers (K = 5, padding 2) halve the length down
/// to `L/32`; five stride-2 transposed layers bring it back. Decoder layer
/// `j > 0` sees the previous decoder output concatenated with the mirrored
/// encoder output. The K = 5 transposed layers carry one extra right-edge
/// sample so each exactly doubles its input; the last layer (K = 6) doubles
/// without adjustment.
pub fn build_generator(cfg: &GanConfig) -> Result<NetworkSpec> {
    cfg.validate()?;
    let (w, q) = (cfg.gen_width, cfg.order);
    let mut spec = NetworkSpec::new(1 + cfg.noise_channels, cfg.input_len);
    let mut ch = 1 + cfg.noise_channels;
    for _ in 0..GEN_DEPTH {
        spec = spec.push(LayerSpec::op_conv(ch, w, 5, q, 2, 2));
        ch = w;
    }
    spec = spec.push(LayerSpec::op_tconv(w, w, 5, q, 2, 2, 1));
    for j in 1..GEN_DEPTH {
        let mirror = GEN_DEPTH - 1 - j;
        let layer = if j == GEN_DEPTH - 1 {
            LayerSpec::op_tconv(2 * w, 1, 6, q, 2, 2, 0)
        } else {
            LayerSpec::op_tconv(2 * w, w, 5, q, 2, 2, 1)
        };
        spec = spec.push(layer).skip(mirror, GEN_DEPTH + j);
    }
    let out = spec.output_shape()?;
    if out != (1, cfg.input_len) {
        return Err(Error::InvalidSpec(format!(
            "generator maps length {} to {out:?}",
            cfg.input_len
        )));
    }
    Ok(spec)
}

pub const DISC_KERNELS: [usize; 6] = [4, 4, 4, 4, 4, 6];
pub const DISC_STRIDES: [usize; 6] = [4, 4, 4, 4, 4, 2];
pub const DISC_PADDING: [usize; 6] = [0, 0, 0, 0, 0, 2];

/// Conditional discriminator over the `(X, Y)` channel pair: six operational
/// layers ending in a sigmoid patch map.
pub fn build_discriminator(cfg: &GanConfig) -> Result<NetworkSpec> {
    cfg.validate()?;
    let (w, q) = (cfg.disc_width, cfg.order);
    let mut spec = NetworkSpec::new(2, cfg.input_len);
    let mut ch = 2;
    for i in 0..6 {
        let out = if i == 5 { 1 } else { w };
        let mut layer = LayerSpec::op_conv(ch, out, DISC_KERNELS[i], q, DISC_STRIDES[i], DISC_PADDING[i]);
        if i == 5 {
            layer = layer.with_activation(Activation::Sigmoid);
        }
        spec = spec.push(layer);
        ch = out;
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_shapes() {
        let spec = build_generator(&GanConfig::default()).unwrap();
        let shapes = spec.shapes().unwrap();
        let lens: Vec<usize> = shapes.iter().map(|s| s.1).collect();
        assert_eq!(lens, vec![2048, 1024, 512, 256, 128, 256, 512, 1024, 2048, 4096]);
        for s in &spec.skips {
            assert_eq!(shapes[s.from].1, shapes[s.to - 1].1);
        }
        assert_eq!(spec.input_channels, 2);
        assert_eq!(*shapes.last().unwrap(), (1, 4096));
    }

    #[test]
    fn discriminator_patch() {
        let spec = build_discriminator(&GanConfig::default()).unwrap();
        let lens: Vec<usize> = spec.shapes().unwrap().iter().map(|s| s.1).collect();
        assert_eq!(lens, vec![1024, 256, 64, 16, 4, 2]);
    }

    #[test]
    fn too_short_input_fails() {
        let cfg = GanConfig {
            input_len: 16,
            ..GanConfig::default()
        };
        assert!(build_generator(&cfg).is_err());
        assert!(build_discriminator(&cfg).is_err());
    }
}
