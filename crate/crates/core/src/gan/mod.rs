//! Conditional 1D operational GAN: architectures, composite generator loss,
//! adversarial training and fault synthesis.

pub mod arch;
pub mod loss;
pub mod train;

pub use arch::{build_discriminator, build_generator};
pub use loss::{composite_g_loss, composite_g_loss_grad, GLossGrad, GLossParts, SpectralLoss, SpectralTerm};
pub use train::{
    d_step_grads, discriminator_input, g_step_grads, generator_input, write_metrics_csv,
    select_checkpoint, synthesize_faults, train_opgan, Checkpoint, GanRun, IterationMetrics, PairPool,
    SelectionMode, TrainPair,
};

use crate::error::{Error, Result};
use crate::signal::{StftConfig, SEGMENT_LEN};

/// Unit of [`GanConfig::max_iters`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// One unit is a single batch update.
    Iterations,
    /// One unit is a pass over every training pair.
    Epochs,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Iterations => "iters",
            Schedule::Epochs => "epochs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "iters" | "iterations" => Some(Schedule::Iterations),
            "epochs" => Some(Schedule::Epochs),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub gen_width: usize,
    pub disc_width: usize,
    /// Polynomial order `Q` of every operational layer.
    pub order: usize,
    /// Weight of the time and spectral L1 terms against the adversarial term.
    pub lambda: f64,
    pub batch: usize,
    pub max_iters: usize,
    pub schedule: Schedule,
    pub lr: f64,
    pub noise_channels: usize,
    /// Checkpoint period, in units of `schedule`.
    pub checkpoint_every: usize,
    pub seed: u64,
    pub input_len: usize,
    pub stft: StftConfig,
    pub spectral: SpectralLoss,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            gen_width: 38,
            disc_width: 52,
            order: 3,
            lambda: 100.0,
            batch: 8,
            max_iters: 1000,
            schedule: Schedule::Epochs,
            lr: 1e-4,
            noise_channels: 1,
            checkpoint_every: 10,
            seed: 0,
            input_len: SEGMENT_LEN,
            stft: StftConfig::default(),
            spectral: SpectralLoss::Power,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gan: {m}")));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.batch == 0 || self.gen_width == 0 || self.disc_width == 0 || self.order == 0 {
            return bad("batch, widths and order must be at least 1");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        Ok(())
    }
}
