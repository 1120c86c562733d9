use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{OperatingPoint, Segment};
use crate::error::{Error, Result};
use crate::gan::arch::{build_discriminator, build_generator};
use crate::gan::loss::{composite_g_loss_grad, GLossParts, SpectralTerm};
use crate::gan::{GanConfig, Schedule};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::tensor::{bce_against, AdamConfig, AdamState, Buffer};

/// A healthy segment `X` and a faulty segment `Y` from the same operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub healthy: Segment,
    pub faulty: Segment,
}

impl TrainPair {
    pub fn new(healthy: Segment, faulty: Segment) -> Result<Self> {
        if healthy.condition.operating_point() != faulty.condition.operating_point() {
            return Err(Error::InvalidArgument(format!(
                "pair mixes {} and {}",
                healthy.condition, faulty.condition
            )));
        }
        if healthy.condition.fault.is_faulty() || !faulty.condition.fault.is_faulty() {
            return Err(Error::InvalidArgument(format!(
                "pair needs a healthy and a faulty segment, got {} and {}",
                healthy.condition, faulty.condition
            )));
        }
        Ok(Self { healthy, faulty })
    }
}

/// Healthy segments, each with the faulty segments it may be paired with.
///
/// [`PairPool::draw`] picks one partner per healthy segment uniformly at
/// random, so repeated draws cycle the generator through all fault
/// configurations of an operating point.
#[derive(Clone, Debug)]
pub struct PairPool {
    healthy: Vec<Segment>,
    faulty: Vec<Segment>,
    partners: Vec<Vec<usize>>,
}

impl PairPool {
    /// Pair every healthy segment with the faulty segments of its operating
    /// point. Healthy segments without any partner are dropped.
    pub fn new(healthy: Vec<Segment>, faulty: Vec<Segment>) -> Result<Self> {
        let mut by_point: BTreeMap<OperatingPoint, Vec<usize>> = BTreeMap::new();
        for (i, f) in faulty.iter().enumerate() {
            if !f.condition.fault.is_faulty() {
                return Err(Error::InvalidArgument(format!("{} is not faulty", f.condition)));
            }
            by_point.entry(f.condition.operating_point()).or_default().push(i);
        }
        let mut kept = Vec::new();
        let mut partners = Vec::new();
        let mut dropped = 0;
        for h in healthy {
            if h.condition.fault.is_faulty() {
                return Err(Error::InvalidArgument(format!("{} is not healthy", h.condition)));
            }
            match by_point.get(&h.condition.operating_point()) {
                Some(p) => {
                    partners.push(p.clone());
                    kept.push(h);
                }
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            log::warn!("{dropped} healthy segments have no faulty counterpart and are not used");
        }
        if kept.is_empty() {
            return Err(Error::Empty("training pairs"));
        }
        Ok(Self {
            healthy: kept,
            faulty,
            partners,
        })
    }

    /// Pool that always yields exactly the given pairs.
    pub fn fixed(pairs: Vec<TrainPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("training pairs"));
        }
        let n = pairs.len();
        let (healthy, faulty) = pairs.into_iter().map(|p| (p.healthy, p.faulty)).unzip();
        Ok(Self {
            healthy,
            faulty,
            partners: (0..n).map(|i| vec![i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.healthy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.healthy.is_empty()
    }

    fn draw_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(usize, usize)> {
        self.partners
            .iter()
            .enumerate()
            .map(|(h, p)| (h, p[rng.gen_range(0..p.len())]))
            .collect()
    }

    /// One partner for every healthy segment.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<TrainPair> {
        self.draw_indices(rng)
            .into_iter()
            .map(|(h, f)| TrainPair {
                healthy: self.healthy[h].clone(),
                faulty: self.faulty[f].clone(),
            })
            .collect()
    }
}

/// Generator snapshot with its validation scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Completed iterations or epochs, per [`GanConfig::schedule`].
    pub step: usize,
    pub gen_params: Vec<f32>,
    pub val: GLossParts,
    /// Downstream detection score, filled in by detection-based selection.
    pub val_detection: Option<f64>,
}

/// Losses of one batch update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub d_loss: f64,
    pub g_bce: f64,
    pub g_time: f64,
    pub g_stft: f64,
    /// Validation composite loss, on iterations that ended with a checkpoint.
    pub val_total: Option<f64>,
}

pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[IterationMetrics]) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::Dataset(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["iteration", "d_loss", "g_bce", "g_time", "g_stft", "val_total"])
        .map_err(err)?;
    for m in metrics {
        w.write_record([
            m.iteration.to_string(),
            m.d_loss.to_string(),
            m.g_bce.to_string(),
            m.g_time.to_string(),
            m.g_stft.to_string(),
            m.val_total.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Outcome of adversarial training.
#[derive(Clone, Debug)]
pub struct GanRun {
    pub generator: Network<f32>,
    pub discriminator: Network<f32>,
    /// Validation losses of the untrained generator.
    pub initial: GLossParts,
    pub checkpoints: Vec<Checkpoint>,
    pub metrics: Vec<IterationMetrics>,
    /// Iteration at which a loss became non-finite; training stopped there and
    /// `checkpoints` ends with the last good one.
    pub diverged_at: Option<usize>,
}

impl GanRun {
    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }
}

/// How [`select_checkpoint`] ranks checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    /// Lowest validation composite loss.
    Loss,
    /// Highest [`Checkpoint::val_detection`].
    Detection,
}

impl SelectionMode {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Loss => "loss",
            SelectionMode::Detection => "detection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "loss" => Some(SelectionMode::Loss),
            "detection" => Some(SelectionMode::Detection),
            _ => None,
        }
    }
}

/// Pick a checkpoint. Ties go to the later checkpoint; in detection mode,
/// unscored checkpoints are skipped.
pub fn select_checkpoint(checkpoints: &[Checkpoint], mode: SelectionMode) -> Result<&Checkpoint> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoints"));
    }
    let mut best: Option<(&Checkpoint, f64)> = None;
    for c in checkpoints {
        let score = match mode {
            SelectionMode::Loss => -c.val.total,
            SelectionMode::Detection => match c.val_detection {
                Some(s) => s,
                None => continue,
            },
        };
        if best.is_none_or(|(_, b)| score >= b) {
            best = Some((c, score));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::InvalidArgument("no checkpoint carries a detection score".into()))
}

fn noise<R: Rng + ?Sized>(channels: usize, len: usize, rng: &mut R) -> Vec<f32> {
    (0..channels * len).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

/// Generator input: the healthy signal followed by the noise channels.
pub fn generator_input<T: Scalar>(x: &[T], z: &[T]) -> Result<Buffer<T>> {
    if x.is_empty() || !z.len().is_multiple_of(x.len()) {
        return Err(Error::Shape(format!("noise of {} samples for a {}-sample signal", z.len(), x.len())));
    }
    let mut data = Vec::with_capacity(x.len() + z.len());
    data.extend_from_slice(x);
    data.extend_from_slice(z);
    Buffer::from_vec(1 + z.len() / x.len(), x.len(), data)
}

/// Discriminator input: the condition `X` stacked on a candidate `Y`.
pub fn discriminator_input<T: Scalar>(x: &[T], y: &[T]) -> Result<Buffer<T>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("discriminator pair of {} and {} samples", x.len(), y.len())));
    }
    let mut data = Vec::with_capacity(2 * x.len());
    data.extend_from_slice(x);
    data.extend_from_slice(y);
    Buffer::from_vec(2, x.len(), data)
}

/// Discriminator loss `BCE(D(X, Y), 1) + BCE(D(X, fake), 0)` for one sample;
/// its parameter gradient is added into `grads`.
pub fn d_step_grads<T: Scalar>(
    d: &Network<T>,
    x: &[T],
    real: &[T],
    fake: &[T],
    grads: &mut [T],
) -> Result<f64> {
    let mut total = 0.0;
    for (y, label) in [(real, 1.0), (fake, 0.0)] {
        let tape = d.forward_tape(&discriminator_input(x, y)?)?;
        let (loss, g) = bce_against(tape.output(), label)?;
        d.backward(&tape, &g, grads)?;
        total += loss;
    }
    Ok(total)
}

/// Generator objective for one sample with `d` held fixed; the generator
/// parameter gradient is added into `grads`.
pub fn g_step_grads<T: Scalar>(
    g: &Network<T>,
    d: &Network<T>,
    g_input: &Buffer<T>,
    target: &Buffer<T>,
    lambda: f64,
    spectral: &SpectralTerm,
    grads: &mut [T],
) -> Result<GLossParts> {
    let g_tape = g.forward_tape(g_input)?;
    g_step_from_tape(g, d, g_input, &g_tape, target, lambda, spectral, grads)
}

#[allow(clippy::too_many_arguments)]
fn g_step_from_tape<T: Scalar>(
    g: &Network<T>,
    d: &Network<T>,
    g_input: &Buffer<T>,
    g_tape: &crate::nn::Tape<T>,
    target: &Buffer<T>,
    lambda: f64,
    spectral: &SpectralTerm,
    grads: &mut [T],
) -> Result<GLossParts> {
    let out = g_tape.output();
    let d_tape = d.forward_tape(&discriminator_input(g_input.channel(0), out.as_slice())?)?;
    let lg = composite_g_loss_grad(target, out, d_tape.output(), lambda, spectral)?;
    let mut scratch = vec![T::zero(); d.num_params()];
    let gd_in = d.backward(&d_tape, &lg.d_fake, &mut scratch)?;
    let mut g_out = lg.generated;
    for (a, &b) in g_out.as_mut_slice().iter_mut().zip(gd_in.channel(1)) {
        *a += b;
    }
    g.backward(g_tape, &g_out, grads)?;
    Ok(lg.parts)
}

struct Validation {
    x: Vec<Buffer<f32>>,
    y: Vec<Buffer<f32>>,
}

impl Validation {
    fn new(pairs: &[TrainPair], cfg: &GanConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7661_6c69_6461_7465);
        let mut x = Vec::with_capacity(pairs.len());
        let mut y = Vec::with_capacity(pairs.len());
        for p in pairs {
            let z = noise(cfg.noise_channels, p.healthy.samples.len(), &mut rng);
            x.push(generator_input(&p.healthy.samples, &z)?);
            y.push(Buffer::row(p.faulty.samples.clone()));
        }
        Ok(Self { x, y })
    }

    fn score(&self, g: &Network<f32>, d: &Network<f32>, cfg: &GanConfig, spectral: &SpectralTerm) -> Result<GLossParts> {
        let mut sum = GLossParts::default();
        for (x, y) in self.x.iter().zip(&self.y) {
            let out = g.forward(x)?;
            let df = d.forward(&discriminator_input(x.channel(0), out.as_slice())?)?;
            let p = crate::gan::loss::composite_g_loss(y, &out, &df, cfg.lambda, spectral)?;
            sum.bce += p.bce;
            sum.time += p.time;
            sum.stft += p.stft;
        }
        let n = self.x.len().max(1) as f64;
        Ok(GLossParts::combine(sum.bce / n, sum.time / n, sum.stft / n, cfg.lambda))
    }
}

fn check_segments(pool: &PairPool, val: &[TrainPair], len: usize) -> Result<()> {
    let all = pool
        .healthy
        .iter()
        .chain(&pool.faulty)
        .chain(val.iter().flat_map(|p| [&p.healthy, &p.faulty]));
    for s in all {
        if s.samples.len() != len {
            return Err(Error::Shape(format!(
                "segment {}#{} has {} samples, the networks take {len}",
                s.source_record,
                s.index,
                s.samples.len()
            )));
        }
    }
    Ok(())
}

/// Adversarial training of the conditional Op-GAN.
///
/// Each batch update first steps the discriminator on real and generated
/// pairs with the generator fixed, then steps the generator on the composite
/// objective through the updated, fixed discriminator. Per-sample gradients
/// are summed in batch order, so a run is a pure function of its inputs and
/// `cfg.seed`.
pub fn train_opgan(pool: &PairPool, val: &[TrainPair], cfg: &GanConfig) -> Result<GanRun> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    check_segments(pool, val, cfg.input_len)?;
    let spectral = SpectralTerm::new(cfg.stft, cfg.spectral)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = Network::<f32>::init(build_generator(cfg)?, &mut rng)?;
    let mut d = Network::<f32>::init(build_discriminator(cfg)?, &mut rng)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut g_opt = AdamState::new(g.num_params(), adam);
    let mut d_opt = AdamState::new(d.num_params(), adam);
    let validation = Validation::new(val, cfg)?;
    let initial = validation.score(&g, &d, cfg, &spectral)?;
    log::info!(
        "gan: {} generator / {} discriminator parameters, {} pairs, initial val {:.4}",
        g.num_params(),
        d.num_params(),
        pool.len(),
        initial.total
    );

    let batches_per_epoch = pool.len().div_ceil(cfg.batch);
    let total_iters = match cfg.schedule {
        Schedule::Iterations => cfg.max_iters,
        Schedule::Epochs => cfg.max_iters * batches_per_epoch,
    };
    let per_unit = match cfg.schedule {
        Schedule::Iterations => 1,
        Schedule::Epochs => batches_per_epoch,
    };
    let mut run = GanRun {
        generator: g.clone(),
        discriminator: d.clone(),
        initial,
        checkpoints: Vec::new(),
        metrics: Vec::with_capacity(total_iters),
        diverged_at: None,
    };
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut cursor = 0;
    let mut g_grads = vec![0f32; g.num_params()];
    let mut d_grads = vec![0f32; d.num_params()];

    for iter in 0..total_iters {
        if cursor >= order.len() {
            order = pool.draw_indices(&mut rng);
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = &order[cursor..(cursor + cfg.batch).min(order.len())];
        cursor += batch.len();
        let scale = 1.0 / batch.len() as f32;

        let mut inputs = Vec::with_capacity(batch.len());
        let mut tapes = Vec::with_capacity(batch.len());
        d_grads.iter_mut().for_each(|v| *v = 0.0);
        let mut d_loss = 0.0;
        let step = (|| -> Result<GLossParts> {
            for &(h, f) in batch {
                let x = &pool.healthy[h].samples;
                let z = noise(cfg.noise_channels, x.len(), &mut rng);
                let input = generator_input(x, &z)?;
                let tape = g.forward_tape(&input)?;
                d_loss += d_step_grads(&d, x, &pool.faulty[f].samples, tape.output().as_slice(), &mut d_grads)?;
                inputs.push(input);
                tapes.push(tape);
            }
            d_grads.iter_mut().for_each(|v| *v *= scale);
            d_opt.step(d.params_mut(), &d_grads)?;

            g_grads.iter_mut().for_each(|v| *v = 0.0);
            let mut parts = GLossParts::default();
            for ((&(_, f), input), tape) in batch.iter().zip(&inputs).zip(&tapes) {
                let target = Buffer::row(pool.faulty[f].samples.clone());
                let p = g_step_from_tape(&g, &d, input, tape, &target, cfg.lambda, &spectral, &mut g_grads)?;
                parts.bce += p.bce;
                parts.time += p.time;
                parts.stft += p.stft;
            }
            g_grads.iter_mut().for_each(|v| *v *= scale);
            g_opt.step(g.params_mut(), &g_grads)?;
            let n = batch.len() as f64;
            Ok(GLossParts::combine(parts.bce / n, parts.time / n, parts.stft / n, cfg.lambda))
        })();
        let parts = match step {
            Ok(p) if p.total.is_finite() && d_loss.is_finite() => p,
            Ok(_) | Err(Error::NonFinite(_)) => {
                log::warn!("gan: non-finite loss at iteration {iter}, stopping");
                run.diverged_at = Some(iter);
                break;
            }
            Err(e) => return Err(e),
        };
        let mut m = IterationMetrics {
            iteration: iter,
            d_loss: d_loss / batch.len() as f64,
            g_bce: parts.bce,
            g_time: parts.time,
            g_stft: parts.stft,
            val_total: None,
        };
        let done = iter + 1;
        if done % per_unit == 0 {
            let unit = done / per_unit;
            if unit % cfg.checkpoint_every == 0 || done == total_iters {
                let v = match validation.score(&g, &d, cfg, &spectral) {
                    Ok(v) if v.total.is_finite() => v,
                    Ok(_) | Err(Error::NonFinite(_)) => {
                        run.diverged_at = Some(iter);
                        run.metrics.push(m);
                        break;
                    }
                    Err(e) => return Err(e),
                };
                log::info!("gan: {} {unit}: val {:.4} (time {:.4}, stft {:.4})", cfg.schedule.name(), v.total, v.time, v.stft);
                m.val_total = Some(v.total);
                run.checkpoints.push(Checkpoint {
                    step: unit,
                    gen_params: g.params().to_vec(),
                    val: v,
                    val_detection: None,
                });
            }
        }
        run.metrics.push(m);
    }
    if run.checkpoints.is_empty() && run.diverged_at.is_none() {
        // Too short a run to reach a checkpoint boundary.
        run.checkpoints.push(Checkpoint {
            step: 0,
            gen_params: g.params().to_vec(),
            val: validation.score(&g, &d, cfg, &spectral)?,
            val_detection: None,
        });
    }
    if let (Some(_), Some(last)) = (run.diverged_at, run.checkpoints.last()) {
        g.set_params(last.gen_params.clone())?;
    }
    run.generator = g;
    run.discriminator = d;
    Ok(run)
}

/// Translate healthy segments into synthetic faulty ones, `G(X, z)` with a
/// fresh `z` per segment, clamped to `[-1, 1]`. Conditions are inherited.
pub fn synthesize_faults(generator: &Network<f32>, healthy: &[Segment], seed: u64) -> Result<Vec<Segment>> {
    let (channels, len) = generator.input_shape();
    if channels < 1 {
        return Err(Error::InvalidSpec("generator without inputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    healthy
        .iter()
        .map(|s| {
            if s.samples.len() != len {
                return Err(Error::Shape(format!(
                    "segment of {} samples, generator takes {len}",
                    s.samples.len()
                )));
            }
            let z = noise(channels - 1, len, &mut rng);
            let out = generator.forward(&generator_input(&s.samples, &z)?)?;
            out.check_finite("synthesized segment")?;
            Ok(Segment {
                samples: out.as_slice().iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
                condition: s.condition.clone(),
                source_record: format!("{}~synth", s.source_record),
                index: s.index,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Fault, MachineId, WorkingCondition};

    fn seg(fault: Fault, speed: u32, index: usize, v: f32) -> Segment {
        Segment {
            samples: vec![v; 8],
            condition: WorkingCondition {
                machine: MachineId::Synthetic("M1".into()),
                sensor: 1,
                speed_rpm: speed,
                load_n: 150,
                fault,
            },
            source_record: format!("r{speed}"),
            index,
        }
    }

    #[test]
    fn pool_matches_operating_points() {
        let healthy = vec![seg(Fault::Healthy, 600, 0, 0.0), seg(Fault::Healthy, 900, 0, 0.0), seg(Fault::Healthy, 1200, 0, 0.0)];
        let faulty = vec![
            seg(Fault::inner_mm(1.0), 600, 0, 1.0),
            seg(Fault::outer_mm(1.0), 600, 0, 2.0),
            seg(Fault::inner_mm(1.0), 900, 0, 3.0),
        ];
        let pool = PairPool::new(healthy, faulty).unwrap();
        assert_eq!(pool.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            for p in pool.draw(&mut rng) {
                assert_eq!(p.healthy.condition.operating_point(), p.faulty.condition.operating_point());
            }
        }
        assert!(PairPool::new(vec![seg(Fault::Healthy, 480, 0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn pair_rejects_mismatch() {
        assert!(TrainPair::new(seg(Fault::Healthy, 600, 0, 0.0), seg(Fault::inner_mm(1.0), 900, 0, 0.0)).is_err());
        assert!(TrainPair::new(seg(Fault::Healthy, 600, 0, 0.0), seg(Fault::Healthy, 600, 1, 0.0)).is_err());
        assert!(TrainPair::new(seg(Fault::Healthy, 600, 0, 0.0), seg(Fault::inner_mm(1.0), 600, 0, 0.0)).is_ok());
    }

    fn ck(step: usize, total: f64, det: Option<f64>) -> Checkpoint {
        Checkpoint {
            step,
            gen_params: vec![],
            val: GLossParts { total, ..GLossParts::default() },
            val_detection: det,
        }
    }

    #[test]
    fn selection() {
        assert!(select_checkpoint(&[], SelectionMode::Loss).is_err());
        let one = [ck(1, 5.0, None)];
        assert_eq!(select_checkpoint(&one, SelectionMode::Loss).unwrap().step, 1);
        let dec = [ck(1, 5.0, Some(0.2)), ck(2, 4.0, Some(0.9)), ck(3, 3.0, Some(0.5))];
        assert_eq!(select_checkpoint(&dec, SelectionMode::Loss).unwrap().step, 3);
        assert_eq!(select_checkpoint(&dec, SelectionMode::Detection).unwrap().step, 2);
        assert!(select_checkpoint(&one, SelectionMode::Detection).is_err());
    }
}
