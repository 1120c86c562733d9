//! Zero-shot detection in four stages: learn the healthy-to-faulty
//! transition on a source machine, synthesize faults from the target
//! machine's healthy signals, train the detector on them, and evaluate on the
//! target's held-out healthy data and real faults.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::data::{load_dataset, stratified_split, Record, Segment, SynthCorpusPlan};
use crate::detect::{classify_segment, evaluate, train_detector, DetectorConfig, EvalReport, Label};
use crate::error::{Error, Result};
use crate::gan::{select_checkpoint, synthesize_faults, train_opgan, GanRun, PairPool, SelectionMode, TrainPair};
use crate::nn::Network;
use crate::signal::normalize_segment;

pub const STAGE_GAN: &str = "train-gan";
pub const STAGE_SYNTH: &str = "synthesize";
pub const STAGE_DETECTOR: &str = "train-detector";
pub const STAGE_EVAL: &str = "evaluate";

/// Where a corpus comes from: `synth:M1`, `synth:M2` or a corpus directory.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(Box<SynthCorpusPlan>),
    Directory(PathBuf),
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("synth:") {
            Some("M1") => Ok(DataSource::Synthetic(Box::new(SynthCorpusPlan::desk_m1()))),
            Some("M2") => Ok(DataSource::Synthetic(Box::new(SynthCorpusPlan::desk_m2()))),
            Some(other) => Err(Error::InvalidArgument(format!(
                "unknown synthetic machine `{other}` (known: M1, M2)"
            ))),
            None if s.is_empty() => Err(Error::InvalidArgument("empty data source".into())),
            None => Ok(DataSource::Directory(PathBuf::from(s))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic(p) => write!(f, "synth:{}", p.machine.name),
            DataSource::Directory(d) => write!(f, "{}", d.display()),
        }
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<Record>> {
        match self {
            DataSource::Synthetic(plan) => plan.generate(),
            DataSource::Directory(dir) => {
                let (records, inv) = load_dataset(dir)?;
                for w in &inv.warnings {
                    log::warn!("{w}");
                }
                Ok(records)
            }
        }
    }
}

/// Ordered `key=value` facts about a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLedger {
    pub entries: Vec<(String, String)>,
}

impl RunLedger {
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// FNV-1a over the little-endian bytes of a parameter vector.
pub fn param_digest(params: &[f32]) -> String {
    let h = params.iter().flat_map(|v| v.to_le_bytes()).fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{h:016x}")
}

pub struct PipelineOutput {
    pub report: EvalReport,
    pub ledger: RunLedger,
    pub generator: Network<f32>,
    pub detector: Network<f32>,
    pub gan: GanRun,
}

fn segments_of<'a>(records: impl Iterator<Item = &'a Record>) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for r in records {
        out.extend(r.segments()?);
    }
    Ok(out)
}

/// Source pairs for training and a fixed validation set drawn from the
/// held-out speed.
pub fn source_pairs(source: &[Record], cfg: &PipelineConfig) -> Result<(PairPool, Vec<TrainPair>, u32)> {
    let speeds: BTreeSet<u32> = source.iter().map(|r| r.condition.speed_rpm).collect();
    if speeds.len() < 2 {
        return Err(Error::Dataset("source needs at least two speeds to hold one out".into()));
    }
    let val_speed = match cfg.val_speed {
        Some(s) if speeds.contains(&s) => s,
        Some(s) => return Err(Error::Config(format!("validation speed {s} rpm not in source"))),
        None => *speeds.iter().next_back().expect("non-empty"),
    };
    let part = |val: bool, faulty: bool| {
        segments_of(
            source
                .iter()
                .filter(|r| (r.condition.speed_rpm == val_speed) == val && r.condition.fault.is_faulty() == faulty),
        )
    };
    let train = PairPool::new(part(false, false)?, part(false, true)?)?;
    let val_pool = PairPool::new(part(true, false)?, part(true, true)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.gan.seed ^ 0x7061_6972);
    let mut val = val_pool.draw(&mut rng);
    if cfg.max_val_pairs > 0 && val.len() > cfg.max_val_pairs {
        let step = val.len() as f64 / cfg.max_val_pairs as f64;
        val = (0..cfg.max_val_pairs)
            .map(|i| val[(i as f64 * step) as usize].clone())
            .collect();
    }
    Ok((train, val, val_speed))
}

/// Synthesize, then map onto `[-1, 1]` the same way real segments are.
fn synthesize_normalized(gen: &Network<f32>, healthy: &[Segment], seed: u64) -> Result<Vec<Segment>> {
    let mut out = synthesize_faults(gen, healthy, seed)?;
    for s in &mut out {
        let n = normalize_segment(&s.samples)?;
        if !n.degenerate {
            s.samples = n.values;
        }
    }
    Ok(out)
}

/// Fill [`crate::gan::Checkpoint::val_detection`] for the lowest-loss
/// candidates: synthesize faults from half of the validation healthy
/// segments, train a short detector, and score segment recall on the real
/// validation faults, ranking candidates over the FAR cap (measured on the
/// other healthy half) below all others.
pub fn probe_checkpoints(run: &mut GanRun, val: &[TrainPair], cfg: &PipelineConfig) -> Result<()> {
    let mut seen = BTreeSet::new();
    let faulty: Vec<&Segment> = val
        .iter()
        .map(|p| &p.faulty)
        .filter(|s| seen.insert((s.source_record.clone(), s.index)))
        .collect();
    let (fit, hold): (Vec<_>, Vec<_>) = val.iter().map(|p| p.healthy.clone()).enumerate().partition(|(i, _)| i % 2 == 0);
    let fit: Vec<Segment> = fit.into_iter().map(|(_, s)| s).collect();
    let hold: Vec<Segment> = hold.into_iter().map(|(_, s)| s).collect();
    if fit.is_empty() || hold.is_empty() || faulty.is_empty() {
        return Err(Error::Empty("validation pairs for detection probing"));
    }
    let mut order: Vec<usize> = (0..run.checkpoints.len()).collect();
    order.sort_by(|&a, &b| run.checkpoints[a].val.total.total_cmp(&run.checkpoints[b].val.total));
    let det_cfg = DetectorConfig {
        epochs: cfg.probe.epochs,
        ..cfg.detector.clone()
    };
    let mut gen = run.generator.clone();
    for &i in order.iter().take(cfg.probe.candidates.max(1)) {
        gen.set_params(run.checkpoints[i].gen_params.clone())?;
        let synth = synthesize_normalized(&gen, &fit, cfg.synth_seed)?;
        let det = train_detector(&fit, &synth, &det_cfg)?.network;
        let mut hits = 0;
        for s in &faulty {
            if classify_segment(&det, &s.samples)? == Label::Faulty {
                hits += 1;
            }
        }
        let mut alarms = 0;
        for s in &hold {
            if classify_segment(&det, &s.samples)? == Label::Faulty {
                alarms += 1;
            }
        }
        let recall = hits as f64 / faulty.len() as f64;
        let far = alarms as f64 / hold.len() as f64;
        let score = if far <= cfg.probe.max_far { recall } else { -far };
        log::info!("probe checkpoint {}: recall {recall:.3}, FAR {far:.3}", run.checkpoints[i].step);
        run.checkpoints[i].val_detection = Some(score);
    }
    Ok(())
}

/// Run all four stages. A failing stage surfaces as [`Error::Stage`].
pub fn run_pipeline(source: &[Record], target: &[Record], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut ledger = RunLedger::default();
    ledger.push("version", env!("CARGO_PKG_VERSION"));
    for line in cfg.to_text().lines() {
        if let Some((k, v)) = line.split_once('=') {
            ledger.push(k, v);
        }
    }

    let (gan, generator) = (|| -> Result<(GanRun, Network<f32>)> {
        let (pool, val, val_speed) = source_pairs(source, cfg)?;
        ledger.push("source.pairs", pool.len());
        ledger.push("source.val_speed", val_speed);
        ledger.push("source.val_pairs", val.len());
        let mut run = train_opgan(&pool, &val, &cfg.gan)?;
        if cfg.selection == SelectionMode::Detection {
            probe_checkpoints(&mut run, &val, cfg)?;
        }
        let chosen = select_checkpoint(&run.checkpoints, cfg.selection)?.clone();
        let mut g = run.generator.clone();
        g.set_params(chosen.gen_params.clone())?;
        ledger.push("gan.initial_val_total", run.initial.total);
        ledger.push("gan.checkpoints", run.checkpoints.len());
        ledger.push("gan.chosen_step", chosen.step);
        ledger.push("gan.chosen_val_total", chosen.val.total);
        ledger.push(
            "gan.diverged_at",
            run.diverged_at.map_or("none".to_string(), |i| i.to_string()),
        );
        ledger.push("gan.generator_params", g.num_params());
        ledger.push("gan.generator_digest", param_digest(g.params()));
        Ok((run, g))
    })()
    .map_err(|e| e.in_stage(STAGE_GAN))?;

    let target_healthy = segments_of(target.iter().filter(|r| !r.condition.fault.is_faulty()));
    let target_faulty = segments_of(target.iter().filter(|r| r.condition.fault.is_faulty()));
    let (train_healthy, test_healthy, synthetic) = (|| -> Result<_> {
        let healthy = target_healthy?;
        if healthy.is_empty() {
            return Err(Error::Dataset("target has no healthy records".into()));
        }
        let (train, test) = stratified_split(healthy, cfg.split_fraction, cfg.split_seed)?;
        let synthetic = synthesize_normalized(&generator, &train, cfg.synth_seed)?;
        ledger.push("target.train_healthy", train.len());
        ledger.push("target.synthetic_faulty", synthetic.len());
        ledger.push("target.test_healthy", test.len());
        Ok((train, test, synthetic))
    })()
    .map_err(|e| e.in_stage(STAGE_SYNTH))?;

    let detector = (|| -> Result<Network<f32>> {
        let run = train_detector(&train_healthy, &synthetic, &cfg.detector)?;
        ledger.push("detector.params", run.network.num_params());
        ledger.push(
            "detector.final_loss",
            run.epoch_loss.last().map_or("none".to_string(), |l| l.to_string()),
        );
        ledger.push("detector.digest", param_digest(run.network.params()));
        Ok(run.network)
    })()
    .map_err(|e| e.in_stage(STAGE_DETECTOR))?;

    let report = (|| -> Result<EvalReport> {
        let faulty = target_faulty?;
        if faulty.is_empty() {
            log::warn!("target has no faulty records; recall is not defined");
        }
        let report = evaluate(&detector, &test_healthy, &faulty)?;
        ledger.push("target.test_fault_records", report.fault_records);
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| v.to_string());
        ledger.push("report.recall", opt(report.recall()));
        ledger.push("report.far", opt(report.far()));
        ledger.push("report.precision", opt(report.precision()));
        Ok(report)
    })()
    .map_err(|e| e.in_stage(STAGE_EVAL))?;

    Ok(PipelineOutput {
        report,
        ledger,
        generator,
        detector,
        gan,
    })
}
