//! Compact Self-ONN fault detector: five operational layers and two dense
//! layers, segment classification, the record rule and evaluation metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Segment;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, NetworkSpec};
use crate::signal::SEGMENT_LEN;
use crate::tensor::{mse_loss_grad, AdamConfig, AdamState, Buffer};

/// Absolute slack allowed outside `[-1, 1]` before a segment counts as
/// unnormalized.
pub const NORM_TOLERANCE: f32 = 1e-5;

/// Faulty segments needed to flag a record.
pub const RECORD_THRESHOLD: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub order: usize,
    pub hidden: usize,
    pub dense_hidden: usize,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub padding: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub input_len: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            order: 3,
            hidden: 16,
            dense_hidden: 32,
            kernels: vec![81, 41, 21, 7, 7],
            strides: vec![8, 4, 4, 2, 2],
            padding: 0,
            epochs: 50,
            lr: 1e-4,
            batch: 32,
            seed: 0,
            input_len: SEGMENT_LEN,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("detector: {m}")));
        if self.kernels.is_empty() || self.kernels.len() != self.strides.len() {
            return bad("kernels and strides must be non-empty and of equal length");
        }
        if self.order == 0 || self.hidden == 0 || self.dense_hidden == 0 {
            return bad("order and widths must be at least 1");
        }
        if self.batch < 2 {
            return bad("batch must hold at least one segment per class");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        Ok(())
    }
}

/// Operational layers (tanh), then flatten, dense → `dense_hidden`, dense → 2.
pub fn build_detector(cfg: &DetectorConfig) -> Result<NetworkSpec> {
    cfg.validate()?;
    let mut spec = NetworkSpec::new(1, cfg.input_len);
    let mut ch = 1;
    for (&k, &s) in cfg.kernels.iter().zip(&cfg.strides) {
        spec = spec.push(LayerSpec::op_conv(ch, cfg.hidden, k, cfg.order, s, cfg.padding));
        ch = cfg.hidden;
    }
    let (c, l) = spec.output_shape()?;
    spec = spec
        .push(LayerSpec::dense(c * l, cfg.dense_hidden))
        .push(LayerSpec::dense(cfg.dense_hidden, 2));
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Healthy,
    Faulty,
}

impl Label {
    /// Regression target for the two tanh outputs.
    pub fn target(self) -> [f32; 2] {
        match self {
            Label::Healthy => [1.0, -1.0],
            Label::Faulty => [-1.0, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Faulty => "faulty",
        }
    }
}

/// Argmax readout; an exact tie is healthy.
pub fn decide(outputs: &[f32]) -> Result<Label> {
    match outputs {
        [h, f] if h.is_finite() && f.is_finite() => Ok(if f > h { Label::Faulty } else { Label::Healthy }),
        [_, _] => Err(Error::NonFinite("detector output")),
        _ => Err(Error::Shape(format!("detector has {} outputs, expected 2", outputs.len()))),
    }
}

fn check_normalized(x: &[f32]) -> Result<()> {
    let lim = 1.0 + NORM_TOLERANCE;
    if x.iter().any(|v| !(v.abs() <= lim)) {
        return Err(Error::InvalidArgument(
            "segment is not normalized to [-1, 1]".into(),
        ));
    }
    Ok(())
}

pub fn classify_segment(net: &Network<f32>, x: &[f32]) -> Result<Label> {
    check_normalized(x)?;
    let out = net.forward(&Buffer::row(x.to_vec()))?;
    decide(out.as_slice())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordVerdict {
    pub record: String,
    pub segments: Vec<Label>,
    pub label: Label,
    pub faulty_segments: usize,
}

/// A record is faulty when at least two of its segments are.
pub fn classify_record(record: impl Into<String>, segments: &[Label]) -> Result<RecordVerdict> {
    if segments.is_empty() {
        return Err(Error::Empty("record segment labels"));
    }
    let faulty_segments = segments.iter().filter(|&&l| l == Label::Faulty).count();
    Ok(RecordVerdict {
        record: record.into(),
        segments: segments.to_vec(),
        label: if faulty_segments >= RECORD_THRESHOLD {
            Label::Faulty
        } else {
            Label::Healthy
        },
        faulty_segments,
    })
}

/// Per-epoch mean training loss.
#[derive(Clone, Debug)]
pub struct DetectorRun {
    pub network: Network<f32>,
    pub epoch_loss: Vec<f64>,
}

/// Train on real healthy and (synthetic) faulty segments with MSE against
/// ±1 targets. Every batch holds `batch / 2` segments of each class; an epoch
/// covers the larger class once, cycling the smaller one.
pub fn train_detector(healthy: &[Segment], faulty: &[Segment], cfg: &DetectorConfig) -> Result<DetectorRun> {
    cfg.validate()?;
    if healthy.is_empty() {
        return Err(Error::Empty("healthy training segments"));
    }
    if faulty.is_empty() {
        return Err(Error::Empty("faulty training segments"));
    }
    for s in healthy.iter().chain(faulty) {
        if s.samples.len() != cfg.input_len {
            return Err(Error::Shape(format!(
                "segment of {} samples, detector takes {}",
                s.samples.len(),
                cfg.input_len
            )));
        }
        check_normalized(&s.samples)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::<f32>::init(build_detector(cfg)?, &mut rng)?;
    let mut opt = AdamState::new(
        net.num_params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let half = cfg.batch / 2;
    let batches = healthy.len().max(faulty.len()).div_ceil(half);
    let mut cycles = [Cycle::new(healthy.len()), Cycle::new(faulty.len())];
    let mut grads = vec![0f32; net.num_params()];
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let mut seen = 0;
        for _ in 0..batches {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch = Vec::with_capacity(2 * half);
            for _ in 0..half {
                batch.push((&healthy[cycles[0].next(&mut rng)], Label::Healthy));
                batch.push((&faulty[cycles[1].next(&mut rng)], Label::Faulty));
            }
            for (s, label) in &batch {
                let tape = net.forward_tape(&Buffer::row(s.samples.clone()))?;
                let t = label.target();
                let target = Buffer::from_vec(2, 1, t.to_vec())?;
                let (loss, g) = mse_loss_grad(tape.output(), &target)?;
                net.backward(&tape, &g, &mut grads)?;
                sum += loss;
                seen += 1;
            }
            let scale = 1.0 / batch.len() as f32;
            grads.iter_mut().for_each(|g| *g *= scale);
            opt.step(net.params_mut(), &grads).map_err(|e| match e {
                Error::NonFinite(what) => Error::Diverged { step, what },
                e => e,
            })?;
            step += 1;
        }
        let mean = sum / seen as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                step,
                what: "detector loss",
            });
        }
        log::debug!("detector epoch {}: loss {mean:.5}", epoch + 1);
        epoch_loss.push(mean);
    }
    Ok(DetectorRun {
        network: net,
        epoch_loss,
    })
}

/// Reshuffled pass over `0..n`, restarted when exhausted.
struct Cycle {
    order: Vec<usize>,
    at: usize,
}

impl Cycle {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            at: n,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.at == self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(rng);
            self.at = 0;
        }
        self.at += 1;
        self.order[self.at - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SensorStats {
    pub sensor: u32,
    pub detected: usize,
    pub total: usize,
}

impl SensorStats {
    pub fn recall(&self) -> Option<f64> {
        ratio(self.detected, self.total)
    }
}

fn ratio(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| n as f64 / d as f64)
}

/// Detection metrics. Rates are `None` when the test set lacks the class they
/// are computed over.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_sensor: Vec<SensorStats>,
    pub detected_records: usize,
    pub fault_records: usize,
    pub healthy_segments: usize,
    pub false_alarm_segments: usize,
    pub healthy_records: usize,
    pub false_alarm_records: usize,
}

impl EvalReport {
    /// Report from raw counts: per-sensor `(sensor, detected, total)` fault
    /// records, plus healthy segment and record false alarms.
    pub fn from_counts(
        per_sensor: &[(u32, usize, usize)],
        false_alarm_segments: usize,
        healthy_segments: usize,
        false_alarm_records: usize,
        healthy_records: usize,
    ) -> Result<Self> {
        if false_alarm_segments > healthy_segments || false_alarm_records > healthy_records {
            return Err(Error::InvalidArgument("more false alarms than healthy items".into()));
        }
        let mut stats = Vec::with_capacity(per_sensor.len());
        for &(sensor, detected, total) in per_sensor {
            if detected > total {
                return Err(Error::InvalidArgument(format!(
                    "sensor {sensor}: {detected} detected of {total}"
                )));
            }
            stats.push(SensorStats { sensor, detected, total });
        }
        stats.sort_by_key(|s| s.sensor);
        Ok(Self {
            detected_records: stats.iter().map(|s| s.detected).sum(),
            fault_records: stats.iter().map(|s| s.total).sum(),
            per_sensor: stats,
            healthy_segments,
            false_alarm_segments,
            healthy_records,
            false_alarm_records,
        })
    }

    /// Record-wise recall over all fault records.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.detected_records, self.fault_records)
    }

    /// Share of healthy test segments classified faulty.
    pub fn far(&self) -> Option<f64> {
        ratio(self.false_alarm_segments, self.healthy_segments)
    }

    /// Record-wise precision, counting healthy records flagged by the record rule.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.detected_records, self.detected_records + self.false_alarm_records)
    }

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        let mut s = String::from("sensor_id,detected,total,recall\n");
        for st in &self.per_sensor {
            s += &format!("{},{},{},{}\n", st.sensor, st.detected, st.total, f(st.recall()));
        }
        s += &format!("overall,{},{},{}\n", self.detected_records, self.fault_records, f(self.recall()));
        s += &format!("far,{},{},{}\n", self.false_alarm_segments, self.healthy_segments, f(self.far()));
        s += &format!(
            "precision,{},{},{}\n",
            self.detected_records,
            self.detected_records + self.false_alarm_records,
            f(self.precision())
        );
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
        for s in &self.per_sensor {
            writeln!(f, "sensor {}: {}/{} fault records detected", s.sensor, s.detected, s.total)?;
        }
        write!(
            f,
            "recall {} ({}/{}), FAR {} ({}/{} segments), precision {}",
            pct(self.recall()),
            self.detected_records,
            self.fault_records,
            pct(self.far()),
            self.false_alarm_segments,
            self.healthy_segments,
            pct(self.precision())
        )
    }
}

fn group_records(segments: &[Segment]) -> BTreeMap<&str, Vec<&Segment>> {
    let mut out: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
    for s in segments {
        out.entry(s.source_record.as_str()).or_default().push(s);
    }
    for v in out.values_mut() {
        v.sort_by_key(|s| s.index);
    }
    out
}

/// Verdicts for every record in `segments`, grouped by source record.
pub fn classify_records(net: &Network<f32>, segments: &[Segment]) -> Result<Vec<(RecordVerdict, u32)>> {
    group_records(segments)
        .into_iter()
        .map(|(id, segs)| {
            let labels = segs
                .iter()
                .map(|s| classify_segment(net, &s.samples))
                .collect::<Result<Vec<_>>>()?;
            Ok((classify_record(id, &labels)?, segs[0].condition.sensor))
        })
        .collect()
}

/// Apply the detector to held-out healthy segments and faulty records.
///
/// Fault records count per sensor under the record rule; false alarms are
/// counted per healthy segment and, for precision, per healthy record (the
/// held-out segments of one record).
pub fn evaluate(net: &Network<f32>, healthy: &[Segment], faulty: &[Segment]) -> Result<EvalReport> {
    if healthy.iter().any(|s| s.condition.fault.is_faulty()) || faulty.iter().any(|s| !s.condition.fault.is_faulty()) {
        return Err(Error::InvalidArgument("test segments carry the wrong fault label".into()));
    }
    let mut sensors: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (v, sensor) in classify_records(net, faulty)? {
        let e = sensors.entry(sensor).or_default();
        e.1 += 1;
        if v.label == Label::Faulty {
            e.0 += 1;
        }
    }
    let healthy_verdicts = classify_records(net, healthy)?;
    let fa_segments = healthy_verdicts.iter().map(|(v, _)| v.faulty_segments).sum();
    let fa_records = healthy_verdicts.iter().filter(|(v, _)| v.label == Label::Faulty).count();
    let counts: Vec<_> = sensors.into_iter().map(|(s, (d, t))| (s, d, t)).collect();
    EvalReport::from_counts(&counts, fa_segments, healthy.len(), fa_records, healthy_verdicts.len())
}
