//! Parameterized surrogate machines for desk-scale runs.
//!
//! A healthy record is a sum of shaft harmonics plus white noise. A faulty
//! record adds a train of exponentially decaying resonance bursts repeating
//! at the race's characteristic frequency (a multiple of the shaft rate), with
//! amplitude proportional to the defect size. Each sensor then applies its own
//! gain and one-pole low-pass.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::condition::{Fault, MachineId, WorkingCondition};
use crate::data::record::Record;
use crate::error::{Error, Result};
use crate::signal::SAMPLE_RATE;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthMachineParams {
    pub name: String,
    /// Amplitude of shaft harmonic `h = 1, 2, …`.
    pub harmonics: Vec<f64>,
    pub resonance_hz: f64,
    /// Decay rate of each burst, 1/s.
    pub impulse_decay: f64,
    /// Burst peak amplitude per millimetre of defect.
    pub impulse_gain: f64,
    /// Outer-race fault frequency as a multiple of the shaft rate.
    pub outer_multiplier: f64,
    /// Inner-race fault frequency as a multiple of the shaft rate.
    pub inner_multiplier: f64,
    /// Relative random jitter of burst spacing.
    pub jitter: f64,
    pub noise_sigma: f64,
    /// Per-sensor gain; sensor `i` uses entry `(i − 1) % len`.
    pub sensor_gains: Vec<f64>,
    /// Per-sensor one-pole low-pass coefficient in `(0, 1]` (1 = pass-through).
    pub sensor_lowpass: Vec<f64>,
    pub healthy_seconds: u32,
    pub faulty_seconds: u32,
    pub seed: u64,
}

impl SynthMachineParams {
    /// Surrogate source machine.
    pub fn m1() -> Self {
        Self {
            name: "M1".into(),
            harmonics: vec![1.0, 0.5, 0.3, 0.15],
            resonance_hz: 1100.0,
            impulse_decay: 450.0,
            impulse_gain: 1.6,
            outer_multiplier: 3.57,
            inner_multiplier: 5.43,
            jitter: 0.01,
            noise_sigma: 0.05,
            sensor_gains: vec![1.0, 0.6],
            sensor_lowpass: vec![1.0, 0.8],
            healthy_seconds: 270,
            faulty_seconds: 30,
            seed: 1,
        }
    }

    /// Surrogate target machine: other harmonics, resonance and noise floor.
    pub fn m2() -> Self {
        Self {
            name: "M2".into(),
            harmonics: vec![0.7, 0.8, 0.25],
            resonance_hz: 1450.0,
            impulse_decay: 380.0,
            impulse_gain: 1.4,
            outer_multiplier: 3.57,
            inner_multiplier: 5.43,
            jitter: 0.01,
            noise_sigma: 0.08,
            sensor_gains: vec![0.8, 1.2],
            sensor_lowpass: vec![0.9, 1.0],
            healthy_seconds: 270,
            faulty_seconds: 30,
            seed: 2,
        }
    }

    pub fn machine_id(&self) -> MachineId {
        MachineId::Synthetic(self.name.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic machine {}: {m}", self.name)));
        if self.harmonics.is_empty() || self.harmonics.iter().any(|&a| !(a > 0.0)) {
            return bad("harmonic amplitudes must be positive");
        }
        if !(self.resonance_hz > 0.0 && self.resonance_hz < SAMPLE_RATE as f64 / 2.0) {
            return bad("resonance must lie below the Nyquist frequency");
        }
        if !(self.impulse_decay > 0.0 && self.impulse_gain > 0.0) {
            return bad("impulse decay and gain must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !(0.0..0.5).contains(&self.jitter) {
            return bad("noise and jitter must be non-negative (jitter < 0.5)");
        }
        if self.sensor_gains.is_empty() || self.sensor_gains.iter().any(|&g| !(g > 0.0)) {
            return bad("sensor gains must be positive");
        }
        if self.sensor_lowpass.is_empty() || self.sensor_lowpass.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad("low-pass coefficients must lie in (0, 1]");
        }
        if self.healthy_seconds == 0 || self.faulty_seconds == 0 {
            return bad("record durations must be positive");
        }
        Ok(())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Record id used for synthetic records.
pub fn synth_record_id(c: &WorkingCondition) -> String {
    let machine = match &c.machine {
        MachineId::Synthetic(n) => n.clone(),
        other => other.to_string(),
    };
    let mut id = format!(
        "{machine}_s{}_{}rpm_{}N_{}",
        c.sensor,
        c.speed_rpm,
        c.load_n,
        c.fault.type_name()
    );
    if c.fault.is_faulty() {
        id.push_str(&format!("_{}um", (c.fault.defect_mm() * 1000.0).round() as u32));
    }
    id
}

/// Generate one record with the machine's default duration for its state.
pub fn synth_machine(params: &SynthMachineParams, condition: &WorkingCondition) -> Result<Record> {
    let secs = if condition.fault.is_faulty() {
        params.faulty_seconds
    } else {
        params.healthy_seconds
    };
    synth_record(params, condition, secs)
}

/// Generate `seconds` of vibration for one working condition. Deterministic in
/// `(params, condition, seconds)`.
pub fn synth_record(params: &SynthMachineParams, condition: &WorkingCondition, seconds: u32) -> Result<Record> {
    params.validate()?;
    condition.validate()?;
    if condition.machine != params.machine_id() {
        return Err(Error::InvalidArgument(format!(
            "condition for {} passed to generator for {}",
            condition.machine,
            params.machine_id()
        )));
    }
    let id = synth_record_id(condition);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ fnv1a(id.as_bytes()));
    let n = seconds as usize * SAMPLE_RATE;
    let fs = SAMPLE_RATE as f64;
    let shaft = condition.shaft_hz();

    let phases: Vec<f64> = params.harmonics.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let noise = Normal::new(0.0, params.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let tonal: f64 = params
                .harmonics
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (a, ph))| a * (2.0 * PI * (h + 1) as f64 * shaft * t + ph).sin())
                .sum();
            tonal + if params.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }
        })
        .collect();

    if condition.fault.is_faulty() {
        let (mult, modulated) = match condition.fault {
            Fault::Outer { .. } => (params.outer_multiplier, false),
            _ => (params.inner_multiplier, true),
        };
        let period = 1.0 / (mult * shaft);
        let amp = params.impulse_gain * condition.fault.defect_mm();
        // Bursts are negligible after ~12 time constants.
        let tail = ((12.0 / params.impulse_decay) * fs).ceil() as usize;
        let duration = n as f64 / fs;
        let mut t0 = rng.gen_range(0.0..period);
        while t0 < duration {
            let a = if modulated {
                // Inner-race defects rotate through the load zone once per revolution.
                amp * (0.6 + 0.4 * (2.0 * PI * shaft * t0).cos())
            } else {
                amp
            };
            let start = (t0 * fs).ceil() as usize;
            for (i, v) in x.iter_mut().enumerate().skip(start).take(tail) {
                let tau = i as f64 / fs - t0;
                *v += a * (-params.impulse_decay * tau).exp() * (2.0 * PI * params.resonance_hz * tau).sin();
            }
            t0 += period * (1.0 + params.jitter * rng.gen_range(-1.0..1.0));
        }
    }

    let s = (condition.sensor as usize - 1) % params.sensor_gains.len();
    let gain = params.sensor_gains[s];
    let alpha = params.sensor_lowpass[(condition.sensor as usize - 1) % params.sensor_lowpass.len()];
    let mut y = 0.0;
    let samples = x
        .iter()
        .map(|&v| {
            y += alpha * (v - y);
            (gain * y) as f32
        })
        .collect();
    Record::in_memory(id, condition.clone(), samples)
}

/// Grid of conditions to generate for one synthetic machine.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpusPlan {
    pub machine: SynthMachineParams,
    pub sensors: u32,
    pub speeds_rpm: Vec<u32>,
    pub loads_n: Vec<u32>,
    pub faults: Vec<Fault>,
}

impl SynthCorpusPlan {
    /// Small grid for desk runs: 2 sensors, 4 fault configurations, short records.
    pub fn desk(mut machine: SynthMachineParams, speeds_rpm: Vec<u32>) -> Self {
        machine.healthy_seconds = 40;
        machine.faulty_seconds = 10;
        Self {
            machine,
            sensors: 2,
            speeds_rpm,
            loads_n: vec![150],
            faults: vec![
                Fault::inner_mm(1.0),
                Fault::inner_mm(2.0),
                Fault::outer_mm(1.0),
                Fault::outer_mm(2.0),
            ],
        }
    }

    /// Desk corpus for the surrogate source machine.
    pub fn desk_m1() -> Self {
        Self::desk(SynthMachineParams::m1(), vec![600, 900, 1200])
    }

    /// Desk corpus for the surrogate target machine.
    pub fn desk_m2() -> Self {
        Self::desk(SynthMachineParams::m2(), vec![500, 800])
    }

    pub fn conditions(&self) -> Vec<WorkingCondition> {
        let mut out = Vec::new();
        for sensor in 1..=self.sensors {
            for &speed_rpm in &self.speeds_rpm {
                for &load_n in &self.loads_n {
                    for fault in std::iter::once(Fault::Healthy).chain(self.faults.iter().copied()) {
                        out.push(WorkingCondition {
                            machine: self.machine.machine_id(),
                            sensor,
                            speed_rpm,
                            load_n,
                            fault,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn generate(&self) -> Result<Vec<Record>> {
        self.conditions()
            .iter()
            .map(|c| synth_machine(&self.machine, c))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(fault: Fault) -> WorkingCondition {
        WorkingCondition {
            machine: MachineId::Synthetic("M1".into()),
            sensor: 1,
            speed_rpm: 900,
            load_n: 150,
            fault,
        }
    }

    fn rms(x: &[f32]) -> f64 {
        (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn deterministic() {
        let p = SynthMachineParams::m1();
        let a = synth_record(&p, &cond(Fault::inner_mm(1.0)), 2).unwrap();
        let b = synth_record(&p, &cond(Fault::inner_mm(1.0)), 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_count(), 2 * 4096);
    }

    #[test]
    fn faults_raise_rms() {
        let p = SynthMachineParams::m1();
        let h = synth_record(&p, &cond(Fault::Healthy), 4).unwrap();
        let h = rms(&h.samples().unwrap());
        for f in [Fault::inner_mm(1.0), Fault::outer_mm(1.0), Fault::outer_mm(2.35)] {
            let r = synth_record(&p, &cond(f), 4).unwrap();
            assert!(rms(&r.samples().unwrap()) > h);
        }
    }

    #[test]
    fn rejects_foreign_conditions() {
        let p = SynthMachineParams::m1();
        let mut c = cond(Fault::Healthy);
        c.machine = MachineId::Synthetic("M2".into());
        assert!(synth_record(&p, &c, 1).is_err());
        let mut bad = p.clone();
        bad.resonance_hz = 3000.0;
        assert!(synth_record(&bad, &cond(Fault::Healthy), 1).is_err());
    }
}
