//! On-disk corpus layout: one directory per machine holding `manifest.csv`
//! and one raw little-endian f32 file per record.
//!
//! ```text
//! file,machine,sensor,speed,load,fault_type,defect_mm,duration_s
//! records/A_s1_480rpm_0.12kN_healthy.f32,A,1,480,0.12,healthy,0,270
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::condition::{Fault, MachineId, WorkingCondition};
use crate::data::record::{Record, RecordData};
use crate::error::{Error, Result};
use crate::signal::SAMPLE_RATE;

pub const MANIFEST: &str = "manifest.csv";
const HEADER: [&str; 8] = [
    "file",
    "machine",
    "sensor",
    "speed",
    "load",
    "fault_type",
    "defect_mm",
    "duration_s",
];

/// Durations of a physical-corpus record, in seconds.
pub const HEALTHY_RECORD_S: u32 = 270;
pub const FAULTY_RECORD_S: u32 = 30;

/// Per-machine summary built while loading.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inventory {
    pub healthy_records: usize,
    pub faulty_records: usize,
    pub total_seconds: u64,
    pub machines: Vec<MachineId>,
    /// Non-fatal findings, such as a physical corpus that is only partly present.
    pub warnings: Vec<String>,
}

/// Read and validate a corpus directory. Samples stay on disk until asked for.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<(Vec<Record>, Inventory)> {
    let root = root.as_ref();
    let manifest = root.join(MANIFEST);
    if !manifest.is_file() {
        return Err(Error::Dataset(format!("no {MANIFEST} in {}", root.display())));
    }
    let mut reader = csv::Reader::from_path(&manifest)
        .map_err(|e| Error::Dataset(format!("{}: {e}", manifest.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Dataset(format!("{}: {e}", manifest.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Dataset(format!(
            "{}: header must be `{}`",
            manifest.display(),
            HEADER.join(",")
        )));
    }
    let mut records = Vec::new();
    let mut inv = Inventory::default();
    let mut seen = BTreeMap::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Dataset(format!("{}: {e}", manifest.display())))?;
        let at = |i: usize| row.get(i).unwrap_or("").trim();
        let bad = |what: &str| Error::Dataset(format!("{} row {}: bad {what}", manifest.display(), line + 2));
        let machine: MachineId = at(1).parse()?;
        let speed: u32 = at(3).parse().map_err(|_| bad("speed"))?;
        let load_kn: f64 = at(4).parse().map_err(|_| bad("load"))?;
        let defect: f64 = at(6).parse().map_err(|_| bad("defect_mm"))?;
        let condition = WorkingCondition {
            machine: machine.clone(),
            sensor: at(2).parse().map_err(|_| bad("sensor"))?,
            speed_rpm: speed,
            load_n: (load_kn * 1000.0).round() as u32,
            fault: Fault::parse(at(5), defect)?,
        };
        condition.validate()?;
        let duration_s: u32 = at(7).parse().map_err(|_| bad("duration_s"))?;
        if duration_s == 0 {
            return Err(bad("duration_s"));
        }
        if machine.layout().is_some() {
            let want = if condition.fault.is_faulty() {
                FAULTY_RECORD_S
            } else {
                HEALTHY_RECORD_S
            };
            if duration_s != want {
                return Err(Error::Dataset(format!(
                    "{condition}: {duration_s} s record, expected {want} s"
                )));
            }
        }
        let path = root.join(at(0));
        let meta = fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
        let expected = duration_s as u64 * SAMPLE_RATE as u64 * 4;
        if meta.len() != expected {
            return Err(Error::Dataset(format!(
                "{}: {} bytes, but {duration_s} s at {SAMPLE_RATE} Hz needs {expected}",
                path.display(),
                meta.len()
            )));
        }
        if let Some(prev) = seen.insert(condition.clone(), at(0).to_string()) {
            inv.warnings.push(format!("{condition} appears twice ({prev}, {})", at(0)));
        }
        if condition.fault.is_faulty() {
            inv.faulty_records += 1;
        } else {
            inv.healthy_records += 1;
        }
        inv.total_seconds += duration_s as u64;
        if !inv.machines.contains(&machine) {
            inv.machines.push(machine);
        }
        let id = Path::new(at(0))
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("record{line}"));
        records.push(Record {
            id,
            condition,
            duration_s,
            data: RecordData::File(path),
        });
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!("{} lists no records", manifest.display())));
    }
    for m in &inv.machines {
        if let Some(layout) = m.layout() {
            let points = layout.sensors as usize * layout.speeds_rpm.len() * layout.loads_n.len();
            let (h, f) = records
                .iter()
                .filter(|r| &r.condition.machine == m)
                .fold((0, 0), |(h, f), r| {
                    if r.condition.fault.is_faulty() {
                        (h, f + 1)
                    } else {
                        (h + 1, f)
                    }
                });
            if h != points || f != points * 18 {
                let w = format!(
                    "machine {m}: partial corpus, {h}/{points} healthy and {f}/{} faulty records",
                    points * 18
                );
                log::warn!("{w}");
                inv.warnings.push(w);
            }
        }
    }
    Ok((records, inv))
}

/// Write records as a corpus directory (`manifest.csv` + `records/*.f32`).
pub fn write_dataset(root: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let root = root.as_ref();
    let dir = root.join("records");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest = root.join(MANIFEST);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::Dataset(format!("{}: {e}", manifest.display())))?;
    let csv_err = |e: csv::Error| Error::Dataset(format!("{}: {e}", manifest.display()));
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        let rel = format!("records/{}.f32", r.id);
        let path = root.join(&rel);
        let samples = r.samples()?;
        let mut bytes = Vec::with_capacity(samples.len() * 4);
        for v in samples.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        let c = &r.condition;
        w.write_record([
            rel,
            c.machine.to_string(),
            c.sensor.to_string(),
            c.speed_rpm.to_string(),
            format!("{}", c.load_kn()),
            c.fault.type_name().to_string(),
            format!("{}", c.fault.defect_mm()),
            r.duration_s.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(())
}
