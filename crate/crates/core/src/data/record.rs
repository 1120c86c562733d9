use std::borrow::Cow;
use std::fs;
use std::path::PathBuf;

use crate::data::condition::WorkingCondition;
use crate::error::{Error, Result};
use crate::signal::{normalize_segment, segment_samples, SAMPLE_RATE};

/// Where a record's samples live.
#[derive(Clone, Debug, PartialEq)]
pub enum RecordData {
    InMemory(Vec<f32>),
    /// Raw little-endian f32 file, read on demand.
    File(PathBuf),
}

/// One contiguous acquisition under a single working condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub condition: WorkingCondition,
    pub duration_s: u32,
    pub data: RecordData,
}

/// One normalized second of vibration.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub samples: Vec<f32>,
    pub condition: WorkingCondition,
    pub source_record: String,
    /// Position of the segment within its record.
    pub index: usize,
}

impl Record {
    pub fn in_memory(id: impl Into<String>, condition: WorkingCondition, samples: Vec<f32>) -> Result<Self> {
        if samples.is_empty() || !samples.len().is_multiple_of(SAMPLE_RATE) {
            return Err(Error::Dataset(format!(
                "record holds {} samples, not a whole number of seconds",
                samples.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            condition,
            duration_s: (samples.len() / SAMPLE_RATE) as u32,
            data: RecordData::InMemory(samples),
        })
    }

    pub fn sample_count(&self) -> usize {
        self.duration_s as usize * SAMPLE_RATE
    }

    pub fn samples(&self) -> Result<Cow<'_, [f32]>> {
        match &self.data {
            RecordData::InMemory(v) => Ok(Cow::Borrowed(v)),
            RecordData::File(path) => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                if bytes.len() != self.sample_count() * 4 {
                    return Err(Error::Dataset(format!(
                        "{}: {} bytes, expected {} samples",
                        path.display(),
                        bytes.len(),
                        self.sample_count()
                    )));
                }
                Ok(Cow::Owned(
                    bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ))
            }
        }
    }

    /// Normalized one-second segments. Constant (degenerate) seconds are skipped.
    pub fn segments(&self) -> Result<Vec<Segment>> {
        let samples = self.samples()?;
        let mut out = Vec::new();
        for (index, raw) in segment_samples(&samples, SAMPLE_RATE)?.into_iter().enumerate() {
            let n = normalize_segment(&raw)?;
            if n.degenerate {
                log::warn!("{}: segment {index} is constant, skipped", self.id);
                continue;
            }
            out.push(Segment {
                samples: n.values,
                condition: self.condition.clone(),
                source_record: self.id.clone(),
                index,
            });
        }
        Ok(out)
    }
}
