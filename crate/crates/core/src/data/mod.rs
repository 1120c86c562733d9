//! Working conditions, records, corpus files and the synthetic machine generator.

pub mod condition;
pub mod dataset;
pub mod record;
pub mod split;
pub mod synth;

pub use condition::{Fault, MachineId, OperatingPoint, WorkingCondition};
pub use dataset::{load_dataset, write_dataset, Inventory};
pub use record::{Record, RecordData, Segment};
pub use split::{stratified_split, HEALTHY_TRAIN_FRACTION};
pub use synth::{synth_machine, synth_record, SynthCorpusPlan, SynthMachineParams};
