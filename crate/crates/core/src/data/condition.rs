use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Machine a record was acquired on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MachineId {
    A,
    B,
    /// Surrogate machine from the synthetic generator, e.g. `synth:M1`.
    Synthetic(String),
}

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachineId::A => f.write_str("A"),
            MachineId::B => f.write_str("B"),
            MachineId::Synthetic(name) => write!(f, "synth:{name}"),
        }
    }
}

impl FromStr for MachineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(MachineId::A),
            "B" => Ok(MachineId::B),
            _ => match s.strip_prefix("synth:") {
                Some(name) if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
                    Ok(MachineId::Synthetic(name.to_string()))
                }
                _ => Err(Error::Dataset(format!("unknown machine id `{s}`"))),
            },
        }
    }
}

/// Bearing state. Defect sizes are kept in micrometres so conditions hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fault {
    Healthy,
    Inner { defect_um: u32 },
    Outer { defect_um: u32 },
}

pub const MIN_DEFECT_UM: u32 = 350;
pub const MAX_DEFECT_UM: u32 = 2350;

impl Fault {
    pub fn inner_mm(mm: f64) -> Self {
        Fault::Inner {
            defect_um: (mm * 1000.0).round() as u32,
        }
    }

    pub fn outer_mm(mm: f64) -> Self {
        Fault::Outer {
            defect_um: (mm * 1000.0).round() as u32,
        }
    }

    pub fn is_faulty(self) -> bool {
        !matches!(self, Fault::Healthy)
    }

    pub fn type_name(self) -> &'static str {
        match self {
            Fault::Healthy => "healthy",
            Fault::Inner { .. } => "inner",
            Fault::Outer { .. } => "outer",
        }
    }

    pub fn defect_mm(self) -> f64 {
        match self {
            Fault::Healthy => 0.0,
            Fault::Inner { defect_um } | Fault::Outer { defect_um } => defect_um as f64 / 1000.0,
        }
    }

    pub fn parse(type_name: &str, defect_mm: f64) -> Result<Self> {
        let um = (defect_mm * 1000.0).round();
        if !(0.0..=1e7).contains(&um) {
            return Err(Error::Dataset(format!("defect size {defect_mm} mm is out of range")));
        }
        let um = um as u32;
        match type_name {
            "healthy" => Ok(Fault::Healthy),
            "inner" => Ok(Fault::Inner { defect_um: um }),
            "outer" => Ok(Fault::Outer { defect_um: um }),
            other => Err(Error::Dataset(format!("unknown fault type `{other}`"))),
        }
    }
}

/// The part of a working condition shared by a healthy record and its faulty
/// counterparts: everything except the bearing state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OperatingPoint {
    pub machine: MachineId,
    pub sensor: u32,
    pub speed_rpm: u32,
    pub load_n: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorkingCondition {
    pub machine: MachineId,
    /// 1-based accelerometer index.
    pub sensor: u32,
    pub speed_rpm: u32,
    /// Radial load in newtons (0.12 kN is stored as 120).
    pub load_n: u32,
    pub fault: Fault,
}

/// Working-condition grid of a physical machine.
pub struct MachineLayout {
    pub sensors: u32,
    pub speeds_rpm: &'static [u32],
    pub loads_n: &'static [u32],
}

pub const MACHINE_A: MachineLayout = MachineLayout {
    sensors: 5,
    speeds_rpm: &[480, 680, 1010],
    loads_n: &[120, 200],
};

pub const MACHINE_B: MachineLayout = MachineLayout {
    sensors: 6,
    speeds_rpm: &[240, 360, 480, 700, 1020],
    loads_n: &[150],
};

impl MachineId {
    pub fn layout(&self) -> Option<&'static MachineLayout> {
        match self {
            MachineId::A => Some(&MACHINE_A),
            MachineId::B => Some(&MACHINE_B),
            MachineId::Synthetic(_) => None,
        }
    }
}

impl WorkingCondition {
    pub fn operating_point(&self) -> OperatingPoint {
        OperatingPoint {
            machine: self.machine.clone(),
            sensor: self.sensor,
            speed_rpm: self.speed_rpm,
            load_n: self.load_n,
        }
    }

    pub fn shaft_hz(&self) -> f64 {
        self.speed_rpm as f64 / 60.0
    }

    pub fn load_kn(&self) -> f64 {
        self.load_n as f64 / 1000.0
    }

    /// Check the condition against the machine's acquisition grid.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Dataset(format!("{self}: {m}")));
        if self.sensor == 0 {
            return err("sensor ids start at 1".into());
        }
        if self.speed_rpm == 0 {
            return err("speed must be positive".into());
        }
        if self.fault.is_faulty() {
            let um = (self.fault.defect_mm() * 1000.0).round() as u32;
            if !(MIN_DEFECT_UM..=MAX_DEFECT_UM).contains(&um) {
                return err(format!(
                    "defect size {} mm outside [0.35, 2.35] mm",
                    self.fault.defect_mm()
                ));
            }
        }
        if let Some(layout) = self.machine.layout() {
            if self.sensor > layout.sensors {
                return err(format!("machine has {} sensors", layout.sensors));
            }
            if !layout.speeds_rpm.contains(&self.speed_rpm) {
                return err(format!("speed {} rpm not in {:?}", self.speed_rpm, layout.speeds_rpm));
            }
            if !layout.loads_n.contains(&self.load_n) {
                return err(format!("load {} kN not used on this machine", self.load_kn()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for WorkingCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} s{} {}rpm {}kN {}",
            self.machine,
            self.sensor,
            self.speed_rpm,
            self.load_kn(),
            self.fault.type_name()
        )?;
        if self.fault.is_faulty() {
            write!(f, " {}mm", self.fault.defect_mm())?;
        }
        Ok(())
    }
}
