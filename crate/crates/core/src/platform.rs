//! Everything about the physical platform that is not the architecture
//! tuple, from device contracts to optical and ECU constants.

use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, Dim};
use crate::devices::{DeviceProfile, LossBudget, TuningParams};
use crate::error::{domain, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcuParams {
    /// Parallel comparator/subtractor/LUT lanes per ECU.
    pub lanes: usize,
    /// Energy of one buffer read or write (J).
    pub buffer_access_energy: f64,
    /// Latency of one buffer access (s).
    pub buffer_access_latency: f64,
}

impl Default for EcuParams {
    fn default() -> Self {
        Self { lanes: 8, buffer_access_energy: 0.05e-12, buffer_access_latency: 0.2e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsParams {
    /// Waveguide length a signal travels inside one block (cm).
    pub block_path_cm: f64,
    pub group_index: f64,
}

impl Default for OpticsParams {
    fn default() -> Self {
        Self { block_path_cm: 0.3, group_index: 4.2 }
    }
}

impl OpticsParams {
    pub fn flight_time(&self) -> f64 {
        self.block_path_cm * 1e-2 * self.group_index / SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Platform {
    pub profile: DeviceProfile,
    pub budget: LossBudget,
    pub tuning: TuningParams,
    pub ecu: EcuParams,
    pub optics: OpticsParams,
    /// Bill every device for the whole run instead of only its active phases.
    pub always_on: bool,
}

impl Platform {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.budget.validate()?;
        self.tuning.validate()?;
        if self.ecu.lanes == 0 {
            return domain("ecu.lanes must be at least 1");
        }
        if !(self.ecu.buffer_access_energy >= 0.0 && self.ecu.buffer_access_latency >= 0.0) {
            return domain("buffer access costs must be non-negative");
        }
        if !(self.optics.block_path_cm >= 0.0 && self.optics.group_index >= 1.0) {
            return domain("optics.block_path must be non-negative and optics.group_index at least 1");
        }
        Ok(())
    }

    /// Consume every platform key of `cfg`, keeping defaults for absent ones.
    pub fn from_config(cfg: &mut ConfigFile) -> Result<Self> {
        let mut p = Platform {
            profile: DeviceProfile::from_config(cfg)?,
            budget: LossBudget::from_config(cfg)?,
            tuning: TuningParams::from_config(cfg)?,
            ..Platform::default()
        };
        if let Some(v) = cfg.take_usize("ecu.lanes")? {
            p.ecu.lanes = v;
        }
        if let Some(v) = cfg.take_quantity("ecu.buffer_energy", Dim::Energy)? {
            p.ecu.buffer_access_energy = v;
        }
        if let Some(v) = cfg.take_quantity("ecu.buffer_latency", Dim::Time)? {
            p.ecu.buffer_access_latency = v;
        }
        if let Some(v) = cfg.take_quantity("optics.block_path", Dim::Length)? {
            p.optics.block_path_cm = v * 1e2;
        }
        if let Some(v) = cfg.take_quantity("optics.group_index", Dim::Dimensionless)? {
            p.optics.group_index = v;
        }
        if let Some(v) = cfg.take_bool("power.always_on")? {
            p.always_on = v;
        }
        p.validate()?;
        Ok(p)
    }
}
