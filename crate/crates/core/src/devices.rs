//! Optoelectronic device contracts: every component is a `(latency, power)`
//! pair, plus the microring resonance relation, the hybrid EO/TO tuning policy
//! and the additive optical loss budget.
//!
//! All values are stored in SI base units (seconds, watts, metres, dB).

use std::f64::consts::PI;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, Dim};
use crate::error::{domain, Error, Result};

/// Latency/power contract of a single device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub latency: f64,
    pub power: f64,
}

impl DeviceSpec {
    pub const fn new(latency: f64, power: f64) -> Self {
        Self { latency, power }
    }

    /// Energy of one activation: `power × latency`.
    pub fn energy(&self) -> f64 {
        self.power * self.latency
    }
}

/// Latency and power for every optoelectronic and electronic component.
///
/// `eo_tune.power` is per nanometre of resonance shift and `to_tune.power` is
/// per free spectral range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub eo_tune: DeviceSpec,
    pub to_tune: DeviceSpec,
    pub vcsel: DeviceSpec,
    pub photodetector: DeviceSpec,
    pub soa: DeviceSpec,
    pub dac: DeviceSpec,
    pub adc: DeviceSpec,
    pub comparator: DeviceSpec,
    pub subtractor: DeviceSpec,
    pub lut: DeviceSpec,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        Self {
            eo_tune: DeviceSpec::new(20e-9, 4e-6),
            to_tune: DeviceSpec::new(4e-6, 27.5e-3),
            vcsel: DeviceSpec::new(0.07e-9, 1.3e-3),
            photodetector: DeviceSpec::new(5.8e-12, 2.8e-3),
            soa: DeviceSpec::new(0.3e-9, 2.2e-3),
            dac: DeviceSpec::new(0.29e-9, 3e-3),
            adc: DeviceSpec::new(0.82e-9, 3.1e-3),
            comparator: DeviceSpec::new(623.7e-12, 0.055e-3),
            subtractor: DeviceSpec::new(719.95e-12, 0.0028e-3),
            lut: DeviceSpec::new(222.5e-12, 4.21e-3),
        }
    }
}

impl DeviceProfile {
    const NAMES: [&'static str; 10] = [
        "eo_tune",
        "to_tune",
        "vcsel",
        "photodetector",
        "soa",
        "dac",
        "adc",
        "comparator",
        "subtractor",
        "lut",
    ];

    fn slots_mut(&mut self) -> [&mut DeviceSpec; 10] {
        [
            &mut self.eo_tune,
            &mut self.to_tune,
            &mut self.vcsel,
            &mut self.photodetector,
            &mut self.soa,
            &mut self.dac,
            &mut self.adc,
            &mut self.comparator,
            &mut self.subtractor,
            &mut self.lut,
        ]
    }

    pub fn devices(&self) -> [(&'static str, DeviceSpec); 10] {
        let specs = [
            self.eo_tune,
            self.to_tune,
            self.vcsel,
            self.photodetector,
            self.soa,
            self.dac,
            self.adc,
            self.comparator,
            self.subtractor,
            self.lut,
        ];
        std::array::from_fn(|i| (Self::NAMES[i], specs[i]))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in self.devices() {
            if !(d.latency.is_finite() && d.latency > 0.0) {
                return domain(format!("{name}.latency must be positive, got {}", d.latency));
            }
            if !(d.power.is_finite() && d.power >= 0.0) {
                return domain(format!("{name}.power must be non-negative, got {}", d.power));
            }
        }
        Ok(())
    }

    /// Overlay `<device>.latency` / `<device>.power` keys onto the defaults.
    pub fn from_config(cfg: &mut ConfigFile) -> Result<Self> {
        let mut profile = Self::default();
        for (i, slot) in profile.slots_mut().into_iter().enumerate() {
            let name = Self::NAMES[i];
            if let Some(v) = cfg.take_quantity(&format!("{name}.latency"), Dim::Time)? {
                slot.latency = v;
            }
            if let Some(v) = cfg.take_quantity(&format!("{name}.power"), Dim::Power)? {
                slot.power = v;
            }
        }
        // 8-bit converter aliases
        for (alias, target) in [("dac8", &mut profile.dac), ("adc8", &mut profile.adc)] {
            if let Some(v) = cfg.take_quantity(&format!("{alias}.latency"), Dim::Time)? {
                target.latency = v;
            }
            if let Some(v) = cfg.take_quantity(&format!("{alias}.power"), Dim::Power)? {
                target.power = v;
            }
        }
        profile.validate()?;
        Ok(profile)
    }
}

/// Per-element optical losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub waveguide_db_per_cm: f64,
    pub splitter_db: f64,
    pub mr_through_db: f64,
    pub mr_modulation_db: f64,
    pub pd_sensitivity_dbm: f64,
}

impl Default for LossBudget {
    fn default() -> Self {
        Self {
            waveguide_db_per_cm: 1.0,
            splitter_db: 0.13,
            mr_through_db: 0.02,
            mr_modulation_db: 0.72,
            pd_sensitivity_dbm: -20.0,
        }
    }
}

impl LossBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("waveguide", self.waveguide_db_per_cm),
            ("splitter", self.splitter_db),
            ("mr_through", self.mr_through_db),
            ("mr_modulation", self.mr_modulation_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("loss.{name} must be non-negative, got {v}"));
            }
        }
        if !self.pd_sensitivity_dbm.is_finite() {
            return domain("loss.pd_sensitivity must be finite");
        }
        Ok(())
    }

    pub fn from_config(cfg: &mut ConfigFile) -> Result<Self> {
        let mut b = Self::default();
        if let Some(v) = cfg.take_quantity("loss.waveguide", Dim::DecibelPerCm)? {
            b.waveguide_db_per_cm = v;
        }
        if let Some(v) = cfg.take_quantity("loss.splitter", Dim::Decibel)? {
            b.splitter_db = v;
        }
        if let Some(v) = cfg.take_quantity("loss.mr_through", Dim::Decibel)? {
            b.mr_through_db = v;
        }
        if let Some(v) = cfg.take_quantity("loss.mr_modulation", Dim::Decibel)? {
            b.mr_modulation_db = v;
        }
        if let Some(v) = cfg.take_quantity("loss.pd_sensitivity", Dim::DecibelMilliwatt)? {
            b.pd_sensitivity_dbm = v;
        }
        b.validate()?;
        Ok(b)
    }
}

/// `λ = 2π·R·n_eff / m`.
pub fn mr_resonant_wavelength(radius: f64, order: u32, n_eff: f64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return domain(format!("MR radius must be positive, got {radius}"));
    }
    if order == 0 {
        return domain("resonance order must be at least 1");
    }
    if !(n_eff.is_finite() && n_eff > 0.0) {
        return domain(format!("effective index must be positive, got {n_eff}"));
    }
    Ok(2.0 * PI * radius * n_eff / order as f64)
}

/// A microring whose resonance is kept consistent with its geometry.
///
/// Tuning shifts the resonance by changing the effective index, so
/// `wavelength == 2π·radius·n_eff / order` holds after every update.
#[derive(Debug, Clone, PartialEq)]
pub struct MrDevice {
    radius: f64,
    order: u32,
    n_eff: f64,
    wavelength: f64,
    shift: f64,
}

impl MrDevice {
    pub fn new(radius: f64, order: u32, n_eff: f64) -> Result<Self> {
        let wavelength = mr_resonant_wavelength(radius, order, n_eff)?;
        Ok(Self { radius, order, n_eff, wavelength, shift: 0.0 })
    }

    /// Shift the resonance by `delta` metres (may be negative).
    pub fn tune(&mut self, delta: f64) -> Result<()> {
        let target = self.wavelength + delta;
        if !(target.is_finite() && target > 0.0) {
            return domain(format!("tuning by {delta} leaves a non-positive resonance"));
        }
        self.n_eff = target * self.order as f64 / (2.0 * PI * self.radius);
        self.wavelength = mr_resonant_wavelength(self.radius, self.order, self.n_eff)?;
        self.shift += delta;
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn n_eff(&self) -> f64 {
        self.n_eff
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
    /// Accumulated tuning shift relative to the fabricated resonance.
    pub fn shift(&self) -> f64 {
        self.shift
    }
}

/// Knobs of the hybrid tuning circuit not fixed by the device datasheet values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    /// Free spectral range the TO power figure is normalised to.
    pub fsr: f64,
    /// Multiplicative TO power reduction from thermal eigenmode decomposition.
    pub ted_factor: f64,
    /// Largest shift EO tuning can deliver.
    pub eo_range: f64,
    /// Mean resonance shift needed to imprint one value.
    pub imprint_shift: f64,
    /// Thermal events per tuning operation that force TO re-tuning.
    pub thermal_event_rate: f64,
}

impl Default for TuningParams {
    fn default() -> Self {
        Self {
            fsr: 20e-9,
            ted_factor: 1.0,
            eo_range: 1e-9,
            imprint_shift: 0.5e-9,
            thermal_event_rate: 0.0,
        }
    }
}

impl TuningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fsr > 0.0 && self.fsr.is_finite()) {
            return domain("tuning.fsr must be positive");
        }
        if !(self.ted_factor > 0.0 && self.ted_factor <= 1.0) {
            return domain("tuning.ted_factor must be in (0, 1]");
        }
        if !(self.eo_range >= 0.0 && self.imprint_shift >= 0.0) {
            return domain("tuning ranges must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.thermal_event_rate) {
            return domain("tuning.thermal_event_rate must be in [0, 1]");
        }
        Ok(())
    }

    pub fn from_config(cfg: &mut ConfigFile) -> Result<Self> {
        let mut t = Self::default();
        if let Some(v) = cfg.take_quantity("tuning.fsr", Dim::Length)? {
            t.fsr = v;
        }
        if let Some(v) = cfg.take_quantity("tuning.ted_factor", Dim::Dimensionless)? {
            t.ted_factor = v;
        }
        if let Some(v) = cfg.take_quantity("tuning.eo_range", Dim::Length)? {
            t.eo_range = v;
        }
        if let Some(v) = cfg.take_quantity("tuning.imprint_shift", Dim::Length)? {
            t.imprint_shift = v;
        }
        if let Some(v) = cfg.take_quantity("tuning.thermal_event_rate", Dim::Dimensionless)? {
            t.thermal_event_rate = v;
        }
        t.validate()?;
        Ok(t)
    }

    /// Deterministic thermal-event pattern: operation `index` sees an event
    /// whenever the running count `floor(rate·i)` advances.
    pub fn thermal_event_at(&self, index: u64) -> bool {
        if self.thermal_event_rate <= 0.0 {
            return false;
        }
        let r = self.thermal_event_rate;
        ((index + 1) as f64 * r).floor() > (index as f64 * r).floor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TuningMechanism {
    ElectroOptic,
    ThermoOptic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningChoice {
    pub mechanism: TuningMechanism,
    pub latency: f64,
    /// Energy for one MR.
    pub energy: f64,
}

/// Pick EO tuning unless the shift exceeds its range or a thermal event forces
/// a TO correction. `required_shift` and `eo_range` are in metres.
pub fn select_tuning(
    profile: &DeviceProfile,
    params: &TuningParams,
    required_shift: f64,
    eo_range: f64,
    thermal_event: bool,
) -> Result<TuningChoice> {
    if !(required_shift.is_finite() && required_shift >= 0.0) {
        return domain(format!("required shift must be non-negative, got {required_shift}"));
    }
    if required_shift <= eo_range && !thermal_event {
        let per_nm = profile.eo_tune.power;
        let power = per_nm * required_shift / 1e-9;
        Ok(TuningChoice {
            mechanism: TuningMechanism::ElectroOptic,
            latency: profile.eo_tune.latency,
            energy: power * profile.eo_tune.latency,
        })
    } else {
        let power = profile.to_tune.power * (required_shift / params.fsr) * params.ted_factor;
        Ok(TuningChoice {
            mechanism: TuningMechanism::ThermoOptic,
            latency: profile.to_tune.latency,
            energy: power * profile.to_tune.latency,
        })
    }
}

/// Elements an optical signal crosses between laser and detector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OpticalPath {
    pub waveguide_cm: f64,
    pub splitters: u32,
    pub through_mrs: u32,
    pub modulating_mrs: u32,
}

impl Add for OpticalPath {
    type Output = OpticalPath;
    fn add(self, o: OpticalPath) -> OpticalPath {
        OpticalPath {
            waveguide_cm: self.waveguide_cm + o.waveguide_cm,
            splitters: self.splitters + o.splitters,
            through_mrs: self.through_mrs + o.through_mrs,
            modulating_mrs: self.modulating_mrs + o.modulating_mrs,
        }
    }
}

/// Total insertion loss of `path` in dB.
pub fn link_loss(path: &OpticalPath, budget: &LossBudget) -> Result<f64> {
    if !(path.waveguide_cm.is_finite() && path.waveguide_cm >= 0.0) {
        return domain(format!("waveguide length must be non-negative, got {}", path.waveguide_cm));
    }
    Ok(path.waveguide_cm * budget.waveguide_db_per_cm
        + path.splitters as f64 * budget.splitter_db
        + path.through_mrs as f64 * budget.mr_through_db
        + path.modulating_mrs as f64 * budget.mr_modulation_db)
}

pub fn mw_to_dbm(milliwatts: f64) -> f64 {
    10.0 * milliwatts.log10()
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    mw_to_dbm(watts * 1e3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LinkVerdict {
    Feasible { received_dbm: f64, margin_db: f64 },
    Infeasible { received_dbm: f64, shortfall_db: f64 },
}

impl LinkVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LinkVerdict::Feasible { .. })
    }
}

pub fn check_link_feasible(laser_dbm: f64, loss_db: f64, pd_sensitivity_dbm: f64) -> Result<LinkVerdict> {
    if !(loss_db.is_finite() && loss_db >= 0.0) {
        return Err(Error::Domain(format!("loss must be non-negative, got {loss_db}")));
    }
    let received_dbm = laser_dbm - loss_db;
    let margin = received_dbm - pd_sensitivity_dbm;
    Ok(if margin >= 0.0 {
        LinkVerdict::Feasible { received_dbm, margin_db: margin }
    } else {
        LinkVerdict::Infeasible { received_dbm, shortfall_db: -margin }
    })
}
