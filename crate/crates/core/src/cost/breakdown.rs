use std::ops::{Add, AddAssign};

use serde::Serialize;

/// Energy (J) split by device class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyBreakdown {
    pub laser: f64,
    pub tuning: f64,
    pub dac: f64,
    pub adc: f64,
    pub pd: f64,
    pub soa: f64,
    pub ecu: f64,
    pub buffer: f64,
}

impl EnergyBreakdown {
    pub const CLASSES: [&'static str; 8] = ["laser", "tuning", "dac", "adc", "pd", "soa", "ecu", "buffer"];

    pub fn values(&self) -> [f64; 8] {
        [self.laser, self.tuning, self.dac, self.adc, self.pd, self.soa, self.ecu, self.buffer]
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    pub fn scale(&self, k: f64) -> Self {
        let v = self.values().map(|x| x * k);
        Self { laser: v[0], tuning: v[1], dac: v[2], adc: v[3], pd: v[4], soa: v[5], ecu: v[6], buffer: v[7] }
    }
}

impl Add for EnergyBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            laser: self.laser + o.laser,
            tuning: self.tuning + o.tuning,
            dac: self.dac + o.dac,
            adc: self.adc + o.adc,
            pd: self.pd + o.pd,
            soa: self.soa + o.soa,
            ecu: self.ecu + o.ecu,
            buffer: self.buffer + o.buffer,
        }
    }
}

impl AddAssign for EnergyBreakdown {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
