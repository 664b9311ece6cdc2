use crate::cost::EnergyBreakdown;
use crate::devices::{select_tuning, TuningMechanism};
use crate::platform::Platform;

use super::types::{Activity, EcuOp, EdgeKind, PassOp, Phase, Phases, Schedule, Step};

/// Latency of one activation lane: VCSEL drive, SOA sigmoid, PD, MR tuning
/// with the sigmoid value, and the final PD.
pub fn activation_lane_latency(platform: &Platform) -> f64 {
    let p = &platform.profile;
    p.vcsel.latency + p.soa.latency + p.photodetector.latency + p.eo_tune.latency + p.photodetector.latency
}

fn per_mr_tuning_energy(platform: &Platform, mechanism: TuningMechanism) -> (f64, f64) {
    let t = &platform.tuning;
    let forced = mechanism == TuningMechanism::ThermoOptic;
    let choice = select_tuning(&platform.profile, t, t.imprint_shift, t.eo_range, forced)
        .expect("tuning parameters are validated with the platform");
    (choice.latency, choice.energy)
}

/// Phase latencies/energies and the per-class energy split of a pass.
pub fn evaluate(a: &Activity, platform: &Platform) -> (Phases, EnergyBreakdown) {
    let p = &platform.profile;
    let mut e = EnergyBreakdown::default();

    let dac_latency = if a.dac_conversions > 0 { p.dac.latency } else { 0.0 };
    let dac_devices = a.dac_conversions.div_ceil(a.dac_sharing.max(1));
    e.dac = dac_devices as f64 * p.dac.energy();

    let (tune_latency, tune_energy) = if a.tuned_mrs > 0 {
        let (lat, per_mr) = per_mr_tuning_energy(platform, a.tuning);
        (lat * a.dac_sharing.max(1) as f64, per_mr * a.tuned_mrs as f64)
    } else {
        (0.0, 0.0)
    };
    e.tuning = tune_energy;

    let propagate = match a.op {
        PassOp::Sigmoid => p.vcsel.latency + p.soa.latency,
        _ => p.vcsel.latency + platform.optics.flight_time(),
    };
    e.laser = a.lanes as f64 * p.vcsel.power * propagate;
    e.soa = a.soas as f64 * p.soa.energy();

    let detect = match a.op {
        PassOp::Sigmoid => 2.0 * p.photodetector.latency,
        _ => p.photodetector.latency,
    };
    e.pd = a.photodetectors as f64 * p.photodetector.energy();

    let adc_latency = if a.adc_conversions > 0 { p.adc.latency } else { 0.0 }
        + if a.accumulate_adds > 0 { p.subtractor.latency } else { 0.0 };
    e.adc = a.adc_conversions as f64 * p.adc.energy();
    e.ecu = a.accumulate_adds as f64 * p.subtractor.energy();
    e.buffer = a.buffer_accesses as f64 * platform.ecu.buffer_access_energy;

    let phases = Phases {
        dac_convert: Phase { latency: dac_latency, energy: e.dac },
        mr_tune: Phase { latency: tune_latency, energy: e.tuning },
        optical_propagate: Phase { latency: propagate, energy: e.laser + e.soa },
        pd_detect: Phase { latency: detect, energy: e.pd },
        adc_convert: Phase { latency: adc_latency, energy: e.adc + e.ecu + e.buffer },
    };
    (phases, e)
}

/// Latency and energy of an ECU event over `elements` values.
pub fn ecu_event_cost(op: EcuOp, elements: u32, platform: &Platform) -> (f64, EnergyBreakdown) {
    let p = &platform.profile;
    let n = elements as f64;
    let waves = elements.div_ceil(platform.ecu.lanes as u32).max(1) as f64;
    let buf = platform.ecu.buffer_access_energy;
    let mut e = EnergyBreakdown::default();
    let latency = match op {
        EcuOp::SoftmaxMax { .. } => {
            e.ecu = n * p.comparator.energy();
            e.buffer = n * buf;
            waves * p.comparator.latency
        }
        EcuOp::SoftmaxShift { .. } => {
            e.ecu = n * p.subtractor.energy();
            waves * p.subtractor.latency
        }
        EcuOp::SoftmaxLnSumExp { .. } => {
            e.ecu = n * (p.lut.energy() + p.subtractor.energy()) + p.lut.energy();
            waves * (p.lut.latency + p.subtractor.latency) + p.lut.latency
        }
        EcuOp::SoftmaxExp { .. } => {
            e.ecu = n * (p.subtractor.energy() + p.lut.energy());
            e.buffer = n * buf;
            waves * (p.subtractor.latency + p.lut.latency)
        }
        EcuOp::NormStats => {
            e.ecu = 2.0 * n * p.subtractor.energy();
            2.0 * waves * p.subtractor.latency
        }
        EcuOp::HeadConcat | EcuOp::SkipConcat => {
            e.buffer = 2.0 * n * buf;
            waves * platform.ecu.buffer_access_latency
        }
        EcuOp::DiffusionUpdate => {
            e.ecu = n * p.subtractor.energy();
            waves * p.subtractor.latency
        }
    };
    (latency, e)
}

/// Earliest start of every step under its dependency edges, and the makespan.
pub fn start_times(steps: &[Step]) -> (Vec<f64>, f64) {
    let mut start = vec![0.0f64; steps.len()];
    let mut makespan = 0.0f64;
    for (i, s) in steps.iter().enumerate() {
        let mut t = 0.0f64;
        for e in &s.deps {
            let j = e.from as usize;
            let pred = &steps[j];
            let ready = match e.kind {
                EdgeKind::Resource if e.overlap => {
                    start[j] + pred.front().max(pred.duration() - s.front())
                }
                EdgeKind::Data | EdgeKind::Resource | EdgeKind::Order => start[j] + pred.duration(),
            };
            t = t.max(ready);
        }
        start[i] = t;
        makespan = makespan.max(t + s.duration());
    }
    (start, makespan)
}

impl Schedule {
    /// Latency of one timestep.
    pub fn timestep_latency(&self) -> f64 {
        start_times(&self.steps).1
    }

    /// Sum of all step durations of one timestep.
    pub fn serial_latency(&self) -> f64 {
        self.steps.iter().map(|s| s.duration()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_latency_is_sum_of_devices() {
        let t = activation_lane_latency(&Platform::default());
        assert!((t - 20.3816e-9).abs() < 1e-18);
    }
}
