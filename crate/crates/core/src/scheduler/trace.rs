use serde::Serialize;

use crate::error::{Error, Result};

use super::timing::start_times;
use super::types::{EdgeKind, Schedule, Work};

/// One trace record per step of a timestep.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub step: u32,
    pub layer: u32,
    pub unit: String,
    pub kind: &'static str,
    pub stage: String,
    pub row_start: u32,
    pub row_end: u32,
    pub inner_start: u32,
    pub inner_end: u32,
    pub rows_used: u32,
    pub cols_used: u32,
    pub macs: u64,
    pub start_s: f64,
    pub duration_s: f64,
    pub dac_s: f64,
    pub tune_s: f64,
    pub propagate_s: f64,
    pub detect_s: f64,
    pub adc_s: f64,
    pub energy_j: f64,
    /// `from` + `d` (data), `r` (resource), `o` (order), `p` (pipelined resource), `;`-separated.
    pub deps: String,
}

pub const TRACE_HEADER: &str = "step,layer,unit,kind,stage,row_start,row_end,inner_start,inner_end,rows_used,cols_used,macs,start_s,duration_s,dac_s,tune_s,propagate_s,detect_s,adc_s,energy_j,deps";

pub fn trace_records(schedule: &Schedule) -> Vec<TraceRecord> {
    let (start, _) = start_times(&schedule.steps);
    schedule
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let deps = s
                .deps
                .iter()
                .map(|e| {
                    let tag = match (e.kind, e.overlap) {
                        (EdgeKind::Data, _) => 'd',
                        (EdgeKind::Resource, true) => 'p',
                        (EdgeKind::Resource, false) => 'r',
                        (EdgeKind::Order, _) => 'o',
                    };
                    format!("{}{tag}", e.from)
                })
                .collect::<Vec<_>>()
                .join(";");
            let mut r = TraceRecord {
                step: i as u32,
                layer: s.layer,
                unit: s.unit.to_string(),
                kind: "ecu",
                stage: String::new(),
                row_start: 0,
                row_end: 0,
                inner_start: 0,
                inner_end: 0,
                rows_used: 0,
                cols_used: 0,
                macs: 0,
                start_s: start[i],
                duration_s: s.duration(),
                dac_s: 0.0,
                tune_s: 0.0,
                propagate_s: 0.0,
                detect_s: 0.0,
                adc_s: 0.0,
                energy_j: 0.0,
                deps,
            };
            match &s.work {
                Work::Pass(p) => {
                    r.kind = "pass";
                    r.stage = p.stage.name();
                    [r.row_start, r.row_end] = p.rows;
                    [r.inner_start, r.inner_end] = p.inner;
                    r.rows_used = p.rows_used;
                    r.cols_used = p.cols_used;
                    r.macs = p.macs;
                    r.dac_s = p.phases.dac_convert.latency;
                    r.tune_s = p.phases.mr_tune.latency;
                    r.propagate_s = p.phases.optical_propagate.latency;
                    r.detect_s = p.phases.pd_detect.latency;
                    r.adc_s = p.phases.adc_convert.latency;
                    r.energy_j = p.phases.energy();
                }
                Work::Ecu(e) => {
                    r.stage = e.op.name();
                    r.row_start = e.row;
                    r.row_end = e.row + 1;
                    r.energy_j = e.energy.total();
                }
            }
            r
        })
        .collect()
}

/// The timestep trace as CSV with [`TRACE_HEADER`].
pub fn trace_csv(schedule: &Schedule) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in trace_records(schedule) {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
