//! Aggregation of a compiled schedule into latency, energy, throughput and
//! efficiency, plus optical link checks and the comparison tables.

mod breakdown;

use std::collections::BTreeMap;

use serde::Serialize;

pub use breakdown::EnergyBreakdown;

use crate::arch::{build_inventory, check_waveguide_constraint, ArchConfig, WaveguideVerdict};
use crate::devices::{check_link_feasible, link_loss, watts_to_dbm, LinkVerdict, OpticalPath};
use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::scheduler::{compile, evaluate, start_times, Optimizations, Schedule, Work};
use crate::workload::WorkloadGraph;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub layer: usize,
    pub kind: String,
    pub passes: usize,
    pub ecu_events: usize,
    pub dense_macs: u64,
    pub executed_macs: u64,
    pub eliminated_macs: u64,
    /// Span from the layer's first start to its last finish within a timestep (s).
    pub span_s: f64,
    /// Energy over all timesteps (J).
    pub energy_j: f64,
    pub breakdown: EnergyBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimestepCost {
    pub timestep: usize,
    pub start_s: f64,
    pub latency_s: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitUtilization {
    pub unit: String,
    /// Busy time per timestep (s).
    pub busy_s: f64,
    pub utilization: f64,
}

/// Power budget of the worst-case signal path through one kind of bank. The
/// laser's power is split evenly over the bank's rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkCheck {
    pub path: String,
    pub rows: usize,
    pub optical_path: OpticalPath,
    pub laser_dbm: f64,
    pub loss_db: f64,
    pub verdict: LinkVerdict,
}

impl LinkCheck {
    pub fn received_dbm(&self) -> f64 {
        match self.verdict {
            LinkVerdict::Feasible { received_dbm, .. } | LinkVerdict::Infeasible { received_dbm, .. } => received_dbm,
        }
    }

    /// Positive margin or negative shortfall (dB).
    pub fn margin_db(&self) -> f64 {
        match self.verdict {
            LinkVerdict::Feasible { margin_db, .. } => margin_db,
            LinkVerdict::Infeasible { shortfall_db, .. } => -shortfall_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub workload: String,
    pub arch: ArchConfig,
    pub opts: Optimizations,
    pub timesteps: usize,
    /// End-to-end latency of all timesteps (s).
    pub latency_s: f64,
    pub timestep_latency_s: f64,
    pub energy_j: f64,
    pub breakdown: EnergyBreakdown,
    /// MACs executed over all timesteps.
    pub executed_macs: u64,
    pub eliminated_macs: u64,
    pub passes_per_timestep: usize,
    pub gops: f64,
    pub epb_j_per_bit: f64,
    pub layers: Vec<LayerCost>,
    pub timestep_table: Vec<TimestepCost>,
    pub utilization: Vec<UnitUtilization>,
    pub waveguide: WaveguideVerdict,
    pub links: Vec<LinkCheck>,
}

impl CostReport {
    pub fn feasible(&self) -> bool {
        self.waveguide.is_feasible() && self.links.iter().all(|l| l.verdict.is_feasible())
    }

    /// Why the design point is infeasible, if it is.
    pub fn infeasibility(&self) -> Option<String> {
        if let Some(r) = self.waveguide.reason() {
            return Some(r);
        }
        self.links.iter().find(|l| !l.verdict.is_feasible()).map(|l| {
            format!("{} link short by {:.3} dB", l.path, -l.margin_db())
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn link_checks(cfg: &ArchConfig, platform: &Platform) -> Result<Vec<LinkCheck>> {
    let ArchConfig { n, k, l, m, .. } = *cfg;
    let wg = platform.optics.block_path_cm;
    let path = |rows: usize, cols: usize| OpticalPath {
        waveguide_cm: wg,
        splitters: (rows as f64).log2().ceil() as u32,
        through_mrs: 2 * (cols as u32 - 1) + 1,
        modulating_mrs: 2,
    };
    let laser = watts_to_dbm(platform.profile.vcsel.power);
    [("conv", k, n), ("attention_upper", m, l), ("attention_lower", m, n), ("linear", m, l)]
        .into_iter()
        .map(|(name, rows, cols)| {
            let p = path(rows, cols);
            let loss = link_loss(&p, &platform.budget)?;
            let laser_dbm = laser - 10.0 * (rows as f64).log10();
            Ok(LinkCheck {
                path: name.into(),
                rows,
                optical_path: p,
                laser_dbm,
                loss_db: loss,
                verdict: check_link_feasible(laser_dbm, loss, platform.budget.pd_sensitivity_dbm)?,
            })
        })
        .collect()
}

/// Roll a timestep schedule up into a report over all `T` timesteps.
pub fn aggregate(schedule: &Schedule, platform: &Platform) -> Result<CostReport> {
    platform.validate()?;
    let t = schedule.timesteps as f64;
    let (start, makespan) = start_times(&schedule.steps);

    let step_energy: Vec<EnergyBreakdown> = schedule
        .steps
        .iter()
        .map(|s| match &s.work {
            Work::Pass(p) => evaluate(&p.activity, platform).1,
            Work::Ecu(e) => e.energy,
        })
        .collect();
    let per_step: EnergyBreakdown = step_energy.iter().fold(EnergyBreakdown::default(), |a, &b| a + b);
    let mut breakdown = per_step.scale(t);
    let latency = makespan * t;

    if platform.always_on {
        let inv = build_inventory(&schedule.arch.with_dac_sharing(schedule.dac_sharing)).total;
        let p = &platform.profile;
        breakdown.laser = inv.vcsels as f64 * p.vcsel.power * latency;
        breakdown.dac = inv.dacs as f64 * p.dac.power * latency;
        breakdown.adc = inv.adcs as f64 * p.adc.power * latency;
        breakdown.pd = inv.photodetectors as f64 * p.photodetector.power * latency;
        breakdown.soa = inv.soas as f64 * p.soa.power * latency;
    }
    let energy = breakdown.total();

    let layer_cost = |idx: usize, kind: String, range: std::ops::Range<u32>, dense: u64, elim: u64| {
        let steps = &schedule.steps[range.start as usize..range.end as usize];
        let b = step_energy[range.start as usize..range.end as usize]
            .iter()
            .fold(EnergyBreakdown::default(), |a, &b| a + b)
            .scale(t);
        let span = if range.is_empty() {
            0.0
        } else {
            let first = range.clone().map(|i| start[i as usize]).fold(f64::INFINITY, f64::min);
            let last = range.clone().map(|i| start[i as usize] + schedule.steps[i as usize].duration()).fold(0.0, f64::max);
            last - first
        };
        LayerCost {
            layer: idx,
            kind,
            passes: steps.iter().filter(|s| s.pass().is_some()).count(),
            ecu_events: steps.iter().filter(|s| s.pass().is_none()).count(),
            dense_macs: dense,
            executed_macs: steps.iter().map(|s| s.macs()).sum(),
            eliminated_macs: elim,
            span_s: span,
            energy_j: b.total(),
            breakdown: b,
        }
    };
    let mut layers: Vec<LayerCost> = schedule
        .layers
        .iter()
        .enumerate()
        .map(|(i, lp)| layer_cost(i, lp.kind.clone(), lp.steps.clone(), lp.dense_macs, lp.eliminated_macs))
        .collect();
    if !schedule.tail.is_empty() {
        layers.push(layer_cost(schedule.layers.len(), "diffusion_update".into(), schedule.tail.clone(), 0, 0));
    }

    let mut busy: BTreeMap<_, f64> = BTreeMap::new();
    for s in &schedule.steps {
        *busy.entry(s.unit).or_default() += s.duration();
    }
    let utilization = busy
        .into_iter()
        .map(|(u, b)| UnitUtilization {
            unit: u.to_string(),
            busy_s: b,
            utilization: if makespan > 0.0 { b / makespan } else { 0.0 },
        })
        .collect();

    let per_ts_energy = per_step.total();
    let timestep_table = (0..schedule.timesteps)
        .map(|i| TimestepCost {
            timestep: i,
            start_s: i as f64 * makespan,
            latency_s: makespan,
            energy_j: if platform.always_on { energy / t } else { per_ts_energy },
        })
        .collect();

    let executed = schedule.executed_macs() * schedule.timesteps as u64;
    let ops = 2.0 * executed as f64;
    let gops = if latency > 0.0 && executed > 0 { ops / latency / 1e9 } else { 0.0 };
    let bits = ops * schedule.arch.bit_width as f64;
    let epb = if bits > 0.0 { energy / bits } else { 0.0 };

    Ok(CostReport {
        workload: schedule.workload.clone(),
        arch: schedule.arch,
        opts: schedule.opts,
        timesteps: schedule.timesteps,
        latency_s: latency,
        timestep_latency_s: makespan,
        energy_j: energy,
        breakdown,
        executed_macs: executed,
        eliminated_macs: schedule.eliminated_macs() * schedule.timesteps as u64,
        passes_per_timestep: schedule.pass_count(),
        gops,
        epb_j_per_bit: epb,
        layers,
        timestep_table,
        utilization,
        waveguide: check_waveguide_constraint(&schedule.arch),
        links: link_checks(&schedule.arch, platform)?,
    })
}

/// Compile and aggregate in one call.
pub fn evaluate_design(graph: &WorkloadGraph, cfg: &ArchConfig, opts: Optimizations, platform: &Platform) -> Result<CostReport> {
    aggregate(&compile(graph, cfg, opts, platform)?, platform)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub workload: String,
    pub variant: &'static str,
    pub energy_j: f64,
    pub normalized_energy: f64,
}

/// The five ablation variants in table order.
pub const ABLATION_VARIANTS: [(&str, Optimizations); 5] = [
    ("baseline", Optimizations::NONE),
    ("sparsity", Optimizations { sparsity: true, pipelining: false, dac_sharing: false }),
    ("pipelining", Optimizations { sparsity: false, pipelining: true, dac_sharing: false }),
    ("dac_sharing", Optimizations { sparsity: false, pipelining: false, dac_sharing: true }),
    ("combined", Optimizations::ALL),
];

/// Energy of each variant normalised to the unoptimised baseline.
pub fn ablation(graph: &WorkloadGraph, cfg: &ArchConfig, platform: &Platform) -> Result<Vec<AblationRow>> {
    let energies = ABLATION_VARIANTS
        .iter()
        .map(|(_, o)| evaluate_design(graph, cfg, *o, platform).map(|r| r.energy_j))
        .collect::<Result<Vec<_>>>()?;
    let base = energies[0];
    Ok(ABLATION_VARIANTS
        .iter()
        .zip(energies)
        .enumerate()
        .map(|(i, ((name, _), e))| AblationRow {
            workload: graph.name.clone(),
            variant: name,
            energy_j: e,
            normalized_energy: if i == 0 { 1.0 } else { e / base },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub latency_s: f64,
    pub energy_j: f64,
    pub gops: f64,
    pub epb_j_per_bit: f64,
    pub gops_ratio: f64,
    pub epb_ratio: f64,
}

pub const COMPARE_HEADER: &str = "label,latency_s,energy_j,gops,epb_j_per_bit,gops_ratio,epb_ratio";

/// Rank reports by GOPS (descending, then EPB ascending, then label) with
/// GOPS and EPB ratios against entry `reference`.
pub fn compare_table(reports: &[(String, &CostReport)], reference: usize) -> Result<Vec<CompareRow>> {
    let (_, r) = reports.get(reference).ok_or_else(|| Error::Empty("compare_table needs at least one report".into()))?;
    let ratio = |a: f64, b: f64| if b != 0.0 { a / b } else { 0.0 };
    let mut rows: Vec<CompareRow> = reports
        .iter()
        .map(|(label, c)| CompareRow {
            label: label.clone(),
            latency_s: c.latency_s,
            energy_j: c.energy_j,
            gops: c.gops,
            epb_j_per_bit: c.epb_j_per_bit,
            gops_ratio: ratio(c.gops, r.gops),
            epb_ratio: ratio(c.epb_j_per_bit, r.epb_j_per_bit),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.gops.total_cmp(&a.gops).then(a.epb_j_per_bit.total_cmp(&b.epb_j_per_bit)).then_with(|| a.label.cmp(&b.label))
    });
    Ok(rows)
}

/// Serialize rows as CSV; the header comes from the row type's field names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Flat one-line summary used for `report.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub workload: String,
    pub arch: String,
    pub opts: String,
    pub timesteps: usize,
    pub latency_s: f64,
    pub energy_j: f64,
    pub gops: f64,
    pub epb_j_per_bit: f64,
    pub executed_macs: u64,
    pub eliminated_macs: u64,
    pub passes_per_timestep: usize,
    pub laser_j: f64,
    pub tuning_j: f64,
    pub dac_j: f64,
    pub adc_j: f64,
    pub pd_j: f64,
    pub soa_j: f64,
    pub ecu_j: f64,
    pub buffer_j: f64,
    pub feasible: bool,
}

pub const SUMMARY_HEADER: &str = "workload,arch,opts,timesteps,latency_s,energy_j,gops,epb_j_per_bit,executed_macs,eliminated_macs,passes_per_timestep,laser_j,tuning_j,dac_j,adc_j,pd_j,soa_j,ecu_j,buffer_j,feasible";

impl From<&CostReport> for SummaryRow {
    fn from(r: &CostReport) -> Self {
        let b = &r.breakdown;
        Self {
            workload: r.workload.clone(),
            arch: r.arch.to_string(),
            opts: r.opts.label(),
            timesteps: r.timesteps,
            latency_s: r.latency_s,
            energy_j: r.energy_j,
            gops: r.gops,
            epb_j_per_bit: r.epb_j_per_bit,
            executed_macs: r.executed_macs,
            eliminated_macs: r.eliminated_macs,
            passes_per_timestep: r.passes_per_timestep,
            laser_j: b.laser,
            tuning_j: b.tuning,
            dac_j: b.dac,
            adc_j: b.adc,
            pd_j: b.pd,
            soa_j: b.soa,
            ecu_j: b.ecu,
            buffer_j: b.buffer,
            feasible: r.feasible(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerRow {
    pub layer: usize,
    pub kind: String,
    pub passes: usize,
    pub ecu_events: usize,
    pub dense_macs: u64,
    pub executed_macs: u64,
    pub eliminated_macs: u64,
    pub span_s: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkRow {
    pub path: String,
    pub rows: usize,
    pub laser_dbm: f64,
    pub loss_db: f64,
    pub received_dbm: f64,
    pub margin_db: f64,
    pub feasible: bool,
}

impl CostReport {
    pub fn summary_csv(&self) -> Result<String> {
        to_csv(&[SummaryRow::from(self)])
    }

    pub fn layers_csv(&self) -> Result<String> {
        let rows: Vec<LayerRow> = self
            .layers
            .iter()
            .map(|l| LayerRow {
                layer: l.layer,
                kind: l.kind.clone(),
                passes: l.passes,
                ecu_events: l.ecu_events,
                dense_macs: l.dense_macs,
                executed_macs: l.executed_macs,
                eliminated_macs: l.eliminated_macs,
                span_s: l.span_s,
                energy_j: l.energy_j,
            })
            .collect();
        to_csv(&rows)
    }

    pub fn links_csv(&self) -> Result<String> {
        let rows: Vec<LinkRow> = self
            .links
            .iter()
            .map(|l| LinkRow {
                path: l.path.clone(),
                rows: l.rows,
                laser_dbm: l.laser_dbm,
                loss_db: l.loss_db,
                received_dbm: l.received_dbm(),
                margin_db: l.margin_db(),
                feasible: l.verdict.is_feasible(),
            })
            .collect();
        to_csv(&rows)
    }

    pub fn utilization_csv(&self) -> Result<String> {
        to_csv(&self.utilization)
    }

    pub fn timesteps_csv(&self) -> Result<String> {
        to_csv(&self.timestep_table)
    }
}
