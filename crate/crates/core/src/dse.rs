//! Exhaustive design-space exploration over architecture tuples.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::arch::ArchConfig;
use crate::config::ConfigFile;
use crate::cost::{evaluate_design, to_csv};
use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::scheduler::Optimizations;
use crate::workload::{preset, WorkloadGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Objective {
    #[default]
    GopsPerEpb,
    Gops,
    InverseEpb,
}

impl Objective {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "gops_per_epb" => Ok(Objective::GopsPerEpb),
            "gops" => Ok(Objective::Gops),
            "inverse_epb" => Ok(Objective::InverseEpb),
            other => Err(Error::Schema(format!(
                "unknown objective `{other}` (expected gops_per_epb, gops, inverse_epb)"
            ))),
        }
    }

    pub fn score(&self, gops: f64, epb: f64) -> f64 {
        let inv = if epb > 0.0 { 1.0 / epb } else { 0.0 };
        match self {
            Objective::GopsPerEpb => gops * inv,
            Objective::Gops => gops,
            Objective::InverseEpb => inv,
        }
    }
}

/// Candidate architectures, either listed explicitly or as the Cartesian
/// product of per-parameter lists, plus the workloads each point is scored on.
#[derive(Debug, Clone)]
pub struct DseSpace {
    pub points: Vec<ArchConfig>,
    pub workloads: Vec<WorkloadGraph>,
    pub opts: Optimizations,
    pub objective: Objective,
}

/// Per-parameter candidate lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub y: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub h: Vec<usize>,
    pub l: Vec<usize>,
    pub m: Vec<usize>,
    pub dac_sharing: Vec<usize>,
}

impl Grid {
    pub fn points(&self) -> Vec<ArchConfig> {
        let mut out = Vec::new();
        for &y in &self.y {
            for &n in &self.n {
                for &k in &self.k {
                    for &h in &self.h {
                        for &l in &self.l {
                            for &m in &self.m {
                                for &s in &self.dac_sharing {
                                    out.push(ArchConfig::new(y, n, k, h, l, m).with_dac_sharing(s));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

impl DseSpace {
    pub fn new(points: Vec<ArchConfig>, workloads: Vec<WorkloadGraph>) -> Self {
        Self { points, workloads, opts: Optimizations::ALL, objective: Objective::default() }
    }

    /// Read `dse.points = Y,N,K,H,L,M; ...` or the grid keys `dse.y` … `dse.m`
    /// and `dse.dac_sharing`, with `dse.workloads`, `dse.opts` and
    /// `dse.objective`. `default_workloads` is used when the file names none.
    pub fn from_config(cfg: &mut ConfigFile, default_workloads: Vec<WorkloadGraph>) -> Result<Self> {
        let mut points = Vec::new();
        if let Some((text, line)) = cfg.take_raw("dse.points") {
            for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let a = ArchConfig::parse(item).map_err(|e| Error::Config { line, message: format!("dse.points: {e}") })?;
                points.push(a);
            }
        }
        let reference = ArchConfig::default();
        let mut list = |key: &str, dflt: usize| -> Result<Option<Vec<usize>>> {
            Ok(cfg.take_usize_list(key)?.map(|v| if v.is_empty() { vec![dflt] } else { v }))
        };
        let keys = [
            list("dse.y", reference.y)?,
            list("dse.n", reference.n)?,
            list("dse.k", reference.k)?,
            list("dse.h", reference.h)?,
            list("dse.l", reference.l)?,
            list("dse.m", reference.m)?,
            list("dse.dac_sharing", reference.dac_sharing)?,
        ];
        if keys.iter().any(Option::is_some) {
            let pick = |i: usize, d: usize| keys[i].clone().unwrap_or_else(|| vec![d]);
            let grid = Grid {
                y: pick(0, reference.y),
                n: pick(1, reference.n),
                k: pick(2, reference.k),
                h: pick(3, reference.h),
                l: pick(4, reference.l),
                m: pick(5, reference.m),
                dac_sharing: pick(6, reference.dac_sharing),
            };
            points.extend(grid.points());
        }
        let workloads = match cfg.take_string_list("dse.workloads") {
            Some(names) => names.iter().map(|n| preset(n)).collect::<Result<Vec<_>>>()?,
            None => default_workloads,
        };
        let opts = match cfg.take_raw("dse.opts") {
            Some((v, line)) => Optimizations::parse(&v).map_err(|e| Error::Config { line, message: e.to_string() })?,
            None => Optimizations::ALL,
        };
        let objective = match cfg.take_raw("dse.objective") {
            Some((v, line)) => Objective::parse(&v).map_err(|e| Error::Config { line, message: e.to_string() })?,
            None => Objective::default(),
        };
        Ok(Self { points, workloads, opts, objective })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DsePoint {
    pub arch: ArchConfig,
    /// Mean over the space's workloads.
    pub gops: f64,
    pub epb_j_per_bit: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excluded {
    pub arch: ArchConfig,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DseResult {
    /// Best first.
    pub ranked: Vec<DsePoint>,
    pub excluded: Vec<Excluded>,
    pub frontier: Vec<DsePoint>,
}

fn arch_key(a: &ArchConfig) -> ([usize; 6], usize) {
    (a.tuple(), a.dac_sharing)
}

/// Objective descending, then GOPS descending, EPB ascending, config ascending.
pub fn rank_order(a: &DsePoint, b: &DsePoint) -> Ordering {
    b.objective
        .total_cmp(&a.objective)
        .then(b.gops.total_cmp(&a.gops))
        .then(a.epb_j_per_bit.total_cmp(&b.epb_j_per_bit))
        .then_with(|| arch_key(&a.arch).cmp(&arch_key(&b.arch)))
}

/// Score one configuration; `Err(reason)` when it is infeasible.
pub fn evaluate_point(arch: &ArchConfig, space: &DseSpace, platform: &Platform) -> std::result::Result<DsePoint, String> {
    if space.workloads.is_empty() {
        return Err("no workloads to evaluate".into());
    }
    let (mut gops, mut epb) = (0.0, 0.0);
    for g in &space.workloads {
        let r = evaluate_design(g, arch, space.opts, platform).map_err(|e| e.to_string())?;
        if let Some(reason) = r.infeasibility() {
            return Err(reason);
        }
        gops += r.gops;
        epb += r.epb_j_per_bit;
    }
    let n = space.workloads.len() as f64;
    let (gops, epb) = (gops / n, epb / n);
    Ok(DsePoint { arch: *arch, gops, epb_j_per_bit: epb, objective: space.objective.score(gops, epb) })
}

/// `a` is at least as good on both axes and strictly better on one.
pub fn dominates(a: &DsePoint, b: &DsePoint) -> bool {
    a.gops >= b.gops && a.epb_j_per_bit <= b.epb_j_per_bit && (a.gops > b.gops || a.epb_j_per_bit < b.epb_j_per_bit)
}

/// Non-dominated points under (maximise GOPS, minimise EPB), sorted by GOPS
/// descending. Points with identical coordinates are all kept.
pub fn report_frontier(points: &[DsePoint]) -> Result<Vec<DsePoint>> {
    if points.is_empty() {
        return Err(Error::Empty("frontier needs at least one feasible result".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        b.gops
            .total_cmp(&a.gops)
            .then(a.epb_j_per_bit.total_cmp(&b.epb_j_per_bit))
            .then_with(|| arch_key(&a.arch).cmp(&arch_key(&b.arch)))
    });
    let mut frontier: Vec<DsePoint> = Vec::new();
    let mut best_epb = f64::INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let gops = sorted[i].gops;
        let group_end = sorted[i..].iter().position(|p| p.gops != gops).map_or(sorted.len(), |o| i + o);
        let group_best = sorted[i].epb_j_per_bit;
        if group_best < best_epb {
            frontier.extend(sorted[i..group_end].iter().filter(|p| p.epb_j_per_bit == group_best));
            best_epb = group_best;
        }
        i = group_end;
    }
    Ok(frontier)
}

/// Evaluate every candidate (in parallel), rank the feasible ones and
/// compute their frontier. Duplicate candidates are evaluated once.
pub fn explore(space: &DseSpace, platform: &Platform) -> Result<DseResult> {
    if space.points.is_empty() {
        return Err(Error::Empty("design space has no points".into()));
    }
    let mut candidates = space.points.clone();
    candidates.sort_by_key(arch_key);
    candidates.dedup_by_key(|a| arch_key(a));
    let outcomes: Vec<_> = candidates.par_iter().map(|a| (*a, evaluate_point(a, space, platform))).collect();
    let mut ranked = Vec::new();
    let mut excluded = Vec::new();
    for (arch, o) in outcomes {
        match o {
            Ok(p) => ranked.push(p),
            Err(reason) => excluded.push(Excluded { arch, reason }),
        }
    }
    if ranked.is_empty() {
        let reasons: Vec<String> = excluded.iter().map(|e| format!("[{}]: {}", e.arch, e.reason)).collect();
        return Err(Error::Infeasible(format!("every design point is infeasible; {}", reasons.join("; "))));
    }
    ranked.sort_by(rank_order);
    let frontier = report_frontier(&ranked)?;
    Ok(DseResult { ranked, excluded, frontier })
}

#[derive(Debug, Clone, Serialize)]
pub struct DseRow {
    pub rank: Option<usize>,
    pub arch: String,
    pub dac_sharing: usize,
    pub gops: Option<f64>,
    pub epb_j_per_bit: Option<f64>,
    pub objective: Option<f64>,
    pub feasible: bool,
    pub reason: String,
}

pub const DSE_HEADER: &str = "rank,arch,dac_sharing,gops,epb_j_per_bit,objective,feasible,reason";
pub const FRONTIER_HEADER: &str = "arch,dac_sharing,gops,epb_j_per_bit,objective";

#[derive(Debug, Clone, Serialize)]
struct FrontierRow {
    arch: String,
    dac_sharing: usize,
    gops: f64,
    epb_j_per_bit: f64,
    objective: f64,
}

impl DseResult {
    /// One row per configuration: ranked points, then exclusions.
    pub fn results_csv(&self) -> Result<String> {
        let mut rows: Vec<DseRow> = self
            .ranked
            .iter()
            .enumerate()
            .map(|(i, p)| DseRow {
                rank: Some(i + 1),
                arch: p.arch.to_string(),
                dac_sharing: p.arch.dac_sharing,
                gops: Some(p.gops),
                epb_j_per_bit: Some(p.epb_j_per_bit),
                objective: Some(p.objective),
                feasible: true,
                reason: String::new(),
            })
            .collect();
        rows.extend(self.excluded.iter().map(|e| DseRow {
            rank: None,
            arch: e.arch.to_string(),
            dac_sharing: e.arch.dac_sharing,
            gops: None,
            epb_j_per_bit: None,
            objective: None,
            feasible: false,
            reason: e.reason.clone(),
        }));
        to_csv(&rows)
    }

    pub fn frontier_csv(&self) -> Result<String> {
        let rows: Vec<FrontierRow> = self
            .frontier
            .iter()
            .map(|p| FrontierRow {
                arch: p.arch.to_string(),
                dac_sharing: p.arch.dac_sharing,
                gops: p.gops,
                epb_j_per_bit: p.epb_j_per_bit,
                objective: p.objective,
            })
            .collect();
        to_csv(&rows)
    }
}
