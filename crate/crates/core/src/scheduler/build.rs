use std::collections::BTreeMap;

use crate::arch::{check_waveguide_constraint, ArchConfig};
use crate::devices::TuningMechanism;
use crate::error::{Error, Result};
use crate::numerics::conv::TransposeConvPattern;
use crate::platform::Platform;
use crate::workload::{LayerKind, SkipMode, WorkloadGraph};

use super::tile::{longest_first, tile_gemm, tile_ragged, TileSpec};
use super::timing::{ecu_event_cost, evaluate};
use super::transforms::{apply_dac_sharing, apply_pipelining};
use super::types::*;

struct Builder<'a> {
    platform: &'a Platform,
    cfg: ArchConfig,
    steps: Vec<Step>,
    last_on_unit: BTreeMap<Unit, u32>,
    barrier: Vec<u32>,
    layer_units: BTreeMap<Unit, u32>,
    layer: u32,
    layer_start: u32,
    conv_rr: usize,
    pass_counter: u64,
    plans: Vec<LayerPlan>,
}

/// Elementwise tiles of at most `lanes` values.
fn lanes(elements: usize, lanes: usize) -> Vec<TileSpec> {
    (0..elements)
        .step_by(lanes)
        .map(|e0| {
            let e1 = (e0 + lanes).min(elements);
            TileSpec { rows: [e0 as u32, e1 as u32], inner: [0, 1], rows_used: (e1 - e0) as u32, cols_used: 1, macs: 0 }
        })
        .collect()
}

fn activity(op: PassOp, t: &TileSpec, tuning: TuningMechanism) -> Activity {
    let r = t.rows_used;
    let base = Activity {
        op,
        dac_conversions: 0,
        dac_sharing: 1,
        tuned_mrs: 0,
        tuning,
        lanes: 0,
        photodetectors: 0,
        soas: 0,
        adc_conversions: r,
        accumulate_adds: 0,
        buffer_accesses: r,
    };
    match op {
        PassOp::Gemm => {
            let imprinted = 2 * t.macs as u32;
            Activity {
                dac_conversions: imprinted,
                tuned_mrs: imprinted,
                lanes: t.cols_used,
                photodetectors: 2 * r,
                accumulate_adds: if t.inner[0] > 0 { r } else { 0 },
                ..base
            }
        }
        PassOp::NormScale => Activity {
            dac_conversions: 2 * r,
            tuned_mrs: 2 * r,
            lanes: 1,
            photodetectors: 2 * r,
            accumulate_adds: r,
            ..base
        },
        PassOp::Sigmoid => Activity {
            dac_conversions: r,
            tuned_mrs: r,
            lanes: r,
            soas: r,
            photodetectors: 2 * r,
            ..base
        },
        PassOp::CoherentAdd => Activity { dac_conversions: 2 * r, lanes: 2 * r, photodetectors: r, ..base },
    }
}

impl<'a> Builder<'a> {
    fn new(platform: &'a Platform, cfg: ArchConfig) -> Self {
        Self {
            platform,
            cfg,
            steps: Vec::new(),
            last_on_unit: BTreeMap::new(),
            barrier: Vec::new(),
            layer_units: BTreeMap::new(),
            layer: 0,
            layer_start: 0,
            conv_rr: 0,
            pass_counter: 0,
            plans: Vec::new(),
        }
    }

    fn push(&mut self, unit: Unit, work: Work, data: &[u32]) -> u32 {
        let id = self.steps.len() as u32;
        let mut deps: Vec<Edge> = data.iter().map(|&from| Edge { from, kind: EdgeKind::Data, overlap: false }).collect();
        if !self.layer_units.contains_key(&unit) {
            deps.extend(self.barrier.iter().map(|&from| Edge { from, kind: EdgeKind::Data, overlap: false }));
        }
        if let Some(&prev) = self.last_on_unit.get(&unit) {
            deps.push(Edge { from: prev, kind: EdgeKind::Resource, overlap: false });
        }
        if id > 0 {
            deps.push(Edge { from: id - 1, kind: EdgeKind::Order, overlap: false });
        }
        deps.sort_by_key(|e| (e.from, e.kind as u8));
        deps.dedup();
        self.steps.push(Step { layer: self.layer, unit, work, deps });
        self.last_on_unit.insert(unit, id);
        self.layer_units.insert(unit, id);
        id
    }

    fn pass(&mut self, unit: Unit, stage: Stage, op: PassOp, tile: &TileSpec, data: &[u32]) -> u32 {
        let tuning = if self.platform.tuning.thermal_event_at(self.pass_counter) {
            TuningMechanism::ThermoOptic
        } else {
            TuningMechanism::ElectroOptic
        };
        self.pass_counter += 1;
        let act = activity(op, tile, tuning);
        let (phases, _) = evaluate(&act, self.platform);
        let p = TilePass {
            stage,
            rows: tile.rows,
            inner: tile.inner,
            rows_used: tile.rows_used,
            cols_used: tile.cols_used,
            macs: tile.macs,
            activity: act,
            phases,
        };
        self.push(unit, Work::Pass(p), data)
    }

    fn ecu(&mut self, unit: Unit, op: EcuOp, row: u32, elements: usize, data: &[u32]) -> u32 {
        let (latency, energy) = ecu_event_cost(op, elements as u32, self.platform);
        self.push(unit, Work::Ecu(EcuEvent { op, row, elements: elements as u32, latency, energy }), data)
    }

    fn next_conv_unit(&mut self) -> Unit {
        let u = Unit::Conv((self.conv_rr % self.cfg.y) as u16);
        self.conv_rr += 1;
        u
    }

    /// Emit a pass grid; only the first pass carries the `data` dependencies,
    /// later ones follow it on their unit or through program order.
    fn grid(&mut self, stage: Stage, op: PassOp, tiles: &[TileSpec], unit: Option<Unit>, data: &[u32]) -> Option<u32> {
        let mut last = None;
        for (i, t) in tiles.iter().enumerate() {
            let u = unit.unwrap_or_else(|| self.next_conv_unit());
            let deps = if i == 0 || unit.is_none() { data } else { &[] };
            last = Some(self.pass(u, stage, op, t, deps));
        }
        last
    }

    fn begin_layer(&mut self, layer: usize) {
        self.layer = layer as u32;
        self.layer_start = self.steps.len() as u32;
        self.layer_units.clear();
    }

    fn end_layer(&mut self, kind: &str, dense_macs: u64, eliminated_macs: u64, row_order: Option<Vec<u32>>) {
        let range = self.layer_start..self.steps.len() as u32;
        let executed: u64 = self.steps[range.start as usize..].iter().map(|s| s.macs()).sum();
        if !self.layer_units.is_empty() {
            self.barrier = self.layer_units.values().copied().collect();
        }
        self.plans.push(LayerPlan { kind: kind.to_string(), steps: range, dense_macs, executed_macs: executed, eliminated_macs, row_order });
    }

    fn attention(&mut self, seq: usize, c: usize, heads: usize, d_k: usize) {
        let (m, l, n) = (self.cfg.m, self.cfg.l, self.cfg.n);
        let d_v = c / heads;
        let mut head_ends = Vec::with_capacity(heads);
        for hd in 0..heads {
            let b = (hd % self.cfg.h) as u16;
            let head = hd as u16;
            let (up, lo) = (Unit::HeadUpper(b), Unit::HeadLower(b));
            let q = self.grid(Stage::Query { head }, PassOp::Gemm, &tile_gemm(seq * d_k, c, m, l), Some(up), &[]);
            let v = self.grid(Stage::Value { head }, PassOp::Gemm, &tile_gemm(seq * d_v, c, m, n), Some(lo), &[]);
            let p = self.grid(Stage::KeyFold { head }, PassOp::Gemm, &tile_gemm(seq * c, d_k, m, l), Some(up), &[q.unwrap()]);

            let mut exp_of_row = vec![0u32; seq];
            let mut next_row = 0usize;
            for (i, t) in tile_gemm(seq * seq, c, m, l).iter().enumerate() {
                let deps = if i == 0 { vec![p.unwrap()] } else { vec![] };
                let s = self.pass(up, Stage::Logits { head }, PassOp::Gemm, t, &deps);
                if t.inner[1] as usize != c {
                    continue;
                }
                while next_row < seq && (next_row + 1) * seq <= t.rows[1] as usize {
                    let r = next_row as u32;
                    let mx = self.ecu(Unit::Comparator(b), EcuOp::SoftmaxMax { head }, r, seq, &[s]);
                    let sh = self.ecu(Unit::Subtractor(b), EcuOp::SoftmaxShift { head }, r, seq, &[mx]);
                    let ln = self.ecu(Unit::Lut(b), EcuOp::SoftmaxLnSumExp { head }, r, seq, &[sh]);
                    exp_of_row[next_row] = self.ecu(Unit::Lut(b), EcuOp::SoftmaxExp { head }, r, seq, &[ln]);
                    next_row += 1;
                }
            }

            let mut last = 0;
            for t in tile_gemm(seq * d_v, seq, m, n) {
                let first = t.rows[0] as usize / d_v;
                let end = (t.rows[1] as usize - 1) / d_v;
                let mut deps: Vec<u32> = exp_of_row[first..=end].to_vec();
                deps.push(v.unwrap());
                last = self.pass(lo, Stage::Apply { head }, PassOp::Gemm, &t, &deps);
            }
            head_ends.push(last);
        }
        let concat = self.ecu(Unit::Ecu, EcuOp::HeadConcat, 0, seq * c, &head_ends);
        let proj = self.grid(Stage::Projection, PassOp::Gemm, &tile_gemm(c * seq, c, m, l), Some(Unit::LinearAdd), &[concat]);
        self.grid(Stage::AttentionResidual, PassOp::CoherentAdd, &lanes(c * seq, m), Some(Unit::LinearAdd), &[proj.unwrap()]);
    }
}

/// Lower a workload onto the architecture and apply the selected
/// optimizations. The result describes one timestep.
pub fn compile(graph: &WorkloadGraph, cfg: &ArchConfig, opts: Optimizations, platform: &Platform) -> Result<Schedule> {
    cfg.validate()?;
    platform.validate()?;
    if let Some(reason) = check_waveguide_constraint(cfg).reason() {
        return Err(Error::Infeasible(reason));
    }
    let (k, n, m, l) = (cfg.k, cfg.n, cfg.m, cfg.l);
    let mut b = Builder::new(platform, *cfg);
    for (i, layer) in graph.layers.iter().enumerate() {
        b.begin_layer(i);
        let (inp, out) = (graph.layer_input(i), graph.layer_output(i));
        let dense = graph.layer_macs(i);
        let mut eliminated = 0;
        let mut row_order = None;
        match layer.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, .. } => {
                let tiles = tile_gemm(out_channels * out.spatial(), in_channels * kernel * kernel, k, n);
                b.grid(Stage::Conv, PassOp::Gemm, &tiles, None, &[]);
            }
            LayerKind::ConvTranspose { in_channels, out_channels, kernel, stride, padding } => {
                let pattern = TransposeConvPattern::new(inp.dims(), out_channels, kernel, stride, padding)?;
                let tiles = if opts.sparsity && pattern.reduced_macs() < pattern.dense_macs() {
                    let rows = out_channels * pattern.positions();
                    let lens: Vec<usize> = (0..rows).map(|r| pattern.row_len(r % pattern.positions())).collect();
                    let order = longest_first(&lens);
                    let sorted: Vec<usize> = order.iter().map(|&r| lens[r as usize]).collect();
                    eliminated = pattern.dense_macs() - pattern.reduced_macs();
                    row_order = Some(order);
                    tile_ragged(&sorted, k, n)
                } else {
                    tile_gemm(out_channels * out.spatial(), in_channels * kernel * kernel, k, n)
                };
                b.grid(Stage::ConvTranspose, PassOp::Gemm, &tiles, None, &[]);
            }
            LayerKind::Linear { in_channels, out_channels } => {
                let tiles = tile_gemm(out_channels * inp.spatial(), in_channels, m, l);
                b.grid(Stage::Linear, PassOp::Gemm, &tiles, Some(Unit::LinearAdd), &[]);
            }
            LayerKind::GroupNorm { bypass, .. } => {
                if !bypass {
                    let stats = b.ecu(Unit::Ecu, EcuOp::NormStats, 0, inp.elements(), &[]);
                    b.grid(Stage::NormScale, PassOp::NormScale, &lanes(inp.elements(), k), None, &[stats]);
                }
            }
            LayerKind::Swish => {
                b.grid(Stage::Swish, PassOp::Sigmoid, &lanes(inp.elements(), n), Some(Unit::Activation), &[]);
            }
            LayerKind::ResidualAdd { mode, .. } => match mode {
                SkipMode::Add => {
                    b.grid(Stage::Residual, PassOp::CoherentAdd, &lanes(inp.elements(), n), Some(Unit::Activation), &[]);
                }
                SkipMode::Concat => {
                    b.ecu(Unit::Ecu, EcuOp::SkipConcat, 0, out.elements(), &[]);
                }
            },
            LayerKind::Attention { channels, heads, d_k } => b.attention(inp.spatial(), channels, heads, d_k),
        }
        b.end_layer(layer.kind.name(), dense, eliminated, row_order);
    }
    let tail_start = b.steps.len() as u32;
    b.begin_layer(graph.layers.len());
    let barrier = std::mem::take(&mut b.barrier);
    b.ecu(Unit::Ecu, EcuOp::DiffusionUpdate, 0, graph.output().elements(), &barrier);
    let schedule = Schedule {
        workload: graph.name.clone(),
        timesteps: graph.timesteps,
        arch: *cfg,
        opts: Optimizations { sparsity: opts.sparsity, ..Optimizations::NONE },
        dac_sharing: 1,
        tail: tail_start..b.steps.len() as u32,
        steps: b.steps,
        layers: b.plans,
    };
    let schedule = if opts.dac_sharing { apply_dac_sharing(schedule, cfg.dac_sharing, platform) } else { schedule };
    Ok(apply_pipelining(schedule, opts.pipelining))
}
