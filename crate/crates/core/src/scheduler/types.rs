use std::fmt;
use std::ops::Range;

use serde::Serialize;

use crate::arch::ArchConfig;
use crate::cost::EnergyBreakdown;
use crate::devices::TuningMechanism;
use crate::error::{Error, Result};

/// A piece of hardware that executes one step at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Unit {
    Conv(u16),
    Activation,
    HeadUpper(u16),
    HeadLower(u16),
    LinearAdd,
    Comparator(u16),
    Subtractor(u16),
    Lut(u16),
    Ecu,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Conv(i) => write!(f, "conv{i}"),
            Unit::Activation => write!(f, "activation"),
            Unit::HeadUpper(i) => write!(f, "head{i}.upper"),
            Unit::HeadLower(i) => write!(f, "head{i}.lower"),
            Unit::LinearAdd => write!(f, "linear_add"),
            Unit::Comparator(i) => write!(f, "ecu{i}.comparator"),
            Unit::Subtractor(i) => write!(f, "ecu{i}.subtractor"),
            Unit::Lut(i) => write!(f, "ecu{i}.lut"),
            Unit::Ecu => write!(f, "ecu"),
        }
    }
}

/// Which computation a pass belongs to. `head` is the workload's head index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Stage {
    Conv,
    ConvTranspose,
    Linear,
    /// `Q = X·W_Q`
    Query { head: u16 },
    /// `Q·(W_Kᵀ/√d_k)`
    KeyFold { head: u16 },
    /// `(Q·W_Kᵀ/√d_k)·Xᵀ`
    Logits { head: u16 },
    /// `V = X·W_V`
    Value { head: u16 },
    /// `Attn·V`
    Apply { head: u16 },
    Projection,
    NormScale,
    Swish,
    Residual,
    AttentionResidual,
}

impl Stage {
    pub fn is_gemm(&self) -> bool {
        !matches!(self, Stage::NormScale | Stage::Swish | Stage::Residual | Stage::AttentionResidual)
    }

    /// `[rows, cols]` of the bank this stage runs on.
    pub fn bank(&self, cfg: &ArchConfig) -> [usize; 2] {
        match self {
            Stage::Conv | Stage::ConvTranspose => [cfg.k, cfg.n],
            Stage::NormScale => [cfg.k, 1],
            Stage::Swish | Stage::Residual => [cfg.n, 1],
            Stage::Query { .. } | Stage::KeyFold { .. } | Stage::Logits { .. } | Stage::Projection | Stage::Linear => {
                [cfg.m, cfg.l]
            }
            Stage::Value { .. } | Stage::Apply { .. } => [cfg.m, cfg.n],
            Stage::AttentionResidual => [cfg.m, 1],
        }
    }

    pub fn name(&self) -> String {
        match self {
            Stage::Conv => "conv".into(),
            Stage::ConvTranspose => "conv_transpose".into(),
            Stage::Linear => "linear".into(),
            Stage::Query { head } => format!("query.h{head}"),
            Stage::KeyFold { head } => format!("key_fold.h{head}"),
            Stage::Logits { head } => format!("logits.h{head}"),
            Stage::Value { head } => format!("value.h{head}"),
            Stage::Apply { head } => format!("apply.h{head}"),
            Stage::Projection => "projection".into(),
            Stage::NormScale => "norm_scale".into(),
            Stage::Swish => "swish".into(),
            Stage::Residual => "residual".into(),
            Stage::AttentionResidual => "attention_residual".into(),
        }
    }
}

/// Optical datapath a pass exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PassOp {
    /// Dot products through two operand banks and a BPD per row.
    Gemm,
    /// One value per row scaled by a broadband MR.
    NormScale,
    /// VCSEL, SOA sigmoid, PD, then MR multiply.
    Sigmoid,
    /// Two same-wavelength VCSELs summed on one PD.
    CoherentAdd,
}

/// Device activity of one pass; phase costs are derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Activity {
    pub op: PassOp,
    pub dac_conversions: u32,
    /// Columns served by one DAC set (1 = no sharing).
    pub dac_sharing: u32,
    pub tuned_mrs: u32,
    pub tuning: TuningMechanism,
    pub lanes: u32,
    pub photodetectors: u32,
    pub soas: u32,
    pub adc_conversions: u32,
    pub accumulate_adds: u32,
    pub buffer_accesses: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Phase {
    pub latency: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Phases {
    pub dac_convert: Phase,
    pub mr_tune: Phase,
    pub optical_propagate: Phase,
    pub pd_detect: Phase,
    pub adc_convert: Phase,
}

impl Phases {
    pub fn all(&self) -> [Phase; 5] {
        [self.dac_convert, self.mr_tune, self.optical_propagate, self.pd_detect, self.adc_convert]
    }

    pub fn duration(&self) -> f64 {
        self.all().iter().map(|p| p.latency).sum()
    }

    /// DAC conversion plus MR tuning: the part that can overlap the previous
    /// pass on the same bank.
    pub fn front(&self) -> f64 {
        self.dac_convert.latency + self.mr_tune.latency
    }

    pub fn energy(&self) -> f64 {
        self.all().iter().map(|p| p.energy).sum()
    }

    pub fn max_phase(&self) -> f64 {
        self.all().iter().map(|p| p.latency).fold(0.0, f64::max)
    }
}

/// One use of a bank: `rows_used` dot-product fragments of at most
/// `cols_used` terms each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TilePass {
    pub stage: Stage,
    /// Output rows `[start, end)`, in the layer's row order.
    pub rows: [u32; 2],
    /// Inner (reduction) range `[start, end)`.
    pub inner: [u32; 2],
    pub rows_used: u32,
    pub cols_used: u32,
    pub macs: u64,
    pub activity: Activity,
    pub phases: Phases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EcuOp {
    /// Comparator tracks the row maximum as logits are digitised.
    SoftmaxMax { head: u16 },
    /// Subtractor forms `γ_j − γ_max`.
    SoftmaxShift { head: u16 },
    /// LUTs evaluate `ln Σ exp(γ_j − γ_max)`.
    SoftmaxLnSumExp { head: u16 },
    /// Subtract the log-sum and look up `exp`.
    SoftmaxExp { head: u16 },
    NormStats,
    HeadConcat,
    SkipConcat,
    DiffusionUpdate,
}

impl EcuOp {
    pub fn name(&self) -> String {
        match self {
            EcuOp::SoftmaxMax { head } => format!("softmax_max.h{head}"),
            EcuOp::SoftmaxShift { head } => format!("softmax_shift.h{head}"),
            EcuOp::SoftmaxLnSumExp { head } => format!("softmax_ln_sum_exp.h{head}"),
            EcuOp::SoftmaxExp { head } => format!("softmax_exp.h{head}"),
            EcuOp::NormStats => "norm_stats".into(),
            EcuOp::HeadConcat => "head_concat".into(),
            EcuOp::SkipConcat => "skip_concat".into(),
            EcuOp::DiffusionUpdate => "diffusion_update".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcuEvent {
    pub op: EcuOp,
    /// Softmax row, or 0 for whole-tensor events.
    pub row: u32,
    pub elements: u32,
    pub latency: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Work {
    Pass(TilePass),
    Ecu(EcuEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    /// The successor consumes what the predecessor produced.
    Data,
    /// Both run on the same unit.
    Resource,
    /// Program order of the unpipelined baseline.
    Order,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub from: u32,
    pub kind: EdgeKind,
    /// Successor's front phases may overlap the predecessor's back phases.
    pub overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    /// Layer index; the per-timestep diffusion update uses `layers.len()`.
    pub layer: u32,
    pub unit: Unit,
    pub work: Work,
    pub deps: Vec<Edge>,
}

impl Step {
    pub fn duration(&self) -> f64 {
        match &self.work {
            Work::Pass(p) => p.phases.duration(),
            Work::Ecu(e) => e.latency,
        }
    }

    pub fn front(&self) -> f64 {
        match &self.work {
            Work::Pass(p) => p.phases.front(),
            Work::Ecu(_) => 0.0,
        }
    }

    pub fn pass(&self) -> Option<&TilePass> {
        match &self.work {
            Work::Pass(p) => Some(p),
            Work::Ecu(_) => None,
        }
    }

    pub fn macs(&self) -> u64 {
        self.pass().map_or(0, |p| p.macs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPlan {
    /// Workload layer kind, e.g. `conv`.
    pub kind: String,
    pub steps: Range<u32>,
    pub dense_macs: u64,
    pub executed_macs: u64,
    pub eliminated_macs: u64,
    /// Row permutation of a zero-eliminated transposed conv (longest rows first).
    pub row_order: Option<Vec<u32>>,
}

/// Which of the three dataflow optimizations are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Optimizations {
    pub sparsity: bool,
    pub pipelining: bool,
    pub dac_sharing: bool,
}

impl Optimizations {
    pub const NONE: Self = Self { sparsity: false, pipelining: false, dac_sharing: false };
    pub const ALL: Self = Self { sparsity: true, pipelining: true, dac_sharing: true };

    /// All eight combinations, baseline first.
    pub fn combinations() -> [Self; 8] {
        std::array::from_fn(|i| Self { sparsity: i & 1 != 0, pipelining: i & 2 != 0, dac_sharing: i & 4 != 0 })
    }

    /// Parse a comma-separated list of `none`, `sparsity`, `pipeline`,
    /// `dacshare`, `all`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut o = Self::NONE;
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "none" => {}
                "all" => o = Self::ALL,
                "sparsity" => o.sparsity = true,
                "pipeline" | "pipelining" => o.pipelining = true,
                "dacshare" | "dac_sharing" => o.dac_sharing = true,
                other => {
                    return Err(Error::Schema(format!(
                        "unknown optimization `{other}` (expected none, sparsity, pipeline, dacshare, all)"
                    )))
                }
            }
        }
        Ok(o)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.sparsity {
            parts.push("sparsity");
        }
        if self.pipelining {
            parts.push("pipeline");
        }
        if self.dac_sharing {
            parts.push("dacshare");
        }
        match parts.len() {
            0 => "none".into(),
            3 => "all".into(),
            _ => parts.join("+"),
        }
    }
}

/// A compiled timestep. The reverse process repeats it `timesteps` times,
/// each repetition depending on the previous one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub workload: String,
    pub timesteps: usize,
    pub arch: ArchConfig,
    pub opts: Optimizations,
    /// DAC sharing factor in effect (1 when the optimization is off).
    pub dac_sharing: usize,
    pub steps: Vec<Step>,
    pub layers: Vec<LayerPlan>,
    /// Steps after the last layer (the diffusion update).
    pub tail: Range<u32>,
}

impl Schedule {
    pub fn passes(&self) -> impl Iterator<Item = &TilePass> {
        self.steps.iter().filter_map(|s| s.pass())
    }

    pub fn pass_count(&self) -> usize {
        self.passes().count()
    }

    /// MACs executed per timestep.
    pub fn executed_macs(&self) -> u64 {
        self.passes().map(|p| p.macs).sum()
    }

    pub fn eliminated_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.eliminated_macs).sum()
    }

    pub fn layer_passes(&self, layer: usize) -> usize {
        let r = &self.layers[layer].steps;
        self.steps[r.start as usize..r.end as usize].iter().filter(|s| s.pass().is_some()).count()
    }
}
