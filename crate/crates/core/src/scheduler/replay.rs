//! Functional replay: execute a compiled schedule pass by pass on real
//! operands and compare against the direct reference execution.

use crate::arch::{bpd_dot, coherent_sum};
use crate::error::{Error, Result};
use crate::model::{concat_channels, reverse_process, tokens, LayerWeights, ModelWeights, ReverseInputs};
use crate::numerics::conv::{conv_gemm_operands, conv_transpose_dense_operands, sparse_transpose_conv_lowering};
use crate::numerics::diffusion::reverse_diffusion_step;
use crate::numerics::gemm::GemmOperands;
use crate::numerics::lut::Transcendentals;
use crate::numerics::norm::{group_norm_affine, sigmoid, DEFAULT_NORM_EPS};
use crate::numerics::softmax::{lse_finish, lse_ln_sum_exp, lse_max, lse_shift};
use crate::numerics::tensor::{max_rel_error, Tensor};
use crate::workload::{LayerKind, SkipMode, WorkloadGraph};

use super::types::{EcuEvent, EcuOp, Schedule, Stage, Step, TilePass, Work};

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Replay(msg.into()))
}

/// A GEMM being executed tile by tile. `next[row]` is the first inner index
/// not yet accumulated into that row.
struct GemmExec {
    ops: GemmOperands,
    order: Option<Vec<u32>>,
    acc: Vec<f64>,
    next: Vec<u32>,
}

impl GemmExec {
    fn new(ops: GemmOperands, order: Option<Vec<u32>>) -> Self {
        let rows = ops.rows();
        Self { ops, order, acc: vec![0.0; rows], next: vec![0; rows] }
    }

    fn dense(left: Tensor, right: Tensor) -> Result<Self> {
        Ok(Self::new(GemmOperands::dense(left, right)?, None))
    }

    fn run(&mut self, p: &TilePass) -> Result<()> {
        if p.rows[1] as usize > self.ops.rows() {
            return fail(format!("{} pass rows {:?} exceed {} output rows", p.stage.name(), p.rows, self.ops.rows()));
        }
        let mut macs = 0u64;
        for r in p.rows[0]..p.rows[1] {
            let row = self.order.as_ref().map_or(r, |o| o[r as usize]) as usize;
            if self.next[row] != p.inner[0] {
                return fail(format!(
                    "{} pass expects row {row} at inner index {} but it is at {}",
                    p.stage.name(),
                    p.inner[0],
                    self.next[row]
                ));
            }
            let end = (p.inner[1] as usize).min(self.ops.row_len(row));
            let k0 = p.inner[0] as usize;
            let ops = &self.ops;
            self.acc[row] += bpd_dot((k0..end).map(|k| ops.pair(row, k)));
            self.next[row] = end as u32;
            macs += (end - k0) as u64;
        }
        if macs != p.macs {
            return fail(format!("{} pass claims {} MACs but covers {macs}", p.stage.name(), p.macs));
        }
        Ok(())
    }

    fn row_done(&self, row: usize) -> bool {
        self.next[row] as usize == self.ops.row_len(row)
    }

    fn finish(&self, what: &str) -> Result<Vec<f64>> {
        if let Some(row) = (0..self.acc.len()).find(|&r| !self.row_done(r)) {
            return fail(format!("{what}: row {row} incomplete ({} of {})", self.next[row], self.ops.row_len(row)));
        }
        Ok(self.acc.clone())
    }

    fn tensor(&self, what: &str, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.finish(what)?)
    }
}

/// Elementwise results with exactly-once coverage.
struct Lanes {
    out: Vec<f64>,
    done: Vec<bool>,
}

impl Lanes {
    fn new(n: usize) -> Self {
        Self { out: vec![0.0; n], done: vec![false; n] }
    }

    fn run(&mut self, p: &TilePass, f: impl Fn(usize) -> f64) -> Result<()> {
        let [e0, e1] = [p.rows[0] as usize, p.rows[1] as usize];
        if e1 > self.out.len() || self.done[e0..e1].iter().any(|&d| d) {
            return fail(format!("{} pass covers {:?} twice or out of range", p.stage.name(), p.rows));
        }
        for e in e0..e1 {
            self.out[e] = f(e);
            self.done[e] = true;
        }
        Ok(())
    }

    fn tensor(self, what: &str, shape: &[usize]) -> Result<Tensor> {
        if let Some(e) = self.done.iter().position(|&d| !d) {
            return fail(format!("{what}: element {e} never computed"));
        }
        Tensor::new(shape.to_vec(), self.out)
    }
}

#[derive(Default)]
struct HeadState {
    q: Option<GemmExec>,
    key: Option<GemmExec>,
    logits: Option<GemmExec>,
    value: Option<GemmExec>,
    apply: Option<GemmExec>,
    max: Vec<Option<f64>>,
    shifted: Vec<Option<Vec<f64>>>,
    ln_sum: Vec<Option<f64>>,
    attn: Vec<Option<Vec<f64>>>,
}

fn pass_of(step: &Step, layer: usize) -> Result<&TilePass> {
    step.pass().ok_or_else(|| Error::Replay(format!("layer {layer}: unexpected ECU event on {}", step.unit)))
}

fn ecu_of(step: &Step, layer: usize) -> Result<&EcuEvent> {
    match &step.work {
        Work::Ecu(e) => Ok(e),
        Work::Pass(p) => fail(format!("layer {layer}: unexpected {} pass", p.stage.name())),
    }
}

fn gemm_layer(steps: &[Step], layer: usize, stage: Stage, mut exec: GemmExec, shape: [usize; 3]) -> Result<Tensor> {
    for s in steps {
        let p = pass_of(s, layer)?;
        if p.stage != stage {
            return fail(format!("layer {layer}: {} pass in a {} layer", p.stage.name(), stage.name()));
        }
        exec.run(p)?;
    }
    exec.tensor(&format!("layer {layer}"), &shape)
}

fn lane_layer(steps: &[Step], layer: usize, stage: Stage, n: usize, shape: &[usize], f: impl Fn(usize) -> f64) -> Result<Tensor> {
    let mut lanes = Lanes::new(n);
    for s in steps {
        let p = pass_of(s, layer)?;
        if p.stage != stage {
            return fail(format!("layer {layer}: {} pass in a {} layer", p.stage.name(), stage.name()));
        }
        lanes.run(p, &f)?;
    }
    lanes.tensor(&format!("layer {layer}"), shape)
}

fn replay_attention(steps: &[Step], layer: usize, x: &Tensor, spec: &crate::numerics::MultiHeadSpec) -> Result<Tensor> {
    let xt = tokens(x)?;
    let x_cols = xt.transpose()?;
    let (seq, c) = (xt.rows(), xt.cols());
    let nh = spec.heads.len();
    let mut heads: Vec<HeadState> = (0..nh)
        .map(|_| HeadState {
            max: vec![None; seq],
            shifted: vec![None; seq],
            ln_sum: vec![None; seq],
            attn: vec![None; seq],
            ..HeadState::default()
        })
        .collect();
    let mut concat: Option<Tensor> = None;
    let mut proj: Option<GemmExec> = None;
    let mut proj_out: Option<Vec<f64>> = None;
    let mut resid = Lanes::new(seq * c);
    let tx = Transcendentals::Exact;
    let head_of = |h: u16| -> Result<usize> {
        if (h as usize) < nh {
            Ok(h as usize)
        } else {
            fail(format!("layer {layer}: head {h} out of range"))
        }
    };

    for s in steps {
        match &s.work {
            Work::Pass(p) => match p.stage {
                Stage::Query { head } => {
                    let h = head_of(head)?;
                    let w = &spec.heads[h];
                    let st = &mut heads[h];
                    if st.q.is_none() {
                        st.q = Some(GemmExec::dense(xt.clone(), w.w_q.clone())?);
                    }
                    st.q.as_mut().unwrap().run(p)?;
                }
                Stage::KeyFold { head } => {
                    let h = head_of(head)?;
                    let w = &spec.heads[h];
                    let st = &mut heads[h];
                    if st.key.is_none() {
                        let q = st.q.as_ref().ok_or_else(|| Error::Replay("key fold before query".into()))?;
                        let q = q.tensor("query", &[seq, w.d_k])?;
                        st.key = Some(GemmExec::dense(q, w.folded_key_weights()?)?);
                    }
                    st.key.as_mut().unwrap().run(p)?;
                }
                Stage::Logits { head } => {
                    let h = head_of(head)?;
                    let st = &mut heads[h];
                    if st.logits.is_none() {
                        let k = st.key.as_ref().ok_or_else(|| Error::Replay("logits before key fold".into()))?;
                        let folded = k.tensor("key fold", &[seq, c])?;
                        st.logits = Some(GemmExec::dense(folded, x_cols.clone())?);
                    }
                    st.logits.as_mut().unwrap().run(p)?;
                }
                Stage::Value { head } => {
                    let h = head_of(head)?;
                    let w = &spec.heads[h];
                    let st = &mut heads[h];
                    if st.value.is_none() {
                        st.value = Some(GemmExec::dense(xt.clone(), w.w_v.clone())?);
                    }
                    st.value.as_mut().unwrap().run(p)?;
                }
                Stage::Apply { head } => {
                    let h = head_of(head)?;
                    let d_v = spec.heads[h].d_v();
                    let st = &mut heads[h];
                    if st.apply.is_none() {
                        let v = st.value.as_ref().ok_or_else(|| Error::Replay("apply before value".into()))?;
                        let v = v.tensor("value", &[seq, d_v])?;
                        let mut a = Vec::with_capacity(seq * seq);
                        for (t, row) in st.attn.iter().enumerate() {
                            match row {
                                Some(r) => a.extend_from_slice(r),
                                None => return fail(format!("layer {layer}: attention row {t} of head {h} not ready")),
                            }
                        }
                        st.apply = Some(GemmExec::dense(Tensor::new(vec![seq, seq], a)?, v)?);
                    }
                    st.apply.as_mut().unwrap().run(p)?;
                }
                Stage::Projection => {
                    if proj.is_none() {
                        let cat = concat.as_ref().ok_or_else(|| Error::Replay("projection before concat".into()))?;
                        proj = Some(GemmExec::dense(spec.w_o.transpose()?, cat.transpose()?)?);
                    }
                    proj.as_mut().unwrap().run(p)?;
                }
                Stage::AttentionResidual => {
                    if proj_out.is_none() {
                        let pe = proj.as_ref().ok_or_else(|| Error::Replay("residual before projection".into()))?;
                        proj_out = Some(pe.finish("projection")?);
                    }
                    let y = proj_out.as_ref().unwrap();
                    resid.run(p, |e| coherent_sum(y[e], x.data()[e]))?;
                }
                other => return fail(format!("layer {layer}: {} pass in an attention layer", other.name())),
            },
            Work::Ecu(e) => {
                let row = e.row as usize;
                match e.op {
                    EcuOp::SoftmaxMax { head } => {
                        let h = head_of(head)?;
                        let st = &mut heads[h];
                        let lg = st.logits.as_ref().ok_or_else(|| Error::Replay("max before logits".into()))?;
                        let span = row * seq..(row + 1) * seq;
                        if span.clone().any(|r| !lg.row_done(r)) {
                            return fail(format!("layer {layer}: softmax row {row} of head {h} read before digitised"));
                        }
                        st.max[row] = Some(lse_max(&lg.acc[span]));
                    }
                    EcuOp::SoftmaxShift { head } => {
                        let h = head_of(head)?;
                        let st = &mut heads[h];
                        let m = st.max[row].ok_or_else(|| Error::Replay("shift before max".into()))?;
                        let lg = st.logits.as_ref().unwrap();
                        st.shifted[row] = Some(lse_shift(&lg.acc[row * seq..(row + 1) * seq], m));
                    }
                    EcuOp::SoftmaxLnSumExp { head } => {
                        let h = head_of(head)?;
                        let st = &mut heads[h];
                        let sh = st.shifted[row].as_ref().ok_or_else(|| Error::Replay("ln-sum-exp before shift".into()))?;
                        st.ln_sum[row] = Some(lse_ln_sum_exp(sh, &tx));
                    }
                    EcuOp::SoftmaxExp { head } => {
                        let h = head_of(head)?;
                        let st = &mut heads[h];
                        let ln = st.ln_sum[row].ok_or_else(|| Error::Replay("exp before ln-sum-exp".into()))?;
                        st.attn[row] = Some(lse_finish(st.shifted[row].as_ref().unwrap(), ln, &tx));
                    }
                    EcuOp::HeadConcat => {
                        let outs = heads
                            .iter()
                            .enumerate()
                            .map(|(h, st)| match &st.apply {
                                Some(a) => a.finish(&format!("head {h}")),
                                None => fail(format!("layer {layer}: head {h} concatenated before it ran")),
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let mut data = Vec::with_capacity(seq * c);
                        for t in 0..seq {
                            for (h, o) in outs.iter().enumerate() {
                                let d_v = spec.heads[h].d_v();
                                data.extend_from_slice(&o[t * d_v..(t + 1) * d_v]);
                            }
                        }
                        concat = Some(Tensor::new(vec![seq, data.len() / seq], data)?);
                    }
                    other => return fail(format!("layer {layer}: {} event in an attention layer", other.name())),
                }
            }
        }
    }
    resid.tensor(&format!("layer {layer}"), x.shape())
}

fn replay_layer(
    graph: &WorkloadGraph,
    weights: &ModelWeights,
    schedule: &Schedule,
    i: usize,
    x: &Tensor,
    earlier: &[Tensor],
) -> Result<Tensor> {
    let plan = &schedule.layers[i];
    let steps = &schedule.steps[plan.steps.start as usize..plan.steps.end as usize];
    let out = graph.layer_output(i).dims();
    let n = x.len();
    match (&graph.layers[i].kind, &weights.layers[i]) {
        (LayerKind::Conv { stride, padding, .. }, LayerWeights::Conv(k)) => {
            let exec = GemmExec::new(conv_gemm_operands(x, k, *stride, *padding)?, None);
            gemm_layer(steps, i, Stage::Conv, exec, out)
        }
        (LayerKind::ConvTranspose { stride, padding, .. }, LayerWeights::ConvTranspose(k)) => {
            let exec = match &plan.row_order {
                Some(order) => {
                    let lowering = sparse_transpose_conv_lowering(x, k, *stride, *padding)?;
                    if lowering.eliminated_macs != plan.eliminated_macs {
                        return fail(format!(
                            "layer {i}: plan eliminates {} MACs, lowering eliminates {}",
                            plan.eliminated_macs, lowering.eliminated_macs
                        ));
                    }
                    GemmExec::new(lowering.operands, Some(order.clone()))
                }
                None => GemmExec::new(conv_transpose_dense_operands(x, k, *stride, *padding)?, None),
            };
            gemm_layer(steps, i, Stage::ConvTranspose, exec, out)
        }
        (LayerKind::Linear { .. }, LayerWeights::Linear(w)) => {
            let s = x.shape();
            let fm = x.clone().reshape(&[s[0], s[1] * s[2]])?;
            gemm_layer(steps, i, Stage::Linear, GemmExec::dense(w.transpose()?, fm)?, out)
        }
        (LayerKind::GroupNorm { groups, bypass, .. }, LayerWeights::Norm { gamma, beta }) => {
            if *bypass {
                if !steps.is_empty() {
                    return fail(format!("layer {i}: bypassed norm has {} steps", steps.len()));
                }
                return Ok(x.clone());
            }
            let (first, rest) = steps.split_first().ok_or_else(|| Error::Replay(format!("layer {i}: empty norm")))?;
            if ecu_of(first, i)?.op != EcuOp::NormStats {
                return fail(format!("layer {i}: norm does not start with statistics"));
            }
            let affine = group_norm_affine(x, *groups, gamma, beta, DEFAULT_NORM_EPS)?;
            let plane = x.shape()[1] * x.shape()[2];
            lane_layer(rest, i, Stage::NormScale, n, x.shape(), |e| {
                let (scale, offset) = affine[e / plane];
                coherent_sum(bpd_dot(std::iter::once((x.data()[e], scale))), offset)
            })
        }
        (LayerKind::Swish, _) => lane_layer(steps, i, Stage::Swish, n, x.shape(), |e| {
            let v = x.data()[e];
            bpd_dot(std::iter::once((v, sigmoid(v))))
        }),
        (LayerKind::ResidualAdd { skip_from, mode }, _) => {
            let skip = &earlier[*skip_from];
            match mode {
                SkipMode::Add => {
                    if skip.shape() != x.shape() {
                        return fail(format!("layer {i}: residual shapes differ"));
                    }
                    lane_layer(steps, i, Stage::Residual, n, x.shape(), |e| coherent_sum(x.data()[e], skip.data()[e]))
                }
                SkipMode::Concat => {
                    match steps {
                        [s] if ecu_of(s, i)?.op == EcuOp::SkipConcat => {}
                        _ => return fail(format!("layer {i}: concat expects one buffer event")),
                    }
                    concat_channels(x, skip)
                }
            }
        }
        (LayerKind::Attention { .. }, LayerWeights::Attention(spec)) => replay_attention(steps, i, x, spec),
        _ => fail(format!("weights for layer {i} do not match its kind")),
    }
}

fn check_shape(schedule: &Schedule, graph: &WorkloadGraph) -> Result<()> {
    if schedule.layers.len() != graph.layers.len() {
        return fail(format!(
            "schedule has {} layers, workload has {}",
            schedule.layers.len(),
            graph.layers.len()
        ));
    }
    Ok(())
}

/// One denoiser evaluation computed only through the schedule's passes and
/// ECU events.
pub fn replay_denoiser(schedule: &Schedule, graph: &WorkloadGraph, weights: &ModelWeights, x: &Tensor) -> Result<Tensor> {
    check_shape(schedule, graph)?;
    let mut outs: Vec<Tensor> = Vec::with_capacity(graph.layers.len());
    for i in 0..graph.layers.len() {
        let input = outs.last().unwrap_or(x);
        let y = replay_layer(graph, weights, schedule, i, input, &outs)?;
        outs.push(y);
    }
    outs.pop().ok_or_else(|| Error::Replay("workload has no layers".into()))
}

/// The whole reverse process: the timestep schedule `T` times, each followed
/// by its diffusion-update event.
pub fn replay_reverse(schedule: &Schedule, graph: &WorkloadGraph, weights: &ModelWeights, inputs: &ReverseInputs) -> Result<Tensor> {
    check_shape(schedule, graph)?;
    let tail = &schedule.steps[schedule.tail.start as usize..schedule.tail.end as usize];
    match tail {
        [s] if ecu_of(s, graph.layers.len())?.op == EcuOp::DiffusionUpdate => {}
        _ => return fail("timestep must end with one diffusion update"),
    }
    if inputs.noise.len() != schedule.timesteps {
        return fail("noise draws do not match the schedule's timesteps");
    }
    let mut x = inputs.x_t.clone();
    for step in 0..schedule.timesteps {
        let mu = replay_denoiser(schedule, graph, weights, &x)?;
        x = reverse_diffusion_step(&x, &mu, inputs.sigma(step), &inputs.noise[step])?;
    }
    Ok(x)
}

/// Max relative error of the replayed reverse process against direct
/// execution, with weights and noise drawn from `seed`.
pub fn replay_error(schedule: &Schedule, graph: &WorkloadGraph, seed: u64) -> Result<f64> {
    let weights = ModelWeights::random(graph, seed);
    let inputs = ReverseInputs::sample(graph, seed.wrapping_add(1))?;
    let replayed = replay_reverse(schedule, graph, &weights, &inputs)?;
    let direct = reverse_process(graph, &weights, &inputs)?;
    max_rel_error(&replayed, &direct)
}
