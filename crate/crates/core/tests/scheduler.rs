use difflight::arch::{build_inventory, ArchConfig};
use difflight::model::ModelWeights;
use difflight::numerics::norm::swish_tensor;
use difflight::numerics::tensor::{max_rel_error, Tensor};
use difflight::platform::Platform;
use difflight::scheduler::{
    activation_lane_latency, apply_dac_sharing, apply_pipelining, compile, replay_denoiser, start_times, tile_gemm,
    EcuOp, Optimizations, Stage, Work,
};
use difflight::workload::{preset, LayerKind, LayerSpec, Shape3, WorkloadGraph};

fn graph(input: Shape3, layers: Vec<LayerKind>) -> WorkloadGraph {
    WorkloadGraph::new("test", 1, input, layers.into_iter().map(LayerSpec::new).collect()).unwrap()
}

fn conv(ci: usize, co: usize, k: usize, p: usize) -> LayerKind {
    LayerKind::Conv { in_channels: ci, out_channels: co, kernel: k, stride: 1, padding: p }
}

fn convt(ci: usize, co: usize, k: usize, s: usize, p: usize) -> LayerKind {
    LayerKind::ConvTranspose { in_channels: ci, out_channels: co, kernel: k, stride: s, padding: p }
}

fn opts(sparsity: bool, pipelining: bool, dac_sharing: bool) -> Optimizations {
    Optimizations { sparsity, pipelining, dac_sharing }
}

#[test]
fn stride_one_transpose_conv_ignores_sparsity() {
    let g = graph(Shape3::new(2, 4, 4), vec![convt(2, 2, 3, 1, 1)]);
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let off = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
    let on = compile(&g, &cfg, opts(true, false, false), &p).unwrap();
    assert_eq!(off.pass_count(), on.pass_count());
    assert_eq!(on.eliminated_macs(), 0);
}

#[test]
fn stride_two_transpose_conv_needs_fewer_passes() {
    let g = graph(Shape3::new(4, 4, 4), vec![convt(4, 4, 4, 2, 1)]);
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let off = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
    let on = compile(&g, &cfg, opts(true, false, false), &p).unwrap();
    assert!(on.eliminated_macs() > 0);
    assert!(on.pass_count() < off.pass_count());
    assert_eq!(on.executed_macs(), off.executed_macs() - on.eliminated_macs());
}

#[test]
fn sparsity_leaves_plain_convolutions_alone() {
    let g = graph(Shape3::new(3, 6, 6), vec![conv(3, 5, 3, 1)]);
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let off = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
    let on = compile(&g, &cfg, opts(true, false, false), &p).unwrap();
    assert_eq!(serde_json::to_string(&off.steps).unwrap(), serde_json::to_string(&on.steps).unwrap());
}

fn attention_graph() -> WorkloadGraph {
    graph(Shape3::new(12, 1, 3), vec![LayerKind::Attention { channels: 12, heads: 1, d_k: 6 }])
}

#[test]
fn attention_pass_counts_follow_tile_arithmetic() {
    let g = attention_graph();
    let cfg = ArchConfig::new(1, 12, 3, 1, 6, 3);
    let s = compile(&g, &cfg, Optimizations::NONE, &Platform::default()).unwrap();
    let count = |f: fn(&Stage) -> bool| s.passes().filter(|p| f(&p.stage)).count();
    assert_eq!(count(|s| matches!(s, Stage::Query { .. })), tile_gemm(3 * 6, 12, 3, 6).len());
    assert_eq!(count(|s| matches!(s, Stage::KeyFold { .. })), tile_gemm(3 * 12, 6, 3, 6).len());
    assert_eq!(count(|s| matches!(s, Stage::Logits { .. })), tile_gemm(3 * 3, 12, 3, 6).len());
    assert_eq!(count(|s| matches!(s, Stage::Value { .. })), tile_gemm(3 * 12, 12, 3, 12).len());
    assert_eq!(count(|s| matches!(s, Stage::Apply { .. })), tile_gemm(3 * 12, 3, 3, 12).len());
    assert_eq!(count(|s| matches!(s, Stage::Logits { .. })), 6);
}

#[test]
fn value_path_overlaps_upper_path() {
    let g = attention_graph();
    let cfg = ArchConfig::new(1, 12, 3, 1, 6, 3);
    let s = compile(&g, &cfg, opts(false, true, false), &Platform::default()).unwrap();
    let (start, _) = start_times(&s.steps);
    let mut first_value = f64::INFINITY;
    let mut upper_end = 0.0f64;
    for (i, st) in s.steps.iter().enumerate() {
        if let Some(p) = st.pass() {
            match p.stage {
                Stage::Value { .. } => first_value = first_value.min(start[i]),
                Stage::Query { .. } | Stage::KeyFold { .. } | Stage::Logits { .. } => {
                    upper_end = upper_end.max(start[i] + st.duration())
                }
                _ => {}
            }
        }
    }
    assert!(first_value < upper_end, "V starts at {first_value}, upper path ends at {upper_end}");
}

#[test]
fn softmax_events_are_ordered_per_row() {
    let g = preset("sdm-toy").unwrap();
    let s = compile(&g, &ArchConfig::default(), Optimizations::ALL, &Platform::default()).unwrap();
    let (start, _) = start_times(&s.steps);
    let mut checked = 0;
    let find = |op: fn(&EcuOp) -> bool, layer: u32, row: u32, head: u16| {
        s.steps.iter().enumerate().find_map(|(i, st)| match &st.work {
            Work::Ecu(e) if st.layer == layer && e.row == row && op(&e.op) && head_of(&e.op) == Some(head) => Some(i),
            _ => None,
        })
    };
    for (i, st) in s.steps.iter().enumerate() {
        if let Work::Ecu(e) = &st.work {
            if let EcuOp::SoftmaxMax { head } = e.op {
                let sub = find(|o| matches!(o, EcuOp::SoftmaxShift { .. }), st.layer, e.row, head).unwrap();
                let exp = find(|o| matches!(o, EcuOp::SoftmaxExp { .. }), st.layer, e.row, head).unwrap();
                assert!(start[i] + st.duration() <= start[sub]);
                assert!(start[sub] < start[exp]);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

fn head_of(op: &EcuOp) -> Option<u16> {
    match *op {
        EcuOp::SoftmaxMax { head }
        | EcuOp::SoftmaxShift { head }
        | EcuOp::SoftmaxLnSumExp { head }
        | EcuOp::SoftmaxExp { head } => Some(head),
        _ => None,
    }
}

#[test]
fn logits_are_digitised_before_their_softmax_row() {
    let g = attention_graph();
    let cfg = ArchConfig::new(1, 12, 3, 1, 6, 3);
    let s = compile(&g, &cfg, Optimizations::ALL, &Platform::default()).unwrap();
    let (start, _) = start_times(&s.steps);
    let seq = 3u32;
    for (i, st) in s.steps.iter().enumerate() {
        if let Work::Ecu(e) = &st.work {
            if matches!(e.op, EcuOp::SoftmaxMax { .. }) {
                for (j, other) in s.steps.iter().enumerate() {
                    if let Some(p) = other.pass() {
                        let covers = p.rows[0] < (e.row + 1) * seq && p.rows[1] > e.row * seq;
                        if matches!(p.stage, Stage::Logits { .. }) && covers {
                            assert!(start[j] + other.duration() <= start[i] + 1e-18);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn activation_latency_scales_with_lane_waves() {
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let lane = activation_lane_latency(&p);
    assert!((lane - 20.3816e-9).abs() < 1e-18);
    let mut per_wave = None;
    for n in [1usize, 12, 13, 36, 37] {
        let g = graph(Shape3::new(n, 1, 1), vec![LayerKind::Swish]);
        let s = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
        assert_eq!(s.pass_count(), n.div_ceil(cfg.n));
        let swish_time: f64 = s.steps.iter().filter(|st| st.pass().is_some()).map(|st| st.duration()).sum();
        let wave = *per_wave.get_or_insert(swish_time);
        assert!((swish_time - wave * n.div_ceil(cfg.n) as f64).abs() < 1e-18);
        assert!(wave >= lane);
    }
}

#[test]
fn swish_replay_matches_numerics() {
    let g = graph(Shape3::new(5, 3, 3), vec![LayerKind::Swish]);
    let s = compile(&g, &ArchConfig::default(), Optimizations::ALL, &Platform::default()).unwrap();
    let x = Tensor::from_fn(&[5, 3, 3], |i| (i as f64 * 0.37).sin() * 4.0);
    let w = ModelWeights::random(&g, 0);
    let y = replay_denoiser(&s, &g, &w, &x).unwrap();
    assert!(max_rel_error(&y, &swish_tensor(&x)).unwrap() <= 1e-10);
}

#[test]
fn pipelining_single_pass_is_unchanged() {
    let g = graph(Shape3::new(12, 1, 1), vec![conv(12, 3, 1, 0)]);
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let base = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
    let piped = apply_pipelining(base.clone(), true);
    assert_eq!(base.pass_count(), 1);
    assert_eq!(base.timestep_latency(), piped.timestep_latency());
    assert_eq!(apply_pipelining(base.clone(), false), base);
}

#[test]
fn pipelining_overlaps_independent_blocks() {
    let g = graph(Shape3::new(4, 4, 4), vec![conv(4, 4, 3, 1), conv(4, 4, 3, 1)]);
    let p = Platform::default();
    let cfg = ArchConfig::new(2, 12, 3, 1, 6, 3);
    let base = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
    let piped = compile(&g, &cfg, opts(false, true, false), &p).unwrap();
    assert!((base.timestep_latency() - base.serial_latency()).abs() <= 1e-12 * base.serial_latency());
    assert!(piped.timestep_latency() < base.serial_latency());
    let energy = |s: &difflight::scheduler::Schedule| s.passes().map(|p| p.phases.energy()).sum::<f64>();
    assert_eq!(energy(&base), energy(&piped));
}

#[test]
fn pipelined_chain_respects_phase_lower_bound() {
    let g = graph(Shape3::new(4, 4, 4), vec![conv(4, 4, 3, 1), conv(4, 4, 3, 1)]);
    let p = Platform::default();
    let cfg = ArchConfig::new(1, 12, 3, 1, 6, 3);
    let s = compile(&g, &cfg, opts(false, true, false), &p).unwrap();
    let bound: f64 = s.passes().map(|p| p.phases.max_phase()).sum();
    assert!(s.timestep_latency() >= bound);
}

#[test]
fn dac_sharing_one_is_identity() {
    let g = preset("ldm-toy").unwrap();
    let p = Platform::default();
    let base = compile(&g, &ArchConfig::default(), Optimizations::NONE, &p).unwrap();
    assert_eq!(apply_dac_sharing(base.clone(), 1, &p), base);
}

#[test]
fn dac_sharing_two_doubles_tuning_and_halves_dacs() {
    let g = graph(Shape3::new(4, 4, 4), vec![conv(4, 4, 3, 1)]);
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let base = compile(&g, &cfg, Optimizations::NONE, &p).unwrap();
    let shared = apply_dac_sharing(base.clone(), 2, &p);
    for (a, b) in base.passes().zip(shared.passes()) {
        assert_eq!(b.phases.mr_tune.latency, 2.0 * a.phases.mr_tune.latency);
        assert!(b.phases.dac_convert.energy <= a.phases.dac_convert.energy);
    }
    let one = build_inventory(&cfg.with_dac_sharing(1));
    let two = build_inventory(&cfg.with_dac_sharing(2));
    assert_eq!(two.conv_block.dacs * 2, one.conv_block.dacs);
}

#[test]
fn dac_sharing_saves_energy_on_sdm() {
    let g = preset("sdm-toy").unwrap();
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let e = |o| difflight::cost::evaluate_design(&g, &cfg, o, &p).unwrap().energy_j;
    assert!(e(opts(false, false, true)) <= e(Optimizations::NONE));
}

#[test]
fn baseline_covers_every_mac_once() {
    let g = preset("ddpm-toy").unwrap();
    let s = compile(&g, &ArchConfig::default(), Optimizations::NONE, &Platform::default()).unwrap();
    let counts = g.count_macs();
    assert_eq!(s.executed_macs(), counts.per_timestep);
    for (i, plan) in s.layers.iter().enumerate() {
        assert_eq!(plan.executed_macs, counts.per_layer[i], "layer {i}");
    }
}

#[test]
fn timesteps_run_back_to_back() {
    let g1 = preset("ldm-toy").unwrap().with_timesteps(1).unwrap();
    let g2 = preset("ldm-toy").unwrap().with_timesteps(2).unwrap();
    let p = Platform::default();
    let cfg = ArchConfig::default();
    let r1 = difflight::cost::evaluate_design(&g1, &cfg, Optimizations::ALL, &p).unwrap();
    let r2 = difflight::cost::evaluate_design(&g2, &cfg, Optimizations::ALL, &p).unwrap();
    assert!(r2.latency_s >= 2.0 * r1.latency_s * (1.0 - 1e-12));
}

#[test]
fn compile_rejects_infeasible_and_invalid_configs() {
    let g = preset("ddpm-toy").unwrap();
    let p = Platform::default();
    let err = compile(&g, &ArchConfig::new(4, 40, 3, 6, 6, 3), Optimizations::NONE, &p).unwrap_err();
    assert!(err.to_string().contains("36-MR"), "{err}");
    assert!(compile(&g, &ArchConfig::new(0, 12, 3, 6, 6, 3), Optimizations::NONE, &p).is_err());
}

#[test]
fn passes_fit_their_banks() {
    let p = Platform::default();
    for name in ["ddpm-toy", "sdm-toy"] {
        let g = preset(name).unwrap();
        for cfg in [ArchConfig::default(), ArchConfig::new(2, 7, 5, 4, 9, 2)] {
            let s = compile(&g, &cfg, Optimizations::ALL, &p).unwrap();
            for pass in s.passes() {
                let [rows, cols] = pass.stage.bank(&cfg);
                assert!(pass.rows_used as usize <= rows && pass.cols_used as usize <= cols, "{pass:?}");
            }
        }
    }
}

#[test]
fn compilation_is_deterministic() {
    let g = preset("sdm-toy").unwrap();
    let p = Platform::default();
    let a = compile(&g, &ArchConfig::default(), Optimizations::ALL, &p).unwrap();
    let b = compile(&g, &ArchConfig::default(), Optimizations::ALL, &p).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
}

#[test]
fn trace_has_one_record_per_step() {
    let g = attention_graph();
    let s = compile(&g, &ArchConfig::new(1, 12, 3, 1, 6, 3), Optimizations::ALL, &Platform::default()).unwrap();
    let csv = difflight::scheduler::trace_csv(&s).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), difflight::scheduler::TRACE_HEADER);
    assert_eq!(lines.count(), s.steps.len());
}

#[test]
fn replay_detects_a_tampered_schedule() {
    let g = graph(Shape3::new(4, 4, 4), vec![conv(4, 4, 3, 1)]);
    let mut s = compile(&g, &ArchConfig::default(), Optimizations::NONE, &Platform::default()).unwrap();
    let first = s.steps.iter().position(|st| st.pass().is_some()).unwrap();
    s.steps.remove(first);
    s.layers[0].steps.end -= 1;
    s.tail = s.tail.start - 1..s.tail.end - 1;
    let w = ModelWeights::random(&g, 1);
    let err = replay_denoiser(&s, &g, &w, &Tensor::zeros(&[4, 4, 4])).unwrap_err();
    assert!(matches!(err, difflight::Error::Replay(_)), "{err}");
}
