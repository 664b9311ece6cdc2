//! The eight acceptance criteria. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use difflight::arch::ArchConfig;
use difflight::cost::{ablation, aggregate, evaluate_design};
use difflight::devices::{link_loss, LossBudget, OpticalPath};
use difflight::dse::{dominates, evaluate_point, explore, DsePoint, DseSpace};
use difflight::numerics::conv::{conv_transpose2d, im2col, sparse_transpose_conv_lowering, zero_insert};
use difflight::numerics::tensor::{max_rel_error, Tensor};
use difflight::numerics::{attention_head, attention_head_decomposed, softmax_lse, softmax_naive, AttentionSpec};
use difflight::platform::Platform;
use difflight::scheduler::{compile, replay_error, Optimizations, Schedule, Work};
use difflight::workload::{preset, LayerKind, LayerSpec, Shape3, WorkloadGraph, PRESET_NAMES};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let platform = Platform::default();
    let cfg = ArchConfig::default();
    let mut worst = 0.0f64;
    for name in PRESET_NAMES {
        let g = preset(name).map_err(|e| e.to_string())?;
        for opts in Optimizations::combinations() {
            let s = compile(&g, &cfg, opts, &platform).map_err(|e| e.to_string())?;
            let err = replay_error(&s, &g, 11).map_err(|e| format!("{name}/{}: {e}", opts.label()))?;
            ensure(err <= 1e-8, || format!("{name}/{}: max relative error {err:e}", opts.label()))?;
            worst = worst.max(err);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("24 replays, worst error {worst:.2e}, {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sm = 0.0f64;
    let mut overflow_cases = 0;
    for i in 0..1000 {
        let n = rng.gen_range(1..=32);
        // Logits on a 2^-20 grid so an integer shift is exact.
        let logits: Vec<f64> = (0..n).map(|_| (rng.gen_range(-20.0..20.0) * 1048576.0f64).round() / 1048576.0).collect();
        let lse = softmax_lse(&logits).map_err(|e| e.to_string())?;
        let naive = softmax_naive(&logits).map_err(|e| e.to_string())?;
        worst_sm = worst_sm.max(rel_vec(&lse, &naive));
        if i % 4 == 0 {
            // Softmax is shift invariant; a shift past exp's range breaks the naive form.
            let shift = rng.gen_range(800..5000) as f64;
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let naive_shifted = softmax_naive(&shifted).map_err(|e| e.to_string())?;
            ensure(naive_shifted.iter().any(|v| !v.is_finite()), || format!("shift {shift} did not overflow"))?;
            let lse_shifted = softmax_lse(&shifted).map_err(|e| e.to_string())?;
            worst_sm = worst_sm.max(rel_vec(&lse_shifted, &naive));
            overflow_cases += 1;
        }
    }
    ensure(worst_sm <= 1e-12, || format!("softmax error {worst_sm:e}"))?;

    let mut worst_att = 0.0f64;
    for _ in 0..1000 {
        let seq = rng.gen_range(1..=8);
        let d_model = rng.gen_range(1..=8);
        let d_k = rng.gen_range(1..=6);
        let d_v = rng.gen_range(1..=6);
        let spec = AttentionSpec::new(
            random_tensor(&mut rng, &[d_model, d_k]),
            random_tensor(&mut rng, &[d_model, d_k]),
            random_tensor(&mut rng, &[d_model, d_v]),
        )
        .map_err(|e| e.to_string())?;
        let x = random_tensor(&mut rng, &[seq, d_model]).scale(rng.gen_range(0.1..4.0));
        let direct = attention_head(&x, &spec).map_err(|e| e.to_string())?;
        let decomposed = attention_head_decomposed(&x, &spec).map_err(|e| e.to_string())?;
        worst_att = worst_att.max(max_rel_error(&decomposed, &direct).map_err(|e| e.to_string())?);
    }
    ensure(worst_att <= 1e-10, || format!("attention error {worst_att:e}"))?;
    Ok(format!(
        "softmax worst {worst_sm:.1e} ({overflow_cases} overflow cases), attention worst {worst_att:.1e}"
    ))
}

/// Count patch entries of the dense lowering that read an inserted zero:
/// mark real samples 1, inserted zeros 2, and let im2col pad with 0.
fn inserted_zero_oracle(in_shape: [usize; 3], co: usize, k: usize, stride: usize, padding: usize) -> u64 {
    let ones = Tensor::filled(&in_shape, 1.0);
    let marked = zero_insert(&ones, stride).unwrap().map(|v| if v == 1.0 { 1.0 } else { 2.0 });
    let patches = im2col(&marked, k, 1, k - 1 - padding).unwrap();
    co as u64 * patches.data().iter().filter(|&&v| v == 2.0).count() as u64
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut eliminated_total = 0u64;
    for i in 0..100 {
        let ci = rng.gen_range(1..=4);
        let co = rng.gen_range(1..=4);
        let h = rng.gen_range(1..=6);
        let w = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=4);
        // Largest padding that still leaves a non-empty output.
        let max_pad = ((h.min(w) - 1) * 2 + k - 1) / 2;
        let padding = rng.gen_range(0..=max_pad.min(k - 1));
        let x = random_tensor(&mut rng, &[ci, h, w]);
        let kernel = random_tensor(&mut rng, &[ci, co, k, k]);
        let dense = conv_transpose2d(&x, &kernel, 2, padding).map_err(|e| e.to_string())?;
        let low = sparse_transpose_conv_lowering(&x, &kernel, 2, padding).map_err(|e| e.to_string())?;
        let reduced = Tensor::new(low.out_shape.to_vec(), low.operands.evaluate()).map_err(|e| e.to_string())?;
        let err = max_rel_error(&reduced, &dense).map_err(|e| e.to_string())?;
        ensure(err <= 1e-10, || format!("instance {i}: error {err:e}"))?;
        let oracle = inserted_zero_oracle([ci, h, w], co, k, 2, padding);
        ensure(low.eliminated_macs == oracle, || {
            format!("instance {i}: eliminated {} but oracle counts {oracle}", low.eliminated_macs)
        })?;
        worst = worst.max(err);
        eliminated_total += oracle;
    }
    Ok(format!("100 instances, worst error {worst:.1e}, {eliminated_total} MACs eliminated in total"))
}

fn criterion_4() -> Outcome {
    let platform = Platform::default();
    let cfg = ArchConfig::default();
    let mut notes = Vec::new();
    for name in PRESET_NAMES {
        let g = preset(name).map_err(|e| e.to_string())?;
        let rows = ablation(&g, &cfg, &platform).map_err(|e| e.to_string())?;
        ensure(rows.len() == 5, || format!("{name}: {} rows", rows.len()))?;
        ensure(rows[0].normalized_energy == 1.0, || format!("{name}: baseline {}", rows[0].normalized_energy))?;
        let combined = rows[4].normalized_energy;
        let best_single = rows[1..4].iter().map(|r| r.normalized_energy).fold(f64::INFINITY, f64::min);
        ensure(combined <= best_single, || format!("{name}: combined {combined} above best single {best_single}"))?;
        notes.push(format!("{name} {combined:.3}"));
        if name == "sdm-toy" {
            let band = if (0.20..=0.50).contains(&combined) { "inside" } else { "OUTSIDE (calibration note)" };
            notes.push(format!("sdm-toy soft band [0.20, 0.50]: {band}"));
        }
    }
    Ok(format!("combined normalized energy: {}", notes.join(", ")))
}

fn random_arch(rng: &mut ChaCha8Rng) -> ArchConfig {
    ArchConfig::new(
        rng.gen_range(1..=4),
        rng.gen_range(1..=16),
        rng.gen_range(1..=5),
        rng.gen_range(1..=4),
        rng.gen_range(1..=12),
        rng.gen_range(1..=5),
    )
}

fn check_accounting(g: &WorkloadGraph, cfg: &ArchConfig, platform: &Platform) -> Result<(), String> {
    let compile_with = |o: Optimizations| compile(g, cfg, o, platform).map_err(|e| e.to_string());
    let macs = g.count_macs().per_timestep;
    for opts in Optimizations::combinations() {
        let s = compile_with(opts)?;
        let r = aggregate(&s, platform).map_err(|e| e.to_string())?;
        let sum: f64 = r.breakdown.values().iter().sum();
        ensure(((sum - r.energy_j) / r.energy_j).abs() <= 1e-9, || format!("breakdown {sum} vs {}", r.energy_j))?;
        let max_phase = s.passes().map(|p| p.phases.max_phase()).fold(0.0, f64::max);
        let serial = s.serial_latency() * s.timesteps as f64;
        ensure(r.latency_s >= max_phase && r.latency_s <= serial * (1.0 + 1e-12), || {
            format!("{}: latency {} outside [{max_phase}, {serial}]", opts.label(), r.latency_s)
        })?;
        ensure(s.executed_macs() == macs - s.eliminated_macs(), || {
            format!("{}: executed {} != {macs} - {}", opts.label(), s.executed_macs(), s.eliminated_macs())
        })?;
        if !opts.pipelining {
            let piped = compile_with(Optimizations { pipelining: true, ..opts })?;
            ensure(piped.timestep_latency() <= s.timestep_latency() * (1.0 + 1e-12), || {
                format!("{}: pipelining raised latency", opts.label())
            })?;
        }
        if !opts.dac_sharing {
            let shared = compile(g, &cfg.with_dac_sharing(2), Optimizations { dac_sharing: true, ..opts }, platform)
                .map_err(|e| e.to_string())?;
            let es = aggregate(&shared, platform).map_err(|e| e.to_string())?.energy_j;
            ensure(es <= r.energy_j * (1.0 + 1e-12), || format!("{}: DAC sharing raised energy", opts.label()))?;
        }
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let platform = Platform::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..50u64 {
        let g = WorkloadGraph::random(1000 + i);
        let cfg = random_arch(&mut rng);
        check_accounting(&g, &cfg, &platform).map_err(|e| format!("pair {i} ({}, [{cfg}]): {e}", g.name))?;
    }
    Ok("50 random (workload, config) pairs x 8 optimization sets".into())
}

fn criterion_6() -> Outcome {
    let platform = Platform::default();
    let g = preset("ldm-toy").map_err(|e| e.to_string())?;
    let at = |n: usize, l: usize| ArchConfig::new(4, n, 3, 6, l, 3);
    compile(&g, &at(36, 6), Optimizations::ALL, &platform).map_err(|e| format!("N=36 rejected: {e}"))?;
    compile(&g, &at(12, 36), Optimizations::ALL, &platform).map_err(|e| format!("L=36 rejected: {e}"))?;
    for (name, cfg) in [("N=37", at(37, 6)), ("L=37", at(12, 37))] {
        match compile(&g, &cfg, Optimizations::ALL, &platform) {
            Ok(_) => return Err(format!("{name} accepted")),
            Err(e) => ensure(e.to_string().contains("36"), || format!("{name} rejected without citing the limit: {e}"))?,
        }
    }
    let space = DseSpace::new(vec![at(36, 6), at(37, 6)], vec![g]);
    let res = explore(&space, &platform).map_err(|e| e.to_string())?;
    ensure(res.ranked.len() == 1 && res.ranked[0].arch.n == 36, || "N=36 not ranked".into())?;
    ensure(res.excluded.len() == 1 && res.excluded[0].arch.n == 37, || "N=37 not excluded".into())?;
    ensure(res.excluded[0].reason.contains("36-MR"), || format!("reason: {}", res.excluded[0].reason))?;
    Ok(format!("N/L=36 accepted, 37 rejected; dse reason: \"{}\"", res.excluded[0].reason))
}

fn sig6(a: f64, b: f64) -> bool {
    ((a - b) / b).abs() < 5e-7
}

fn criterion_7() -> Outcome {
    let budget = LossBudget::default();
    let cases = [
        (OpticalPath { waveguide_cm: 1.0, splitters: 1, through_mrs: 10, modulating_mrs: 2 }, 2.77),
        (OpticalPath { waveguide_cm: 2.0, splitters: 0, through_mrs: 36, modulating_mrs: 2 }, 4.16),
        (OpticalPath { waveguide_cm: 0.3, splitters: 2, through_mrs: 23, modulating_mrs: 2 }, 0.3 + 0.26 + 0.46 + 1.44),
    ];
    for (p, want) in cases {
        let got = link_loss(&p, &budget).map_err(|e| e.to_string())?;
        ensure(sig6(got, want), || format!("link_loss {p:?} = {got}, hand sum {want}"))?;
    }

    // One 3x12 GEMM pass on the reference conv bank (K=3, N=12).
    let g = WorkloadGraph::new(
        "one-pass",
        1,
        Shape3::new(12, 1, 1),
        vec![LayerSpec::new(LayerKind::Conv { in_channels: 12, out_channels: 3, kernel: 1, stride: 1, padding: 0 })],
    )
    .map_err(|e| e.to_string())?;
    let platform = Platform::default();
    let s: Schedule = compile(&g, &ArchConfig::default(), Optimizations::NONE, &platform).map_err(|e| e.to_string())?;
    let passes: Vec<_> = s.passes().collect();
    ensure(passes.len() == 1, || format!("{} passes", passes.len()))?;
    let p = passes[0];
    let flight = 0.3e-2 * 4.2 / 299_792_458.0;
    let hand = 72.0 * 3e-3 * 0.29e-9      // DAC: 2 operands x 36 MACs
        + 72.0 * (4e-6 * 0.5) * 20e-9      // EO tuning, 0.5 nm per imprint
        + 12.0 * 1.3e-3 * (0.07e-9 + flight) // VCSEL lanes
        + 6.0 * 2.8e-3 * 5.8e-12           // balanced PD pairs
        + 3.0 * 3.1e-3 * 0.82e-9           // ADC per row
        + 3.0 * 0.05e-12; // buffer writes
    let got = p.phases.energy();
    ensure(sig6(got, hand), || format!("pass energy {got:e} vs hand {hand:e}"))?;
    let hand_latency = 0.29e-9 + 20e-9 + 0.07e-9 + flight + 5.8e-12 + 0.82e-9;
    ensure(sig6(p.phases.duration(), hand_latency), || format!("pass latency {} vs {hand_latency}", p.phases.duration()))?;
    let tail_energy: f64 = s.steps.iter().filter_map(|st| match &st.work {
        Work::Ecu(e) => Some(e.energy.total()),
        Work::Pass(_) => None,
    }).sum();
    let report = aggregate(&s, &platform).map_err(|e| e.to_string())?;
    ensure(sig6(report.energy_j, hand + tail_energy), || format!("report energy {}", report.energy_j))?;
    Ok(format!("3 link paths and a single pass ({got:.6e} J) match hand sums"))
}

fn perturbations() -> Vec<ArchConfig> {
    let base = [4, 12, 3, 6, 6, 3];
    let mut out = vec![ArchConfig::from_tuple(base)];
    let deltas: [(usize, isize); 20] = [
        (0, -2), (0, -1), (0, 1), (1, -4), (1, -2), (1, 2), (1, 4), (2, -1), (2, 1), (2, 2),
        (3, -3), (3, -1), (3, 2), (4, -2), (4, 2), (4, 6), (5, -1), (5, 1), (5, 2), (1, 25),
    ];
    for (i, d) in deltas {
        let mut t = base;
        t[i] = (t[i] as isize + d) as usize;
        out.push(ArchConfig::from_tuple(t));
    }
    out
}

fn frontier_oracle(points: &[DsePoint]) -> BTreeSet<String> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .map(|p| p.arch.to_string())
        .collect()
}

fn criterion_8() -> Outcome {
    let platform = Platform::default();
    let workloads = vec![preset("ldm-toy").map_err(|e| e.to_string())?];
    let points = perturbations();
    let space = DseSpace::new(points.clone(), workloads.clone());
    let a = explore(&space, &platform).map_err(|e| e.to_string())?;
    let mut shuffled = points;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let b = explore(&DseSpace::new(shuffled, workloads), &platform).map_err(|e| e.to_string())?;
    ensure(a == b, || "ranking depends on grid order".into())?;
    ensure(a.ranked.len() + a.excluded.len() == 21, || "points lost".into())?;
    let got: BTreeSet<String> = a.frontier.iter().map(|p| p.arch.to_string()).collect();
    ensure(got == frontier_oracle(&a.ranked), || format!("frontier {got:?} vs oracle {:?}", frontier_oracle(&a.ranked)))?;
    for p in &a.ranked {
        let again = evaluate_point(&p.arch, &space, &platform)?;
        ensure(again == *p, || format!("[{}] re-evaluates differently", p.arch))?;
    }
    let direct = evaluate_design(&space.workloads[0], &a.ranked[0].arch, space.opts, &platform).map_err(|e| e.to_string())?;
    ensure(direct.gops == a.ranked[0].gops, || "best point disagrees with a direct evaluation".into())?;
    Ok(format!(
        "{} ranked, {} excluded, frontier {} points, best [{}]",
        a.ranked.len(),
        a.excluded.len(),
        a.frontier.len(),
        a.ranked[0].arch
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 oracle equivalence (replay vs direct, 3 presets x 8 combos)", criterion_1),
        ("2 log-sum-exp softmax and decomposed attention properties", criterion_2),
        ("3 zero-eliminating transposed convolution", criterion_3),
        ("4 ablation methodology", criterion_4),
        ("5 accounting invariants", criterion_5),
        ("6 waveguide constraint enforcement", criterion_6),
        ("7 device-model spot checks", criterion_7),
        ("8 design-space exploration sanity", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail}) [{secs:.2} s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why}) [{secs:.2} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
