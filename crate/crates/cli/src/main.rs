use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use difflight::cost::to_csv;
use difflight::dse::Grid;
use difflight::scheduler::{replay_error, trace_csv};
use difflight::{
    ablation, aggregate, compile, explore, load_workload_file, preset, ArchConfig, ConfigFile, DseSpace,
    Optimizations, Platform, WorkloadGraph, PRESET_NAMES,
};

/// Photonic diffusion-accelerator simulator.
#[derive(Parser, Debug)]
#[command(name = "difflight", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile and cost one workload.
    Run(RunArgs),
    /// Normalised-energy ablation over the dataflow optimizations.
    Ablate(AblateArgs),
    /// Explore a design space of architecture tuples.
    Dse(DseArgs),
    /// Replay compiled schedules against direct execution.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Architecture tuple `Y,N,K,H,L,M`; overrides the profile.
    #[arg(long)]
    arch: Option<String>,
    /// Device/platform profile in `key = value` form.
    #[arg(long, env = "DIFFLIGHT_PROFILE")]
    profile: Option<PathBuf>,
    /// Seed for random weights and noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, conflicts_with = "workload", required_unless_present = "workload")]
    preset: Option<String>,
    /// Workload JSON file.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Comma-separated: none, sparsity, pipeline, dacshare, all.
    #[arg(long, default_value = "all")]
    opts: String,
    #[arg(long, default_value = "difflight-out")]
    out: PathBuf,
    /// Also write the per-step schedule trace.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Presets to ablate (repeatable); all presets when no workload is given.
    #[arg(long)]
    preset: Vec<String>,
    #[arg(long)]
    workload: Vec<PathBuf>,
    #[arg(long, default_value = "difflight-out")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DseArgs {
    /// Space file with `dse.*` keys; a small grid around the reference otherwise.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    preset: Vec<String>,
    #[arg(long)]
    workload: Vec<PathBuf>,
    #[arg(long, default_value = "difflight-out")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    preset: Vec<String>,
    #[arg(long)]
    workload: Vec<PathBuf>,
    /// Optimization set to verify; every combination when omitted.
    #[arg(long)]
    opts: Option<String>,
    /// Also write verify.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

const VERIFY_TOLERANCE: f64 = 1e-8;

struct Setup {
    platform: Platform,
    arch: ArchConfig,
    config: ConfigFile,
}

/// Read the profile, leaving `dse.*` keys in `config` for the caller.
fn setup(common: &Common) -> Result<Setup> {
    let mut config = match &common.profile {
        Some(p) => ConfigFile::load(p).with_context(|| format!("reading profile {}", p.display()))?,
        None => ConfigFile::default(),
    };
    let platform = Platform::from_config(&mut config).context("profile")?;
    let mut arch = ArchConfig::from_config(&mut config).context("profile")?.unwrap_or_default();
    if let Some(text) = &common.arch {
        let parsed = ArchConfig::parse(text).with_context(|| format!("--arch {text}"))?;
        arch = ArchConfig { dac_sharing: arch.dac_sharing, mr_per_waveguide_limit: arch.mr_per_waveguide_limit, bit_width: arch.bit_width, ..parsed };
    }
    Ok(Setup { platform, arch, config })
}

fn workloads(presets: &[String], files: &[PathBuf], all_by_default: bool) -> Result<Vec<WorkloadGraph>> {
    let mut out = Vec::new();
    for name in presets {
        out.push(preset(name)?);
    }
    for f in files {
        out.push(load_workload_file(f).with_context(|| format!("loading {}", f.display()))?);
    }
    if out.is_empty() && all_by_default {
        for name in PRESET_NAMES {
            out.push(preset(name)?);
        }
    }
    if out.is_empty() {
        bail!("no workload given (use --preset or --workload)");
    }
    Ok(out)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let s = setup(&args.common)?;
    s.config.finish().context("profile")?;
    let graph = match (&args.preset, &args.workload) {
        (Some(p), None) => preset(p)?,
        (None, Some(f)) => load_workload_file(f).with_context(|| format!("loading {}", f.display()))?,
        _ => bail!("give exactly one of --preset or --workload"),
    };
    let opts = Optimizations::parse(&args.opts)?;
    let schedule = compile(&graph, &s.arch, opts, &s.platform)?;
    let report = aggregate(&schedule, &s.platform)?;

    prepare_out(&args.out)?;
    write(&args.out, "report.csv", &report.summary_csv()?)?;
    write(&args.out, "layers.csv", &report.layers_csv()?)?;
    write(&args.out, "timesteps.csv", &report.timesteps_csv()?)?;
    write(&args.out, "utilization.csv", &report.utilization_csv()?)?;
    write(&args.out, "links.csv", &report.links_csv()?)?;
    write(&args.out, "report.json", &report.to_json())?;
    if args.trace {
        write(&args.out, "trace.csv", &trace_csv(&schedule)?)?;
    }

    println!("workload      {} (T = {})", report.workload, report.timesteps);
    println!("arch          [{}] dac_sharing {}", report.arch, schedule.dac_sharing);
    println!("opts          {}", opts.label());
    println!("passes/step   {}", report.passes_per_timestep);
    println!("latency       {:.6e} s", report.latency_s);
    println!("energy        {:.6e} J", report.energy_j);
    println!("GOPS          {:.6}", report.gops);
    println!("EPB           {:.6e} J/bit", report.epb_j_per_bit);
    for (class, v) in difflight::EnergyBreakdown::CLASSES.iter().zip(report.breakdown.values()) {
        println!("  {class:<8}    {v:.6e} J");
    }
    if let Some(reason) = report.infeasibility() {
        eprintln!("error: infeasible design point: {reason}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(args: AblateArgs) -> Result<ExitCode> {
    let s = setup(&args.common)?;
    s.config.finish().context("profile")?;
    let mut rows = Vec::new();
    for g in workloads(&args.preset, &args.workload, true)? {
        rows.extend(ablation(&g, &s.arch, &s.platform)?);
    }
    prepare_out(&args.out)?;
    write(&args.out, "ablation.csv", &to_csv(&rows)?)?;
    for r in &rows {
        println!("{:<10} {:<12} {:.6}", r.workload, r.variant, r.normalized_energy);
    }
    Ok(ExitCode::SUCCESS)
}

fn default_grid() -> Grid {
    Grid { y: vec![2, 4], n: vec![8, 12], k: vec![3], h: vec![3, 6], l: vec![6], m: vec![3], dac_sharing: vec![1, 2] }
}

fn cmd_dse(args: DseArgs) -> Result<ExitCode> {
    let s = setup(&args.common)?;
    s.config.finish().context("profile")?;
    let graphs = workloads(&args.preset, &args.workload, true)?;
    let mut space = match &args.space {
        Some(path) => {
            let mut cfg = ConfigFile::load(path).with_context(|| format!("reading {}", path.display()))?;
            let space = DseSpace::from_config(&mut cfg, graphs.clone())?;
            cfg.finish().with_context(|| format!("space file {}", path.display()))?;
            space
        }
        None => DseSpace::new(default_grid().points(), graphs.clone()),
    };
    if !args.preset.is_empty() || !args.workload.is_empty() {
        space.workloads = graphs;
    }
    for p in &mut space.points {
        p.mr_per_waveguide_limit = s.arch.mr_per_waveguide_limit;
        p.bit_width = s.arch.bit_width;
    }
    let result = explore(&space, &s.platform)?;
    prepare_out(&args.out)?;
    write(&args.out, "dse.csv", &result.results_csv()?)?;
    write(&args.out, "frontier.csv", &result.frontier_csv()?)?;
    for (i, p) in result.ranked.iter().enumerate().take(10) {
        println!(
            "{:>3}. [{}] s={} GOPS {:.4} EPB {:.4e} objective {:.4e}",
            i + 1,
            p.arch,
            p.arch.dac_sharing,
            p.gops,
            p.epb_j_per_bit,
            p.objective
        );
    }
    for e in &result.excluded {
        println!("excluded [{}] s={}: {}", e.arch, e.arch.dac_sharing, e.reason);
    }
    println!("frontier: {} of {} feasible points", result.frontier.len(), result.ranked.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let s = setup(&args.common)?;
    s.config.finish().context("profile")?;
    let combos: Vec<Optimizations> = match &args.opts {
        Some(o) => vec![Optimizations::parse(o)?],
        None => Optimizations::combinations().to_vec(),
    };
    let mut lines = vec!["workload,opts,max_rel_error,pass".to_string()];
    let mut failures = 0;
    for g in workloads(&args.preset, &args.workload, true)? {
        for o in &combos {
            let schedule = compile(&g, &s.arch, *o, &s.platform)?;
            let err = replay_error(&schedule, &g, args.common.seed)?;
            let ok = err <= VERIFY_TOLERANCE;
            failures += usize::from(!ok);
            println!("{:<10} {:<26} max rel error {err:.3e} {}", g.name, o.label(), if ok { "ok" } else { "FAIL" });
            lines.push(format!("{},{},{err:e},{ok}", g.name, o.label()));
        }
    }
    if let Some(dir) = &args.out {
        prepare_out(dir)?;
        write(dir, "verify.csv", &(lines.join("\n") + "\n"))?;
    }
    if failures > 0 {
        eprintln!("error: {failures} schedule(s) exceed the {VERIFY_TOLERANCE:e} tolerance");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Dse(a) => cmd_dse(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
