//! `dynmask`: run the masking pipeline over a sequence, generate synthetic scenes, and
//! evaluate outputs.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dynmask::config::PipelineConfig;
use dynmask::eval::{self, MetricsReport, Trajectory};
use dynmask::io;
use dynmask::moc::DeformationTrigger;
use dynmask::pipeline;
use dynmask::scene::CameraIntrinsics;
use dynmask::synth::{self, SceneScript};
use dynmask::tracker::AssociationMethod;

const DEMO_SCENE: &str = include_str!("../scenes/demo.toml");

#[derive(Parser, Debug)]
#[command(name = "dynmask", version, about = "Dynamic-object tracking and depth masking for RGB-D SLAM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track, classify and mask every frame of a TUM-layout sequence
    Run(RunArgs),
    /// Render a synthetic sequence from a scene script
    Synth(SynthArgs),
    /// Compute trajectory and tracking metrics
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Sequence directory (depth.txt, groundtruth.txt, detections)
    sequence: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Process in single precision
    #[arg(long)]
    f32: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene script (TOML)
    #[arg(required_unless_present = "demo", conflicts_with = "demo")]
    script: Option<PathBuf>,
    /// Use the bundled demo scene
    #[arg(long)]
    demo: bool,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the script seed; changes the noise realization only
    #[arg(long)]
    seed: Option<u64>,
    /// Pipeline configuration; only validated here, the scene script drives rendering
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Estimated trajectory (TUM format)
    #[arg(long)]
    est: PathBuf,
    /// Reference trajectory (TUM format)
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Track log written by `run`
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// Ground-truth sidecar written by `synth`
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report unaligned ATE
    #[arg(long)]
    no_align: bool,
    #[arg(long, default_value_t = 0.02)]
    max_dt: f64,
    /// Track to ground-truth matching radius, m
    #[arg(long, default_value_t = 0.5)]
    match_radius: f64,
    /// Latency CSV written by `run`; defaults to `latency.csv` beside the track log
    #[arg(long)]
    latency: Option<PathBuf>,
    /// Write the metrics CSV here as well as to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validated only; evaluation has no tunables in the pipeline configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for a uniform interface; evaluation is deterministic
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AssociationArg {
    Greedy,
    Optimal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TriggerArg {
    LowIou,
    HighIou,
}

/// One flag per configuration key.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    max_coast_frames: Option<usize>,
    #[arg(long)]
    score_threshold: Option<f64>,
    #[arg(long)]
    max_detections: Option<usize>,
    #[arg(long)]
    gate_distance: Option<f64>,
    #[arg(long, value_enum)]
    association: Option<AssociationArg>,
    #[arg(long)]
    confirm_hits: Option<usize>,
    #[arg(long)]
    confirm_window: Option<usize>,
    #[arg(long)]
    min_valid_pixels: Option<usize>,
    #[arg(long)]
    person_velocity_threshold: Option<f64>,
    #[arg(long)]
    person_accel_sigma: Option<f64>,
    #[arg(long)]
    other_velocity_threshold: Option<f64>,
    #[arg(long)]
    other_accel_sigma: Option<f64>,
    #[arg(long)]
    lateral_sigma: Option<f64>,
    #[arg(long)]
    depth_sigma_quadratic: Option<f64>,
    #[arg(long)]
    depth_sigma_constant: Option<f64>,
    #[arg(long)]
    init_position_inflation: Option<f64>,
    #[arg(long)]
    init_velocity_sigma: Option<f64>,
    #[arg(long)]
    gamma_velocity_exponent: Option<u8>,
    #[arg(long)]
    max_condition: Option<f64>,
    #[arg(long)]
    deformation_threshold: Option<f64>,
    #[arg(long, value_enum)]
    deformation_trigger: Option<TriggerArg>,
    #[arg(long)]
    dilation_radius: Option<usize>,
    #[arg(long)]
    depth_scale: Option<f64>,
    #[arg(long)]
    max_dt: Option<f64>,
    #[arg(long)]
    queue_depth: Option<usize>,
    #[arg(long)]
    detections_file: Option<PathBuf>,
    #[arg(long)]
    trajectory_file: Option<String>,
    /// `fx,fy,cx,cy,width,height`
    #[arg(long, value_parser = parse_intrinsics)]
    intrinsics: Option<CameraIntrinsics<f64>>,
}

fn parse_intrinsics(s: &str) -> Result<CameraIntrinsics<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err("expected fx,fy,cx,cy,width,height".into());
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|e| format!("{}: {e}", parts[i]));
    let u = |i: usize| parts[i].parse::<usize>().map_err(|e| format!("{}: {e}", parts[i]));
    CameraIntrinsics::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?).map_err(|e| e.to_string())
}

macro_rules! apply {
    ($cfg:ident, $o:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let o = self;
        apply!(
            cfg,
            o,
            max_coast_frames,
            score_threshold,
            max_detections,
            gate_distance,
            confirm_hits,
            confirm_window,
            min_valid_pixels,
            person_velocity_threshold,
            person_accel_sigma,
            other_velocity_threshold,
            other_accel_sigma,
            lateral_sigma,
            depth_sigma_quadratic,
            depth_sigma_constant,
            init_position_inflation,
            init_velocity_sigma,
            gamma_velocity_exponent,
            max_condition,
            deformation_threshold,
            dilation_radius,
            depth_scale,
            max_dt,
            queue_depth,
            detections_file,
            trajectory_file,
        );
        if let Some(a) = o.association {
            cfg.association = match a {
                AssociationArg::Greedy => AssociationMethod::Greedy,
                AssociationArg::Optimal => AssociationMethod::Optimal,
            };
        }
        if let Some(t) = o.deformation_trigger {
            cfg.deformation_trigger = match t {
                TriggerArg::LowIou => DeformationTrigger::LowIou,
                TriggerArg::HighIou => DeformationTrigger::HighIou,
            };
        }
        if o.intrinsics.is_some() {
            cfg.intrinsics = o.intrinsics;
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>, overrides: &Overrides) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading configuration {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().context("configuration after applying flags")?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.config.as_deref(), args.seed, &args.overrides)?;
    let summary = if args.f32 {
        pipeline::run_sequence::<f32>(&cfg, &args.sequence, &args.out)
    } else {
        pipeline::run_sequence::<f64>(&cfg, &args.sequence, &args.out)
    }
    .with_context(|| format!("processing {}", args.sequence.display()))?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "processed {} frames ({} dropped by stream association), {} tracks born, {} died",
        summary.frames, summary.dropped_frames, summary.tracks_born, summary.tracks_died
    );
    print!("{}", summary.latency_report());
    let report = MetricsReport {
        latency: summary.latency(),
        ..MetricsReport::default()
    };
    let csv = args.out.join("latency.csv");
    eval::emit_csv(&report, &csv)?;
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    if let Some(p) = &args.config {
        PipelineConfig::load(p).with_context(|| format!("loading configuration {}", p.display()))?;
    }
    let mut script = match &args.script {
        Some(p) => SceneScript::load(p).with_context(|| format!("reading scene script {}", p.display()))?,
        None => SceneScript::from_toml_str(DEMO_SCENE).context("bundled demo scene")?,
    };
    if let Some(s) = args.seed {
        script.seed = s;
    }
    let out = &args.out;
    if out.exists() && fs::read_dir(out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        bail!("output {} exists and is not an empty directory", out.display());
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
    // render into a sibling directory and rename, so a failure leaves nothing behind
    let staging = tempfile::Builder::new()
        .prefix(".dynmask-synth-")
        .tempdir_in(&parent)
        .with_context(|| format!("creating a staging directory in {}", parent.display()))?;
    let summary = synth::generate_sequence(&script, staging.path())?;
    if out.exists() {
        fs::remove_dir(out)?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out).with_context(|| format!("moving the sequence into {}", out.display()))?;
    println!(
        "wrote {} frames and {} detections to {}",
        summary.frames,
        summary.detections,
        out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    if let Some(p) = &args.config {
        // validated for consistency with the other subcommands; eval has no tunables there
        PipelineConfig::load(p).with_context(|| format!("loading configuration {}", p.display()))?;
    }
    let est = Trajectory::read(&args.est).with_context(|| format!("reading {}", args.est.display()))?;
    let reference = Trajectory::read(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?;
    let mut report = MetricsReport {
        ate: Some(eval::ate(&est, &reference, args.max_dt, !args.no_align)?),
        ..MetricsReport::default()
    };
    match (&args.tracks, &args.truth) {
        (Some(tracks), Some(truth)) if truth.is_file() => {
            let log = io::read_track_log(tracks).with_context(|| format!("reading {}", tracks.display()))?;
            let gt = synth::read_truth(truth).with_context(|| format!("reading {}", truth.display()))?;
            let m = eval::track_metrics(&log, &gt, args.max_dt, args.match_radius);
            report.warnings.extend(m.warnings.iter().cloned());
            report.tracks = Some(m);
        }
        (Some(_), Some(truth)) => report
            .warnings
            .push(format!("ground truth {} not found; trajectory metrics only", truth.display())),
        (Some(_), None) => report.warnings.push("no ground truth given; trajectory metrics only".into()),
        (None, _) => {}
    }
    let latency = args
        .latency
        .clone()
        .or_else(|| args.tracks.as_ref().and_then(|t| t.parent()).map(|d| d.join("latency.csv")).filter(|p| p.is_file()));
    if let Some(p) = latency {
        report.latency = eval::read_latency_csv(&p).with_context(|| format!("reading {}", p.display()))?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(out) = &args.out {
        eval::emit_csv(&report, out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
