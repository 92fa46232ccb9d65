//! Experiment CLI: single runs, step-size scans, smoothness profiles,
//! envelope verification, the synthetic quartic replication and the
//! theorem-bound table. All outputs are CSV; exit codes are 0 success,
//! 1 acceptance failure, 2 configuration error.

use clap::{Args, Parser, Subcommand};
use clipgrad::config::{parse_vector, ExperimentConfig, NoiseSpec};
use clipgrad::harness::{
    measure_t_eps_det, measure_t_eps_sto, step_size_scan, synthetic_experiment, theorem_bound,
    ComplexityReport, ScanFamily, ScanResult, SyntheticConfig, TheoremId,
};
use clipgrad::objective::{parse_objective, SmoothnessConstants};
use clipgrad::optimizer::{run, RunOptions, StepRule, Trajectory};
use clipgrad::oracle::NoiseDistribution;
use clipgrad::smoothness::{profile_trajectory, verify_envelope, DEFAULT_DELTA};
use clipgrad::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "clipgrad",
    version,
    about = "Gradient clipping vs fixed-step descent under relaxed smoothness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one rule on one objective and export the trajectory.
    Run(RunArgs),
    /// Halving step-size scan of a rule family.
    Scan(ScanArgs),
    /// Local-smoothness profile along a trajectory.
    Profile(ProfileArgs),
    /// Verify an (L0, L1) envelope on a region.
    Verify(VerifyArgs),
    /// Replicate the synthetic quartic comparison end to end.
    ReplicateSynthetic(ReplicateArgs),
    /// Print the closed-form theorem-bound table.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (default: $OPT_DEFAULT_OUT, else current dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    /// key = value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    /// Rule text form, e.g. clipped_gd{eta_c=1,gamma=0.01}.
    #[arg(long)]
    rule: Option<String>,
    /// Start point, comma-separated.
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
    /// Noise bound; presence selects a stochastic oracle.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    noise_distribution: Option<String>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Monte-Carlo stream indices for stochastic rules, comma-separated.
    #[arg(long)]
    seeds: Option<String>,
    /// Record every n-th iterate.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    objective: String,
    #[arg(long)]
    x0: String,
    /// Rule family: fixed_gd or clipped_gd.
    #[arg(long)]
    family: String,
    /// Clipping threshold gamma*eta_c, required for clipped_gd.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    objective: String,
    #[arg(long)]
    rule: String,
    #[arg(long)]
    x0: String,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    /// Estimator grid spacing, must divide 1.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Profile every n-th iterate pair.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    objective: String,
    #[arg(long)]
    l0: f64,
    #[arg(long)]
    l1: f64,
    /// Region as lo,hi per dimension (default: the objective's region).
    #[arg(long)]
    region: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long, default_value_t = 30.0)]
    x0: f64,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    /// Stride for the exported best trajectories.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    l0: f64,
    #[arg(long)]
    l1: f64,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Initial suboptimality f(x0) - f*.
    #[arg(long)]
    delta_f: f64,
    #[arg(long)]
    eps: f64,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Scan(args) => cmd_scan(args),
        Cmd::Profile(args) => cmd_profile(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::ReplicateSynthetic(args) => cmd_replicate_synthetic(args),
        Cmd::Bounds(args) => cmd_bounds(args),
    }
}

fn out_dir(args: &OutArgs) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os("OPT_DEFAULT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn guarded_create(path: &Path, force: bool) -> Result<std::fs::File> {
    if path.exists() && !force {
        return Err(Error::InvalidParameter(format!(
            "refusing to overwrite {}; pass --force",
            path.display()
        )));
    }
    Ok(std::fs::File::create(path)?)
}

fn trajectory_csv(traj: &Trajectory, dim: usize, mut w: impl Write) -> Result<()> {
    let with_x = dim <= 4;
    let mut header = String::from("k,f,grad_norm,step_size");
    if with_x {
        for i in 0..dim {
            header.push_str(&format!(",x{i}"));
        }
    }
    writeln!(w, "{header}")?;
    for rec in &traj.iterates {
        let mut row = format!("{},{},{},{}", rec.k, rec.f, rec.grad_norm, rec.step_size);
        if with_x {
            for v in &rec.x {
                row.push_str(&format!(",{v}"));
            }
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let base = match &args.config {
        Some(path) => Some(ExperimentConfig::parse(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let required = |flag: Option<String>, from_cfg: Option<String>, name: &str| {
        flag.or(from_cfg)
            .ok_or_else(|| Error::Parse(format!("missing --{name} (no config value either)")))
    };
    let objective_id = required(
        args.objective,
        base.as_ref().map(|c| c.objective.clone()),
        "objective",
    )?;
    let rule: StepRule = match args.rule {
        Some(text) => text.parse()?,
        None => base
            .as_ref()
            .map(|c| c.rule.clone())
            .ok_or_else(|| Error::Parse("missing --rule (no config value either)".into()))?,
    };
    let x0 = match args.x0 {
        Some(text) => parse_vector(&text)?,
        None => base
            .as_ref()
            .map(|c| c.x0.clone())
            .ok_or_else(|| Error::Parse("missing --x0 (no config value either)".into()))?,
    };
    let eps = args
        .eps
        .or(base.as_ref().map(|c| c.eps))
        .ok_or_else(|| Error::Parse("missing --eps (no config value either)".into()))?;
    let budget = args
        .budget
        .or(base.as_ref().map(|c| c.budget))
        .ok_or_else(|| Error::Parse("missing --budget (no config value either)".into()))?;
    let noise_spec = if let Some(tau) = args.tau {
        let distribution = match &args.noise_distribution {
            Some(d) => d.parse::<NoiseDistribution>()?,
            None => NoiseDistribution::UniformBall,
        };
        Some(NoiseSpec {
            tau,
            distribution,
            seed: args.noise_seed.unwrap_or(0),
        })
    } else {
        base.as_ref().and_then(|c| c.noise.clone())
    };
    let seeds: Vec<u64> = match &args.seeds {
        Some(text) => text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Parse(format!("bad seed `{}`", t.trim())))
            })
            .collect::<Result<_>>()?,
        None => base
            .as_ref()
            .and_then(|c| c.seeds.clone())
            .unwrap_or_else(|| vec![0]),
    };

    let obj = parse_objective(&objective_id)?;
    let dir = out_dir(&args.out)?;

    if budget == 0 {
        // degenerate run: one evaluated row, no steps
        let f = obj.eval(&x0);
        let g = obj.grad_norm(&x0);
        let h = rule.step_size(g)?;
        let path = dir.join("run.csv");
        let mut w = guarded_create(&path, args.out.force)?;
        let with_x = obj.dim() <= 4;
        let mut header = String::from("k,f,grad_norm,step_size");
        let mut row = format!("0,{f},{g},{h}");
        if with_x {
            for (i, v) in x0.iter().enumerate() {
                header.push_str(&format!(",x{i}"));
                row.push_str(&format!(",{v}"));
            }
        }
        writeln!(w, "{header}")?;
        writeln!(w, "{row}")?;
        println!(
            "terminated_by=budget final_f={f} final_grad_norm={g} T_eps={}",
            if g <= eps { "0".to_string() } else { "inf".to_string() }
        );
        return Ok(0);
    }

    let opts = RunOptions::new(budget, eps).with_stride(args.stride);
    let noise = noise_spec.as_ref().map(|s| s.model()).transpose()?;
    if rule.is_stochastic() && noise.is_none() {
        return Err(Error::InvalidParameter(format!(
            "rule `{}` needs --tau to configure the noise model",
            rule.kind()
        )));
    }

    let mut trajs = Vec::new();
    for &seed in &seeds {
        let traj = run(&rule, &obj, &x0, &opts, noise.as_ref(), seed)?;
        let path = if seeds.len() == 1 {
            dir.join("run.csv")
        } else {
            dir.join(format!("run_seed{seed}.csv"))
        };
        trajectory_csv(&traj, obj.dim(), guarded_create(&path, args.out.force)?)?;
        let t_eps = measure_t_eps_det(&traj, eps)?;
        println!(
            "seed={seed} terminated_by={} final_f={} final_grad_norm={} T_eps={}",
            traj.terminated_by, traj.final_f, traj.final_grad_norm, t_eps
        );
        trajs.push(traj);
        if !rule.is_stochastic() {
            break; // deterministic rules ignore extra seeds
        }
    }
    if trajs.len() >= 2 {
        println!("T_eps_sto={}", measure_t_eps_sto(&trajs, eps)?);
    }
    Ok(0)
}

fn parse_family(name: &str, threshold: Option<f64>) -> Result<ScanFamily> {
    match name {
        "fixed_gd" => Ok(ScanFamily::FixedGd),
        "clipped_gd" => {
            let t = threshold.ok_or_else(|| {
                Error::Parse("clipped_gd scan needs --threshold (gamma*eta_c)".into())
            })?;
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "threshold must be positive, got {t}"
                )));
            }
            Ok(ScanFamily::ClippedGdWithThreshold(t))
        }
        other => Err(Error::Parse(format!("unknown scan family `{other}`"))),
    }
}

fn scan_csv(scan: &ScanResult, mut w: impl Write) -> Result<()> {
    writeln!(w, "{},final_grad_norm,best", ComplexityReport::CSV_HEADER)?;
    for report in &scan.reports {
        let best = report.rule == scan.best_rule;
        writeln!(w, "{},{},{}", report.csv_row(), report.final_grad_norm, best)?;
    }
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<i32> {
    let obj = parse_objective(&args.objective)?;
    let x0 = parse_vector(&args.x0)?;
    let family = parse_family(&args.family, args.threshold)?;
    let scan = step_size_scan(family, &obj, &x0, args.h_max, args.budget, args.eps)?;
    let dir = out_dir(&args.out)?;
    let path = dir.join("scan.csv");
    scan_csv(&scan, guarded_create(&path, args.out.force)?)?;
    println!(
        "best_rule={} best_final_grad_norm={}",
        scan.best_rule, scan.best_final_grad_norm
    );
    Ok(0)
}

fn cmd_profile(args: ProfileArgs) -> Result<i32> {
    let obj = parse_objective(&args.objective)?;
    let rule: StepRule = args.rule.parse()?;
    let x0 = parse_vector(&args.x0)?;
    let opts = RunOptions::new(args.budget, args.eps);
    let traj = run(&rule, &obj, &x0, &opts, None, 0)?;
    let profile = profile_trajectory(&obj, &traj, args.delta, args.stride)?;
    let dir = out_dir(&args.out)?;
    let mut w = guarded_create(&dir.join("profile.csv"), args.out.force)?;
    writeln!(w, "k,grad_norm,l_hat")?;
    for e in &profile.entries {
        writeln!(w, "{},{},{}", e.k, e.grad_norm, e.l_hat)?;
    }
    println!(
        "entries={} terminated_by={}",
        profile.entries.len(),
        traj.terminated_by
    );
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let obj = parse_objective(&args.objective)?;
    let c = SmoothnessConstants::new(args.l0, args.l1)?;
    let region: Vec<(f64, f64)> = match &args.region {
        Some(text) => {
            let vals = parse_vector(text)?;
            if vals.len() != 2 * obj.dim() {
                return Err(Error::Parse(format!(
                    "region needs {} bounds (lo,hi per dimension), got {}",
                    2 * obj.dim(),
                    vals.len()
                )));
            }
            vals.chunks(2).map(|c| (c[0], c[1])).collect()
        }
        None => obj
            .valid_region()
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "objective `{}` has no declared region; pass --region",
                    obj.id()
                ))
            })?
            .to_vec(),
    };
    let violations = verify_envelope(&obj, &c, &region, args.samples)?;
    let dir = out_dir(&args.out)?;
    let mut w = guarded_create(&dir.join("violations.csv"), args.out.force)?;
    writeln!(w, "x,hessian_norm,envelope")?;
    for v in &violations {
        writeln!(
            w,
            "\"{}\",{},{}",
            v.x.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            v.hessian_norm,
            v.envelope
        )?;
    }
    if violations.is_empty() {
        println!(
            "PASS: envelope (L0={}, L1={}) holds at {} samples",
            args.l0, args.l1, args.samples
        );
        Ok(0)
    } else {
        println!(
            "FAIL: {} of {} samples violate the envelope (L0={}, L1={})",
            violations.len(),
            args.samples,
            args.l0,
            args.l1
        );
        Ok(1)
    }
}

fn cmd_replicate_synthetic(args: ReplicateArgs) -> Result<i32> {
    let config = SyntheticConfig {
        x0: args.x0,
        threshold: args.threshold,
        h_max: args.h_max,
        budget: args.budget,
        record_stride: args.stride,
    };
    let dir = out_dir(&args.out)?;
    // claim all output files up front so a pre-populated directory is
    // refused before any work happens
    let mut files = std::collections::HashMap::new();
    for name in [
        "scan_gd.csv",
        "scan_clipped.csv",
        "best_gd_trajectory.csv",
        "best_clipped_trajectory.csv",
        "summary.csv",
        "bounds.csv",
    ] {
        files.insert(name, guarded_create(&dir.join(name), args.out.force)?);
    }

    let result = synthetic_experiment(&config)?;
    scan_csv(&result.gd_scan, files.remove("scan_gd.csv").unwrap())?;
    scan_csv(&result.clipped_scan, files.remove("scan_clipped.csv").unwrap())?;
    trajectory_csv(
        &result.gd_best_trajectory,
        1,
        files.remove("best_gd_trajectory.csv").unwrap(),
    )?;
    trajectory_csv(
        &result.clipped_best_trajectory,
        1,
        files.remove("best_clipped_trajectory.csv").unwrap(),
    )?;

    let gd = result.gd_scan.best_final_grad_norm;
    let clipped = result.clipped_scan.best_final_grad_norm;
    let monotone = result.clipped_best_trajectory.is_monotone_descent();
    let mut w = files.remove("summary.csv").unwrap();
    writeln!(w, "metric,value")?;
    writeln!(w, "gd_best_final_grad_norm,{gd}")?;
    writeln!(w, "clipped_best_final_grad_norm,{clipped}")?;
    writeln!(w, "ratio,{}", result.ratio)?;
    writeln!(w, "gd_best_rule,\"{}\"", result.gd_scan.best_rule)?;
    writeln!(w, "clipped_best_rule,\"{}\"", result.clipped_scan.best_rule)?;
    writeln!(w, "clipped_monotone_descent,{monotone}")?;

    // theorem-bound table for the quartic fixture constants
    let obj = parse_objective("quartic")?;
    let c = SmoothnessConstants::new(0.1, 10.0).unwrap();
    let delta_f = obj.eval(&[config.x0]) - obj.f_star().unwrap();
    let m = obj.constants().and_then(|c| c.m);
    let mut w = files.remove("bounds.csv").unwrap();
    writeln!(w, "theorem_id,eps,bound")?;
    for eps in [1e-1, 1e-2, 1e-3] {
        for (id, tau) in [
            (TheoremId::Thm3, None),
            (TheoremId::Thm5, None),
            (TheoremId::Thm6, Some(0.01)),
        ] {
            let bound = theorem_bound(id, &c, delta_f, eps, tau, m)?;
            writeln!(w, "{id},{eps},{bound}")?;
        }
    }

    println!("gd_best_final_grad_norm={gd}");
    println!("clipped_best_final_grad_norm={clipped}");
    println!("ratio={}", result.ratio);
    let mut ok = true;
    if !(clipped <= 1e-5) {
        println!("ACCEPTANCE FAIL: clipped best final |f'| = {clipped} > 1e-5");
        ok = false;
    }
    if !(gd >= 1e-2) {
        println!("ACCEPTANCE FAIL: fixed-GD best final |f'| = {gd} < 1e-2");
        ok = false;
    }
    if !(result.ratio >= 1e4) {
        println!("ACCEPTANCE FAIL: ratio = {} < 1e4", result.ratio);
        ok = false;
    }
    if !monotone {
        println!("ACCEPTANCE FAIL: clipped trajectory is not monotone in f");
        ok = false;
    }
    Ok(if ok { 0 } else { 1 })
}

fn cmd_bounds(args: BoundsArgs) -> Result<i32> {
    let mut c = SmoothnessConstants::new(args.l0, args.l1)?;
    if let Some(m) = args.m {
        c = c.with_m(m)?;
    }
    println!("theorem_id,bound");
    for id in [
        TheoremId::Thm3,
        TheoremId::Thm4Lower,
        TheoremId::Thm5,
        TheoremId::Thm6,
        TheoremId::Thm7,
    ] {
        match theorem_bound(id, &c, args.delta_f, args.eps, args.tau, args.m) {
            Ok(bound) => println!("{id},{bound}"),
            Err(e) => println!("{id},unavailable ({e})"),
        }
    }
    Ok(0)
}
