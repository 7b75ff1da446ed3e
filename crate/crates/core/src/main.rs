use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ascontrol::experiments::{
    emit_profile, emit_spectral, emit_tables, performance_profile, run_spectral_with, run_sweep_with, ExperimentConfig,
};
use ascontrol::{Error, Result};

/// Semismooth Newton experiments for box-constrained convection-diffusion control.
#[derive(Parser, Debug)]
#[command(name = "ascontrol", version)]
struct Cli {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problems, e.g. CC-Pb1,MC-Pb1,SC-Pb1,CC-Pb2.
    #[arg(long)]
    problem: Option<String>,
    /// Refinement levels p.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// Convection strengths, or `rotational`.
    #[arg(long)]
    beta1: Option<String>,
    /// Control weights for MC-Pb1.
    #[arg(long)]
    eps: Option<String>,
    /// gmres+ipf, minres+bdf, bpcg+bt.
    #[arg(long)]
    method: Option<String>,
    /// exact or inexact.
    #[arg(long)]
    forcing: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute preconditioned eigenvalue tables instead of a solver sweep.
    #[arg(long)]
    spectral: bool,
    /// Tighten the linear tolerance floor to 1e-12.
    #[arg(long)]
    strict_safeguard: bool,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("problem", &cli.problem),
        ("levels", &cli.levels),
        ("nu", &cli.nu),
        ("beta1", &cli.beta1),
        ("eps", &cli.eps),
        ("method", &cli.method),
        ("forcing", &cli.forcing),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.spectral |= cli.spectral;
    cfg.strict_safeguard |= cli.strict_safeguard;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    if cfg.spectral {
        let (reports, warnings) = run_spectral_with(cfg, &mut |r| {
            println!(
                "{} p={} nu={:e} eps={} beta1={} k={} |I|={} lam=[{:.4}, {:.4}] bound={:.4} {}",
                r.problem,
                r.level,
                r.nu,
                r.eps,
                r.beta1,
                r.k,
                r.inactive,
                r.lam_min,
                r.lam_max,
                r.bound_hi,
                if r.pass() { "ok" } else { "VIOLATED" }
            )
        })?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        let path = cfg.out.join("spectral.csv");
        emit_spectral(&reports, &path)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let rows = run_sweep_with(cfg, &mut |r| {
        if r.failed() {
            eprintln!("warning: {} p={} nu={:e} eps={} beta1={} {}: {}", r.problem, r.p, r.nu, r.eps, r.beta1, r.method, r.outcome);
        } else {
            println!(
                "{} p={} nu={:e} eps={} beta1={} {}: li={:.2} nli={} tcpu={:.3}s",
                r.problem,
                r.p,
                r.nu,
                r.eps,
                r.beta1,
                r.method,
                r.li.unwrap_or(f64::NAN),
                r.nli.unwrap_or(0),
                r.tcpu.unwrap_or(f64::NAN)
            );
        }
    })?;
    let path = cfg.out.join("results.csv");
    emit_tables(&rows, &path)?;
    println!("wrote {}", path.display());
    if cfg.methods.len() > 1 {
        let profile = performance_profile(&rows)?;
        for p in &profile.excluded {
            eprintln!("warning: no method solved {p}; excluded from the profile");
        }
        let path = cfg.out.join("profile.csv");
        emit_profile(&profile, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
