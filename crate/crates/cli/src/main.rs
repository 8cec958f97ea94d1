// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::Config;
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "ambsim", version, about = "Ambient backscatter link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form against exhaustive best tag orientation.
    Optimum(RunArgs),
    /// BER map and best-orientation carpet around the reader.
    Map(RunArgs),
    /// Outage probability against SNR.
    Outage(RunArgs),
    /// Polarization-coding BER curves per state pair.
    Pcs(RunArgs),
    /// Lint the configuration and check scatterer placement.
    Validate(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named scenario preset, used when no config is given.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap; 0 uses one worker per core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load(args: &RunArgs) -> Result<(Config, usize)> {
    let mut threads = args.threads;
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            if path.extension().is_some_and(|e| e == "json") && threads.is_none() {
                let text = std::fs::read_to_string(path)?;
                let m: Manifest = serde_json::from_str(&text).context("parsing manifest")?;
                threads = Some(m.threads);
            }
            Config::load(path)?
        }
        (None, Some(p)) => Config::from_preset(p)?,
        (None, None) => Config::default().resolved()?,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok((cfg, threads.unwrap_or(0)))
}

fn run(name: &str, args: &RunArgs) -> Result<()> {
    let started = Instant::now();
    let (cfg, threads) = load(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    if name == "validate" {
        return pool.install(|| commands::validate(&cfg));
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut out = commands::Outputs::new(&args.out);
    pool.install(|| match name {
        "optimum" => commands::optimum(&cfg, &mut out),
        "map" => commands::map(&cfg, &mut out),
        "outage" => commands::outage(&cfg, &mut out),
        "pcs" => commands::pcs(&cfg, &mut out),
        _ => unreachable!("unknown command {name}"),
    })?;
    let manifest = Manifest {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        threads,
        config: cfg,
        outputs: out.names,
        duration_s: started.elapsed().as_secs_f64(),
    };
    manifest.write(&args.out)?;
    println!(
        "wrote {} files to {}",
        manifest.outputs.len() + 1,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Optimum(a) => ("optimum", a),
        Command::Map(a) => ("map", a),
        Command::Outage(a) => ("outage", a),
        Command::Pcs(a) => ("pcs", a),
        Command::Validate(a) => ("validate", a),
    };
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
