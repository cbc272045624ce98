use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qchannel_cli::config::ExperimentConfig;
use qchannel_cli::run::{run_method, RunError};
use qchannel_cli::{export, presets};

/// Learns Stinespring dilations of open-system channels from measurement data.
#[derive(Parser)]
#[command(name = "qchannel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured method and write the artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Inspect the shipped presets.
    Presets {
        #[command(subcommand)]
        command: PresetCommand,
    },
}

#[derive(Subcommand)]
enum PresetCommand {
    List,
    /// Print a preset's TOML.
    Show { name: String },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Path to a TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a shipped preset.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, RunError> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => presets::load(name)?,
            (None, None) => unreachable!("clap enforces one source"),
        };
        Ok(cfg)
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("QCHANNEL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring QCHANNEL_THREADS={v}"),
        }
    }
}

fn run(source: &Source, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), RunError> {
    let mut cfg = source.load()?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = &out {
        cfg.output.dir = Some(out.display().to_string());
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let root = PathBuf::from(cfg.output_dir());
    println!("{} ({}) -> {}", cfg.name, &cfg.hash()[..12], root.display());
    for &method in &cfg.methods {
        let rec = run_method(&cfg, method)?;
        let dir = root.join(method.as_str());
        export(&rec, &dir)?;
        let bures = &rec.error_curve.mean_bures;
        println!(
            "  {:<16} {:<10} J={:.3e} bures[1]={:.3e} bures[{}]={:.3e} iters={} qe={} {:.1}s",
            method.as_str(),
            rec.status.as_str(),
            rec.final_loss,
            bures[0],
            bures.len(),
            bures[bures.len() - 1],
            rec.trace.last().map_or(0, |r| r.iter),
            rec.qe_total,
            rec.wall_time.as_secs_f64()
        );
    }
    Ok(())
}

fn validate(source: &Source) -> Result<(), RunError> {
    let cfg = source.load()?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    println!("{}: ok ({})", cfg.name, cfg.hash());
    Ok(())
}

fn presets_command(cmd: &PresetCommand) -> Result<(), RunError> {
    match cmd {
        PresetCommand::List => {
            for p in presets::PRESETS {
                let cfg = presets::load(p.name)?;
                println!("{:<24} {}", p.name, cfg.description);
            }
        }
        PresetCommand::Show { name } => {
            let p = presets::find(name)
                .ok_or_else(|| qchannel_cli::ConfigError::new("", format!("unknown preset `{name}`")))?;
            print!("{}", p.toml);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match &cli.command {
        Command::Run { source, seed, out } => run(source, *seed, out.clone()),
        Command::Validate { source } => validate(source),
        Command::Presets { command } => presets_command(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

