use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtpp_cli::commands;
use mtpp_cli::{CliError, CliResult, RunConfig};
use mtpp_core::{DecoderFamily, Setting};

#[derive(Parser)]
#[command(
    name = "mtpp",
    version,
    about = "Neural marked temporal point process experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// base, plus, plusplus, dup or dupdisjoint.
    #[arg(long)]
    setting: Option<Setting>,
    /// rmtpp, lnm, fnn, thp or sahp.
    #[arg(long)]
    decoder: Option<DecoderFamily>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured Hawkes process into a data file.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one configuration into a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a run directory on its test fold or on another data file.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the gradient conflicts logged by a run.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
    },
    /// Train two configurations on the same data and tabulate them.
    Compare {
        /// First config; its data section is used for both runs.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        against: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config {
            path: PathBuf::from("<config>"),
            message: "no output directory: pass --out or set `out`".into(),
        })
}

fn load(
    path: &Path,
    seed: Option<u64>,
    setting: Option<Setting>,
    decoder: Option<DecoderFamily>,
) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_overrides(seed, setting, decoder);
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { config, out, seed } => {
            let cfg = load(&config, seed, None, None)?;
            let out = out_dir(out, &cfg)?;
            let path = commands::synth(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            config,
            out,
            overrides,
        } => {
            let cfg = load(
                &config,
                overrides.seed,
                overrides.setting,
                overrides.decoder,
            )?;
            let out = out_dir(out, &cfg)?;
            let outcome = commands::train(cfg, &out)?;
            println!(
                "trained {} epochs into {}",
                outcome.epochs,
                outcome.run_dir.display()
            );
            if let Some(r) = outcome.report {
                for (name, value) in r.metric_rows() {
                    println!("{name:<14} {value:.6}");
                }
            }
        }
        Command::Eval { run, data, out } => {
            let report = commands::eval(&run, data.as_deref(), out.as_deref())?;
            for (name, value) in report.metric_rows() {
                println!("{name:<14} {value:.6}");
            }
        }
        Command::Diagnose { run } => print!("{}", commands::diagnose(&run)?),
        Command::Compare {
            config,
            against,
            out,
            seed,
        } => {
            let a = load(&config, seed, None, None)?;
            let b = load(&against, seed, None, None)?;
            let out = out_dir(out, &a)?;
            let (_, table) = commands::compare(a, b, &out)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
