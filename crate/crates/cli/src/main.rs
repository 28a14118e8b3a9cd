//! Command-line front end: run experiments, dump presets, validate configs
//! and compute path features.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sigfp::run::{preset, run, RunConfig, RunOutcome, PRESETS};
use sigfp::sigkit::FeatureKind;
use sigfp::Error;

mod sig_tool;

/// Signature-based fictitious play for mean-field FBSDEs with common noise.
#[derive(Parser)]
#[command(name = "sigfp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Override the seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory (also read from SIGFP_OUTPUT_DIR).
        #[arg(long, env = "SIGFP_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Thread count (also read from SIGFP_THREADS).
        #[arg(long, env = "SIGFP_THREADS")]
        threads: Option<usize>,
        /// Print the resolved configuration and exit without touching the disk.
        #[arg(long)]
        dry_run: bool,
    },
    /// Print a named preset as TOML.
    PresetDump {
        /// One of the shipped presets; all of them when omitted.
        name: Option<String>,
    },
    /// Check a configuration without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Features of every prefix of a path read from CSV `(t, x_1, .., x_q)`.
    SigTool {
        /// Input CSV with a header row.
        input: PathBuf,
        /// Truncation depth.
        #[arg(long, short = 'm')]
        depth: usize,
        #[arg(long, value_enum, default_value = "sig")]
        feature: Feature,
        /// Add the time column as an extra path coordinate.
        #[arg(long)]
        time_augment: bool,
        /// Output file; standard output when omitted.
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Feature {
    Sig,
    Logsig,
}

impl From<Feature> for FeatureKind {
    fn from(f: Feature) -> Self {
        match f {
            Feature::Sig => FeatureKind::Sig,
            Feature::Logsig => FeatureKind::Logsig,
        }
    }
}

fn load(source: &Source) -> sigfp::Result<RunConfig> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
        }
        (None, Some(name)) => preset(name),
        (None, None) => Err(Error::Config("pass --config or --preset".into())),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Data(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sigfp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> sigfp::Result<()> {
    match cli.command {
        Command::Run {
            source,
            seed,
            output_dir,
            threads,
            dry_run,
        } => {
            let mut cfg = load(&source)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            cfg.validate()?;
            if dry_run {
                print!("{}", cfg.to_toml()?);
                return Ok(());
            }
            let report = run(&cfg)?;
            match &report.outcome {
                RunOutcome::Supervised { mae, .. } => println!("{}: time-averaged MAE {mae:.4e}", report.run_id),
                RunOutcome::Fictitious { stages, .. } => {
                    for s in stages {
                        let r = &s.record;
                        match r.mee {
                            Some(m) => println!(
                                "stage {:>3}  bsde {:.3e}  mee x {:.3e} y {:.3e} z {:.3e} z0 {:.3e}",
                                r.stage, r.bsde_loss, m.x, m.y, m.z, m.z0
                            ),
                            None => println!("stage {:>3}  bsde {:.3e}", r.stage, r.bsde_loss),
                        }
                    }
                }
            }
            println!("artifacts in {}", report.dir.display());
            Ok(())
        }
        Command::PresetDump { name } => {
            let names: Vec<&str> = match &name {
                Some(n) => vec![n.as_str()],
                None => PRESETS.to_vec(),
            };
            let mut text = String::new();
            for (i, n) in names.iter().enumerate() {
                if i > 0 {
                    text.push('\n');
                }
                text.push_str(&format!("# preset {n}\n{}", preset(n)?.to_toml()?));
            }
            print!("{text}");
            Ok(())
        }
        Command::Validate { source } => {
            let cfg = load(&source)?;
            println!("ok: {} ({})", cfg.run_id(), cfg.benchmark.as_str());
            Ok(())
        }
        Command::SigTool {
            input,
            depth,
            feature,
            time_augment,
            output,
        } => {
            let file = fs::File::open(&input)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
            let mut buf = Vec::new();
            sig_tool::prefix_features(file, &mut buf, depth, feature.into(), time_augment)?;
            match output {
                Some(path) => fs::write(&path, &buf)?,
                None => io::stdout().lock().write_all(&buf)?,
            }
            Ok(())
        }
    }
}
