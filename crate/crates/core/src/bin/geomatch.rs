use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use geomatch::config::{RunConfig, SEED_ENV};
use geomatch::dataset::SplitName;
use geomatch::pipeline::{self, AugmentMode, PipelineError};

#[derive(Parser)]
#[command(name = "geomatch", about = "Grasp contact prediction toolkit: data, training, inference, IK and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run config (JSON). Defaults are used when omitted; GEOMATCH_SEED overrides its seed.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic toy dataset.
    GenData {
        /// Output directory (falls back to paths.out in the config).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Seed; takes precedence over GEOMATCH_SEED and the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Write one contact-map file per usable grasp record.
    Maps {
        /// Dataset manifest (falls back to paths.manifest).
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train on the training split; writes weights, config.json and loss.csv.
    Train {
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Comma-separated end-effector ids to train on (default: all).
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        ee_filter: Option<Vec<String>>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Propose grasps for every object of a split and every end-effector.
    Infer {
        /// Directory written by `train`.
        #[arg(long, value_name = "DIR")]
        weights: PathBuf,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, default_value = "val", value_parser = ["train", "val"])]
        split: String,
        /// Keypoint-0 score ranks, one proposal each.
        #[arg(long, value_delimiter = ',', default_value = "0,20,50,100")]
        ranks: Vec<usize>,
        /// Proposals file (JSON lines).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Solve IK for each proposal; writes IK reports (JSON lines).
    Ik {
        #[arg(long, value_name = "FILE")]
        proposals: PathBuf,
        /// Manifest the proposals refer to.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Wrench-feasibility evaluation; writes eval.csv and summary.json.
    Eval {
        #[arg(long, value_name = "FILE")]
        ik: PathBuf,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Perturb a point cloud: noise, table crop, or both.
    Augment {
        #[arg(long, value_name = "FILE")]
        cloud: PathBuf,
        /// Clipped Gaussian noise with this standard deviation (meters).
        #[arg(long, value_name = "SIGMA")]
        noise: Option<f64>,
        /// Remove the bottom sixth of the z range.
        #[arg(long)]
        crop_table: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Render a loss CSV as an SVG line plot.
    Plot {
        #[arg(long, value_name = "FILE")]
        loss: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig, PipelineError> {
    Ok(match &arg.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::from_env_defaults()?,
    })
}

fn resolve(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, PipelineError> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| PipelineError::Usage(format!("--{name} is required (or set paths.{name} in the config)")))
}

fn split(name: &str) -> Result<SplitName, PipelineError> {
    name.parse().map_err(PipelineError::Usage)
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::GenData { out, seed, config } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = resolve(out, &cfg.paths.out, "out")?;
            let m = pipeline::gen_data(&out, &cfg)?;
            log::info!(
                "{} objects, {} end-effectors, split {}/{} -> {}",
                m.objects.len(),
                m.ees.len(),
                m.split.train.len(),
                m.split.val.len(),
                out.join("manifest.json").display()
            );
        }
        Command::Maps { manifest, out, config } => {
            let cfg = load_config(&config)?;
            let manifest = resolve(manifest, &cfg.paths.manifest, "manifest")?;
            let out = resolve(out, &cfg.paths.out, "out")?;
            let r = pipeline::maps(&manifest, &out, &cfg)?;
            log::info!("{} map files, {} records skipped", r.written.len(), r.skipped.len());
        }
        Command::Train {
            manifest,
            out,
            ee_filter,
            config,
        } => {
            let cfg = load_config(&config)?;
            let manifest = resolve(manifest, &cfg.paths.manifest, "manifest")?;
            let out = resolve(out, &cfg.paths.out, "out")?;
            let t = pipeline::train(&manifest, &out, &cfg, ee_filter.as_deref())?;
            if let (Some(first), Some(last)) = (t.log.first(), t.log.last()) {
                log::info!("loss {:.6} -> {:.6} over {} epochs", first.total, last.total, t.log.len());
            }
        }
        Command::Infer {
            weights,
            manifest,
            split: s,
            ranks,
            out,
        } => {
            let records = pipeline::infer(&weights, &manifest, split(&s)?, &ranks, &out)?;
            log::info!("{} proposals -> {}", records.len(), out.display());
        }
        Command::Ik {
            proposals,
            manifest,
            out,
            config,
        } => {
            let cfg = load_config(&config)?;
            let reports = pipeline::ik(&proposals, &manifest, &out, &cfg)?;
            let converged = reports
                .iter()
                .filter(|r| r.status == geomatch::solver::SolveStatus::Converged)
                .count();
            log::info!("{converged}/{} solves converged", reports.len());
        }
        Command::Eval {
            ik,
            manifest,
            out,
            config,
        } => {
            let cfg = load_config(&config)?;
            let e = pipeline::eval(&ik, &manifest, &out, &cfg)?;
            log::info!(
                "success {:.1}% over {} grasps",
                e.summary.success_percent,
                e.summary.evaluated
            );
        }
        Command::Augment {
            cloud,
            noise,
            crop_table,
            seed,
            out,
        } => {
            let mode = match (noise, crop_table) {
                (Some(s), false) => AugmentMode::Noise(s),
                (None, true) => AugmentMode::CropTable,
                (Some(s), true) => AugmentMode::NoiseAndCrop(s),
                (None, false) => {
                    return Err(PipelineError::Usage("give --noise SIGMA, --crop-table, or both".into()))
                }
            };
            let c = pipeline::augment(&cloud, mode, seed, &out)?;
            log::info!("{} points -> {}", c.len(), out.display());
        }
        Command::Plot { loss, out } => pipeline::plot(&loss, &out)?,
    }
    Ok(())
}

fn version() -> &'static str {
    Box::leak(
        format!(
            "{} (dataset manifest format {}, weights format {})",
            geomatch::VERSION,
            geomatch::dataset::MANIFEST_FORMAT_VERSION,
            geomatch::diffnet::WEIGHTS_FORMAT_VERSION
        )
        .into_boxed_str(),
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let command = Cli::command()
        .version(version())
        .after_help(format!("Environment: {SEED_ENV} overrides the config seed."));
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
