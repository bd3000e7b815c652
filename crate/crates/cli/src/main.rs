//! `segdyn`: runs the segment-description pipeline stage by stage.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use config::{Overrides, PipelineConfig};
use error::CliError;
use manifest::{sha256_file, RunManifest, MANIFEST_JSON};
use stages::Stage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Command {
    Calibrate,
    Segments,
    Transitions,
    Encode,
    Shadow,
    Enumerate,
    Entropy,
    Bounds,
    Report,
    /// Every stage in order.
    All,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Calibrate => vec![Stage::Calibrate],
            Command::Segments => vec![Stage::Segments],
            Command::Transitions => vec![Stage::Transitions],
            Command::Encode => vec![Stage::Encode],
            Command::Shadow => vec![Stage::Shadow],
            Command::Enumerate => vec![Stage::Enumerate],
            Command::Entropy => vec![Stage::Entropy],
            Command::Bounds => vec![Stage::Bounds],
            Command::Report => vec![Stage::Report],
            Command::All => Stage::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "segdyn", version, about = "Segment description of chaotic flows")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Re-validate recorded outputs and digests instead of recomputing.
    #[arg(long)]
    check: bool,
    /// Extra `key=value` overrides; dotted keys reach nested fields.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        set: cli.set.clone(),
    };
    let cfg = PipelineConfig::load(&cli.config, &overrides)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config(vec!["--jobs: must be >= 1".into()]));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let dir = cfg.output_dir.clone();
    if cli.check {
        return check(&cfg, &dir, &cli.command.stages());
    }
    std::fs::create_dir_all(&dir).map_err(|source| segdyn::Error::Io {
        path: dir.clone(),
        source,
    })?;
    let mut manifest = RunManifest::open(&dir, &cfg);
    for stage in cli.command.stages() {
        let started = Instant::now();
        let outputs = stage.run(&cfg, &dir)?;
        manifest.record(&dir, stage.name(), started.elapsed().as_secs_f64(), &outputs)?;
        manifest.save(&dir)?;
    }
    Ok(())
}

fn check(cfg: &PipelineConfig, dir: &Path, wanted: &[Stage]) -> Result<(), CliError> {
    let path = dir.join(MANIFEST_JSON);
    if !path.exists() {
        return Err(CliError::MissingArtifact { path, stage: "all" });
    }
    let manifest: RunManifest = segdyn::io::read_json(&path)?;
    let mut problems = Vec::new();
    if manifest.config != *cfg {
        problems.push(format!("{MANIFEST_JSON}: recorded config differs from the given one"));
    }
    for stage in wanted {
        let Some(record) = manifest.stages.get(stage.name()) else {
            return Err(CliError::MissingArtifact {
                path: path.clone(),
                stage: stage.name(),
            });
        };
        for (name, digest) in &record.outputs {
            let file = dir.join(name);
            if !file.exists() {
                return Err(CliError::MissingArtifact {
                    path: file,
                    stage: stage.name(),
                });
            }
            if sha256_file(&file)? != *digest {
                problems.push(format!("{name}: digest does not match the manifest"));
            }
            if let Err(e) = stages::validate_output(dir, name) {
                problems.push(format!("{name}: {e}"));
            }
        }
        if problems.is_empty() {
            println!("check {}: {} outputs ok", stage.name(), record.outputs.len());
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(problems))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("segdyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
