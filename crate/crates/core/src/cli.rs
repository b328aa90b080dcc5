//! Command-line surface. `main.rs` only parses arguments and maps the
//! outcome of [`run`] to an exit code.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::dataset::{AnalysisConfig, Dataset};
use crate::ingest::{self, IngestError, SyntheticSpec};
use crate::report::{self, AnalysisError, AnalysisRequest, Mode};

#[derive(Debug, Parser)]
#[command(
    name = "roi-consistency",
    version,
    about = "Feature-consistency analysis of re-identification features inside and outside ROIs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full analysis and write report.json, embedding.csv and figures/.
    Report(ReportArgs),
    /// Generate a synthetic feature store.
    Synth(SynthArgs),
    /// Load a feature store and print its per-condition counts.
    Validate {
        input: PathBuf,
    },
    /// Convert between .csv and .rfcs feature stores.
    Convert {
        input: PathBuf,
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Within,
    Cross,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "within")]
    pub mode: ModeArg,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only analyze records with this condition tag.
    #[arg(long)]
    pub condition: Option<String>,
    /// Cross mode camera pair, `first,second`.
    #[arg(long, value_parser = parse_camera_pair)]
    pub camera_pair: Option<(String, String)>,
}

fn parse_camera_pair(text: &str) -> Result<(String, String), String> {
    match text.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(',') && a != b => {
            Ok((a.to_string(), b.to_string()))
        }
        _ => Err(format!("expected two distinct camera ids as `id1,id2`, got {text:?}")),
    }
}

impl ReportArgs {
    pub fn config(&self) -> AnalysisConfig {
        let mut config = AnalysisConfig::default();
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.bins {
            config.entropy_bins = v;
        }
        if let Some(v) = self.perplexity {
            config.tsne_perplexity = v;
        }
        if let Some(v) = self.iters {
            config.tsne_iterations = v;
        }
        if let Some(v) = self.seed {
            config.rng_seed = v;
        }
        config
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub vehicles: usize,
    #[arg(long, default_value_t = 10)]
    pub inside: usize,
    #[arg(long, default_value_t = 10)]
    pub outside: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_in: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma_out: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub cameras: usize,
    /// Output file; the extension selects the format.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 is success, 1 an input error, 2 a numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Report(args) => {
            let dataset = ingest::load(&args.input)?;
            let mut request = AnalysisRequest::new(
                match args.mode {
                    ModeArg::Within => Mode::Within,
                    ModeArg::Cross => Mode::Cross,
                },
                args.config(),
            );
            request.condition = args.condition.clone();
            request.camera_pair = args.camera_pair.clone();
            let analysis = report::analyze(&dataset, &request)?;
            report::write_outputs(&analysis, &args.out)?;
            for (key, entry) in &analysis.report.similarity {
                let verdict = match entry.ttest.result() {
                    Some(r) => format!(
                        "t={:.4} p={:.3e} {}",
                        r.t,
                        r.p_one_sided,
                        if r.significant { "significant" } else { "not significant" }
                    ),
                    None => "t-test not applicable".to_string(),
                };
                writeln!(
                    stdout,
                    "{key}: mu_inside={:.4} mu_cross={:.4} {verdict}",
                    entry.summary.mu_inside, entry.summary.mu_cross
                )?;
            }
            writeln!(stdout, "wrote {}", args.out.join("report.json").display())?;
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                n_vehicles: args.vehicles,
                images_inside_per_vehicle: args.inside,
                images_outside_per_vehicle: args.outside,
                dim: args.dim,
                sigma_inside: args.sigma_in,
                sigma_outside: args.sigma_out,
                seed: args.seed,
                n_cameras: args.cameras,
            };
            let dataset = ingest::generate_synthetic(&spec)?;
            ingest::save(&dataset, &args.out)?;
            writeln!(stdout, "wrote {} records to {}", dataset.len(), args.out.display())?;
        }
        Command::Validate { input } => {
            let dataset = ingest::load(&input)?;
            write_table(&dataset, stdout)?;
        }
        Command::Convert { input, output } => {
            let dataset = ingest::load(&input)?;
            ingest::save(&dataset, &output)?;
            writeln!(stdout, "converted {} records", dataset.len())?;
        }
    }
    Ok(())
}

/// Per-condition and per-camera counts: #Vehicles, InROI #Images, OutROI #Images.
pub fn write_table(dataset: &Dataset, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "records={} dim={} vehicles={}",
        dataset.len(),
        dataset.dim(),
        dataset.n_vehicles()
    )?;
    for (label, groups) in [
        ("Condition", dataset.counts_by_condition()),
        ("Camera", dataset.counts_by_camera()),
    ] {
        writeln!(
            out,
            "{label:<16} {:>10} {:>15} {:>15}",
            "#Vehicles", "InROI #Images", "OutROI #Images"
        )?;
        for (key, c) in groups {
            writeln!(
                out,
                "{key:<16} {:>10} {:>15} {:>15}",
                c.vehicles, c.inside_images, c.outside_images
            )?;
        }
    }
    Ok(())
}
