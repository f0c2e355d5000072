use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabkg_cli::config::FixtureSection;
use tabkg_cli::*;

#[derive(Parser)]
#[command(name = "tabkg", version, about = "Knowledge-graph-guided synthetic tabular data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validation threshold on the satisfaction score.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fixture table with its ground-truth graph.
    Fixture {
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long)]
        rows: Option<usize>,
        /// Violation probability for every relationship.
        #[arg(long)]
        noise: Option<f64>,
        /// Per-target violation probability, as `column=rate`.
        #[arg(long = "override", value_parser = parse_override)]
        overrides: Vec<(String, f64)>,
    },
    /// Split a table into training and holdout rows.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Ask the configured providers for relationships and vote.
    Propose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        /// Directory that provider file parameters are relative to
        /// (default: the config file's directory).
        #[arg(long)]
        provider_base: Option<PathBuf>,
    },
    /// Score candidate edges on the data and prune.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Ground truth for discovery precision and recall.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Build the compression plan and drop dependent columns.
    Compress {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
    /// Fit the diffusion model on a compressed table.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Sample compressed rows and rebuild the full table.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Score a synthetic table against real data.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Run every stage end to end.
    Pipeline,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected column=rate")?;
    let rate = v.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((k.trim().to_string(), rate))
}

fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(theta) = common.theta {
        config.theta = theta;
    }
    config.check()?;
    Ok(config)
}

fn config_dir(common: &Common) -> PathBuf {
    common
        .config
        .as_deref()
        .and_then(Path::parent)
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run(command: Command, common: &Common) -> Result<(), CliError> {
    let config = effective_config(common)?;
    let digest = config.digest();
    let seeds = run_seeds(config.seed);
    let finish = |out: Out| -> Result<(), CliError> {
        out.finish(&digest, &seeds)?;
        Ok(())
    };
    match command {
        Command::Fixture {
            recipe,
            rows,
            noise,
            overrides,
        } => {
            let mut section = config.fixture.clone().unwrap_or_default();
            if let Some(r) = recipe {
                section.recipe = r;
            }
            if let Some(n) = rows {
                section.n_rows = n;
            }
            if let Some(p) = noise {
                section.noise = p;
            }
            section.overrides.extend(overrides);
            let mut out = Out::new(&common.out, "fixture")?;
            stage_fixture(&FixtureSection::spec(&section, config.seed), &mut out)?;
            println!("wrote {} rows of {} to {}", section.n_rows, section.recipe, common.out.display());
            finish(out)
        }
        Command::Split { data, metadata, fraction } => {
            let mut out = Out::new(&common.out, "split")?;
            stage_split(&data, &metadata, fraction.unwrap_or(config.holdout_fraction), seeds["split"], &mut out)?;
            finish(out)
        }
        Command::Propose {
            data,
            metadata,
            provider_base,
        } => {
            let mut out = Out::new(&common.out, "propose")?;
            let base = provider_base.unwrap_or_else(|| config_dir(common));
            let graph = stage_propose(&data, &metadata, &config.ensemble, &base, &mut out)?;
            println!("candidate graph: {} edges", graph.edges.len());
            finish(out)
        }
        Command::Validate {
            data,
            metadata,
            graph,
            truth,
        } => {
            let mut out = Out::new(&common.out, "validate")?;
            let report = stage_validate(&data, &metadata, &graph, config.theta, truth.as_deref(), &mut out)?;
            println!(
                "validated {} of {} candidate edges (hallucination rate {:.3})",
                report.n_validated, report.n_candidates, report.hallucination_rate
            );
            finish(out)
        }
        Command::Compress { data, metadata, graph } => {
            let mut out = Out::new(&common.out, "compress")?;
            let plan = stage_compress(&data, &metadata, &graph, &mut out)?;
            println!("keeping {} of {} columns", plan.keep.len(), plan.metas.len());
            finish(out)
        }
        Command::Train { data, plan } => {
            let mut out = Out::new(&common.out, "train")?;
            let gen = tabkg::generator::GenConfig {
                seed: seeds["train"],
                ..config.generator.clone()
            };
            let model = stage_train(&data, &plan, &gen, &mut out)?;
            if let (Some(first), Some(last)) = (model.loss_curve.first(), model.loss_curve.last()) {
                println!("loss {first:.4} -> {last:.4} over {} epochs", model.loss_curve.len());
            }
            finish(out)
        }
        Command::Generate { model, plan, n } => {
            let mut out = Out::new(&common.out, "generate")?;
            stage_generate(&model, &plan, n, seeds["sample"], &mut out)?;
            finish(out)
        }
        Command::Evaluate {
            real,
            metadata,
            synth,
            holdout,
            graph,
            label,
        } => {
            let mut out = Out::new(&common.out, "evaluate")?;
            let args = EvaluateArgs {
                real: &real,
                metadata: &metadata,
                synth: &synth,
                holdout: holdout.as_deref(),
                graph: graph.as_deref(),
                label: label.as_deref().or(config.label.as_deref()),
                seed: seeds["evaluate"],
            };
            let report = stage_evaluate(&args, &mut out)?;
            print!("{}", report.to_text());
            finish(out)
        }
        Command::Pipeline => {
            if common.config.is_none() {
                return Err(CliError::Usage("pipeline needs --config".into()));
            }
            let summary = run_pipeline(&config, &config_dir(common), &common.out)?;
            print!("{}", summary.report.to_text());
            println!("artifacts in {}", summary.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
