//! Stage drivers behind the `tabkg` command. Every stage reads its inputs
//! from files and writes its outputs, plus a manifest of their digests, to
//! an output directory; the pipeline chains the same stage functions.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tabkg::compressor::{self, CompressionPlan};
use tabkg::evaluator::{self, EvalInputs, EvalReport};
use tabkg::fixtures::{self, FixtureSpec};
use tabkg::generator::{self, DiffusionModel, Encoder, GenConfig};
use tabkg::proposer::{self, EnsembleConfig, EnsembleMode, ProviderSpec};
use tabkg::table::{self, Metadata};
use tabkg::validator;
use tabkg::{derive_seed, Graph, Table, ValidatedGraph};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Stage { .. } => 2,
        }
    }
}

trait StageResult<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> StageResult<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            message: e.to_string(),
        })
    }
}

/// An output directory that records the SHA-256 of everything written to it.
pub struct Out {
    dir: PathBuf,
    stage: &'static str,
    artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_digest: &'a str,
    pub seeds: &'a BTreeMap<String, u64>,
    pub artifacts: &'a BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl Out {
    pub fn new(dir: &Path, stage: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stage,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records a file that something else already wrote.
    pub fn record(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let digest = sha256_file(&path).stage(self.stage)?;
        self.artifacts.insert(name.to_string(), digest);
        Ok(path)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).stage(self.stage)?;
        }
        fs::write(&path, contents).map_err(|e| CliError::Stage {
            stage: self.stage,
            message: format!("cannot write {}: {e}", path.display()),
        })?;
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).stage(self.stage)?;
        self.write(name, &(text + "\n"))
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        self.write(name, &table.to_csv_string())
    }

    pub fn artifacts(&self) -> &BTreeMap<String, String> {
        &self.artifacts
    }

    /// Writes `manifest.json` next to the artifacts.
    pub fn finish(mut self, config_digest: &str, seeds: &BTreeMap<String, u64>) -> Result<BTreeMap<String, String>, CliError> {
        let manifest = Manifest {
            command: self.stage,
            config_digest,
            seeds,
            artifacts: &self.artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest).stage(self.stage)? + "\n";
        let artifacts = std::mem::take(&mut self.artifacts);
        fs::write(self.path("manifest.json"), text).stage(self.stage)?;
        Ok(artifacts)
    }
}

fn read_metadata(path: &Path, stage: &'static str) -> Result<Metadata, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Stage {
        stage,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    table::parse_metadata(&text).stage(stage)
}

pub fn load_table(csv: &Path, metadata: &Path, stage: &'static str) -> Result<Table, CliError> {
    table::load_table(csv, metadata).map(|(t, _)| t).stage(stage)
}

fn read_csv_with(csv: &Path, metadata: &Metadata, stage: &'static str) -> Result<Table, CliError> {
    let file = fs::File::open(csv).map_err(|e| CliError::Stage {
        stage,
        message: format!("cannot read {}: {e}", csv.display()),
    })?;
    table::read_table(file, metadata).map(|(t, _)| t).stage(stage)
}

pub fn stage_fixture(spec: &FixtureSpec, out: &mut Out) -> Result<(), CliError> {
    let fixture = fixtures::generate_fixture(spec).stage("fixture")?;
    fixture.write(out.dir()).stage("fixture")?;
    for name in ["data.csv", "metadata.json", "truth.json"] {
        out.record(name)?;
    }
    Ok(())
}

/// Writes `train.csv` and `holdout.csv`.
pub fn stage_split(csv: &Path, metadata: &Path, fraction: f64, seed: u64, out: &mut Out) -> Result<(), CliError> {
    let table = load_table(csv, metadata, "split")?;
    let (train, holdout) = table::split_holdout(&table, fraction, seed).stage("split")?;
    out.write_table("train.csv", &train)?;
    out.write_table("holdout.csv", &holdout)?;
    Ok(())
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    prompt_hash: &'a str,
    k: usize,
    threshold: usize,
    runs: &'a [proposer::ProposalRun],
}

/// Writes `candidate.json`, `ensemble.json` and the raw transcripts.
pub fn stage_propose(csv: &Path, metadata: &Path, ensemble: &config::EnsembleSection, provider_base: &Path, out: &mut Out) -> Result<Graph, CliError> {
    // Column kinds may be inferred from the data, so the table is loaded.
    let metas = load_table(csv, metadata, "propose")?.metas();
    if ensemble.providers.is_empty() {
        return Err(CliError::Usage("no providers configured ([[ensemble.providers]])".into()));
    }
    let providers = proposer::build_providers(&ensemble.providers, &metas, provider_base).map_err(|e| CliError::Usage(e.to_string()))?;
    let mode = match &ensemble.temperatures {
        Some(t) => EnsembleMode::SameModelTemperatures(t.clone()),
        None => EnsembleMode::CrossModel {
            temperature: ensemble.temperature,
        },
    };
    let config = EnsembleConfig {
        providers,
        mode,
        vote_threshold: ensemble.vote_threshold,
    };
    let transcripts = out.path("transcripts");
    let outcome = proposer::run_ensemble(&config, &metas, Some(&transcripts)).stage("propose")?;
    let mut names: Vec<String> = fs::read_dir(&transcripts)
        .stage("propose")?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for name in names {
        out.record(&format!("transcripts/{name}"))?;
    }
    out.write("candidate.json", &(outcome.candidate.to_json() + "\n"))?;
    out.write_json(
        "ensemble.json",
        &EnsembleSummary {
            prompt_hash: &outcome.prompt_hash,
            k: outcome.k,
            threshold: outcome.threshold,
            runs: &outcome.runs,
        },
    )?;
    Ok(outcome.candidate)
}

/// Writes `validated.json`, `validation_report.json`, and `discovery.json`
/// when a ground-truth graph is given.
pub fn stage_validate(csv: &Path, metadata: &Path, candidate: &Path, theta: f64, truth: Option<&Path>, out: &mut Out) -> Result<validator::ValidationReport, CliError> {
    let table = load_table(csv, metadata, "validate")?;
    let graph = Graph::load(candidate).stage("validate")?;
    let (validated, report) = validator::prune(&graph, &table, theta).stage("validate")?;
    out.write("validated.json", &(validated.to_json() + "\n"))?;
    out.write_json("validation_report.json", &report)?;
    if let Some(truth) = truth {
        let truth = Graph::load(truth).stage("validate")?;
        let discovery = validator::score_discovery(&validated, &truth).stage("validate")?;
        out.write_json("discovery.json", &discovery)?;
    }
    Ok(report)
}

/// Writes `plan.json`, `compressed.csv`, `compressed_metadata.json` and the
/// round-trip check `roundtrip.json`.
pub fn stage_compress(csv: &Path, metadata: &Path, validated: &Path, out: &mut Out) -> Result<CompressionPlan, CliError> {
    let table = load_table(csv, metadata, "compress")?;
    let graph = ValidatedGraph::load(validated).stage("compress")?;
    let plan = compressor::build_plan(&graph, &table).stage("compress")?;
    let compressed = compressor::compress(&table, &plan).stage("compress")?;
    let roundtrip = compressor::verify_roundtrip(&table, &plan).stage("compress")?;
    out.write("plan.json", &(plan.to_json() + "\n"))?;
    out.write_table("compressed.csv", &compressed.table)?;
    out.write_json("compressed_metadata.json", &table::metadata_of(&plan.compressed_metas()))?;
    out.write_json("roundtrip.json", &roundtrip)?;
    Ok(plan)
}

/// Writes `model.json`.
pub fn stage_train(compressed: &Path, plan: &Path, config: &GenConfig, out: &mut Out) -> Result<DiffusionModel, CliError> {
    let plan = CompressionPlan::load(plan).stage("train")?;
    let table = read_csv_with(compressed, &table::metadata_of(&plan.compressed_metas()), "train")?;
    let encoder = Encoder::fit(&table, &plan.offset_columns()).stage("train")?;
    let model = generator::train(&table, &encoder, config).stage("train")?;
    out.write("model.json", &(model.to_json() + "\n"))?;
    Ok(model)
}

/// Writes `synthetic_compressed.csv`, `synthetic.csv`,
/// `synthetic_metadata.json` and `decompress_stats.json`.
pub fn stage_generate(model: &Path, plan: &Path, n: usize, seed: u64, out: &mut Out) -> Result<Table, CliError> {
    let model = DiffusionModel::load(model).stage("generate")?;
    let plan = CompressionPlan::load(plan).stage("generate")?;
    let compressed = model.sample(n, seed).stage("generate")?;
    let (full, stats) = compressor::decompress(&compressed, &plan).stage("generate")?;
    out.write_table("synthetic_compressed.csv", &compressed)?;
    out.write_table("synthetic.csv", &full)?;
    out.write_json("synthetic_metadata.json", &table::metadata_of(&full.metas()))?;
    out.write_json("decompress_stats.json", &stats)?;
    Ok(full)
}

pub struct EvaluateArgs<'a> {
    pub real: &'a Path,
    pub metadata: &'a Path,
    pub synth: &'a Path,
    pub holdout: Option<&'a Path>,
    pub graph: Option<&'a Path>,
    pub label: Option<&'a str>,
    pub seed: u64,
}

/// Writes `eval_report.json` and `eval_report.txt`.
pub fn stage_evaluate(args: &EvaluateArgs, out: &mut Out) -> Result<EvalReport, CliError> {
    let meta = read_metadata(args.metadata, "evaluate")?;
    let real = read_csv_with(args.real, &meta, "evaluate")?;
    let synth = read_csv_with(args.synth, &meta, "evaluate")?;
    let holdout = args.holdout.map(|p| read_csv_with(p, &meta, "evaluate")).transpose()?;
    let graph = args.graph.map(|p| Graph::load(p).stage("evaluate")).transpose()?;
    let report = evaluator::evaluate(&EvalInputs {
        real: &real,
        synth: &synth,
        holdout: holdout.as_ref(),
        graph: graph.as_ref(),
        label: args.label,
        seed: args.seed,
    })
    .stage("evaluate")?;
    out.write("eval_report.json", &(report.to_json() + "\n"))?;
    out.write("eval_report.txt", &report.to_text())?;
    Ok(report)
}

/// Named seeds derived from the run seed.
pub fn run_seeds(seed: u64) -> BTreeMap<String, u64> {
    [
        ("run", seed),
        ("split", derive_seed(seed, "split")),
        ("train", seed),
        ("sample", derive_seed(seed, "sample")),
        ("evaluate", seed),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub struct PipelineSummary {
    pub report: EvalReport,
    pub out: PathBuf,
}

/// Runs every stage in order, each in its own subdirectory of `out_dir`,
/// and writes a top-level `manifest.json` covering all artifacts.
///
/// Provider file parameters resolve against the fixture directory when the
/// run generates a fixture, and against `config_dir` otherwise.
pub fn run_pipeline(config: &RunConfig, config_dir: &Path, out_dir: &Path) -> Result<PipelineSummary, CliError> {
    config.check()?;
    let digest = config.digest();
    let seeds = run_seeds(config.seed);
    let mut all: BTreeMap<String, String> = BTreeMap::new();
    let mut collect = |prefix: &str, out: Out| -> Result<(), CliError> {
        for (name, sha) in out.finish(&digest, &seeds)? {
            all.insert(format!("{prefix}/{name}"), sha);
        }
        Ok(())
    };

    let (csv, metadata, truth, provider_base) = match (&config.fixture, &config.data) {
        (Some(_), Some(_)) => return Err(CliError::Usage("config sets both [fixture] and [data]".into())),
        (None, None) => return Err(CliError::Usage("config needs either [fixture] or [data]".into())),
        (Some(f), None) => {
            let mut out = Out::new(&out_dir.join("fixture"), "fixture")?;
            stage_fixture(&f.spec(config.seed), &mut out)?;
            let dir = out.dir().to_path_buf();
            collect("fixture", out)?;
            (dir.join("data.csv"), dir.join("metadata.json"), Some(dir.join("truth.json")), dir)
        }
        (None, Some(d)) => (d.csv.clone(), d.metadata.clone(), None, config_dir.to_path_buf()),
    };

    let (train_csv, holdout_csv) = if config.holdout_fraction > 0.0 {
        let mut out = Out::new(&out_dir.join("split"), "split")?;
        stage_split(&csv, &metadata, config.holdout_fraction, seeds["split"], &mut out)?;
        let paths = (out.path("train.csv"), Some(out.path("holdout.csv")));
        collect("split", out)?;
        paths
    } else {
        (csv.clone(), None)
    };

    let mut ensemble = config.ensemble.clone();
    if ensemble.providers.is_empty() && truth.is_some() {
        ensemble.providers.push(ProviderSpec {
            id: "perfect".into(),
            kind: "stub-perfect".into(),
            params: serde_json::json!({ "truth": "truth.json" }),
        });
    }
    let mut out = Out::new(&out_dir.join("propose"), "propose")?;
    stage_propose(&train_csv, &metadata, &ensemble, &provider_base, &mut out)?;
    let candidate = out.path("candidate.json");
    collect("propose", out)?;

    let mut out = Out::new(&out_dir.join("validate"), "validate")?;
    stage_validate(&train_csv, &metadata, &candidate, config.theta, truth.as_deref(), &mut out)?;
    let validated = out.path("validated.json");
    collect("validate", out)?;

    let mut out = Out::new(&out_dir.join("compress"), "compress")?;
    stage_compress(&train_csv, &metadata, &validated, &mut out)?;
    let (plan, compressed) = (out.path("plan.json"), out.path("compressed.csv"));
    collect("compress", out)?;

    let mut out = Out::new(&out_dir.join("train"), "train")?;
    let gen = GenConfig {
        seed: seeds["train"],
        ..config.generator.clone()
    };
    stage_train(&compressed, &plan, &gen, &mut out)?;
    let model = out.path("model.json");
    collect("train", out)?;

    let n_synth = match config.n_synth {
        Some(n) => n,
        None => load_table(&train_csv, &metadata, "generate")?.n_rows(),
    };
    let mut out = Out::new(&out_dir.join("generate"), "generate")?;
    stage_generate(&model, &plan, n_synth, seeds["sample"], &mut out)?;
    let synth = out.path("synthetic.csv");
    collect("generate", out)?;

    let mut out = Out::new(&out_dir.join("evaluate"), "evaluate")?;
    let report = stage_evaluate(
        &EvaluateArgs {
            real: &train_csv,
            metadata: &metadata,
            synth: &synth,
            holdout: holdout_csv.as_deref(),
            graph: Some(&validated),
            label: config.label.as_deref(),
            seed: seeds["evaluate"],
        },
        &mut out,
    )?;
    collect("evaluate", out)?;

    let manifest = Manifest {
        command: "pipeline",
        config_digest: &digest,
        seeds: &seeds,
        artifacts: &all,
    };
    let text = serde_json::to_string_pretty(&manifest).stage("pipeline")? + "\n";
    fs::write(out_dir.join("manifest.json"), text).stage("pipeline")?;
    fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(config).stage("pipeline")? + "\n").stage("pipeline")?;
    Ok(PipelineSummary {
        report,
        out: out_dir.to_path_buf(),
    })
}
