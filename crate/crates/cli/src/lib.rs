//! The `afa` command line.

pub mod http;

use std::io::Write;
use std::path::{Path, PathBuf};

use afa_core::fixtures::{write_bundle, write_fixture, BundleParams, FixtureKind, FixtureParams};
use afa_core::pipeline::{plan, report, run, PipelineConfig, PipelineError, PipelineStage};
use afa_core::sampler::RemainderPolicy;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "afa", version, about = "Actor-frame-argument analysis of news corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize and filter the raw corpus.
    Ingest(RunArgs),
    /// Remove near-duplicates.
    Dedup(RunArgs),
    /// Stratified, clustered MMR sample.
    Sample(RunArgs),
    /// Add uncertain articles to the sample.
    Enrich(RunArgs),
    /// Three-stage LLM extraction.
    Extract(RunArgs),
    /// Consensus gold from annotator labelings.
    Consensus(RunArgs),
    /// Inter-annotator agreement and extraction-vs-gold scores.
    Agree(RunArgs),
    /// Decomposed verification with LLM judges.
    Verify(RunArgs),
    /// Contingency, share, shift, complexity and changepoint analyses.
    Analyze(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// Print the text reports of a finished run.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write deterministic synthetic inputs.
    Fixtures(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bound on threads and in-flight requests (0: automatic).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Check the config and upstream outputs, print the plan, run nothing.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub n_total: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, value_enum)]
    pub remainder_policy: Option<Policy>,
    /// Most articles enrichment may add to the sample.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    Floor,
    LargestRemainder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Corpus,
    Annotations,
    Transcripts,
    Timeseries,
    /// Corpus, embeddings, annotations, human anchor and a config.
    Bundle,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(value_enum)]
    pub kind: Kind,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// JSON file with generator parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

impl Command {
    fn stage(&self) -> Option<(PipelineStage, &RunArgs)> {
        let s = match self {
            Command::Ingest(a) => (PipelineStage::Ingest, a),
            Command::Dedup(a) => (PipelineStage::Dedup, a),
            Command::Sample(a) => (PipelineStage::Sample, a),
            Command::Enrich(a) => (PipelineStage::Enrich, a),
            Command::Extract(a) => (PipelineStage::Extract, a),
            Command::Consensus(a) => (PipelineStage::Consensus, a),
            Command::Agree(a) => (PipelineStage::Agree, a),
            Command::Verify(a) => (PipelineStage::Verify, a),
            Command::Analyze(a) => (PipelineStage::Analyze, a),
            Command::All(a) => (PipelineStage::All, a),
            Command::Report { .. } | Command::Fixtures(_) => return None,
        };
        Some(s)
    }
}

/// Loads the config and applies command-line overrides.
pub fn load_config(args: &RunArgs) -> Result<PipelineConfig, PipelineError> {
    let mut c = PipelineConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(w) = args.workers {
        c.workers = w;
    }
    if let Some(n) = args.n_total {
        c.sampling.n_total = n;
    }
    if let Some(l) = args.lambda {
        c.sampling.lambda = l;
    }
    if let Some(k) = args.k_min {
        c.sampling.k_min = k;
    }
    if args.k_max.is_some() {
        c.sampling.k_max = args.k_max;
    }
    if let Some(p) = args.remainder_policy {
        c.sampling.remainder_policy = match p {
            Policy::Floor => RemainderPolicy::Floor,
            Policy::LargestRemainder => RemainderPolicy::LargestRemainder,
        };
    }
    if let Some(b) = args.budget {
        c.enrichment.budget = b;
    }
    c.validate()?;
    Ok(c)
}

fn fixtures(args: &FixtureArgs) -> Result<Vec<PathBuf>, PipelineError> {
    let text = match &args.params {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let parse_err = |e: serde_json::Error| PipelineError::Config(format!("fixture params: {e}"));
    let fail = |e: afa_core::fixtures::FixtureError| PipelineError::Data(e.to_string());
    std::fs::create_dir_all(&args.out).map_err(|e| PipelineError::Data(format!("{}: {e}", args.out.display())))?;
    if let Kind::Bundle = args.kind {
        let params: BundleParams = match text {
            Some(t) => serde_json::from_str(&t).map_err(parse_err)?,
            None => BundleParams::default(),
        };
        return write_bundle(&params, args.seed, &args.out).map_err(fail);
    }
    let params: FixtureParams = match text {
        Some(t) => serde_json::from_str(&t).map_err(parse_err)?,
        None => FixtureParams::default(),
    };
    let kind = match args.kind {
        Kind::Corpus => FixtureKind::Corpus,
        Kind::Annotations => FixtureKind::Annotations,
        Kind::Transcripts => FixtureKind::Transcripts,
        Kind::Timeseries => FixtureKind::Timeseries,
        Kind::Bundle => unreachable!(),
    };
    write_fixture(kind, &params, args.seed, &args.out).map_err(fail)
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

/// Runs a parsed command, writing human output to `out`. Returns the exit
/// code.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> i32 {
    match try_execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}

fn try_execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), PipelineError> {
    let w = |out: &mut dyn std::io::Write, s: String| {
        let _ = writeln!(out, "{s}");
    };
    if let Some((stage, args)) = cli.command.stage() {
        let config = load_config(args)?;
        if args.dry_run {
            for p in plan(stage, &config)? {
                let req: Vec<&str> = p.requires.iter().map(|s| s.as_str()).collect();
                w(
                    out,
                    format!(
                        "{:<10} reads [{}] writes [{}]",
                        p.stage.as_str(),
                        req.join(", "),
                        p.writes.join(", ")
                    ),
                );
            }
            w(out, format!("dry run: nothing written to {}", show(&config.outputs_dir())));
            return Ok(());
        }
        let manifest = run(stage, &config, &http::CliClients)?;
        for s in &manifest.stages {
            w(out, format!("{:<10} {:>4} output(s) {:>8} ms", s.stage.as_str(), s.outputs.len(), s.elapsed_ms));
        }
        w(out, format!("manifest {} ({})", show(&config.outputs_dir().join("manifest.json")), manifest.content_digest()));
        return Ok(());
    }
    match &cli.command {
        Command::Report { config } => {
            let config = PipelineConfig::load(config)?;
            let text = report(&config)?;
            if text.contains(afa_core::report::NO_DATA) {
                log::warn!("the report contains sections without data");
            }
            let _ = write!(out, "{text}");
        }
        Command::Fixtures(args) => {
            for p in fixtures(args)? {
                w(out, show(&p));
            }
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_config_values() {
        let dir = std::env::temp_dir().join(format!("afa-cli-overrides-{}", std::process::id()));
        write_bundle(&BundleParams::default(), 1, &dir).unwrap();
        let cli = Cli::try_parse_from([
            "afa",
            "sample",
            "--config",
            dir.join("config.json").to_str().unwrap(),
            "--seed",
            "77",
            "--lambda",
            "0.5",
            "--remainder-policy",
            "floor",
            "--budget",
            "3",
        ])
        .unwrap();
        let (stage, args) = cli.command.stage().unwrap();
        assert_eq!(stage, PipelineStage::Sample);
        let c = load_config(args).unwrap();
        assert_eq!((c.seed, c.sampling.lambda, c.enrichment.budget), (77, 0.5, 3));
        assert_eq!(c.sampling.remainder_policy, RemainderPolicy::Floor);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
