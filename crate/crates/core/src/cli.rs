//! Command-line front end. Flags override the config file, which overrides
//! built-in defaults.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tracing::error;

use crate::datasets::AnnotationFormat;
use crate::ensemble::{CooperateStrategy, FilterStrategy};
use crate::pipeline::{self, PipelineConfig, ProviderFactory, StageOutcome};
use crate::providers::ProviderConfig;
use crate::retrieval::KMode;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vidfuse", version, about = "Fuse expert video summaries and localize text queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and fuse per-video expert summaries into fused.jsonl.
    Summarize(CommonArgs),
    /// Rank cached frames against fused summaries into predictions.jsonl.
    Retrieve(CommonArgs),
    /// Score predictions against annotations into report.json / report.txt.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Predictions file to score (default: <out-dir>/predictions.jsonl).
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Run summarize, retrieve and evaluate for every configured variant.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        /// Re-run stages even when the manifest says they are current.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub summaries: Option<PathBuf>,
    #[arg(long)]
    pub caches: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// canonical_jsonl, charades_sta_lines or qvh_style_jsonl
    #[arg(long)]
    pub annotation_format: Option<AnnotationFormat>,
    #[arg(long)]
    pub durations: Option<PathBuf>,
    /// avg_clip, middle_frame or none
    #[arg(long)]
    pub filter: Option<FilterStrategy>,
    /// merge, common_ground or select
    #[arg(long)]
    pub strategy: Option<CooperateStrategy>,
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub templates_dir: Option<PathBuf>,
    /// Absolute number of keyframes. Shorthand for `--k-mode absolute N`.
    #[arg(long, conflicts_with = "k_mode")]
    pub k: Option<usize>,
    /// fraction|absolute|threshold followed by its value.
    #[arg(long, num_args = 2, value_names = ["MODE", "VALUE"])]
    pub k_mode: Option<Vec<String>>,
    #[arg(long)]
    pub gap_tolerance: Option<usize>,
    /// Comma-separated IoU thresholds for recall.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub allow_model_mismatch: bool,
    #[arg(long)]
    pub strict_queries: bool,
    #[arg(long)]
    pub embed_url: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Name of the environment variable holding the embedding API key.
    #[arg(long)]
    pub embed_key_env: Option<String>,
    #[arg(long)]
    pub llm_url: Option<String>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub llm_key_env: Option<String>,
    #[arg(long)]
    pub judge_url: Option<String>,
    #[arg(long)]
    pub judge_model: Option<String>,
    #[arg(long)]
    pub judge_key_env: Option<String>,
}

fn parse_k_mode(parts: &[String]) -> Result<KMode> {
    let [mode, value] = parts else {
        return Err(Error::Config("--k-mode takes MODE VALUE".into()));
    };
    let bad = |e: &dyn std::fmt::Display| Error::Config(format!("--k-mode value `{value}`: {e}"));
    let k = match mode.as_str() {
        "fraction" => KMode::Fraction(value.parse().map_err(|e| bad(&e))?),
        "absolute" => KMode::Absolute(value.parse().map_err(|e| bad(&e))?),
        "threshold" => KMode::Threshold(value.parse().map_err(|e| bad(&e))?),
        other => return Err(Error::Config(format!("unknown k mode `{other}`"))),
    };
    k.validate()?;
    Ok(k)
}

fn merge_provider(
    slot: &mut Option<ProviderConfig>,
    url: &Option<String>,
    model: &Option<String>,
    key_env: &Option<String>,
    what: &str,
) -> Result<()> {
    if url.is_none() && model.is_none() && key_env.is_none() {
        return Ok(());
    }
    let p = match slot.take() {
        Some(mut p) => {
            if let Some(u) = url {
                p.base_url = u.clone();
            }
            if let Some(m) = model {
                p.model_name = m.clone();
            }
            p
        }
        None => match (url, model) {
            (Some(u), Some(m)) => ProviderConfig::new(u.clone(), m.clone()),
            _ => {
                return Err(Error::Config(format!(
                    "--{what}-url and --{what}-model are both needed without a [{what}] config section"
                )))
            }
        },
    };
    *slot = Some(ProviderConfig {
        api_key_env: key_env.clone().or(p.api_key_env.clone()),
        ..p
    });
    Ok(())
}

impl CommonArgs {
    /// Loads the config file (if any) and applies flag overrides.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let paths = &mut c.paths;
        for (slot, flag) in [
            (&mut paths.summaries, &self.summaries),
            (&mut paths.caches, &self.caches),
            (&mut paths.annotations, &self.annotations),
            (&mut paths.durations, &self.durations),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        if let Some(d) = &self.out_dir {
            paths.out_dir = d.clone();
        }
        if let Some(f) = self.annotation_format {
            paths.annotation_format = f;
        }
        if let Some(f) = self.filter {
            c.filter_strategy = f;
        }
        if let Some(s) = self.strategy {
            c.cooperate_strategy = s;
        }
        if self.template.is_some() {
            c.template_id = self.template.clone();
        }
        if self.templates_dir.is_some() {
            c.templates_dir = self.templates_dir.clone();
        }
        if let Some(k) = self.k {
            c.k = KMode::Absolute(k);
        }
        if let Some(parts) = &self.k_mode {
            c.k = parse_k_mode(parts)?;
        }
        if let Some(g) = self.gap_tolerance {
            c.gap_tolerance = g;
        }
        if let Some(t) = &self.thresholds {
            c.thresholds = t.clone();
        }
        if let Some(p) = self.parallelism {
            c.parallelism = p;
        }
        c.allow_model_mismatch |= self.allow_model_mismatch;
        c.strict_queries |= self.strict_queries;
        merge_provider(&mut c.embedder, &self.embed_url, &self.embed_model, &self.embed_key_env, "embed")?;
        merge_provider(&mut c.fusion, &self.llm_url, &self.llm_model, &self.llm_key_env, "llm")?;
        merge_provider(&mut c.judge, &self.judge_url, &self.judge_model, &self.judge_key_env, "judge")?;
        c.validate()?;
        Ok(c)
    }
}

fn exit_for(outcomes: &[&StageOutcome]) -> i32 {
    if outcomes.iter().any(|o| o.is_partial()) {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

fn dispatch(cli: Cli, providers: &dyn ProviderFactory) -> Result<i32> {
    match cli.command {
        Command::Summarize(args) => {
            let out = pipeline::summarize(&args.resolve()?, providers)?;
            Ok(exit_for(&[&out]))
        }
        Command::Retrieve(args) => {
            let out = pipeline::retrieve(&args.resolve()?, providers)?;
            Ok(exit_for(&[&out]))
        }
        Command::Evaluate { common, predictions } => {
            let cfg = common.resolve()?;
            let (report, out) = pipeline::evaluate(&cfg, predictions.as_deref())?;
            print!("{}", crate::metrics::emit_report(&report, crate::metrics::ReportFormat::Table)?);
            Ok(exit_for(&[&out]))
        }
        Command::Pipeline { common, force } => {
            let runs = pipeline::run_pipeline(&common.resolve()?, providers, force)?;
            for run in &runs {
                if let Some(r) = &run.report {
                    println!("# {}", run.out_dir.display());
                    print!("{}", crate::metrics::emit_report(r, crate::metrics::ReportFormat::Table)?);
                }
            }
            let outcomes: Vec<&StageOutcome> = runs.iter().flat_map(|r| r.stages.iter().map(|s| &s.outcome)).collect();
            Ok(exit_for(&outcomes))
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 2 when some items failed,
/// 1 on a fatal error.
pub fn run<I, T>(args: I, providers: &dyn ProviderFactory) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    match dispatch(cli, providers) {
        Ok(code) => code,
        Err(e) => {
            error!(error = %e, "fatal");
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}
