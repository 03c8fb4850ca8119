//! Stage wiring for the command-line tool: summarize, retrieve, evaluate, and
//! the full pipeline with per-stage skipping.
//!
//! Every output line or file carries the hash of the resolved config. Videos
//! fail independently; a stage only aborts on configuration or I/O errors.

pub mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

pub use config::{Paths, PipelineConfig, Variant};

use crate::datasets::{load_annotations, load_durations, load_expert_summaries, AnnotationRecord, LoadOptions};
use crate::ensemble::{cooperate, filter_summaries, CooperateStrategy, FilterStrategy, TemplateStore};
use crate::metrics::{emit_report, evaluate as score, EvalReport, QueryResult, ReportFormat};
use crate::providers::{
    judge_summary, load_cache_file, ChatClient, Embedder, HttpChatClient, HttpEmbedder, JudgeVerdict,
    ProviderConfig,
};
use crate::retrieval::{keyframes_to_spans, primary_span, rank_frames, select_top_k, SimilarityStats};
use crate::span::{Span, SpanSet};
use crate::{Error, Result};

pub const FUSED_FILE: &str = "fused.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CACHE_EXT: &str = "mvs";

/// Builds provider clients from their configs. Tests swap in mocks here.
pub trait ProviderFactory: Sync {
    fn embedder(&self, cfg: &ProviderConfig) -> Result<Arc<dyn Embedder>>;
    fn chat(&self, cfg: &ProviderConfig) -> Result<Arc<dyn ChatClient>>;
}

/// HTTP clients speaking the OpenAI-style embeddings and chat protocols.
pub struct HttpProviders;

impl ProviderFactory for HttpProviders {
    fn embedder(&self, cfg: &ProviderConfig) -> Result<Arc<dyn Embedder>> {
        Ok(Arc::new(HttpEmbedder::new(cfg.clone())?))
    }

    fn chat(&self, cfg: &ProviderConfig) -> Result<Arc<dyn ChatClient>> {
        Ok(Arc::new(HttpChatClient::new(cfg.clone())?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertScore {
    pub expert_id: String,
    pub score: f64,
}

/// One line of `fused.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub config_hash: String,
    pub video_id: String,
    pub expert_id: String,
    pub text: String,
    pub used_audio: bool,
    pub cooperate_strategy: CooperateStrategy,
    pub filter_strategy: FilterStrategy,
    pub input_experts: Vec<String>,
    pub retained_experts: Vec<String>,
    pub removed_expert: Option<String>,
    pub filter_scores: Vec<ExpertScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_expert: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_verdict: Option<JudgeVerdict>,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub config_hash: String,
    pub query_id: String,
    pub video_id: String,
    pub predicted: SpanSet,
    pub primary: Span,
    pub k: usize,
    pub n_frames: usize,
    pub keyframes: Vec<usize>,
    pub similarity: SimilarityStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub succeeded: usize,
    pub failures: Vec<ItemFailure>,
}

impl StageOutcome {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: BTreeMap<String, StageOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Retrieve,
    Evaluate,
}

impl Stage {
    fn key(&self) -> &'static str {
        match self {
            Stage::Summarize => "summarize",
            Stage::Retrieve => "retrieve",
            Stage::Evaluate => "evaluate",
        }
    }

    fn outputs(&self) -> &'static [&'static str] {
        match self {
            Stage::Summarize => &[FUSED_FILE],
            Stage::Retrieve => &[PREDICTIONS_FILE],
            Stage::Evaluate => &[REPORT_JSON, REPORT_TXT],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRun {
    pub stage: Stage,
    pub skipped: bool,
    pub outcome: StageOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub stages: Vec<StageRun>,
    pub report: Option<EvalReport>,
}

impl VariantRun {
    pub fn is_partial(&self) -> bool {
        self.stages.iter().any(|s| s.outcome.is_partial())
    }
}

fn worker_pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Runs `f` over `items` on the configured pool, keeping input order.
fn run_batch<T, R, F>(cfg: &PipelineConfig, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = worker_pool(cfg)?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn read_manifest(out_dir: &Path) -> Option<Manifest> {
    let text = fs::read_to_string(out_dir.join(MANIFEST_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn record_stage(cfg: &PipelineConfig, stage: Stage, outcome: &StageOutcome) -> Result<()> {
    let hash = cfg.hash();
    let mut manifest = read_manifest(&cfg.paths.out_dir)
        .filter(|m| m.config_hash == hash)
        .unwrap_or_else(|| Manifest {
            config_hash: hash,
            stages: BTreeMap::new(),
        });
    manifest.stages.insert(stage.key().to_string(), outcome.clone());
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&cfg.out_file(MANIFEST_FILE), json.as_bytes())
}

fn stage_done(cfg: &PipelineConfig, stage: Stage) -> Option<StageOutcome> {
    let manifest = read_manifest(&cfg.paths.out_dir)?;
    if manifest.config_hash != cfg.hash() {
        return None;
    }
    if !stage.outputs().iter().all(|f| cfg.out_file(f).exists()) {
        return None;
    }
    // Stages with failed items run again so transient errors get retried.
    manifest.stages.get(stage.key()).filter(|o| !o.is_partial()).cloned()
}

fn collect_outcome<R>(results: Vec<(String, Result<R>)>, stage: Stage) -> (Vec<R>, StageOutcome) {
    let mut ok = Vec::new();
    let mut outcome = StageOutcome::default();
    for (id, r) in results {
        match r {
            Ok(v) => {
                ok.push(v);
                outcome.succeeded += 1;
            }
            Err(e) => {
                warn!(stage = stage.key(), id = %id, error = %e, "item failed");
                outcome.failures.push(ItemFailure {
                    id,
                    error: e.to_string(),
                });
            }
        }
    }
    outcome.failures.sort_by(|a, b| a.id.cmp(&b.id));
    (ok, outcome)
}

fn cache_path(cfg: &PipelineConfig, video_id: &str) -> Result<PathBuf> {
    let dir = cfg.required(&cfg.paths.caches, "caches")?;
    Ok(dir.join(format!("{video_id}.{CACHE_EXT}")))
}

fn load_track(cfg: &PipelineConfig, video_id: &str, embedder: Option<&dyn Embedder>) -> Result<crate::retrieval::FrameEmbeddingTrack> {
    let cache = load_cache_file(&cache_path(cfg, video_id)?)?;
    if let Some(e) = embedder {
        if !cfg.allow_model_mismatch && cache.model_name != e.model_name() {
            return Err(Error::ModelMismatch {
                cache: cache.model_name,
                embedder: e.model_name().to_string(),
            });
        }
    }
    if cache.track.video_id() != video_id {
        return Err(Error::InvalidTrack(format!(
            "cache for `{video_id}` holds video `{}`",
            cache.track.video_id()
        )));
    }
    Ok(cache.track)
}

fn summary_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().and_then(|e| e.to_str()) == Some("json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

struct SummarizeCtx<'a> {
    cfg: &'a PipelineConfig,
    hash: String,
    templates: TemplateStore,
    embedder: Option<Arc<dyn Embedder>>,
    fusion: Option<Arc<dyn ChatClient>>,
    judge: Option<Arc<dyn ChatClient>>,
}

/// Fuses each video's expert summaries and writes `fused.jsonl`.
pub fn summarize(cfg: &PipelineConfig, providers: &dyn ProviderFactory) -> Result<StageOutcome> {
    cfg.validate()?;
    let summaries = cfg.required(&cfg.paths.summaries, "summaries")?;
    cfg.required(&cfg.paths.caches, "caches")?;

    let needs_embeddings =
        cfg.filter_strategy != FilterStrategy::None || cfg.cooperate_strategy == CooperateStrategy::Select;
    let embedder = match (&cfg.embedder, needs_embeddings) {
        (Some(p), _) => Some(providers.embedder(p)?),
        (None, true) => return Err(Error::Config("filtering needs an [embedder] provider".into())),
        (None, false) => None,
    };
    let fusion = match (&cfg.fusion, cfg.cooperate_strategy) {
        (Some(p), _) => Some(providers.chat(p)?),
        (None, CooperateStrategy::Select) => None,
        (None, s) => return Err(Error::Config(format!("strategy `{s}` needs a [fusion] provider"))),
    };
    let judge = cfg.judge.as_ref().map(|p| providers.chat(p)).transpose()?;
    let templates = match &cfg.templates_dir {
        Some(dir) => TemplateStore::with_dir(dir)?,
        None => TemplateStore::builtin(),
    };
    let ctx = SummarizeCtx {
        cfg,
        hash: cfg.hash(),
        templates,
        embedder: if needs_embeddings { embedder } else { None },
        fusion,
        judge,
    };

    let files = summary_files(summaries)?;
    let results = run_batch(cfg, &files, |path| {
        let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match summarize_one(&ctx, path) {
            Ok(rec) => (rec.video_id.clone(), Ok(rec)),
            Err((id, e)) => (id.unwrap_or(fallback), Err(e)),
        }
    })?;
    let (mut records, outcome) = collect_outcome(results, Stage::Summarize);
    records.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    write_jsonl(&cfg.out_file(FUSED_FILE), &records)?;
    record_stage(cfg, Stage::Summarize, &outcome)?;
    Ok(outcome)
}

type ItemResult<T> = std::result::Result<T, (Option<String>, Error)>;

fn summarize_one(ctx: &SummarizeCtx<'_>, path: &Path) -> ItemResult<FusedRecord> {
    let file = load_expert_summaries(path).map_err(|e| (None, e))?;
    let video_id = file.video_id.clone();
    let tag = |e: Error| (Some(video_id.clone()), e);
    let cfg = ctx.cfg;

    let track = load_track(cfg, &video_id, ctx.embedder.as_deref()).map_err(tag)?;
    let mut set = file.summary_set().map_err(tag)?;
    if let Some(embedder) = &ctx.embedder {
        let texts: Vec<String> = set.items().iter().map(|s| s.text.clone()).collect();
        let embeddings = embedder.embed_texts(&texts).map_err(tag)?;
        if embeddings.len() != texts.len() {
            return Err(tag(Error::MalformedResponse(format!(
                "{} embeddings for {} summaries",
                embeddings.len(),
                texts.len()
            ))));
        }
        let items = set
            .items()
            .iter()
            .cloned()
            .zip(embeddings)
            .map(|(s, e)| s.with_embedding(e))
            .collect();
        set = crate::ensemble::SummarySet::new(items).map_err(tag)?;
    }

    let outcome = filter_summaries(cfg.filter_strategy, &set, &track).map_err(tag)?;
    if let Some(expert) = &outcome.removed_expert {
        info!(video_id = %video_id, removed = %expert, "filtered outlier summary");
    }
    let fused = match &ctx.fusion {
        Some(llm) => cooperate(cfg.cooperate_strategy, cfg.template_id.as_deref(), &outcome.retained, llm.as_ref(), &ctx.templates),
        None => cooperate(cfg.cooperate_strategy, cfg.template_id.as_deref(), &outcome.retained, &NoChat, &ctx.templates),
    }
    .map_err(tag)?;

    let (judge_model, judge_verdict) = match &ctx.judge {
        Some(judge) => {
            let reference: Vec<&str> = set.items().iter().map(|s| s.text.as_str()).collect();
            let verdict = judge_summary(&fused.summary.text, &reference.join("\n\n"), judge.as_ref()).map_err(tag)?;
            (Some(judge.model_name().to_string()), Some(verdict))
        }
        None => (None, None),
    };

    let filter_scores = if outcome.scores.is_empty() {
        Vec::new()
    } else {
        set.items()
            .iter()
            .zip(&outcome.scores)
            .map(|(s, &score)| ExpertScore {
                expert_id: s.expert_id.clone(),
                score,
            })
            .collect()
    };
    info!(video_id = %video_id, strategy = %cfg.cooperate_strategy, "fused summary");
    Ok(FusedRecord {
        config_hash: ctx.hash.clone(),
        video_id: video_id.clone(),
        expert_id: fused.summary.expert_id,
        text: fused.summary.text,
        used_audio: fused.summary.used_audio,
        cooperate_strategy: cfg.cooperate_strategy,
        filter_strategy: cfg.filter_strategy,
        input_experts: set.expert_ids(),
        retained_experts: outcome.retained.expert_ids(),
        removed_expert: outcome.removed_expert,
        filter_scores,
        selected_expert: fused.selected_expert,
        template_id: fused.template_id,
        llm_model: fused.llm_model,
        judge_model,
        judge_verdict,
    })
}

/// Stand-in client for the select strategy, which never calls an LLM.
struct NoChat;

impl ChatClient for NoChat {
    fn complete(&self, _prompt: &str) -> Result<String> {
        Err(Error::Config("no [fusion] provider configured".into()))
    }

    fn model_name(&self) -> &str {
        "none"
    }
}

struct VideoPrediction {
    video_id: String,
    predicted: SpanSet,
    primary: Span,
    k: usize,
    n_frames: usize,
    keyframes: Vec<usize>,
    similarity: SimilarityStats,
}

fn load_annotation_records(cfg: &PipelineConfig) -> Result<Vec<AnnotationRecord>> {
    let path = cfg.required(&cfg.paths.annotations, "annotations")?;
    let durations = match &cfg.paths.durations {
        Some(p) => Some(load_durations(p)?),
        None => None,
    };
    let opts = LoadOptions {
        max_malformed_fraction: cfg.paths.max_malformed_fraction,
        durations,
    };
    Ok(load_annotations(path, cfg.paths.annotation_format, &opts)?.records)
}

/// Ranks frames against each fused summary and writes `predictions.jsonl`.
///
/// With annotations configured there is one prediction per query (queries on
/// the same video share it); otherwise one per video, keyed by video id.
pub fn retrieve(cfg: &PipelineConfig, providers: &dyn ProviderFactory) -> Result<StageOutcome> {
    cfg.validate()?;
    cfg.required(&cfg.paths.caches, "caches")?;
    let fused_path = cfg.out_file(FUSED_FILE);
    let fused: Vec<FusedRecord> = read_jsonl(&fused_path)?;
    let embed_cfg = cfg
        .embedder
        .as_ref()
        .ok_or_else(|| Error::Config("retrieval needs an [embedder] provider".into()))?;
    let embedder = providers.embedder(embed_cfg)?;
    let annotations = match cfg.paths.annotations {
        Some(_) => Some(load_annotation_records(cfg)?),
        None => None,
    };

    let results = run_batch(cfg, &fused, |rec| (rec.video_id.clone(), predict_video(cfg, rec, embedder.as_ref())))?;
    let (videos, mut outcome) = collect_outcome(results, Stage::Retrieve);
    let by_video: HashMap<&str, &VideoPrediction> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();

    let hash = cfg.hash();
    let make = |query_id: &str, v: &VideoPrediction| PredictionRecord {
        config_hash: hash.clone(),
        query_id: query_id.to_string(),
        video_id: v.video_id.clone(),
        predicted: v.predicted.clone(),
        primary: v.primary,
        k: v.k,
        n_frames: v.n_frames,
        keyframes: v.keyframes.clone(),
        similarity: v.similarity,
    };
    let mut rows = Vec::new();
    match &annotations {
        Some(records) => {
            for a in records {
                match by_video.get(a.video_id.as_str()) {
                    Some(v) => rows.push(make(&a.query_id, v)),
                    None => outcome.failures.push(ItemFailure {
                        id: a.query_id.clone(),
                        error: format!("no prediction for video `{}`", a.video_id),
                    }),
                }
            }
            outcome.failures.sort_by(|a, b| a.id.cmp(&b.id));
            outcome.failures.dedup();
        }
        None => rows.extend(videos.iter().map(|v| make(&v.video_id, v))),
    }
    rows.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    write_jsonl(&cfg.out_file(PREDICTIONS_FILE), &rows)?;
    record_stage(cfg, Stage::Retrieve, &outcome)?;
    Ok(outcome)
}

fn predict_video(cfg: &PipelineConfig, rec: &FusedRecord, embedder: &dyn Embedder) -> Result<VideoPrediction> {
    let track = load_track(cfg, &rec.video_id, Some(embedder))?;
    let summary = embedder
        .embed_texts(std::slice::from_ref(&rec.text))?
        .into_iter()
        .next()
        .ok_or_else(|| Error::MalformedResponse("no embedding returned".into()))?;
    let ranked = rank_frames(&summary, &track)?;
    let k = cfg.k.resolve(&ranked)?;
    let keyframes = select_top_k(&ranked, k)?;
    let predicted = keyframes_to_spans(&keyframes, &track, cfg.gap_tolerance)?;
    let primary = primary_span(&ranked, &predicted)?;
    info!(video_id = %rec.video_id, k, spans = predicted.len(), "retrieved keyframes");
    Ok(VideoPrediction {
        video_id: rec.video_id.clone(),
        predicted,
        primary,
        k,
        n_frames: track.len(),
        keyframes,
        similarity: ranked.stats(),
    })
}

/// Scores predictions against annotations and writes `report.json` and `report.txt`.
pub fn evaluate(cfg: &PipelineConfig, predictions: Option<&Path>) -> Result<(EvalReport, StageOutcome)> {
    cfg.validate()?;
    let pred_path = predictions.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_file(PREDICTIONS_FILE));
    let preds: Vec<PredictionRecord> = read_jsonl(&pred_path)?;
    let annotations = load_annotation_records(cfg)?;
    let gt: HashMap<&str, &AnnotationRecord> = annotations.iter().map(|a| (a.query_id.as_str(), a)).collect();

    let mut outcome = StageOutcome::default();
    let mut unmatched = Vec::new();
    let mut results = Vec::new();
    for p in &preds {
        match gt.get(p.query_id.as_str()) {
            Some(a) => results.push(QueryResult {
                query_id: p.query_id.clone(),
                predicted: p.predicted.clone(),
                primary: p.primary,
                ground_truth: a.windows.clone(),
            }),
            None => unmatched.push(p.query_id.clone()),
        }
    }
    if !unmatched.is_empty() {
        unmatched.sort();
        if cfg.strict_queries {
            return Err(Error::UnmatchedQueries(unmatched));
        }
        warn!(count = unmatched.len(), "dropping predictions without annotations");
        outcome.failures.extend(unmatched.into_iter().map(|id| ItemFailure {
            id,
            error: "no matching annotation".into(),
        }));
    }

    let mut report = score(&results, &cfg.thresholds)?;
    report.config_hash = Some(cfg.hash());
    outcome.succeeded = report.n_queries;
    write_atomic(&cfg.out_file(REPORT_JSON), emit_report(&report, ReportFormat::Json)?.as_bytes())?;
    write_atomic(&cfg.out_file(REPORT_TXT), emit_report(&report, ReportFormat::Table)?.as_bytes())?;
    record_stage(cfg, Stage::Evaluate, &outcome)?;
    info!(miou = report.miou, queries = report.n_queries, "evaluation done");
    Ok((report, outcome))
}

/// Runs all stages for every variant. A stage is skipped when the manifest
/// shows it completed under the same config hash and its outputs exist,
/// unless `force` is set or an earlier stage re-ran.
pub fn run_pipeline(cfg: &PipelineConfig, providers: &dyn ProviderFactory, force: bool) -> Result<Vec<VariantRun>> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for variant in cfg.expand_variants() {
        runs.push(run_variant(&variant, providers, force)?);
    }
    Ok(runs)
}

fn run_variant(cfg: &PipelineConfig, providers: &dyn ProviderFactory, force: bool) -> Result<VariantRun> {
    let mut stages = Vec::new();
    let mut upstream_ran = force;
    let mut report = None;
    for stage in [Stage::Summarize, Stage::Retrieve, Stage::Evaluate] {
        if stage == Stage::Evaluate && cfg.paths.annotations.is_none() {
            warn!("no annotations configured, skipping evaluation");
            break;
        }
        if !upstream_ran {
            if let Some(outcome) = stage_done(cfg, stage) {
                info!(stage = stage.key(), out_dir = %cfg.paths.out_dir.display(), "stage up to date, skipping");
                if stage == Stage::Evaluate {
                    let text = fs::read_to_string(cfg.out_file(REPORT_JSON)).map_err(|e| Error::io(cfg.out_file(REPORT_JSON), e))?;
                    report = Some(crate::metrics::parse_report(&text)?);
                }
                stages.push(StageRun { stage, skipped: true, outcome });
                continue;
            }
        }
        upstream_ran = true;
        let outcome = match stage {
            Stage::Summarize => summarize(cfg, providers)?,
            Stage::Retrieve => retrieve(cfg, providers)?,
            Stage::Evaluate => {
                let (r, o) = evaluate(cfg, None)?;
                report = Some(r);
                o
            }
        };
        let starved = outcome.succeeded == 0 && outcome.is_partial();
        stages.push(StageRun { stage, skipped: false, outcome });
        if starved {
            warn!(stage = stage.key(), "every item failed, skipping later stages");
            break;
        }
    }
    Ok(VariantRun {
        out_dir: cfg.paths.out_dir.clone(),
        config_hash: cfg.hash(),
        stages,
        report,
    })
}
