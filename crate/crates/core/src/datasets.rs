//! Ground-truth moment annotations and offline expert summaries.
//!
//! Annotations have one canonical JSONL schema; dataset-specific layouts are
//! converted by thin adapters. Parsing is lenient: bad lines are collected
//! and only fail the load when they exceed a configurable fraction.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::ensemble::{Summary, SummarySet};
use crate::span::{Span, SpanSet};
use crate::{Error, Result};

pub const DEFAULT_MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub video_id: String,
    pub query_text: String,
    pub duration_sec: f64,
    pub windows: SpanSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    #[default]
    CanonicalJsonl,
    CharadesStaLines,
    QvhStyleJsonl,
}

impl FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical_jsonl" => Ok(Self::CanonicalJsonl),
            "charades_sta_lines" => Ok(Self::CharadesStaLines),
            "qvh_style_jsonl" => Ok(Self::QvhStyleJsonl),
            other => Err(Error::UnknownAdapter(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub max_malformed_fraction: f64,
    /// Video durations for formats that do not carry them (Charades-STA).
    pub durations: Option<HashMap<String, f64>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_malformed_fraction: DEFAULT_MAX_MALFORMED_FRACTION,
            durations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationLoad {
    pub records: Vec<AnnotationRecord>,
    pub malformed: Vec<MalformedLine>,
    /// Windows that had to be clipped to `[0, duration)`.
    pub clipped_windows: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalLine {
    query_id: String,
    video_id: String,
    query_text: String,
    duration_sec: f64,
    windows: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct QvhLine {
    qid: Value,
    query: String,
    duration: f64,
    vid: String,
    #[serde(default)]
    relevant_windows: Vec<[f64; 2]>,
}

pub fn load_annotations(path: &Path, format: AnnotationFormat, opts: &LoadOptions) -> Result<AnnotationLoad> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, format, opts)
}

pub fn parse_annotations(text: &str, format: AnnotationFormat, opts: &LoadOptions) -> Result<AnnotationLoad> {
    let mut out = AnnotationLoad::default();
    let mut total = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = match format {
            AnnotationFormat::CanonicalJsonl => parse_canonical(line),
            AnnotationFormat::QvhStyleJsonl => parse_qvh(line),
            AnnotationFormat::CharadesStaLines => parse_charades(line, line_no, opts),
        }
        .and_then(|raw| raw.finish(&mut out.clipped_windows));
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.malformed.push(MalformedLine { line: line_no, reason }),
        }
    }
    if !out.malformed.is_empty() {
        warn!(malformed = out.malformed.len(), total, "skipped malformed annotation lines");
    }
    if out.clipped_windows > 0 {
        warn!(clipped = out.clipped_windows, "clipped annotation windows to video duration");
    }
    if total > 0 && out.malformed.len() as f64 / total as f64 > opts.max_malformed_fraction {
        return Err(Error::TooManyMalformed {
            malformed: out.malformed.len(),
            total,
            allowed: opts.max_malformed_fraction,
        });
    }
    Ok(out)
}

struct RawRecord {
    query_id: String,
    video_id: String,
    query_text: String,
    duration_sec: f64,
    windows: Vec<[f64; 2]>,
}

impl RawRecord {
    fn finish(self, clipped: &mut usize) -> std::result::Result<AnnotationRecord, String> {
        if self.query_id.is_empty() || self.video_id.is_empty() {
            return Err("empty query_id or video_id".into());
        }
        let d = self.duration_sec;
        if !(d.is_finite() && d > 0.0) {
            return Err(format!("duration {d} is not positive"));
        }
        let mut spans = Vec::with_capacity(self.windows.len());
        for [s, e] in self.windows {
            if !(s.is_finite() && e.is_finite()) || e <= s {
                return Err(format!("window [{s}, {e}] is invalid"));
            }
            let (cs, ce) = (s.max(0.0), e.min(d));
            if (cs, ce) != (s, e) {
                *clipped += 1;
            }
            let span = Span::new(cs, ce).map_err(|_| format!("window [{s}, {e}] lies outside [0, {d}]"))?;
            spans.push(span);
        }
        Ok(AnnotationRecord {
            query_id: self.query_id,
            video_id: self.video_id,
            query_text: self.query_text,
            duration_sec: d,
            windows: SpanSet::new(spans),
        })
    }
}

fn parse_canonical(line: &str) -> std::result::Result<RawRecord, String> {
    let c: CanonicalLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Ok(RawRecord {
        query_id: c.query_id,
        video_id: c.video_id,
        query_text: c.query_text,
        duration_sec: c.duration_sec,
        windows: c.windows,
    })
}

fn parse_qvh(line: &str) -> std::result::Result<RawRecord, String> {
    let q: QvhLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let query_id = match q.qid {
        Value::String(s) => s,
        Value::Number(n) => n.to_string(),
        other => return Err(format!("qid must be a string or number, got {other}")),
    };
    Ok(RawRecord {
        query_id,
        video_id: q.vid,
        query_text: q.query,
        duration_sec: q.duration,
        windows: q.relevant_windows,
    })
}

/// `VIDEO_ID START END##sentence`. Query ids are `VIDEO_ID#LINE`.
fn parse_charades(line: &str, line_no: usize, opts: &LoadOptions) -> std::result::Result<RawRecord, String> {
    let (head, sentence) = line.split_once("##").ok_or("missing `##` separator")?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    let [vid, start, end] = fields[..] else {
        return Err(format!("expected `VID START END`, got `{head}`"));
    };
    let start: f64 = start.parse().map_err(|_| format!("bad start `{start}`"))?;
    let end: f64 = end.parse().map_err(|_| format!("bad end `{end}`"))?;
    let duration_sec = match &opts.durations {
        Some(map) => *map.get(vid).ok_or_else(|| format!("no duration known for `{vid}`"))?,
        None => end,
    };
    Ok(RawRecord {
        query_id: format!("{vid}#{line_no}"),
        video_id: vid.to_string(),
        query_text: sentence.trim().to_string(),
        duration_sec,
        windows: vec![[start, end]],
    })
}

/// Reads a `{"video_id": seconds}` JSON object.
pub fn load_durations(path: &Path) -> Result<HashMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn emit_canonical(records: &[AnnotationRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// All expert summaries for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSummaryFile {
    pub video_id: String,
    pub entries: Vec<Summary>,
    /// Experts whose entries were dropped for having no text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl ExpertSummaryFile {
    pub fn summary_set(&self) -> Result<SummarySet> {
        SummarySet::new(self.entries.clone())
    }
}

#[derive(Deserialize)]
struct RawSummaryFile {
    video_id: String,
    summaries: Vec<RawSummary>,
}

#[derive(Deserialize)]
struct RawSummary {
    expert_id: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    used_audio: bool,
}

/// Loads `{"video_id": ..., "summaries": [{"expert_id", "text", "used_audio"}, ...]}`.
pub fn load_expert_summaries(path: &Path) -> Result<ExpertSummaryFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawSummaryFile = serde_json::from_str(&text)?;
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for s in raw.summaries {
        if !seen.insert(s.expert_id.clone()) {
            return Err(Error::DuplicateExpert {
                video_id: raw.video_id,
                expert_id: s.expert_id,
            });
        }
        if s.text.trim().is_empty() {
            warn!(video_id = %raw.video_id, expert_id = %s.expert_id, "skipping empty summary");
            skipped.push(s.expert_id);
            continue;
        }
        entries.push(Summary {
            expert_id: s.expert_id,
            text: s.text,
            used_audio: s.used_audio,
            embedding: None,
        });
    }
    if entries.is_empty() {
        return Err(Error::NoUsableEntries(path.to_path_buf()));
    }
    Ok(ExpertSummaryFile {
        video_id: raw.video_id,
        entries,
        skipped,
    })
}
