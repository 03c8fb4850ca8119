//! Temporal grounding metrics: span IoU, set IoU, mIoU and Recall@1 at IoU
//! thresholds, plus report rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::span::{Span, SpanSet};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

pub fn span_iou(a: &Span, b: &Span) -> f64 {
    let inter = a.intersection_len(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Total intersection length over total union length. Two empty sets score 0.
pub fn spanset_iou(a: &SpanSet, b: &SpanSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.total_len() + b.total_len() - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub predicted: SpanSet,
    pub primary: Span,
    pub ground_truth: SpanSet,
}

impl QueryResult {
    pub fn is_evaluable(&self) -> bool {
        !self.ground_truth.is_empty()
    }

    pub fn union_iou(&self) -> f64 {
        spanset_iou(&self.predicted, &self.ground_truth)
    }

    /// IoU of the primary span with its best-matching ground-truth window.
    pub fn primary_iou(&self) -> f64 {
        self.ground_truth
            .spans()
            .iter()
            .map(|g| span_iou(&self.primary, g))
            .fold(0.0, f64::max)
    }
}

fn evaluable(results: &[QueryResult]) -> Result<Vec<&QueryResult>> {
    let rows: Vec<_> = results.iter().filter(|r| r.is_evaluable()).collect();
    if rows.is_empty() {
        return Err(Error::NoResults);
    }
    Ok(rows)
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Config(format!("IoU threshold must be in (0, 1], got {t}")));
    }
    Ok(())
}

/// Fraction of queries whose primary span reaches `threshold` IoU.
pub fn recall_at_1(results: &[QueryResult], threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    let rows = evaluable(results)?;
    let hits = rows.iter().filter(|r| r.primary_iou() >= threshold).count();
    Ok(hits as f64 / rows.len() as f64)
}

pub fn mean_iou(results: &[QueryResult]) -> Result<f64> {
    let rows = evaluable(results)?;
    Ok(rows.iter().map(|r| r.union_iou()).sum::<f64>() / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub union_iou: f64,
    pub primary_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub skipped: usize,
    pub miou: f64,
    #[serde(with = "recall_map")]
    pub recall: Vec<(f64, f64)>,
    pub per_query: Vec<QueryScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvalReport {
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        self.recall
            .iter()
            .find(|(t, _)| *t == threshold)
            .map(|&(_, r)| r)
    }
}

/// Scores a batch. Queries without ground truth are counted in `skipped`.
/// Per-query rows are sorted by query id.
pub fn evaluate(results: &[QueryResult], thresholds: &[f64]) -> Result<EvalReport> {
    let mut thresholds = thresholds.to_vec();
    for &t in &thresholds {
        check_threshold(t)?;
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut rows = evaluable(results)?;
    rows.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let per_query: Vec<QueryScore> = rows
        .iter()
        .map(|r| QueryScore {
            query_id: r.query_id.clone(),
            union_iou: r.union_iou(),
            primary_iou: r.primary_iou(),
        })
        .collect();
    let n = per_query.len() as f64;
    let miou = per_query.iter().map(|q| q.union_iou).sum::<f64>() / n;
    let recall = thresholds
        .iter()
        .map(|&t| {
            let hits = per_query.iter().filter(|q| q.primary_iou >= t).count();
            (t, hits as f64 / n)
        })
        .collect();
    Ok(EvalReport {
        n_queries: per_query.len(),
        skipped: results.len() - rows.len(),
        miou,
        recall,
        per_query,
        config_hash: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" | "text" => Ok(ReportFormat::Table),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Table => Ok(render_table(report)),
    }
}

pub fn parse_report(text: &str) -> Result<EvalReport> {
    Ok(serde_json::from_str(text)?)
}

fn render_table(report: &EvalReport) -> String {
    let mut header = vec!["mIoU".to_string()];
    let mut row = vec![format!("{:.4}", report.miou)];
    for &(t, r) in &report.recall {
        header.push(format!("R@{t}"));
        row.push(format!("{r:.4}"));
    }
    let widths: Vec<usize> = header.iter().zip(&row).map(|(h, v)| h.len().max(v.len())).collect();
    let line = |cells: &[String]| {
        let body: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!(" {c:<w$} "))
            .collect();
        format!("|{}|", body.join("|"))
    };
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();

    let mut out = String::new();
    if let Some(hash) = &report.config_hash {
        let _ = writeln!(out, "config {hash}");
    }
    let _ = writeln!(out, "queries {} (skipped {})", report.n_queries, report.skipped);
    let _ = writeln!(out, "{}", line(&header));
    let _ = writeln!(out, "|{}|", rule.join("|"));
    let _ = writeln!(out, "{}", line(&row));
    out
}

mod recall_map {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[(f64, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(v.len()))?;
        for (t, r) in v {
            map.serialize_entry(&t.to_string(), r)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(f64, f64)>, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<(f64, f64)>;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from IoU threshold to recall")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, f64>()? {
                    let t: f64 = k.parse().map_err(serde::de::Error::custom)?;
                    out.push((t, v));
                }
                out.sort_by(|a, b| a.0.total_cmp(&b.0));
                Ok(out)
            }
        }
        d.deserialize_map(V)
    }
}
