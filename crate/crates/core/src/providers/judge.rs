//! Single-call LLM judging of a summary on seven quality dimensions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use super::ChatClient;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeDimension {
    AspectCoverage,
    Coherence,
    Faithfulness,
    Fluency,
    Relevance,
    SentimentConsistency,
    Specificity,
}

impl JudgeDimension {
    pub const ALL: [JudgeDimension; 7] = [
        JudgeDimension::AspectCoverage,
        JudgeDimension::Coherence,
        JudgeDimension::Faithfulness,
        JudgeDimension::Fluency,
        JudgeDimension::Relevance,
        JudgeDimension::SentimentConsistency,
        JudgeDimension::Specificity,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            JudgeDimension::AspectCoverage => "aspect_coverage",
            JudgeDimension::Coherence => "coherence",
            JudgeDimension::Faithfulness => "faithfulness",
            JudgeDimension::Fluency => "fluency",
            JudgeDimension::Relevance => "relevance",
            JudgeDimension::SentimentConsistency => "sentiment_consistency",
            JudgeDimension::Specificity => "specificity",
        }
    }
}

impl fmt::Display for JudgeDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

pub type JudgeVerdict = BTreeMap<JudgeDimension, f64>;

pub fn judge_prompt(candidate: &str, reference: &str) -> String {
    let keys: Vec<String> = JudgeDimension::ALL.iter().map(|d| format!("\"{d}\"")).collect();
    format!(
        "You are evaluating a summary of a video against source material describing the same video.\n\
         Rate the summary on each of these dimensions with an integer from 1 (worst) to 5 (best): \
         aspect coverage, coherence, faithfulness, fluency, relevance, sentiment consistency, specificity.\n\n\
         Source material:\n{reference}\n\n\
         Summary to evaluate:\n{candidate}\n\n\
         Reply with a single JSON object and nothing else, using exactly these keys: {}.",
        keys.join(", ")
    )
}

/// Extracts and validates a verdict from a judge reply. The reply may wrap the
/// JSON object in prose or a code fence.
pub fn parse_verdict(reply: &str) -> Result<JudgeVerdict> {
    let start = reply.find('{');
    let end = reply.rfind('}');
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::UnparseableVerdict("no JSON object in reply".into()));
    };
    if end < start {
        return Err(Error::UnparseableVerdict("no JSON object in reply".into()));
    }
    let obj: serde_json::Map<String, Value> = serde_json::from_str(&reply[start..=end])
        .map_err(|e| Error::UnparseableVerdict(format!("invalid JSON: {e}")))?;
    let normalized: BTreeMap<String, &Value> = obj
        .iter()
        .map(|(k, v)| (k.trim().to_lowercase().replace([' ', '-'], "_"), v))
        .collect();

    let mut verdict = JudgeVerdict::new();
    for dim in JudgeDimension::ALL {
        let value = normalized
            .get(dim.key())
            .ok_or_else(|| Error::UnparseableVerdict(format!("missing `{dim}`")))?;
        let score = match value {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| Error::UnparseableVerdict(format!("`{dim}` is not a number")))?;
        if !(1.0..=5.0).contains(&score) {
            return Err(Error::UnparseableVerdict(format!("`{dim}` = {score} outside [1, 5]")));
        }
        verdict.insert(dim, score);
    }
    Ok(verdict)
}

/// Asks the judge for a verdict, re-asking once if the first reply does not parse.
pub fn judge_summary(candidate: &str, reference: &str, judge: &dyn ChatClient) -> Result<JudgeVerdict> {
    let prompt = judge_prompt(candidate, reference);
    let first = judge.complete(&prompt)?;
    let reason = match parse_verdict(&first) {
        Ok(v) => return Ok(v),
        Err(e) => e.to_string(),
    };
    warn!(reason = %reason, "judge reply unparseable, asking again");
    let retry = format!(
        "{prompt}\n\nYour previous reply could not be used ({reason}). \
         Reply with only the JSON object containing all seven keys."
    );
    parse_verdict(&judge.complete(&retry)?)
}
