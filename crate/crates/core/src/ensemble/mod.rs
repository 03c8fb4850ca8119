//! Denoise-and-cooperate fusion of expert summaries.
//!
//! Every expert summary is scored against the video's frame embeddings and
//! the lowest-scoring one is dropped as an outlier. The survivors are then
//! fused by an LLM (merge, common ground) or the best-scoring one is kept
//! as-is (select).

mod cooperate;
mod filter;
mod prompt;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cooperate::{cooperate, FusedSummary, FUSED_EXPERT_ID};
pub use filter::{
    average_expert_score, filter_outlier_avg, filter_outlier_avg_with, filter_outlier_middle_frame,
    filter_summaries, middle_frame_index, remove_lowest, FilterOutcome, MIN_FILTER_SIZE,
};
pub use prompt::{render_prompt, CooperationRequest, TemplateStore};

use crate::vector::Embedding;
use crate::{Error, Result};

/// One expert's description of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub expert_id: String,
    pub text: String,
    #[serde(default)]
    pub used_audio: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl Summary {
    pub fn new(expert_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let s = Self {
            expert_id: expert_id.into(),
            text: text.into(),
            used_audio: false,
            embedding: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_audio(mut self, used_audio: bool) -> Self {
        self.used_audio = used_audio;
        self
    }

    pub fn with_embedding(mut self, embedding: Embedding) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidSummarySet(format!(
                "summary from `{}` is empty",
                self.expert_id
            )));
        }
        Ok(())
    }

    pub(crate) fn embedding(&self) -> Result<&Embedding> {
        self.embedding
            .as_ref()
            .ok_or_else(|| Error::MissingEmbedding(self.expert_id.clone()))
    }
}

/// Ordered summaries for one video, with optional per-item scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummarySet {
    items: Vec<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
}

impl SummarySet {
    pub fn new(items: Vec<Summary>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &items {
            s.validate()?;
            if !seen.insert(s.expert_id.as_str()) {
                return Err(Error::InvalidSummarySet(format!(
                    "duplicate expert id `{}`",
                    s.expert_id
                )));
            }
        }
        Ok(Self { items, scores: None })
    }

    pub fn with_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.items.len() {
            return Err(Error::InvalidSummarySet(format!(
                "{} scores for {} summaries",
                scores.len(),
                self.items.len()
            )));
        }
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn items(&self) -> &[Summary] {
        &self.items
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn expert_ids(&self) -> Vec<String> {
        self.items.iter().map(|s| s.expert_id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterStrategy {
    #[default]
    #[serde(alias = "avg")]
    AvgClip,
    #[serde(alias = "middle")]
    MiddleFrame,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CooperateStrategy {
    Merge,
    #[default]
    #[serde(alias = "cg")]
    CommonGround,
    Select,
}

impl CooperateStrategy {
    pub fn default_template_id(&self) -> Option<&'static str> {
        match self {
            CooperateStrategy::Merge => Some("merge_v1"),
            CooperateStrategy::CommonGround => Some("common_ground_v1"),
            CooperateStrategy::Select => None,
        }
    }
}

macro_rules! str_enum {
    ($ty:ty { $($name:literal $(| $alias:literal)* => $v:path),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name $(| $alias)* => Ok($v),)+
                    other => Err(Error::Config(format!(
                        "unknown {} `{other}`", stringify!($ty)
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self {
                    $($v => $name,)+
                };
                f.write_str(name)
            }
        }
    };
}

str_enum!(FilterStrategy {
    "avg_clip" | "avg" => FilterStrategy::AvgClip,
    "middle_frame" | "middle" => FilterStrategy::MiddleFrame,
    "none" => FilterStrategy::None,
});

str_enum!(CooperateStrategy {
    "merge" => CooperateStrategy::Merge,
    "common_ground" | "cg" => CooperateStrategy::CommonGround,
    "select" => CooperateStrategy::Select,
});

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}
