use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{argmin, FilterStrategy, Summary, SummarySet};
use crate::retrieval::FrameEmbeddingTrack;
use crate::vector::{check_dims, cosine_similarity, Embedding};
use crate::{Error, Result};

/// Filtering needs a majority to outvote an outlier.
pub const MIN_FILTER_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    /// Surviving summaries; carries their scores when any were computed.
    pub retained: SummarySet,
    pub removed_index: Option<usize>,
    pub removed_expert: Option<String>,
    /// One score per input summary, in input order. Empty if none computed.
    pub scores: Vec<f64>,
    pub strategy: FilterStrategy,
}

fn check_track(frames: &FrameEmbeddingTrack, s: &Summary) -> Result<()> {
    let emb = s.embedding()?;
    match frames.dim() {
        None => Err(Error::EmptyTrack),
        Some(d) => check_dims(d, emb.dim()),
    }
}

/// Mean cosine similarity between the summary embedding and every frame.
pub fn average_expert_score(s: &Summary, frames: &FrameEmbeddingTrack) -> Result<f64> {
    average_score_with(s, frames, cosine_similarity)
}

fn average_score_with<F>(s: &Summary, frames: &FrameEmbeddingTrack, sim: F) -> Result<f64>
where
    F: Fn(&Embedding, &Embedding) -> Result<f64>,
{
    check_track(frames, s)?;
    let emb = s.embedding()?;
    let mut total = 0.0;
    for f in frames.frames() {
        total += sim(emb, &f.embedding)?;
    }
    Ok(total / frames.len() as f64)
}

/// Drops the summary with the lowest score (first one on ties).
pub fn remove_lowest(
    set: &SummarySet,
    scores: Vec<f64>,
    strategy: FilterStrategy,
) -> Result<FilterOutcome> {
    if set.len() < MIN_FILTER_SIZE {
        return Err(Error::TooFewSummaries {
            min: MIN_FILTER_SIZE,
            got: set.len(),
        });
    }
    let removed = argmin(&scores).ok_or(Error::NoResults)?;
    let mut items = set.items().to_vec();
    let dropped = items.remove(removed);
    let mut kept_scores = scores.clone();
    kept_scores.remove(removed);
    Ok(FilterOutcome {
        retained: SummarySet::new(items)?.with_scores(kept_scores)?,
        removed_index: Some(removed),
        removed_expert: Some(dropped.expert_id),
        scores,
        strategy,
    })
}

/// Scores each summary by its average similarity over all frames and drops the minimum.
pub fn filter_outlier_avg(set: &SummarySet, frames: &FrameEmbeddingTrack) -> Result<FilterOutcome> {
    filter_outlier_avg_with(set, frames, cosine_similarity)
}

/// [`filter_outlier_avg`] with a caller-supplied similarity in place of cosine.
pub fn filter_outlier_avg_with<F>(
    set: &SummarySet,
    frames: &FrameEmbeddingTrack,
    sim: F,
) -> Result<FilterOutcome>
where
    F: Fn(&Embedding, &Embedding) -> Result<f64> + Copy,
{
    if set.len() < MIN_FILTER_SIZE {
        return Err(Error::TooFewSummaries {
            min: MIN_FILTER_SIZE,
            got: set.len(),
        });
    }
    let scores = set
        .items()
        .iter()
        .map(|s| average_score_with(s, frames, sim))
        .collect::<Result<Vec<_>>>()?;
    remove_lowest(set, scores, FilterStrategy::AvgClip)
}

/// `floor(n / 2)`, zero-based.
pub fn middle_frame_index(n_frames: usize) -> usize {
    n_frames / 2
}

/// Scores each summary against the middle sampled frame only and drops the minimum.
pub fn filter_outlier_middle_frame(
    set: &SummarySet,
    frames: &FrameEmbeddingTrack,
) -> Result<FilterOutcome> {
    if set.len() < MIN_FILTER_SIZE {
        return Err(Error::TooFewSummaries {
            min: MIN_FILTER_SIZE,
            got: set.len(),
        });
    }
    let middle = frames
        .frames()
        .get(middle_frame_index(frames.len()))
        .ok_or(Error::EmptyTrack)?;
    let scores = set
        .items()
        .iter()
        .map(|s| {
            check_track(frames, s)?;
            cosine_similarity(s.embedding()?, &middle.embedding)
        })
        .collect::<Result<Vec<_>>>()?;
    remove_lowest(set, scores, FilterStrategy::MiddleFrame)
}

/// Runs the configured filter. Sets too small to filter pass through with a
/// warning; `None` keeps everything but still records average scores when
/// embeddings allow, so a later select step has something to rank by.
pub fn filter_summaries(
    strategy: FilterStrategy,
    set: &SummarySet,
    frames: &FrameEmbeddingTrack,
) -> Result<FilterOutcome> {
    let result = match strategy {
        FilterStrategy::AvgClip => filter_outlier_avg(set, frames),
        FilterStrategy::MiddleFrame => filter_outlier_middle_frame(set, frames),
        FilterStrategy::None => return Ok(pass_through(set, frames, strategy)),
    };
    match result {
        Err(Error::TooFewSummaries { got, .. }) => {
            warn!(video_id = frames.video_id(), summaries = got, "too few summaries to filter, keeping all");
            Ok(pass_through(set, frames, strategy))
        }
        other => other,
    }
}

fn pass_through(set: &SummarySet, frames: &FrameEmbeddingTrack, strategy: FilterStrategy) -> FilterOutcome {
    let scores: Vec<f64> = set
        .items()
        .iter()
        .map(|s| average_expert_score(s, frames))
        .collect::<Result<_>>()
        .unwrap_or_default();
    let retained = if scores.is_empty() {
        set.clone()
    } else {
        set.clone().with_scores(scores.clone()).unwrap_or_else(|_| set.clone())
    };
    FilterOutcome {
        retained,
        removed_index: None,
        removed_expert: None,
        scores,
        strategy,
    }
}
