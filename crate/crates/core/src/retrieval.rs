//! Keyframe retrieval: rank fixed-interval frame embeddings against a summary
//! embedding, keep the top k, and turn the kept frames into temporal spans.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use crate::span::{Span, SpanSet};
use crate::vector::{check_dims, cosine_similarity, Embedding};
use crate::{Error, Result};

pub const DEFAULT_INTERVAL_SEC: f64 = 2.0;
pub const DEFAULT_K_FRACTION: f64 = 0.15;

const UNIT_TOL: f64 = 1e-5;
const GRID_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t_start: f64,
    pub embedding: Embedding,
}

/// Per-video frame embeddings sampled at a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingTrack {
    video_id: String,
    interval_sec: f64,
    duration_sec: f64,
    frames: Vec<Frame>,
}

impl FrameEmbeddingTrack {
    /// Validates the track. Embeddings must already be unit-normalized.
    pub fn new(
        video_id: impl Into<String>,
        interval_sec: f64,
        duration_sec: f64,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidTrack(msg));
        if !(interval_sec.is_finite() && interval_sec > 0.0) {
            return bad(format!("interval must be positive, got {interval_sec}"));
        }
        if !(duration_sec.is_finite() && duration_sec > 0.0) {
            return Err(Error::NonPositiveDuration(duration_sec));
        }
        let dim = frames.first().map(|f| f.embedding.dim());
        let mut prev = f64::NEG_INFINITY;
        for (i, f) in frames.iter().enumerate() {
            let t = f.t_start;
            if !(t.is_finite() && t >= 0.0) || t <= prev {
                return bad(format!("frame {i}: timestamps must be non-negative and strictly increasing"));
            }
            let steps = t / interval_sec;
            if (steps - steps.round()).abs() > GRID_TOL {
                return bad(format!("frame {i}: t={t} is not a multiple of {interval_sec}"));
            }
            if t >= duration_sec {
                return bad(format!("frame {i}: t={t} not before duration {duration_sec}"));
            }
            if Some(f.embedding.dim()) != dim {
                return bad(format!("frame {i}: embedding dimension differs from frame 0"));
            }
            if !f.embedding.is_unit(UNIT_TOL) {
                return bad(format!("frame {i}: embedding is not unit-normalized"));
            }
            prev = t;
        }
        Ok(Self {
            video_id: video_id.into(),
            interval_sec,
            duration_sec,
            frames,
        })
    }

    /// Builds a track at the standard sampling times, normalizing each vector.
    pub fn from_vectors(
        video_id: impl Into<String>,
        interval_sec: f64,
        duration_sec: f64,
        vectors: Vec<Embedding>,
    ) -> Result<Self> {
        let times = sample_frame_times(duration_sec, interval_sec)?;
        if times.len() != vectors.len() {
            return Err(Error::InvalidTrack(format!(
                "{} vectors for {} sample times",
                vectors.len(),
                times.len()
            )));
        }
        let frames = times
            .into_iter()
            .zip(vectors)
            .map(|(t_start, v)| Ok(Frame { t_start, embedding: v.normalize()? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(video_id, interval_sec, duration_sec, frames)
    }

    /// Rounds every vector to f32, the precision the cache stores.
    pub fn to_storage_precision(&self) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let narrowed: Vec<f32> = f.embedding.values().iter().map(|&v| v as f32).collect();
                Ok(Frame {
                    t_start: f.t_start,
                    embedding: Embedding::from_f32(&narrowed)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.video_id.clone(), self.interval_sec, self.duration_sec, frames)
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn interval_sec(&self) -> f64 {
        self.interval_sec
    }

    pub fn duration_sec(&self) -> f64 {
        self.duration_sec
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.frames.first().map(|f| f.embedding.dim())
    }

    /// The interval covered by frame `index`, clipped to the video duration.
    pub fn frame_span(&self, index: usize) -> Result<Span> {
        let f = self.frames.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.frames.len(),
        })?;
        Span::new(f.t_start, (f.t_start + self.interval_sec).min(self.duration_sec))
    }
}

/// Sampling times `0, interval, 2*interval, ...` strictly below `duration_sec`.
pub fn sample_frame_times(duration_sec: f64, interval_sec: f64) -> Result<Vec<f64>> {
    if !(duration_sec.is_finite() && duration_sec > 0.0) {
        return Err(Error::NonPositiveDuration(duration_sec));
    }
    if !(interval_sec.is_finite() && interval_sec > 0.0) {
        return Err(Error::InvalidTrack(format!(
            "interval must be positive, got {interval_sec}"
        )));
    }
    // Multiply rather than accumulate so timestamps stay exact multiples.
    Ok((0u64..)
        .map(|i| i as f64 * interval_sec)
        .take_while(|&t| t < duration_sec)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedFrame {
    pub index: usize,
    pub t_start: f64,
    pub score: f64,
}

/// Frames in descending similarity order. Equal scores keep timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedKeyframes {
    entries: Vec<RankedFrame>,
}

impl RankedKeyframes {
    pub fn entries(&self) -> &[RankedFrame] {
        &self.entries
    }

    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> SimilarityStats {
        let n = self.entries.len().max(1) as f64;
        SimilarityStats {
            max: self.entries.first().map_or(0.0, |e| e.score),
            min: self.entries.last().map_or(0.0, |e| e.score),
            mean: self.entries.iter().map(|e| e.score).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

pub fn rank_frames(summary: &Embedding, track: &FrameEmbeddingTrack) -> Result<RankedKeyframes> {
    if track.is_empty() {
        return Err(Error::EmptyTrack);
    }
    check_dims(track.dim().unwrap_or(0), summary.dim())?;
    let mut entries = track
        .frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            Ok(RankedFrame {
                index,
                t_start: f.t_start,
                score: cosine_similarity(summary, &f.embedding)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Stable sort: ties stay in index (= timestamp) order.
    entries.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(RankedKeyframes { entries })
}

/// How many keyframes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum KMode {
    /// `max(1, ceil(fraction * n_frames))`
    Fraction(f64),
    Absolute(usize),
    /// Every frame scoring at least the threshold, and never fewer than one.
    Threshold(f64),
}

impl Default for KMode {
    fn default() -> Self {
        KMode::Fraction(DEFAULT_K_FRACTION)
    }
}

impl KMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KMode::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::Config(format!("k fraction must be in (0, 1], got {f}")))
            }
            KMode::Absolute(0) => Err(Error::Config("absolute k must be at least 1".into())),
            KMode::Threshold(t) if !t.is_finite() => {
                Err(Error::Config("k threshold must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, ranked: &RankedKeyframes) -> Result<usize> {
        let n = ranked.len();
        let k = match *self {
            // Guard against 0.15 * 40 landing a hair above 6.
            KMode::Fraction(f) => ((f * n as f64) - 1e-9).ceil().max(1.0) as usize,
            KMode::Absolute(k) => k,
            KMode::Threshold(t) => ranked.entries.iter().filter(|e| e.score >= t).count().max(1),
        };
        if k == 0 || k > n {
            return Err(Error::KOutOfRange { k, n });
        }
        Ok(k)
    }
}

/// The first `k` frame indices of the ranking, in rank order.
pub fn select_top_k(ranked: &RankedKeyframes, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > ranked.len() {
        return Err(Error::KOutOfRange { k, n: ranked.len() });
    }
    Ok(ranked.entries[..k].iter().map(|e| e.index).collect())
}

/// Turns selected frames into disjoint spans. Frames whose index gap is at
/// most `gap_tolerance_frames` missing frames are bridged into one span.
pub fn keyframes_to_spans(
    indices: &[usize],
    track: &FrameEmbeddingTrack,
    gap_tolerance_frames: usize,
) -> Result<SpanSet> {
    let sorted: BTreeSet<usize> = indices.iter().copied().collect();
    if let Some(&max) = sorted.last() {
        if max >= track.len() {
            return Err(Error::IndexOutOfRange {
                index: max,
                len: track.len(),
            });
        }
    }
    let mut spans = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for i in sorted {
        run = match run {
            Some((first, last)) if i - last - 1 <= gap_tolerance_frames => Some((first, i)),
            Some((first, last)) => {
                spans.push(run_span(track, first, last)?);
                Some((i, i))
            }
            None => Some((i, i)),
        };
    }
    if let Some((first, last)) = run {
        spans.push(run_span(track, first, last)?);
    }
    Ok(SpanSet::new(spans))
}

fn run_span(track: &FrameEmbeddingTrack, first: usize, last: usize) -> Result<Span> {
    Span::new(track.frame_span(first)?.start(), track.frame_span(last)?.end())
}

/// The span holding the best-ranked frame that any span covers.
pub fn primary_span(ranked: &RankedKeyframes, spans: &SpanSet) -> Result<Span> {
    if spans.is_empty() {
        return Err(Error::EmptySpanSet);
    }
    ranked
        .entries
        .iter()
        .find_map(|e| spans.containing(e.t_start).copied())
        .ok_or(Error::EmptySpanSet)
}
