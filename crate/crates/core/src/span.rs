//! Half-open temporal intervals `[start, end)` in seconds, and normalized sets of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    start: f64,
    end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start >= 0.0 && start < end) {
            return Err(Error::InvalidSpan { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn intersection_len(&self, other: &Span) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    /// Clips to `[0, limit)`. Returns `None` when nothing remains.
    pub fn clip(&self, limit: f64) -> Option<Span> {
        let end = self.end.min(limit);
        Span::new(self.start, end).ok()
    }
}

impl TryFrom<[f64; 2]> for Span {
    type Error = Error;

    fn try_from([start, end]: [f64; 2]) -> Result<Self> {
        Span::new(start, end)
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Sorted, pairwise-disjoint spans. Overlapping or touching spans are merged
/// on construction, so every `SpanSet` is already in normal form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Span>", into = "Vec<Span>")]
pub struct SpanSet {
    spans: Vec<Span>,
}

impl SpanSet {
    pub fn new(spans: impl IntoIterator<Item = Span>) -> Self {
        let mut spans: Vec<Span> = spans.into_iter().collect();
        spans.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
        for s in spans {
            match merged.last_mut() {
                Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
                _ => merged.push(s),
            }
        }
        Self { spans: merged }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let spans = pairs
            .iter()
            .map(|&(s, e)| Span::new(s, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(spans))
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn total_len(&self) -> f64 {
        self.spans.iter().map(Span::len).sum()
    }

    pub fn containing(&self, t: f64) -> Option<&Span> {
        self.spans.iter().find(|s| s.contains(t))
    }

    /// Total length of the intersection with `other`, by a linear merge sweep.
    pub fn intersection_len(&self, other: &SpanSet) -> f64 {
        let (a, b) = (&self.spans, &other.spans);
        let (mut i, mut j) = (0, 0);
        let mut total = 0.0;
        while i < a.len() && j < b.len() {
            total += a[i].intersection_len(&b[j]);
            if a[i].end < b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn shifted(&self, delta: f64) -> Result<SpanSet> {
        let spans = self
            .spans
            .iter()
            .map(|s| Span::new(s.start + delta, s.end + delta))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpanSet::new(spans))
    }
}

impl From<Vec<Span>> for SpanSet {
    fn from(spans: Vec<Span>) -> Self {
        SpanSet::new(spans)
    }
}

impl From<SpanSet> for Vec<Span> {
    fn from(s: SpanSet) -> Self {
        s.spans
    }
}
