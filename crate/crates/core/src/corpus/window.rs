//! Overlapping sliding windows (subtopics) over a topic's timeline.

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Timestamp};
use crate::util::SECONDS_PER_HOUR;

pub const DEFAULT_STRIDE_FRACTION: f64 = 0.5;

/// A half-open time window `[start, end)` over one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtopicWindow {
    pub topic_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Members ordered by `(timestamp, record_id)`.
    pub record_ids: Vec<String>,
}

impl SubtopicWindow {
    pub fn id(&self) -> String {
        format!("{}@{}", self.topic_id, self.start)
    }

    pub fn contains_time(&self, ts: Timestamp) -> bool {
        (self.start..self.end).contains(&ts)
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }
}

/// Slides a `window_hours` window from the topic's first record in steps of
/// `stride_fraction * window_hours` until the final record is covered.
/// Windows without records are dropped.
pub fn build_windows(
    corpus: &Corpus,
    topic_id: &str,
    window_hours: f64,
    stride_fraction: f64,
) -> Result<Vec<SubtopicWindow>, CorpusError> {
    if !(window_hours.is_finite() && window_hours > 0.0) {
        return Err(CorpusError::InvalidWindow(format!(
            "window_hours must be positive, got {window_hours}"
        )));
    }
    if !(stride_fraction > 0.0 && stride_fraction <= 1.0) {
        return Err(CorpusError::InvalidWindow(format!(
            "stride_fraction must lie in (0, 1], got {stride_fraction}"
        )));
    }
    let ids = corpus
        .topic_records(topic_id)
        .ok_or_else(|| CorpusError::UnknownTopic(topic_id.to_string()))?;
    if ids.is_empty() {
        return Err(CorpusError::EmptyTopic(topic_id.to_string()));
    }
    let times: Vec<Timestamp> = ids.iter().map(|id| corpus.timestamp(id).unwrap()).collect();

    let width = ((window_hours * SECONDS_PER_HOUR).round() as i64).max(1);
    let step = ((stride_fraction * width as f64).round() as i64).clamp(1, width);
    let first = times[0];
    let last = times[times.len() - 1];

    let mut windows = Vec::new();
    let mut start = first;
    loop {
        let end = start + width;
        let lo = times.partition_point(|&t| t < start);
        if times[lo] >= end {
            // skip the run of empty windows before the next record
            start += ((times[lo] - end) / step + 1) * step;
            continue;
        }
        let hi = times.partition_point(|&t| t < end);
        if hi > lo {
            windows.push(SubtopicWindow {
                topic_id: topic_id.to_string(),
                start,
                end,
                record_ids: ids[lo..hi].to_vec(),
            });
        }
        if end > last {
            break;
        }
        start += step;
    }
    Ok(windows)
}
