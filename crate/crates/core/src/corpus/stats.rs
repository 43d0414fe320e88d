use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};
use crate::util::{hours_between, quantile_linear};

/// Quartiles of chain durations and of gaps between consecutive chain
/// members, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub full_chain_hours_q1: f64,
    pub full_chain_hours_q2: f64,
    pub full_chain_hours_q3: f64,
    pub between_records_hours_q1: f64,
    pub between_records_hours_q2: f64,
    pub between_records_hours_q3: f64,
}

impl TimeStats {
    /// Builds stats from raw duration and gap samples (hours, any order).
    pub fn from_samples(mut durations: Vec<f64>, mut gaps: Vec<f64>) -> Option<Self> {
        durations.sort_by(f64::total_cmp);
        gaps.sort_by(f64::total_cmp);
        let q = |v: &[f64], p| quantile_linear(v, p);
        Some(Self {
            full_chain_hours_q1: q(&durations, 0.25)?,
            full_chain_hours_q2: q(&durations, 0.5)?,
            full_chain_hours_q3: q(&durations, 0.75)?,
            between_records_hours_q1: q(&gaps, 0.25)?,
            between_records_hours_q2: q(&gaps, 0.5)?,
            between_records_hours_q3: q(&gaps, 0.75)?,
        })
    }
}

/// Chain-duration and between-record quartiles over the topic's
/// non-singleton gold chains.
pub fn compute_time_stats(corpus: &Corpus, topic_id: &str) -> Result<TimeStats, CorpusError> {
    let gold = corpus.gold_chains().ok_or(CorpusError::NoGoldChains)?;
    let mut durations = Vec::new();
    let mut gaps = Vec::new();
    for chain in gold.iter().filter(|c| c.len() > 1) {
        if corpus.chain_topic(chain) != Some(topic_id) {
            continue;
        }
        let ts: Vec<i64> = chain
            .record_ids
            .iter()
            .filter_map(|id| corpus.timestamp(id))
            .collect();
        durations.push(hours_between(ts[0], ts[ts.len() - 1]));
        gaps.extend(ts.windows(2).map(|w| hours_between(w[0], w[1])));
    }
    TimeStats::from_samples(durations, gaps)
        .ok_or_else(|| CorpusError::NoChainStatistics(topic_id.to_string()))
}

/// Subtopic window length: the larger of the topic's full-chain Q3 and the
/// mean full-chain Q3 across all topics.
pub fn window_size_for_topic(topic_stats: &TimeStats, all_topic_stats: &[TimeStats]) -> f64 {
    if all_topic_stats.is_empty() {
        return topic_stats.full_chain_hours_q3;
    }
    let mean = all_topic_stats
        .iter()
        .map(|s| s.full_chain_hours_q3)
        .sum::<f64>()
        / all_topic_stats.len() as f64;
    mean.max(topic_stats.full_chain_hours_q3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::{chain, record};
    use crate::corpus::Corpus;

    fn with_q3(q3: f64) -> TimeStats {
        TimeStats {
            full_chain_hours_q1: 0.0,
            full_chain_hours_q2: 0.0,
            full_chain_hours_q3: q3,
            between_records_hours_q1: 0.0,
            between_records_hours_q2: 0.0,
            between_records_hours_q3: 0.0,
        }
    }

    /// Full-chain Q3 per plant as published for the seven log books.
    const PUBLISHED_Q3: [f64; 7] = [18.9, 463.8, 92.5, 157.9, 145.4, 213.9, 341.9];

    #[test]
    fn window_size_uses_overall_mean_when_larger() {
        let all: Vec<TimeStats> = PUBLISHED_Q3.iter().map(|&q| with_q3(q)).collect();
        let mean = PUBLISHED_Q3.iter().sum::<f64>() / 7.0;
        assert!((mean - 204.9).abs() < 0.01);
        assert_eq!(window_size_for_topic(&all[2], &all), mean);
        assert_eq!(window_size_for_topic(&all[6], &all), 341.9);
        assert_eq!(window_size_for_topic(&all[0], &all[..1]), 18.9);
    }

    #[test]
    fn quartiles_of_chain_durations() {
        // durations 0, 10, 20, 30, 40 h
        let mut records = Vec::new();
        let mut chains = Vec::new();
        for (i, d) in [0.0, 10.0, 20.0, 30.0, 40.0].iter().enumerate() {
            let a = format!("a{i}");
            let b = format!("b{i}");
            records.push(record(&a, "T", i as f64 * 100.0, "x"));
            records.push(record(&b, "T", i as f64 * 100.0 + d, "y"));
            chains.push(chain(&format!("c{i}"), &[&a, &b]));
        }
        let corpus = Corpus::new(records, Some(chains)).unwrap();
        let stats = compute_time_stats(&corpus, "T").unwrap();
        assert_eq!(stats.full_chain_hours_q1, 10.0);
        assert_eq!(stats.full_chain_hours_q2, 20.0);
        assert_eq!(stats.full_chain_hours_q3, 30.0);
        assert_eq!(stats.between_records_hours_q2, 20.0);
    }

    #[test]
    fn single_chain_gives_degenerate_quartiles() {
        let corpus = Corpus::new(
            vec![record("a", "T", 0.0, "x"), record("b", "T", 5.0, "y")],
            Some(vec![chain("c", &["a", "b"])]),
        )
        .unwrap();
        let s = compute_time_stats(&corpus, "T").unwrap();
        assert_eq!(
            (s.full_chain_hours_q1, s.full_chain_hours_q2, s.full_chain_hours_q3),
            (5.0, 5.0, 5.0)
        );
    }

    #[test]
    fn three_chain_durations_median() {
        let mut records = Vec::new();
        let mut chains = Vec::new();
        for (i, d) in [1.0, 3.7, 18.9].iter().enumerate() {
            let a = format!("a{i}");
            let b = format!("b{i}");
            records.push(record(&a, "A", i as f64 * 50.0, "x"));
            records.push(record(&b, "A", i as f64 * 50.0 + d, "y"));
            chains.push(chain(&format!("c{i}"), &[&a, &b]));
        }
        let corpus = Corpus::new(records, Some(chains)).unwrap();
        let s = compute_time_stats(&corpus, "A").unwrap();
        assert!((s.full_chain_hours_q2 - 3.7).abs() < 1e-3);
    }

    #[test]
    fn singleton_only_topic_has_no_stats() {
        let corpus = Corpus::new(
            vec![record("a", "T", 0.0, "x")],
            Some(vec![chain("c", &["a"])]),
        )
        .unwrap();
        let err = compute_time_stats(&corpus, "T").unwrap_err();
        assert!(err.to_string().contains("no chain statistics available"));
    }
}
