use serde::{Deserialize, Serialize};

use super::{cluster, Algorithm, ClusterParams, ClusteringError};
use crate::corpus::{Chain, TimedRecord};
use crate::metrics::{strip_singletons, v_measure};
use crate::scorer::PairScores;

/// `τ₀` followed by `τ₀·(1 + δ)` for δ = 0.3 … 1.0 and `τ₀·(1 − δ)` for
/// δ = 0.3 … 0.9 in steps of 0.1; 16 values, unclipped.
pub fn threshold_grid_raw(tau0: f64) -> Vec<f64> {
    let up = (3..=10).map(|k| tau0 * f64::from(10 + k) / 10.0);
    let down = (3..=9).map(|k| tau0 * f64::from(10 - k) / 10.0);
    std::iter::once(tau0).chain(up).chain(down).collect()
}

/// Raw grid restricted to `(0, 1)`, ascending and deduplicated.
pub fn threshold_grid(tau0: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = threshold_grid_raw(tau0)
        .into_iter()
        .filter(|t| *t > 0.0 && *t < 1.0)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// A dev window with its scores and gold chains clipped to its members.
#[derive(Debug, Clone)]
pub struct ScoredWindow {
    pub records: Vec<TimedRecord>,
    pub scores: PairScores,
    pub gold: Vec<Chain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub threshold: f64,
    pub v_measure: f64,
    /// `(τ, mean v-measure)` for every candidate, ascending in τ.
    pub candidates: Vec<(f64, f64)>,
    /// Windows whose gold partition had no multi-record chain.
    pub excluded_windows: usize,
}

/// Clusters every dev window at each grid threshold and returns the one with
/// the highest mean v-measure, the smallest on ties.
pub fn tune_threshold(
    windows: &[ScoredWindow],
    tau0: f64,
    algorithm: Algorithm,
    max_gap_hours: f64,
) -> Result<TuneOutcome, ClusteringError> {
    let defined: Vec<&ScoredWindow> = windows
        .iter()
        .filter(|w| w.gold.iter().any(|c| c.len() > 1))
        .collect();
    if defined.is_empty() {
        return Err(ClusteringError::NoDevWindows);
    }
    let grid = threshold_grid(tau0);
    if grid.is_empty() {
        return Err(ClusteringError::InvalidThreshold(tau0));
    }
    let mut candidates = Vec::with_capacity(grid.len());
    for &tau in &grid {
        let params = ClusterParams {
            threshold: tau,
            max_gap_hours,
            algorithm,
        };
        let mut total = 0.0;
        for w in &defined {
            let chains = cluster(&w.scores, &w.records, &params)?;
            let pair = strip_singletons(&w.gold, &chains).expect("window has gold links");
            total += v_measure(&pair).v_measure;
        }
        candidates.push((tau, total / defined.len() as f64));
    }
    let (threshold, v) = candidates
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (t, v)| if v > best.1 { (t, v) } else { best });
    Ok(TuneOutcome {
        threshold,
        v_measure: v,
        candidates,
        excluded_windows: windows.len() - defined.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_for_one_half() {
        let raw = threshold_grid_raw(0.5);
        assert_eq!(raw.len(), 16);
        let expected = [
            0.5, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05,
        ];
        for (a, b) in raw.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let grid = threshold_grid(0.5);
        assert_eq!(grid.len(), 15);
        assert!(grid.iter().all(|t| *t > 0.0 && *t < 1.0));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_for_high_tau_drops_values_at_or_above_one() {
        let grid = threshold_grid(0.8);
        assert!(grid.iter().all(|t| *t < 1.0));
        assert!(grid.contains(&0.8));
        assert_eq!(grid.len(), 8);
    }

    fn window(gold: &[&[&str]], links: &[(&str, &str, f64)], n: usize) -> ScoredWindow {
        let records = (0..n)
            .map(|i| TimedRecord {
                timestamp: i as i64 * 3600,
                id: format!("{}", (b'A' + i as u8) as char),
            })
            .collect();
        let mut scores = PairScores::new();
        for (a, b, s) in links {
            scores.insert(*a, *b, *s);
        }
        let gold = gold
            .iter()
            .enumerate()
            .map(|(i, c)| Chain::new(format!("g{i}"), c.iter().map(|s| s.to_string()).collect()))
            .collect();
        ScoredWindow { records, scores, gold }
    }

    #[test]
    fn oracle_scores_pick_smallest_candidate() {
        let w = window(&[&["A", "B", "C"], &["D"]], &[("A", "B", 1.0), ("B", "C", 1.0), ("A", "C", 0.0), ("C", "D", 0.0)], 4);
        let out = tune_threshold(&[w], 0.5, Algorithm::Tdfs, 100.0).unwrap();
        assert_eq!(out.threshold, threshold_grid(0.5)[0]);
        assert!(out.candidates.iter().all(|(_, v)| *v == 1.0));
    }

    #[test]
    fn equal_scores_yield_one_cluster_or_singletons() {
        // every pair scores 0.6; at τ ≤ 0.6 everything merges, above it nothing does
        let links = [("A", "B", 0.6), ("A", "C", 0.6), ("A", "D", 0.6), ("B", "C", 0.6), ("B", "D", 0.6), ("C", "D", 0.6)];
        let w = window(&[&["A", "B"], &["C", "D"]], &links, 4);
        let out = tune_threshold(&[w], 0.5, Algorithm::HcSingle, 100.0).unwrap();
        // one cluster: h = 0, c = 1 → v = 0; all singletons: h = 1,
        // c = 1 − H(K|C)/H(K) = 1 − ln 2 / ln 4 = 0.5 → v = 2/3
        for (t, v) in &out.candidates {
            let expected = if *t <= 0.6 { 0.0 } else { 2.0 / 3.0 };
            assert!((v - expected).abs() < 1e-12, "τ {t}: {v}");
        }
        assert!(out.threshold > 0.6);
        assert!((out.v_measure - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn windows_without_links_are_rejected() {
        let w = window(&[&["A"], &["B"]], &[], 2);
        assert_eq!(
            tune_threshold(&[w], 0.5, Algorithm::Tdfs, 10.0),
            Err(ClusteringError::NoDevWindows)
        );
    }
}
