//! Chains from pairwise scores.
//!
//! [`tdfs_cluster`] grows chains forward in time by depth-first search over
//! the thresholded, gap-constrained score graph. [`hc_single_cluster`] takes
//! connected components of the thresholded graph. [`merge_chains`] joins
//! subchains from overlapping windows that share records.

mod tune;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chain, Corpus, TimedRecord, Timestamp};
use crate::scorer::PairScores;
use crate::util::SECONDS_PER_HOUR;

pub use tune::{threshold_grid, threshold_grid_raw, tune_threshold, ScoredWindow, TuneOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("score for ({a}, {b}) points backwards in time")]
    ReversePair { a: String, b: String },
    #[error("score references record `{0}` outside the clustered set")]
    UnknownRecord(String),
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("max_gap_hours must be positive, got {0}")]
    InvalidGap(f64),
    #[error("no dev window has multi-record gold chains")]
    NoDevWindows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Tdfs,
    HcSingle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub threshold: f64,
    pub max_gap_hours: f64,
    pub algorithm: Algorithm,
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusteringError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ClusteringError::InvalidThreshold(self.threshold));
        }
        if !(self.max_gap_hours > 0.0) {
            return Err(ClusteringError::InvalidGap(self.max_gap_hours));
        }
        Ok(())
    }
}

/// Deterministic id of a predicted chain, derived from its first member.
pub fn predicted_chain_id(first_record: &str) -> String {
    format!("chain:{first_record}")
}

fn make_chain(members: Vec<String>) -> Chain {
    Chain::new(predicted_chain_id(&members[0]), members)
}

/// Thresholded forward edges, indexed by position in `records`.
fn edges(
    scores: &PairScores,
    records: &[TimedRecord],
    threshold: f64,
) -> Result<Vec<(usize, usize, f64)>, ClusteringError> {
    let index: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let mut out = Vec::new();
    for (a, b, s) in scores.iter() {
        let ia = *index.get(a).ok_or_else(|| ClusteringError::UnknownRecord(a.to_string()))?;
        let ib = *index.get(b).ok_or_else(|| ClusteringError::UnknownRecord(b.to_string()))?;
        if records[ia] >= records[ib] {
            return Err(ClusteringError::ReversePair {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        if s >= threshold {
            out.push((ia, ib, s));
        }
    }
    Ok(out)
}

fn sorted_records(records: &[TimedRecord]) -> Vec<TimedRecord> {
    let mut r = records.to_vec();
    r.sort();
    r
}

/// Time-dependent depth-first clustering.
///
/// Seeds are taken in time order. From every record that joins the chain,
/// unassigned later records with `score ≥ τ` and gap `≤ Δmax` are visited
/// by descending score, then earlier timestamp, then record id, and each
/// visited record is expanded in turn. Every record ends up in exactly one
/// chain; unlinked records form singletons.
pub fn tdfs_cluster(
    scores: &PairScores,
    records: &[TimedRecord],
    params: &ClusterParams,
) -> Result<Vec<Chain>, ClusteringError> {
    params.validate()?;
    let records = sorted_records(records);
    let max_gap = params.max_gap_hours * SECONDS_PER_HOUR;
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); records.len()];
    for (a, b, s) in edges(scores, &records, params.threshold)? {
        if ((records[b].timestamp - records[a].timestamp) as f64) <= max_gap {
            adjacency[a].push((b, s));
        }
    }
    // records are sorted, so a smaller index means earlier (timestamp, id)
    for list in &mut adjacency {
        list.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    }

    let mut assigned = vec![false; records.len()];
    let mut chains = Vec::new();
    for seed in 0..records.len() {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut members = vec![seed];
        let mut stack: Vec<(usize, usize)> = vec![(seed, 0)];
        while let Some(top) = stack.last_mut() {
            let (node, next) = *top;
            match adjacency[node].get(next) {
                None => {
                    stack.pop();
                }
                Some(&(c, _)) => {
                    top.1 += 1;
                    if !assigned[c] {
                        assigned[c] = true;
                        members.push(c);
                        stack.push((c, 0));
                    }
                }
            }
        }
        members.sort_unstable();
        chains.push(make_chain(members.into_iter().map(|i| records[i].id.clone()).collect()));
    }
    Ok(chains)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller root so component roots are deterministic.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }

    /// Member lists per component, ordered by smallest member.
    fn components(&mut self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.parent.len() {
            let root = self.find(i);
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

/// Single-linkage clustering: connected components of the graph with an
/// edge wherever `score ≥ τ`.
pub fn hc_single_cluster(
    scores: &PairScores,
    records: &[TimedRecord],
    params: &ClusterParams,
) -> Result<Vec<Chain>, ClusteringError> {
    params.validate()?;
    let records = sorted_records(records);
    let mut uf = UnionFind::new(records.len());
    for (a, b, _) in edges(scores, &records, params.threshold)? {
        uf.union(a, b);
    }
    Ok(uf
        .components()
        .into_iter()
        .map(|c| make_chain(c.into_iter().map(|i| records[i].id.clone()).collect()))
        .collect())
}

pub fn cluster(
    scores: &PairScores,
    records: &[TimedRecord],
    params: &ClusterParams,
) -> Result<Vec<Chain>, ClusteringError> {
    match params.algorithm {
        Algorithm::Tdfs => tdfs_cluster(scores, records, params),
        Algorithm::HcSingle => hc_single_cluster(scores, records, params),
    }
}

/// Transitive union of chains sharing at least one record. Members are
/// deduplicated and ordered by `(timestamp, record_id)`; chains are ordered
/// by their first member.
pub fn merge_chains<F>(chains: &[Chain], timestamp: F) -> Vec<Chain>
where
    F: Fn(&str) -> Timestamp,
{
    let mut ids: Vec<TimedRecord> = chains
        .iter()
        .flat_map(|c| c.record_ids.iter())
        .map(|id| TimedRecord {
            timestamp: timestamp(id),
            id: id.clone(),
        })
        .collect();
    ids.sort();
    ids.dedup();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for c in chains {
        if let Some(first) = c.record_ids.first() {
            for other in &c.record_ids[1..] {
                uf.union(index[first.as_str()], index[other.as_str()]);
            }
        }
    }
    uf.components()
        .into_iter()
        .map(|c| make_chain(c.into_iter().map(|i| ids[i].id.clone()).collect()))
        .collect()
}

/// [`merge_chains`] with timestamps looked up in `corpus`.
pub fn merge_corpus_chains(corpus: &Corpus, chains: &[Chain]) -> Vec<Chain> {
    merge_chains(chains, |id| corpus.timestamp(id).unwrap_or(Timestamp::MAX))
}
