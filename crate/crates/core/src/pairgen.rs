//! Labeled training pairs and inference candidates within a window.
//!
//! Positives are time-adjacent members of one gold chain. Every other
//! ordered pair inside the window is a negative of exactly one kind.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chain, Corpus, SubtopicWindow};
use crate::util::{derive_seed, fnv1a64, seeded_rng, SECONDS_PER_HOUR};

#[derive(Debug, Error)]
pub enum PairgenError {
    #[error("max_gap_hours must be positive, got {0}")]
    InvalidGap(f64),
    #[error("negative ratio must be at least 1")]
    InvalidRatio,
    #[error("cannot write pair dump {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    CrossChain,
    ReverseOrder,
    NonAdjacent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub a: String,
    pub b: String,
    pub label: Label,
    #[serde(rename = "kind")]
    pub negative_kind: Option<NegativeKind>,
}

impl LabeledPair {
    pub fn is_positive(&self) -> bool {
        self.label == Label::Positive
    }

    pub fn target(&self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSplit {
    Train,
    Dev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub train_neg_ratio: usize,
    pub dev_neg_ratio: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            train_neg_ratio: 20,
            dev_neg_ratio: 1,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), PairgenError> {
        if self.train_neg_ratio == 0 || self.dev_neg_ratio == 0 {
            return Err(PairgenError::InvalidRatio);
        }
        Ok(())
    }

    fn ratio(&self, split: SampleSplit) -> usize {
        match split {
            SampleSplit::Train => self.train_neg_ratio,
            SampleSplit::Dev => self.dev_neg_ratio,
        }
    }
}

/// Chains restricted to the window's members, in stored order; chains with
/// no member inside the window disappear.
pub fn clip_chains(window: &SubtopicWindow, chains: &[Chain]) -> Vec<Chain> {
    let inside: std::collections::HashSet<&str> =
        window.record_ids.iter().map(String::as_str).collect();
    chains
        .iter()
        .filter_map(|c| {
            let members: Vec<String> = c
                .record_ids
                .iter()
                .filter(|id| inside.contains(id.as_str()))
                .cloned()
                .collect();
            (!members.is_empty()).then(|| Chain::new(c.chain_id.clone(), members))
        })
        .collect()
}

/// All ordered pairs of the window, each labeled once. Gold chains are
/// clipped to the window first; records outside every chain are singletons.
/// Within a chain, stored order decides adjacency and direction.
pub fn enumerate_labeled_pairs(window: &SubtopicWindow, gold: &[Chain]) -> Vec<LabeledPair> {
    let clipped = clip_chains(window, gold);
    let position: HashMap<&str, (usize, usize)> = clipped
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            c.record_ids
                .iter()
                .enumerate()
                .map(move |(pos, id)| (id.as_str(), (ci, pos)))
        })
        .collect();

    let ids = &window.record_ids;
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1));
    for a in ids {
        for b in ids {
            if a == b {
                continue;
            }
            let kind = match (position.get(a.as_str()), position.get(b.as_str())) {
                (Some(&(ca, pa)), Some(&(cb, pb))) if ca == cb => {
                    if pb == pa + 1 {
                        None
                    } else if pb > pa {
                        Some(NegativeKind::NonAdjacent)
                    } else {
                        Some(NegativeKind::ReverseOrder)
                    }
                }
                _ => Some(NegativeKind::CrossChain),
            };
            out.push(LabeledPair {
                a: a.clone(),
                b: b.clone(),
                label: if kind.is_none() {
                    Label::Positive
                } else {
                    Label::Negative
                },
                negative_kind: kind,
            });
        }
    }
    out
}

/// Keeps every positive and a uniform sample of `ratio × positives`
/// negatives (all of them if fewer exist). Relative order is preserved.
/// A pair list without positives yields an empty sample.
pub fn sample_pairs(
    pairs: &[LabeledPair],
    config: &SamplingConfig,
    split: SampleSplit,
) -> Vec<LabeledPair> {
    let n_pos = pairs.iter().filter(|p| p.is_positive()).count();
    let negatives: Vec<usize> = (0..pairs.len())
        .filter(|&i| !pairs[i].is_positive())
        .collect();
    let want = (n_pos * config.ratio(split)).min(negatives.len());
    let mut rng = seeded_rng(config.seed);
    let mut keep = vec![false; pairs.len()];
    for k in sample(&mut rng, negatives.len(), want) {
        keep[negatives[k]] = true;
    }
    pairs
        .iter()
        .zip(keep)
        .filter(|(p, kept)| p.is_positive() || *kept)
        .map(|(p, _)| p.clone())
        .collect()
}

/// Enumerates and samples each window with its own seed derived from
/// `config.seed` and the window id, concatenating in the given order.
pub fn sample_windows(
    windows: &[SubtopicWindow],
    gold: &[Chain],
    config: &SamplingConfig,
    split: SampleSplit,
) -> Vec<LabeledPair> {
    windows
        .iter()
        .flat_map(|w| {
            let per_window = SamplingConfig {
                seed: derive_seed(config.seed, &[fnv1a64(w.id().as_bytes())]),
                ..*config
            };
            sample_pairs(&enumerate_labeled_pairs(w, gold), &per_window, split)
        })
        .collect()
}

/// Forward pairs `(a, b)` in `(timestamp, record_id)` order whose time gap is
/// at most `max_gap_hours` (which may be infinite).
pub fn candidate_pairs_for_inference(
    corpus: &Corpus,
    window: &SubtopicWindow,
    max_gap_hours: f64,
) -> Result<Vec<(String, String)>, PairgenError> {
    if !(max_gap_hours > 0.0) {
        return Err(PairgenError::InvalidGap(max_gap_hours));
    }
    let timed = corpus.timed(&window.record_ids);
    let max_gap = max_gap_hours * SECONDS_PER_HOUR;
    let mut out = Vec::new();
    for (i, a) in timed.iter().enumerate() {
        for b in &timed[i + 1..] {
            if (b.timestamp - a.timestamp) as f64 > max_gap {
                break;
            }
            out.push((a.id.clone(), b.id.clone()));
        }
    }
    Ok(out)
}

/// Debug dump: one `{a, b, label, kind}` object per line.
pub fn write_pair_dump(path: &Path, pairs: &[LabeledPair]) -> Result<(), PairgenError> {
    let io_err = |source| PairgenError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for pair in pairs {
        serde_json::to_writer(&mut out, pair).expect("pair serializes");
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
