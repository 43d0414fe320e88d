//! Coreference and clustering evaluation.
//!
//! All partition metrics operate on a [`PartitionPair`] whose universe is
//! the set of records in non-singleton gold chains. Per-metric functions
//! return ratios in `[0, 1]`; [`ScoreReport`] carries percentages for the
//! coreference scores and ratios for the clustering scores.

mod assignment;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Chain;

pub use assignment::max_weight_assignment;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold partition has no multi-record chains; metrics undefined")]
    EmptyUniverse,
    #[error("no window produced defined metrics")]
    NothingToAggregate,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("empty score list")]
    Empty,
}

/// Gold and system partitions over a shared universe of record ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPair {
    pub gold: Vec<Vec<String>>,
    pub system: Vec<Vec<String>>,
    pub universe: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_ratios(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Drops gold singletons, restricts system chains to the remaining gold
/// members and removes system chains left empty. System chains reduced to
/// one record stay as system singletons.
pub fn strip_singletons(gold: &[Chain], system: &[Chain]) -> Result<PartitionPair, MetricsError> {
    let gold: Vec<Vec<String>> = gold
        .iter()
        .filter(|c| c.len() > 1)
        .map(|c| c.record_ids.clone())
        .collect();
    let universe: BTreeSet<String> = gold.iter().flatten().cloned().collect();
    if universe.is_empty() {
        return Err(MetricsError::EmptyUniverse);
    }
    let system = system
        .iter()
        .map(|c| {
            c.record_ids
                .iter()
                .filter(|id| universe.contains(*id))
                .cloned()
                .collect::<Vec<_>>()
        })
        .filter(|c| !c.is_empty())
        .collect();
    Ok(PartitionPair {
        gold,
        system,
        universe,
    })
}

fn membership(chains: &[Vec<String>]) -> HashMap<&str, usize> {
    chains
        .iter()
        .enumerate()
        .flat_map(|(k, c)| c.iter().map(move |id| (id.as_str(), k)))
        .collect()
}

/// Σ (|k| − p(k)) / Σ (|k| − 1) where p(k) counts the parts of `key` chain k
/// is split into by `response`; members missing from `response` each form
/// their own part.
fn muc_side(key: &[Vec<String>], response: &[Vec<String>]) -> f64 {
    let owner = membership(response);
    let (mut num, mut den) = (0usize, 0usize);
    for chain in key {
        let mut parts = BTreeSet::new();
        let mut loose = 0;
        for id in chain {
            match owner.get(id.as_str()) {
                Some(&k) => {
                    parts.insert(k);
                }
                None => loose += 1,
            }
        }
        num += chain.len() - (parts.len() + loose);
        den += chain.len() - 1;
    }
    ratio(num as f64, den as f64)
}

pub fn muc(pair: &PartitionPair) -> Prf {
    Prf::from_ratios(muc_side(&pair.system, &pair.gold), muc_side(&pair.gold, &pair.system))
}

/// The chain holding `m`, if any.
fn cluster_of<'a>(
    m: &str,
    owner: &HashMap<&str, usize>,
    chains: &'a [Vec<String>],
) -> Option<&'a Vec<String>> {
    owner.get(m).map(|&k| &chains[k])
}

pub fn b_cubed(pair: &PartitionPair) -> Prf {
    let gold_of = membership(&pair.gold);
    let sys_of = membership(&pair.system);
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for m in &pair.universe {
        let g = cluster_of(m, &gold_of, &pair.gold);
        let s = cluster_of(m, &sys_of, &pair.system);
        let overlap = match (g, s) {
            (Some(_), Some(s)) => s
                .iter()
                .filter(|x| gold_of.get(x.as_str()) == gold_of.get(m.as_str()))
                .count(),
            _ => 1,
        };
        let g_len = g.map_or(1, Vec::len);
        let s_len = s.map_or(1, Vec::len);
        r_sum += overlap as f64 / g_len as f64;
        p_sum += overlap as f64 / s_len as f64;
    }
    let n = pair.universe.len() as f64;
    Prf::from_ratios(ratio(p_sum, n), ratio(r_sum, n))
}

/// `2 |g ∩ s| / (|g| + |s|)`.
pub fn phi4(g: &[String], s: &[String]) -> f64 {
    let gs: BTreeSet<&String> = g.iter().collect();
    let common = s.iter().filter(|x| gs.contains(x)).count();
    2.0 * common as f64 / (g.len() + s.len()) as f64
}

/// Total φ4 similarity of the optimal one-to-one chain alignment.
pub fn ceaf_e_similarity(pair: &PartitionPair) -> f64 {
    let weights: Vec<Vec<f64>> = pair
        .gold
        .iter()
        .map(|g| pair.system.iter().map(|s| phi4(g, s)).collect())
        .collect();
    let assignment = max_weight_assignment(&weights);
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| weights[i][j]))
        .sum()
}

pub fn ceaf_e(pair: &PartitionPair) -> Prf {
    let total = ceaf_e_similarity(pair);
    Prf::from_ratios(
        ratio(total, pair.system.len() as f64),
        ratio(total, pair.gold.len() as f64),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Entropy-based clustering agreement on the universe; members missing from
/// the system partition are treated as system singletons.
pub fn v_measure(pair: &PartitionPair) -> VMeasure {
    let gold_of = membership(&pair.gold);
    let sys_of = membership(&pair.system);
    let n_sys = pair.system.len();
    // ordered maps keep the floating-point summation order fixed
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut gold_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sys_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut extra = 0;
    for m in &pair.universe {
        let g = gold_of.get(m.as_str()).copied().unwrap_or(usize::MAX);
        let s = sys_of.get(m.as_str()).copied().unwrap_or_else(|| {
            extra += 1;
            n_sys + extra
        });
        *joint.entry((g, s)).or_default() += 1;
        *gold_counts.entry(g).or_default() += 1;
        *sys_counts.entry(s).or_default() += 1;
    }
    let n = pair.universe.len() as f64;
    let h_gold = entropy(gold_counts.values().copied(), n);
    let h_sys = entropy(sys_counts.values().copied(), n);
    // H(C|K) = -Σ n_ck/n ln(n_ck/n_k)
    let conditional = |given: &BTreeMap<usize, usize>, pick: fn(&(usize, usize)) -> usize| -> f64 {
        joint
            .iter()
            .map(|(key, &c)| {
                let c = c as f64;
                -(c / n) * (c / given[&pick(key)] as f64).ln()
            })
            .sum()
    };
    let h_gold_given_sys = conditional(&sys_counts, |k| k.1);
    let h_sys_given_gold = conditional(&gold_counts, |k| k.0);
    let homogeneity = if h_gold == 0.0 {
        1.0
    } else {
        1.0 - h_gold_given_sys / h_gold
    };
    let completeness = if h_sys == 0.0 {
        1.0
    } else {
        1.0 - h_sys_given_gold / h_sys
    };
    VMeasure {
        homogeneity,
        completeness,
        v_measure: harmonic(homogeneity, completeness),
    }
}

/// Confusion-matrix precision/recall/F1 predicting positive at `score ≥ threshold`.
pub fn binary_prf(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Prf, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Prf::from_ratios(
        ratio(tp as f64, (tp + fp) as f64),
        ratio(tp as f64, (tp + fn_) as f64),
    ))
}

/// Coreference scores in percent, clustering scores as ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub muc_p: f64,
    pub muc_r: f64,
    pub muc_f1: f64,
    pub b3_p: f64,
    pub b3_r: f64,
    pub b3_f1: f64,
    pub ceafe_p: f64,
    pub ceafe_r: f64,
    pub ceafe_f1: f64,
    pub conll_f1: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

impl ScoreReport {
    pub fn from_pair(pair: &PartitionPair) -> Self {
        let m = muc(pair);
        let b = b_cubed(pair);
        let c = ceaf_e(pair);
        let v = v_measure(pair);
        Self {
            muc_p: 100.0 * m.precision,
            muc_r: 100.0 * m.recall,
            muc_f1: 100.0 * m.f1,
            b3_p: 100.0 * b.precision,
            b3_r: 100.0 * b.recall,
            b3_f1: 100.0 * b.f1,
            ceafe_p: 100.0 * c.precision,
            ceafe_r: 100.0 * c.recall,
            ceafe_f1: 100.0 * c.f1,
            conll_f1: 100.0 * (m.f1 + b.f1 + c.f1) / 3.0,
            homogeneity: v.homogeneity,
            completeness: v.completeness,
            v_measure: v.v_measure,
        }
    }

    fn fields(&self) -> [f64; 13] {
        [
            self.muc_p,
            self.muc_r,
            self.muc_f1,
            self.b3_p,
            self.b3_r,
            self.b3_f1,
            self.ceafe_p,
            self.ceafe_r,
            self.ceafe_f1,
            self.conll_f1,
            self.homogeneity,
            self.completeness,
            self.v_measure,
        ]
    }

    fn from_fields(f: [f64; 13]) -> Self {
        Self {
            muc_p: f[0],
            muc_r: f[1],
            muc_f1: f[2],
            b3_p: f[3],
            b3_r: f[4],
            b3_f1: f[5],
            ceafe_p: f[6],
            ceafe_r: f[7],
            ceafe_f1: f[8],
            conll_f1: f[9],
            homogeneity: f[10],
            completeness: f[11],
            v_measure: f[12],
        }
    }
}

/// Strips gold singletons and scores; `Err(EmptyUniverse)` marks the
/// metrics as undefined for this gold partition.
pub fn evaluate_partition(gold: &[Chain], system: &[Chain]) -> Result<ScoreReport, MetricsError> {
    strip_singletons(gold, system).map(|pair| ScoreReport::from_pair(&pair))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    #[serde(flatten)]
    pub scores: ScoreReport,
    pub defined_count: usize,
    pub excluded_count: usize,
}

/// Unweighted mean over defined reports; `None` entries are excluded and
/// counted.
pub fn aggregate(reports: &[Option<ScoreReport>]) -> Result<AggregateReport, MetricsError> {
    let defined: Vec<&ScoreReport> = reports.iter().flatten().collect();
    if defined.is_empty() {
        return Err(MetricsError::NothingToAggregate);
    }
    let n = defined.len() as f64;
    let mut sums = [0.0; 13];
    for r in &defined {
        for (acc, x) in sums.iter_mut().zip(r.fields()) {
            *acc += x;
        }
    }
    let mut scores = ScoreReport::from_fields(sums.map(|s| s / n));
    scores.conll_f1 = (scores.muc_f1 + scores.b3_f1 + scores.ceafe_f1) / 3.0;
    Ok(AggregateReport {
        scores,
        defined_count: defined.len(),
        excluded_count: reports.len() - defined.len(),
    })
}
