//! Synthetic shift logs with planted link signal.
//!
//! Each topic draws chains whose members share an FL code (or a sibling
//! code), a small set of story tokens and the equipment noun. Timestamps
//! follow a right-skewed gap model with configurable quartiles. Records
//! that belong to no multi-record chain act as distractors drawn from the
//! same topic vocabulary.

use std::collections::{BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chain, Corpus, CorpusError, Record, SubtopicWindow, Timestamp};
use crate::pairgen::candidate_pairs_for_inference;
use crate::scorer::{PairScorer, PairScores, ScorerError};
use crate::util::{derive_seed, seeded_rng, SECONDS_PER_HOUR};

/// Upper standard-normal quartile, `Φ⁻¹(0.75)`.
const NORMAL_Q3: f64 = 0.674_489_750_196_081_7;
const SHIFT_SECONDS: i64 = 8 * 3600;
/// Values per inner FL segment.
const FL_FANOUT: usize = 8;
/// Values of the last FL segment.
const FL_LEAF_FANOUT: usize = 40;

const EQUIPMENT: &[&str] = &[
    "pumpe", "ventil", "motor", "lager", "sensor", "kessel", "foerderband", "walze", "getriebe",
    "filter", "kupplung", "dichtung", "schieber", "antrieb", "kompressor", "heizung",
];
const PROBLEMS: &[&str] = &[
    "leckt", "blockiert", "ueberhitzt", "vibriert", "ausgefallen", "verschmutzt", "undicht",
    "klemmt", "quietscht", "stoerung",
];
const ACTIONS: &[&str] = &[
    "getauscht", "gereinigt", "nachgezogen", "geprueft", "justiert", "repariert", "geschmiert",
    "erneuert", "eingestellt", "freigegeben",
];
const UNITS: &[&str] = &["bar", "grad", "mm", "upm", "ampere", "liter"];
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "w", "z", "sch", "st", "kr", "pl",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ei", "au", "ie"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("oracle scores need gold chains")]
    NoGoldChains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_topics: usize,
    /// Chains per topic, singletons included.
    pub chains_per_topic: usize,
    pub singleton_fraction: f64,
    /// Mean size of multi-record chains; sizes are `2 + K` with `K`
    /// geometric, truncated at `max_chain_size`.
    pub mean_chain_size: f64,
    pub max_chain_size: usize,
    /// Target quartiles of the gap between consecutive chain members, hours.
    pub gap_quartiles_hours: [f64; 3],
    pub min_gap_hours: f64,
    /// Chain start times are uniform over this many days.
    pub span_days: f64,
    pub start_timestamp: Timestamp,
    pub vocabulary_size: usize,
    /// Content tokens shared along a chain.
    pub story_tokens: usize,
    /// Random topic tokens added to every record.
    pub filler_tokens: usize,
    /// Segments per FL code, the first naming the plant.
    pub fl_depth: usize,
    pub missing_fl_rate: f64,
    /// Probability that a chain member keeps each shared token and the
    /// exact chain FL code.
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_topics: 2,
            chains_per_topic: 500,
            singleton_fraction: 0.89,
            mean_chain_size: 2.72,
            max_chain_size: 20,
            gap_quartiles_hours: [2.0, 21.0, 111.7],
            min_gap_hours: 0.05,
            span_days: 365.0,
            // 2021-01-01T00:00:00Z
            start_timestamp: 1_609_459_200,
            vocabulary_size: 400,
            story_tokens: 5,
            filler_tokens: 3,
            fl_depth: 4,
            missing_fl_rate: 0.05,
            signal_strength: 0.9,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Invalid(msg));
        for (name, v) in [
            ("singleton_fraction", self.singleton_fraction),
            ("missing_fl_rate", self.missing_fl_rate),
            ("signal_strength", self.signal_strength),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.n_topics == 0 || self.chains_per_topic == 0 {
            return bad("n_topics and chains_per_topic must be positive".into());
        }
        if self.singleton_fraction >= 1.0 {
            return bad("singleton_fraction 1 leaves no multi-record chains to draw".into());
        }
        if self.max_chain_size < 2 {
            return bad(format!("max_chain_size must be at least 2, got {}", self.max_chain_size));
        }
        // the truncated geometric mean approaches the uniform mean as q → 1
        let extra = self.mean_chain_size - 2.0;
        let max_extra = (self.max_chain_size - 2) as f64;
        if !(extra == 0.0 || (extra > 0.0 && extra < max_extra / 2.0)) {
            return bad(format!(
                "mean_chain_size {} not reachable with sizes in [2, {}]",
                self.mean_chain_size, self.max_chain_size
            ));
        }
        let [q1, q2, q3] = self.gap_quartiles_hours;
        if !(q1 > 0.0 && q1 < q2 && q2 < q3 && q3.is_finite()) {
            return bad(format!("gap quartiles must be positive and increasing, got {q1}, {q2}, {q3}"));
        }
        if !(self.min_gap_hours > 0.0 && self.min_gap_hours < q1) {
            return bad(format!("min_gap_hours must lie in (0, q1), got {}", self.min_gap_hours));
        }
        if !(self.span_days > 0.0 && self.span_days.is_finite()) {
            return bad(format!("span_days must be positive, got {}", self.span_days));
        }
        if self.fl_depth < 2 {
            return bad(format!("fl_depth must be at least 2, got {}", self.fl_depth));
        }
        if self.vocabulary_size < self.story_tokens + self.filler_tokens + 1 {
            return bad(format!(
                "vocabulary_size {} too small for {} story and {} filler tokens",
                self.vocabulary_size, self.story_tokens, self.filler_tokens
            ));
        }
        Ok(())
    }
}

/// Two-piece log-normal: the median fixes `μ`, the lower and upper
/// quartiles fix the spread on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapModel {
    pub mu: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
}

impl GapModel {
    pub fn from_quartiles([q1, q2, q3]: [f64; 3]) -> Self {
        Self {
            mu: q2.ln(),
            sigma_low: (q2 / q1).ln() / NORMAL_Q3,
            sigma_high: (q3 / q2).ln() / NORMAL_Q3,
        }
    }

    pub fn sample_hours(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let sigma = if z < 0.0 { self.sigma_low } else { self.sigma_high };
        (self.mu + sigma * z).exp()
    }
}

/// Ratio `q` of the geometric extra-size distribution on `0..=max_extra`
/// whose mean is `target`, by bisection.
fn truncated_geometric_ratio(target: f64, max_extra: usize) -> f64 {
    let mean = |q: f64| {
        let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
        for k in 0..=max_extra {
            num += k as f64 * w;
            den += w;
            w *= q;
        }
        num / den
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sample_extra(rng: &mut impl Rng, q: f64, max_extra: usize) -> usize {
    let mut k = 0;
    while k < max_extra && rng.random::<f64>() < q {
        k += 1;
    }
    k
}

fn topic_vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut words = BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let syllables = rng.random_range(2..=3);
        let word: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap()))
            .collect();
        if words.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

fn random_fl_segments(rng: &mut ChaCha8Rng, depth: usize) -> Vec<usize> {
    (1..depth)
        .map(|level| {
            let fanout = if level + 1 == depth { FL_LEAF_FANOUT } else { FL_FANOUT };
            rng.random_range(0..fanout)
        })
        .collect()
}

fn format_fl(plant: usize, segments: &[usize]) -> String {
    let mut code = format!("P{plant:02}");
    let last = segments.len().saturating_sub(1);
    for (level, v) in segments.iter().enumerate() {
        if level == last {
            code.push_str(&format!("-{v:03}"));
        } else {
            code.push_str(&format!("-{}{v}", (b'A' + level as u8) as char));
        }
    }
    code
}

/// Same code up to the last segment, which is redrawn to differ.
fn sibling_fl(rng: &mut ChaCha8Rng, segments: &[usize]) -> Vec<usize> {
    let mut out = segments.to_vec();
    let last = out.len() - 1;
    let shift = rng.random_range(1..FL_LEAF_FANOUT);
    out[last] = (out[last] + shift) % FL_LEAF_FANOUT;
    out
}

struct DraftRecord {
    timestamp: Timestamp,
    chain: usize,
    position: usize,
    text: String,
    fl_code: Option<String>,
}

struct TopicDraft {
    records: Vec<DraftRecord>,
    n_chains: usize,
}

fn draft_topic(spec: &SynthSpec, topic: usize) -> TopicDraft {
    let mut rng = seeded_rng(derive_seed(spec.seed, &[topic as u64]));
    let vocab = topic_vocabulary(&mut rng, spec.vocabulary_size);
    let gaps = GapModel::from_quartiles(spec.gap_quartiles_hours);
    let max_extra = spec.max_chain_size - 2;
    let q = truncated_geometric_ratio(spec.mean_chain_size - 2.0, max_extra);
    let span = (spec.span_days * 24.0 * SECONDS_PER_HOUR) as i64;
    let plant = topic + 1;
    let s = spec.signal_strength;

    let mut records = Vec::new();
    for chain in 0..spec.chains_per_topic {
        let size = if rng.random::<f64>() < spec.singleton_fraction {
            1
        } else {
            2 + sample_extra(&mut rng, q, max_extra)
        };
        let equipment = *EQUIPMENT.choose(&mut rng).unwrap();
        let problem = *PROBLEMS.choose(&mut rng).unwrap();
        let story: Vec<&str> = vocab
            .choose_multiple(&mut rng, spec.story_tokens)
            .map(String::as_str)
            .collect();
        let segments = random_fl_segments(&mut rng, spec.fl_depth);
        let mut ts = spec.start_timestamp + rng.random_range(0..span.max(1));
        for position in 0..size {
            if position > 0 {
                let hours = gaps.sample_hours(&mut rng).max(spec.min_gap_hours);
                ts += ((hours * SECONDS_PER_HOUR).round() as i64).max(1);
            }
            let mut tokens: Vec<String> = Vec::new();
            tokens.push(equipment.to_string());
            if position == 0 {
                tokens.push(problem.to_string());
            } else {
                tokens.push(ACTIONS.choose(&mut rng).unwrap().to_string());
            }
            for &tok in &story {
                let kept = position == 0 || rng.random::<f64>() < s;
                tokens.push(if kept { tok.to_string() } else { vocab.choose(&mut rng).unwrap().clone() });
            }
            for _ in 0..spec.filler_tokens {
                tokens.push(vocab.choose(&mut rng).unwrap().clone());
            }
            tokens.push(format!("{}{}", rng.random_range(1..200), UNITS.choose(&mut rng).unwrap()));
            let fl_code = if rng.random::<f64>() < spec.missing_fl_rate {
                None
            } else if position == 0 || rng.random::<f64>() < s {
                Some(format_fl(plant, &segments))
            } else {
                Some(format_fl(plant, &sibling_fl(&mut rng, &segments)))
            };
            records.push(DraftRecord {
                timestamp: ts,
                chain,
                position,
                text: tokens.join(" "),
                fl_code,
            });
        }
    }
    TopicDraft {
        records,
        n_chains: spec.chains_per_topic,
    }
}

/// Topic id for the zero-based topic index.
pub fn topic_id(index: usize) -> String {
    format!("plant{:02}", index + 1)
}

fn finish_topic(spec: &SynthSpec, topic: usize, mut draft: TopicDraft) -> (Vec<Record>, Vec<Chain>) {
    let tid = topic_id(topic);
    draft
        .records
        .sort_by_key(|r| (r.timestamp, r.chain, r.position));
    let mut members: Vec<Vec<String>> = vec![Vec::new(); draft.n_chains];
    let mut starts: Vec<Timestamp> = vec![Timestamp::MAX; draft.n_chains];
    let mut records = Vec::with_capacity(draft.records.len());
    for (n, r) in draft.records.into_iter().enumerate() {
        let id = format!("{tid}-r{n:06}");
        members[r.chain].push(id.clone());
        starts[r.chain] = starts[r.chain].min(r.timestamp);
        let shift = (r.timestamp - spec.start_timestamp).div_euclid(SHIFT_SECONDS);
        records.push(Record {
            record_id: id,
            topic_id: tid.clone(),
            document_id: format!("{tid}-s{shift:05}"),
            timestamp: r.timestamp,
            text: r.text,
            fl_code: r.fl_code,
            attributes: Default::default(),
        });
    }
    // record ids already follow time order, so the first member orders chains
    let mut order: Vec<usize> = (0..draft.n_chains).collect();
    order.sort_by(|&a, &b| (starts[a], &members[a][0]).cmp(&(starts[b], &members[b][0])));
    let chains = order
        .into_iter()
        .enumerate()
        .map(|(n, c)| Chain::new(format!("{tid}-c{n:05}"), std::mem::take(&mut members[c])))
        .collect();
    (records, chains)
}

/// Generates a corpus with gold chains. Topics are generated in parallel
/// from per-topic seeds, so output does not depend on thread count.
pub fn generate(spec: &SynthSpec) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let parts: Vec<(Vec<Record>, Vec<Chain>)> = (0..spec.n_topics)
        .into_par_iter()
        .map(|t| finish_topic(spec, t, draft_topic(spec, t)))
        .collect();
    let mut records = Vec::new();
    let mut chains = Vec::new();
    for (r, c) in parts {
        records.extend(r);
        chains.extend(c);
    }
    Ok(Corpus::new(records, Some(chains))?)
}

/// Scores 1 for gold-adjacent forward pairs and 0 for everything else.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    adjacent: HashSet<(String, String)>,
}

impl OracleScorer {
    pub fn new(corpus: &Corpus) -> Result<Self, SynthError> {
        let gold = corpus.gold_chains().ok_or(SynthError::NoGoldChains)?;
        Ok(Self::from_chains(gold))
    }

    pub fn from_chains(chains: &[Chain]) -> Self {
        let adjacent = chains
            .iter()
            .flat_map(|c| c.record_ids.windows(2))
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect();
        Self { adjacent }
    }

    pub fn score(&self, a: &str, b: &str) -> f64 {
        if self.adjacent.contains(&(a.to_string(), b.to_string())) {
            1.0
        } else {
            0.0
        }
    }
}

impl PairScorer for OracleScorer {
    fn score_pairs(&self, _corpus: &Corpus, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        Ok(pairs.iter().map(|(a, b)| self.score(a, b)).collect())
    }
}

/// Oracle scores for every forward pair within `max_gap_hours` (may be
/// infinite) inside each topic.
pub fn oracle_scores(corpus: &Corpus, max_gap_hours: f64) -> Result<PairScores, SynthError> {
    let oracle = OracleScorer::new(corpus)?;
    let mut out = PairScores::new();
    for (topic, ids) in corpus.topics() {
        let window = SubtopicWindow {
            topic_id: topic.clone(),
            start: Timestamp::MIN,
            end: Timestamp::MAX,
            record_ids: ids.clone(),
        };
        let pairs = candidate_pairs_for_inference(corpus, &window, max_gap_hours)
            .map_err(|e| SynthError::Invalid(e.to_string()))?;
        for (a, b) in pairs {
            let s = oracle.score(&a, &b);
            out.insert(a, b, s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{tdfs_cluster, Algorithm, ClusterParams};
    use crate::corpus::test_support::{chain, record};
    use crate::corpus::{build_windows, save_corpus, load_corpus};
    use crate::encoding::tokenize;
    use crate::metrics::binary_prf;
    use crate::pairgen::{sample_windows, SampleSplit, SamplingConfig};
    use crate::scorer::select_threshold;
    use crate::util::quantile_linear;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_topics: 1,
            chains_per_topic: 1000,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn singleton_count_within_three_sigma() {
        let corpus = generate(&small(3)).unwrap();
        let chains = corpus.gold_chains().unwrap();
        assert_eq!(chains.len(), 1000);
        let singles = chains.iter().filter(|c| c.is_singleton()).count() as f64;
        let sigma = (1000.0 * 0.89 * 0.11_f64).sqrt();
        assert!((singles - 890.0).abs() <= 3.0 * sigma, "{singles} singletons");
    }

    #[test]
    fn gap_quartiles_near_targets() {
        let spec = SynthSpec {
            singleton_fraction: 0.0,
            ..small(5)
        };
        let corpus = generate(&spec).unwrap();
        let mut gaps: Vec<f64> = corpus
            .gold_chains()
            .unwrap()
            .iter()
            .flat_map(|c| {
                c.record_ids
                    .windows(2)
                    .map(|w| (corpus.timestamp(&w[1]).unwrap() - corpus.timestamp(&w[0]).unwrap()) as f64 / 3600.0)
                    .collect::<Vec<_>>()
            })
            .collect();
        assert!(gaps.len() >= 500);
        gaps.sort_by(f64::total_cmp);
        for (q, target) in [(0.25, 2.0), (0.5, 21.0), (0.75, 111.7)] {
            let got = quantile_linear(&gaps, q).unwrap();
            assert!((got / target - 1.0).abs() <= 0.25, "q{q}: {got} vs {target}");
        }
    }

    #[test]
    fn gap_model_quartiles_are_exact() {
        let m = GapModel::from_quartiles([2.0, 21.0, 111.7]);
        assert!(((m.mu - m.sigma_low * NORMAL_Q3).exp() - 2.0).abs() < 1e-9);
        assert!(((m.mu + m.sigma_high * NORMAL_Q3).exp() - 111.7).abs() < 1e-9);
    }

    #[test]
    fn chain_size_mean_near_target() {
        let spec = SynthSpec {
            singleton_fraction: 0.0,
            ..small(9)
        };
        let corpus = generate(&spec).unwrap();
        let sizes: Vec<f64> = corpus.gold_chains().unwrap().iter().map(|c| c.len() as f64).collect();
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        assert!((mean - 2.72).abs() < 0.1, "mean size {mean}");
        assert!(sizes.iter().all(|&s| (2.0..=20.0).contains(&s)));
    }

    #[test]
    fn truncated_geometric_hits_mean() {
        for (target, max) in [(0.72, 18), (0.0, 5), (1.5, 4)] {
            let q = truncated_geometric_ratio(target, max);
            let w: Vec<f64> = (0..=max).map(|k| q.powi(k as i32)).collect();
            let mean = w.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / w.iter().sum::<f64>();
            assert!((mean - target).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_topics: 3,
            chains_per_topic: 100,
            ..SynthSpec::default()
        };
        let mut files = Vec::new();
        for run in 0..2 {
            let r = dir.path().join(format!("r{run}.jsonl"));
            let c = dir.path().join(format!("c{run}.jsonl"));
            save_corpus(&generate(&spec).unwrap(), &r, Some(&c)).unwrap();
            files.push((std::fs::read(&r).unwrap(), std::fs::read(&c).unwrap()));
        }
        assert_eq!(files[0], files[1]);
        let other = generate(&SynthSpec { seed: 1, ..spec }).unwrap();
        let r = dir.path().join("other.jsonl");
        save_corpus(&other, &r, None).unwrap();
        assert_ne!(std::fs::read(&r).unwrap(), files[0].0);
    }

    #[test]
    fn round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&SynthSpec { chains_per_topic: 150, ..SynthSpec::default() }).unwrap();
        let (r, c) = (dir.path().join("r.jsonl"), dir.path().join("c.jsonl"));
        save_corpus(&corpus, &r, Some(&c)).unwrap();
        assert_eq!(load_corpus(&r, Some(&c)).unwrap(), corpus);
    }

    #[test]
    fn records_follow_id_and_document_conventions() {
        let corpus = generate(&SynthSpec { chains_per_topic: 80, ..SynthSpec::default() }).unwrap();
        assert_eq!(corpus.topics().len(), 2);
        for (topic, ids) in corpus.topics() {
            for (n, id) in ids.iter().enumerate() {
                assert_eq!(id, &format!("{topic}-r{n:06}"));
                let r = corpus.record(id).unwrap();
                let shift = (r.timestamp - 1_609_459_200) / SHIFT_SECONDS;
                assert_eq!(r.document_id, format!("{topic}-s{shift:05}"));
            }
        }
        for c in corpus.gold_chains().unwrap() {
            let ts: Vec<_> = c.record_ids.iter().map(|id| corpus.timestamp(id).unwrap()).collect();
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let cases = [
            SynthSpec { singleton_fraction: 1.0, ..SynthSpec::default() },
            SynthSpec { singleton_fraction: -0.1, ..SynthSpec::default() },
            SynthSpec { signal_strength: 1.5, ..SynthSpec::default() },
            SynthSpec { mean_chain_size: 1.5, ..SynthSpec::default() },
            SynthSpec { mean_chain_size: 12.0, max_chain_size: 10, ..SynthSpec::default() },
            SynthSpec { gap_quartiles_hours: [21.0, 2.0, 111.7], ..SynthSpec::default() },
            SynthSpec { fl_depth: 1, ..SynthSpec::default() },
            SynthSpec { vocabulary_size: 4, ..SynthSpec::default() },
            SynthSpec { chains_per_topic: 0, ..SynthSpec::default() },
        ];
        for spec in cases {
            assert!(matches!(generate(&spec), Err(SynthError::Invalid(_))), "{spec:?}");
        }
        let all_pairs = SynthSpec { mean_chain_size: 2.0, max_chain_size: 2, ..SynthSpec::default() };
        assert!(generate(&all_pairs).is_ok());
    }

    #[test]
    fn oracle_scores_on_small_chain() {
        let records = ["A", "B", "C"]
            .iter()
            .enumerate()
            .map(|(i, id)| record(id, "t", i as f64, "x"))
            .collect();
        let corpus = Corpus::new(records, Some(vec![chain("g", &["A", "B", "C"])])).unwrap();
        let s = oracle_scores(&corpus, f64::INFINITY).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.get("A", "B"), Some(1.0));
        assert_eq!(s.get("B", "C"), Some(1.0));
        assert_eq!(s.get("A", "C"), Some(0.0));
    }

    #[test]
    fn oracle_scores_singleton_topic_all_zero() {
        let records = (0..4).map(|i| record(&format!("s{i}"), "t", i as f64, "x")).collect();
        let corpus = Corpus::new(records, Some(vec![])).unwrap();
        let s = oracle_scores(&corpus, f64::INFINITY).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|(_, _, v)| v == 0.0));
        assert!(matches!(
            oracle_scores(&corpus.without_gold(), 1.0),
            Err(SynthError::NoGoldChains)
        ));
    }

    #[test]
    fn oracle_tdfs_recovers_gold() {
        let corpus = generate(&SynthSpec { chains_per_topic: 300, ..SynthSpec::default() }).unwrap();
        let scores = oracle_scores(&corpus, f64::INFINITY).unwrap();
        let params = ClusterParams {
            threshold: 0.5,
            max_gap_hours: f64::INFINITY,
            algorithm: Algorithm::Tdfs,
        };
        for topic in corpus.topics().keys() {
            let ids = corpus.topic_records(topic).unwrap();
            let topic_scores: PairScores = scores
                .iter()
                .filter(|(a, _, _)| corpus.record(a).unwrap().topic_id == *topic)
                .map(|(a, b, s)| ((a.to_string(), b.to_string()), s))
                .collect();
            let got: BTreeSet<Vec<String>> = tdfs_cluster(&topic_scores, &corpus.timed(ids), &params)
                .unwrap()
                .into_iter()
                .map(|c| c.record_ids)
                .collect();
            let want: BTreeSet<Vec<String>> = corpus
                .chains_with_singletons(topic)
                .unwrap()
                .into_iter()
                .map(|c| c.record_ids)
                .collect();
            assert_eq!(got, want);
        }
    }

    fn jaccard(a: &str, b: &str) -> f64 {
        let ta: BTreeSet<String> = tokenize(a).into_iter().collect();
        let tb: BTreeSet<String> = tokenize(b).into_iter().collect();
        ta.intersection(&tb).count() as f64 / ta.union(&tb).count() as f64
    }

    fn jaccard_pairs(spec: &SynthSpec, split: SampleSplit) -> (Vec<f64>, Vec<bool>) {
        let corpus = generate(spec).unwrap();
        let gold = corpus.gold_chains().unwrap();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for topic in corpus.topics().keys() {
            let windows = build_windows(&corpus, topic, 300.0, 0.5).unwrap();
            let cfg = SamplingConfig { seed: spec.seed, ..SamplingConfig::default() };
            for p in sample_windows(&windows, gold, &cfg, split) {
                let (a, b) = (corpus.record(&p.a).unwrap(), corpus.record(&p.b).unwrap());
                scores.push(jaccard(&a.text, &b.text));
                labels.push(p.is_positive());
            }
        }
        (scores, labels)
    }

    #[test]
    fn lexical_overlap_separates_links() {
        let spec = SynthSpec { signal_strength: 0.8, ..small(11) };
        let (train_s, train_y) = jaccard_pairs(&spec, SampleSplit::Train);
        let tau = select_threshold(&train_s, &train_y).unwrap().threshold;
        let (dev_s, dev_y) = jaccard_pairs(&SynthSpec { seed: 12, ..spec }, SampleSplit::Dev);
        let f1 = binary_prf(&dev_s, &dev_y, tau).unwrap().f1;
        assert!(f1 >= 0.8, "dev F1 {f1} at τ {tau}");
    }
}
