//! Stage wiring: window plans, pair preparation, training, threshold tuning,
//! linking and windowed evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    cluster, merge_corpus_chains, tune_threshold, Algorithm, ClusterParams, ClusteringError,
    ScoredWindow,
};
use crate::corpus::{
    build_windows, compute_time_stats, window_size_for_topic, Chain, Corpus, CorpusError,
    DataSplit, SplitPart, SubtopicWindow, TimeStats, DEFAULT_STRIDE_FRACTION,
};
use crate::encoding::{Encoder, EncodingError};
use crate::metrics::{aggregate, evaluate_partition, AggregateReport, MetricsError, ScoreReport};
use crate::pairgen::{clip_chains, sample_windows, LabeledPair, SampleSplit, SamplingConfig};
use crate::scorer::{
    score_matrix, select_threshold, train, ArchMode, LinkScore, PairScorer, PairScores,
    ScorerError, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("no topic has multi-record gold chains and no window size was configured")]
    NoStatistics,
    #[error("invalid window configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} split has no training pairs")]
    NoPairs(&'static str),
    #[error("gold universe is empty in every window; metrics are undefined")]
    NothingToEvaluate,
    #[error("predictions file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How the per-topic clustering gap limit is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxGapPolicy {
    /// Third quartile of the topic's gaps between consecutive chain members.
    BetweenRecordsQ3,
    /// The topic's window size, so only the window bounds links.
    Window,
    Hours(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub stride_fraction: f64,
    /// Fixed window size for every topic instead of the chain-duration rule.
    pub window_hours: Option<f64>,
    pub max_gap: MaxGapPolicy,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            stride_fraction: DEFAULT_STRIDE_FRACTION,
            window_hours: None,
            max_gap: MaxGapPolicy::BetweenRecordsQ3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicPlan {
    pub window_hours: f64,
    pub max_gap_hours: f64,
}

/// Window size and gap limit per topic, fixed once from a gold corpus and
/// reused by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub stride_fraction: f64,
    pub topics: BTreeMap<String, TopicPlan>,
    /// Used for topics absent from `topics`.
    pub fallback: TopicPlan,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl WindowPlan {
    pub fn from_corpus(corpus: &Corpus, config: &WindowConfig) -> Result<Self, PipelineError> {
        if !(config.stride_fraction > 0.0 && config.stride_fraction <= 1.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "stride_fraction must lie in (0, 1], got {}",
                config.stride_fraction
            )));
        }
        if let Some(w) = config.window_hours {
            if !(w.is_finite() && w > 0.0) {
                return Err(PipelineError::InvalidConfig(format!("window_hours must be positive, got {w}")));
            }
        }
        if let MaxGapPolicy::Hours(h) = config.max_gap {
            if !(h > 0.0) {
                return Err(PipelineError::InvalidConfig(format!("max_gap hours must be positive, got {h}")));
            }
        }
        let mut stats: BTreeMap<String, TimeStats> = BTreeMap::new();
        for topic in corpus.topics().keys() {
            match compute_time_stats(corpus, topic) {
                Ok(s) => {
                    stats.insert(topic.clone(), s);
                }
                Err(CorpusError::NoChainStatistics(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let all: Vec<TimeStats> = stats.values().copied().collect();
        let mean_window = mean(all.iter().map(|s| s.full_chain_hours_q3));
        let mean_gap = mean(all.iter().map(|s| s.between_records_hours_q3));

        let plan_for = |window: Option<f64>, gap_q3: Option<f64>| -> Result<TopicPlan, PipelineError> {
            let window_hours = config
                .window_hours
                .or(window)
                .ok_or(PipelineError::NoStatistics)?;
            // zero-length chains give a zero quartile; keep windows usable
            let window_hours = window_hours.max(1.0 / 60.0);
            let max_gap_hours = match config.max_gap {
                MaxGapPolicy::BetweenRecordsQ3 => gap_q3.ok_or(PipelineError::NoStatistics)?.max(1.0 / 3600.0),
                MaxGapPolicy::Window => window_hours,
                MaxGapPolicy::Hours(h) => h,
            };
            Ok(TopicPlan {
                window_hours,
                max_gap_hours,
            })
        };

        let fallback = plan_for(mean_window, mean_gap)?;
        let mut topics = BTreeMap::new();
        for topic in corpus.topics().keys() {
            let plan = match stats.get(topic) {
                Some(s) => plan_for(Some(window_size_for_topic(s, &all)), Some(s.between_records_hours_q3))?,
                None => fallback,
            };
            topics.insert(topic.clone(), plan);
        }
        Ok(Self {
            stride_fraction: config.stride_fraction,
            topics,
            fallback,
        })
    }

    pub fn for_topic(&self, topic: &str) -> TopicPlan {
        self.topics.get(topic).copied().unwrap_or(self.fallback)
    }

    /// Windows over every topic of `corpus`, topics in id order.
    pub fn windows(&self, corpus: &Corpus) -> Result<Vec<SubtopicWindow>, PipelineError> {
        let mut out = Vec::new();
        for topic in corpus.topics().keys() {
            let plan = self.for_topic(topic);
            out.extend(build_windows(corpus, topic, plan.window_hours, self.stride_fraction)?);
        }
        Ok(out)
    }
}

/// Corpus restricted to one split part.
pub fn split_corpus(corpus: &Corpus, split: &DataSplit, part: SplitPart) -> Result<Corpus, PipelineError> {
    Ok(corpus.subset_by_chains(split.part(part))?)
}

fn labeled_pairs(
    corpus: &Corpus,
    plan: &WindowPlan,
    sampling: &SamplingConfig,
    split: SampleSplit,
) -> Result<Vec<LabeledPair>, PipelineError> {
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let gold = corpus.gold_chains().ok_or(CorpusError::NoGoldChains)?;
    Ok(sample_windows(&plan.windows(corpus)?, gold, sampling, split))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPairs {
    pub train: Vec<LabeledPair>,
    pub dev: Vec<LabeledPair>,
}

/// Sampled training and dev pairs from the windows of each split part.
pub fn prepare_pairs(
    corpus: &Corpus,
    split: &DataSplit,
    plan: &WindowPlan,
    sampling: &SamplingConfig,
) -> Result<PreparedPairs, PipelineError> {
    sampling
        .validate()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    let train_corpus = split_corpus(corpus, split, SplitPart::Train)?;
    let dev_corpus = split_corpus(corpus, split, SplitPart::Dev)?;
    Ok(PreparedPairs {
        train: labeled_pairs(&train_corpus, plan, sampling, SampleSplit::Train)?,
        dev: labeled_pairs(&dev_corpus, plan, sampling, SampleSplit::Dev)?,
    })
}

/// Prepares pairs and trains a scorer on them.
pub fn train_model(
    corpus: &Corpus,
    pairs: &PreparedPairs,
    arch: ArchMode,
    encoder: &dyn Encoder,
    config: &TrainConfig,
) -> Result<TrainOutcome, PipelineError> {
    if pairs.train.is_empty() {
        return Err(PipelineError::NoPairs("train"));
    }
    if pairs.dev.is_empty() {
        return Err(PipelineError::NoPairs("dev"));
    }
    Ok(train(corpus, &pairs.train, &pairs.dev, arch, encoder, config)?)
}

/// Scores of every window's candidate pairs under the window plan.
pub fn score_windows(
    scorer: &dyn PairScorer,
    corpus: &Corpus,
    plan: &WindowPlan,
) -> Result<Vec<(SubtopicWindow, PairScores)>, PipelineError> {
    plan.windows(corpus)?
        .into_iter()
        .map(|w| {
            let gap = plan.for_topic(&w.topic_id).max_gap_hours;
            let scores = score_matrix(scorer, corpus, &w, gap)?;
            Ok((w, scores))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    /// Pair threshold with the best dev F1.
    pub tau0: f64,
    pub dev_pair_f1: f64,
    /// Clustering threshold with the best mean dev v-measure.
    pub threshold: f64,
    pub v_measure: f64,
    pub candidates: Vec<(f64, f64)>,
    pub excluded_windows: usize,
    pub algorithm: Algorithm,
    pub plan: WindowPlan,
}

/// Picks `τ₀` on the dev pairs, then sweeps the clustering threshold grid
/// over the dev windows.
pub fn tune(
    scorer: &dyn PairScorer,
    corpus: &Corpus,
    split: &DataSplit,
    dev_pairs: &[LabeledPair],
    plan: &WindowPlan,
    algorithm: Algorithm,
) -> Result<TuneReport, PipelineError> {
    if dev_pairs.is_empty() {
        return Err(PipelineError::NoPairs("dev"));
    }
    let ab: Vec<(String, String)> = dev_pairs.iter().map(|p| (p.a.clone(), p.b.clone())).collect();
    let labels: Vec<bool> = dev_pairs.iter().map(LabeledPair::is_positive).collect();
    let pair_scores = scorer.score_pairs(corpus, &ab)?;
    let choice = select_threshold(&pair_scores, &labels)?;

    let dev = split_corpus(corpus, split, SplitPart::Dev)?;
    let mut windows = Vec::new();
    for (w, scores) in score_windows(scorer, &dev, plan)? {
        let gold = clip_chains(&w, &dev.chains_with_singletons(&w.topic_id)?);
        windows.push(ScoredWindow {
            records: dev.timed(&w.record_ids),
            scores,
            gold,
        });
    }
    // score maps already respect each topic's gap limit
    let outcome = tune_threshold(&windows, choice.threshold, algorithm, f64::INFINITY)?;
    Ok(TuneReport {
        tau0: choice.threshold,
        dev_pair_f1: choice.f1,
        threshold: outcome.threshold,
        v_measure: outcome.v_measure,
        candidates: outcome.candidates,
        excluded_windows: outcome.excluded_windows,
        algorithm,
        plan: plan.clone(),
    })
}

/// A merged output chain with the windows that saw it and the scored links
/// at or above the threshold between its members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedChain {
    pub chain_id: String,
    pub record_ids: Vec<String>,
    pub window_ids: Vec<String>,
    pub link_scores: Vec<LinkScore>,
}

impl PredictedChain {
    pub fn to_chain(&self) -> Chain {
        Chain::new(self.chain_id.clone(), self.record_ids.clone())
    }
}

/// Scores and clusters every window, then merges subchains that share
/// records. Every record of `corpus` lands in exactly one output chain.
pub fn link(
    scorer: &dyn PairScorer,
    corpus: &Corpus,
    plan: &WindowPlan,
    threshold: f64,
    algorithm: Algorithm,
) -> Result<Vec<PredictedChain>, PipelineError> {
    let mut subchains = Vec::new();
    let mut record_windows: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut links: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (w, scores) in score_windows(scorer, corpus, plan)? {
        let params = ClusterParams {
            threshold,
            max_gap_hours: plan.for_topic(&w.topic_id).max_gap_hours,
            algorithm,
        };
        subchains.extend(cluster(&scores, &corpus.timed(&w.record_ids), &params)?);
        let wid = w.id();
        for id in &w.record_ids {
            record_windows.entry(id.clone()).or_default().insert(wid.clone());
        }
        for (a, b, s) in scores.iter().filter(|(_, _, s)| *s >= threshold) {
            links.insert((a.to_string(), b.to_string()), s);
        }
    }
    let merged = merge_corpus_chains(corpus, &subchains);
    Ok(merged
        .into_iter()
        .map(|c| {
            let members: BTreeSet<&str> = c.record_ids.iter().map(String::as_str).collect();
            let window_ids: BTreeSet<String> = c
                .record_ids
                .iter()
                .flat_map(|id| record_windows.get(id).into_iter().flatten().cloned())
                .collect();
            let link_scores = c
                .record_ids
                .iter()
                .flat_map(|a| {
                    links
                        .range((a.clone(), String::new())..)
                        .take_while(move |((x, _), _)| x == a)
                        .filter(|((_, b), _)| members.contains(b.as_str()))
                        .map(|((x, b), s)| LinkScore {
                            from: x.clone(),
                            to: b.clone(),
                            score: *s,
                        })
                })
                .collect();
            PredictedChain {
                chain_id: c.chain_id,
                record_ids: c.record_ids,
                window_ids: window_ids.into_iter().collect(),
                link_scores,
            }
        })
        .collect())
}

/// One JSON object per line, in chain order.
pub fn write_predictions(path: &Path, chains: &[PredictedChain]) -> Result<(), PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for chain in chains {
        serde_json::to_writer(&mut out, chain).expect("chain serializes");
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_id: String,
    pub topic_id: String,
    pub n_records: usize,
    /// `None` when the window has no multi-record gold chain.
    pub scores: Option<ScoreReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub checkpoint_id: Option<String>,
    pub threshold: Option<f64>,
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: RunMetadata,
    pub plan: WindowPlan,
    pub windows: Vec<WindowReport>,
    /// Mean over the topic's defined windows.
    pub topics: BTreeMap<String, AggregateReport>,
    /// Topics without any defined window.
    pub undefined_topics: Vec<String>,
    /// Unweighted mean over defined topics.
    pub corpus: AggregateReport,
}

/// Scores `system` against the gold chains of `gold` window by window, with
/// gold singletons stripped in each window, and averages up to topics and
/// the corpus.
pub fn evaluate(
    gold: &Corpus,
    system: &[Chain],
    plan: &WindowPlan,
    metadata: RunMetadata,
) -> Result<EvaluationReport, PipelineError> {
    let mut windows = Vec::new();
    let mut by_topic: BTreeMap<String, Vec<Option<ScoreReport>>> = BTreeMap::new();
    for w in plan.windows(gold)? {
        let gold_chains = clip_chains(&w, &gold.chains_with_singletons(&w.topic_id)?);
        let system_chains = clip_chains(&w, system);
        let scores = match evaluate_partition(&gold_chains, &system_chains) {
            Ok(r) => Some(r),
            Err(MetricsError::EmptyUniverse) => None,
            Err(e) => return Err(e.into()),
        };
        by_topic.entry(w.topic_id.clone()).or_default().push(scores);
        windows.push(WindowReport {
            window_id: w.id(),
            topic_id: w.topic_id.clone(),
            n_records: w.len(),
            scores,
        });
    }
    let mut topics = BTreeMap::new();
    let mut undefined_topics = Vec::new();
    for (topic, reports) in by_topic {
        match aggregate(&reports) {
            Ok(r) => {
                topics.insert(topic, r);
            }
            Err(MetricsError::NothingToAggregate) => undefined_topics.push(topic),
            Err(e) => return Err(e.into()),
        }
    }
    let topic_scores: Vec<Option<ScoreReport>> = topics.values().map(|r| Some(r.scores)).collect();
    let corpus = match aggregate(&topic_scores) {
        Ok(r) => r,
        Err(MetricsError::NothingToAggregate) => return Err(PipelineError::NothingToEvaluate),
        Err(e) => return Err(e.into()),
    };
    Ok(EvaluationReport {
        metadata,
        plan: plan.clone(),
        windows,
        topics,
        undefined_topics,
        corpus,
    })
}
