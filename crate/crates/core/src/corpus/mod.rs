//! Shift-book corpus model.
//!
//! A [`Corpus`] holds event records grouped into topics (one log book each),
//! optional gold chains, and a per-topic time-ordered index. Records are
//! ordered by `(timestamp, record_id)` everywhere in the crate.

mod io;
mod split;
mod stats;
mod window;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, read_chains, read_records, save_corpus, write_chains, write_records};
pub use split::{chronological_split, DataSplit, SplitPart, SplitPolicy};
pub use stats::{compute_time_stats, window_size_for_topic, TimeStats};
pub use window::{build_windows, SubtopicWindow, DEFAULT_STRIDE_FRACTION};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

/// 1970-01-01T00:00:00Z.
pub const MIN_TIMESTAMP: Timestamp = 0;
/// 2100-01-01T00:00:00Z (exclusive).
pub const MAX_TIMESTAMP: Timestamp = 4_102_444_800;

/// One shift-book entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub record_id: String,
    /// Plant / log book.
    pub topic_id: String,
    /// 8-hour production shift.
    pub document_id: String,
    pub timestamp: Timestamp,
    pub text: String,
    /// Functional-location code of the machinery the entry reports on.
    pub fl_code: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

/// A time-ordered sequence of record ids narrating one story.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chain {
    pub chain_id: String,
    pub record_ids: Vec<String>,
}

impl Chain {
    pub fn new(chain_id: impl Into<String>, record_ids: Vec<String>) -> Self {
        Self {
            chain_id: chain_id.into(),
            record_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.record_ids.len() == 1
    }
}

/// A record id paired with its timestamp, the unit clustering works on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimedRecord {
    pub timestamp: Timestamp,
    pub id: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed line: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate record_id `{0}`")]
    DuplicateRecord(String),
    #[error("record `{0}` has empty text")]
    EmptyText(String),
    #[error("record `{id}` timestamp {timestamp} outside [1970, 2100)")]
    TimestampOutOfRange { id: String, timestamp: Timestamp },
    #[error("duplicate chain_id `{0}`")]
    DuplicateChain(String),
    #[error("chain `{0}` has no members")]
    EmptyChain(String),
    #[error("chain `{chain_id}` references unknown record `{record_id}`")]
    UnknownRecord { chain_id: String, record_id: String },
    #[error("chain `{chain_id}` spans topics `{first}` and `{second}`")]
    CrossTopicChain {
        chain_id: String,
        first: String,
        second: String,
    },
    #[error("record `{record_id}` belongs to chains `{first}` and `{second}`")]
    OverlappingChains {
        record_id: String,
        first: String,
        second: String,
    },
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("topic `{0}` has no records")]
    EmptyTopic(String),
    #[error("no chain statistics available for topic `{0}`")]
    NoChainStatistics(String),
    #[error("corpus has no gold chains")]
    NoGoldChains,
    #[error("invalid window configuration: {0}")]
    InvalidWindow(String),
}

/// Validated, immutable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: BTreeMap<String, Record>,
    gold_chains: Option<Vec<Chain>>,
    topics: BTreeMap<String, Vec<String>>,
}

impl Corpus {
    /// Validates records and chains and builds the topic index.
    ///
    /// Chain members are re-sorted by timestamp (stable, so equal timestamps
    /// keep their stored order) and chains are ordered by start time.
    pub fn new(records: Vec<Record>, gold_chains: Option<Vec<Chain>>) -> Result<Self, CorpusError> {
        let mut by_id = BTreeMap::new();
        for record in records {
            if record.text.split_whitespace().next().is_none() {
                return Err(CorpusError::EmptyText(record.record_id));
            }
            if !(MIN_TIMESTAMP..MAX_TIMESTAMP).contains(&record.timestamp) {
                return Err(CorpusError::TimestampOutOfRange {
                    id: record.record_id,
                    timestamp: record.timestamp,
                });
            }
            if by_id.contains_key(&record.record_id) {
                return Err(CorpusError::DuplicateRecord(record.record_id));
            }
            by_id.insert(record.record_id.clone(), record);
        }

        let mut topics: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for record in by_id.values() {
            topics
                .entry(record.topic_id.clone())
                .or_default()
                .push(record.record_id.clone());
        }
        for ids in topics.values_mut() {
            ids.sort_by(|a, b| order_key(&by_id, a).cmp(&order_key(&by_id, b)));
        }

        let gold_chains = match gold_chains {
            Some(chains) => Some(validate_chains(&by_id, chains)?),
            None => None,
        };

        Ok(Self {
            records: by_id,
            gold_chains,
            topics,
        })
    }

    pub fn records(&self) -> &BTreeMap<String, Record> {
        &self.records
    }

    pub fn record(&self, id: &str) -> Option<&Record> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn gold_chains(&self) -> Option<&[Chain]> {
        self.gold_chains.as_deref()
    }

    /// Topic id → record ids ordered by `(timestamp, record_id)`.
    pub fn topics(&self) -> &BTreeMap<String, Vec<String>> {
        &self.topics
    }

    pub fn topic_records(&self, topic_id: &str) -> Option<&[String]> {
        self.topics.get(topic_id).map(Vec::as_slice)
    }

    pub fn timestamp(&self, id: &str) -> Option<Timestamp> {
        self.records.get(id).map(|r| r.timestamp)
    }

    /// Same corpus without gold annotation.
    pub fn without_gold(&self) -> Self {
        Self {
            records: self.records.clone(),
            gold_chains: None,
            topics: self.topics.clone(),
        }
    }

    pub fn timed(&self, ids: &[String]) -> Vec<TimedRecord> {
        ids.iter()
            .filter_map(|id| {
                self.timestamp(id).map(|timestamp| TimedRecord {
                    timestamp,
                    id: id.clone(),
                })
            })
            .collect()
    }

    /// Gold chains of one topic, including implicit singletons for records
    /// that no gold chain covers, ordered by start time then chain id.
    pub fn chains_with_singletons(&self, topic_id: &str) -> Result<Vec<Chain>, CorpusError> {
        let gold = self.gold_chains.as_ref().ok_or(CorpusError::NoGoldChains)?;
        let ids = self
            .topics
            .get(topic_id)
            .ok_or_else(|| CorpusError::UnknownTopic(topic_id.to_string()))?;
        let mut covered = BTreeSet::new();
        let mut chains = Vec::new();
        for chain in gold {
            if self.chain_topic(chain) == Some(topic_id) {
                covered.extend(chain.record_ids.iter().cloned());
                chains.push(chain.clone());
            }
        }
        for id in ids {
            if !covered.contains(id) {
                chains.push(Chain::new(implicit_singleton_id(id), vec![id.clone()]));
            }
        }
        chains.sort_by(|a, b| {
            (self.chain_start(a), &a.chain_id).cmp(&(self.chain_start(b), &b.chain_id))
        });
        Ok(chains)
    }

    /// Topic of a chain's first member.
    pub fn chain_topic(&self, chain: &Chain) -> Option<&str> {
        chain
            .record_ids
            .first()
            .and_then(|id| self.records.get(id))
            .map(|r| r.topic_id.as_str())
    }

    /// Timestamp of a chain's first member.
    pub fn chain_start(&self, chain: &Chain) -> Timestamp {
        chain
            .record_ids
            .first()
            .and_then(|id| self.timestamp(id))
            .unwrap_or(Timestamp::MIN)
    }

    /// Sub-corpus made of the given chains (explicit or implicit singleton
    /// ids) and their member records.
    pub fn subset_by_chains<'a, I>(&self, chain_ids: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let wanted: BTreeSet<&str> = chain_ids.into_iter().map(String::as_str).collect();
        let mut chains = Vec::new();
        for topic in self.topics.keys() {
            for chain in self.chains_with_singletons(topic)? {
                if wanted.contains(chain.chain_id.as_str()) {
                    chains.push(chain);
                }
            }
        }
        let records = chains
            .iter()
            .flat_map(|c| c.record_ids.iter())
            .filter_map(|id| self.records.get(id).cloned())
            .collect();
        Self::new(records, Some(chains))
    }

    /// Sub-corpus restricted to one topic.
    pub fn topic_subset(&self, topic_id: &str) -> Result<Self, CorpusError> {
        let ids = self
            .topics
            .get(topic_id)
            .ok_or_else(|| CorpusError::UnknownTopic(topic_id.to_string()))?;
        let records = ids.iter().map(|id| self.records[id].clone()).collect();
        let chains = self.gold_chains.as_ref().map(|chains| {
            chains
                .iter()
                .filter(|c| self.chain_topic(c) == Some(topic_id))
                .cloned()
                .collect()
        });
        Self::new(records, chains)
    }
}

/// Chain id given to records that no gold chain covers.
pub fn implicit_singleton_id(record_id: &str) -> String {
    format!("singleton:{record_id}")
}

fn order_key<'a>(records: &'a BTreeMap<String, Record>, id: &'a str) -> (Timestamp, &'a str) {
    (records[id].timestamp, id)
}

fn validate_chains(
    records: &BTreeMap<String, Record>,
    chains: Vec<Chain>,
) -> Result<Vec<Chain>, CorpusError> {
    let mut seen_chains = BTreeSet::new();
    let mut owner: HashMap<String, String> = HashMap::new();
    let mut out = Vec::with_capacity(chains.len());
    for mut chain in chains {
        if !seen_chains.insert(chain.chain_id.clone()) {
            return Err(CorpusError::DuplicateChain(chain.chain_id));
        }
        if chain.record_ids.is_empty() {
            return Err(CorpusError::EmptyChain(chain.chain_id));
        }
        let mut topic: Option<&str> = None;
        for id in &chain.record_ids {
            let record = records.get(id).ok_or_else(|| CorpusError::UnknownRecord {
                chain_id: chain.chain_id.clone(),
                record_id: id.clone(),
            })?;
            match topic {
                None => topic = Some(&record.topic_id),
                Some(t) if t != record.topic_id => {
                    return Err(CorpusError::CrossTopicChain {
                        chain_id: chain.chain_id.clone(),
                        first: t.to_string(),
                        second: record.topic_id.clone(),
                    })
                }
                Some(_) => {}
            }
            if let Some(prev) = owner.insert(id.clone(), chain.chain_id.clone()) {
                return Err(CorpusError::OverlappingChains {
                    record_id: id.clone(),
                    first: prev,
                    second: chain.chain_id.clone(),
                });
            }
        }
        chain.record_ids.sort_by_key(|id| records[id].timestamp);
        out.push(chain);
    }
    out.sort_by(|a, b| {
        let sa = records[&a.record_ids[0]].timestamp;
        let sb = records[&b.record_ids[0]].timestamp;
        (sa, &a.chain_id).cmp(&(sb, &b.chain_id))
    });
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn record(id: &str, topic: &str, hours: f64, text: &str) -> Record {
        Record {
            record_id: id.to_string(),
            topic_id: topic.to_string(),
            document_id: format!("{topic}-doc"),
            timestamp: 1_600_000_000 + (hours * 3600.0).round() as i64,
            text: text.to_string(),
            fl_code: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn chain(id: &str, members: &[&str]) -> Chain {
        Chain::new(id, members.iter().map(|s| s.to_string()).collect())
    }
}
