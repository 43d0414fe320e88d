//! Chronological train/dev/test split at chain granularity.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPolicy {
    /// Chains per topic reserved for testing before any training data is
    /// carved out. Singletons count as chains.
    pub test_quota: usize,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self { test_quota: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Dev,
    Test,
}

/// Chain ids per split; each list is in chronological order per topic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl DataSplit {
    pub fn part(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Dev => &self.dev,
            SplitPart::Test => &self.test,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let body = serde_json::to_string_pretty(self).expect("split serializes");
        fs::write(path, body + "\n").map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let body = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&body).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Sizes `(train, dev, test)` for a topic with `n` chains.
fn partition_sizes(n: usize, quota: usize) -> (usize, usize, usize) {
    if n <= quota {
        (0, 0, n)
    } else if n < 3 * quota {
        let third = n / 3;
        (third, third, n - 2 * third)
    } else {
        let tenth = n / 10;
        (n - 2 * tenth, tenth, tenth)
    }
}

/// Orders each topic's chains (implicit singletons included) by first-record
/// timestamp and assigns the newest to test, the next to dev and the oldest
/// to train.
pub fn chronological_split(corpus: &Corpus, policy: SplitPolicy) -> Result<DataSplit, CorpusError> {
    if corpus.gold_chains().is_none() {
        return Err(CorpusError::NoGoldChains);
    }
    let mut split = DataSplit::default();
    for topic in corpus.topics().keys() {
        let chains = corpus.chains_with_singletons(topic)?;
        let (n_train, n_dev, _) = partition_sizes(chains.len(), policy.test_quota);
        for (i, chain) in chains.into_iter().enumerate() {
            let bucket = if i < n_train {
                &mut split.train
            } else if i < n_train + n_dev {
                &mut split.dev
            } else {
                &mut split.test
            };
            bucket.push(chain.chain_id);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_branches() {
        assert_eq!(partition_sizes(150, 200), (0, 0, 150));
        assert_eq!(partition_sizes(200, 200), (0, 0, 200));
        assert_eq!(partition_sizes(450, 200), (150, 150, 150));
        assert_eq!(partition_sizes(451, 200), (150, 150, 151));
        assert_eq!(partition_sizes(3000, 200), (2400, 300, 300));
        assert_eq!(partition_sizes(600, 200), (480, 60, 60));
    }
}
