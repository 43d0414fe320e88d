//! Run configuration: one TOML file plus `--set key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use reclink::clustering::Algorithm;
use reclink::corpus::SplitPolicy;
use reclink::encoding::EncoderConfig;
use reclink::pairgen::SamplingConfig;
use reclink::pipeline::WindowConfig;
use reclink::scorer::{ArchMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub records: PathBuf,
    pub chains: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: PathBuf,
    #[serde(default = "default_checkpoint")]
    pub checkpoint: PathBuf,
    #[serde(default = "default_tuning")]
    pub tuning: PathBuf,
    #[serde(default = "default_predictions")]
    pub predictions: PathBuf,
    #[serde(default = "default_report")]
    pub report: PathBuf,
}

fn default_split() -> PathBuf {
    "split.json".into()
}

fn default_checkpoint() -> PathBuf {
    "model.rlck".into()
}

fn default_tuning() -> PathBuf {
    "tuning.json".into()
}

fn default_predictions() -> PathBuf {
    "predictions.jsonl".into()
}

fn default_report() -> PathBuf {
    "report.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub algorithm: Algorithm,
    /// Link threshold used when no tuning report is available.
    pub threshold: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Tdfs,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Drives pair sampling and training; overrides their own seed keys.
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub model: ArchMode,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub split: SplitPolicy,
    #[serde(default)]
    pub windows: WindowConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
}

/// Sets `dotted.key` in a TOML table. The value is parsed as a TOML value
/// and kept as a plain string when that fails.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Usage(format!("empty key in `{assignment}`")))?;
    let mut table = root;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{part}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// A config with relative paths resolved against the config file's
/// directory, and the canonical (post-override) text it hashes to.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub canonical: String,
}

pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(seed) = seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    let mut config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    config.train.seed = config.seed;
    config.sampling.seed = config.seed;
    let canonical = toml::to_string(&config).expect("config serializes");

    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    let paths = &mut config.paths;
    resolve(&mut paths.records);
    if let Some(c) = paths.chains.as_mut() {
        resolve(c);
    }
    for p in [&mut paths.split, &mut paths.checkpoint, &mut paths.tuning, &mut paths.predictions, &mut paths.report] {
        resolve(p);
    }
    Ok(LoadedConfig { config, canonical })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[paths]\nrecords = \"data/records.jsonl\"\n";

    fn write(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.toml");
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = load(&write(dir.path(), MINIMAL), &[], None).unwrap();
        let c = &loaded.config;
        assert_eq!(c.paths.records, dir.path().join("data/records.jsonl"));
        assert_eq!(c.paths.checkpoint, dir.path().join("model.rlck"));
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.sampling.seed, 3);
        assert_eq!(c.clustering.algorithm, Algorithm::Tdfs);
        assert!(loaded.canonical.contains("seed = 3"));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), MINIMAL);
        let sets = [
            "train.batch_size=8".to_string(),
            "model.mode=nli".to_string(),
            "clustering.algorithm=\"hc_single\"".to_string(),
            "windows.max_gap = { hours = 12.5 }".to_string(),
        ];
        let c = load(&path, &sets, Some(9)).unwrap().config;
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.model.mode, reclink::scorer::Mode::Nli);
        assert_eq!(c.clustering.algorithm, Algorithm::HcSingle);
        assert_eq!(c.windows.max_gap, reclink::pipeline::MaxGapPolicy::Hours(12.5));
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.seed, 9);
    }

    #[test]
    fn canonical_text_tracks_effective_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), MINIMAL);
        let a = load(&path, &[], None).unwrap().canonical;
        let b = load(&path, &[], None).unwrap().canonical;
        let c = load(&path, &["train.epochs=2".into()], None).unwrap().canonical;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn seed_is_mandatory_and_unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let no_seed = write(dir.path(), "[paths]\nrecords = \"r.jsonl\"\n");
        assert!(matches!(load(&no_seed, &[], None), Err(CliError::Config(_))));
        assert!(load(&no_seed, &[], Some(1)).is_ok());
        let typo = write(dir.path(), &format!("{MINIMAL}[train]\nbatchsize = 8\n"));
        assert!(matches!(load(&typo, &[], None), Err(CliError::Config(_))));
    }

    #[test]
    fn malformed_override_is_usage_error() {
        let mut t = toml::Table::new();
        assert!(matches!(apply_override(&mut t, "no-equals"), Err(CliError::Usage(_))));
        apply_override(&mut t, "a.b=1").unwrap();
        assert!(matches!(apply_override(&mut t, "a.b.c=1"), Err(CliError::Usage(_))));
        apply_override(&mut t, "name=plain words").unwrap();
        assert_eq!(t["name"].as_str(), Some("plain words"));
    }
}
