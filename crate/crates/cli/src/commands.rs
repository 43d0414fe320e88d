use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use reclink::clustering::Algorithm;
use reclink::corpus::{chronological_split, load_corpus, read_chains, save_corpus, Corpus, DataSplit, SplitPart};
use reclink::encoding::build_encoder;
use reclink::pipeline::{
    evaluate, link, prepare_pairs, split_corpus, train_model, tune, write_predictions, RunMetadata, TuneReport,
    WindowPlan,
};
use reclink::scorer::{Checkpoint, ModelScorer, PairScorer};
use reclink::synthgen::{generate, OracleScorer, SynthSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::CliError;

/// Provenance written next to every command's outputs.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    reclink_version: &'static str,
    config_sha256: String,
    config: &'a str,
    jobs: usize,
    started_at: String,
    finished_at: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Context {
    pub jobs: usize,
    started_at: String,
}

impl Context {
    pub fn new(jobs: usize) -> Self {
        Self {
            jobs,
            started_at: now(),
        }
    }

    fn manifest(
        &self,
        command: &str,
        config: &str,
        inputs: &[&Path],
        outputs: &[&Path],
        at: &Path,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            reclink_version: env!("CARGO_PKG_VERSION"),
            config_sha256: format!("{:x}", Sha256::digest(config.as_bytes())),
            config,
            jobs: self.jobs,
            started_at: self.started_at.clone(),
            finished_at: now(),
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
            outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
        };
        write_json(at, &manifest)
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).expect("value serializes");
    ensure_parent(path)?;
    fs::write(path, body + "\n").map_err(|e| CliError::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let body = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist; {hint}", path.display())))
    }
}

fn gold_corpus(cfg: &LoadedConfig) -> Result<(Corpus, Vec<PathBuf>), CliError> {
    let paths = &cfg.config.paths;
    let chains = paths
        .chains
        .as_ref()
        .ok_or_else(|| CliError::Config("paths.chains is required for this command".into()))?;
    require(&paths.records, "check paths.records")?;
    require(chains, "check paths.chains")?;
    Ok((load_corpus(&paths.records, Some(chains))?, vec![paths.records.clone(), chains.clone()]))
}

fn load_split(cfg: &LoadedConfig) -> Result<DataSplit, CliError> {
    let path = &cfg.config.paths.split;
    require(path, "run `reclink split` first")?;
    Ok(DataSplit::load(path)?)
}

fn load_tuning(cfg: &LoadedConfig) -> Result<Option<TuneReport>, CliError> {
    let path = &cfg.config.paths.tuning;
    if path.exists() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn gen_synth(ctx: &Context, spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: SynthSpec = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let corpus = generate(&spec)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let records = out.join("records.jsonl");
    let chains = out.join("chains.jsonl");
    save_corpus(&corpus, &records, Some(&chains))?;
    let canonical = toml::to_string(&spec).expect("spec serializes");
    ctx.manifest("gen-synth", &canonical, &[], &[&records, &chains], &out.join("manifest.json"))?;
    println!(
        "generated {} records, {} chains in {} topics -> {}",
        corpus.len(),
        corpus.gold_chains().map_or(0, <[_]>::len),
        corpus.topics().len(),
        out.display()
    );
    Ok(())
}

pub fn split(ctx: &Context, cfg: &LoadedConfig) -> Result<(), CliError> {
    let (corpus, inputs) = gold_corpus(cfg)?;
    let split = chronological_split(&corpus, cfg.config.split)?;
    let out = &cfg.config.paths.split;
    ensure_parent(out)?;
    split.save(out)?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.manifest("split", &cfg.canonical, &inputs, &[out], &manifest_path(out))?;
    println!(
        "split {} train / {} dev / {} test chains -> {}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        out.display()
    );
    Ok(())
}

pub fn train(ctx: &Context, cfg: &LoadedConfig) -> Result<(), CliError> {
    let c = &cfg.config;
    let (corpus, mut inputs) = gold_corpus(cfg)?;
    let split = load_split(cfg)?;
    inputs.push(c.paths.split.clone());
    let plan = WindowPlan::from_corpus(&corpus, &c.windows)?;
    let pairs = prepare_pairs(&corpus, &split, &plan, &c.sampling)?;
    log::info!("{} train pairs, {} dev pairs", pairs.train.len(), pairs.dev.len());
    let encoder = build_encoder(&c.encoder)?;
    let outcome = train_model(&corpus, &pairs, c.model, encoder.as_ref(), &c.train)?;

    let out = &c.paths.checkpoint;
    ensure_parent(out)?;
    outcome.checkpoint.save(out)?;
    let log_path = out.with_extension("log.jsonl");
    let mut log = Vec::new();
    for epoch in &outcome.history {
        serde_json::to_writer(&mut log, epoch).expect("epoch stats serialize");
        log.push(b'\n');
    }
    fs::write(&log_path, log).map_err(|e| CliError::io(&log_path, e))?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.manifest("train", &cfg.canonical, &inputs, &[out, &log_path], &manifest_path(out))?;

    for e in &outcome.history {
        println!(
            "epoch {}: train loss {:.6}, dev loss {:.6}, dev F1 {}",
            e.epoch,
            e.train_loss,
            e.dev_loss,
            e.dev_f1.map_or("n/a".into(), |f| format!("{f:.4}"))
        );
    }
    println!(
        "kept epoch {} (dev loss {:.6}), checkpoint {} -> {}",
        outcome.checkpoint.epoch,
        outcome.checkpoint.dev_loss,
        outcome.checkpoint.id(),
        out.display()
    );
    Ok(())
}

pub fn tune_command(ctx: &Context, cfg: &LoadedConfig) -> Result<(), CliError> {
    let c = &cfg.config;
    let (corpus, mut inputs) = gold_corpus(cfg)?;
    let split = load_split(cfg)?;
    require(&c.paths.checkpoint, "run `reclink train` first")?;
    inputs.extend([c.paths.split.clone(), c.paths.checkpoint.clone()]);
    let plan = WindowPlan::from_corpus(&corpus, &c.windows)?;
    let pairs = prepare_pairs(&corpus, &split, &plan, &c.sampling)?;
    let encoder = build_encoder(&c.encoder)?;
    let scorer = ModelScorer::new(Checkpoint::load(&c.paths.checkpoint)?, encoder.as_ref())?;
    let report = tune(&scorer, &corpus, &split, &pairs.dev, &plan, c.clustering.algorithm)?;

    let out = &c.paths.tuning;
    write_json(out, &report)?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.manifest("tune", &cfg.canonical, &inputs, &[out], &manifest_path(out))?;
    println!(
        "pair threshold {:.4} (dev F1 {:.4}); link threshold {:.4} (dev v-measure {:.4}) -> {}",
        report.tau0,
        report.dev_pair_f1,
        report.threshold,
        report.v_measure,
        out.display()
    );
    Ok(())
}

/// Window plan, threshold and algorithm: from the tuning report when one
/// exists, otherwise from the gold corpus and the clustering config.
fn link_settings(cfg: &LoadedConfig, inputs: &mut Vec<PathBuf>) -> Result<(WindowPlan, f64, Algorithm), CliError> {
    let c = &cfg.config;
    match load_tuning(cfg)? {
        Some(t) => {
            inputs.push(c.paths.tuning.clone());
            Ok((t.plan, t.threshold, t.algorithm))
        }
        None => {
            log::warn!(
                "{} not found; using threshold {} and a window plan from the gold corpus",
                c.paths.tuning.display(),
                c.clustering.threshold
            );
            let (gold, paths) = gold_corpus(cfg)?;
            inputs.extend(paths);
            let plan = WindowPlan::from_corpus(&gold, &c.windows)?;
            Ok((plan, c.clustering.threshold, c.clustering.algorithm))
        }
    }
}

pub fn link_command(ctx: &Context, cfg: &LoadedConfig, input: Option<&Path>, oracle: bool) -> Result<(), CliError> {
    let c = &cfg.config;
    let mut inputs = Vec::new();
    let corpus = match input {
        Some(path) => {
            inputs.push(path.to_path_buf());
            load_corpus(path, None)?
        }
        None => {
            let (gold, paths) = gold_corpus(cfg)?;
            inputs.extend(paths);
            inputs.push(c.paths.split.clone());
            split_corpus(&gold, &load_split(cfg)?, SplitPart::Test)?.without_gold()
        }
    };
    let (plan, threshold, algorithm) = link_settings(cfg, &mut inputs)?;

    let encoder;
    let scorer: Box<dyn PairScorer + '_> = if oracle {
        let (gold, paths) = gold_corpus(cfg)?;
        inputs.extend(paths);
        Box::new(OracleScorer::new(&gold)?)
    } else {
        require(&c.paths.checkpoint, "run `reclink train` first")?;
        inputs.push(c.paths.checkpoint.clone());
        encoder = build_encoder(&c.encoder)?;
        Box::new(ModelScorer::new(Checkpoint::load(&c.paths.checkpoint)?, encoder.as_ref())?)
    };
    let chains = link(scorer.as_ref(), &corpus, &plan, threshold, algorithm)?;

    let out = &c.paths.predictions;
    ensure_parent(out)?;
    write_predictions(out, &chains)?;
    inputs.sort();
    inputs.dedup();
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.manifest("link", &cfg.canonical, &inputs, &[out], &manifest_path(out))?;
    let linked = chains.iter().filter(|ch| ch.record_ids.len() > 1).count();
    println!(
        "{} records -> {} chains ({} multi-record) at threshold {:.4} -> {}",
        corpus.len(),
        chains.len(),
        linked,
        threshold,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GoldPart {
    Train,
    Dev,
    Test,
    All,
}

pub fn evaluate_command(
    ctx: &Context,
    cfg: &LoadedConfig,
    predictions: Option<&Path>,
    part: GoldPart,
) -> Result<(), CliError> {
    let c = &cfg.config;
    let (gold, mut inputs) = gold_corpus(cfg)?;
    let (plan, threshold, algorithm) = link_settings(cfg, &mut inputs)?;
    let tuned = c.paths.tuning.exists();
    let gold_part = match part {
        GoldPart::All => gold,
        GoldPart::Train | GoldPart::Dev | GoldPart::Test => {
            inputs.push(c.paths.split.clone());
            let p = match part {
                GoldPart::Train => SplitPart::Train,
                GoldPart::Dev => SplitPart::Dev,
                _ => SplitPart::Test,
            };
            split_corpus(&gold, &load_split(cfg)?, p)?
        }
    };
    let pred_path = predictions.unwrap_or(&c.paths.predictions);
    require(pred_path, "run `reclink link` first")?;
    inputs.push(pred_path.to_path_buf());
    let system = read_chains(pred_path)?;
    let checkpoint_id = if c.paths.checkpoint.exists() {
        Some(Checkpoint::load(&c.paths.checkpoint)?.id())
    } else {
        None
    };
    let metadata = RunMetadata {
        checkpoint_id,
        threshold: tuned.then_some(threshold),
        algorithm: tuned.then_some(algorithm),
    };
    let report = evaluate(&gold_part, &system, &plan, metadata)?;

    let out = &c.paths.report;
    write_json(out, &report)?;
    inputs.sort();
    inputs.dedup();
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.manifest("evaluate", &cfg.canonical, &inputs, &[out], &manifest_path(out))?;
    let s = &report.corpus.scores;
    println!(
        "MUC {:.2}  B3 {:.2}  CEAFe {:.2}  CoNLL {:.2}  ({} topics, {} undefined) -> {}",
        s.muc_f1,
        s.b3_f1,
        s.ceafe_f1,
        s.conll_f1,
        report.topics.len(),
        report.undefined_topics.len(),
        out.display()
    );
    Ok(())
}
