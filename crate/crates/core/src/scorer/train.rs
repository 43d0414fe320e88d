use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{encode_pair, EncodedPair};
use super::inference::{select_threshold, PREDICT_CHUNK};
use super::network::{bce_loss, loss_and_gradients, predict};
use super::{ArchMode, Checkpoint, ScorerError, ScorerParams};
use crate::corpus::Corpus;
use crate::encoding::Encoder;
use crate::flsim::FlConfig;
use crate::pairgen::LabeledPair;
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: [usize; 2],
    pub fl: FlConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            weight_decay: 0.1,
            epsilon: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 5,
            batch_size: 32,
            hidden: [1024, 1024],
            fl: FlConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: &str| Err(ScorerError::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return bad("epochs, batch_size and hidden sizes must be positive");
        }
        self.fl.validate().map_err(|e| ScorerError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the full training sample after the epoch.
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Dev F1 at the F1-optimal cut, when the dev sample has both classes.
    pub dev_f1: Option<f64>,
    pub dev_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest dev loss.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// First/second moment estimates, one buffer per parameter tensor.
struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl AdamW {
    fn new(params: &ScorerParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.2.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// `p ← p − lr · (m̂ / (√v̂ + ε) + λ p)`.
    fn update(&mut self, params: &mut ScorerParams, grads: &ScorerParams, c: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let grads = grads.tensors();
        for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[k].2;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * p[i]);
            }
        }
    }
}

fn encode_all(
    corpus: &Corpus,
    pairs: &[LabeledPair],
    arch: ArchMode,
    encoder: &dyn Encoder,
    n_bins: usize,
) -> Result<Vec<EncodedPair>, ScorerError> {
    pairs
        .iter()
        .map(|p| {
            let a = corpus.record(&p.a).ok_or_else(|| ScorerError::UnknownRecord(p.a.clone()))?;
            let b = corpus.record(&p.b).ok_or_else(|| ScorerError::UnknownRecord(p.b.clone()))?;
            encode_pair(arch, encoder, a, b, n_bins)
        })
        .collect()
}

fn predict_all(params: &ScorerParams, pairs: &[EncodedPair]) -> Result<Vec<f64>, ScorerError> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(PREDICT_CHUNK) {
        let refs: Vec<&EncodedPair> = chunk.iter().collect();
        out.extend(predict(params, &refs)?);
    }
    Ok(out)
}

fn diverged(epoch: usize, message: impl Into<String>) -> ScorerError {
    ScorerError::Divergence {
        epoch,
        message: message.into(),
    }
}

/// Trains for `config.epochs` epochs over shuffled mini-batches and keeps
/// the parameters of the epoch with minimal dev loss (earliest on ties).
pub fn train(
    corpus: &Corpus,
    train_pairs: &[LabeledPair],
    dev_pairs: &[LabeledPair],
    arch: ArchMode,
    encoder: &dyn Encoder,
    config: &TrainConfig,
) -> Result<TrainOutcome, ScorerError> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(ScorerError::Empty("training sample"));
    }
    if dev_pairs.is_empty() {
        return Err(ScorerError::Empty("dev sample"));
    }
    let n_bins = config.fl.n_bins;
    let train_enc = encode_all(corpus, train_pairs, arch, encoder, n_bins)?;
    let dev_enc = encode_all(corpus, dev_pairs, arch, encoder, n_bins)?;
    let train_y: Vec<f64> = train_pairs.iter().map(LabeledPair::target).collect();
    let dev_y: Vec<f64> = dev_pairs.iter().map(LabeledPair::target).collect();
    let dev_labels: Vec<bool> = dev_pairs.iter().map(LabeledPair::is_positive).collect();

    let mut init_rng = seeded_rng(derive_seed(config.seed, &[0]));
    let mut params = ScorerParams::init(arch, encoder.dim(), &config.fl, config.hidden, &mut init_rng);
    let mut optimizer = AdamW::new(&params);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ScorerParams)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_enc.len()).collect();
        order.shuffle(&mut seeded_rng(derive_seed(config.seed, &[1, epoch as u64])));
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&EncodedPair> = batch.iter().map(|&i| &train_enc[i]).collect();
            let labels: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
            let (loss, grads) = loss_and_gradients(&params, &refs, &labels)
                .map_err(|e| diverged(epoch, format!("batch {b}: {e}")))?;
            if !loss.is_finite() {
                return Err(diverged(epoch, format!("batch {b}: loss {loss}")));
            }
            optimizer.update(&mut params, &grads, config);
        }
        if !params.is_finite() {
            return Err(diverged(epoch, "non-finite parameters after update"));
        }
        let as_divergence = |e: ScorerError| diverged(epoch, e.to_string());
        let train_loss = bce_loss(&predict_all(&params, &train_enc).map_err(as_divergence)?, &train_y)?;
        let dev_scores = predict_all(&params, &dev_enc).map_err(as_divergence)?;
        let dev_loss = bce_loss(&dev_scores, &dev_y)?;
        let choice = select_threshold(&dev_scores, &dev_labels).ok();
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, dev loss {dev_loss:.6}, dev F1 {}",
            choice.map_or("n/a".to_string(), |c| format!("{:.4} at {:.4}", c.f1, c.threshold))
        );
        history.push(EpochStats {
            epoch,
            train_loss,
            dev_loss,
            dev_f1: choice.map(|c| c.f1),
            dev_threshold: choice.map(|c| c.threshold),
        });
        if best.as_ref().is_none_or(|(loss, _, _)| dev_loss < *loss) {
            best = Some((dev_loss, epoch, params.clone()));
        }
    }

    let (dev_loss, epoch, params) = best.expect("at least one epoch");
    let checkpoint = Checkpoint {
        params,
        fingerprint: encoder.fingerprint(),
        dev_loss,
        epoch,
        train_config: config.clone(),
        history: history.clone(),
    };
    Ok(TrainOutcome {
        checkpoint,
        history,
    })
}
