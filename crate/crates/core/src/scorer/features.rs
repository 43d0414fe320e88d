use ndarray::{concatenate, s, Array1, ArrayView1, Axis};

use super::{ArchMode, Mode, ScorerError, ScorerParams};
use crate::corpus::Record;
use crate::encoding::{
    attention_pool_backward, attention_weights, Encoder, PairEncoding, SingleEncoding,
};
use crate::flsim::fl_pair_bin;

/// Encoder output for one ordered pair, as required by the mode.
#[derive(Debug, Clone, PartialEq)]
pub enum PairInput {
    /// Joint encoding (cdcr, nli).
    Joint(PairEncoding),
    /// Independent encodings (sts).
    Separate(SingleEncoding, SingleEncoding),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub input: PairInput,
    pub fl_bin: usize,
}

/// Width of the assembled feature vector.
pub fn feature_width(arch: ArchMode, dim: usize, embed_dim: usize) -> usize {
    let blocks = match arch.mode {
        Mode::Cdcr => 4,
        Mode::Nli => 1,
        Mode::Sts => 3,
    };
    blocks * dim + if arch.use_fl { embed_dim } else { 0 }
}

/// Runs the encoder the mode needs and bins the FL similarity.
pub fn encode_pair(
    arch: ArchMode,
    encoder: &dyn Encoder,
    a: &Record,
    b: &Record,
    n_bins: usize,
) -> Result<EncodedPair, ScorerError> {
    let wrap = |source| ScorerError::Encoding {
        a: a.record_id.clone(),
        b: b.record_id.clone(),
        source,
    };
    let input = match arch.mode {
        Mode::Cdcr | Mode::Nli => PairInput::Joint(encoder.encode_pair(a, b).map_err(wrap)?),
        Mode::Sts => PairInput::Separate(
            encoder.encode_single(a).map_err(wrap)?,
            encoder.encode_single(b).map_err(wrap)?,
        ),
    };
    let fl_bin = if arch.use_fl {
        fl_pair_bin(a.fl_code.as_deref(), b.fl_code.as_deref(), n_bins)
    } else {
        0
    };
    Ok(EncodedPair { input, fl_bin })
}

/// Intermediate values of cdcr pooling needed for the backward pass.
pub(crate) struct PoolTrace {
    alpha_a: Array1<f64>,
    alpha_b: Array1<f64>,
    m_a: Array1<f64>,
    m_b: Array1<f64>,
}

fn check_dim(params: &ScorerParams, got: usize) -> Result<(), ScorerError> {
    if got != params.dim {
        return Err(ScorerError::ShapeMismatch {
            what: "encoding dimension",
            expected: params.dim.to_string(),
            got: got.to_string(),
        });
    }
    Ok(())
}

/// Feature vector of a pair under the parameters' architecture.
pub fn assemble_features(params: &ScorerParams, pair: &EncodedPair) -> Result<Array1<f64>, ScorerError> {
    assemble_traced(params, pair).map(|(x, _)| x)
}

pub(crate) fn assemble_traced(
    params: &ScorerParams,
    pair: &EncodedPair,
) -> Result<(Array1<f64>, Option<PoolTrace>), ScorerError> {
    let (mut blocks, trace) = match (params.arch.mode, &pair.input) {
        (Mode::Cdcr, PairInput::Joint(enc)) => {
            check_dim(params, enc.cls_vector.len())?;
            check_dim(params, enc.tokens_a.ncols())?;
            check_dim(params, enc.tokens_b.ncols())?;
            let att = params.attention.as_ref().expect("cdcr has attention");
            let alpha_a = attention_weights(enc.tokens_a.view(), att.view());
            let alpha_b = attention_weights(enc.tokens_b.view(), att.view());
            let m_a = enc.tokens_a.t().dot(&alpha_a);
            let m_b = enc.tokens_b.t().dot(&alpha_b);
            let product = &m_a * &m_b;
            let blocks = vec![enc.cls_vector.clone(), m_a.clone(), m_b.clone(), product];
            (blocks, Some(PoolTrace { alpha_a, alpha_b, m_a, m_b }))
        }
        (Mode::Nli, PairInput::Joint(enc)) => {
            check_dim(params, enc.cls_vector.len())?;
            (vec![enc.cls_vector.clone()], None)
        }
        (Mode::Sts, PairInput::Separate(a, b)) => {
            check_dim(params, a.summary_vector.len())?;
            check_dim(params, b.summary_vector.len())?;
            let product = &a.summary_vector * &b.summary_vector;
            (vec![a.summary_vector.clone(), b.summary_vector.clone(), product], None)
        }
        (mode, _) => {
            return Err(ScorerError::ShapeMismatch {
                what: "encoding kind",
                expected: format!("{} input", mode),
                got: "the other encoding kind".into(),
            })
        }
    };
    if let Some(table) = &params.fl_table {
        if pair.fl_bin >= table.n_bins() {
            return Err(ScorerError::ShapeMismatch {
                what: "fl bin",
                expected: format!("< {}", table.n_bins()),
                got: pair.fl_bin.to_string(),
            });
        }
        blocks.push(table.row(pair.fl_bin).to_owned());
    }
    let views: Vec<ArrayView1<f64>> = blocks.iter().map(|b| b.view()).collect();
    let x = concatenate(Axis(0), &views).expect("1-d blocks");
    if x.len() != params.input_width() {
        return Err(ScorerError::WidthMismatch {
            expected: params.input_width(),
            got: x.len(),
        });
    }
    Ok((x, trace))
}

/// Accumulates the parameter gradients that flow through feature assembly,
/// given the gradient `dx` of the loss w.r.t. the feature vector.
pub(crate) fn backprop_features(
    params: &ScorerParams,
    pair: &EncodedPair,
    trace: Option<&PoolTrace>,
    dx: ArrayView1<f64>,
    grads: &mut ScorerParams,
) {
    let d = params.dim;
    let body = match params.arch.mode {
        Mode::Cdcr => 4 * d,
        Mode::Nli => d,
        Mode::Sts => 3 * d,
    };
    if let (Some(g), Some(_)) = (grads.fl_table.as_mut(), params.fl_table.as_ref()) {
        let mut row = g.table.row_mut(pair.fl_bin);
        row += &dx.slice(s![body..]);
    }
    if let (Mode::Cdcr, PairInput::Joint(enc), Some(t)) = (params.arch.mode, &pair.input, trace) {
        let d_prod = dx.slice(s![3 * d..4 * d]);
        let dm_a = &dx.slice(s![d..2 * d]) + &(&d_prod * &t.m_b);
        let dm_b = &dx.slice(s![2 * d..3 * d]) + &(&d_prod * &t.m_a);
        let ga = attention_pool_backward(enc.tokens_a.view(), t.alpha_a.view(), t.m_a.view(), dm_a.view());
        let gb = attention_pool_backward(enc.tokens_b.view(), t.alpha_b.view(), t.m_b.view(), dm_b.view());
        let att = grads.attention.as_mut().expect("cdcr has attention");
        *att += &ga;
        *att += &gb;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{BuiltinEncoder, EncoderConfig};
    use crate::flsim::FlConfig;
    use crate::util::seeded_rng;

    fn rec(id: &str, text: &str, fl: Option<&str>) -> Record {
        let mut r = crate::corpus::test_support::record(id, "t", 0.0, text);
        r.fl_code = fl.map(str::to_string);
        r
    }

    #[test]
    fn widths() {
        assert_eq!(feature_width(ArchMode::new(Mode::Cdcr, true), 256, 50), 1074);
        assert_eq!(feature_width(ArchMode::new(Mode::Nli, false), 256, 50), 256);
        assert_eq!(feature_width(ArchMode::new(Mode::Sts, true), 256, 50), 818);
    }

    #[test]
    fn assembled_vectors_have_declared_width() {
        let enc = BuiltinEncoder::new(EncoderConfig::builtin(32)).unwrap();
        let a = rec("a", "pumpe leckt", Some("K1A-PU-001"));
        let b = rec("b", "pumpe getauscht", Some("K1A-PU-002"));
        for mode in [Mode::Cdcr, Mode::Nli, Mode::Sts] {
            for use_fl in [false, true] {
                let arch = ArchMode::new(mode, use_fl);
                let params = ScorerParams::init(arch, 32, &FlConfig::default(), [4, 4], &mut seeded_rng(0));
                let pair = encode_pair(arch, &enc, &a, &b, 11).unwrap();
                let x = assemble_features(&params, &pair).unwrap();
                assert_eq!(x.len(), feature_width(arch, 32, 50));
            }
        }
    }

    #[test]
    fn sts_identical_records_are_symmetric() {
        let enc = BuiltinEncoder::new(EncoderConfig::builtin(16)).unwrap();
        let a = rec("a", "ventil klemmt", None);
        let arch = ArchMode::new(Mode::Sts, false);
        let params = ScorerParams::init(arch, 16, &FlConfig::default(), [4, 4], &mut seeded_rng(0));
        let x = assemble_features(&params, &encode_pair(arch, &enc, &a, &a, 11).unwrap()).unwrap();
        let m = x.slice(s![0..16]).to_owned();
        assert_eq!(x.slice(s![16..32]), m);
        assert_eq!(x.slice(s![32..48]), &m * &m);
    }

    #[test]
    fn fl_block_is_the_bin_row() {
        let enc = BuiltinEncoder::new(EncoderConfig::builtin(16)).unwrap();
        let arch = ArchMode::new(Mode::Nli, true);
        let params = ScorerParams::init(arch, 16, &FlConfig::default(), [4, 4], &mut seeded_rng(0));
        let a = rec("a", "x", Some("ABC123"));
        let b = rec("b", "y", Some("ABCXYZ"));
        let pair = encode_pair(arch, &enc, &a, &b, 11).unwrap();
        assert_eq!(pair.fl_bin, 5);
        let x = assemble_features(&params, &pair).unwrap();
        assert_eq!(x.slice(s![16..]), params.fl_table.as_ref().unwrap().row(5));
    }

    #[test]
    fn wrong_encoding_kind_is_rejected() {
        let enc = BuiltinEncoder::new(EncoderConfig::builtin(16)).unwrap();
        let a = rec("a", "x", None);
        let pair = encode_pair(ArchMode::new(Mode::Sts, false), &enc, &a, &a, 11).unwrap();
        let params = ScorerParams::init(ArchMode::new(Mode::Nli, false), 16, &FlConfig::default(), [4, 4], &mut seeded_rng(0));
        assert!(assemble_features(&params, &pair).is_err());
    }
}
