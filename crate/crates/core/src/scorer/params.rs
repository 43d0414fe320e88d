use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

use super::{features::feature_width, ArchMode, Mode, ScorerError};
use crate::flsim::{FlConfig, FlEmbeddingTable};

/// Trainable parameters. Layer matrices are stored `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub arch: ArchMode,
    pub dim: usize,
    /// Attention scoring vector, present in cdcr mode.
    pub attention: Option<Array1<f64>>,
    /// FL bin embeddings, present when FL is enabled.
    pub fl_table: Option<FlEmbeddingTable>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    /// Output bias, stored as a length-1 vector.
    pub b3: Array1<f64>,
}

fn he_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scale = (2.0 / cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

impl ScorerParams {
    /// He-scaled normal FFNN weights, zero biases, zero attention and
    /// uniform FL embeddings in `[-0.1, 0.1]`.
    pub fn init(
        arch: ArchMode,
        dim: usize,
        fl: &FlConfig,
        hidden: [usize; 2],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let width = feature_width(arch, dim, fl.embed_dim);
        let fl_table = arch.use_fl.then(|| FlEmbeddingTable::init(fl, rng));
        let w1 = he_matrix(hidden[0], width, rng);
        let w2 = he_matrix(hidden[1], hidden[0], rng);
        let w3 = he_matrix(1, hidden[1], rng).into_shape_with_order(hidden[1]).expect("row vector");
        Self {
            arch,
            dim,
            attention: (arch.mode == Mode::Cdcr).then(|| Array1::zeros(dim)),
            fl_table,
            w1,
            b1: Array1::zeros(hidden[0]),
            w2,
            b2: Array1::zeros(hidden[1]),
            w3,
            b3: Array1::zeros(1),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> [usize; 2] {
        [self.w1.nrows(), self.w2.nrows()]
    }

    pub fn fl_embed_dim(&self) -> usize {
        self.fl_table.as_ref().map_or(0, |t| t.table.ncols())
    }

    /// Zero-valued parameters with identical shapes.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out: Vec<(&'static str, Vec<usize>, &[f64])> = Vec::new();
        if let Some(a) = &self.attention {
            out.push(("attention", a.shape().to_vec(), a.as_slice().expect("contiguous")));
        }
        if let Some(t) = &self.fl_table {
            out.push(("fl_table", t.table.shape().to_vec(), t.table.as_slice().expect("contiguous")));
        }
        out.push(("w1", self.w1.shape().to_vec(), self.w1.as_slice().expect("contiguous")));
        out.push(("b1", self.b1.shape().to_vec(), self.b1.as_slice().expect("contiguous")));
        out.push(("w2", self.w2.shape().to_vec(), self.w2.as_slice().expect("contiguous")));
        out.push(("b2", self.b2.shape().to_vec(), self.b2.as_slice().expect("contiguous")));
        out.push(("w3", self.w3.shape().to_vec(), self.w3.as_slice().expect("contiguous")));
        out.push(("b3", self.b3.shape().to_vec(), self.b3.as_slice().expect("contiguous")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        if let Some(a) = &mut self.attention {
            out.push(("attention", a.as_slice_mut().expect("contiguous")));
        }
        if let Some(t) = &mut self.fl_table {
            out.push(("fl_table", t.table.as_slice_mut().expect("contiguous")));
        }
        out.push(("w1", self.w1.as_slice_mut().expect("contiguous")));
        out.push(("b1", self.b1.as_slice_mut().expect("contiguous")));
        out.push(("w2", self.w2.as_slice_mut().expect("contiguous")));
        out.push(("b2", self.b2.as_slice_mut().expect("contiguous")));
        out.push(("w3", self.w3.as_slice_mut().expect("contiguous")));
        out.push(("b3", self.b3.as_slice_mut().expect("contiguous")));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Shape consistency between the architecture and the stored tensors.
    pub fn validate(&self) -> Result<(), ScorerError> {
        let expected = feature_width(self.arch, self.dim, self.fl_embed_dim());
        if self.input_width() != expected {
            return Err(ScorerError::WidthMismatch {
                expected,
                got: self.input_width(),
            });
        }
        let [h1, h2] = self.hidden();
        let checks = [
            ("b1", self.b1.len(), h1),
            ("w2 columns", self.w2.ncols(), h1),
            ("b2", self.b2.len(), h2),
            ("w3", self.w3.len(), h2),
            ("b3", self.b3.len(), 1),
            (
                "attention",
                self.attention.as_ref().map_or(0, Array1::len),
                if self.arch.mode == Mode::Cdcr { self.dim } else { 0 },
            ),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(ScorerError::ShapeMismatch {
                    what,
                    expected: expected.to_string(),
                    got: got.to_string(),
                });
            }
        }
        if self.arch.use_fl != self.fl_table.is_some() {
            return Err(ScorerError::ShapeMismatch {
                what: "fl_table presence",
                expected: self.arch.use_fl.to_string(),
                got: self.fl_table.is_some().to_string(),
            });
        }
        Ok(())
    }
}
