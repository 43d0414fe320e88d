use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Serialize;

use super::features::{assemble_traced, backprop_features, EncodedPair, PoolTrace};
use super::{ScorerError, ScorerParams};

/// Gradients share the parameter layout.
pub type Gradients = ScorerParams;

/// Probabilities are clamped to `[LOSS_CLAMP, 1 - LOSS_CLAMP]` in the loss.
pub const LOSS_CLAMP: f64 = 1e-7;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean two-term binary cross-entropy.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64, ScorerError> {
    if predictions.len() != labels.len() {
        return Err(ScorerError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(ScorerError::Empty("batch"));
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

struct Activations {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    p: Array1<f64>,
}

fn relu(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|v| v.max(0.0));
    a
}

fn forward_rows(params: &ScorerParams, x: Array2<f64>) -> Result<Activations, ScorerError> {
    // ReLU via `max` would silently map NaN to zero
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ScorerError::NonFinite);
    }
    let h1 = relu(x.dot(&params.w1.t()) + &params.b1);
    let h2 = relu(h1.dot(&params.w2.t()) + &params.b2);
    let z = h2.dot(&params.w3) + params.b3[0];
    let p = z.mapv(sigmoid);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ScorerError::NonFinite);
    }
    Ok(Activations { x, h1, h2, p })
}

/// Link probability for one feature vector.
pub fn forward(params: &ScorerParams, feature: ArrayView1<f64>) -> Result<f64, ScorerError> {
    if feature.len() != params.input_width() {
        return Err(ScorerError::WidthMismatch {
            expected: params.input_width(),
            got: feature.len(),
        });
    }
    let x = feature.to_owned().insert_axis(Axis(0));
    Ok(forward_rows(params, x)?.p[0])
}

fn stack(params: &ScorerParams, pairs: &[&EncodedPair]) -> Result<(Array2<f64>, Vec<Option<PoolTrace>>), ScorerError> {
    let mut x = Array2::zeros((pairs.len(), params.input_width()));
    let mut traces = Vec::with_capacity(pairs.len());
    for (mut row, pair) in x.rows_mut().into_iter().zip(pairs) {
        let (features, trace) = assemble_traced(params, pair)?;
        row.assign(&features);
        traces.push(trace);
    }
    Ok((x, traces))
}

/// Probabilities for a batch of encoded pairs.
pub fn predict(params: &ScorerParams, pairs: &[&EncodedPair]) -> Result<Vec<f64>, ScorerError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let (x, _) = stack(params, pairs)?;
    Ok(forward_rows(params, x)?.p.to_vec())
}

/// Mean BCE over the batch and its exact gradient w.r.t. every trainable
/// tensor. Encoder outputs are constants.
pub fn loss_and_gradients(
    params: &ScorerParams,
    pairs: &[&EncodedPair],
    labels: &[f64],
) -> Result<(f64, Gradients), ScorerError> {
    let (x, traces) = stack(params, pairs)?;
    let act = forward_rows(params, x)?;
    let p = act.p.as_slice().expect("contiguous");
    let loss = bce_loss(p, labels)?;
    let n = pairs.len() as f64;

    // d(mean BCE)/dz = (p - y) / n, zero where the clamp is active
    let dz = Array1::from_iter(p.iter().zip(labels).map(|(&p, &y)| {
        if (LOSS_CLAMP..=1.0 - LOSS_CLAMP).contains(&p) {
            (p - y) / n
        } else {
            0.0
        }
    }));

    let mut g = params.zeros_like();
    g.w3 = act.h2.t().dot(&dz);
    g.b3[0] = dz.sum();
    let mut dh2 = dz.clone().insert_axis(Axis(1)).dot(&params.w3.view().insert_axis(Axis(0)));
    dh2.zip_mut_with(&act.h2, |d, &h| {
        if h <= 0.0 {
            *d = 0.0
        }
    });
    g.w2 = dh2.t().dot(&act.h1);
    g.b2 = dh2.sum_axis(Axis(0));
    let mut dh1 = dh2.dot(&params.w2);
    dh1.zip_mut_with(&act.h1, |d, &h| {
        if h <= 0.0 {
            *d = 0.0
        }
    });
    g.w1 = dh1.t().dot(&act.x);
    g.b1 = dh1.sum_axis(Axis(0));

    if params.attention.is_some() || params.fl_table.is_some() {
        let dx = dh1.dot(&params.w1);
        for ((pair, trace), row) in pairs.iter().zip(&traces).zip(dx.rows()) {
            backprop_features(params, pair, trace.as_ref(), row, &mut g);
        }
    }
    Ok((loss, g))
}

/// Agreement of one parameter tensor's analytic gradient with central
/// differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: &'static str,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, 0 when both vanish.
    pub relative_error: f64,
}

/// Compares [`loss_and_gradients`] with central differences of step `h` on
/// every entry of every trainable tensor.
pub fn gradient_check(
    params: &ScorerParams,
    pairs: &[&EncodedPair],
    labels: &[f64],
    h: f64,
) -> Result<Vec<TensorCheck>, ScorerError> {
    let (_, analytic) = loss_and_gradients(params, pairs, labels)?;
    let analytic = analytic.tensors();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (ti, (name, _, grad)) in analytic.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut num2 = 0.0;
        for (k, a) in grad.iter().enumerate() {
            let original = probe.tensors_mut()[ti].1[k];
            probe.tensors_mut()[ti].1[k] = original + h;
            let up = loss_and_gradients(&probe, pairs, labels)?.0;
            probe.tensors_mut()[ti].1[k] = original - h;
            let down = loss_and_gradients(&probe, pairs, labels)?.0;
            probe.tensors_mut()[ti].1[k] = original;
            let numeric = (up - down) / (2.0 * h);
            diff2 += (a - numeric).powi(2);
            num2 += numeric * numeric;
        }
        let an2: f64 = grad.iter().map(|x| x * x).sum();
        let scale = an2.sqrt().max(num2.sqrt());
        out.push(TensorCheck {
            name,
            relative_error: if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale },
        });
    }
    Ok(out)
}
