//! Attention-weighted mean pooling with a single trainable scoring vector.

use ndarray::{Array1, ArrayView1, ArrayView2};

/// Softmax over `tokens · attention`, max-subtracted.
pub fn attention_weights(tokens: ArrayView2<f64>, attention: ArrayView1<f64>) -> Array1<f64> {
    let scores = tokens.dot(&attention);
    let max = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let exp = scores.mapv(|s| (s - max).exp());
    let total = exp.sum();
    exp / total
}

/// `Σ_k softmax(tokens · attention)_k · tokens[k]`.
pub fn attention_pool(tokens: ArrayView2<f64>, attention: ArrayView1<f64>) -> Array1<f64> {
    let weights = attention_weights(tokens, attention);
    tokens.t().dot(&weights)
}

/// Gradient of a loss w.r.t. the attention vector given the gradient
/// w.r.t. the pooled output.
///
/// With `u_k = t_k · a`, `α = softmax(u)` and `m = Σ α_k t_k`:
/// `∂L/∂u_k = α_k (t_k · g − m · g)` and `∂L/∂a = Σ_k ∂L/∂u_k t_k`.
pub fn attention_pool_backward(
    tokens: ArrayView2<f64>,
    weights: ArrayView1<f64>,
    pooled: ArrayView1<f64>,
    grad_pooled: ArrayView1<f64>,
) -> Array1<f64> {
    let centre = pooled.dot(&grad_pooled);
    let proj = tokens.dot(&grad_pooled);
    let grad_scores = &weights * &(proj - centre);
    tokens.t().dot(&grad_scores)
}
