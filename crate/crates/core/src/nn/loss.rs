use ndarray::{Array2, Axis};

/// Row-wise softmax, stabilized by subtracting the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Class-weighted mean cross-entropy and its gradient w.r.t. the logits.
///
/// The loss is `Σ w[y] · -log p[y] / Σ w[y]`, the usual weighted
/// negative log-likelihood reduction.
pub fn weighted_cross_entropy(
    logits: &Array2<f64>,
    targets: &[usize],
    class_weights: &[f64],
) -> (f64, Array2<f64>) {
    let probs = softmax_rows(logits);
    let total_weight: f64 = targets.iter().map(|&y| class_weights[y]).sum();
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (r, &y) in targets.iter().enumerate() {
        let w = class_weights[y];
        loss -= w * probs[[r, y]].max(f64::MIN_POSITIVE).ln();
        grad[[r, y]] -= 1.0;
        grad.row_mut(r).mapv_inplace(|g| g * w / total_weight);
    }
    (loss / total_weight, grad)
}
