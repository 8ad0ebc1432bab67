//! Sigmoid cross-entropy in log space.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Summed (not averaged) loss of one logit against a target in [0, 1].
pub fn bce_term(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Mean over batch and outputs.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(logits.len(), labels.len());
    logits.iter().zip(labels).map(|(&x, &y)| bce_term(x, y)).sum::<f64>() / logits.len() as f64
}

/// `dL/dlogit` of [`bce_term`].
pub fn bce_term_grad(logit: f64, label: f64) -> f64 {
    sigmoid(logit) - label
}
