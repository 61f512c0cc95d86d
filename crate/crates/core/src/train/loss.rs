//! Pointwise log loss with ℓ2 regularization.

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood of one instance.
#[inline]
pub fn instance_log_loss(score: f64, label: bool) -> f64 {
    let prob = sigmoid(score).clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label {
        -prob.ln()
    } else {
        -(1.0 - prob).ln()
    }
}

/// `∂ℓ/∂r̂ = σ(r̂) − y`.
#[inline]
pub fn score_gradient(score: f64, label: bool) -> f64 {
    sigmoid(score) - if label { 1.0 } else { 0.0 }
}

/// Mean negative log-likelihood plus `λ Σ θ²` over `parameters`. An empty
/// batch has a data term of zero.
pub fn log_loss(scores: &[f64], labels: &[bool], parameters: &[&[f64]], lambda: f64) -> f64 {
    assert_eq!(scores.len(), labels.len(), "scores and labels must have equal length");
    let data = if scores.is_empty() {
        0.0
    } else {
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| instance_log_loss(s, y))
            .sum::<f64>()
            / scores.len() as f64
    };
    let reg: f64 = parameters.iter().flat_map(|a| a.iter()).map(|v| v * v).sum();
    data + lambda * reg
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn zero_score_costs_ln2_either_way() {
        assert!((log_loss(&[0.0], &[true], &[], 0.0) - LN2).abs() < 1e-15);
        assert!((log_loss(&[0.0], &[false], &[], 0.0) - LN2).abs() < 1e-15);
    }

    #[test]
    fn regularizer_only() {
        assert_eq!(log_loss(&[], &[], &[&[2.0]], 1.0), 4.0);
    }

    #[test]
    fn clamped_probabilities_stay_finite() {
        let l = log_loss(&[-1e4, 1e4], &[true, false], &[], 0.0);
        assert!(l.is_finite());
        // 1 − 1e-12 is not exact in binary, so the negative side is slightly off ln(1e-12).
        let expected = (-PROB_EPS.ln() - (1.0 - (1.0 - PROB_EPS)).ln()) / 2.0;
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn score_gradient_at_half() {
        assert_eq!(score_gradient(0.0, true), -0.5);
        assert_eq!(score_gradient(0.0, false), 0.5);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
