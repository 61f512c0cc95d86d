//! Item-level and feature-level attention.
//!
//! Every attention variant shares one hidden layer: for a target embedding
//! `p` and a history embedding `q_j`, `z_j = W x_j + b` and `a_j = ReLU(z_j)`
//! where `x_j = p ⊙ q_j` (or `[p; q_j]` for concat attention). The item-level
//! logit is `v_j = h·a_j`; the feature-level logits are `â_j = Hᵀ a_j`.
//!
//! Weights normalized across history items use the smoothed softmax
//! `exp(v_j) / (Σ_j' exp(v_j'))^β`. Its denominator is not shift-invariant
//! when β ≠ 1, so logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` instead
//! of being max-shifted. The per-item feature softmax is shift-invariant and
//! uses the usual max subtraction.

use crate::config::{AttentionMode, Design};
use crate::error::{Error, Result};
use crate::params::{dot, Matrix, ParameterSet};

pub const LOGIT_CLAMP: f64 = 30.0;

/// Attention weights for one (target, history) pair set.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// One weight per history item (NAIS `a_ij`, Design 1 `b_ij`).
    pub item_weights: Option<Vec<f64>>,
    /// History items × d matrix of per-feature weights.
    pub feature_weights: Option<Matrix>,
    /// Pre-normalization item logits `v_ij`.
    pub item_logits: Option<Vec<f64>>,
    /// Pre-normalization feature logits `â_ij`, history items × d.
    pub feature_logits: Option<Matrix>,
}

fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

fn hidden_layer(p: &[f64], q: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len("q", p.len(), q.len())?;
    check_len("W columns", p.len(), w.cols())?;
    check_len("b", w.rows(), b.len())?;
    let x: Vec<f64> = p.iter().zip(q).map(|(a, c)| a * c).collect();
    let mut z = vec![0.0; w.rows()];
    w.mul_vec_into(&x, &mut z);
    Ok(z.iter().zip(b).map(|(zi, bi)| (zi + bi).max(0.0)).collect())
}

/// `â = Hᵀ ReLU(W (p ⊙ q) + b)`, unnormalized.
pub fn feature_logits(p: &[f64], q: &[f64], w: &Matrix, b: &[f64], h: &Matrix) -> Result<Vec<f64>> {
    let hidden = hidden_layer(p, q, w, b)?;
    check_len("H rows", w.rows(), h.rows())?;
    check_len("H columns", p.len(), h.cols())?;
    let mut out = vec![0.0; h.cols()];
    h.add_tmul_vec(&hidden, &mut out);
    Ok(out)
}

/// `v = hᵀ ReLU(W (p ⊙ q) + b)`.
pub fn item_logit(p: &[f64], q: &[f64], w: &Matrix, b: &[f64], h: &[f64]) -> Result<f64> {
    let hidden = hidden_layer(p, q, w, b)?;
    check_len("h", w.rows(), h.len())?;
    Ok(dot(h, &hidden))
}

/// Softmax over the features of a single history item.
pub fn normalize_features(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature logits".into()));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

#[inline]
pub(crate) fn clamp_logit(v: f64) -> f64 {
    v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// `exp(v_j) / (Σ exp(v_j'))^β` over history items.
pub fn smoothed_softmax(logits: &[f64], beta: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1], got {beta}")));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("item logits".into()));
    }
    let mut weights = vec![0.0; logits.len()];
    let mut shares = vec![0.0; logits.len()];
    smoothed_softmax_into(logits, beta, &mut weights, &mut shares);
    Ok(weights)
}

/// Writes the smoothed weights and the plain shares `exp(v_j)/Σ exp(v_j')`
/// (needed by the Jacobian).
pub(crate) fn smoothed_softmax_into(logits: &[f64], beta: f64, weights: &mut [f64], shares: &mut [f64]) {
    let mut total = 0.0;
    for (w, &v) in weights.iter_mut().zip(logits) {
        *w = clamp_logit(v).exp();
        total += *w;
    }
    let denom = total.powf(beta);
    for (w, s) in weights.iter_mut().zip(shares.iter_mut()) {
        *s = *w / total;
        *w /= denom;
    }
}

/// Back-propagates through the smoothed softmax: given `∂L/∂w_j`, returns
/// `∂L/∂v_k = w_k g_k − β s_k Σ_j w_j g_j`, zero where the logit was clamped.
pub(crate) fn smoothed_softmax_backward(
    logits: &[f64],
    weights: &[f64],
    shares: &[f64],
    beta: f64,
    upstream: &[f64],
    out: &mut [f64],
) {
    let coupled: f64 = weights.iter().zip(upstream).map(|(w, g)| w * g).sum();
    for k in 0..logits.len() {
        out[k] = if logits[k].abs() > LOGIT_CLAMP {
            0.0
        } else {
            weights[k] * upstream[k] - beta * shares[k] * coupled
        };
    }
}

/// Forward quantities of the shared attention network over a history,
/// retained for back-propagation.
#[derive(Debug, Clone)]
pub struct AttentionForward {
    /// Network inputs `x_j`, history × input width.
    pub inputs: Matrix,
    /// Pre-activations `z_j`, history × d′.
    pub pre: Matrix,
    /// `ReLU(z_j)`, history × d′.
    pub hidden: Matrix,
    pub item: Option<SmoothedLevel>,
    pub feature: Option<FeatureLevel>,
}

/// Item-level logits normalized by the smoothed softmax.
#[derive(Debug, Clone)]
pub struct SmoothedLevel {
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FeatureLevel {
    pub design: Design,
    /// `â_j`, history × d.
    pub logits: Matrix,
    /// Design 1: per-item feature softmax `â_ij` after normalization.
    /// Design 2: column shares `exp(â_jk)/Σ_j' exp(â_j'k)`.
    pub normalized: Matrix,
    /// Final per-feature weights, history × d.
    pub weights: Matrix,
}

impl AttentionForward {
    pub fn history_len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn output(&self) -> AttentionOutput {
        AttentionOutput {
            item_weights: self.item.as_ref().map(|l| l.weights.clone()),
            feature_weights: self.feature.as_ref().map(|f| f.weights.clone()),
            item_logits: self.item.as_ref().map(|l| l.logits.clone()),
            feature_logits: self.feature.as_ref().map(|f| f.logits.clone()),
        }
    }
}

/// Which attention head(s) to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Scalar weight per history item.
    ItemLevel(AttentionMode),
    /// Weight vector per history item.
    FeatureLevel(Design),
}

fn check_network(params: &ParameterSet, d: usize, kind: AttentionKind) -> Result<()> {
    let dp = params.attn_weight.rows();
    let width = match kind {
        AttentionKind::ItemLevel(AttentionMode::Concat) => 2 * d,
        _ => d,
    };
    check_len("W columns", width, params.attn_weight.cols())?;
    check_len("b", dp, params.attn_bias.len())?;
    let needs_item = matches!(kind, AttentionKind::ItemLevel(_) | AttentionKind::FeatureLevel(Design::Design1));
    if needs_item {
        check_len("h", dp, params.item_out.len())?;
    }
    if let AttentionKind::FeatureLevel(_) = kind {
        if params.feature_out.shape() != (dp, d) {
            return Err(Error::Shape {
                what: "H".into(),
                expected: format!("{dp}x{d}"),
                actual: format!("{}x{}", params.feature_out.rows(), params.feature_out.cols()),
            });
        }
    }
    Ok(())
}

/// Evaluates the attention network for target `p` over `history` rows.
/// Shapes are assumed consistent; the public wrappers check them.
pub fn attend(p: &[f64], history: &[&[f64]], params: &ParameterSet, beta: f64, kind: AttentionKind) -> AttentionForward {
    let n = history.len();
    let d = p.len();
    let dp = params.attn_weight.rows();
    let width = params.attn_weight.cols();

    let mut inputs = Matrix::zeros(n, width);
    let mut pre = Matrix::zeros(n, dp);
    let mut hidden = Matrix::zeros(n, dp);
    for (j, q) in history.iter().enumerate() {
        let x = inputs.row_mut(j);
        if width == d {
            for k in 0..d {
                x[k] = p[k] * q[k];
            }
        } else {
            x[..d].copy_from_slice(p);
            x[d..].copy_from_slice(q);
        }
        let z = pre.row_mut(j);
        params.attn_weight.mul_vec_into(inputs.row(j), z);
        let a = hidden.row_mut(j);
        for t in 0..dp {
            z[t] += params.attn_bias[t];
            a[t] = z[t].max(0.0);
        }
    }

    let needs_item = matches!(kind, AttentionKind::ItemLevel(_) | AttentionKind::FeatureLevel(Design::Design1));
    let item = needs_item.then(|| {
        let logits: Vec<f64> = (0..n).map(|j| dot(&params.item_out, hidden.row(j))).collect();
        let mut weights = vec![0.0; n];
        let mut shares = vec![0.0; n];
        smoothed_softmax_into(&logits, beta, &mut weights, &mut shares);
        SmoothedLevel { logits, weights, shares }
    });

    let feature = match kind {
        AttentionKind::ItemLevel(_) => None,
        AttentionKind::FeatureLevel(design) => {
            let mut logits = Matrix::zeros(n, d);
            for j in 0..n {
                params.feature_out.add_tmul_vec(hidden.row(j), logits.row_mut(j));
            }
            let mut normalized = Matrix::zeros(n, d);
            let mut weights = Matrix::zeros(n, d);
            match design {
                Design::Design1 => {
                    let item_weights = &item.as_ref().expect("design 1 has item level").weights;
                    for j in 0..n {
                        let c = normalized.row_mut(j);
                        c.copy_from_slice(logits.row(j));
                        softmax_in_place(c);
                        let bj = item_weights[j];
                        for (wk, ck) in weights.row_mut(j).iter_mut().zip(normalized.row(j)) {
                            *wk = bj * ck;
                        }
                    }
                }
                Design::Design2 => {
                    let mut col_logits = vec![0.0; n];
                    let mut col_w = vec![0.0; n];
                    let mut col_s = vec![0.0; n];
                    for k in 0..d {
                        for j in 0..n {
                            col_logits[j] = logits[(j, k)];
                        }
                        smoothed_softmax_into(&col_logits, beta, &mut col_w, &mut col_s);
                        for j in 0..n {
                            weights[(j, k)] = col_w[j];
                            normalized[(j, k)] = col_s[j];
                        }
                    }
                }
            }
            Some(FeatureLevel { design, logits, normalized, weights })
        }
    };

    AttentionForward { inputs, pre, hidden, item, feature }
}

fn check_history(p: &[f64], history: &[&[f64]]) -> Result<()> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    for q in history {
        check_len("history embedding", p.len(), q.len())?;
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(())
}

/// Design 1: `a_ij = b_ij · softmax_k(â_ij)` with `b_ij` the smoothed item weight.
pub fn design1_weights(p: &[f64], history: &[&[f64]], params: &ParameterSet, beta: f64) -> Result<AttentionOutput> {
    check_history(p, history)?;
    check_beta(beta)?;
    let kind = AttentionKind::FeatureLevel(Design::Design1);
    check_network(params, p.len(), kind)?;
    Ok(attend(p, history, params, beta, kind).output())
}

/// Design 2: per-feature smoothed softmax across the history items.
pub fn design2_weights(p: &[f64], history: &[&[f64]], params: &ParameterSet, beta: f64) -> Result<AttentionOutput> {
    check_history(p, history)?;
    check_beta(beta)?;
    let kind = AttentionKind::FeatureLevel(Design::Design2);
    check_network(params, p.len(), kind)?;
    Ok(attend(p, history, params, beta, kind).output())
}

/// NAIS item-level attention with product or concat encoding.
pub fn nais_weights(
    p: &[f64],
    history: &[&[f64]],
    params: &ParameterSet,
    beta: f64,
    mode: AttentionMode,
) -> Result<AttentionOutput> {
    check_history(p, history)?;
    check_beta(beta)?;
    let kind = AttentionKind::ItemLevel(mode);
    check_network(params, p.len(), kind)?;
    Ok(attend(p, history, params, beta, kind).output())
}
