//! Forward passes for every model kind.
//!
//! All item-based models here share one shape: a pooled interaction vector
//! `y = Σ_j A_j ⊙ (p_i ⊙ q_j)` where `A_j` is a per-history-item weight
//! (FISM: `n^{-α}`, NAIS/DeepICF: the item attention, FLA models: the
//! per-feature attention vector). NAIS-style heads score `Σ_k y_k`, which is
//! `Σ_j A_j p_iᵀ q_j`; DeepICF-style heads feed `y` through a ReLU tower and a
//! linear regression with user and item biases.

use crate::attention::{attend, AttentionForward, AttentionKind};
use crate::config::{ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::params::{dot, Matrix, ParameterSet};

/// A (user, target) pair with the user's history, excluding the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionContext {
    pub user: usize,
    target: usize,
    history: Vec<usize>,
}

impl PredictionContext {
    pub fn new(user: usize, target: usize, history: Vec<usize>) -> Result<Self> {
        if history.contains(&target) {
            return Err(Error::Data(format!(
                "target item {target} appears in the history of user {user}"
            )));
        }
        Ok(PredictionContext { user, target, history })
    }

    /// History = `positives \ {target}`.
    pub fn from_positives(user: usize, target: usize, positives: &[usize]) -> Self {
        let history = positives.iter().copied().filter(|&j| j != target).collect();
        PredictionContext { user, target, history }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn history(&self) -> &[usize] {
        &self.history
    }

    /// Points the context at another target with the same history.
    pub fn retarget(&mut self, target: usize) -> Result<()> {
        if self.history.contains(&target) {
            return Err(Error::Data(format!(
                "target item {target} appears in the history of user {}",
                self.user
            )));
        }
        self.target = target;
        Ok(())
    }
}

/// Activations of the deep interaction tower.
#[derive(Debug, Clone)]
pub struct DeepForward {
    /// `W_l h_{l-1} + b_l` per layer.
    pub pre: Vec<Vec<f64>>,
    /// `ReLU(pre_l)` per layer; the last entry is `e_L`.
    pub post: Vec<Vec<f64>>,
}

/// Everything a backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub kind: ModelKind,
    pub score: f64,
    /// Empty-history fallback was used; no attention or pooling happened.
    pub fallback: bool,
    /// Element-wise interactions `p_i ⊙ q_j`, history × d.
    pub interactions: Matrix,
    /// Per-item pooling weights for FISM, NAIS and DeepICF.
    pub item_weights: Vec<f64>,
    pub attention: Option<AttentionForward>,
    /// `y`, or `e_ui` for the DeepICF family.
    pub pooled: Vec<f64>,
    pub deep: Option<DeepForward>,
}

fn check_indices(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<()> {
    let items = params.item_count();
    if params.target_emb.cols() != config.d {
        return Err(Error::Shape {
            what: "P".into(),
            expected: format!("{items}x{}", config.d),
            actual: format!("{}x{}", items, params.target_emb.cols()),
        });
    }
    if ctx.target >= items || ctx.history.iter().any(|&j| j >= items) {
        return Err(Error::Data(format!("item index out of range (item count {items})")));
    }
    if config.kind.is_deep() && ctx.user >= params.user_bias.len() {
        return Err(Error::Data(format!(
            "user index {} out of range (user count {})",
            ctx.user,
            params.user_bias.len()
        )));
    }
    Ok(())
}

fn attention_kind(config: &ModelConfig) -> Option<AttentionKind> {
    match config.kind {
        ModelKind::Fism => None,
        ModelKind::Nais => Some(AttentionKind::ItemLevel(config.attention_mode)),
        ModelKind::DeepIcf => Some(AttentionKind::ItemLevel(crate::config::AttentionMode::Prod)),
        ModelKind::FlaNais | ModelKind::FlaDicf => Some(AttentionKind::FeatureLevel(config.design)),
    }
}

/// Runs the forward pass of `config.kind`, retaining intermediates.
pub fn forward(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<Forward> {
    check_indices(ctx, params, config)?;
    Ok(forward_unchecked(ctx, params, config))
}

pub(crate) fn forward_unchecked(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Forward {
    let kind = config.kind;
    let d = config.d;
    let n = ctx.history.len();

    if n == 0 {
        let score = if kind.is_deep() {
            params.user_bias[ctx.user] + params.item_bias[ctx.target]
        } else {
            0.0
        };
        return Forward {
            kind,
            score,
            fallback: true,
            interactions: Matrix::zeros(0, d),
            item_weights: Vec::new(),
            attention: None,
            pooled: Vec::new(),
            deep: None,
        };
    }

    let p = params.target_emb.row(ctx.target);
    let history: Vec<&[f64]> = ctx.history.iter().map(|&j| params.history_emb.row(j)).collect();
    let mut interactions = Matrix::zeros(n, d);
    for (j, q) in history.iter().enumerate() {
        for (x, (a, b)) in interactions.row_mut(j).iter_mut().zip(p.iter().zip(q.iter())) {
            *x = a * b;
        }
    }

    let attention = attention_kind(config).map(|k| attend(p, &history, params, config.beta, k));
    let mut pooled = vec![0.0; d];
    let item_weights = match (&attention, kind) {
        (None, _) => {
            let scale = (n as f64).powf(-config.alpha);
            for j in 0..n {
                crate::params::axpy(scale, interactions.row(j), &mut pooled);
            }
            vec![scale; n]
        }
        (Some(att), _) if kind.is_feature_level() => {
            let weights = &att.feature.as_ref().expect("feature attention").weights;
            for j in 0..n {
                for ((y, a), x) in pooled.iter_mut().zip(weights.row(j)).zip(interactions.row(j)) {
                    *y += a * x;
                }
            }
            Vec::new()
        }
        (Some(att), _) => {
            let weights = att.item.as_ref().expect("item attention").weights.clone();
            for j in 0..n {
                crate::params::axpy(weights[j], interactions.row(j), &mut pooled);
            }
            weights
        }
    };

    let (score, deep) = if kind.is_deep() {
        let (out, deep) = deep_tower(&pooled, params);
        let score = dot(&params.regression, &out) + params.user_bias[ctx.user] + params.item_bias[ctx.target];
        (score, Some(deep))
    } else {
        (pooled.iter().sum(), None)
    };

    Forward {
        kind,
        score,
        fallback: false,
        interactions,
        item_weights,
        attention,
        pooled,
        deep,
    }
}

fn deep_tower(input: &[f64], params: &ParameterSet) -> (Vec<f64>, DeepForward) {
    let mut pre = Vec::with_capacity(params.deep_weights.len());
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(params.deep_weights.len());
    for (w, b) in params.deep_weights.iter().zip(&params.deep_biases) {
        let prev = post.last().map_or(input, Vec::as_slice);
        let mut z = vec![0.0; w.rows()];
        w.mul_vec_into(prev, &mut z);
        for (zi, bi) in z.iter_mut().zip(b) {
            *zi += bi;
        }
        post.push(z.iter().map(|v| v.max(0.0)).collect());
        pre.push(z);
    }
    (post.last().cloned().unwrap_or_else(|| input.to_vec()), DeepForward { pre, post })
}

/// DeepICF-family output for an externally pooled vector `e_ui`:
/// `Vᵀ tower(e_ui) + b_u + b_i`.
pub fn deep_head(pooled: &[f64], params: &ParameterSet, user: usize, target: usize) -> Result<f64> {
    let width = params.deep_weights.first().map_or(params.regression.len(), Matrix::cols);
    if pooled.len() != width {
        return Err(Error::Shape {
            what: "pooled vector".into(),
            expected: width.to_string(),
            actual: pooled.len().to_string(),
        });
    }
    if user >= params.user_bias.len() || target >= params.item_bias.len() {
        return Err(Error::Data("user or item index out of range".into()));
    }
    let (out, _) = deep_tower(pooled, params);
    Ok(dot(&params.regression, &out) + params.user_bias[user] + params.item_bias[target])
}

/// Raw preference score of `config.kind`. Empty histories fall back to 0
/// (FISM, NAIS, FLA_NAIS) or `b_u + b_i` (DeepICF family).
pub fn predict(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<f64> {
    Ok(forward(ctx, params, config)?.score)
}

fn expect_kind(config: &ModelConfig, ok: &[ModelKind]) -> Result<()> {
    if ok.contains(&config.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!("model kind {} not valid for this predictor", config.kind)))
    }
}

/// `|history|^{-α} Σ_j p_iᵀ q_j`.
pub fn predict_fism(ctx: &PredictionContext, params: &ParameterSet, alpha: f64) -> Result<f64> {
    let mut config = ModelConfig::new(ModelKind::Fism, params.target_emb.cols());
    config.alpha = alpha;
    predict(ctx, params, &config)
}

/// `Σ_j a_ij p_iᵀ q_j` with item-level attention.
pub fn predict_nais(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<f64> {
    expect_kind(config, &[ModelKind::Nais])?;
    predict(ctx, params, config)
}

/// `Σ_j p_iᵀ (a_ij ⊙ q_j)` with the configured design.
pub fn predict_fla(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<f64> {
    expect_kind(config, &[ModelKind::FlaNais])?;
    predict(ctx, params, config)
}

pub fn deepicf_forward(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<Forward> {
    expect_kind(config, &[ModelKind::DeepIcf])?;
    forward(ctx, params, config)
}

pub fn fla_dicf_forward(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig) -> Result<Forward> {
    expect_kind(config, &[ModelKind::FlaDicf])?;
    forward(ctx, params, config)
}

/// `Σ_j A_j ⊙ p ⊙ q_j` for externally supplied per-feature weights.
pub fn pool_with_feature_weights(p: &[f64], history: &[&[f64]], weights: &Matrix) -> Result<Vec<f64>> {
    if weights.shape() != (history.len(), p.len()) {
        return Err(Error::Shape {
            what: "feature weights".into(),
            expected: format!("{}x{}", history.len(), p.len()),
            actual: format!("{}x{}", weights.rows(), weights.cols()),
        });
    }
    let mut pooled = vec![0.0; p.len()];
    for (j, q) in history.iter().enumerate() {
        for k in 0..p.len() {
            pooled[k] += p[k] * weights[(j, k)] * q[k];
        }
    }
    Ok(pooled)
}

/// `Σ_j w_j (p ⊙ q_j)` for externally supplied item weights.
pub fn pool_with_item_weights(p: &[f64], history: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != history.len() {
        return Err(Error::Shape {
            what: "item weights".into(),
            expected: history.len().to_string(),
            actual: weights.len().to_string(),
        });
    }
    let mut pooled = vec![0.0; p.len()];
    for (q, &w) in history.iter().zip(weights) {
        for k in 0..p.len() {
            pooled[k] += w * p[k] * q[k];
        }
    }
    Ok(pooled)
}

/// FLA_NAIS score for injected feature weights, bypassing the attention network.
pub fn fla_score_with_weights(p: &[f64], history: &[&[f64]], weights: &Matrix) -> Result<f64> {
    Ok(pool_with_feature_weights(p, history, weights)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Design;
    use crate::params::init_parameters;

    fn tiny_fism() -> ParameterSet {
        let cfg = ModelConfig::new(ModelKind::Fism, 2);
        let mut params = ParameterSet::zeros(&cfg, 3, 1);
        params.target_emb.row_mut(0).copy_from_slice(&[1.0, 2.0]);
        params.history_emb.row_mut(1).copy_from_slice(&[3.0, 4.0]);
        params.history_emb.row_mut(2).copy_from_slice(&[3.0, 4.0]);
        params
    }

    #[test]
    fn fism_single_item_inner_product() {
        let params = tiny_fism();
        let ctx = PredictionContext::new(0, 0, vec![1]).unwrap();
        assert_eq!(predict_fism(&ctx, &params, 0.0).unwrap(), 11.0);
    }

    #[test]
    fn fism_alpha_one_is_mean() {
        let params = tiny_fism();
        let ctx = PredictionContext::new(0, 0, vec![1, 2]).unwrap();
        assert!((predict_fism(&ctx, &params, 1.0).unwrap() - 11.0).abs() < 1e-12);
    }

    #[test]
    fn context_rejects_target_in_history() {
        assert!(PredictionContext::new(0, 3, vec![1, 3]).is_err());
        let mut ctx = PredictionContext::from_positives(0, 3, &[1, 3, 5]);
        assert_eq!(ctx.history(), &[1, 5]);
        assert!(ctx.retarget(5).is_err());
        assert!(ctx.retarget(2).is_ok());
    }

    #[test]
    fn fla_injected_weights_example() {
        let w = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        let s = fla_score_with_weights(&[1.0, 2.0], &[&[3.0, 4.0]], &w).unwrap();
        assert_eq!(s, 5.5);
    }

    #[test]
    fn nais_singleton_history_is_inner_product() {
        let mut cfg = ModelConfig::new(ModelKind::Nais, 4);
        cfg.beta = 1.0;
        let params = init_parameters(&cfg, 5, 1, 9, None).unwrap();
        let ctx = PredictionContext::new(0, 0, vec![3]).unwrap();
        let expected = dot(params.target_emb.row(0), params.history_emb.row(3));
        assert!((predict_nais(&ctx, &params, &cfg).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn deep_identity_layer_sums_pooled_vector() {
        let mut cfg = ModelConfig::new(ModelKind::DeepIcf, 3);
        cfg.deep_layers = vec![3];
        let mut params = init_parameters(&cfg, 4, 2, 1, None).unwrap();
        params.deep_weights[0] = Matrix::identity(3);
        params.regression = vec![1.0; 3];
        // Nonnegative interactions so the identity ReLU layer passes them through.
        for i in 0..4 {
            params.target_emb.row_mut(i).iter_mut().for_each(|v| *v = v.abs());
            params.history_emb.row_mut(i).iter_mut().for_each(|v| *v = v.abs());
        }
        let ctx = PredictionContext::new(1, 0, vec![1, 2, 3]).unwrap();
        let fwd = deepicf_forward(&ctx, &params, &cfg).unwrap();
        let sum: f64 = fwd.pooled.iter().sum();
        assert!((fwd.score - sum).abs() < 1e-15);
    }

    #[test]
    fn deep_zero_regression_gives_biases() {
        let cfg = ModelConfig::new(ModelKind::FlaDicf, 4).with_design(Design::Design1);
        let mut params = init_parameters(&cfg, 4, 2, 1, None).unwrap();
        params.regression.iter_mut().for_each(|v| *v = 0.0);
        params.user_bias[1] = 0.25;
        params.item_bias[0] = -1.5;
        let ctx = PredictionContext::new(1, 0, vec![1, 2]).unwrap();
        assert_eq!(predict(&ctx, &params, &cfg).unwrap(), -1.25);
    }

    #[test]
    fn empty_history_fallbacks() {
        for kind in ModelKind::ALL {
            let cfg = ModelConfig::new(kind, 4);
            let mut params = init_parameters(&cfg, 4, 2, 1, None).unwrap();
            if kind.is_deep() {
                params.user_bias[0] = 0.5;
                params.item_bias[2] = 0.25;
            }
            let ctx = PredictionContext::new(0, 2, vec![]).unwrap();
            let expected = if kind.is_deep() { 0.75 } else { 0.0 };
            assert_eq!(predict(&ctx, &params, &cfg).unwrap(), expected, "{kind}");
        }
    }

    #[test]
    fn dispatch_matches_named_predictor() {
        let mut cfg = ModelConfig::new(ModelKind::Fism, 4);
        cfg.alpha = 0.3;
        let params = init_parameters(&cfg, 6, 1, 4, None).unwrap();
        let ctx = PredictionContext::new(0, 1, vec![0, 2, 5]).unwrap();
        assert_eq!(predict(&ctx, &params, &cfg).unwrap(), predict_fism(&ctx, &params, 0.3).unwrap());
    }

    #[test]
    fn out_of_range_items_are_rejected() {
        let cfg = ModelConfig::new(ModelKind::Nais, 4);
        let params = init_parameters(&cfg, 4, 1, 1, None).unwrap();
        let ctx = PredictionContext::new(0, 9, vec![1]).unwrap();
        assert!(predict(&ctx, &params, &cfg).is_err());
        assert!(predict_fla(&PredictionContext::new(0, 0, vec![1]).unwrap(), &params, &cfg).is_err());
    }
}
