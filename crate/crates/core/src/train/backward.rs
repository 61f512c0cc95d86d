//! Exact gradients of the per-instance objective.
//!
//! The per-instance objective is the log loss of one (user, item, label)
//! instance plus `λ Σ θ²` over the parameters that instance reads: the
//! target row of `P`, the history rows of `Q`, every network array of the
//! model and, for the DeepICF family, `b_u` and `b_i`. Untouched embedding
//! rows get exactly zero gradient.

use crate::attention::{smoothed_softmax_backward, AttentionForward};
use crate::config::{AttentionMode, Design, ModelConfig};
use crate::params::{axpy, dot, Matrix, ParameterSet};
use crate::predict::{Forward, PredictionContext};

/// Gradient rows for a subset of an embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrads {
    pub indices: Vec<usize>,
    pub values: Matrix,
}

impl RowGrads {
    fn new(indices: Vec<usize>, d: usize) -> Self {
        let values = Matrix::zeros(indices.len(), d);
        RowGrads { indices, values }
    }

    fn empty(d: usize) -> Self {
        RowGrads::new(Vec::new(), d)
    }
}

/// Gradients of one instance. Dense arrays mirror the [`ParameterSet`]
/// layout; embedding tables and biases are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub target_rows: RowGrads,
    pub history_rows: RowGrads,
    pub attn_weight: Matrix,
    pub attn_bias: Vec<f64>,
    pub feature_out: Matrix,
    pub item_out: Vec<f64>,
    pub deep_weights: Vec<Matrix>,
    pub deep_biases: Vec<Vec<f64>>,
    pub regression: Vec<f64>,
    pub user_bias: Option<(usize, f64)>,
    pub item_bias: Option<(usize, f64)>,
    /// Whether the dense network arrays were read by the forward pass.
    pub network_touched: bool,
}

impl Gradients {
    fn zeros(params: &ParameterSet) -> Self {
        let d = params.target_emb.cols();
        Gradients {
            target_rows: RowGrads::empty(d),
            history_rows: RowGrads::empty(d),
            attn_weight: Matrix::zeros(params.attn_weight.rows(), params.attn_weight.cols()),
            attn_bias: vec![0.0; params.attn_bias.len()],
            feature_out: Matrix::zeros(params.feature_out.rows(), params.feature_out.cols()),
            item_out: vec![0.0; params.item_out.len()],
            deep_weights: params.deep_weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            deep_biases: params.deep_biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            regression: vec![0.0; params.regression.len()],
            user_bias: None,
            item_bias: None,
            network_touched: false,
        }
    }

    /// Expands to dense arrays in [`ParameterSet::arrays`] order.
    pub fn to_dense(&self, params: &ParameterSet) -> Vec<(String, Vec<f64>)> {
        let mut dense: Vec<(String, Vec<f64>)> =
            params.arrays().into_iter().map(|(n, a)| (n, vec![0.0; a.len()])).collect();
        let d = params.target_emb.cols();
        for (slot, rows) in [(0usize, &self.target_rows), (1, &self.history_rows)] {
            for (r, &i) in rows.indices.iter().enumerate() {
                dense[slot].1[i * d..(i + 1) * d].copy_from_slice(rows.values.row(r));
            }
        }
        dense[2].1.copy_from_slice(self.attn_weight.as_slice());
        dense[3].1.copy_from_slice(&self.attn_bias);
        dense[4].1.copy_from_slice(self.feature_out.as_slice());
        dense[5].1.copy_from_slice(&self.item_out);
        let mut slot = 6;
        for (w, b) in self.deep_weights.iter().zip(&self.deep_biases) {
            dense[slot].1.copy_from_slice(w.as_slice());
            dense[slot + 1].1.copy_from_slice(b);
            slot += 2;
        }
        dense[slot].1.copy_from_slice(&self.regression);
        if let Some((u, g)) = self.user_bias {
            dense[slot + 1].1[u] = g;
        }
        if let Some((i, g)) = self.item_bias {
            dense[slot + 2].1[i] = g;
        }
        dense
    }

    /// Visits every (gradient, parameter) pair of touched entries.
    pub(crate) fn for_each_dense_pair(&mut self, params: &ParameterSet, mut f: impl FnMut(&mut f64, f64)) {
        for (rows, table) in [
            (&mut self.target_rows, &params.target_emb),
            (&mut self.history_rows, &params.history_emb),
        ] {
            for (r, &i) in rows.indices.iter().enumerate() {
                for (g, &t) in rows.values.row_mut(r).iter_mut().zip(table.row(i)) {
                    f(g, t);
                }
            }
        }
        if self.network_touched {
            let pairs: [(&mut [f64], &[f64]); 4] = [
                (self.attn_weight.as_mut_slice(), params.attn_weight.as_slice()),
                (&mut self.attn_bias, &params.attn_bias),
                (self.feature_out.as_mut_slice(), params.feature_out.as_slice()),
                (&mut self.item_out, &params.item_out),
            ];
            for (gs, ts) in pairs {
                for (g, &t) in gs.iter_mut().zip(ts) {
                    f(g, t);
                }
            }
            for (gw, w) in self.deep_weights.iter_mut().zip(&params.deep_weights) {
                for (g, &t) in gw.as_mut_slice().iter_mut().zip(w.as_slice()) {
                    f(g, t);
                }
            }
            for (gb, b) in self.deep_biases.iter_mut().zip(&params.deep_biases) {
                for (g, &t) in gb.iter_mut().zip(b) {
                    f(g, t);
                }
            }
            for (g, &t) in self.regression.iter_mut().zip(&params.regression) {
                f(g, t);
            }
        }
        if let Some((u, ref mut g)) = self.user_bias {
            f(g, params.user_bias[u]);
        }
        if let Some((i, ref mut g)) = self.item_bias {
            f(g, params.item_bias[i]);
        }
    }
}

/// `λ Σ θ²` over the parameters an instance touches.
pub fn touched_regularizer(ctx: &PredictionContext, params: &ParameterSet, config: &ModelConfig, lambda: f64) -> f64 {
    let mut total = 0.0;
    let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    if !ctx.history().is_empty() {
        total += sq(params.target_emb.row(ctx.target()));
        for &j in ctx.history() {
            total += sq(params.history_emb.row(j));
        }
        total += sq(params.attn_weight.as_slice())
            + sq(&params.attn_bias)
            + sq(params.feature_out.as_slice())
            + sq(&params.item_out)
            + params.deep_weights.iter().map(|w| sq(w.as_slice())).sum::<f64>()
            + params.deep_biases.iter().map(|b| sq(b)).sum::<f64>()
            + sq(&params.regression);
    }
    if config.kind.is_deep() {
        total += params.user_bias[ctx.user].powi(2) + params.item_bias[ctx.target()].powi(2);
    }
    lambda * total
}

/// Back-propagates `∂ℓ/∂r̂ = d_score` through the cached forward pass and adds
/// the `2λθ` regularization gradient on touched parameters.
pub fn backward(
    fwd: &Forward,
    ctx: &PredictionContext,
    params: &ParameterSet,
    config: &ModelConfig,
    d_score: f64,
    lambda: f64,
) -> Gradients {
    let mut grads = Gradients::zeros(params);
    let d = config.d;

    if config.kind.is_deep() {
        grads.user_bias = Some((ctx.user, d_score));
        grads.item_bias = Some((ctx.target(), d_score));
    }

    if !fwd.fallback {
        grads.network_touched = true;
        let n = ctx.history().len();
        let p = params.target_emb.row(ctx.target());

        // ∂r/∂y for the pooled vector y.
        let d_pooled = match &fwd.deep {
            None => vec![d_score; d],
            Some(deep) => {
                let last = deep.post.last().expect("at least one deep layer");
                for (g, e) in grads.regression.iter_mut().zip(last) {
                    *g = d_score * e;
                }
                let mut upstream: Vec<f64> = params.regression.iter().map(|v| d_score * v).collect();
                for l in (0..params.deep_weights.len()).rev() {
                    let dz: Vec<f64> = upstream
                        .iter()
                        .zip(&deep.pre[l])
                        .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                        .collect();
                    let input = if l == 0 { &fwd.pooled } else { &deep.post[l - 1] };
                    grads.deep_weights[l].add_outer(&dz, input);
                    for (gb, g) in grads.deep_biases[l].iter_mut().zip(&dz) {
                        *gb += g;
                    }
                    let mut down = vec![0.0; input.len()];
                    params.deep_weights[l].add_tmul_vec(&dz, &mut down);
                    upstream = down;
                }
                upstream
            }
        };

        // Pooling: y = Σ_j A_j ⊙ x_j.
        let mut d_inter = Matrix::zeros(n, d);
        let mut d_item = vec![0.0; n];
        let mut d_feature = Matrix::zeros(0, 0);
        match fwd.attention.as_ref().and_then(|a| a.feature.as_ref()) {
            Some(feature) => {
                d_feature = Matrix::zeros(n, d);
                for j in 0..n {
                    let x = fwd.interactions.row(j);
                    let a = feature.weights.row(j);
                    for k in 0..d {
                        d_inter[(j, k)] = a[k] * d_pooled[k];
                        d_feature[(j, k)] = d_pooled[k] * x[k];
                    }
                }
            }
            None => {
                for j in 0..n {
                    let w = fwd.item_weights[j];
                    let x = fwd.interactions.row(j);
                    for k in 0..d {
                        d_inter[(j, k)] = w * d_pooled[k];
                    }
                    d_item[j] = dot(&d_pooled, x);
                }
            }
        }

        let mut d_target = vec![0.0; d];
        let mut history_grads = RowGrads::new(ctx.history().to_vec(), d);

        if let Some(att) = &fwd.attention {
            attention_backward(
                att,
                params,
                config,
                &d_item,
                &d_feature,
                &mut grads,
                &mut d_inter,
                &mut d_target,
                &mut history_grads,
            );
        }

        // Interactions x_j = p ⊙ q_j.
        for (j, &item) in ctx.history().iter().enumerate() {
            let q = params.history_emb.row(item);
            let dx = d_inter.row(j);
            let dq = history_grads.values.row_mut(j);
            for k in 0..d {
                d_target[k] += dx[k] * q[k];
                dq[k] += dx[k] * p[k];
            }
        }

        let mut target_grads = RowGrads::new(vec![ctx.target()], d);
        target_grads.values.row_mut(0).copy_from_slice(&d_target);
        grads.target_rows = target_grads;
        grads.history_rows = history_grads;
    }

    if lambda != 0.0 {
        grads.for_each_dense_pair(params, |g, theta| *g += 2.0 * lambda * theta);
    }
    grads
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    att: &AttentionForward,
    params: &ParameterSet,
    config: &ModelConfig,
    d_item_weights: &[f64],
    d_feature_weights: &Matrix,
    grads: &mut Gradients,
    d_inter: &mut Matrix,
    d_target: &mut [f64],
    history_grads: &mut RowGrads,
) {
    let n = att.history_len();
    let d = config.d;
    let dp = params.attn_weight.rows();
    let beta = config.beta;

    // ∂/∂ hidden activations, history × d′.
    let mut d_hidden = Matrix::zeros(n, dp);
    let mut d_item_logits = vec![0.0; n];

    match &att.feature {
        None => {
            let item = att.item.as_ref().expect("item attention");
            smoothed_softmax_backward(&item.logits, &item.weights, &item.shares, beta, d_item_weights, &mut d_item_logits);
        }
        Some(feature) => {
            let mut d_logits = Matrix::zeros(n, d);
            match feature.design {
                Design::Design1 => {
                    let item = att.item.as_ref().expect("design 1 item attention");
                    let mut d_b = vec![0.0; n];
                    for j in 0..n {
                        let c = feature.normalized.row(j);
                        let g = d_feature_weights.row(j);
                        let bj = item.weights[j];
                        d_b[j] = dot(g, c);
                        // softmax Jacobian with upstream bj·g
                        let inner = bj * d_b[j];
                        for (dl, (ck, gk)) in d_logits.row_mut(j).iter_mut().zip(c.iter().zip(g)) {
                            *dl = ck * (bj * gk - inner);
                        }
                    }
                    smoothed_softmax_backward(&item.logits, &item.weights, &item.shares, beta, &d_b, &mut d_item_logits);
                }
                Design::Design2 => {
                    let mut col_logits = vec![0.0; n];
                    let mut col_w = vec![0.0; n];
                    let mut col_s = vec![0.0; n];
                    let mut col_g = vec![0.0; n];
                    let mut col_out = vec![0.0; n];
                    for k in 0..d {
                        for j in 0..n {
                            col_logits[j] = feature.logits[(j, k)];
                            col_w[j] = feature.weights[(j, k)];
                            col_s[j] = feature.normalized[(j, k)];
                            col_g[j] = d_feature_weights[(j, k)];
                        }
                        smoothed_softmax_backward(&col_logits, &col_w, &col_s, beta, &col_g, &mut col_out);
                        for j in 0..n {
                            d_logits[(j, k)] = col_out[j];
                        }
                    }
                }
            }
            // â_j = Hᵀ a_j
            for j in 0..n {
                grads.feature_out.add_outer(att.hidden.row(j), d_logits.row(j));
                let dh = d_hidden.row_mut(j);
                for (t, slot) in dh.iter_mut().enumerate() {
                    *slot += dot(params.feature_out.row(t), d_logits.row(j));
                }
            }
        }
    }

    if att.item.is_some() {
        // v_j = h·a_j
        for j in 0..n {
            let dv = d_item_logits[j];
            if dv != 0.0 {
                axpy(dv, att.hidden.row(j), &mut grads.item_out);
                axpy(dv, &params.item_out, d_hidden.row_mut(j));
            }
        }
    }

    let concat = config.attention_mode == AttentionMode::Concat && params.attn_weight.cols() == 2 * d;
    let mut d_input = vec![0.0; params.attn_weight.cols()];
    for j in 0..n {
        let dz: Vec<f64> = d_hidden
            .row(j)
            .iter()
            .zip(att.pre.row(j))
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        grads.attn_weight.add_outer(&dz, att.inputs.row(j));
        for (gb, g) in grads.attn_bias.iter_mut().zip(&dz) {
            *gb += g;
        }
        d_input.iter_mut().for_each(|v| *v = 0.0);
        params.attn_weight.add_tmul_vec(&dz, &mut d_input);
        if concat {
            for k in 0..d {
                d_target[k] += d_input[k];
            }
            for (g, v) in history_grads.values.row_mut(j).iter_mut().zip(&d_input[d..]) {
                *g += v;
            }
        } else {
            for (g, v) in d_inter.row_mut(j).iter_mut().zip(&d_input) {
                *g += v;
            }
        }
    }
}
