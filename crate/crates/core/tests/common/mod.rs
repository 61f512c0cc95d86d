//! Shared helpers: random parameter draws, naive re-implementations used as
//! oracles, and a synthetic interaction generator.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use flaicf_core::config::{AttentionMode, Design, ModelConfig, ModelKind};
use flaicf_core::params::ParameterSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every array of `config` filled with N(0, std²).
pub fn random_params(config: &ModelConfig, items: usize, users: usize, std: f64, rng: &mut ChaCha8Rng) -> ParameterSet {
    let mut params = ParameterSet::zeros(config, items, users);
    let normal = Normal::new(0.0, std).unwrap();
    for (_, arr) in params.arrays_mut() {
        for v in arr.iter_mut() {
            *v = normal.sample(rng);
        }
    }
    params
}

pub fn random_vec(n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// `count` distinct items from `0..items`, in random order.
pub fn distinct_items(items: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..items).collect();
    for i in 0..count {
        let j = rng.random_range(i..items);
        all.swap(i, j);
    }
    all.truncate(count);
    all
}

// ---- naive oracles ------------------------------------------------------

fn matvec(rows: usize, cols: usize, data: &[f64], x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            let mut s = 0.0;
            for c in 0..cols {
                s += data[r * cols + c] * x[c];
            }
            s
        })
        .collect()
}

/// `ReLU(W x + b)` with `x = p ⊙ q` or `[p; q]`.
pub fn naive_hidden(params: &ParameterSet, p: &[f64], q: &[f64], mode: AttentionMode) -> Vec<f64> {
    let x: Vec<f64> = match mode {
        AttentionMode::Prod => p.iter().zip(q).map(|(a, b)| a * b).collect(),
        AttentionMode::Concat => p.iter().chain(q).copied().collect(),
    };
    let w = &params.attn_weight;
    let z = matvec(w.rows(), w.cols(), w.as_slice(), &x);
    z.iter().zip(&params.attn_bias).map(|(a, b)| f64::max(a + b, 0.0)).collect()
}

pub fn naive_item_logit(params: &ParameterSet, p: &[f64], q: &[f64], mode: AttentionMode) -> f64 {
    naive_hidden(params, p, q, mode)
        .iter()
        .zip(&params.item_out)
        .map(|(a, h)| a * h)
        .sum()
}

pub fn naive_feature_logits(params: &ParameterSet, p: &[f64], q: &[f64]) -> Vec<f64> {
    let hidden = naive_hidden(params, p, q, AttentionMode::Prod);
    let h = &params.feature_out;
    (0..h.cols())
        .map(|k| (0..h.rows()).map(|t| h[(t, k)] * hidden[t]).sum())
        .collect()
}

/// Direct `exp(v_j) / (Σ exp(v))^β`, no shifting or clamping.
pub fn naive_smoothed(logits: &[f64], beta: f64) -> Vec<f64> {
    let denom: f64 = logits.iter().map(|v| v.exp()).sum();
    logits.iter().map(|v| v.exp() / denom.powf(beta)).collect()
}

pub fn naive_softmax(logits: &[f64]) -> Vec<f64> {
    let denom: f64 = logits.iter().map(|v| v.exp()).sum();
    logits.iter().map(|v| v.exp() / denom).collect()
}

pub fn naive_nais_weights(params: &ParameterSet, p: &[f64], history: &[&[f64]], beta: f64, mode: AttentionMode) -> Vec<f64> {
    let logits: Vec<f64> = history.iter().map(|q| naive_item_logit(params, p, q, mode)).collect();
    naive_smoothed(&logits, beta)
}

/// Per-feature weights, history × d, row-major.
pub fn naive_feature_weights(params: &ParameterSet, p: &[f64], history: &[&[f64]], beta: f64, design: Design) -> Vec<Vec<f64>> {
    let logits: Vec<Vec<f64>> = history.iter().map(|q| naive_feature_logits(params, p, q)).collect();
    match design {
        Design::Design1 => {
            let b = naive_nais_weights(params, p, history, beta, AttentionMode::Prod);
            logits
                .iter()
                .zip(&b)
                .map(|(row, bj)| naive_softmax(row).iter().map(|c| bj * c).collect())
                .collect()
        }
        Design::Design2 => {
            let d = p.len();
            let mut out = vec![vec![0.0; d]; history.len()];
            for k in 0..d {
                let col: Vec<f64> = logits.iter().map(|r| r[k]).collect();
                for (j, w) in naive_smoothed(&col, beta).into_iter().enumerate() {
                    out[j][k] = w;
                }
            }
            out
        }
    }
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

/// Score of any model kind, recomposed from scratch.
pub fn naive_score(config: &ModelConfig, params: &ParameterSet, user: usize, target: usize, history: &[usize]) -> f64 {
    let d = config.d;
    let p = params.target_emb.row(target);
    let qs: Vec<&[f64]> = history.iter().map(|&j| params.history_emb.row(j)).collect();
    if history.is_empty() {
        return if config.kind.is_deep() {
            params.user_bias[user] + params.item_bias[target]
        } else {
            0.0
        };
    }
    // e = Σ_j A_j ⊙ p ⊙ q_j with A_j broadcast from a scalar where needed.
    let weights: Vec<Vec<f64>> = match config.kind {
        ModelKind::Fism => vec![vec![(history.len() as f64).powf(-config.alpha); d]; history.len()],
        ModelKind::Nais => naive_nais_weights(params, p, &qs, config.beta, config.attention_mode)
            .into_iter()
            .map(|w| vec![w; d])
            .collect(),
        ModelKind::DeepIcf => naive_nais_weights(params, p, &qs, config.beta, AttentionMode::Prod)
            .into_iter()
            .map(|w| vec![w; d])
            .collect(),
        ModelKind::FlaNais | ModelKind::FlaDicf => naive_feature_weights(params, p, &qs, config.beta, config.design),
    };
    let mut e = vec![0.0; d];
    for (q, a) in qs.iter().zip(&weights) {
        for k in 0..d {
            e[k] += a[k] * p[k] * q[k];
        }
    }
    if !config.kind.is_deep() {
        return e.iter().sum();
    }
    naive_deep_head(params, &e, user, target)
}

pub fn naive_deep_head(params: &ParameterSet, e: &[f64], user: usize, target: usize) -> f64 {
    let mut h = e.to_vec();
    for (w, b) in params.deep_weights.iter().zip(&params.deep_biases) {
        let z = matvec(w.rows(), w.cols(), w.as_slice(), &h);
        h = relu(z.iter().zip(b).map(|(a, c)| a + c).collect());
    }
    h.iter().zip(&params.regression).map(|(a, v)| a * v).sum::<f64>() + params.user_bias[user] + params.item_bias[target]
}

/// Naive DCG/IDCG over a ranked list.
pub fn naive_ndcg(ranked: &[usize], test: &[usize], n: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().enumerate().take(n) {
        if test.contains(item) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..n.min(test.len()) {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Full sort by (score desc, index asc), excluded items removed, first n.
pub fn naive_rank(scores: &[f64], excluded: &[usize], n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..scores.len()).filter(|i| !excluded.contains(i)).collect();
    all.sort_by(|&a, &b| {
        if scores[a] > scores[b] {
            std::cmp::Ordering::Less
        } else if scores[a] < scores[b] {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });
    all.truncate(n);
    all
}

// ---- synthetic data -----------------------------------------------------

/// Clustered implicit feedback with a popularity skew: each user belongs to
/// one of `clusters` taste groups and draws most items from that group's
/// block, the rest from a global Zipf-like distribution. Written as
/// `user<TAB>item` lines with raw ids `u<k>` / `i<k>`.
pub fn synthetic_tsv(users: usize, items: usize, clusters: usize, per_user: usize, seed: u64) -> String {
    let mut rng = rng(seed);
    let block = items / clusters;
    // Zipf-like global popularity: weight 1/(rank+1).
    let weights: Vec<f64> = (0..items).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut text = String::new();
    for u in 0..users {
        let c = u % clusters;
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < per_user {
            let item = if rng.random_bool(0.75) {
                // Within-cluster popularity is skewed too.
                let r: f64 = rng.random::<f64>();
                c * block + ((r * r) * block as f64) as usize
            } else {
                let mut x = rng.random::<f64>() * total;
                let mut i = 0;
                while x > weights[i] && i + 1 < items {
                    x -= weights[i];
                    i += 1;
                }
                i
            };
            chosen.insert(item);
        }
        for i in chosen {
            writeln!(text, "u{u}\ti{i}").unwrap();
        }
    }
    text
}

pub fn write_synthetic(path: &Path, users: usize, items: usize, clusters: usize, per_user: usize, seed: u64) {
    std::fs::write(path, synthetic_tsv(users, items, clusters, per_user, seed)).unwrap();
}
