//! Full-ranking top-n evaluation and the non-learned baselines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::{SplitDataset, SplitPart};
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::predict::{forward_unchecked, PredictionContext};

/// Anything that can score every item for a user.
pub trait Scorer: Sync {
    fn item_count(&self) -> usize;
    /// Scores for items `0..item_count()`.
    fn score_all(&self, user: usize) -> Vec<f64>;
}

/// Top-`n` non-excluded items by descending score, ties by ascending index.
pub fn rank_scores(scores: &[f64], excluded: &[bool], n: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| !excluded.get(i).copied().unwrap_or(false)).collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if n == 0 {
        return Vec::new();
    }
    if candidates.len() > n {
        candidates.select_nth_unstable_by(n - 1, cmp);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(cmp);
    candidates
}

/// Ranks every item outside `excluded` for `user`.
pub fn rank_items<S: Scorer + ?Sized>(scorer: &S, user: usize, excluded: &[usize], n: usize) -> Vec<usize> {
    let scores = scorer.score_all(user);
    let mut mask = vec![false; scores.len()];
    for &i in excluded {
        if i < mask.len() {
            mask[i] = true;
        }
    }
    rank_scores(&scores, &mask, n)
}

/// 1 if any test item is in `ranked`, else 0.
pub fn hr_at_n(ranked: &[usize], test_items: &[usize]) -> f64 {
    if ranked.iter().any(|i| test_items.contains(i)) {
        1.0
    } else {
        0.0
    }
}

/// Binary-relevance NDCG; the ideal ranking puts `min(n, |test|)` hits first.
pub fn ndcg_at_n(ranked: &[usize], test_items: &[usize], n: usize) -> f64 {
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, i)| test_items.contains(i))
        .map(|(p, _)| gain(p))
        .sum();
    let idcg: f64 = (0..n.min(test_items.len())).map(gain).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub user: usize,
    pub ranked: Vec<usize>,
    pub hit: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub split: String,
    pub n: usize,
    /// Mean per-user HR@n.
    pub hr: f64,
    /// Mean per-user NDCG@n.
    pub ndcg: f64,
    /// Users with at least one target item.
    pub users: usize,
}

impl fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "split={} hr@{n}={:.6} ndcg@{n}={:.6}",
            self.split,
            self.hr,
            self.ndcg,
            n = self.n
        )
    }
}

/// Per-user rankings for every user holding items in `part`. Test
/// rankings exclude training and validation positives, validation rankings
/// exclude training positives.
pub fn rank_users<S: Scorer + ?Sized>(scorer: &S, split: &SplitDataset, part: SplitPart, n: usize) -> Vec<RankingResult> {
    let targets = split.part(part);
    let users: Vec<usize> = (0..split.user_count()).filter(|&u| !targets[u].is_empty()).collect();
    users
        .into_par_iter()
        .map(|u| {
            let mut excluded = split.train[u].clone();
            if part == SplitPart::Test {
                excluded.extend_from_slice(&split.validation[u]);
            }
            let ranked = rank_items(scorer, u, &excluded, n);
            RankingResult {
                user: u,
                hit: hr_at_n(&ranked, &targets[u]),
                ndcg: ndcg_at_n(&ranked, &targets[u], n),
                ranked,
            }
        })
        .collect()
}

/// Mean HR@n and NDCG@n over users with a nonempty `part`.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, split: &SplitDataset, part: SplitPart, n: usize) -> Result<MetricsRecord> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if part == SplitPart::Train {
        return Err(Error::Config("evaluation runs on the validation or test split".into()));
    }
    if scorer.item_count() != split.item_count() {
        return Err(Error::Shape {
            what: "scorer item count".into(),
            expected: split.item_count().to_string(),
            actual: scorer.item_count().to_string(),
        });
    }
    let results = rank_users(scorer, split, part, n);
    if results.is_empty() {
        return Err(Error::Data(format!("the {} split holds no items", part.name())));
    }
    // Sequential sums keep the aggregate independent of the thread count.
    let (hr, ndcg) = results.iter().fold((0.0, 0.0), |(h, g), r| (h + r.hit, g + r.ndcg));
    let users = results.len();
    Ok(MetricsRecord {
        split: part.name().to_string(),
        n,
        hr: hr / users as f64,
        ndcg: ndcg / users as f64,
        users,
    })
}

/// Scores with a trained model, using each user's training positives as history.
pub struct ModelScorer<'a> {
    pub params: &'a ParameterSet,
    pub config: &'a ModelConfig,
    pub train: &'a [Vec<usize>],
}

impl<'a> ModelScorer<'a> {
    pub fn new(params: &'a ParameterSet, config: &'a ModelConfig, train: &'a [Vec<usize>]) -> Result<Self> {
        if train.len() > params.user_count() && config.kind.is_deep() {
            return Err(Error::Shape {
                what: "user count".into(),
                expected: params.user_count().to_string(),
                actual: train.len().to_string(),
            });
        }
        Ok(ModelScorer { params, config, train })
    }
}

impl Scorer for ModelScorer<'_> {
    fn item_count(&self) -> usize {
        self.params.item_count()
    }

    fn score_all(&self, user: usize) -> Vec<f64> {
        let positives = &self.train[user];
        let mut ctx = PredictionContext::from_positives(user, usize::MAX, positives);
        (0..self.item_count())
            .map(|i| {
                if positives.binary_search(&i).is_ok() {
                    forward_unchecked(&PredictionContext::from_positives(user, i, positives), self.params, self.config).score
                } else {
                    ctx.retarget(i).expect("item outside the history");
                    forward_unchecked(&ctx, self.params, self.config).score
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    Random,
    Pop,
    ItemKnn,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RANDOM" => Ok(BaselineKind::Random),
            "POP" => Ok(BaselineKind::Pop),
            "ITEMKNN" => Ok(BaselineKind::ItemKnn),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Random => "RANDOM",
            BaselineKind::Pop => "POP",
            BaselineKind::ItemKnn => "ITEMKNN",
        })
    }
}

/// Uniform scores in [0, 1) that depend only on (seed, user, item).
pub struct RandomScorer {
    pub seed: u64,
    pub item_count: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Scorer for RandomScorer {
    fn item_count(&self) -> usize {
        self.item_count
    }

    fn score_all(&self, user: usize) -> Vec<f64> {
        let base = splitmix64(self.seed ^ splitmix64(user as u64));
        (0..self.item_count)
            .map(|i| (splitmix64(base ^ i as u64) >> 11) as f64 / (1u64 << 53) as f64)
            .collect()
    }
}

/// Training interaction counts.
pub struct PopScorer {
    pub counts: Vec<f64>,
}

impl PopScorer {
    pub fn new(train: &[Vec<usize>], item_count: usize) -> Self {
        let mut counts = vec![0.0; item_count];
        for list in train {
            for &i in list {
                counts[i] += 1.0;
            }
        }
        PopScorer { counts }
    }
}

impl Scorer for PopScorer {
    fn item_count(&self) -> usize {
        self.counts.len()
    }

    fn score_all(&self, _user: usize) -> Vec<f64> {
        self.counts.clone()
    }
}

/// Item-based CF with cosine similarity over binary user sets.
pub struct ItemKnnScorer {
    /// `neighbors[i]`: (j, cos(i, j)) for the retained neighbors of target i.
    neighbors: Vec<Vec<(usize, f64)>>,
    train: Vec<Vec<usize>>,
}

impl ItemKnnScorer {
    /// `k = None` keeps every neighbor with nonzero similarity.
    pub fn new(train: &[Vec<usize>], item_count: usize, k: Option<usize>) -> Self {
        let mut users_of = vec![Vec::new(); item_count];
        for (u, list) in train.iter().enumerate() {
            for &i in list {
                users_of[i].push(u);
            }
        }
        let neighbors = (0..item_count)
            .into_par_iter()
            .map(|i| {
                let mut overlap = vec![0usize; item_count];
                for &u in &users_of[i] {
                    for &j in &train[u] {
                        overlap[j] += 1;
                    }
                }
                let di = users_of[i].len() as f64;
                let mut list: Vec<(usize, f64)> = overlap
                    .iter()
                    .enumerate()
                    .filter(|&(j, &c)| j != i && c > 0)
                    .map(|(j, &c)| (j, c as f64 / (di * users_of[j].len() as f64).sqrt()))
                    .collect();
                if let Some(k) = k {
                    list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    list.truncate(k);
                    list.sort_by_key(|e| e.0);
                }
                list
            })
            .collect();
        ItemKnnScorer {
            neighbors,
            train: train.to_vec(),
        }
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|p| self.neighbors[i][p].1)
            .unwrap_or(0.0)
    }
}

impl Scorer for ItemKnnScorer {
    fn item_count(&self) -> usize {
        self.neighbors.len()
    }

    fn score_all(&self, user: usize) -> Vec<f64> {
        let mut mask = vec![false; self.neighbors.len()];
        for &j in &self.train[user] {
            mask[j] = true;
        }
        self.neighbors
            .iter()
            .map(|list| list.iter().filter(|(j, _)| mask[*j]).map(|(_, s)| s).sum())
            .collect()
    }
}

/// Builds a baseline scorer from the training split.
pub fn baseline_scores(kind: BaselineKind, split: &SplitDataset, seed: u64, knn_k: Option<usize>) -> Result<Box<dyn Scorer>> {
    if split.train.iter().all(Vec::is_empty) {
        return Err(Error::Data("the training split is empty".into()));
    }
    let items = split.item_count();
    Ok(match kind {
        BaselineKind::Random => Box::new(RandomScorer { seed, item_count: items }),
        BaselineKind::Pop => Box::new(PopScorer::new(&split.train, items)),
        BaselineKind::ItemKnn => Box::new(ItemKnnScorer::new(&split.train, items, knn_k)),
    })
}
