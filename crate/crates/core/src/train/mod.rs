//! Objective, gradients, optimizer and the training loop.

pub mod adagrad;
pub mod backward;
pub mod gradcheck;
pub mod loss;
pub mod sampling;

pub use adagrad::{adagrad_step, adagrad_update, OptimizerState};
pub use backward::{backward, touched_regularizer, Gradients, RowGrads};
pub use gradcheck::{all_configs, gradcheck, gradcheck_with, ArrayError, GradcheckInstance, GradcheckReport};
pub use loss::{instance_log_loss, log_loss, score_gradient, sigmoid, PROB_EPS};
pub use sampling::sample_negatives;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, ModelKind, TrainConfig};
use crate::data::{SplitDataset, SplitPart};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsRecord, ModelScorer};
use crate::params::{init_parameters, ParameterSet, Pretrained};
use crate::predict::{forward_unchecked, PredictionContext};

/// Cut-off used for per-epoch validation.
pub const VALIDATION_N: usize = 10;

/// One labelled (user, item) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainInstance {
    pub user: usize,
    pub item: usize,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean instance log loss plus λ‖Θ‖² after the epoch.
    pub loss: f64,
    pub validation: Option<MetricsRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch if there is
    /// no validation data).
    pub params: ParameterSet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Positives of every user plus `neg_ratio` fresh negatives per positive.
pub fn epoch_instances(train: &[Vec<usize>], item_count: usize, neg_ratio: usize, rng: &mut ChaCha8Rng) -> Result<Vec<TrainInstance>> {
    let mut instances = Vec::new();
    let mut negatives = Vec::new();
    for (user, positives) in train.iter().enumerate() {
        if positives.is_empty() {
            continue;
        }
        instances.extend(positives.iter().map(|&item| TrainInstance { user, item, label: true }));
        negatives.clear();
        sampling::sample_into(positives, neg_ratio * positives.len(), item_count, rng, &mut negatives)?;
        instances.extend(negatives.iter().map(|&item| TrainInstance { user, item, label: false }));
    }
    Ok(instances)
}

/// Per-instance Adagrad training with validation-based model selection.
pub fn train(
    split: &SplitDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    pretrained: Option<&Pretrained>,
) -> Result<TrainOutcome> {
    train_with_observer(split, model_config, train_config, pretrained, |_| {})
}

/// [`train`], calling `observer` after every epoch.
pub fn train_with_observer(
    split: &SplitDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    pretrained: Option<&Pretrained>,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    if split.train.iter().all(Vec::is_empty) {
        return Err(Error::Data("the training split is empty".into()));
    }
    let items = split.item_count();
    let users = split.user_count();
    let mut params = init_parameters(model_config, items, users, train_config.seed, pretrained)?;
    let mut state = OptimizerState::new(model_config, items, users);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    rng.set_stream(1);
    let has_validation = split.validation.iter().any(|v| !v.is_empty());

    let mut history = Vec::with_capacity(train_config.epochs);
    let mut best: Option<(f64, usize, ParameterSet)> = None;
    for epoch in 1..=train_config.epochs {
        let mut instances = epoch_instances(&split.train, items, train_config.neg_ratio, &mut rng)?;
        instances.shuffle(&mut rng);
        let mut data_loss = 0.0;
        for inst in &instances {
            let ctx = PredictionContext::from_positives(inst.user, inst.item, &split.train[inst.user]);
            let fwd = forward_unchecked(&ctx, &params, model_config);
            data_loss += instance_log_loss(fwd.score, inst.label);
            let d_score = score_gradient(fwd.score, inst.label);
            let grads = backward(&fwd, &ctx, &params, model_config, d_score, train_config.lambda);
            adagrad_step(&mut params, &grads, &mut state, train_config.learning_rate, train_config.adagrad_epsilon);
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("parameters diverged during epoch {epoch}")));
        }
        let loss = data_loss / instances.len() as f64 + train_config.lambda * params.squared_norm();
        let validation = if has_validation {
            let scorer = ModelScorer::new(&params, model_config, &split.train)?;
            Some(evaluate(&scorer, split, SplitPart::Validation, VALIDATION_N)?)
        } else {
            None
        };
        let record = EpochRecord { epoch, loss, validation };
        observer(&record);

        let mut stop = false;
        match &record.validation {
            Some(metrics) => {
                let improved = best.as_ref().is_none_or(|(hr, _, _)| metrics.hr > *hr);
                if improved {
                    best = Some((metrics.hr, epoch, params.clone()));
                } else if train_config.early_stop_patience > 0
                    && best.as_ref().is_some_and(|(_, e, _)| epoch - e >= train_config.early_stop_patience)
                {
                    stop = true;
                }
            }
            None => best = Some((0.0, epoch, params.clone())),
        }
        history.push(record);
        if stop {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}

/// Trains FISM with the same objective and optimizer and returns its
/// embedding tables for warm-starting an attentive model.
pub fn pretrain_fism(split: &SplitDataset, model_config: &ModelConfig, train_config: &TrainConfig) -> Result<Pretrained> {
    let mut fism = ModelConfig::new(ModelKind::Fism, model_config.d);
    fism.alpha = model_config.alpha;
    let outcome = train(split, &fism, train_config, None)?;
    Ok(Pretrained {
        target_emb: outcome.params.target_emb,
        history_emb: outcome.params.history_emb,
    })
}
