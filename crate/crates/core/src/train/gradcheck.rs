//! Finite-difference verification of the analytic gradients.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{AttentionMode, Design, ModelConfig, ModelKind};
use crate::error::Result;
use crate::params::ParameterSet;
use crate::predict::{forward_unchecked, PredictionContext};
use crate::train::backward::{backward, touched_regularizer, Gradients};
use crate::train::loss::{instance_log_loss, score_gradient};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so entries whose true gradient
/// is (numerically) zero are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

const PARAM_STD: f64 = 0.5;
const KINK_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayError {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub config: ModelConfig,
    pub tolerance: f64,
    pub arrays: Vec<ArrayError>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck model={} design={} mode={} d={} dp={} tolerance={:e}",
            self.config.kind,
            self.config.design,
            self.config.attention_mode,
            self.config.d,
            self.config.d_prime,
            self.tolerance
        )?;
        for a in &self.arrays {
            writeln!(f, "  array={} entries={} max_rel_err={:.3e}", a.name, a.entries, a.max_rel_error)?;
        }
        write!(
            f,
            "result={} max_rel_err={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_error()
        )
    }
}

/// A random single-instance problem for gradient checking.
#[derive(Debug, Clone)]
pub struct GradcheckInstance {
    pub params: ParameterSet,
    pub config: ModelConfig,
    pub ctx: PredictionContext,
    pub label: bool,
    pub lambda: f64,
}

impl GradcheckInstance {
    /// Draws parameters and an instance with `history_len` history items.
    /// Draws that put any ReLU pre-activation within reach of its kink are
    /// rejected, since finite differences are meaningless there.
    pub fn random(config: &ModelConfig, seed: u64, history_len: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let item_count = history_len + 3;
        let user_count = 3;
        let normal = Normal::new(0.0, PARAM_STD).expect("valid normal");
        loop {
            let mut params = ParameterSet::zeros(config, item_count, user_count);
            for (_, arr) in params.arrays_mut() {
                for v in arr.iter_mut() {
                    *v = normal.sample(&mut rng);
                }
            }
            let mut items: Vec<usize> = (0..item_count).collect();
            for i in (1..items.len()).rev() {
                let j = rng.random_range(0..=i);
                items.swap(i, j);
            }
            let target = items[0];
            let history = items[1..=history_len].to_vec();
            let user = rng.random_range(0..user_count);
            let label = rng.random_bool(0.5);
            let ctx = PredictionContext::new(user, target, history)?;
            let fwd = forward_unchecked(&ctx, &params, config);
            let near_kink = |z: &f64| z.abs() < KINK_MARGIN;
            let attn_kink = fwd
                .attention
                .as_ref()
                .is_some_and(|a| a.pre.as_slice().iter().any(near_kink));
            let deep_kink = fwd
                .deep
                .as_ref()
                .is_some_and(|d| d.pre.iter().flatten().any(near_kink));
            if !attn_kink && !deep_kink {
                return Ok(GradcheckInstance {
                    params,
                    config: config.clone(),
                    ctx,
                    label,
                    lambda: 0.01,
                });
            }
        }
    }

    pub fn objective(&self, params: &ParameterSet) -> f64 {
        let score = forward_unchecked(&self.ctx, params, &self.config).score;
        instance_log_loss(score, self.label) + touched_regularizer(&self.ctx, params, &self.config, self.lambda)
    }

    pub fn analytic(&self) -> Gradients {
        let fwd = forward_unchecked(&self.ctx, &self.params, &self.config);
        let d_score = score_gradient(fwd.score, self.label);
        backward(&fwd, &self.ctx, &self.params, &self.config, d_score, self.lambda)
    }

    /// Central differences for every entry of every array.
    pub fn numeric(&self) -> Vec<(String, Vec<f64>)> {
        let mut work = self.params.clone();
        let names: Vec<(String, usize)> = self.params.arrays().iter().map(|(n, a)| (n.clone(), a.len())).collect();
        let mut out = Vec::with_capacity(names.len());
        for (slot, (name, len)) in names.into_iter().enumerate() {
            let mut grads = vec![0.0; len];
            for (e, g) in grads.iter_mut().enumerate() {
                let original = work.arrays()[slot].1[e];
                work.arrays_mut()[slot].1[e] = original + FD_STEP;
                let plus = self.objective(&work);
                work.arrays_mut()[slot].1[e] = original - FD_STEP;
                let minus = self.objective(&work);
                work.arrays_mut()[slot].1[e] = original;
                *g = (plus - minus) / (2.0 * FD_STEP);
            }
            out.push((name, grads));
        }
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares analytic and finite-difference gradients on a random instance
/// with five history items.
pub fn gradcheck(config: &ModelConfig, seed: u64, tolerance: f64) -> Result<GradcheckReport> {
    gradcheck_with(config, seed, tolerance, 5, |_| {})
}

/// [`gradcheck`] with a configurable history length and a hook that may
/// tamper with the analytic gradients (negative controls).
pub fn gradcheck_with(
    config: &ModelConfig,
    seed: u64,
    tolerance: f64,
    history_len: usize,
    tamper: impl FnOnce(&mut Gradients),
) -> Result<GradcheckReport> {
    let instance = GradcheckInstance::random(config, seed, history_len)?;
    let mut analytic = instance.analytic();
    tamper(&mut analytic);
    let analytic = analytic.to_dense(&instance.params);
    let numeric = instance.numeric();
    let arrays: Vec<ArrayError> = analytic
        .iter()
        .zip(&numeric)
        .filter(|((_, a), _)| !a.is_empty())
        .map(|((name, a), (_, n))| ArrayError {
            name: name.clone(),
            entries: a.len(),
            max_rel_error: a.iter().zip(n).map(|(x, y)| relative_error(*x, *y)).fold(0.0, f64::max),
        })
        .collect();
    let passed = arrays.iter().all(|a| a.max_rel_error < tolerance);
    Ok(GradcheckReport {
        config: config.clone(),
        tolerance,
        arrays,
        passed,
    })
}

/// Every model kind × design × attention mode that changes the computation
/// graph, at embedding size `d`.
pub fn all_configs(d: usize) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        let base = ModelConfig::new(kind, d);
        if kind.is_feature_level() {
            out.push(base.clone().with_design(Design::Design1));
            out.push(base.with_design(Design::Design2));
        } else if kind == ModelKind::Nais {
            let mut concat = base.clone();
            concat.attention_mode = AttentionMode::Concat;
            out.push(base);
            out.push(concat);
        } else {
            out.push(base);
        }
    }
    out
}
