//! Command implementations.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use flaicf_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use flaicf_core::config::{ModelConfig, ModelKind, TrainConfig};
use flaicf_core::data::{
    dataset_stats, k_core_filter, parse_interactions, read_split, split_per_user, write_split, SplitDataset, SplitPart,
};
use flaicf_core::eval::{baseline_scores, evaluate, BaselineKind, MetricsRecord, ModelScorer};
use flaicf_core::params::{ParameterSet, Pretrained};
use flaicf_core::predict::{forward, PredictionContext};
use flaicf_core::train::{all_configs, gradcheck_with, train_with_observer, EpochRecord, TrainOutcome};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::run_config::RunConfig;

pub const MODEL_CHECKPOINT: &str = "model.ckpt";
pub const FISM_CHECKPOINT: &str = "fism.ckpt";
pub const METRICS_LOG: &str = "metrics.log";
pub const FISM_METRICS_LOG: &str = "fism_metrics.log";
pub const METRICS_JSON: &str = "metrics.json";
pub const STATS_JSON: &str = "stats.json";
pub const RESOLVED_CONFIG: &str = "config.txt";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    write_file(path, text + "\n")
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    writeln!(file, "{line}").map_err(|e| CliError::io(path, e))
}

fn metrics_json(record: &MetricsRecord) -> serde_json::Value {
    serde_json::to_value(record).expect("metrics serialize")
}

/// `epoch=<k> loss=<x> split=<name> hr@<n>=<x> ndcg@<n>=<x>`
pub fn metrics_line(epoch: usize, loss: f64, record: Option<&MetricsRecord>) -> String {
    match record {
        Some(r) => format!("epoch={epoch} loss={loss:.6} {r}"),
        None => format!("epoch={epoch} loss={loss:.6} split=valid hr@10=nan ndcg@10=nan"),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let raw = cfg.require_path("raw")?;
    let options = cfg.parse_options()?;
    let (k_user, k_item) = (cfg.usize("k_user")?, cfg.usize("k_item")?);
    let ratios = cfg.ratios()?;
    let seed = cfg.u64("seed")?;
    let out = cfg.require_path("data_dir")?;

    let parsed = parse_interactions(&raw, &options)?;
    let raw_stats = dataset_stats(&parsed)?;
    let filtered = k_core_filter(&parsed, k_user, k_item)?;
    let stats = dataset_stats(&filtered)?;
    let split = split_per_user(&filtered, ratios, seed)?;
    write_split(&split, &out)?;

    let count = |part: SplitPart| split.part(part).iter().map(Vec::len).sum::<usize>();
    let (train, valid, test) = (count(SplitPart::Train), count(SplitPart::Validation), count(SplitPart::Test));
    println!("raw {raw_stats}");
    println!("filtered {stats}");
    println!("split train={train} valid={valid} test={test}");
    write_json(
        &out.join(STATS_JSON),
        &json!({
            "source": raw.display().to_string(),
            "k_user": k_user,
            "k_item": k_item,
            "ratios": ratios,
            "seed": seed,
            "raw": serde_json::to_value(raw_stats).expect("stats serialize"),
            "filtered": serde_json::to_value(stats).expect("stats serialize"),
            "split": {"train": train, "valid": valid, "test": test},
        }),
    )
}

fn load_split(cfg: &RunConfig) -> Result<SplitDataset> {
    Ok(read_split(&cfg.require_path("data_dir")?)?)
}

fn load_pretrained(path: &Path, config: &ModelConfig, split: &SplitDataset) -> Result<Pretrained> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.config.kind != ModelKind::Fism {
        return Err(CliError::Config(format!(
            "{} holds a {} model; pre-training needs a FISM checkpoint",
            path.display(),
            ckpt.config.kind
        )));
    }
    if ckpt.config.d != config.d || ckpt.item_count != split.item_count() {
        return Err(CliError::Config(format!(
            "{} has d={} and {} items; the run needs d={} and {} items",
            path.display(),
            ckpt.config.d,
            ckpt.item_count,
            config.d,
            split.item_count()
        )));
    }
    Ok(Pretrained {
        target_emb: ckpt.params.target_emb,
        history_emb: ckpt.params.history_emb,
    })
}

fn train_logged(
    split: &SplitDataset,
    model: &ModelConfig,
    train: &TrainConfig,
    pretrained: Option<&Pretrained>,
    log: &Path,
) -> Result<TrainOutcome> {
    let mut write_err = None;
    let outcome = train_with_observer(split, model, train, pretrained, |rec: &EpochRecord| {
        let line = metrics_line(rec.epoch, rec.loss, rec.validation.as_ref());
        println!("{line}");
        if let Err(e) = append_line(log, &line) {
            write_err.get_or_insert(e);
        }
    })?;
    match write_err {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

fn epochs_json(history: &[EpochRecord]) -> serde_json::Value {
    history
        .iter()
        .map(|r| {
            json!({
                "epoch": r.epoch,
                "loss": r.loss,
                "validation": r.validation.as_ref().map(metrics_json),
            })
        })
        .collect()
}

fn run_training(cfg: &RunConfig, model: &ModelConfig, train: &TrainConfig, split: &SplitDataset, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join(RESOLVED_CONFIG), cfg.to_string())?;

    let pretrained = if cfg.flag("pretrain")? {
        match cfg.path("pretrain_checkpoint") {
            Some(path) => Some(load_pretrained(&path, model, split)?),
            None => {
                let mut fism = ModelConfig::new(ModelKind::Fism, model.d);
                fism.alpha = model.alpha;
                println!("pretraining FISM d={}", model.d);
                let outcome = train_logged(split, &fism, train, None, &out.join(FISM_METRICS_LOG))?;
                save_checkpoint(&outcome.params, &fism, split.user_count(), &out.join(FISM_CHECKPOINT))?;
                Some(Pretrained {
                    target_emb: outcome.params.target_emb,
                    history_emb: outcome.params.history_emb,
                })
            }
        }
    } else {
        None
    };

    let outcome = train_logged(split, model, train, pretrained.as_ref(), &out.join(METRICS_LOG))?;
    save_checkpoint(&outcome.params, model, split.user_count(), &out.join(MODEL_CHECKPOINT))?;

    let best_loss = outcome.history[outcome.best_epoch - 1].loss;
    let has_test = split.test.iter().any(|t| !t.is_empty());
    let test = if has_test {
        let scorer = ModelScorer::new(&outcome.params, model, &split.train)?;
        let record = evaluate(&scorer, split, SplitPart::Test, 10)?;
        let line = metrics_line(outcome.best_epoch, best_loss, Some(&record));
        println!("{line}");
        append_line(&out.join(METRICS_LOG), &line)?;
        Some(record)
    } else {
        None
    };
    write_json(
        &out.join(METRICS_JSON),
        &json!({
            "model": model.kind.name(),
            "pretrained": pretrained.is_some(),
            "best_epoch": outcome.best_epoch,
            "epochs": epochs_json(&outcome.history),
            "test": test.as_ref().map(metrics_json),
        }),
    )
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let runs = cfg.expand_sweeps();
    // Every run is validated before any training starts.
    let mut planned = Vec::with_capacity(runs.len());
    for (suffix, run) in &runs {
        let model = run.model_config()?;
        let train = run.train_config()?;
        if run.flag("pretrain")? && model.kind == ModelKind::Fism {
            return Err(CliError::Config("pretrain=true needs an attentive model, not FISM".into()));
        }
        let base = run.require_path("output_dir")?;
        let out = match suffix {
            Some(s) => base.join(s),
            None => base,
        };
        planned.push((run, model, train, out));
    }
    let split = load_split(cfg)?;
    for (run, model, train, out) in planned {
        if runs.len() > 1 {
            println!("run {}", out.display());
        }
        run_training(run, &model, &train, &split, &out)?;
    }
    Ok(())
}

fn load_model(cfg: &RunConfig, split: &SplitDataset) -> Result<Checkpoint> {
    let path = cfg.require_path("checkpoint")?;
    let ckpt = load_checkpoint(&path)?;
    if ckpt.item_count != split.item_count() || ckpt.user_count < split.user_count() {
        return Err(CliError::Data(format!(
            "{} was trained on {} users × {} items but the split has {} × {}",
            path.display(),
            ckpt.user_count,
            ckpt.item_count,
            split.user_count(),
            split.item_count()
        )));
    }
    Ok(ckpt)
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let part = cfg.split_part()?;
    let n = cfg.usize("n")?;
    let split = load_split(cfg)?;
    let (label, record) = match cfg.text("baseline") {
        Some(name) => {
            let kind: BaselineKind = name.parse()?;
            let k = cfg.usize("knn_k")?;
            let scorer = baseline_scores(kind, &split, cfg.u64("seed")?, (k > 0).then_some(k))?;
            (kind.to_string(), evaluate(scorer.as_ref(), &split, part, n)?)
        }
        None => {
            let ckpt = load_model(cfg, &split)?;
            let scorer = ModelScorer::new(&ckpt.params, &ckpt.config, &split.train)?;
            (ckpt.config.kind.name().to_string(), evaluate(&scorer, &split, part, n)?)
        }
    };
    println!("model={label} {record}");
    if let Some(path) = cfg.path("report") {
        let mut value = metrics_json(&record);
        value["model"] = json!(label);
        write_json(&path, &value)?;
    }
    Ok(())
}

pub fn gradcheck_cmd(cfg: &RunConfig) -> Result<()> {
    let tolerance = cfg.f64("tolerance")?;
    let seed = cfg.u64("seed")?;
    let history = cfg.usize("history")?;
    if history == 0 {
        return Err(CliError::Config("history must be at least 1".into()));
    }
    let configs = if cfg.raw("model").eq_ignore_ascii_case("all") {
        all_configs(cfg.usize("d")?)
    } else {
        vec![cfg.model_config()?]
    };
    let mut failed = Vec::new();
    for config in &configs {
        let report = gradcheck_with(config, seed, tolerance, history, |_| {})?;
        println!("{report}");
        if !report.passed {
            failed.push(format!("{}/design{}/{}", config.kind, config.design, config.attention_mode));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed(format!(
            "{} of {} configurations above tolerance {tolerance:e}: {}",
            failed.len(),
            configs.len(),
            failed.join(", ")
        )))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn join_row<'a>(cells: impl Iterator<Item = String> + 'a) -> String {
    cells.collect::<Vec<_>>().join(",")
}

/// Attention weights of one (user, target) pair.
pub struct AttentionExport {
    pub history: Vec<usize>,
    /// One weight per history item.
    pub item_level: Vec<f64>,
    /// History × d, feature-level models only.
    pub feature_level: Option<flaicf_core::params::Matrix>,
}

pub fn attention_for(params: &ParameterSet, config: &ModelConfig, ctx: &PredictionContext) -> Result<AttentionExport> {
    if !config.kind.has_attention() {
        return Err(CliError::Config(format!("{} has no attention weights to export", config.kind)));
    }
    let fwd = forward(ctx, params, config)?;
    let Some(att) = fwd.attention.as_ref() else {
        return Err(CliError::Data(format!("user {} has no history to attend over", ctx.user)));
    };
    let out = att.output();
    let item_level = match (&out.item_weights, &out.feature_weights) {
        (Some(w), _) => w.clone(),
        // Design 2 has no separate item weight; report each item's total weight.
        (None, Some(m)) => (0..m.rows()).map(|r| m.row(r).iter().sum()).collect(),
        (None, None) => unreachable!("attention forward without weights"),
    };
    Ok(AttentionExport {
        history: ctx.history().to_vec(),
        item_level,
        feature_level: out.feature_weights,
    })
}

pub fn export_attention(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let split = load_split(cfg)?;
    let ckpt = load_model(cfg, &split)?;
    if !ckpt.config.kind.has_attention() {
        return Err(CliError::Config(format!(
            "{} checkpoints have no attention weights to export",
            ckpt.config.kind
        )));
    }
    let user_raw = cfg
        .text("user")
        .ok_or_else(|| CliError::Config("`user` is required for export-attention".into()))?;
    let user = split
        .users
        .get(user_raw)
        .ok_or_else(|| CliError::Data(format!("unknown user `{user_raw}`")))?;
    let targets: Vec<&str> = cfg
        .text("targets")
        .ok_or_else(|| CliError::Config("`targets` is required for export-attention".into()))?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let out = cfg.require_path("output_dir")?;
    create_dir(&out)?;

    let mut written = Vec::new();
    for target_raw in targets {
        let target = split
            .items
            .get(target_raw)
            .ok_or_else(|| CliError::Data(format!("unknown item `{target_raw}`")))?;
        let ctx = PredictionContext::from_positives(user, target, &split.train[user]);
        let export = attention_for(&ckpt.params, &ckpt.config, &ctx)?;
        let header: Vec<String> = export.history.iter().map(|&j| csv_field(split.items.raw(j))).collect();
        let stem = format!("attention_{}_{}", file_stem(user_raw), file_stem(target_raw));

        let item_path = out.join(format!("{stem}_item.csv"));
        let body = format!(
            "{}\n{}\n",
            header.join(","),
            join_row(export.item_level.iter().map(|w| w.to_string()))
        );
        write_file(&item_path, body)?;
        written.push(item_path);

        if let Some(m) = &export.feature_level {
            let path = out.join(format!("{stem}_feature.csv"));
            let mut body = join_row(std::iter::once("history_item".to_string()).chain((0..m.cols()).map(|k| format!("f{k}"))));
            body.push('\n');
            for (r, id) in header.iter().enumerate() {
                body.push_str(&join_row(std::iter::once(id.clone()).chain(m.row(r).iter().map(|w| w.to_string()))));
                body.push('\n');
            }
            write_file(&path, body)?;
            written.push(path);
        }
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(written)
}
