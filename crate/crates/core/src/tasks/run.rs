use std::collections::BTreeMap;

use super::features::{FeatureCache, FeatureConfig, Representation};
use super::folds::{make_folds, Fold};
use super::report::{Decision, EvalReport};
use super::split::{split_task, Mode, Task, TaskConfig, TaskSplit};
use crate::error::{Error, Result};
use crate::manifest::CorpusManifest;
use crate::nn::{init_network, train, transfer_head, Checkpoint, Hyper, NetworkSpec, Predictor, Sample};
use crate::rng;

/// Provenance keys written into `TrainMeta::extra`.
pub mod meta {
    pub const TASK: &str = "task";
    pub const MODE: &str = "mode";
    /// 1-based fold number.
    pub const FOLD: &str = "fold";
    pub const SPLIT: &str = "split";
    pub const REPRESENTATION: &str = "representation";
    pub const USE_VAD: &str = "use_vad";
    pub const IMAGE_SIZE: &str = "image_size";
    pub const RUN_SEED: &str = "run_seed";
    pub const ROLE: &str = "role";
    pub const CLASS: &str = "class";
}

/// One utterance to score.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub speaker: &'a str,
    pub input: &'a [f32],
    pub label: usize,
}

fn class_names(ckpt: &Checkpoint<f32>) -> Vec<String> {
    let labels = &ckpt.train_meta.labels;
    if labels.len() == ckpt.spec.class_count {
        labels.clone()
    } else {
        (0..ckpt.spec.class_count).map(|i| i.to_string()).collect()
    }
}

/// Word recognition rate (or plain accuracy for the other tasks) from
/// per-utterance argmax decisions.
pub fn evaluate_wrr(ckpt: &Checkpoint<f32>, test: &[EvalItem]) -> Result<EvalReport> {
    let mut predictor = Predictor::new(ckpt)?;
    let mut decisions = Vec::with_capacity(test.len());
    for item in test {
        decisions.push(Decision {
            speaker: item.speaker,
            truth: item.label,
            predicted: predictor.predict(item.input)?.0,
        });
    }
    EvalReport::from_decisions(&class_names(ckpt), decisions)
}

/// Feature pipeline settings implied by a task configuration.
pub fn feature_config(cfg: &TaskConfig) -> FeatureConfig {
    FeatureConfig {
        representation: cfg.representation,
        use_vad: cfg.use_vad,
        image_size: cfg.image_size,
        ..Default::default()
    }
}

/// Seed for the model of one split: initialization and epoch shuffling.
pub fn split_seed(seed: u64, fold: usize, split_index: usize) -> u64 {
    rng::child_seed(rng::child_seed(seed, fold as u64), split_index as u64)
}

fn check_cache(cache: &FeatureCache, cfg: &TaskConfig) -> Result<()> {
    if *cache.config() != feature_config(cfg) {
        return Err(Error::InvalidParameter(
            "feature cache was built for a different pipeline".into(),
        ));
    }
    Ok(())
}

/// Trains the network of one split; `split_index` is the position of the
/// split within its fold.
pub fn train_split(
    cache: &mut FeatureCache,
    cfg: &TaskConfig,
    split: &TaskSplit,
    split_index: usize,
) -> Result<(Checkpoint<f32>, Vec<f64>)> {
    check_cache(cache, cfg)?;
    let seed = split_seed(cfg.hyper.seed, split.fold, split_index);
    let classes = split.labels.len();
    let base = match (&cfg.init, &cfg.pretrain) {
        (Some(init), _) => {
            if init.spec != NetworkSpec::gammanet_s(cfg.image_size, cfg.image_size, classes) {
                return Err(Error::ShapeMismatch {
                    expected: format!("starting network for {classes} classes on {0}x{0} images", cfg.image_size),
                    actual: format!("{} classes on {:?}", init.spec.class_count, init.spec.input),
                });
            }
            if !init.train_meta.labels.is_empty() && init.train_meta.labels != split.labels {
                return Err(Error::DimensionMismatch("starting network uses a different label list".into()));
            }
            init.clone()
        }
        (None, Some(pre)) => {
            let want = NetworkSpec::gammanet_s(cfg.image_size, cfg.image_size, 2).input;
            if pre.spec.input != want {
                return Err(Error::ShapeMismatch {
                    expected: format!("pretrained input {}x{}x3", cfg.image_size, cfg.image_size),
                    actual: format!("{:?}", pre.spec.input),
                });
            }
            transfer_head(pre, classes, seed)?
        }
        (None, None) => init_network(&NetworkSpec::gammanet_s(cfg.image_size, cfg.image_size, classes), seed)?,
    };
    let data = split
        .train
        .iter()
        .map(|it| Ok(Sample { input: cache.get(it.record)?.to_vec(), label: it.label }))
        .collect::<Result<Vec<_>>>()?;
    let hyper = Hyper { seed, ..cfg.hyper };
    let freeze: Vec<&str> = cfg.freeze.iter().map(String::as_str).collect();
    let outcome = train(&base, &data, &hyper, &freeze)?;

    let mut ckpt = outcome.checkpoint;
    ckpt.train_meta.labels = split.labels.clone();
    let extra = &mut ckpt.train_meta.extra;
    extra.insert(meta::TASK.into(), cfg.task.to_string());
    extra.insert(meta::MODE.into(), cfg.mode.to_string());
    extra.insert(meta::FOLD.into(), (split.fold + 1).to_string());
    extra.insert(meta::SPLIT.into(), split.name.clone());
    extra.insert(meta::REPRESENTATION.into(), cfg.representation.to_string());
    extra.insert(meta::USE_VAD.into(), cfg.use_vad.to_string());
    extra.insert(meta::IMAGE_SIZE.into(), cfg.image_size.to_string());
    extra.insert(meta::RUN_SEED.into(), cfg.hyper.seed.to_string());
    if let Some(c) = cfg.train_class {
        extra.insert(meta::CLASS.into(), c.to_string());
    }
    Ok((ckpt, outcome.loss_history))
}

pub fn evaluate_split(
    manifest: &CorpusManifest,
    cache: &mut FeatureCache,
    ckpt: &Checkpoint<f32>,
    split: &TaskSplit,
) -> Result<EvalReport> {
    let inputs = cache.gather(split.test.iter().map(|it| it.record))?;
    let items: Vec<EvalItem> = split
        .test
        .iter()
        .zip(&inputs)
        .map(|(it, x)| EvalItem {
            speaker: &manifest.records[it.record].speaker_id,
            input: x,
            label: it.label,
        })
        .collect();
    evaluate_wrr(ckpt, &items)
}

#[derive(Debug, Clone)]
pub struct TrainedSplit {
    pub fold: usize,
    pub name: String,
    pub checkpoint: Checkpoint<f32>,
    pub loss_history: Vec<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub splits: Vec<TrainedSplit>,
    /// Counts pooled over every fold and split.
    pub report: EvalReport,
}

/// Every fold: train on one session, evaluate on the other two.
pub fn run_task(manifest: &CorpusManifest, cfg: &TaskConfig) -> Result<RunOutcome> {
    let mut cache = FeatureCache::new(manifest, feature_config(cfg))?;
    run_task_cached(manifest, cfg, &mut cache)
}

/// [`run_task`] reusing already extracted features.
pub fn run_task_cached(manifest: &CorpusManifest, cfg: &TaskConfig, cache: &mut FeatureCache) -> Result<RunOutcome> {
    cfg.validate()?;
    check_cache(cache, cfg)?;
    let plan = make_folds(manifest)?;
    let mut splits = Vec::new();
    for (fi, fold) in plan.folds.iter().enumerate() {
        for (si, split) in split_task(manifest, cfg, fold, fi)?.iter().enumerate() {
            let (checkpoint, loss_history) = train_split(cache, cfg, split, si)?;
            let report = evaluate_split(manifest, cache, &checkpoint, split)?;
            splits.push(TrainedSplit {
                fold: fi,
                name: split.name.clone(),
                checkpoint,
                loss_history,
                report,
            });
        }
    }
    let reports: Vec<EvalReport> = splits.iter().map(|s| s.report.clone()).collect();
    Ok(RunOutcome {
        report: EvalReport::merge(&reports)?,
        splits,
    })
}

/// Fold and split a checkpoint was trained on, recovered from its metadata.
pub fn split_from_meta(manifest: &CorpusManifest, ckpt: &Checkpoint<f32>) -> Result<(TaskConfig, Fold, TaskSplit)> {
    let extra = &ckpt.train_meta.extra;
    let get = |k: &str| {
        extra
            .get(k)
            .ok_or_else(|| Error::InvalidParameter(format!("checkpoint metadata lacks {k:?}")))
    };
    let task: Task = get(meta::TASK)?.parse()?;
    let mode: Mode = get(meta::MODE)?.parse()?;
    let fold: usize = get(meta::FOLD)?
        .parse()
        .map_err(|_| Error::InvalidParameter("bad fold number in checkpoint metadata".into()))?;
    let mut cfg = TaskConfig::new(task, mode)?;
    cfg.train_class = extra.get(meta::CLASS).map(|c| c.parse()).transpose()?;
    cfg.representation = get(meta::REPRESENTATION)?.parse::<Representation>()?;
    cfg.use_vad = get(meta::USE_VAD)? == "true";
    cfg.image_size = get(meta::IMAGE_SIZE)?
        .parse()
        .map_err(|_| Error::InvalidParameter("bad image size in checkpoint metadata".into()))?;
    let plan = make_folds(manifest)?;
    let f = plan
        .folds
        .get(fold.wrapping_sub(1))
        .cloned()
        .ok_or_else(|| Error::InvalidParameter(format!("fold {fold} outside 1..=3")))?;
    let name = get(meta::SPLIT)?;
    let split = split_task(manifest, &cfg, &f, fold - 1)?
        .into_iter()
        .find(|s| s.name == *name)
        .ok_or_else(|| Error::InvalidParameter(format!("split {name:?} not found in the manifest")))?;
    if split.labels != ckpt.train_meta.labels {
        return Err(Error::DimensionMismatch(
            "checkpoint labels differ from the manifest's label set".into(),
        ));
    }
    Ok((cfg, f, split))
}

/// Two-row comparison of mean accuracies, e.g. gammatonegram vs spectrogram.
pub fn comparison_table(rows: &BTreeMap<String, EvalReport>) -> String {
    let mut out = String::from("system\tmean\n");
    for (name, r) in rows {
        out.push_str(&format!("{name}\t{:.2}\n", r.mean));
    }
    out
}
