//! Intelligibility-gated recognizer: a gate network picks a severity class
//! per utterance and that class's word recognizer decides the word.

use std::collections::BTreeMap;

use super::features::FeatureCache;
use super::folds::{label_intelligibility, make_folds};
use super::report::{Decision, EvalReport};
use super::run::{evaluate_split, feature_config, meta, train_split};
use super::split::{split_task, Mode, Task, TaskConfig};
use crate::error::{Error, Result};
use crate::manifest::CorpusManifest;
use crate::nn::{Checkpoint, Hyper, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// Route by the gate's prediction.
    Predicted,
    /// Route by the true intelligibility class.
    Oracle,
}

#[derive(Debug, Clone, Copy)]
pub struct CascadeItem<'a> {
    pub speaker: &'a str,
    /// Gate input, computed without VAD.
    pub gate_input: &'a [f32],
    /// Recognizer input.
    pub input: &'a [f32],
    pub word: usize,
    /// True gate class index.
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutcome {
    /// Word decisions; `gate_accuracy` holds the share of correct routes
    /// predicted by the gate (under either routing).
    pub report: EvalReport,
    /// Gate class used for each utterance.
    pub routes: Vec<usize>,
    pub words: Vec<usize>,
}

/// Subnets in gate label order; all must share one word label list.
fn ordered_subnets<'a>(
    gate: &Checkpoint<f32>,
    subnets: &'a BTreeMap<String, Checkpoint<f32>>,
) -> Result<(Vec<&'a Checkpoint<f32>>, Vec<String>)> {
    let classes = &gate.train_meta.labels;
    if classes.len() != gate.spec.class_count {
        return Err(Error::InvalidParameter("gate checkpoint carries no class names".into()));
    }
    let nets = classes
        .iter()
        .map(|c| subnets.get(c).ok_or_else(|| Error::MissingSubnet(c.clone())))
        .collect::<Result<Vec<_>>>()?;
    let words = nets[0].train_meta.labels.clone();
    if words.len() != nets[0].spec.class_count || nets.iter().any(|n| n.train_meta.labels != words) {
        return Err(Error::InvalidParameter("subnets do not share one word label list".into()));
    }
    Ok((nets, words))
}

pub fn cascade_evaluate(
    gate: &Checkpoint<f32>,
    subnets: &BTreeMap<String, Checkpoint<f32>>,
    test: &[CascadeItem],
    routing: Routing,
) -> Result<CascadeOutcome> {
    let (nets, words) = ordered_subnets(gate, subnets)?;
    let mut gate_pred = Predictor::new(gate)?;
    let mut preds = nets.iter().map(|n| Predictor::new(n)).collect::<Result<Vec<_>>>()?;
    let mut routes = Vec::with_capacity(test.len());
    let mut out_words = Vec::with_capacity(test.len());
    let mut gate_hits = 0;
    for item in test {
        let predicted_class = gate_pred.predict(item.gate_input)?.0;
        gate_hits += usize::from(predicted_class == item.class);
        let route = match routing {
            Routing::Predicted => predicted_class,
            Routing::Oracle => item.class,
        };
        let net = preds
            .get_mut(route)
            .ok_or_else(|| Error::InvalidParameter(format!("class index {route} has no subnet")))?;
        routes.push(route);
        out_words.push(net.predict(item.input)?.0);
    }
    let decisions = test.iter().zip(&out_words).map(|(it, &w)| Decision {
        speaker: it.speaker,
        truth: it.word,
        predicted: w,
    });
    let mut report = EvalReport::from_decisions(&words, decisions)?;
    report.gate_accuracy = Some(gate_hits as f64 / test.len() as f64);
    Ok(CascadeOutcome {
        report,
        routes,
        words: out_words,
    })
}

#[derive(Debug, Clone)]
pub struct CascadeConfig {
    /// Gate classes, 2 or 3.
    pub n_classes: usize,
    pub hyper: Hyper,
    /// Epochs of specialization for each subnet, starting from the single
    /// recognizer.
    pub subnet_epochs: usize,
    pub image_size: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            n_classes: 2,
            hyper: Hyper::default(),
            subnet_epochs: 10,
            image_size: super::features::DEFAULT_IMAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeFold {
    pub gate: Checkpoint<f32>,
    pub single: Checkpoint<f32>,
    pub subnets: BTreeMap<String, Checkpoint<f32>>,
}

#[derive(Debug, Clone)]
pub struct CascadeRun {
    pub folds: Vec<CascadeFold>,
    /// The gate as an intelligibility classifier.
    pub gate: EvalReport,
    /// One recognizer for every speaker.
    pub single: EvalReport,
    pub predicted: EvalReport,
    pub oracle: EvalReport,
}

/// Per fold: trains the gate (no VAD) and a single SD recognizer, then
/// specializes a copy of the recognizer on each gate class's training
/// speakers. Evaluates the single recognizer and both cascade routings on
/// the fold's test sessions.
pub fn run_cascade(manifest: &CorpusManifest, cfg: &CascadeConfig) -> Result<CascadeRun> {
    let mode = match cfg.n_classes {
        2 => Mode::TwoClass,
        3 => Mode::ThreeClass,
        n => return Err(Error::InvalidParameter(format!("gate uses 2 or 3 classes, not {n}"))),
    };
    let mut gate_cfg = TaskConfig::new(Task::Intel, mode)?;
    gate_cfg.hyper = cfg.hyper;
    gate_cfg.image_size = cfg.image_size;
    let mut asr_cfg = TaskConfig::new(Task::Asr, Mode::SD)?;
    asr_cfg.hyper = cfg.hyper;
    asr_cfg.image_size = cfg.image_size;
    let mut gate_cache = FeatureCache::new(manifest, feature_config(&gate_cfg))?;
    let mut asr_cache = FeatureCache::new(manifest, feature_config(&asr_cfg))?;

    let class_of = |record: usize| -> Result<usize> {
        let pct = manifest.records[record].intelligibility_pct as i64;
        let c = label_intelligibility(pct, cfg.n_classes)?;
        Ok(super::folds::SeverityClass::classes(cfg.n_classes)?
            .iter()
            .position(|&k| k == c)
            .expect("class list is complete"))
    };

    let plan = make_folds(manifest)?;
    let mut folds = Vec::new();
    let (mut gate_r, mut single_r, mut pred_r, mut oracle_r) = (vec![], vec![], vec![], vec![]);
    for (fi, fold) in plan.folds.iter().enumerate() {
        let gate_split = split_task(manifest, &gate_cfg, fold, fi)?.remove(0);
        let (gate, _) = train_split(&mut gate_cache, &gate_cfg, &gate_split, 0)?;
        gate_r.push(evaluate_split(manifest, &mut gate_cache, &gate, &gate_split)?);

        let asr_split = split_task(manifest, &asr_cfg, fold, fi)?.remove(0);
        let (single, _) = train_split(&mut asr_cache, &asr_cfg, &asr_split, 0)?;
        single_r.push(evaluate_split(manifest, &mut asr_cache, &single, &asr_split)?);

        let mut subnets = BTreeMap::new();
        for (ci, class) in gate.train_meta.labels.iter().enumerate() {
            let mut sub_cfg = asr_cfg.clone();
            sub_cfg.init = Some(single.clone());
            sub_cfg.train_class = Some(class.parse()?);
            sub_cfg.hyper.epochs = cfg.subnet_epochs;
            let sub_split = match split_task(manifest, &sub_cfg, fold, fi) {
                Ok(mut s) => s.remove(0),
                // no training speaker in this class: the cascade reports the gap
                Err(Error::EmptySplit(_)) => continue,
                Err(e) => return Err(e),
            };
            let (mut sub, _) = train_split(&mut asr_cache, &sub_cfg, &sub_split, 1 + ci)?;
            sub.train_meta.extra.insert(meta::ROLE.into(), "subnet".into());
            subnets.insert(class.clone(), sub);
        }

        let gate_inputs = gate_cache.gather(asr_split.test.iter().map(|it| it.record))?;
        let asr_inputs = asr_cache.gather(asr_split.test.iter().map(|it| it.record))?;
        let items = asr_split
            .test
            .iter()
            .enumerate()
            .map(|(k, it)| {
                Ok(CascadeItem {
                    speaker: &manifest.records[it.record].speaker_id,
                    gate_input: &gate_inputs[k],
                    input: &asr_inputs[k],
                    word: it.label,
                    class: class_of(it.record)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        pred_r.push(cascade_evaluate(&gate, &subnets, &items, Routing::Predicted)?.report);
        oracle_r.push(cascade_evaluate(&gate, &subnets, &items, Routing::Oracle)?.report);
        folds.push(CascadeFold { gate, single, subnets });
    }
    Ok(CascadeRun {
        folds,
        gate: EvalReport::merge(&gate_r)?,
        single: EvalReport::merge(&single_r)?,
        predicted: EvalReport::merge(&pred_r)?,
        oracle: EvalReport::merge(&oracle_r)?,
    })
}
