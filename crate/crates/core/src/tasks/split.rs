use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::{Representation, DEFAULT_IMAGE_SIZE};
use super::folds::{label_intelligibility, Fold, SeverityClass};
use crate::error::{Error, Result};
use crate::manifest::{CorpusManifest, UtteranceRecord, WordGroup};
use crate::nn::{Checkpoint, Hyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Asr,
    Sid,
    Intel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    SD,
    SI,
    TD,
    TI,
    #[serde(rename = "2c")]
    TwoClass,
    #[serde(rename = "3c")]
    ThreeClass,
}

impl Task {
    pub fn modes(self) -> &'static [Mode] {
        match self {
            Task::Asr => &[Mode::SD, Mode::SI],
            Task::Sid => &[Mode::TD, Mode::TI],
            Task::Intel => &[Mode::TwoClass, Mode::ThreeClass],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Asr => "asr",
            Task::Sid => "sid",
            Task::Intel => "intel",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asr" => Ok(Task::Asr),
            "sid" => Ok(Task::Sid),
            "intel" => Ok(Task::Intel),
            _ => Err(Error::InvalidParameter(format!("unknown task {s:?} (valid tasks: asr, sid, intel)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SD => "SD",
            Mode::SI => "SI",
            Mode::TD => "TD",
            Mode::TI => "TI",
            Mode::TwoClass => "2c",
            Mode::ThreeClass => "3c",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SD" => Ok(Mode::SD),
            "SI" => Ok(Mode::SI),
            "TD" => Ok(Mode::TD),
            "TI" => Ok(Mode::TI),
            "2c" => Ok(Mode::TwoClass),
            "3c" => Ok(Mode::ThreeClass),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode {s:?} (valid modes: SD, SI, TD, TI, 2c, 3c)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub task: Task,
    pub mode: Mode,
    pub use_vad: bool,
    pub hyper: Hyper,
    /// Base network whose feature extractor is reused via `transfer_head`.
    pub pretrain: Option<Checkpoint<f32>>,
    /// Starting weights, classifier head included, for continued training.
    pub init: Option<Checkpoint<f32>>,
    /// Train only on speakers of this intelligibility class.
    pub train_class: Option<SeverityClass>,
    /// Layers kept fixed during training.
    pub freeze: Vec<String>,
    pub representation: Representation,
    pub image_size: usize,
}

impl TaskConfig {
    /// Defaults: VAD on except for intelligibility, 20 epochs for ASR and
    /// intelligibility, 30 for speaker identification.
    pub fn new(task: Task, mode: Mode) -> Result<Self> {
        let cfg = Self {
            task,
            mode,
            use_vad: task != Task::Intel,
            hyper: Hyper {
                epochs: if task == Task::Sid { 30 } else { 20 },
                ..Default::default()
            },
            pretrain: None,
            init: None,
            train_class: None,
            freeze: Vec::new(),
            representation: Representation::Gammatonegram,
            image_size: DEFAULT_IMAGE_SIZE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.task.modes().contains(&self.mode) {
            let valid: Vec<String> = self.task.modes().iter().map(|m| m.to_string()).collect();
            return Err(Error::InvalidParameter(format!(
                "mode {} does not apply to task {} (valid modes: {})",
                self.mode,
                self.task,
                valid.join(", ")
            )));
        }
        if self.task == Task::Intel && self.use_vad {
            return Err(Error::InvalidParameter(
                "intelligibility assessment runs without VAD".into(),
            ));
        }
        if self.pretrain.is_some() && self.init.is_some() {
            return Err(Error::InvalidParameter(
                "give either a pretrained base or starting weights, not both".into(),
            ));
        }
        if self.image_size == 0 {
            return Err(Error::InvalidParameter("image size must be positive".into()));
        }
        self.hyper.validate()
    }

    pub fn intelligibility_classes(&self) -> Option<usize> {
        match self.mode {
            Mode::TwoClass => Some(2),
            Mode::ThreeClass => Some(3),
            _ => None,
        }
    }
}

/// A record index with its class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Item {
    pub record: usize,
    pub label: usize,
}

/// One train/test pair. Leave-one-speaker-out produces one per speaker and
/// fold; every other mode produces one per fold.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplit {
    pub fold: usize,
    /// Held-out speaker for SI, otherwise `"all"`.
    pub name: String,
    /// Class names in label-index order.
    pub labels: Vec<String>,
    pub train: Vec<Item>,
    pub test: Vec<Item>,
}

/// Class name of a record under a task, or `None` when the record is
/// outside the task's vocabulary.
fn class_of(cfg: &TaskConfig, r: &UtteranceRecord) -> Result<Option<String>> {
    Ok(match cfg.task {
        Task::Asr => (r.word_group != WordGroup::Cw).then(|| r.word_label.clone()),
        Task::Sid => Some(r.speaker_id.clone()),
        Task::Intel => {
            let n = cfg.intelligibility_classes().expect("validated");
            Some(label_intelligibility(r.intelligibility_pct as i64, n)?.to_string())
        }
    })
}

/// Intelligibility class of a record's speaker, on the scale `like` belongs to.
fn class_of_speaker(r: &UtteranceRecord, like: SeverityClass) -> Result<SeverityClass> {
    let n = if SeverityClass::classes(2)?.contains(&like) { 2 } else { 3 };
    label_intelligibility(r.intelligibility_pct as i64, n)
}

/// Class names for a task in label-index order.
pub fn task_labels(manifest: &CorpusManifest, cfg: &TaskConfig) -> Result<Vec<String>> {
    Ok(match cfg.task {
        Task::Asr => {
            let words: BTreeSet<&str> = manifest
                .records
                .iter()
                .filter(|r| r.word_group != WordGroup::Cw)
                .map(|r| r.word_label.as_str())
                .collect();
            words.into_iter().map(String::from).collect()
        }
        Task::Sid => manifest.speakers.clone(),
        Task::Intel => SeverityClass::classes(cfg.intelligibility_classes().expect("validated"))?
            .iter()
            .map(|c| c.to_string())
            .collect(),
    })
}

pub fn split_task(manifest: &CorpusManifest, cfg: &TaskConfig, fold: &Fold, fold_index: usize) -> Result<Vec<TaskSplit>> {
    cfg.validate()?;
    let labels = task_labels(manifest, cfg)?;
    if labels.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "task {} needs at least 2 classes, the manifest has {}",
            cfg.task,
            labels.len()
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let Some(class) = class_of(cfg, r)? else { continue };
        let label = labels.iter().position(|l| *l == class).expect("label list covers every class");
        let is_cw = r.word_group == WordGroup::Cw;
        let item = Item { record: i, label };
        if fold.train_sessions.contains(&r.session) {
            if let Some(want) = cfg.train_class {
                if class_of_speaker(r, want)? != want {
                    continue;
                }
            }
            // text-independent speaker ID never trains on the held-out words
            if !(is_cw && matches!(cfg.mode, Mode::TI | Mode::TD)) {
                train.push(item);
            }
        } else if fold.test_sessions.contains(&r.session) {
            let keep = match cfg.mode {
                Mode::TI => is_cw,
                Mode::TD => !is_cw,
                _ => true,
            };
            if keep {
                test.push(item);
            }
        }
    }

    let mut splits = Vec::new();
    if cfg.mode == Mode::SI {
        for speaker in &manifest.speakers {
            let of = |it: &Item| manifest.records[it.record].speaker_id == *speaker;
            splits.push(TaskSplit {
                fold: fold_index,
                name: speaker.clone(),
                labels: labels.clone(),
                train: train.iter().copied().filter(|it| !of(it)).collect(),
                test: test.iter().copied().filter(of).collect(),
            });
        }
    } else {
        splits.push(TaskSplit {
            fold: fold_index,
            name: "all".into(),
            labels,
            train,
            test,
        });
    }
    for s in &splits {
        if s.train.is_empty() || s.test.is_empty() {
            return Err(Error::EmptySplit(format!(
                "{} {} fold {} ({}): {} training and {} test utterances",
                cfg.task,
                cfg.mode,
                fold_index + 1,
                s.name,
                s.train.len(),
                s.test.len()
            )));
        }
    }
    Ok(splits)
}
