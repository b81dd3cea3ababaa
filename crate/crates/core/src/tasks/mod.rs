//! Experiments: session folds, task splits, training runs, reports and the
//! cascade recognizer.

pub mod cascade;
pub mod features;
pub mod folds;
pub mod report;
pub mod run;
pub mod split;

pub use cascade::{cascade_evaluate, run_cascade, CascadeConfig, CascadeItem, CascadeOutcome, CascadeRun, Routing};
pub use features::{FeatureCache, FeatureConfig, FeatureExtractor, Representation, DEFAULT_IMAGE_SIZE};
pub use folds::{label_intelligibility, make_folds, Fold, FoldPlan, SeverityClass};
pub use report::{Decision, EvalReport, SpeakerScore};
pub use run::{
    evaluate_split, evaluate_wrr, feature_config, run_task, run_task_cached, split_from_meta, train_split, EvalItem,
    RunOutcome, TrainedSplit,
};
pub use split::{split_task, task_labels, Item, Mode, Task, TaskConfig, TaskSplit};
