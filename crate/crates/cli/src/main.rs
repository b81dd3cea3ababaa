//! `gammasr`: corpus synthesis, feature rendering, VAD, training and
//! evaluation from one binary.
//!
//! Exit codes: 0 success, 1 user error (bad flags, missing files, invalid
//! data), 2 internal error (failed self-check or a panic).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gammasr_core::audio::load_wav;
use gammasr_core::manifest::{load_manifest, CorpusManifest};
use gammasr_core::nn::gradcheck::{grad_check_report, toy_spec, DEFAULT_EPS};
use gammasr_core::nn::{load_checkpoint, save_checkpoint, Checkpoint, Hyper};
use gammasr_core::render::{write_ppm, DEFAULT_FLOOR_DB, EXPORT_SIZE};
use gammasr_core::synth::{synth_corpus, SynthConfig, MANIFEST_FILE};
use gammasr_core::tasks::{
    cascade_evaluate, evaluate_split, feature_config, label_intelligibility, make_folds, run::comparison_table,
    run_task_cached, split_from_meta, split_task, train_split, CascadeItem, EvalReport, FeatureCache, FeatureConfig,
    FeatureExtractor, Mode, Representation, Routing, SeverityClass, Task, TaskConfig, DEFAULT_IMAGE_SIZE,
};
use gammasr_core::vad::{vad_mask, VadConfig};

#[derive(Parser)]
#[command(name = "gammasr", version, about = "Gammatonegram speech recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    Synth(SynthArgs),
    /// Render a WAV file as a false-color PPM image.
    Render(RenderArgs),
    /// Print the per-frame speech mask of a WAV file.
    Vad(VadArgs),
    /// Write the time-frequency matrix of a WAV file as tab-separated text.
    Extract(ExtractArgs),
    /// Train one network on one fold.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test sessions of its fold.
    Eval(EvalArgs),
    /// Evaluate an intelligibility-gated cascade of recognizers.
    Cascade(CascadeArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate every fold of a task.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    words: usize,
    /// Held-out words used only for text-independent speaker ID.
    #[arg(long, default_value_t = 5)]
    cw_words: usize,
    #[arg(long, default_value_t = 8)]
    speakers: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 30.0)]
    snr_db: f64,
    /// Comma-separated severity per speaker, each in [0, 1].
    #[arg(long, value_delimiter = ',')]
    severities: Option<Vec<f64>>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct FrontEnd {
    /// Use the plain spectrogram instead of the gammatonegram.
    #[arg(long)]
    spectrogram: bool,
    /// Trim silence with the VAD first.
    #[arg(long)]
    vad: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = EXPORT_SIZE)]
    size: usize,
    #[arg(long, default_value_t = DEFAULT_FLOOR_DB, allow_hyphen_values = true)]
    floor_db: f64,
    #[command(flatten)]
    front: FrontEnd,
}

#[derive(Args)]
struct VadArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    hangover: usize,
    #[arg(long, default_value_t = 3)]
    min_run: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    front: FrontEnd,
}

#[derive(Args)]
struct HyperArgs {
    /// Defaults to 20, or 30 for speaker identification.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// asr, sid or intel.
    #[arg(long)]
    task: String,
    /// SD or SI (asr), TD or TI (sid), 2c or 3c (intel).
    #[arg(long)]
    mode: String,
    /// Reuse this network's feature extractor with a new head.
    #[arg(long)]
    pretrain: Option<PathBuf>,
    /// Comma-separated layer names to keep fixed.
    #[arg(long, value_delimiter = ',')]
    freeze: Vec<String>,
    /// Train without VAD (always the case for intel).
    #[arg(long)]
    no_vad: bool,
    #[arg(long)]
    spectrogram: bool,
    /// Network input side in pixels.
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    size: usize,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Emit JSON lines instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Fold number: 1, 2 or 3 (training session B1, B2 or B3).
    #[arg(long, default_value_t = 1)]
    fold: usize,
    /// Held-out speaker, required for SI.
    #[arg(long)]
    holdout: Option<String>,
    /// Continue from this network, classifier head included.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Train only on speakers of this intelligibility class (low, high, ...).
    #[arg(long)]
    speaker_class: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct CascadeArgs {
    #[arg(long)]
    gate: PathBuf,
    /// CLASS=CKPT, one per gate class.
    #[arg(long = "sub", required = true)]
    subs: Vec<String>,
    #[arg(long)]
    manifest: PathBuf,
    /// Route by the true class instead of the gate's decision.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Run both representations and print a two-row comparison.
    #[arg(long)]
    compare: bool,
    /// Save every trained checkpoint here.
    #[arg(long)]
    save_dir: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<gammasr_core::Error> for Failure {
    fn from(e: gammasr_core::Error) -> Self {
        Failure::User(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn user(msg: impl Into<String>) -> Failure {
    Failure::User(msg.into())
}

fn synth(a: SynthArgs) -> CliResult {
    let cfg = SynthConfig {
        words: a.words,
        cw_words: a.cw_words,
        speakers: a.speakers,
        reps: a.reps,
        severities: a.severities,
        snr_db: a.snr_db,
        ..Default::default()
    };
    let m = synth_corpus(&cfg, a.seed, &a.out)?;
    println!(
        "wrote {} utterances ({} speakers, {} words) and {}",
        m.records.len(),
        m.speakers.len(),
        m.words.len(),
        a.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn front_config(front: &FrontEnd) -> FeatureConfig {
    FeatureConfig {
        representation: if front.spectrogram { Representation::Spectrogram } else { Representation::Gammatonegram },
        use_vad: front.vad,
        ..Default::default()
    }
}

fn render(a: RenderArgs) -> CliResult {
    if a.size == 0 {
        return Err(user("--size must be positive"));
    }
    let cfg = FeatureConfig {
        render_size: a.size,
        image_size: a.size,
        floor_db: a.floor_db,
        ..front_config(&a.front)
    };
    let clip = load_wav(&a.input)?;
    let img = FeatureExtractor::new(cfg)?.render(&clip)?;
    write_ppm(&img, &a.out)?;
    println!("wrote {}x{} image to {}", img.width, img.height, a.out.display());
    Ok(())
}

fn vad(a: VadArgs) -> CliResult {
    let clip = load_wav(&a.input)?;
    let cfg = VadConfig {
        hangover_frames: a.hangover,
        min_run_frames: a.min_run,
        seed: a.seed,
        ..Default::default()
    };
    let mask = vad_mask(&clip, &cfg)?;
    println!("{}", mask.to_bit_string());
    Ok(())
}

fn extract(a: ExtractArgs) -> CliResult {
    let clip = load_wav(&a.input)?;
    let mut fe = FeatureExtractor::new(front_config(&a.front))?;
    let prepared = fe.prepare(&clip)?;
    let m = fe.time_frequency(&prepared)?;
    let mut text = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(text, "{}", cells.join("\t"));
    }
    std::fs::write(&a.out, text).map_err(|e| user(format!("{}: {e}", a.out.display())))?;
    println!("wrote {} x {} matrix to {}", m.nrows(), m.ncols(), a.out.display());
    Ok(())
}

fn load_ckpt(path: &Path) -> Result<Checkpoint<f32>, Failure> {
    load_checkpoint::<f32>(path).map_err(|e| match e {
        gammasr_core::Error::MissingFile(_) => user(e.to_string()),
        _ => user(format!("{}: {e}", path.display())),
    })
}

fn task_config(a: &TaskArgs) -> Result<TaskConfig, Failure> {
    let task: Task = a.task.parse()?;
    let mode: Mode = a.mode.parse()?;
    let mut cfg = TaskConfig::new(task, mode).map_err(|e| user(e.to_string()))?;
    if a.no_vad {
        cfg.use_vad = false;
    }
    cfg.representation = if a.spectrogram { Representation::Spectrogram } else { Representation::Gammatonegram };
    cfg.image_size = a.size;
    cfg.freeze = a.freeze.clone();
    cfg.hyper = Hyper {
        lr: a.hyper.lr,
        momentum: a.hyper.momentum,
        batch: a.hyper.batch,
        epochs: a.hyper.epochs.unwrap_or(cfg.hyper.epochs),
        seed: a.hyper.seed,
    };
    if let Some(p) = &a.pretrain {
        cfg.pretrain = Some(load_ckpt(p)?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_task_manifest(path: &Path) -> Result<CorpusManifest, Failure> {
    Ok(load_manifest(path)?)
}

fn emit(report: &EvalReport, args: &ReportArgs) -> CliResult {
    let text = if args.json { report.to_jsonl() } else { report.to_table() };
    print!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, &text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let mut cfg = task_config(&a.task)?;
    let manifest = load_task_manifest(&a.task.manifest)?;
    if let Some(p) = &a.init {
        cfg.init = Some(load_ckpt(p)?);
    }
    cfg.train_class = a.speaker_class.as_deref().map(str::parse::<SeverityClass>).transpose()?;
    cfg.validate()?;
    let plan = make_folds(&manifest)?;
    let fold = plan
        .folds
        .get(a.fold.wrapping_sub(1))
        .ok_or_else(|| user(format!("--fold must be 1, 2 or 3, got {}", a.fold)))?;
    let splits = split_task(&manifest, &cfg, fold, a.fold - 1)?;
    let index = match (cfg.mode, &a.holdout) {
        (Mode::SI, None) => return Err(user("SI training needs --holdout SPEAKER")),
        (Mode::SI, Some(spk)) => splits
            .iter()
            .position(|s| s.name == *spk)
            .ok_or_else(|| user(format!("speaker {spk:?} is not in the manifest")))?,
        (_, Some(_)) => return Err(user("--holdout only applies to SI")),
        (_, None) => 0,
    };
    // subnets get their own seed stream, one per class
    let seed_index = match cfg.train_class {
        Some(c) => {
            let n = if SeverityClass::classes(2)?.contains(&c) { 2 } else { 3 };
            1 + SeverityClass::classes(n)?.iter().position(|&k| k == c).expect("class in its own list")
        }
        None => index,
    };
    let mut cache = FeatureCache::new(&manifest, feature_config(&cfg))?;
    let (ckpt, losses) = train_split(&mut cache, &cfg, &splits[index], seed_index)?;
    if ckpt.validate().is_err() {
        return Err(Failure::Internal("trained checkpoint failed validation".into()));
    }
    for (e, l) in losses.iter().enumerate() {
        println!("epoch {}\tloss {l:.6}", e + 1);
    }
    save_checkpoint(&ckpt, &a.out)?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let manifest = load_task_manifest(&a.manifest)?;
    let ckpt = load_ckpt(&a.ckpt)?;
    let (cfg, _, split) = split_from_meta(&manifest, &ckpt)?;
    let mut cache = FeatureCache::new(&manifest, feature_config(&cfg))?;
    let report = evaluate_split(&manifest, &mut cache, &ckpt, &split)?;
    emit(&report, &a.report)
}

fn cascade(a: CascadeArgs) -> CliResult {
    let manifest = load_task_manifest(&a.manifest)?;
    let gate = load_ckpt(&a.gate)?;
    let mut subnets = BTreeMap::new();
    for s in &a.subs {
        let (class, path) = s
            .split_once('=')
            .ok_or_else(|| user(format!("--sub expects CLASS=CKPT, got {s:?}")))?;
        let class: SeverityClass = class.parse()?;
        subnets.insert(class.to_string(), load_ckpt(Path::new(path))?);
    }
    let (gate_cfg, gate_fold, _) = split_from_meta(&manifest, &gate)?;
    let n_classes = gate_cfg
        .intelligibility_classes()
        .ok_or_else(|| user("the gate must be an intelligibility checkpoint"))?;
    let first = subnets.values().next().expect("at least one --sub");
    let (sub_cfg, sub_fold, split) = split_from_meta(&manifest, first)?;
    if sub_cfg.task != Task::Asr {
        return Err(user("subnets must be word recognizers"));
    }
    if sub_fold != gate_fold {
        return Err(user("gate and subnets were trained on different folds"));
    }
    let mut gate_cache = FeatureCache::new(&manifest, feature_config(&gate_cfg))?;
    let mut sub_cache = FeatureCache::new(&manifest, feature_config(&sub_cfg))?;
    let gate_inputs = gate_cache.gather(split.test.iter().map(|it| it.record))?;
    let sub_inputs = sub_cache.gather(split.test.iter().map(|it| it.record))?;
    let classes = SeverityClass::classes(n_classes)?;
    let items = split
        .test
        .iter()
        .enumerate()
        .map(|(k, it)| {
            let r = &manifest.records[it.record];
            let c = label_intelligibility(r.intelligibility_pct as i64, n_classes)?;
            Ok(CascadeItem {
                speaker: &r.speaker_id,
                gate_input: &gate_inputs[k],
                input: &sub_inputs[k],
                word: it.label,
                class: classes.iter().position(|&x| x == c).expect("class in its own list"),
            })
        })
        .collect::<gammasr_core::Result<Vec<_>>>()?;
    let routing = if a.oracle { Routing::Oracle } else { Routing::Predicted };
    let outcome = cascade_evaluate(&gate, &subnets, &items, routing)?;
    emit(&outcome.report, &a.report)
}

fn gradcheck(a: GradcheckArgs) -> CliResult {
    if !(a.eps > 0.0) {
        return Err(user("--eps must be positive"));
    }
    let report = grad_check_report(&toy_spec(), a.seed, a.eps)?;
    println!("{:e}", report.max_rel_error);
    if report.max_rel_error >= 1e-4 {
        return Err(Failure::Internal(format!(
            "gradient check failed: max relative error {:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let base = task_config(&a.task)?;
    let manifest = load_task_manifest(&a.task.manifest)?;
    let reps: Vec<Representation> = if a.compare {
        vec![Representation::Gammatonegram, Representation::Spectrogram]
    } else {
        vec![base.representation]
    };
    let mut rows = BTreeMap::new();
    for rep in reps {
        let cfg = TaskConfig { representation: rep, ..base.clone() };
        let mut cache = FeatureCache::new(&manifest, feature_config(&cfg))?;
        let out = run_task_cached(&manifest, &cfg, &mut cache)?;
        if let Some(dir) = &a.save_dir {
            std::fs::create_dir_all(dir).map_err(|e| user(format!("{}: {e}", dir.display())))?;
            for s in &out.splits {
                let name = format!("{}_{}_{}_fold{}_{}.ckpt", cfg.task, cfg.mode, rep, s.fold + 1, s.name);
                save_checkpoint(&s.checkpoint, dir.join(name))?;
            }
        }
        rows.insert(rep.to_string(), out.report);
    }
    if a.compare {
        let text = if a.report.json {
            rows.iter()
                .map(|(k, r)| format!("{}\n", serde_json::json!({"system": k, "mean": r.mean})))
                .collect()
        } else {
            comparison_table(&rows)
        };
        print!("{text}");
        if let Some(path) = &a.report.report {
            std::fs::write(path, &text).map_err(|e| user(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    } else {
        emit(rows.values().next().expect("one row"), &a.report)
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Render(a) => render(a),
        Command::Vad(a) => vad(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Cascade(a) => cascade(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    std::panic::set_hook(Box::new(|_| {}));
    match std::panic::catch_unwind(|| dispatch(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::User(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
