//! Python bindings: `import gammasr`.

use std::path::PathBuf;

use gammasr_core::audio::{load_wav, write_wav, AudioClip};
use gammasr_core::manifest::load_manifest;
use gammasr_core::nn::gradcheck::{grad_check_report, toy_spec, DEFAULT_EPS};
use gammasr_core::nn::{load_checkpoint, save_checkpoint, Checkpoint as CoreCheckpoint, Predictor};
use gammasr_core::render::{encode_ppm, DEFAULT_FLOOR_DB, EXPORT_SIZE};
use gammasr_core::synth::{synth_corpus as core_synth, SynthConfig};
use gammasr_core::tasks::{
    label_intelligibility as core_label, run_task as core_run_task, EvalReport, FeatureConfig, FeatureExtractor,
    Mode, Representation, Task, TaskConfig, DEFAULT_IMAGE_SIZE,
};
use gammasr_core::vad::{vad_mask as core_vad_mask, VadConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(gammasr, GammasrError, PyException);

fn err(e: gammasr_core::Error) -> PyErr {
    GammasrError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = gammasr_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Mono 16-bit PCM recording, samples in [-1, 1).
#[pyclass(name = "AudioClip", module = "gammasr", skip_from_py_object)]
#[derive(Clone)]
struct PyAudioClip {
    inner: AudioClip,
}

#[pymethods]
impl PyAudioClip {
    #[new]
    fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            inner: AudioClip::new(samples, sample_rate_hz),
        }
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples.clone()
    }

    #[getter]
    fn sample_rate_hz(&self) -> u32 {
        self.inner.sample_rate_hz
    }

    fn duration_secs(&self) -> f64 {
        self.inner.duration_secs()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_wav(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("AudioClip({} samples at {} Hz)", self.inner.len(), self.inner.sample_rate_hz)
    }
}

#[pyfunction(name = "load_wav")]
fn py_load_wav(path: PathBuf) -> PyResult<PyAudioClip> {
    Ok(PyAudioClip {
        inner: load_wav(path).map_err(err)?,
    })
}

fn extractor(representation: &str, vad: bool) -> PyResult<FeatureExtractor> {
    FeatureExtractor::new(FeatureConfig {
        representation: parse::<Representation>(representation)?,
        use_vad: vad,
        ..Default::default()
    })
    .map_err(err)
}

/// Time-frequency matrix as rows of channels (or bins) by frames.
#[pyfunction]
#[pyo3(signature = (clip, representation = "gammatonegram", vad = false))]
fn time_frequency(clip: &PyAudioClip, representation: &str, vad: bool) -> PyResult<Vec<Vec<f64>>> {
    let mut fe = extractor(representation, vad)?;
    let prepared = fe.prepare(&clip.inner).map_err(err)?;
    let m = fe.time_frequency(&prepared).map_err(err)?;
    Ok(m.rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Binary PPM image of the clip.
#[pyfunction]
#[pyo3(signature = (clip, size = EXPORT_SIZE, representation = "gammatonegram", vad = false, floor_db = DEFAULT_FLOOR_DB))]
fn render_ppm<'py>(
    py: Python<'py>,
    clip: &PyAudioClip,
    size: usize,
    representation: &str,
    vad: bool,
    floor_db: f64,
) -> PyResult<Bound<'py, PyBytes>> {
    if size == 0 {
        return Err(GammasrError::new_err("size must be positive"));
    }
    let mut fe = FeatureExtractor::new(FeatureConfig {
        representation: parse::<Representation>(representation)?,
        use_vad: vad,
        floor_db,
        render_size: size,
        image_size: size,
        ..Default::default()
    })
    .map_err(err)?;
    let img = fe.render(&clip.inner).map_err(err)?;
    Ok(PyBytes::new(py, &encode_ppm(&img)))
}

/// Per-frame speech decisions.
#[pyfunction]
#[pyo3(signature = (clip, hangover = 2, min_run = 3, seed = 0))]
fn vad_mask(clip: &PyAudioClip, hangover: usize, min_run: usize, seed: u64) -> PyResult<Vec<bool>> {
    let cfg = VadConfig {
        hangover_frames: hangover,
        min_run_frames: min_run,
        seed,
        ..Default::default()
    };
    Ok(core_vad_mask(&clip.inner, &cfg).map_err(err)?.speech)
}

#[pyfunction]
#[pyo3(signature = (pct, n_classes = 3))]
fn label_intelligibility(pct: i64, n_classes: usize) -> PyResult<&'static str> {
    Ok(core_label(pct, n_classes).map_err(err)?.name())
}

/// Writes the synthetic corpus to `out_dir`; returns the utterance count.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, words = 10, cw_words = 5, speakers = 8, reps = 3, snr_db = 30.0, severities = None))]
#[allow(clippy::too_many_arguments)]
fn synth_corpus(
    out_dir: PathBuf,
    seed: u64,
    words: usize,
    cw_words: usize,
    speakers: usize,
    reps: usize,
    snr_db: f64,
    severities: Option<Vec<f64>>,
) -> PyResult<usize> {
    let cfg = SynthConfig {
        words,
        cw_words,
        speakers,
        reps,
        snr_db,
        severities,
        ..Default::default()
    };
    Ok(core_synth(&cfg, seed, out_dir).map_err(err)?.records.len())
}

/// Largest relative gradient error on the toy network.
#[pyfunction]
#[pyo3(signature = (seed = 1, eps = DEFAULT_EPS))]
fn grad_check(seed: u64, eps: f64) -> PyResult<f64> {
    Ok(grad_check_report(&toy_spec(), seed, eps).map_err(err)?.max_rel_error)
}

fn report_dict<'py>(py: Python<'py>, report: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let per = PyDict::new(py);
    for (spk, s) in &report.per_speaker {
        per.set_item(spk, s.accuracy_pct())?;
    }
    d.set_item("labels", report.labels.clone())?;
    d.set_item("per_speaker", per)?;
    d.set_item("mean", report.mean)?;
    d.set_item("confusion", report.confusion.clone())?;
    d.set_item("n_test", report.n_test)?;
    d.set_item("gate_accuracy", report.gate_accuracy)?;
    Ok(d)
}

/// Trains and evaluates every fold of a task; returns the pooled report.
/// With `save_dir`, every trained network is saved there as well.
#[pyfunction]
#[pyo3(signature = (manifest, task, mode, seed, epochs = None, image_size = DEFAULT_IMAGE_SIZE, representation = "gammatonegram", use_vad = None, lr = 0.01, momentum = 0.9, batch = 32, save_dir = None))]
#[allow(clippy::too_many_arguments)]
fn run_task<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    task: &str,
    mode: &str,
    seed: u64,
    epochs: Option<usize>,
    image_size: usize,
    representation: &str,
    use_vad: Option<bool>,
    lr: f64,
    momentum: f64,
    batch: usize,
    save_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = TaskConfig::new(parse::<Task>(task)?, parse::<Mode>(mode)?).map_err(err)?;
    cfg.representation = parse(representation)?;
    cfg.image_size = image_size;
    if let Some(v) = use_vad {
        cfg.use_vad = v;
    }
    cfg.hyper.seed = seed;
    cfg.hyper.lr = lr;
    cfg.hyper.momentum = momentum;
    cfg.hyper.batch = batch;
    if let Some(e) = epochs {
        cfg.hyper.epochs = e;
    }
    cfg.validate().map_err(err)?;
    let manifest = load_manifest(manifest).map_err(err)?;
    let outcome = py.detach(|| core_run_task(&manifest, &cfg)).map_err(err)?;
    if let Some(dir) = save_dir {
        std::fs::create_dir_all(&dir).map_err(|e| err(e.into()))?;
        for s in &outcome.splits {
            let name = format!("{}_{}_fold{}_{}.ckpt", cfg.task, cfg.mode, s.fold + 1, s.name);
            save_checkpoint(&s.checkpoint, dir.join(name)).map_err(err)?;
        }
    }
    report_dict(py, &outcome.report)
}

/// Trained network in `f32`.
#[pyclass(name = "Checkpoint", module = "gammasr")]
struct PyCheckpoint {
    inner: CoreCheckpoint<f32>,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint::<f32>(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, path).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.train_meta.labels.clone()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.spec.class_count
    }

    /// (height, width, channels) of the expected input.
    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        let s = &self.inner.spec.input;
        (s.height, s.width, s.channels)
    }

    /// Class probabilities for one flattened input.
    fn probabilities(&self, input: Vec<f32>) -> PyResult<Vec<f32>> {
        let mut p = Predictor::new(&self.inner).map_err(err)?;
        Ok(p.probabilities(&input).map_err(err)?.to_vec())
    }

    /// (class index, probability) of the most likely class.
    fn predict(&self, input: Vec<f32>) -> PyResult<(usize, f32)> {
        let mut p = Predictor::new(&self.inner).map_err(err)?;
        p.predict(&input).map_err(err)
    }

    /// Renders the clip the way the network was trained and classifies it.
    #[pyo3(signature = (clip, representation = "gammatonegram", vad = false))]
    fn classify(&self, clip: &PyAudioClip, representation: &str, vad: bool) -> PyResult<(String, f32)> {
        let s = &self.inner.spec.input;
        let mut fe = FeatureExtractor::new(FeatureConfig {
            representation: parse::<Representation>(representation)?,
            use_vad: vad,
            image_size: s.height.max(s.width),
            ..Default::default()
        })
        .map_err(err)?;
        let input = fe.input::<f32>(&clip.inner).map_err(err)?;
        let (k, p) = Predictor::new(&self.inner).map_err(err)?.predict(&input).map_err(err)?;
        let name = self.inner.train_meta.labels.get(k).cloned().unwrap_or_else(|| k.to_string());
        Ok((name, p))
    }
}

#[pymodule]
fn gammasr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GammasrError", m.py().get_type::<GammasrError>())?;
    m.add_class::<PyAudioClip>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(py_load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(time_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(render_ppm, m)?)?;
    m.add_function(wrap_pyfunction!(vad_mask, m)?)?;
    m.add_function(wrap_pyfunction!(label_intelligibility, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_task, m)?)?;
    Ok(())
}
