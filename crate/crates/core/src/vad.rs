//! Voice activity detection with a two-component GMM on frame log-energy,
//! and silence trimming driven by the resulting mask.

use crate::audio::AudioClip;
use crate::dsp::{frame_signal, FrameConfig};
use crate::error::{Error, Result};
use crate::rng;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const ENERGY_EPS: f64 = 1e-10;
const LL_TOLERANCE: f64 = 1e-6;

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm1d {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Gmm1d {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    fn component_log_densities(&self, x: f64, out: &mut [f64]) {
        for j in 0..self.k() {
            let var = self.variances[j];
            let d = x - self.means[j];
            out[j] = self.weights[j].ln() - 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
        }
    }

    /// Posterior probability of each component for `x`.
    pub fn posteriors(&self, x: f64) -> Vec<f64> {
        let mut l = vec![0.0; self.k()];
        self.component_log_densities(x, &mut l);
        let lse = log_sum_exp(&l);
        l.iter().map(|v| (v - lse).exp()).collect()
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        let mut l = vec![0.0; self.k()];
        data.iter()
            .map(|&x| {
                self.component_log_densities(x, &mut l);
                log_sum_exp(&l)
            })
            .sum()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: Gmm1d,
    /// Data log-likelihood at each E-step, in iteration order.
    pub log_likelihood: Vec<f64>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * f
}

/// Fits a `k`-component mixture by EM.
///
/// Means start at evenly spaced percentiles between the 10th and 90th, every
/// variance at the global variance, weights uniform. If two starting means
/// coincide they are spread apart by a small seeded offset. Stops after
/// `iters` iterations or once the log-likelihood gains less than 1e-6.
pub fn fit_gmm_1d(data: &[f64], k: usize, iters: usize, seed: u64) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    if data.len() < 2 * k {
        return Err(Error::InsufficientData(format!(
            "{} points for a {k}-component mixture (need {})",
            data.len(),
            2 * k
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in GMM data".into()));
    }
    let n = data.len() as f64;
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = data.iter().sum::<f64>() / n;
    let global_var = (data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).max(VARIANCE_FLOOR);

    let mut means: Vec<f64> = (0..k)
        .map(|j| {
            let p = if k == 1 { 50.0 } else { 10.0 + 80.0 * j as f64 / (k - 1) as f64 };
            percentile(&sorted, p)
        })
        .collect();
    let mut r = rng::seeded(seed);
    for j in 1..k {
        if means[j] <= means[j - 1] {
            means[j] = means[j - 1] + 1e-3 * global_var.sqrt() * rng::open01(&mut r);
        }
    }
    let mut model = Gmm1d {
        means,
        variances: vec![global_var; k],
        weights: vec![1.0 / k as f64; k],
    };

    let mut history = Vec::with_capacity(iters);
    let mut resp = vec![0.0; data.len() * k];
    let mut l = vec![0.0; k];
    for _ in 0..iters {
        let mut ll = 0.0;
        for (i, &x) in data.iter().enumerate() {
            model.component_log_densities(x, &mut l);
            let lse = log_sum_exp(&l);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (l[j] - lse).exp();
            }
        }
        let converged = history.last().is_some_and(|&prev: &f64| ll - prev < LL_TOLERANCE);
        history.push(ll);
        if converged {
            break;
        }

        for j in 0..k {
            let nk: f64 = (0..data.len()).map(|i| resp[i * k + j]).sum();
            if nk <= 0.0 {
                model.weights[j] = 0.0;
                continue;
            }
            let mu = data.iter().enumerate().map(|(i, &x)| resp[i * k + j] * x).sum::<f64>() / nk;
            let var = data
                .iter()
                .enumerate()
                .map(|(i, &x)| resp[i * k + j] * (x - mu) * (x - mu))
                .sum::<f64>()
                / nk;
            model.means[j] = mu;
            model.variances[j] = var.max(VARIANCE_FLOOR);
            model.weights[j] = nk / n;
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
    }

    Ok(GmmFit {
        model,
        log_likelihood: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    pub frame: FrameConfig,
    pub hangover_frames: usize,
    pub min_run_frames: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            hangover_frames: 2,
            min_run_frames: 3,
            iters: 20,
            seed: 0,
        }
    }
}

/// Per-frame speech decisions aligned with `frame_signal` output.
#[derive(Debug, Clone, PartialEq)]
pub struct VadMask {
    pub speech: Vec<bool>,
    pub hangover_frames: usize,
    pub min_run_frames: usize,
    pub frame: FrameConfig,
    pub sample_rate_hz: u32,
    /// True when the energy clusters were too close and every frame was kept.
    pub fail_open: bool,
}

impl VadMask {
    pub fn len(&self) -> usize {
        self.speech.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speech.is_empty()
    }

    pub fn speech_frames(&self) -> usize {
        self.speech.iter().filter(|&&s| s).count()
    }

    /// `0`/`1` per frame.
    pub fn to_bit_string(&self) -> String {
        self.speech.iter().map(|&s| if s { '1' } else { '0' }).collect()
    }
}

/// Runs of `true` as inclusive `(start, end)` frame indices.
fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &s) in mask.iter().enumerate() {
        match (s, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                out.push((a, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push((a, mask.len() - 1));
    }
    out
}

pub fn frame_log_energies(clip: &AudioClip, frame: FrameConfig) -> Result<Vec<f64>> {
    let frames = frame_signal(clip, frame, false)?;
    Ok(frames
        .frames
        .rows()
        .into_iter()
        .map(|r| (r.iter().map(|v| v * v).sum::<f64>() + ENERGY_EPS).ln())
        .collect())
}

pub fn vad_mask(clip: &AudioClip, cfg: &VadConfig) -> Result<VadMask> {
    cfg.frame.validate()?;
    let n = cfg.frame.frame_len(clip.sample_rate_hz);
    let h = cfg.frame.hop(clip.sample_rate_hz);
    let needed = n + 3 * h;
    if clip.len() < needed {
        return Err(Error::SignalTooShort {
            len: clip.len(),
            needed,
        });
    }
    let energies = frame_log_energies(clip, cfg.frame)?;
    let t = energies.len();
    let fit = fit_gmm_1d(&energies, 2, cfg.iters, cfg.seed)?;
    let m = &fit.model;
    let (hi, lo) = if m.means[1] >= m.means[0] { (1, 0) } else { (0, 1) };

    let mut fail_open = (m.means[hi] - m.means[lo]).abs() < 1.0;
    let mut speech = vec![true; t];
    if !fail_open {
        for (s, &e) in speech.iter_mut().zip(&energies) {
            *s = m.posteriors(e)[hi] > 0.5;
        }
        for (a, b) in runs(&speech) {
            if b + 1 - a < cfg.min_run_frames {
                speech[a..=b].iter_mut().for_each(|s| *s = false);
            }
        }
        let kept = runs(&speech);
        if kept.is_empty() {
            fail_open = true;
            speech.iter_mut().for_each(|s| *s = true);
        } else {
            for (a, b) in kept {
                let lo_i = a.saturating_sub(cfg.hangover_frames);
                let hi_i = (b + cfg.hangover_frames).min(t - 1);
                speech[lo_i..=hi_i].iter_mut().for_each(|s| *s = true);
            }
        }
    }

    Ok(VadMask {
        speech,
        hangover_frames: cfg.hangover_frames,
        min_run_frames: cfg.min_run_frames,
        frame: cfg.frame,
        sample_rate_hz: clip.sample_rate_hz,
        fail_open,
    })
}

/// Keeps the samples under speech frames. Each run of speech frames
/// contributes the contiguous span from its first frame's start to its last
/// frame's end.
pub fn trim_silence(clip: &AudioClip, mask: &VadMask, frame: FrameConfig) -> Result<AudioClip> {
    if mask.frame != frame || mask.sample_rate_hz != clip.sample_rate_hz {
        return Err(Error::InvalidParameter(
            "VAD mask was computed with a different framing".into(),
        ));
    }
    let expected = frame.frame_count(clip.len(), clip.sample_rate_hz);
    if mask.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} frames, clip has {expected}",
            mask.len()
        )));
    }
    let n = frame.frame_len(clip.sample_rate_hz);
    let h = frame.hop(clip.sample_rate_hz);
    let mut out = Vec::new();
    for (a, b) in runs(&mask.speech) {
        out.extend_from_slice(&clip.samples[a * h..b * h + n]);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("mask marks no speech frames".into()));
    }
    Ok(AudioClip::new(out, clip.sample_rate_hz))
}

/// `vad_mask` followed by `trim_silence` with the same framing.
pub fn remove_silence(clip: &AudioClip, cfg: &VadConfig) -> Result<AudioClip> {
    let mask = vad_mask(clip, cfg)?;
    trim_silence(clip, &mask, cfg.frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(secs: f64, amp: f64) -> Vec<f64> {
        let n = (secs * 16_000.0) as usize;
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn delta_clusters_are_recovered() {
        let mut data = vec![-10.0; 200];
        data.extend(vec![-1.0; 200]);
        let fit = fit_gmm_1d(&data, 2, 50, 0).unwrap();
        let mut means = fit.model.means.clone();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 10.0).abs() < 1e-3);
        assert!((means[1] + 1.0).abs() < 1e-3);
        for w in &fit.model.weights {
            assert!((w - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn single_component_is_the_sample_moments() {
        let mut r = rng::seeded(4);
        let data: Vec<f64> = (0..300).map(|_| rng::uniform(&mut r, -3.0, 5.0)).collect();
        let fit = fit_gmm_1d(&data, 1, 10, 0).unwrap();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!((fit.model.means[0] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((fit.model.variances[0] - var).abs() <= 1e-12 * var);
        assert_eq!(fit.model.weights, vec![1.0]);
    }

    #[test]
    fn gmm_argument_errors() {
        assert!(matches!(fit_gmm_1d(&[1.0, 2.0, 3.0], 2, 10, 0), Err(Error::InsufficientData(_))));
        assert!(fit_gmm_1d(&[1.0, f64::NAN, 3.0, 4.0], 2, 10, 0).is_err());
    }

    #[test]
    fn all_equal_data_floors_the_variance() {
        let fit = fit_gmm_1d(&[2.5; 40], 2, 20, 3).unwrap();
        assert!(fit.model.variances.iter().all(|&v| v >= VARIANCE_FLOOR));
        assert!((fit.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(fit.model.means.iter().all(|m| (m - 2.5).abs() < 1e-2));
    }

    #[test]
    fn silence_fails_open() {
        let clip = AudioClip::new(vec![0.0; 8000], 16_000);
        let mask = vad_mask(&clip, &VadConfig::default()).unwrap();
        assert!(mask.fail_open);
        assert!(mask.speech.iter().all(|&s| s));
    }

    #[test]
    fn mask_is_aligned_with_frames() {
        let mut x = tone(0.3, 0.5);
        x.extend(vec![0.0; 4800]);
        let clip = AudioClip::new(x, 16_000);
        let mask = vad_mask(&clip, &VadConfig::default()).unwrap();
        let frames = frame_signal(&clip, FrameConfig::default(), false).unwrap();
        assert_eq!(mask.len(), frames.frame_count());
        assert_eq!(mask.to_bit_string().len(), mask.len());
    }

    #[test]
    fn too_short_for_four_frames() {
        let clip = AudioClip::new(vec![0.1; 1000], 16_000);
        assert!(matches!(vad_mask(&clip, &VadConfig::default()), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn all_speech_mask_keeps_the_framed_samples() {
        let x: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.01).sin()).collect();
        let clip = AudioClip::new(x.clone(), 16_000);
        let frame = FrameConfig::default();
        let t = frame.frame_count(clip.len(), 16_000);
        let mask = VadMask {
            speech: vec![true; t],
            hangover_frames: 0,
            min_run_frames: 1,
            frame,
            sample_rate_hz: 16_000,
            fail_open: false,
        };
        let out = trim_silence(&clip, &mask, frame).unwrap();
        assert_eq!(out.samples, x[..(t - 1) * 240 + 400]);
    }

    #[test]
    fn trim_rejects_foreign_masks() {
        let clip = AudioClip::new(vec![0.1; 5000], 16_000);
        let frame = FrameConfig::default();
        let mask = VadMask {
            speech: vec![true; 3],
            hangover_frames: 0,
            min_run_frames: 1,
            frame,
            sample_rate_hz: 16_000,
            fail_open: false,
        };
        assert!(matches!(trim_silence(&clip, &mask, frame), Err(Error::DimensionMismatch(_))));
        let other = FrameConfig { frame_ms: 20.0, overlap_ms: 10.0 };
        assert!(trim_silence(&clip, &mask, other).is_err());
    }

    #[test]
    fn runs_are_found() {
        assert_eq!(runs(&[true, true, false, true, false, false, true]), vec![(0, 1), (3, 3), (6, 6)]);
        assert!(runs(&[false, false]).is_empty());
    }
}
