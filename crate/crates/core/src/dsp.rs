//! Short-time analysis: pre-emphasis, framing, Hamming window, FFT magnitude
//! and the magnitude spectrogram built from them.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_PRE_EMPHASIS: f64 = 0.97;
pub const DEFAULT_FRAME_MS: f64 = 25.0;
pub const DEFAULT_OVERLAP_MS: f64 = 10.0;
pub const DEFAULT_NFFT: usize = 512;

pub fn pre_emphasis(clip: &AudioClip, alpha: f64) -> Result<AudioClip> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "pre-emphasis coefficient {alpha} outside [0, 1)"
        )));
    }
    let x = &clip.samples;
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    y.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    Ok(AudioClip::new(y, clip.sample_rate_hz))
}

/// Symmetric Hamming window, `0.54 - 0.46 cos(2 pi i / (n - 1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("window length {n} < 2")));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            // evaluate the mirrored index so w[i] == w[n-1-i] bit for bit
            let j = i.min(n - 1 - i) as f64;
            0.54 - 0.46 * (2.0 * PI * j / denom).cos()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub frame_ms: f64,
    pub overlap_ms: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: DEFAULT_FRAME_MS,
            overlap_ms: DEFAULT_OVERLAP_MS,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_ms >= 0.0 && self.frame_ms > self.overlap_ms) {
            return Err(Error::InvalidParameter(format!(
                "need frame_ms > overlap_ms >= 0, got {} / {}",
                self.frame_ms, self.overlap_ms
            )));
        }
        Ok(())
    }

    pub fn frame_len(&self, sample_rate_hz: u32) -> usize {
        (self.frame_ms * sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self, sample_rate_hz: u32) -> usize {
        ((self.frame_ms - self.overlap_ms) * sample_rate_hz as f64 / 1000.0).round() as usize
    }

    /// Frames that fit in `len` samples, `1 + (len - N) / H`, or 0 if none.
    pub fn frame_count(&self, len: usize, sample_rate_hz: u32) -> usize {
        let n = self.frame_len(sample_rate_hz);
        let h = self.hop(sample_rate_hz);
        if len < n || h == 0 {
            0
        } else {
            1 + (len - n) / h
        }
    }
}

/// T frames of N samples each, taken every H samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: Array2<f64>,
    pub frame_len_samples: usize,
    pub hop_samples: usize,
    pub sample_rate_hz: u32,
}

impl FrameMatrix {
    pub fn frame_count(&self) -> usize {
        self.frames.nrows()
    }
}

pub fn frame_signal(clip: &AudioClip, cfg: FrameConfig, windowed: bool) -> Result<FrameMatrix> {
    cfg.validate()?;
    let n = cfg.frame_len(clip.sample_rate_hz);
    let h = cfg.hop(clip.sample_rate_hz);
    if n < 2 || h == 0 {
        return Err(Error::InvalidParameter(format!(
            "frame of {n} samples with hop {h} at {} Hz",
            clip.sample_rate_hz
        )));
    }
    if clip.len() < n {
        return Err(Error::SignalTooShort {
            len: clip.len(),
            needed: n,
        });
    }
    let t = cfg.frame_count(clip.len(), clip.sample_rate_hz);
    let window = if windowed { Some(hamming_window(n)?) } else { None };
    let mut frames = Array2::zeros((t, n));
    for (ti, mut row) in frames.rows_mut().into_iter().enumerate() {
        let src = &clip.samples[ti * h..ti * h + n];
        match &window {
            Some(w) => row
                .iter_mut()
                .zip(src.iter().zip(w))
                .for_each(|(d, (s, w))| *d = s * w),
            None => row.iter_mut().zip(src).for_each(|(d, s)| *d = *s),
        }
    }
    Ok(FrameMatrix {
        frames,
        frame_len_samples: n,
        hop_samples: h,
        sample_rate_hz: clip.sample_rate_hz,
    })
}

/// Iterative radix-2 decimation-in-time FFT of a fixed power-of-two size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("FFT size {n} is not a power of two")));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward transform in place, `X[k] = sum_i x[i] e^{-2 pi j i k / n}`.
    pub fn process(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length must equal the FFT size");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }

    /// `|X[k]|` for `k = 0..=n/2` of a real frame zero-padded to `n`.
    pub fn magnitude(&self, frame: &[f64], out: &mut [f64], scratch: &mut Vec<Complex64>) -> Result<()> {
        if frame.len() > self.n {
            return Err(Error::InvalidParameter(format!(
                "frame of {} samples exceeds FFT size {}",
                frame.len(),
                self.n
            )));
        }
        debug_assert_eq!(out.len(), self.n / 2 + 1);
        scratch.clear();
        scratch.extend(frame.iter().map(|&v| Complex64::new(v, 0.0)));
        scratch.resize(self.n, Complex64::new(0.0, 0.0));
        self.process(scratch);
        for (o, c) in out.iter_mut().zip(scratch.iter()) {
            *o = c.norm();
        }
        Ok(())
    }
}

pub fn fft_magnitude(frame: &[f64], nfft: usize) -> Result<Vec<f64>> {
    let fft = Fft::new(nfft)?;
    let mut out = vec![0.0; nfft / 2 + 1];
    fft.magnitude(frame, &mut out, &mut Vec::with_capacity(nfft))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramConfig {
    pub alpha: f64,
    pub frame: FrameConfig,
    pub nfft: usize,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_PRE_EMPHASIS,
            frame: FrameConfig::default(),
            nfft: DEFAULT_NFFT,
        }
    }
}

/// Magnitude spectrogram, `K = nfft/2 + 1` bins by T frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub mags: Array2<f64>,
    pub bin_hz: f64,
    pub nfft: usize,
    pub hop_samples: usize,
    pub sample_rate_hz: u32,
}

pub fn spectrogram(clip: &AudioClip, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    let emphasized = pre_emphasis(clip, cfg.alpha)?;
    let frames = frame_signal(&emphasized, cfg.frame, true)?;
    let fft = Fft::new(cfg.nfft)?;
    if frames.frame_len_samples > cfg.nfft {
        return Err(Error::InvalidParameter(format!(
            "nfft {} is shorter than the {}-sample frame",
            cfg.nfft, frames.frame_len_samples
        )));
    }
    let k = cfg.nfft / 2 + 1;
    let t = frames.frame_count();
    let mut mags = Array2::zeros((k, t));
    let mut col = vec![0.0; k];
    let mut scratch = Vec::with_capacity(cfg.nfft);
    for (ti, frame) in frames.frames.rows().into_iter().enumerate() {
        fft.magnitude(frame.as_slice().expect("frames are contiguous"), &mut col, &mut scratch)?;
        for (ki, &v) in col.iter().enumerate() {
            mags[[ki, ti]] = v;
        }
    }
    Ok(Spectrogram {
        mags,
        bin_hz: clip.sample_rate_hz as f64 / cfg.nfft as f64,
        nfft: cfg.nfft,
        hop_samples: frames.hop_samples,
        sample_rate_hz: clip.sample_rate_hz,
    })
}
