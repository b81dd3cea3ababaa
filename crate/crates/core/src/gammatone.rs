//! ERB-spaced gammatone filterbank applied as a spectral weight matrix.
//!
//! Each channel weights FFT bin `f` by the magnitude response of an order-`n`
//! gammatone around its center `fc`, `[1 + ((f - fc) / b)^2]^(-n/2)` with
//! `b = 1.019 * ERB(fc)`, and every row is scaled so its peak is exactly 1.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};

pub const DEFAULT_CHANNELS: usize = 64;
pub const DEFAULT_FMIN_HZ: f64 = 50.0;
pub const DEFAULT_FMAX_HZ: f64 = 8000.0;
pub const DEFAULT_ORDER: u32 = 4;
pub const DEFAULT_BANDWIDTH_SCALE: f64 = 1.019;

/// Glasberg-Moore equivalent rectangular bandwidth in Hz.
pub fn erb_bandwidth(fc_hz: f64) -> Result<f64> {
    if !(fc_hz >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative center frequency {fc_hz}")));
    }
    Ok(24.7 * (4.37 * fc_hz / 1000.0 + 1.0))
}

/// ERB-number (Cams) of a frequency in Hz.
pub fn erb_number(f_hz: f64) -> f64 {
    21.4 * (4.37 * f_hz / 1000.0 + 1.0).log10()
}

pub fn erb_number_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// `c` center frequencies evenly spaced in ERB-number between `fmin` and
/// `fmax`, both endpoints included.
pub fn erb_space(fmin_hz: f64, fmax_hz: f64, c: usize) -> Result<Vec<f64>> {
    if c < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 channels, got {c}")));
    }
    if !(fmin_hz > 0.0 && fmax_hz > fmin_hz) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < fmin < fmax, got {fmin_hz} / {fmax_hz}"
        )));
    }
    let (lo, hi) = (erb_number(fmin_hz), erb_number(fmax_hz));
    let step = (hi - lo) / (c - 1) as f64;
    let mut centers: Vec<f64> = (0..c).map(|i| erb_number_to_hz(lo + step * i as f64)).collect();
    centers[0] = fmin_hz;
    centers[c - 1] = fmax_hz;
    Ok(centers)
}

/// Unnormalized kernel value at frequency `f` for a channel at `fc` with
/// bandwidth `b`.
pub fn raw_weight(f_hz: f64, fc_hz: f64, bandwidth_hz: f64, order: u32) -> f64 {
    let d = (f_hz - fc_hz) / bandwidth_hz;
    (1.0 + d * d).powf(-(order as f64) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammatoneConfig {
    pub channels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub order: u32,
    pub bandwidth_scale: f64,
}

impl Default for GammatoneConfig {
    fn default() -> Self {
        Self {
            channels: DEFAULT_CHANNELS,
            fmin_hz: DEFAULT_FMIN_HZ,
            fmax_hz: DEFAULT_FMAX_HZ,
            order: DEFAULT_ORDER,
            bandwidth_scale: DEFAULT_BANDWIDTH_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneFilterbank {
    /// C channels by K = nfft/2 + 1 bins.
    pub weights: Array2<f64>,
    pub center_freqs_hz: Vec<f64>,
    pub order: u32,
    pub bandwidth_scale: f64,
    pub nfft: usize,
    pub sample_rate_hz: u32,
}

impl GammatoneFilterbank {
    pub fn channels(&self) -> usize {
        self.weights.nrows()
    }

    /// One line per channel, whitespace-separated weights, for plotting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.weights.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:.9e}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn gammatone_weights(nfft: usize, sample_rate_hz: u32, cfg: &GammatoneConfig) -> Result<GammatoneFilterbank> {
    if nfft < 2 || !nfft.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("nfft {nfft} is not a power of two")));
    }
    if cfg.fmax_hz > sample_rate_hz as f64 / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "fmax {} Hz is above Nyquist for {} Hz",
            cfg.fmax_hz, sample_rate_hz
        )));
    }
    if cfg.order == 0 || !(cfg.bandwidth_scale > 0.0) {
        return Err(Error::InvalidParameter("order and bandwidth scale must be positive".into()));
    }
    let centers = erb_space(cfg.fmin_hz, cfg.fmax_hz, cfg.channels)?;
    let k = nfft / 2 + 1;
    let bin_hz = sample_rate_hz as f64 / nfft as f64;
    let mut weights = Array2::zeros((centers.len(), k));
    for (mut row, &fc) in weights.rows_mut().into_iter().zip(&centers) {
        let b = cfg.bandwidth_scale * erb_bandwidth(fc)?;
        for (ki, w) in row.iter_mut().enumerate() {
            *w = raw_weight(ki as f64 * bin_hz, fc, b, cfg.order);
        }
        let peak = row.iter().fold(0.0f64, |m, &v| m.max(v));
        row.mapv_inplace(|v| v / peak);
    }
    Ok(GammatoneFilterbank {
        weights,
        center_freqs_hz: centers,
        order: cfg.order,
        bandwidth_scale: cfg.bandwidth_scale,
        nfft,
        sample_rate_hz,
    })
}

/// Filterbank energies, C channels by T frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Gammatonegram {
    pub energies: Array2<f64>,
    pub center_freqs_hz: Vec<f64>,
    pub hop_samples: usize,
    pub sample_rate_hz: u32,
}

pub fn gammatonegram(spec: &Spectrogram, fb: &GammatoneFilterbank) -> Result<Gammatonegram> {
    if fb.weights.ncols() != spec.mags.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "filterbank has {} bins, spectrogram has {}",
            fb.weights.ncols(),
            spec.mags.nrows()
        )));
    }
    Ok(Gammatonegram {
        energies: fb.weights.dot(&spec.mags),
        center_freqs_hz: fb.center_freqs_hz.clone(),
        hop_samples: spec.hop_samples,
        sample_rate_hz: spec.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_bank() -> GammatoneFilterbank {
        gammatone_weights(512, 16_000, &GammatoneConfig::default()).unwrap()
    }

    #[test]
    fn erb_values() {
        assert_eq!(erb_bandwidth(0.0).unwrap(), 24.7);
        assert!((erb_bandwidth(1000.0).unwrap() - 132.639).abs() < 1e-9);
        assert!((erb_bandwidth(4000.0).unwrap() - 456.456).abs() < 1e-9);
        assert!(erb_bandwidth(-1.0).is_err());
    }

    #[test]
    fn two_channels_are_the_endpoints() {
        assert_eq!(erb_space(50.0, 8000.0, 2).unwrap(), vec![50.0, 8000.0]);
    }

    #[test]
    fn erb_space_errors() {
        assert!(erb_space(50.0, 8000.0, 1).is_err());
        assert!(erb_space(800.0, 800.0, 4).is_err());
        assert!(erb_space(0.0, 800.0, 4).is_err());
    }

    #[test]
    fn middle_center_inverts_the_mean_erb_number() {
        let c = erb_space(50.0, 8000.0, 3).unwrap();
        // separately coded inverse: solve E(f) = target by bisection
        let target = (erb_number(50.0) + erb_number(8000.0)) / 2.0;
        let (mut lo, mut hi) = (50.0f64, 8000.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 21.4 * (0.00437 * mid + 1.0).log10() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((c[1] - 0.5 * (lo + hi)).abs() < 1e-9, "{} vs {}", c[1], lo);
    }

    #[test]
    fn weights_peak_at_nearest_bin_and_decrease() {
        let fb = default_bank();
        let bin_hz = 16_000.0 / 512.0;
        for (row, &fc) in fb.weights.rows().into_iter().zip(&fb.center_freqs_hz) {
            let nearest = (fc / bin_hz).round() as usize;
            assert_eq!(row[nearest], 1.0);
            for k in 0..nearest {
                assert!(row[k] < row[k + 1]);
            }
            for k in nearest..row.len() - 1 {
                assert!(row[k] > row[k + 1]);
            }
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
    }

    #[test]
    fn raw_weight_at_one_bandwidth() {
        assert!((raw_weight(1100.0, 1000.0, 100.0, 4) - 0.25).abs() < 1e-15);
        assert!((raw_weight(900.0, 1000.0, 100.0, 4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn filterbank_errors() {
        assert!(gammatone_weights(500, 16_000, &GammatoneConfig::default()).is_err());
        let cfg = GammatoneConfig { fmax_hz: 9000.0, ..Default::default() };
        assert!(gammatone_weights(512, 16_000, &cfg).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let fb = default_bank();
        let spec = Spectrogram {
            mags: Array2::zeros((129, 10)),
            bin_hz: 62.5,
            nfft: 256,
            hop_samples: 240,
            sample_rate_hz: 16_000,
        };
        assert!(matches!(gammatonegram(&spec, &fb), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn text_dump_has_one_line_per_channel() {
        let fb = default_bank();
        let text = fb.to_text();
        assert_eq!(text.lines().count(), 64);
        assert_eq!(text.lines().next().unwrap().split(' ').count(), 257);
    }
}
