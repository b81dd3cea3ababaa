//! Audio to network input: optional VAD trim, spectrogram, optional
//! gammatone filterbank, false-color render, resize to training size.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, AudioClip};
use crate::dsp::{spectrogram, SpectrogramConfig};
use crate::error::{Error, Result};
use crate::gammatone::{gammatone_weights, gammatonegram, GammatoneConfig, GammatoneFilterbank};
use crate::manifest::CorpusManifest;
use crate::nn::{image_to_input, Real};
use crate::render::{render_image, resize_rgb, RgbImage, DEFAULT_FLOOR_DB, EXPORT_SIZE};
use crate::vad::{vad_mask, trim_silence, VadConfig};

pub const DEFAULT_IMAGE_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Gammatonegram,
    Spectrogram,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Gammatonegram => "gammatonegram",
            Representation::Spectrogram => "spectrogram",
        })
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gammatonegram" => Ok(Representation::Gammatonegram),
            "spectrogram" => Ok(Representation::Spectrogram),
            _ => Err(Error::InvalidParameter(format!(
                "unknown representation {s:?} (expected gammatonegram or spectrogram)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub representation: Representation,
    pub use_vad: bool,
    pub vad: VadConfig,
    pub spectrogram: SpectrogramConfig,
    pub gammatone: GammatoneConfig,
    pub floor_db: f64,
    /// Side of the rendered export image.
    pub render_size: usize,
    /// Side of the image the network sees.
    pub image_size: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            representation: Representation::Gammatonegram,
            use_vad: true,
            vad: VadConfig::default(),
            spectrogram: SpectrogramConfig::default(),
            gammatone: GammatoneConfig::default(),
            floor_db: DEFAULT_FLOOR_DB,
            render_size: EXPORT_SIZE,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

pub struct FeatureExtractor {
    cfg: FeatureConfig,
    filterbank: Option<GammatoneFilterbank>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        if cfg.image_size == 0 || cfg.render_size == 0 {
            return Err(Error::InvalidParameter("image sizes must be positive".into()));
        }
        Ok(Self { cfg, filterbank: None })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Applies VAD trimming when enabled. Clips too short to analyze, or
    /// whose trimmed form would not fill one frame, pass through unchanged.
    pub fn prepare(&self, clip: &AudioClip) -> Result<AudioClip> {
        if !self.cfg.use_vad {
            return Ok(clip.clone());
        }
        let mask = match vad_mask(clip, &self.cfg.vad) {
            Ok(m) => m,
            Err(Error::SignalTooShort { .. }) => return Ok(clip.clone()),
            Err(e) => return Err(e),
        };
        let trimmed = trim_silence(clip, &mask, self.cfg.vad.frame)?;
        if trimmed.len() < self.cfg.spectrogram.frame.frame_len(clip.sample_rate_hz) {
            return Ok(clip.clone());
        }
        Ok(trimmed)
    }

    fn filterbank(&mut self, sample_rate_hz: u32) -> Result<&GammatoneFilterbank> {
        let stale = self
            .filterbank
            .as_ref()
            .is_none_or(|fb| fb.sample_rate_hz != sample_rate_hz);
        if stale {
            self.filterbank = Some(gammatone_weights(self.cfg.spectrogram.nfft, sample_rate_hz, &self.cfg.gammatone)?);
        }
        Ok(self.filterbank.as_ref().unwrap())
    }

    /// Time-frequency matrix of an already prepared clip, low frequency in row 0.
    pub fn time_frequency(&mut self, clip: &AudioClip) -> Result<Array2<f64>> {
        let spec = spectrogram(clip, &self.cfg.spectrogram)?;
        match self.cfg.representation {
            Representation::Spectrogram => Ok(spec.mags),
            Representation::Gammatonegram => {
                let fb = self.filterbank(clip.sample_rate_hz)?;
                Ok(gammatonegram(&spec, fb)?.energies)
            }
        }
    }

    /// Export-size render of the raw clip (after optional VAD).
    pub fn render(&mut self, clip: &AudioClip) -> Result<RgbImage> {
        let prepared = self.prepare(clip)?;
        let tf = self.time_frequency(&prepared)?;
        render_image(&tf, self.cfg.render_size, self.cfg.render_size, self.cfg.floor_db)
    }

    /// The export render resized to the training size.
    pub fn image(&mut self, clip: &AudioClip) -> Result<RgbImage> {
        let full = self.render(clip)?;
        if full.width == self.cfg.image_size && full.height == self.cfg.image_size {
            return Ok(full);
        }
        resize_rgb(&full, self.cfg.image_size, self.cfg.image_size)
    }

    pub fn input<T: Real>(&mut self, clip: &AudioClip) -> Result<Vec<T>> {
        Ok(image_to_input(&self.image(clip)?))
    }
}

/// Lazily computed network inputs for the records of one manifest.
pub struct FeatureCache<'m> {
    manifest: &'m CorpusManifest,
    extractor: FeatureExtractor,
    inputs: Vec<Option<Vec<f32>>>,
}

impl<'m> FeatureCache<'m> {
    pub fn new(manifest: &'m CorpusManifest, cfg: FeatureConfig) -> Result<Self> {
        Ok(Self {
            manifest,
            extractor: FeatureExtractor::new(cfg)?,
            inputs: vec![None; manifest.records.len()],
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        self.extractor.config()
    }

    pub fn get(&mut self, record: usize) -> Result<&[f32]> {
        if self.inputs[record].is_none() {
            let path = self.manifest.resolve(&self.manifest.records[record]);
            let clip = load_wav(&path)?;
            self.inputs[record] = Some(self.extractor.input(&clip)?);
        }
        Ok(self.inputs[record].as_deref().unwrap())
    }

    /// Inputs for several records, computed as needed.
    pub fn gather(&mut self, records: impl IntoIterator<Item = usize>) -> Result<Vec<Vec<f32>>> {
        records.into_iter().map(|i| self.get(i).map(<[f32]>::to_vec)).collect()
    }
}
