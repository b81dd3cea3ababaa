//! Synthetic isolated-word corpus with a controllable dysarthria-like
//! severity per speaker.
//!
//! A word is a fixed sequence of 2-4 segments, each the sum of two sinusoidal
//! "formants" that glide linearly between a start and an end frequency, over
//! a three-harmonic glottal source. A speaker has its own F0, scales all
//! formant frequencies and applies a first-order spectral tilt.
//!
//! Severity `s` in [0, 1]:
//! - inserts pauses inside the word, with probability proportional to `s`
//! - jitters segment durations by up to ±40%·s and formants by up to ±10%·s
//! - adds a fixed per-speaker misarticulation of every word (up to ±35%·s)
//! - adds 5 Hz F0 tremor and aspiration noise
//!
//! Intelligibility is `round(100(1-s))`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{write_wav, AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::manifest::{CorpusManifest, Session, UtteranceRecord, WordGroup};
use crate::rng::{self, uniform};

const DIGITS: [&str; 10] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "zero",
];
const COMMANDS: [&str; 10] = [
    "up", "down", "left", "right", "stop", "go", "yes", "no", "back", "next",
];
const ALPHABET: [&str; 10] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
];

/// Upper bound on the non-`cw` vocabulary.
pub const MAX_WORDS: usize = 30;

// Stream tags for rng::child.
const WORD_STREAM: u64 = 1 << 40;
const SPEAKER_STREAM: u64 = 2 << 40;
const SESSION_STREAM: u64 = 3 << 40;
const FILE_STREAM: u64 = 4 << 40;
const HABIT_STREAM: u64 = 5 << 40;

/// Pause probability per candidate position is `PAUSE_RATE * s`.
pub const PAUSE_RATE: f64 = 0.6;
pub const DURATION_JITTER: f64 = 0.4;
pub const FREQUENCY_JITTER: f64 = 0.1;
/// Largest relative shift of a speaker's habitual formant and duration
/// errors, reached at severity 1.
pub const MISARTICULATION: f64 = 0.35;
/// Relative depth of the 5 Hz vocal tremor at severity 1.
pub const TREMOR_DEPTH: f64 = 0.15;
pub const TREMOR_HZ: f64 = 5.0;
/// Amplitude of aspiration noise in voiced segments at severity 1.
pub const BREATHINESS: f64 = 0.8;
/// Weight of the glottal source relative to the first formant.
pub const VOICING_GAIN: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Vocabulary size for digits, commands and alphabet words.
    pub words: usize,
    /// Extra held-out `cw` words, used only as unseen text for speaker ID.
    pub cw_words: usize,
    pub speakers: usize,
    /// Repetitions of every word per session.
    pub reps: usize,
    /// Per-speaker severity; defaults to an even spread over [0, 0.9].
    pub severities: Option<Vec<f64>>,
    pub snr_db: f64,
    pub sample_rate_hz: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            words: 10,
            cw_words: 5,
            speakers: 8,
            reps: 3,
            severities: None,
            snr_db: 30.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.words == 0 || self.speakers == 0 || self.reps == 0 {
            return Err(Error::InvalidParameter(
                "word, speaker and repetition counts must be positive".into(),
            ));
        }
        if self.words > MAX_WORDS {
            return Err(Error::InvalidParameter(format!(
                "at most {MAX_WORDS} words are available, asked for {}",
                self.words
            )));
        }
        if let Some(sev) = &self.severities {
            if sev.len() != self.speakers {
                return Err(Error::InvalidParameter(format!(
                    "{} severities given for {} speakers",
                    sev.len(),
                    self.speakers
                )));
            }
            if sev.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::InvalidParameter("severity outside [0, 1]".into()));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter("SNR must be finite".into()));
        }
        Ok(())
    }

    pub fn speaker_severities(&self) -> Vec<f64> {
        match &self.severities {
            Some(s) => s.clone(),
            None if self.speakers == 1 => vec![0.0],
            None => (0..self.speakers)
                .map(|i| 0.9 * i as f64 / (self.speakers - 1) as f64)
                .collect(),
        }
    }
}

pub fn intelligibility_from_severity(severity: f64) -> u8 {
    (100.0 * (1.0 - severity)).round().clamp(0.0, 100.0) as u8
}

pub fn speaker_id(index: usize) -> String {
    let sex = if index % 2 == 0 { 'F' } else { 'M' };
    format!("{sex}{:02}", index / 2 + 1)
}

pub fn vocabulary(words: usize, cw_words: usize) -> Vec<(String, WordGroup)> {
    let mut out: Vec<(String, WordGroup)> = (0..words)
        .map(|i| match i % 3 {
            0 => (DIGITS[i / 3].to_string(), WordGroup::Digit),
            1 => (COMMANDS[i / 3].to_string(), WordGroup::Command),
            _ => (ALPHABET[i / 3].to_string(), WordGroup::Alphabet),
        })
        .collect();
    out.extend((1..=cw_words).map(|i| (format!("cw{i}"), WordGroup::Cw)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration_s: f64,
    pub f1: (f64, f64),
    pub f2: (f64, f64),
    pub f2_gain: f64,
}

/// Canonical (severity-free, speaker-free) realization of one word class.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTemplate {
    pub segments: Vec<Segment>,
}

impl WordTemplate {
    pub fn generate(seed: u64, word_index: usize) -> Self {
        let mut rng = rng::child(seed, WORD_STREAM + word_index as u64);
        let n = 2 + rng::below(&mut rng, 3);
        let segments = (0..n)
            .map(|_| Segment {
                duration_s: uniform(&mut rng, 0.07, 0.15),
                f1: (uniform(&mut rng, 250.0, 900.0), uniform(&mut rng, 250.0, 900.0)),
                f2: (uniform(&mut rng, 900.0, 2600.0), uniform(&mut rng, 900.0, 2600.0)),
                f2_gain: uniform(&mut rng, 0.3, 0.8),
            })
            .collect();
        Self { segments }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerProfile {
    /// Fundamental frequency of the glottal source.
    pub f0_hz: f64,
    pub formant_scale: f64,
    /// First-order tilt coefficient: `y[n] = x[n] + tilt * x[n-1]`.
    pub tilt: f64,
    pub severity: f64,
}

impl SpeakerProfile {
    pub fn generate(seed: u64, speaker_index: usize, severity: f64) -> Self {
        let mut rng = rng::child(seed, SPEAKER_STREAM + speaker_index as u64);
        // even indices are the F speakers
        let (lo, hi) = if speaker_index % 2 == 0 { (170.0, 250.0) } else { (95.0, 145.0) };
        Self {
            f0_hz: uniform(&mut rng, lo, hi),
            formant_scale: uniform(&mut rng, 0.85, 1.2),
            tilt: uniform(&mut rng, -0.6, 0.6),
            severity,
        }
    }
}

/// The speaker's own, repeatable rendering of a word: every segment's formant
/// targets and duration are shifted by up to `MISARTICULATION * severity`.
/// The same speaker says the word the same wrong way in every session.
pub fn habitual_template(seed: u64, word: &WordTemplate, speaker_index: usize, word_index: usize, severity: f64) -> WordTemplate {
    let mut rng = rng::child(seed, HABIT_STREAM + ((speaker_index as u64) << 16) + word_index as u64);
    let amount = MISARTICULATION * severity;
    let segments = word
        .segments
        .iter()
        .map(|seg| {
            let mut shift = |v: f64| v * (1.0 + amount * uniform(&mut rng, -1.0, 1.0));
            Segment {
                duration_s: shift(seg.duration_s),
                f1: (shift(seg.f1.0), shift(seg.f1.1)),
                f2: (shift(seg.f2.0), shift(seg.f2.1)),
                f2_gain: seg.f2_gain,
            }
        })
        .collect();
    WordTemplate { segments }
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub clip: AudioClip,
    pub inserted_pauses: usize,
}

enum Piece {
    Voiced(Segment),
    Pause(f64),
}

/// Renders one utterance. `session_scale` models day-to-day drift of the
/// speaker's formants.
pub fn render_utterance(
    word: &WordTemplate,
    speaker: &SpeakerProfile,
    session_scale: f64,
    snr_db: f64,
    sample_rate_hz: u32,
    rng: &mut impl RngCore,
) -> SynthUtterance {
    let s = speaker.severity;
    let p_pause = PAUSE_RATE * s;
    let scale = speaker.formant_scale * session_scale;

    let mut pieces = Vec::new();
    let mut inserted = 0;
    for (i, seg) in word.segments.iter().enumerate() {
        if i > 0 && p_pause > 0.0 && rng::open01(rng) < p_pause {
            pieces.push(Piece::Pause(uniform(rng, 0.05, 0.12)));
            inserted += 1;
        }
        let mut jitter = |f: f64, amount: f64| f * (1.0 + amount * s * uniform(rng, -1.0, 1.0));
        let dur = jitter(seg.duration_s, DURATION_JITTER);
        let f1 = (jitter(seg.f1.0, FREQUENCY_JITTER) * scale, jitter(seg.f1.1, FREQUENCY_JITTER) * scale);
        let f2 = (jitter(seg.f2.0, FREQUENCY_JITTER) * scale, jitter(seg.f2.1, FREQUENCY_JITTER) * scale);
        let voiced = Segment {
            duration_s: dur,
            f1,
            f2,
            f2_gain: seg.f2_gain,
        };
        if p_pause > 0.0 && rng::open01(rng) < p_pause {
            // break the segment in the middle of its glide
            let mid = |(a, b): (f64, f64)| (a + b) / 2.0;
            let first = Segment {
                duration_s: dur / 2.0,
                f1: (f1.0, mid(f1)),
                f2: (f2.0, mid(f2)),
                f2_gain: seg.f2_gain,
            };
            let second = Segment {
                duration_s: dur / 2.0,
                f1: (mid(f1), f1.1),
                f2: (mid(f2), f2.1),
                f2_gain: seg.f2_gain,
            };
            pieces.push(Piece::Voiced(first));
            pieces.push(Piece::Pause(uniform(rng, 0.05, 0.12)));
            pieces.push(Piece::Voiced(second));
            inserted += 1;
        } else {
            pieces.push(Piece::Voiced(voiced));
        }
    }

    let sr = sample_rate_hz as f64;
    let lead = (uniform(rng, 0.12, 0.22) * sr) as usize;
    let trail = (uniform(rng, 0.12, 0.22) * sr) as usize;
    let ramp = (0.005 * sr) as usize;

    let mut x = vec![0.0; lead];
    let mut voiced_mask = vec![false; lead];
    let (mut ph0, mut ph1, mut ph2) = (0.0f64, 0.0f64, 0.0f64);
    let breath = BREATHINESS * s;
    for piece in &pieces {
        match piece {
            Piece::Pause(d) => {
                let n = (d * sr) as usize;
                x.extend(std::iter::repeat_n(0.0, n));
                voiced_mask.extend(std::iter::repeat_n(false, n));
            }
            Piece::Voiced(seg) => {
                let n = ((seg.duration_s * sr) as usize).max(2 * ramp + 1);
                for i in 0..n {
                    let t = i as f64 / (n - 1) as f64;
                    let f1 = seg.f1.0 + (seg.f1.1 - seg.f1.0) * t;
                    let f2 = seg.f2.0 + (seg.f2.1 - seg.f2.0) * t;
                    let time = x.len() as f64 / sr;
                    let f0 = speaker.f0_hz * session_scale * (1.0 + TREMOR_DEPTH * s * (2.0 * PI * TREMOR_HZ * time).sin());
                    ph0 += 2.0 * PI * f0 / sr;
                    ph1 += 2.0 * PI * f1 / sr;
                    ph2 += 2.0 * PI * f2 / sr;
                    let edge = i.min(n - 1 - i);
                    let env = if edge < ramp {
                        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
                    } else {
                        1.0
                    };
                    let glottal = ph0.sin() + 0.5 * (2.0 * ph0).sin() + 0.25 * (3.0 * ph0).sin();
                    let aspiration = if breath > 0.0 { breath * uniform(rng, -1.0, 1.0) } else { 0.0 };
                    x.push(env * (VOICING_GAIN * glottal + ph1.sin() + seg.f2_gain * ph2.sin() + aspiration));
                    voiced_mask.push(true);
                }
            }
        }
    }
    x.extend(std::iter::repeat_n(0.0, trail));
    voiced_mask.extend(std::iter::repeat_n(false, trail));

    // spectral tilt
    let mut prev = 0.0;
    for v in x.iter_mut() {
        let cur = *v;
        *v = cur + speaker.tilt * prev;
        prev = cur;
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in x.iter_mut() {
            *v *= 0.5 / peak;
        }
    }

    let (power, count) = x
        .iter()
        .zip(&voiced_mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(p, c), (v, _)| (p + v * v, c + 1));
    let power = if count > 0 { power / count as f64 } else { 0.0 };
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    for v in x.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = (*v + sigma * z).clamp(-1.0, 1.0);
    }

    SynthUtterance {
        clip: AudioClip::new(x, sample_rate_hz),
        inserted_pauses: inserted,
    }
}

fn session_scale(seed: u64, speaker_index: usize, session: Session) -> f64 {
    let mut rng = rng::child(
        seed,
        SESSION_STREAM + (speaker_index as u64) * 4 + session.index() as u64,
    );
    1.0 + 0.03 * uniform(&mut rng, -1.0, 1.0)
}

pub fn utterance_file_name(speaker: &str, session: Session, word: &str, rep: usize) -> String {
    format!("{speaker}_{session}_{word}_r{}.wav", rep + 1)
}

/// A planned file: its manifest record plus what is needed to render it.
#[derive(Debug, Clone)]
pub struct PlannedUtterance {
    pub record: UtteranceRecord,
    pub file_index: u64,
    pub word_index: usize,
    pub speaker_index: usize,
}

pub fn plan_corpus(config: &SynthConfig) -> Result<Vec<PlannedUtterance>> {
    config.validate()?;
    let vocab = vocabulary(config.words, config.cw_words);
    let severities = config.speaker_severities();
    let mut plan = Vec::new();
    let mut file_index = 0u64;
    for (si, &sev) in severities.iter().enumerate() {
        let spk = speaker_id(si);
        for session in Session::ALL {
            for (wi, (word, group)) in vocab.iter().enumerate() {
                for rep in 0..config.reps {
                    plan.push(PlannedUtterance {
                        record: UtteranceRecord {
                            path: utterance_file_name(&spk, session, word, rep),
                            speaker_id: spk.clone(),
                            word_label: word.clone(),
                            session,
                            word_group: *group,
                            intelligibility_pct: intelligibility_from_severity(sev),
                        },
                        file_index,
                        word_index: wi,
                        speaker_index: si,
                    });
                    file_index += 1;
                }
            }
        }
    }
    Ok(plan)
}

/// Renders a planned utterance. Each file has its own RNG stream keyed by
/// `(seed, file_index)`, so any subset can be generated in any order.
pub fn render_planned(config: &SynthConfig, seed: u64, item: &PlannedUtterance) -> SynthUtterance {
    let severities = config.speaker_severities();
    let severity = severities[item.speaker_index];
    let canonical = WordTemplate::generate(seed, item.word_index);
    let word = habitual_template(seed, &canonical, item.speaker_index, item.word_index, severity);
    let speaker = SpeakerProfile::generate(seed, item.speaker_index, severity);
    let scale = session_scale(seed, item.speaker_index, item.record.session);
    let mut rng = rng::child(seed, FILE_STREAM + item.file_index);
    render_utterance(&word, &speaker, scale, config.snr_db, config.sample_rate_hz, &mut rng)
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Writes every WAV file plus `manifest.jsonl` into `out_dir`.
pub fn synth_corpus(config: &SynthConfig, seed: u64, out_dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    let plan = plan_corpus(config)?;
    std::fs::create_dir_all(out_dir)?;
    let probe = out_dir.join(".write_probe");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;

    for item in &plan {
        let utt = render_planned(config, seed, item);
        write_wav(&utt.clip, out_dir.join(&item.record.path))?;
    }
    let manifest = CorpusManifest::from_records(
        plan.into_iter().map(|p| p.record).collect(),
        PathBuf::from(out_dir),
    )?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_counts_are_rejected() {
        for cfg in [
            SynthConfig { words: 0, ..Default::default() },
            SynthConfig { speakers: 0, ..Default::default() },
            SynthConfig { reps: 0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn default_severity_spread() {
        let s = SynthConfig::default().speaker_severities();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], 0.0);
        assert!((s[7] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn intelligibility_is_linear_in_severity() {
        assert_eq!(intelligibility_from_severity(0.0), 100);
        assert_eq!(intelligibility_from_severity(0.05), 95);
        assert_eq!(intelligibility_from_severity(0.71), 29);
        assert_eq!(intelligibility_from_severity(1.0), 0);
    }

    #[test]
    fn clean_speaker_has_no_pauses_or_jitter() {
        let word = WordTemplate::generate(7, 0);
        let speaker = SpeakerProfile { f0_hz: 120.0, formant_scale: 1.0, tilt: 0.0, severity: 0.0 };
        for i in 0..20 {
            let mut rng = rng::seeded(i);
            let u = render_utterance(&word, &speaker, 1.0, 200.0, 16_000, &mut rng);
            assert_eq!(u.inserted_pauses, 0);
        }
        // zero jitter: the voiced part has the canonical length regardless of the stream
        let voiced_len = |seed: u64| {
            let mut rng = rng::seeded(seed);
            let u = render_utterance(&word, &speaker, 1.0, 300.0, 16_000, &mut rng);
            u.clip.samples.iter().filter(|v| v.abs() > 1e-6).count()
        };
        let expected: usize = word
            .segments
            .iter()
            .map(|s| ((s.duration_s * 16_000.0) as usize).max(161))
            .sum();
        let a = voiced_len(1);
        let b = voiced_len(2);
        assert!(a.abs_diff(expected) <= 2 * word.segments.len(), "{a} vs {expected}");
        assert!(b.abs_diff(expected) <= 2 * word.segments.len(), "{b} vs {expected}");
    }

    #[test]
    fn habits_scale_with_severity() {
        let w = WordTemplate::generate(3, 1);
        assert_eq!(habitual_template(3, &w, 0, 1, 0.0), w);
        let h = habitual_template(3, &w, 2, 1, 0.8);
        assert_eq!(h, habitual_template(3, &w, 2, 1, 0.8));
        assert_ne!(h, w);
        for (a, b) in h.segments.iter().zip(&w.segments) {
            let r = a.f1.0 / b.f1.0;
            assert!((1.0 - MISARTICULATION * 0.8..=1.0 + MISARTICULATION * 0.8).contains(&r));
        }
    }

    #[test]
    fn severe_speakers_pause_more() {
        let mean_pauses = |severity: f64| {
            let speaker = SpeakerProfile { f0_hz: 120.0, formant_scale: 1.0, tilt: 0.0, severity };
            let total: usize = (0..100)
                .map(|i| {
                    let word = WordTemplate::generate(11, i % 10);
                    let mut rng = rng::child(99, i as u64);
                    render_utterance(&word, &speaker, 1.0, 30.0, 16_000, &mut rng).inserted_pauses
                })
                .sum();
            total as f64 / 100.0
        };
        let mild = mean_pauses(0.1);
        let severe = mean_pauses(0.9);
        assert!(severe > mild, "severe {severe} vs mild {mild}");
    }

    #[test]
    fn samples_stay_in_range() {
        let word = WordTemplate::generate(3, 2);
        let speaker = SpeakerProfile::generate(3, 1, 0.5);
        let mut rng = rng::seeded(5);
        let u = render_utterance(&word, &speaker, 1.0, 0.0, 16_000, &mut rng);
        assert!(u.clip.samples.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }

    #[test]
    fn plan_covers_every_speaker_word_session() {
        let cfg = SynthConfig { words: 4, cw_words: 2, speakers: 3, reps: 2, ..Default::default() };
        let plan = plan_corpus(&cfg).unwrap();
        assert_eq!(plan.len(), 3 * 3 * 6 * 2);
        let mut triples = std::collections::BTreeSet::new();
        for p in &plan {
            triples.insert((p.record.speaker_id.clone(), p.record.word_label.clone(), p.record.session));
        }
        assert_eq!(triples.len(), 3 * 6 * 3);
        let cw = plan.iter().filter(|p| p.record.word_group == WordGroup::Cw).count();
        assert_eq!(cw, 3 * 3 * 2 * 2);
    }
}
