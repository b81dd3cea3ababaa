//! Corpus manifests: one JSON object per line, one line per utterance.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Session {
    B1,
    B2,
    B3,
}

impl Session {
    pub const ALL: [Session; 3] = [Session::B1, Session::B2, Session::B3];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Session::B1 => "B1",
            Session::B2 => "B2",
            Session::B3 => "B3",
        };
        f.write_str(s)
    }
}

impl FromStr for Session {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "B1" => Ok(Session::B1),
            "B2" => Ok(Session::B2),
            "B3" => Ok(Session::B3),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordGroup {
    Digit,
    Command,
    Alphabet,
    /// Held-out vocabulary, never used for ASR or text-dependent training.
    Cw,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub path: String,
    pub speaker_id: String,
    pub word_label: String,
    pub session: Session,
    pub word_group: WordGroup,
    pub intelligibility_pct: u8,
}

/// Wire form; validated field by field so each violation gets its own error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    path: String,
    speaker_id: String,
    word_label: String,
    session: String,
    word_group: WordGroup,
    intelligibility_pct: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    /// Sorted distinct word labels.
    pub words: Vec<String>,
    /// Sorted distinct speaker ids.
    pub speakers: Vec<String>,
    /// Directory that relative record paths are resolved against.
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn from_records(records: Vec<UtteranceRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut intel: BTreeMap<&str, u8> = BTreeMap::new();
        for r in &records {
            if let Some(&prev) = intel.get(r.speaker_id.as_str()) {
                if prev != r.intelligibility_pct {
                    return Err(Error::InconsistentIntelligibility {
                        speaker: r.speaker_id.clone(),
                        first: prev,
                        second: r.intelligibility_pct,
                    });
                }
            } else {
                intel.insert(&r.speaker_id, r.intelligibility_pct);
            }
        }
        let words: BTreeSet<String> = records.iter().map(|r| r.word_label.clone()).collect();
        let speakers: BTreeSet<String> = records.iter().map(|r| r.speaker_id.clone()).collect();
        Ok(Self {
            records,
            words: words.into_iter().collect(),
            speakers: speakers.into_iter().collect(),
            base_dir: base_dir.into(),
        })
    }

    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn intelligibility_of(&self, speaker: &str) -> Option<u8> {
        self.records
            .iter()
            .find(|r| r.speaker_id == speaker)
            .map(|r| r.intelligibility_pct)
    }

    pub fn sessions(&self) -> BTreeSet<Session> {
        self.records.iter().map(|r| r.session).collect()
    }

    /// Serializes records in order, one JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }
}

pub fn parse_manifest(text: &str, origin: &Path, base_dir: impl Into<PathBuf>) -> Result<CorpusManifest> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::ManifestSyntax {
            path: origin.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        let session = raw.session.parse::<Session>().map_err(|token| Error::UnknownSession {
            path: origin.to_path_buf(),
            line: line_no,
            token,
        })?;
        if !(0..=100).contains(&raw.intelligibility_pct) {
            return Err(Error::IntelligibilityRange {
                path: origin.to_path_buf(),
                line: line_no,
                value: raw.intelligibility_pct,
            });
        }
        if !seen.insert(raw.path.clone()) {
            return Err(Error::DuplicatePath {
                path: origin.to_path_buf(),
                line: line_no,
                entry: raw.path,
            });
        }
        records.push(UtteranceRecord {
            path: raw.path,
            speaker_id: raw.speaker_id,
            word_label: raw.word_label,
            session,
            word_group: raw.word_group,
            intelligibility_pct: raw.intelligibility_pct as u8,
        });
    }
    CorpusManifest::from_records(records, base_dir)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, path, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CorpusManifest> {
        parse_manifest(text, Path::new("m.jsonl"), "")
    }

    #[test]
    fn single_line_parses() {
        let m = parse(
            r#"{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B1","word_group":"digit","intelligibility_pct":95}"#,
        )
        .unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].intelligibility_pct, 95);
        assert_eq!(m.records[0].session, Session::B1);
        assert_eq!(m.records[0].word_group, WordGroup::Digit);
        assert_eq!(m.speakers, vec!["F05"]);
    }

    #[test]
    fn empty_manifest() {
        let m = parse("").unwrap();
        assert!(m.records.is_empty());
        assert!(m.speakers.is_empty());
    }

    #[test]
    fn unknown_session() {
        let err = parse(
            r#"{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B4","word_group":"digit","intelligibility_pct":95}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownSession { ref token, line: 1, .. } if token == "B4"));
    }

    #[test]
    fn intelligibility_out_of_range() {
        for bad in ["101", "-1"] {
            let line = format!(
                r#"{{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B1","word_group":"digit","intelligibility_pct":{bad}}}"#
            );
            assert!(matches!(parse(&line), Err(Error::IntelligibilityRange { .. })));
        }
    }

    #[test]
    fn duplicate_paths() {
        let line = r#"{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B1","word_group":"digit","intelligibility_pct":95}"#;
        let err = parse(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(err, Error::DuplicatePath { line: 2, .. }));
    }

    #[test]
    fn extra_fields_are_rejected() {
        let line = r#"{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B1","word_group":"digit","intelligibility_pct":95,"mic":3}"#;
        assert!(matches!(parse(line), Err(Error::ManifestSyntax { .. })));
    }

    #[test]
    fn speaker_intelligibility_must_agree() {
        let a = r#"{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B1","word_group":"digit","intelligibility_pct":95}"#;
        let b = r#"{"path":"b.wav","speaker_id":"F05","word_label":"two","session":"B1","word_group":"digit","intelligibility_pct":90}"#;
        assert!(matches!(
            parse(&format!("{a}\n{b}")),
            Err(Error::InconsistentIntelligibility { .. })
        ));
    }

    #[test]
    fn serialization_uses_the_six_field_names() {
        let m = parse(
            r#"{"path":"a.wav","speaker_id":"F05","word_label":"one","session":"B1","word_group":"cw","intelligibility_pct":95}"#,
        )
        .unwrap();
        assert_eq!(
            m.to_jsonl().unwrap(),
            "{\"path\":\"a.wav\",\"speaker_id\":\"F05\",\"word_label\":\"one\",\"session\":\"B1\",\"word_group\":\"cw\",\"intelligibility_pct\":95}\n"
        );
    }
}
