use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{CorpusManifest, Session};

/// One train/test rotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_sessions: Vec<Session>,
    pub test_sessions: Vec<Session>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Train on one session, test on the other two, for each session in turn.
pub fn make_folds(manifest: &CorpusManifest) -> Result<FoldPlan> {
    let present = manifest.sessions();
    if let Some(missing) = Session::ALL.iter().find(|s| !present.contains(s)) {
        return Err(Error::MissingSession(missing.to_string()));
    }
    let folds = Session::ALL
        .iter()
        .map(|&train| Fold {
            train_sessions: vec![train],
            test_sessions: Session::ALL.iter().copied().filter(|&s| s != train).collect(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Intelligibility class. Note that high *severity* means low intelligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityClass {
    HighSeverity,
    MidSeverity,
    LowSeverity,
    LowIntelligibility,
    HighIntelligibility,
}

impl SeverityClass {
    /// Classes in label-index order.
    pub fn classes(n_classes: usize) -> Result<&'static [SeverityClass]> {
        use SeverityClass::*;
        match n_classes {
            2 => Ok(&[LowIntelligibility, HighIntelligibility]),
            3 => Ok(&[HighSeverity, MidSeverity, LowSeverity]),
            n => Err(Error::InvalidParameter(format!("intelligibility uses 2 or 3 classes, not {n}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityClass::HighSeverity => "high_severity",
            SeverityClass::MidSeverity => "mid_severity",
            SeverityClass::LowSeverity => "low_severity",
            SeverityClass::LowIntelligibility => "low",
            SeverityClass::HighIntelligibility => "high",
        }
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SeverityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use SeverityClass::*;
        [HighSeverity, MidSeverity, LowSeverity, LowIntelligibility, HighIntelligibility]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown class {s:?} (expected low, high, high_severity, mid_severity or low_severity)"
                ))
            })
    }
}

/// 3 classes: <= 37 high severity, 38..=62 mid, >= 63 low.
/// 2 classes: <= 62 low intelligibility, >= 63 high.
pub fn label_intelligibility(pct: i64, n_classes: usize) -> Result<SeverityClass> {
    use SeverityClass::*;
    if !(0..=100).contains(&pct) {
        return Err(Error::InvalidParameter(format!("intelligibility {pct}% outside 0..=100")));
    }
    match n_classes {
        3 if pct <= 37 => Ok(HighSeverity),
        3 if pct <= 62 => Ok(MidSeverity),
        3 => Ok(LowSeverity),
        2 if pct <= 62 => Ok(LowIntelligibility),
        2 => Ok(HighIntelligibility),
        n => Err(Error::InvalidParameter(format!("intelligibility uses 2 or 3 classes, not {n}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{UtteranceRecord, WordGroup};

    fn manifest(sessions: &[Session]) -> CorpusManifest {
        let records = sessions
            .iter()
            .map(|&s| UtteranceRecord {
                path: format!("{s}.wav"),
                speaker_id: "F01".into(),
                word_label: "one".into(),
                session: s,
                word_group: WordGroup::Digit,
                intelligibility_pct: 50,
            })
            .collect();
        CorpusManifest::from_records(records, ".").unwrap()
    }

    #[test]
    fn three_rotations() {
        use Session::*;
        let plan = make_folds(&manifest(&[B1, B2, B3])).unwrap();
        assert_eq!(
            plan.folds,
            vec![
                Fold { train_sessions: vec![B1], test_sessions: vec![B2, B3] },
                Fold { train_sessions: vec![B2], test_sessions: vec![B1, B3] },
                Fold { train_sessions: vec![B3], test_sessions: vec![B1, B2] },
            ]
        );
    }

    #[test]
    fn missing_session_is_named() {
        let err = make_folds(&manifest(&[Session::B1, Session::B2])).unwrap_err();
        assert!(matches!(&err, Error::MissingSession(s) if s == "B3"));
        assert!(err.to_string().contains("B3"));
    }

    #[test]
    fn table_speakers() {
        use SeverityClass::*;
        assert_eq!(label_intelligibility(29, 3).unwrap(), HighSeverity);
        assert_eq!(label_intelligibility(95, 3).unwrap(), LowSeverity);
        assert_eq!(label_intelligibility(95, 2).unwrap(), HighIntelligibility);
    }

    #[test]
    fn boundaries() {
        use SeverityClass::*;
        assert_eq!(label_intelligibility(37, 3).unwrap(), HighSeverity);
        assert_eq!(label_intelligibility(38, 3).unwrap(), MidSeverity);
        assert_eq!(label_intelligibility(62, 3).unwrap(), MidSeverity);
        assert_eq!(label_intelligibility(62, 2).unwrap(), LowIntelligibility);
        assert_eq!(label_intelligibility(63, 3).unwrap(), LowSeverity);
        assert_eq!(label_intelligibility(63, 2).unwrap(), HighIntelligibility);
        assert!(label_intelligibility(101, 2).is_err());
        assert!(label_intelligibility(-1, 3).is_err());
        assert!(label_intelligibility(50, 4).is_err());
    }

    #[test]
    fn labeling_is_total_and_monotone() {
        for n in [2, 3] {
            let classes = SeverityClass::classes(n).unwrap();
            let mut prev = 0;
            for pct in 0..=100 {
                let c = label_intelligibility(pct, n).unwrap();
                let idx = classes.iter().position(|&k| k == c).unwrap();
                assert!(idx >= prev);
                prev = idx;
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for n in [2, 3] {
            for &c in SeverityClass::classes(n).unwrap() {
                assert_eq!(c.name().parse::<SeverityClass>().unwrap(), c);
            }
        }
    }
}
