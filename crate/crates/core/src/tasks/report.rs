use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpeakerScore {
    pub correct: usize,
    pub total: usize,
}

impl SpeakerScore {
    pub fn accuracy_pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

/// Per-speaker accuracy, their unweighted mean and a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Class names in label-index order.
    pub labels: Vec<String>,
    pub per_speaker: BTreeMap<String, SpeakerScore>,
    /// Unweighted mean of per-speaker accuracies, in percent.
    pub mean: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
    /// Share of utterances routed to their true class, for cascades.
    pub gate_accuracy: Option<f64>,
}

/// One scored utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision<'a> {
    pub speaker: &'a str,
    pub truth: usize,
    pub predicted: usize,
}

impl EvalReport {
    pub fn from_decisions<'a>(labels: &[String], decisions: impl IntoIterator<Item = Decision<'a>>) -> Result<Self> {
        let c = labels.len();
        let mut confusion = vec![vec![0; c]; c];
        let mut per_speaker: BTreeMap<String, SpeakerScore> = BTreeMap::new();
        let mut n = 0;
        for d in decisions {
            if d.truth >= c || d.predicted >= c {
                return Err(Error::InvalidParameter(format!(
                    "class index out of range for {c} labels ({} / {})",
                    d.truth, d.predicted
                )));
            }
            confusion[d.truth][d.predicted] += 1;
            let s = per_speaker.entry(d.speaker.to_string()).or_default();
            s.total += 1;
            s.correct += usize::from(d.truth == d.predicted);
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptySplit("no test utterances to evaluate".into()));
        }
        let mut report = Self {
            labels: labels.to_vec(),
            per_speaker,
            mean: 0.0,
            confusion,
            n_test: n,
            gate_accuracy: None,
        };
        report.mean = report.speaker_mean();
        Ok(report)
    }

    fn speaker_mean(&self) -> f64 {
        self.per_speaker.values().map(SpeakerScore::accuracy_pct).sum::<f64>() / self.per_speaker.len() as f64
    }

    /// Pools counts across folds. Label lists must agree.
    pub fn merge(reports: &[EvalReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::EmptySplit("no reports to merge".into()))?;
        let mut out = first.clone();
        let mut gate = first.gate_accuracy.map(|g| g * first.n_test as f64);
        for r in &reports[1..] {
            if r.labels != out.labels {
                return Err(Error::DimensionMismatch("reports use different label lists".into()));
            }
            for (spk, s) in &r.per_speaker {
                let e = out.per_speaker.entry(spk.clone()).or_default();
                e.correct += s.correct;
                e.total += s.total;
            }
            for (row, other) in out.confusion.iter_mut().zip(&r.confusion) {
                for (a, b) in row.iter_mut().zip(other) {
                    *a += b;
                }
            }
            gate = match (gate, r.gate_accuracy) {
                (Some(g), Some(x)) => Some(g + x * r.n_test as f64),
                _ => None,
            };
            out.n_test += r.n_test;
        }
        out.mean = out.speaker_mean();
        out.gate_accuracy = gate.map(|g| g / out.n_test as f64);
        Ok(out)
    }

    /// Correct decisions over all utterances, in percent.
    pub fn overall_pct(&self) -> f64 {
        let correct: usize = (0..self.labels.len()).map(|i| self.confusion[i][i]).sum();
        100.0 * correct as f64 / self.n_test as f64
    }

    /// Tab-separated `speaker  accuracy` rows, then a `Mean` row and, for
    /// cascades, a `Gate` row. Accuracies are percentages with 2 decimals.
    pub fn to_table(&self) -> String {
        let mut out = String::from("speaker\taccuracy\n");
        for (spk, s) in &self.per_speaker {
            let _ = writeln!(out, "{spk}\t{:.2}", s.accuracy_pct());
        }
        let _ = writeln!(out, "Mean\t{:.2}", self.mean);
        if let Some(g) = self.gate_accuracy {
            let _ = writeln!(out, "Gate\t{:.2}", 100.0 * g);
        }
        out
    }

    /// JSON lines: one `{"speaker","correct","total","accuracy"}` object per
    /// speaker, then `{"speaker":"Mean","accuracy","n_test"}` and, when
    /// present, `{"speaker":"Gate","accuracy"}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (spk, s) in &self.per_speaker {
            let row = serde_json::json!({
                "speaker": spk,
                "correct": s.correct,
                "total": s.total,
                "accuracy": s.accuracy_pct(),
            });
            let _ = writeln!(out, "{row}");
        }
        let mean = serde_json::json!({"speaker": "Mean", "accuracy": self.mean, "n_test": self.n_test});
        let _ = writeln!(out, "{mean}");
        if let Some(g) = self.gate_accuracy {
            let _ = writeln!(out, "{}", serde_json::json!({"speaker": "Gate", "accuracy": 100.0 * g}));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn d(speaker: &str, truth: usize, predicted: usize) -> Decision<'_> {
        Decision { speaker, truth, predicted }
    }

    #[test]
    fn three_of_four() {
        let r = EvalReport::from_decisions(&labels(), [d("F01", 0, 0), d("F01", 1, 1), d("F01", 0, 0), d("F01", 1, 0)])
            .unwrap();
        assert_eq!(r.per_speaker["F01"].accuracy_pct(), 75.0);
        assert_eq!(r.mean, 75.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![1, 1]]);
    }

    #[test]
    fn mean_is_unweighted() {
        let r = EvalReport::from_decisions(&labels(), [d("A", 0, 0), d("B", 0, 1), d("B", 0, 1), d("B", 0, 0)]).unwrap();
        assert!((r.mean - (100.0 + 100.0 / 3.0) / 2.0).abs() < 1e-9);
        let row_sums: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(row_sums, vec![4, 0]);
    }

    #[test]
    fn merge_pools_counts() {
        let a = EvalReport::from_decisions(&labels(), [d("A", 0, 0), d("B", 1, 0)]).unwrap();
        let b = EvalReport::from_decisions(&labels(), [d("A", 1, 1), d("B", 1, 1)]).unwrap();
        let m = EvalReport::merge(&[a, b]).unwrap();
        assert_eq!(m.per_speaker["A"], SpeakerScore { correct: 2, total: 2 });
        assert_eq!(m.per_speaker["B"], SpeakerScore { correct: 1, total: 2 });
        assert_eq!(m.mean, 75.0);
        assert_eq!(m.n_test, 4);
    }

    #[test]
    fn table_and_json_layout() {
        let mut r = EvalReport::from_decisions(&labels(), [d("F01", 0, 0), d("M01", 0, 1)]).unwrap();
        assert_eq!(r.to_table(), "speaker\taccuracy\nF01\t100.00\nM01\t0.00\nMean\t50.00\n");
        r.gate_accuracy = Some(0.5);
        let lines: Vec<serde_json::Value> = r.to_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2]["speaker"], "Mean");
        assert_eq!(lines[3]["accuracy"], 50.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(EvalReport::from_decisions(&labels(), []).is_err());
    }
}
