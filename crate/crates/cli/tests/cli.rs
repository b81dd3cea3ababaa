use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data");

fn gammasr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gammasr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn render_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let wav = format!("{DATA}/sample.wav");
    let o = gammasr(dir.path(), &["render", "--in", &wav, "--out", "a.ppm"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(dir.path().join("a.ppm")).unwrap();
    assert_eq!(bytes.len(), 154_602);
    let hash: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let golden = std::fs::read_to_string(format!("{DATA}/golden.sha256")).unwrap();
    assert!(golden.lines().any(|l| l == format!("{hash}  sample_227.ppm")));
}

#[test]
fn vad_prints_one_bit_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let o = gammasr(dir.path(), &["vad", "--in", &format!("{DATA}/sample.wav")]);
    assert_eq!(code(&o), 0);
    let line = String::from_utf8(o.stdout).unwrap();
    let bits = line.trim_end();
    assert!(!bits.is_empty() && bits.chars().all(|c| c == '0' || c == '1'));
    assert!(bits.contains('1'));
}

#[test]
fn extract_writes_a_64_row_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let o = gammasr(dir.path(), &["extract", "--in", &format!("{DATA}/sample.wav"), "--out", "g.tsv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("g.tsv")).unwrap();
    let rows: Vec<usize> = text.lines().map(|l| l.split('\t').count()).collect();
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().all(|&n| n == rows[0]));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gammasr(dir.path(), &["gradcheck"]);
    assert_eq!(code(&o), 0);
    let v: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!(v < 1e-4);
}

#[test]
fn user_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["render", "--in", "missing.wav", "--out", "x.ppm"],
        &["eval", "--ckpt", "missing.ckpt", "--manifest", "missing.jsonl"],
        &["train", "--manifest", "m.jsonl", "--task", "nope", "--mode", "SD", "--seed", "1", "--out", "x"],
        &["render", "--in"],
        &["no-such-command"],
    ];
    for args in cases {
        let o = gammasr(dir.path(), args);
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(code(&gammasr(dir.path(), &["--help"])), 0);

    let o = gammasr(dir.path(), &["train", "--manifest", "m.jsonl", "--task", "asr", "--mode", "XX", "--seed", "1", "--out", "x"]);
    assert_eq!(code(&o), 1);
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(["SD", "SI", "TD", "TI", "2c", "3c"].iter().all(|m| msg.contains(m)), "{msg}");

    let o = gammasr(dir.path(), &["render", "--out", "x.ppm"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--in"));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = ["synth", "--out", "c", "--words", "2", "--cw-words", "0", "--speakers", "2", "--reps", "2", "--seed", "5"];
    assert_eq!(code(&gammasr(d, &synth)), 0);
    let train = [
        "train", "--manifest", "c/manifest.jsonl", "--task", "asr", "--mode", "SD", "--size", "16", "--epochs", "2",
        "--seed", "1", "--fold", "2", "--out", "m.ckpt",
    ];
    let o = gammasr(d, &train);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = String::from_utf8(o.stdout).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch ")).count(), 2);

    let o = gammasr(d, &["eval", "--ckpt", "m.ckpt", "--manifest", "c/manifest.jsonl", "--json"]);
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mean = lines.iter().find(|v| v["speaker"] == "Mean").expect("mean row");
    // fold 2 tests on B1 and B3: 2 speakers x 2 words x 2 reps x 2 sessions
    assert_eq!(mean["n_test"], 16);

    // SI needs a held-out speaker
    let mut si = train.to_vec();
    si[6] = "SI";
    assert_eq!(code(&gammasr(d, &si)), 1);
}
