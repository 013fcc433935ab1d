use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use tqcodec::dsp::{load_wav, save_wav, AudioBuffer, BitDepth};
use tqcodec::fixtures;

fn tqcodec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tqcodec")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--json-output", "--quiet"]);
    let out = tqcodec(&all);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn code(args: &[&str]) -> i32 {
    tqcodec(args).status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, buf: &AudioBuffer) -> String {
    let p = dir.join(name);
    save_wav(buf, &p, BitDepth::Float32).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn encode_decode_round_trip_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.wav", &fixtures::stereo_music(0.3, 44_100, 1));
    let (a, b, out) = (path(&dir, "a.tqc"), path(&dir, "b.tqc"), path(&dir, "out.wav"));
    let report = ok_json(&["encode", &input, &a, "--seed", "3"]);
    ok_json(&["encode", &input, &b, "--seed", "3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(report["report"]["channels"], 2);
    assert_eq!(report["report"]["nominal_bps"], 31_007);

    let decoded = ok_json(&["decode", &a, &out, "--seed", "3", "--streaming-chunk", "7"]);
    assert_eq!(decoded["header"]["mode"], "seanet");
    let y = load_wav(&out).unwrap();
    assert_eq!((y.num_channels(), y.len()), (2, 13_230));
}

#[test]
fn ten_stages_report_62015() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.wav", &fixtures::music(0.2, 44_100, 2));
    let r = ok_json(&["encode", &input, &path(&dir, "x.tqc"), "--nq", "10"]);
    assert_eq!(r["report"]["nominal_bps"], 62_015);
}

#[test]
fn metrics_on_constructed_20_db_noise() {
    let dir = tempfile::tempdir().unwrap();
    let y = fixtures::music(1.0, 44_100, 3);
    let n = fixtures::white_noise(y.len(), 1.0, 44_100, 4);
    let sig: f64 = y.channel(0).iter().map(|v| v * v).sum();
    let noise: f64 = n.channel(0).iter().map(|v| v * v).sum();
    let g = (sig / noise / 100.0).sqrt();
    let x = AudioBuffer::mono(y.channel(0).iter().zip(n.channel(0)).map(|(a, b)| a + g * b).collect(), 44_100).unwrap();
    let (r, d) = (write(dir.path(), "ref.wav", &y), write(dir.path(), "deg.wav", &x));
    let out = path(&dir, "m.json");
    let m = ok_json(&["metrics", &r, &d, "--output", &out]);
    // samples pass through 32-bit float files
    assert!((m["snr_db"].as_f64().unwrap() - 20.0).abs() < 1e-3, "{}", m["snr_db"]);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(saved["snr_db"], m["snr_db"]);
    assert_eq!(m["split_hz"], 16_000.0);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.wav", &fixtures::music(0.1, 44_100, 5));
    let missing = path(&dir, "missing.wav");
    let junk = path(&dir, "junk.tqc");
    std::fs::write(&junk, b"TQC1 definitely not a stream").unwrap();
    let out = path(&dir, "o");

    assert_eq!(code(&["encode", &missing, &out, "--quiet"]), 3);
    assert_eq!(code(&["decode", &junk, &out, "--quiet"]), 4);
    assert_eq!(code(&["encode", &input, &out, "--nq", "0", "--quiet"]), 5);
    let direct = tqcodec(&["encode", &input, &out, "--mode", "pqmf_direct", "--quiet"]);
    assert_eq!(direct.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&direct.stderr).contains("tqcodec fit"));
    assert_eq!(code(&["encode", "--no-such-flag"]), 2);
    assert_eq!(code(&["analyze", "--graph", "empty", "--quiet"]), 0);
}

#[test]
fn analyze_flags_the_dac_like_decoder() {
    let v = ok_json(&["analyze", "--graph", "dac-like"]);
    let text = v.to_string();
    assert!(text.contains("dac.decoder"));
    let out = tqcodec(&["analyze", "--graph", "dac-like", "--quiet"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().any(|l| l.starts_with("dac.decoder") && l.ends_with("FAIL")), "{table}");
    assert!(table.contains("receptive field 17706 samples"));
}

fn fit_dir(dir: &Path, name: &str, clips: Vec<AudioBuffer>) -> PathBuf {
    let d = dir.join(name);
    std::fs::create_dir(&d).unwrap();
    for (i, c) in clips.iter().enumerate() {
        save_wav(c, d.join(format!("{i}.wav")), BitDepth::Float32).unwrap();
    }
    d
}

#[test]
fn codebooks_fitted_on_sines_code_sines_better() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "codebook_size = 64\nnum_quantizers = 2\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let sines = (0..3).map(|i| fixtures::sine(22_050, 220.0 * (i + 1) as f64, 0.5, 44_100)).collect();
    let noise = (0..3).map(|i| fixtures::white_noise(22_050, 0.5, 44_100, i)).collect();
    let sine_dir = fit_dir(dir.path(), "sines", sines);
    let noise_dir = fit_dir(dir.path(), "noise", noise);
    let test = write(dir.path(), "test.wav", &fixtures::sine(22_050, 440.0, 0.5, 44_100));

    let mut snrs = Vec::new();
    for corpus in [&sine_dir, &noise_dir] {
        let cb = dir.path().join("cb.tqcw");
        let cb = cb.to_str().unwrap();
        let common = ["--config", cfg, "--mode", "pqmf_direct", "--iters", "8"];
        let mut args = vec!["fit", corpus.to_str().unwrap(), "--output", cb];
        args.extend(common);
        let fit = ok_json(&args);
        assert_eq!(fit["stages"], 2);
        let (s, o) = (path(&dir, "t.tqc"), path(&dir, "t.wav"));
        ok_json(&["encode", &test, &s, "--config", cfg, "--mode", "pqmf_direct", "--codebooks", cb]);
        ok_json(&["decode", &s, &o, "--config", cfg, "--codebooks", cb]);
        let m = ok_json(&["metrics", &test, &o]);
        snrs.push(m["snr_db"].as_f64().unwrap());
    }
    assert!(snrs[0] > snrs[1], "sine-fitted {} vs noise-fitted {}", snrs[0], snrs[1]);
}

#[test]
fn too_little_fitting_audio_names_the_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let d = fit_dir(dir.path(), "tiny", vec![fixtures::music(0.1, 44_100, 1)]);
    let out = tqcodec(&["fit", d.to_str().unwrap(), "--output", &path(&dir, "cb"), "--mode", "pqmf_direct", "--quiet"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.743 s"));
}
