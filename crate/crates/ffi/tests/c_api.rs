use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tqcodec::codec::{codebook_store, random_quantizer};
use tqcodec::{fixtures, CodecConfig, Mode};
use tqcodec_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tq_last_error()) }.to_string_lossy().into_owned()
}

fn new_codec(mode: u8, nq: u32, codebooks: Option<&Path>) -> (i32, *mut TqCodec) {
    let path = codebooks.map(|p| CString::new(p.to_str().unwrap()).unwrap());
    let mut handle = ptr::null_mut();
    let status = unsafe {
        tq_codec_new(
            mode,
            nq,
            path.as_ref().map_or(ptr::null(), |p| p.as_ptr()),
            ptr::null(),
            7,
            &mut handle,
        )
    };
    (status, handle)
}

fn encode(codec: *const TqCodec, planar: &[f32], channels: usize) -> (i32, Vec<u8>) {
    let (mut bytes, mut len) = (ptr::null_mut(), 0usize);
    let status = unsafe { tq_encode(codec, planar.as_ptr(), channels, planar.len() / channels, 44_100, &mut bytes, &mut len) };
    let out = if status == TQ_OK { unsafe { std::slice::from_raw_parts(bytes, len) }.to_vec() } else { Vec::new() };
    unsafe { tq_bytes_free(bytes, len) };
    (status, out)
}

fn decode(codec: *const TqCodec, stream: &[u8], chunk: usize) -> (i32, Vec<f32>, usize) {
    let (mut samples, mut ch, mut len, mut sr) = (ptr::null_mut(), 0usize, 0usize, 0u32);
    let status = unsafe { tq_decode(codec, stream.as_ptr(), stream.len(), chunk, &mut samples, &mut ch, &mut len, &mut sr) };
    let out = if status == TQ_OK && ch * len > 0 {
        unsafe { std::slice::from_raw_parts(samples, ch * len) }.to_vec()
    } else {
        Vec::new()
    };
    unsafe { tq_samples_free(samples, ch * len) };
    (status, out, ch)
}

fn codebook_file(dir: &Path) -> PathBuf {
    let cfg = CodecConfig::with_mode(Mode::PqmfDirect);
    let path = dir.join("cb.tqcw");
    codebook_store(&random_quantizer(64, 5, 512, 3).unwrap(), &cfg).save(&path).unwrap();
    path
}

#[test]
fn bitrate_matches_published_arithmetic() {
    assert_eq!(tq_bitrate_for(44_100, 64, 5, 9), 31_007);
    assert_eq!(tq_bitrate_for(44_100, 64, 10, 9), 62_015);
    assert_eq!(tq_bitrate_for(44_100, 0, 10, 9), 0);
}

#[test]
fn round_trip_through_handle() {
    let dir = tempfile::tempdir().unwrap();
    let cb = codebook_file(dir.path());
    let (status, codec) = new_codec(TQ_MODE_PQMF_DIRECT, 5, Some(&cb));
    assert_eq!(status, TQ_OK, "{}", last_error());
    let st = fixtures::stereo_music(0.2, 44_100, 1);
    let planar: Vec<f32> = st.channels().iter().flatten().map(|&v| v as f32).collect();
    let (status, stream) = encode(codec, &planar, 2);
    assert_eq!(status, TQ_OK, "{}", last_error());
    assert_eq!(&stream[..4], b"TQC1");
    let (status, offline, ch) = decode(codec, &stream, 0);
    assert_eq!(status, TQ_OK);
    assert_eq!(ch, 2);
    assert_eq!(offline.len(), planar.len());
    let (_, streamed, _) = decode(codec, &stream, 7);
    let diff = offline.iter().zip(&streamed).fold(0f32, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff <= 1e-5);

    let (status, _, _) = decode(codec, &stream[..stream.len() - 1], 0);
    assert_eq!(status, TQ_ERR_PARSE);
    assert!(last_error().contains("byte"), "{}", last_error());
    unsafe { tq_codec_free(codec) };
}

#[test]
fn errors_map_to_status_codes() {
    let (status, handle) = new_codec(9, 5, None);
    assert_eq!(status, TQ_ERR_CONTRACT);
    assert!(handle.is_null());
    assert!(last_error().contains("mode"));

    let (status, codec) = new_codec(TQ_MODE_PQMF_DIRECT, 5, None);
    assert_eq!(status, TQ_OK);
    let (status, _) = encode(codec, &[0.0; 1000], 1);
    assert_eq!(status, TQ_ERR_STATE);
    assert!(last_error().contains("tqcodec fit"));
    unsafe { tq_codec_free(codec) };

    let missing = Path::new("/nonexistent/cb.tqcw");
    assert_eq!(new_codec(TQ_MODE_PQMF_DIRECT, 5, Some(missing)).0, TQ_ERR_IO);
    assert_eq!(unsafe { tq_codec_new(0, 5, ptr::null(), ptr::null(), 0, ptr::null_mut()) }, TQ_ERR_NULL);
    unsafe { tq_codec_free(ptr::null_mut()) };
}

#[test]
fn metrics_through_c_abi() {
    let y: Vec<f32> = fixtures::white_noise(8192, 0.5, 44_100, 2).channel(0).iter().map(|&v| v as f32).collect();
    let x10: Vec<f32> = y.iter().map(|v| v * 10.0).collect();
    let mut out = 0.0;
    assert_eq!(unsafe { tq_lsd(x10.as_ptr(), y.as_ptr(), y.len(), 44_100, &mut out) }, TQ_OK);
    assert!((out - 2.0).abs() < 1e-6, "{out}");
    assert_eq!(unsafe { tq_snr(y.as_ptr(), y.as_ptr(), y.len(), 44_100, &mut out) }, TQ_OK);
    assert_eq!(out, 200.0);
    let zeros = vec![0f32; 8192];
    assert_eq!(unsafe { tq_snr(y.as_ptr(), zeros.as_ptr(), y.len(), 44_100, &mut out) }, TQ_ERR_NUMERIC);
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/tqcodec.h")).unwrap();
    let src = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 9);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct TqCodec TqCodec;"));
}

/// Compiles and runs a small C program against the static library, when a C
/// compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let lib = out_dir.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    if !lib.join("libtqcodec_ffi.a").exists() {
        eprintln!("static library not found in {}; skipping", lib.display());
        return;
    }
    let program = r#"
#include <stdio.h>
#include "tqcodec.h"
int main(void) {
    TqCodec *codec = NULL;
    if (tq_bitrate_for(44100, 64, 5, 9) != 31007) return 10;
    if (tq_codec_new(TQ_MODE_SEANET, 5, NULL, NULL, 1, &codec) != TQ_OK) return 11;
    float samples[4096];
    for (int i = 0; i < 4096; i++) samples[i] = (float)((i % 100) - 50) / 200.0f;
    uint8_t *bytes = NULL; size_t len = 0;
    if (tq_encode(codec, samples, 1, 4096, 44100, &bytes, &len) != TQ_OK) return 12;
    float *out = NULL; size_t ch = 0, n = 0; uint32_t sr = 0;
    if (tq_decode(codec, bytes, len, 0, &out, &ch, &n, &sr) != TQ_OK) return 13;
    if (ch != 1 || n != 4096 || sr != 44100) return 14;
    if (tq_decode(codec, bytes, 10, 0, &out, &ch, &n, &sr) != TQ_ERR_PARSE) return 15;
    printf("%s\n", tq_last_error());
    tq_samples_free(out, ch * n);
    tq_bytes_free(bytes, len);
    tq_codec_free(codec);
    return 0;
}
"#;
    let src = out_dir.join("ffi_smoke.c");
    let exe = out_dir.join("ffi_smoke");
    std::fs::write(&src, program).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(lib.join("libtqcodec_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).contains("parse error"));
}
