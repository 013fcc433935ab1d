//! C interface to the tqcodec music codec.
//!
//! Every fallible function returns a status code (`TQ_OK` on success) and
//! writes results through out-pointers. The message of the most recent failure
//! on the calling thread is available from [`tq_last_error`]. Buffers returned
//! by the library must be released with the matching `tq_*_free` function.
//!
//! Audio crosses the boundary as planar `float` samples: channel 0 first, then
//! channel 1, each `len` samples long.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tqcodec::codec::{codebooks_from_store, Codec};
use tqcodec::dsp::AudioBuffer;
use tqcodec::nn::WeightStore;
use tqcodec::{bitstream, metrics, CodecConfig, Error, Mode};

pub const TQ_OK: i32 = 0;
/// A required pointer argument was null.
pub const TQ_ERR_NULL: i32 = 1;
/// The library panicked; the handle involved should be discarded.
pub const TQ_ERR_PANIC: i32 = 2;
pub const TQ_ERR_IO: i32 = 3;
pub const TQ_ERR_PARSE: i32 = 4;
pub const TQ_ERR_CONTRACT: i32 = 5;
pub const TQ_ERR_STATE: i32 = 6;
pub const TQ_ERR_NUMERIC: i32 = 7;

pub const TQ_MODE_SEANET: u8 = 0;
pub const TQ_MODE_PQMF_DIRECT: u8 = 1;
pub const TQ_MODE_SUBBAND_SEANET: u8 = 2;

/// Opaque codec instance.
pub struct TqCodec {
    inner: Codec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TQ_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            TQ_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (e.class() as i32, e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (TQ_ERR_NULL, format!("{what} must not be null"))
}

fn path_arg<'a>(p: *const c_char) -> Result<Option<&'a Path>, (i32, String)> {
    if p.is_null() {
        return Ok(None);
    }
    // SAFETY: the caller passes a NUL-terminated string that outlives the call.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (TQ_ERR_CONTRACT, "path is not valid UTF-8".to_string()))?;
    Ok(Some(Path::new(s)))
}

/// # Safety
/// `samples` must point to `channels * len` readable floats.
unsafe fn audio_arg(samples: *const f32, channels: usize, len: usize, sample_rate: u32) -> Result<AudioBuffer, (i32, String)> {
    if samples.is_null() && channels * len > 0 {
        return Err(null("samples"));
    }
    let data: &[f32] = if channels * len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(samples, channels * len)
    };
    let planar = (0..channels)
        .map(|c| data[c * len..(c + 1) * len].iter().map(|&v| f64::from(v)).collect())
        .collect();
    AudioBuffer::new(planar, sample_rate).map_err(lib_err)
}

fn boxed<T>(v: Vec<T>) -> *mut T {
    if v.is_empty() {
        return ptr::null_mut();
    }
    Box::into_raw(v.into_boxed_slice()).cast()
}

/// Message of the last failed call on this thread (empty if none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a codec with default configuration for `mode` and `num_quantizers`
/// stages. `codebooks_path` (TQCW file, may be null) is required for
/// `TQ_MODE_PQMF_DIRECT`; `weights_path` may be null to use seeded random
/// weights.
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn tq_codec_new(
    mode: u8,
    num_quantizers: u32,
    codebooks_path: *const c_char,
    weights_path: *const c_char,
    seed: u64,
    out: *mut *mut TqCodec,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mode = Mode::from_byte(mode).ok_or((TQ_ERR_CONTRACT, format!("unknown mode {mode}")))?;
        let cfg = CodecConfig {
            mode,
            num_quantizers: num_quantizers as usize,
            ..CodecConfig::default()
        };
        cfg.validate().map_err(lib_err)?;
        let weights = path_arg(weights_path)?.map(WeightStore::load).transpose().map_err(lib_err)?;
        let codebooks = match path_arg(codebooks_path)? {
            Some(p) => Some(
                WeightStore::load(p)
                    .and_then(|s| codebooks_from_store(&s, &cfg))
                    .map_err(lib_err)?,
            ),
            None => None,
        };
        let inner = Codec::new(cfg, weights.as_ref(), codebooks, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TqCodec { inner }));
        Ok(())
    })
}

/// # Safety
/// `codec` must be null or a handle from [`tq_codec_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tq_codec_free(codec: *mut TqCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Encodes planar audio into a TQC1 stream written to `*out_bytes`
/// (`*out_len` bytes; release with [`tq_bytes_free`]).
///
/// # Safety
/// `codec` must be a live handle, `samples` must hold `channels * len` floats
/// and the out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tq_encode(
    codec: *const TqCodec,
    samples: *const f32,
    channels: usize,
    len: usize,
    sample_rate: u32,
    out_bytes: *mut *mut u8,
    out_len: *mut usize,
) -> i32 {
    guard(|| {
        let codec = codec.as_ref().ok_or_else(|| null("codec"))?;
        if out_bytes.is_null() || out_len.is_null() {
            return Err(null("output pointers"));
        }
        let audio = audio_arg(samples, channels, len, sample_rate)?;
        let bytes = codec.inner.encode(&audio).map_err(lib_err)?;
        *out_len = bytes.len();
        *out_bytes = boxed(bytes);
        Ok(())
    })
}

/// Decodes a TQC1 stream into planar samples (`channels * len` floats,
/// release with [`tq_samples_free`]). `streaming_chunk` > 0 decodes through the
/// streaming path that many frames at a time.
///
/// # Safety
/// `codec` must be a live handle, `bytes` must hold `len` bytes and the
/// out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tq_decode(
    codec: *const TqCodec,
    bytes: *const u8,
    len: usize,
    streaming_chunk: usize,
    out_samples: *mut *mut f32,
    out_channels: *mut usize,
    out_len: *mut usize,
    out_sample_rate: *mut u32,
) -> i32 {
    guard(|| {
        let codec = codec.as_ref().ok_or_else(|| null("codec"))?;
        if bytes.is_null() || out_samples.is_null() || out_channels.is_null() || out_len.is_null() || out_sample_rate.is_null() {
            return Err(null("stream and output pointers"));
        }
        let data = std::slice::from_raw_parts(bytes, len);
        let audio = if streaming_chunk > 0 {
            codec.inner.decode_streaming(data, streaming_chunk)
        } else {
            codec.inner.decode(data)
        }
        .map_err(lib_err)?;
        *out_channels = audio.num_channels();
        *out_len = audio.len();
        *out_sample_rate = audio.sample_rate();
        let flat: Vec<f32> = audio.channels().iter().flatten().map(|&v| v as f32).collect();
        *out_samples = boxed(flat);
        Ok(())
    })
}

/// # Safety
/// `bytes`/`len` must come from one [`tq_encode`] call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tq_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() && len > 0 {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}

/// `count` is `channels * len` as returned by [`tq_decode`].
///
/// # Safety
/// `samples`/`count` must come from one [`tq_decode`] call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tq_samples_free(samples: *mut f32, count: usize) {
    if !samples.is_null() && count > 0 {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(samples, count)));
    }
}

/// Per-channel bits per second: `floor(sample_rate / total_stride × nq × bits)`.
/// Returns 0 for a zero rate or stride.
#[no_mangle]
pub extern "C" fn tq_bitrate_for(sample_rate: u32, total_stride: u32, num_quantizers: u32, codebook_bits: u32) -> u64 {
    if sample_rate == 0 || total_stride == 0 || codebook_bits == 0 || codebook_bits > 16 {
        return 0;
    }
    let cfg = CodecConfig {
        sample_rate,
        strides: vec![total_stride as usize],
        num_quantizers: num_quantizers as usize,
        codebook_size: 1 << codebook_bits,
        mode: Mode::Seanet,
        ..CodecConfig::default()
    };
    bitstream::bitrate_for(&cfg)
}

/// # Safety
/// `x` and `y` must hold `len` floats; `out` must be valid for writes.
unsafe fn pair_metric(
    x: *const f32,
    y: *const f32,
    len: usize,
    sample_rate: u32,
    out: *mut f64,
    f: fn(&AudioBuffer, &AudioBuffer) -> tqcodec::Result<f64>,
) -> i32 {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return Err(null("signal and output pointers"));
        }
        let a = audio_arg(x, 1, len, sample_rate)?;
        let b = audio_arg(y, 1, len, sample_rate)?;
        *out = f(&a, &b).map_err(lib_err)?;
        Ok(())
    })
}

/// Log-spectral distance of mono estimate `x` against reference `y`.
///
/// # Safety
/// `x` and `y` must hold `len` floats; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tq_lsd(x: *const f32, y: *const f32, len: usize, sample_rate: u32, out: *mut f64) -> i32 {
    pair_metric(x, y, len, sample_rate, out, |a, b| metrics::lsd(a, b).map(|r| r.lsd))
}

/// SNR in dB of mono estimate `x` against reference `y` (capped at 200).
///
/// # Safety
/// `x` and `y` must hold `len` floats; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tq_snr(x: *const f32, y: *const f32, len: usize, sample_rate: u32, out: *mut f64) -> i32 {
    pair_metric(x, y, len, sample_rate, out, metrics::snr)
}
