#ifndef TQCODEC_H
#define TQCODEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define TQ_OK 0

/*
 A required pointer argument was null.
 */
#define TQ_ERR_NULL 1

/*
 The library panicked; the handle involved should be discarded.
 */
#define TQ_ERR_PANIC 2

#define TQ_ERR_IO 3

#define TQ_ERR_PARSE 4

#define TQ_ERR_CONTRACT 5

#define TQ_ERR_STATE 6

#define TQ_ERR_NUMERIC 7

#define TQ_MODE_SEANET 0

#define TQ_MODE_PQMF_DIRECT 1

#define TQ_MODE_SUBBAND_SEANET 2

/*
 Opaque codec instance.
 */
typedef struct TqCodec TqCodec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread (empty if none). The pointer
 stays valid until the next failing call on the same thread.
 */
const char *tq_last_error(void);

/*
 Creates a codec with default configuration for `mode` and `num_quantizers`
 stages. `codebooks_path` (TQCW file, may be null) is required for
 `TQ_MODE_PQMF_DIRECT`; `weights_path` may be null to use seeded random
 weights.

 # Safety
 Path arguments must be null or NUL-terminated strings; `out` must be valid
 for writes.
 */
int32_t tq_codec_new(uint8_t mode,
                     uint32_t num_quantizers,
                     const char *codebooks_path,
                     const char *weights_path,
                     uint64_t seed,
                     struct TqCodec **out);

/*
 # Safety
 `codec` must be null or a handle from [`tq_codec_new`] not yet freed.
 */
void tq_codec_free(struct TqCodec *codec);

/*
 Encodes planar audio into a TQC1 stream written to `*out_bytes`
 (`*out_len` bytes; release with [`tq_bytes_free`]).

 # Safety
 `codec` must be a live handle, `samples` must hold `channels * len` floats
 and the out-pointers must be valid for writes.
 */
int32_t tq_encode(const struct TqCodec *codec,
                  const float *samples,
                  size_t channels,
                  size_t len,
                  uint32_t sample_rate,
                  uint8_t **out_bytes,
                  size_t *out_len);

/*
 Decodes a TQC1 stream into planar samples (`channels * len` floats,
 release with [`tq_samples_free`]). `streaming_chunk` > 0 decodes through the
 streaming path that many frames at a time.

 # Safety
 `codec` must be a live handle, `bytes` must hold `len` bytes and the
 out-pointers must be valid for writes.
 */
int32_t tq_decode(const struct TqCodec *codec,
                  const uint8_t *bytes,
                  size_t len,
                  size_t streaming_chunk,
                  float **out_samples,
                  size_t *out_channels,
                  size_t *out_len,
                  uint32_t *out_sample_rate);

/*
 # Safety
 `bytes`/`len` must come from one [`tq_encode`] call and not be freed twice.
 */
void tq_bytes_free(uint8_t *bytes, size_t len);

/*
 `count` is `channels * len` as returned by [`tq_decode`].

 # Safety
 `samples`/`count` must come from one [`tq_decode`] call and not be freed twice.
 */
void tq_samples_free(float *samples, size_t count);

/*
 Per-channel bits per second: `floor(sample_rate / total_stride × nq × bits)`.
 Returns 0 for a zero rate or stride.
 */
uint64_t tq_bitrate_for(uint32_t sample_rate,
                        uint32_t total_stride,
                        uint32_t num_quantizers,
                        uint32_t codebook_bits);

/*
 Log-spectral distance of mono estimate `x` against reference `y`.

 # Safety
 `x` and `y` must hold `len` floats; `out` must be valid for writes.
 */
int32_t tq_lsd(const float *x, const float *y, size_t len, uint32_t sample_rate, double *out);

/*
 SNR in dB of mono estimate `x` against reference `y` (capped at 200).

 # Safety
 `x` and `y` must hold `len` floats; `out` must be valid for writes.
 */
int32_t tq_snr(const float *x, const float *y, size_t len, uint32_t sample_rate, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TQCODEC_H */
