//! The `TQC1` container: a fixed 23-byte little-endian header followed by one
//! byte-aligned payload per channel. Payloads hold indices frame by frame,
//! stage by stage, each written MSB-first in `codebook_bits` bits.
//!
//! ```text
//! offset size field
//!      0    4 magic "TQC1"
//!      4    1 version
//!      5    4 sample_rate
//!      9    1 channels
//!     10    1 mode
//!     11    1 num_quantizers
//!     12    1 codebook_bits
//!     13    2 total_stride
//!     15    4 original_length (samples per channel)
//!     19    4 frame_count (per channel)
//! ```

use serde::Serialize;

use crate::config::{CodecConfig, Mode};
use crate::error::{Error, Result};
use crate::quant::CodeSequence;

pub const MAGIC: &[u8; 4] = b"TQC1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BitstreamHeader {
    pub version: u8,
    pub sample_rate: u32,
    pub channels: u8,
    pub mode: Mode,
    pub num_quantizers: u8,
    pub codebook_bits: u8,
    pub total_stride: u16,
    pub original_length: u32,
    pub frame_count: u32,
}

impl BitstreamHeader {
    /// Header for `channels × original_length` samples coded with `cfg`.
    pub fn for_config(cfg: &CodecConfig, channels: usize, original_length: usize, frame_count: usize) -> Result<Self> {
        Ok(Self {
            version: VERSION,
            sample_rate: cfg.sample_rate,
            channels: u8::try_from(channels)
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::contract("channel count must be in 1..=255"))?,
            mode: cfg.mode,
            num_quantizers: u8::try_from(cfg.num_quantizers)
                .map_err(|_| Error::contract("too many quantizer stages"))?,
            codebook_bits: cfg.codebook_bits() as u8,
            total_stride: u16::try_from(cfg.total_stride())
                .map_err(|_| Error::contract("total stride exceeds 65535"))?,
            original_length: u32::try_from(original_length)
                .map_err(|_| Error::contract("audio too long for the bitstream"))?,
            frame_count: u32::try_from(frame_count)
                .map_err(|_| Error::contract("too many frames for the bitstream"))?,
        })
    }

    /// Bytes of one channel's payload.
    pub fn channel_payload_len(&self) -> usize {
        let bits = self.frame_count as usize * usize::from(self.num_quantizers) * usize::from(self.codebook_bits);
        bits.div_ceil(8)
    }

    pub fn total_len(&self) -> usize {
        HEADER_LEN + usize::from(self.channels) * self.channel_payload_len()
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4] = self.version;
        b[5..9].copy_from_slice(&self.sample_rate.to_le_bytes());
        b[9] = self.channels;
        b[10] = self.mode.to_byte();
        b[11] = self.num_quantizers;
        b[12] = self.codebook_bits;
        b[13..15].copy_from_slice(&self.total_stride.to_le_bytes());
        b[15..19].copy_from_slice(&self.original_length.to_le_bytes());
        b[19..23].copy_from_slice(&self.frame_count.to_le_bytes());
        b
    }

    /// Parses and sanity-checks a header.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::parse(bytes.len(), "truncated magic"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::parse(0, "not a TQC1 stream (bad magic)"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::parse(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
        }
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let version = bytes[4];
        if version != VERSION {
            return Err(Error::parse(4, format!("unknown stream version {version}")));
        }
        let mode = Mode::from_byte(bytes[10])
            .ok_or_else(|| Error::parse(10, format!("unknown mode byte {}", bytes[10])))?;
        let h = Self {
            version,
            sample_rate: u32_at(5),
            channels: bytes[9],
            mode,
            num_quantizers: bytes[11],
            codebook_bits: bytes[12],
            total_stride: u16::from_le_bytes([bytes[13], bytes[14]]),
            original_length: u32_at(15),
            frame_count: u32_at(19),
        };
        if h.sample_rate == 0 {
            return Err(Error::parse(5, "zero sample rate"));
        }
        if h.channels == 0 {
            return Err(Error::parse(9, "zero channels"));
        }
        if h.num_quantizers == 0 {
            return Err(Error::parse(11, "zero quantizer stages"));
        }
        if !(1..=16).contains(&h.codebook_bits) {
            return Err(Error::parse(12, format!("codebook bits {} outside 1..=16", h.codebook_bits)));
        }
        if h.total_stride == 0 {
            return Err(Error::parse(13, "zero total stride"));
        }
        if u64::from(h.original_length) > u64::from(h.frame_count) * u64::from(h.total_stride) {
            return Err(Error::parse(15, "original length exceeds the coded frames"));
        }
        Ok(h)
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn push(&mut self, value: u32, bits: u32) {
        self.acc = (self.acc << bits) | value;
        self.nbits += bits;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.out
    }
}

/// Serializes a header and one code sequence per channel.
pub fn pack(header: &BitstreamHeader, channels: &[CodeSequence]) -> Result<Vec<u8>> {
    if channels.len() != usize::from(header.channels) {
        return Err(Error::contract(format!(
            "header declares {} channels, got {} code sequences",
            header.channels,
            channels.len()
        )));
    }
    let bits = u32::from(header.codebook_bits);
    if !(1..=16).contains(&bits) {
        return Err(Error::contract("codebook bits must be in 1..=16"));
    }
    let mut out = Vec::with_capacity(header.total_len());
    out.extend_from_slice(&header.to_bytes());
    for (c, codes) in channels.iter().enumerate() {
        if codes.len() != header.frame_count as usize {
            return Err(Error::contract(format!(
                "channel {c} has {} frames, header declares {}",
                codes.len(),
                header.frame_count
            )));
        }
        let mut w = BitWriter {
            out: Vec::with_capacity(header.channel_payload_len()),
            acc: 0,
            nbits: 0,
        };
        for (t, frame) in codes.indices.iter().enumerate() {
            if frame.len() != usize::from(header.num_quantizers) {
                return Err(Error::contract(format!(
                    "channel {c} frame {t} has {} indices, header declares {}",
                    frame.len(),
                    header.num_quantizers
                )));
            }
            for &idx in frame {
                if u32::from(idx) >> bits != 0 {
                    return Err(Error::Range(format!(
                        "index {idx} does not fit in {bits} bits (channel {c}, frame {t})"
                    )));
                }
                w.push(u32::from(idx), bits);
            }
        }
        out.extend(w.finish());
    }
    Ok(out)
}

/// Parses a stream written by [`pack`]. Every malformed or truncated input is
/// reported as a parse error with the offending byte offset.
pub fn unpack(bytes: &[u8]) -> Result<(BitstreamHeader, Vec<CodeSequence>)> {
    let h = BitstreamHeader::parse(bytes)?;
    let per = h.channel_payload_len();
    let expected = HEADER_LEN as u64 + u64::from(h.channels) * per as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: stream has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    if bytes.len() as u64 > expected {
        return Err(Error::parse(expected as usize, "trailing bytes after the last channel"));
    }
    let bits = u32::from(h.codebook_bits);
    let nq = usize::from(h.num_quantizers);
    let mask = (1u32 << bits) - 1;
    let mut channels = Vec::with_capacity(usize::from(h.channels));
    for c in 0..usize::from(h.channels) {
        let payload = &bytes[HEADER_LEN + c * per..HEADER_LEN + (c + 1) * per];
        let mut acc = 0u32;
        let mut nbits = 0u32;
        let mut pos = 0;
        let mut indices = Vec::with_capacity(h.frame_count as usize);
        for _ in 0..h.frame_count {
            let mut frame = Vec::with_capacity(nq);
            for _ in 0..nq {
                while nbits < bits {
                    acc = (acc << 8) | u32::from(payload[pos]);
                    pos += 1;
                    nbits += 8;
                }
                nbits -= bits;
                frame.push(((acc >> nbits) & mask) as u16);
                acc &= (1 << nbits) - 1;
            }
            indices.push(frame);
        }
        channels.push(CodeSequence {
            indices,
            num_stages: nq,
            codebook_size: 1 << bits,
        });
    }
    Ok((h, channels))
}

/// Bits per second per channel, `floor(sample_rate · Nq · bits / stride)`.
pub fn bitrate_for(cfg: &CodecConfig) -> u64 {
    u64::from(cfg.sample_rate) * cfg.num_quantizers as u64 * u64::from(cfg.codebook_bits())
        / cfg.total_stride() as u64
}

/// Latent frames per second as the exact ratio `sample_rate / stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameRate {
    pub sample_rate: u32,
    pub stride: usize,
}

impl FrameRate {
    pub fn floor(&self) -> u64 {
        u64::from(self.sample_rate) / self.stride as u64
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.sample_rate) / self.stride as f64
    }
}

pub fn frame_rate_for(cfg: &CodecConfig) -> FrameRate {
    FrameRate {
        sample_rate: cfg.sample_rate,
        stride: cfg.total_stride(),
    }
}
