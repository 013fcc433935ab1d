//! Minimal RIFF/WAVE reader and writer for PCM16, PCM24 and IEEE float32.

use std::fs;
use std::path::Path;

use super::AudioBuffer;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

impl BitDepth {
    fn bits(self) -> u16 {
        match self {
            BitDepth::Pcm16 => 16,
            BitDepth::Pcm24 => 24,
            BitDepth::Float32 => 32,
        }
    }

    fn format_tag(self) -> u16 {
        match self {
            BitDepth::Float32 => FORMAT_FLOAT,
            _ => FORMAT_PCM,
        }
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let bytes = fs::read(path)?;
    read_wav(&bytes)
}

pub fn save_wav(buf: &AudioBuffer, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let bytes = write_wav(buf, depth)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::parse(self.pos, format!("truncated {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
    block_align: u16,
}

/// Decodes an in-memory WAV file. Samples are normalized so that full-scale
/// negative PCM maps to exactly -1.0.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    if cur.take(4, "RIFF magic")? != b"RIFF" {
        return Err(Error::parse(0, "missing RIFF magic"));
    }
    cur.u32("RIFF size")?;
    if cur.take(4, "WAVE magic")? != b"WAVE" {
        return Err(Error::parse(8, "missing WAVE magic"));
    }

    let mut format: Option<Format> = None;
    loop {
        if cur.pos == bytes.len() {
            return Err(Error::parse(cur.pos, "no data chunk"));
        }
        let id = cur.take(4, "chunk id")?;
        let size = cur.u32("chunk size")? as usize;
        let body_start = cur.pos;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::parse(body_start, "fmt chunk too small"));
                }
                let mut tag = cur.u16("format tag")?;
                let channels = cur.u16("channel count")?;
                let sample_rate = cur.u32("sample rate")?;
                cur.u32("byte rate")?;
                let block_align = cur.u16("block align")?;
                let bits = cur.u16("bits per sample")?;
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(Error::parse(body_start, "extensible fmt chunk too small"));
                    }
                    cur.take(8, "extension header")?;
                    tag = cur.u16("sub-format")?;
                }
                cur.pos = body_start;
                cur.take(size + (size & 1), "fmt chunk body")?;
                format = Some(Format {
                    tag,
                    channels,
                    sample_rate,
                    bits,
                    block_align,
                });
            }
            b"data" => {
                let fmt = format
                    .as_ref()
                    .ok_or_else(|| Error::parse(body_start, "data chunk before fmt chunk"))?;
                let body = cur.take(size, "data chunk")?;
                return decode_samples(fmt, body, body_start);
            }
            _ => {
                cur.take(size + (size & 1), "chunk body")?;
            }
        }
    }
}

fn decode_samples(fmt: &Format, body: &[u8], offset: usize) -> Result<AudioBuffer> {
    if fmt.channels == 0 {
        return Err(Error::parse(offset, "zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::parse(offset, "zero sample rate"));
    }
    let width = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_FLOAT, 32) => 4,
        (tag, bits) => {
            return Err(Error::Format(format!(
                "encoding tag {tag} with {bits} bits per sample"
            )))
        }
    };
    let nch = fmt.channels as usize;
    if fmt.block_align as usize != width * nch {
        return Err(Error::parse(offset, "block align does not match format"));
    }
    if body.len() % (width * nch) != 0 {
        return Err(Error::parse(
            offset + body.len(),
            "data chunk ends mid-frame",
        ));
    }
    let frames = body.len() / (width * nch);
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for (i, s) in body.chunks_exact(width).enumerate() {
        let v = match width {
            2 => f64::from(i16::from_le_bytes([s[0], s[1]])) / 32768.0,
            3 => {
                let raw = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                f64::from(raw) / 8_388_608.0
            }
            _ => f64::from(f32::from_le_bytes([s[0], s[1], s[2], s[3]])),
        };
        channels[i % nch].push(v);
    }
    AudioBuffer::new(channels, fmt.sample_rate)
}

/// Encodes to a canonical 44-byte-header WAV file. Fixed-point depths clamp to
/// the representable range and round to nearest.
pub fn write_wav(buf: &AudioBuffer, depth: BitDepth) -> Result<Vec<u8>> {
    if !buf.is_finite() {
        return Err(Error::Validation("cannot write non-finite samples".into()));
    }
    let nch = buf.num_channels();
    let channels = u16::try_from(nch)
        .map_err(|_| Error::contract("too many channels for WAV"))?;
    let width = usize::from(depth.bits() / 8);
    let data_len = buf.len() * nch * width;
    let data_len_u32 = u32::try_from(data_len)
        .ok()
        .filter(|&n| n <= u32::MAX - 36)
        .ok_or_else(|| Error::contract("audio too long for a WAV file"))?;
    let block_align = channels * depth.bits() / 8;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len_u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&depth.format_tag().to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate().to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate() * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&depth.bits().to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len_u32.to_le_bytes());

    for t in 0..buf.len() {
        for c in 0..nch {
            let x = buf.channel(c)[t];
            match depth {
                BitDepth::Pcm16 => {
                    let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                BitDepth::Pcm24 => {
                    let q = (x * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                    out.extend_from_slice(&q.to_le_bytes()[..3]);
                }
                BitDepth::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_mono_header() {
        let buf = AudioBuffer::silence(1, 44_100, 44_100).unwrap();
        let bytes = write_wav(&buf, BitDepth::Pcm16).unwrap();
        assert_eq!(bytes.len(), 44 + 88_200);
        let back = read_wav(&bytes).unwrap();
        assert_eq!(back.len(), 44_100);
        assert_eq!(back.num_channels(), 1);
        assert_eq!(back.sample_rate(), 44_100);
        assert!(bytes[44..].iter().all(|&b| b == 0));
    }

    #[test]
    fn negative_full_scale_is_minus_one() {
        let buf = AudioBuffer::mono(vec![-1.0, -2.0], 8000).unwrap();
        let bytes = write_wav(&buf, BitDepth::Pcm16).unwrap();
        assert_eq!(&bytes[44..46], &(-32768i16).to_le_bytes());
        let back = read_wav(&bytes).unwrap();
        assert_eq!(back.channel(0), &[-1.0, -1.0]);
    }

    #[test]
    fn pcm24_round_trip_within_lsb() {
        let samples: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.013).sin() * 0.9).collect();
        let buf = AudioBuffer::mono(samples.clone(), 48_000).unwrap();
        let back = read_wav(&write_wav(&buf, BitDepth::Pcm24).unwrap()).unwrap();
        for (a, b) in samples.iter().zip(back.channel(0)) {
            assert!((a - b).abs() <= 1.0 / 8_388_608.0);
        }
    }

    #[test]
    fn truncated_data_is_a_parse_error() {
        let buf = AudioBuffer::mono(vec![0.25; 64], 44_100).unwrap();
        let bytes = write_wav(&buf, BitDepth::Pcm16).unwrap();
        for cut in [3, 12, 30, 43, 60] {
            assert!(matches!(read_wav(&bytes[..cut]), Err(Error::Parse { .. })), "cut {cut}");
        }
    }

    #[test]
    fn unsupported_encoding_is_a_format_error() {
        let buf = AudioBuffer::mono(vec![0.0; 4], 44_100).unwrap();
        let mut bytes = write_wav(&buf, BitDepth::Pcm16).unwrap();
        // rewrite as 8-bit PCM
        bytes[34] = 8;
        bytes[32] = 1;
        assert!(matches!(read_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let buf = AudioBuffer::mono(vec![0.5, -0.5], 44_100).unwrap();
        let bytes = write_wav(&buf, BitDepth::Float32).unwrap();
        let mut with_list = bytes[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(&[1, 2, 3, 0]);
        with_list.extend_from_slice(&bytes[36..]);
        let back = read_wav(&with_list).unwrap();
        assert_eq!(back.channel(0), &[0.5, -0.5]);
    }
}
