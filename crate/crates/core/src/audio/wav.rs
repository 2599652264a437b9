//! RIFF/WAVE reading (16-bit PCM, 32-bit float; mono or stereo) and 16-bit
//! PCM writing.

use std::io::Write;
use std::path::Path;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

const WHAT: &str = "wav";

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(
                WHAT,
                self.pos as u64,
                format!(
                    "unexpected end of file (wanted {n} bytes, {} left)",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_wav(&bytes).map_err(|e| e.in_file(path))
}

/// Decodes an in-memory WAV file.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"RIFF" {
        return Err(Error::parse(WHAT, 0, "missing RIFF magic"));
    }
    r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(Error::parse(WHAT, 8, "missing WAVE form type"));
    }
    let mut format: Option<Format> = None;
    loop {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(Error::parse(
                        WHAT,
                        chunk_at as u64,
                        format!("fmt chunk too short ({len} bytes)"),
                    ));
                }
                let body_at = r.pos;
                let mut tag = r.u16()?;
                let channels = r.u16()?;
                let sample_rate = r.u32()?;
                r.u32()?;
                r.u16()?;
                let bits = r.u16()?;
                if tag == FORMAT_EXTENSIBLE {
                    if len < 40 {
                        return Err(Error::parse(WHAT, body_at as u64, "extensible fmt chunk too short"));
                    }
                    r.take(8)?;
                    tag = r.u16()?;
                }
                r.pos = body_at + len + (len & 1);
                format = Some(Format {
                    tag,
                    channels,
                    sample_rate,
                    bits,
                });
            }
            b"data" => {
                let fmt = format.ok_or_else(|| Error::parse(WHAT, chunk_at as u64, "data chunk before fmt chunk"))?;
                let data_at = r.pos;
                let available = bytes.len().saturating_sub(data_at);
                let data = &bytes[data_at..data_at + len.min(available)];
                return decode_samples(&fmt, data, chunk_at as u64);
            }
            _ => {
                r.pos += len + (len & 1);
            }
        }
    }
}

fn decode_samples(fmt: &Format, data: &[u8], offset: u64) -> Result<AudioBuffer> {
    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(Error::parse(
            WHAT,
            offset,
            format!("unsupported channel count {}", fmt.channels),
        ));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::parse(WHAT, offset, "zero sample rate"));
    }
    let channels = fmt.channels as usize;
    let decoded: Vec<f64> = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
        (tag, bits) => {
            return Err(Error::parse(
                WHAT,
                offset,
                format!("unsupported codec: format tag {tag:#06x} with {bits} bits per sample"),
            ))
        }
    };
    let samples = decoded
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: fmt.sample_rate,
    })
}

/// Mono 16-bit PCM encoding; samples are clamped to [-1, 1].
pub fn encode_wav_pcm16(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = buf.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buf.samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    f.write_all(&encode_wav_pcm16(buf))
        .map_err(|e| Error::from(e).in_file(path))?;
    Ok(())
}
