use std::path::Path;

use super::{put_u32, read_file, write_file, ByteReader};
use crate::audio::{FrameScale, MelFrameSequence};
use crate::error::Result;

const MAGIC: &[u8; 4] = b"WGM1";

/// `WGM1`, u32 n_frames, u32 n_bins, u32 stats_flag, then f32 frames.
pub fn encode_mel(seq: &MelFrameSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + seq.frames.len() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, seq.n_frames() as u32);
    put_u32(&mut out, seq.n_bins as u32);
    put_u32(&mut out, matches!(seq.scale, FrameScale::Normalized { .. }) as u32);
    for &v in &seq.frames {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Normalized files do not record which corpus produced their statistics;
/// they decode with an empty corpus id.
pub fn decode_mel(bytes: &[u8]) -> Result<MelFrameSequence> {
    let mut r = ByteReader::new("WGM1", bytes);
    r.magic(MAGIC)?;
    let n_frames = r.u32()? as usize;
    let n_bins = r.u32()? as usize;
    if n_bins == 0 {
        return Err(r.error("zero bins"));
    }
    let scale = match r.u32()? {
        0 => FrameScale::Raw,
        1 => FrameScale::Normalized {
            corpus_id: String::new(),
        },
        f => return Err(r.error(format!("invalid stats flag {f}"))),
    };
    let frames = r.f32s(n_frames * n_bins)?.into_iter().map(f64::from).collect();
    r.finish()?;
    Ok(MelFrameSequence { frames, n_bins, scale })
}

pub fn save_mel(path: impl AsRef<Path>, seq: &MelFrameSequence) -> Result<()> {
    write_file(path.as_ref(), &encode_mel(seq))
}

pub fn load_mel(path: impl AsRef<Path>) -> Result<MelFrameSequence> {
    let path = path.as_ref();
    decode_mel(&read_file(path)?).map_err(|e| e.in_file(path))
}
