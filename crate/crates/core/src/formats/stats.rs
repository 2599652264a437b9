use std::path::Path;

use super::{put_string, put_u32, read_file, write_file, ByteReader};
use crate::audio::NormalizationStats;
use crate::error::Result;

const MAGIC: &[u8; 4] = b"WGS1";

/// `WGS1`, u32 n_bins, f64 means, f64 stds, length-prefixed corpus id.
pub fn encode_stats(stats: &NormalizationStats) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, stats.n_bins() as u32);
    for v in stats.mean.iter().chain(&stats.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_string(&mut out, &stats.corpus_id);
    out
}

pub fn decode_stats(bytes: &[u8]) -> Result<NormalizationStats> {
    let mut r = ByteReader::new("WGS1", bytes);
    r.magic(MAGIC)?;
    let n = r.u32()? as usize;
    let mean = r.f64s(n)?;
    let at = r.pos();
    let std = r.f64s(n)?;
    if std.iter().any(|&s| !(s > 0.0)) {
        return Err(crate::error::Error::parse(
            "WGS1",
            at,
            "non-positive standard deviation",
        ));
    }
    let corpus_id = r.string()?;
    r.finish()?;
    Ok(NormalizationStats { mean, std, corpus_id })
}

pub fn save_stats(path: impl AsRef<Path>, stats: &NormalizationStats) -> Result<()> {
    write_file(path.as_ref(), &encode_stats(stats))
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<NormalizationStats> {
    let path = path.as_ref();
    decode_stats(&read_file(path)?).map_err(|e| e.in_file(path))
}
