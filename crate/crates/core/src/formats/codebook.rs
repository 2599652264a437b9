use std::path::Path;

use super::{put_string, put_u32, read_file, write_file, ByteReader};
use crate::error::{Error, Result};
use crate::tokenizer::VqCodebook;

const MAGIC: &[u8; 4] = b"WGC1";

/// `WGC1`, u32 k, u32 dim, k×dim f32 centroids, length-prefixed corpus id.
pub fn encode_codebook(book: &VqCodebook) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, book.k() as u32);
    put_u32(&mut out, book.dim() as u32);
    for &v in book.centroids() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    put_string(&mut out, &book.trained_on);
    out
}

pub fn decode_codebook(bytes: &[u8]) -> Result<VqCodebook> {
    let mut r = ByteReader::new("WGC1", bytes);
    r.magic(MAGIC)?;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if k == 0 || dim == 0 {
        return Err(Error::parse("WGC1", 4, format!("empty codebook {k}x{dim}")));
    }
    let at = r.pos();
    let centroids: Vec<f64> = r.f32s(k * dim)?.into_iter().map(f64::from).collect();
    if centroids.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse("WGC1", at, "non-finite centroid"));
    }
    let trained_on = r.string()?;
    r.finish()?;
    Ok(VqCodebook::from_parts(centroids, k, dim, trained_on, 0))
}

pub fn save_codebook(path: impl AsRef<Path>, book: &VqCodebook) -> Result<()> {
    write_file(path.as_ref(), &encode_codebook(book))
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<VqCodebook> {
    let path = path.as_ref();
    decode_codebook(&read_file(path)?).map_err(|e| e.in_file(path))
}
