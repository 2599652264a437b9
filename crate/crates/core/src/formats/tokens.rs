use std::path::Path;

use super::{put_u32, read_file, write_file, ByteReader};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenSequence, TokenSource};

const MAGIC: &[u8; 4] = b"WGT1";

/// `WGT1`, u32 vocab, u32 length, then u16 ids.
pub fn encode_tokens(seq: &TokenSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + seq.len() * 2);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, seq.vocab() as u32);
    put_u32(&mut out, seq.len() as u32);
    for &id in seq.ids() {
        out.extend_from_slice(&(id as u16).to_le_bytes());
    }
    out
}

pub fn decode_tokens(bytes: &[u8]) -> Result<TokenSequence> {
    let mut r = ByteReader::new("WGT1", bytes);
    r.magic(MAGIC)?;
    let vocab = r.u32()? as usize;
    if vocab == 0 || vocab > u16::MAX as usize + 1 {
        return Err(Error::parse("WGT1", 4, format!("invalid vocab size {vocab}")));
    }
    let len = r.u32()? as usize;
    let mut ids = Vec::with_capacity(len.min(r.remaining() / 2));
    for _ in 0..len {
        let at = r.pos();
        let id = r.u16()? as usize;
        if id >= vocab {
            return Err(Error::parse("WGT1", at, Error::Vocabulary { id, vocab }.to_string()));
        }
        ids.push(id);
    }
    r.finish()?;
    TokenSequence::new(ids, vocab, TokenSource::External)
}

pub fn save_tokens(path: impl AsRef<Path>, seq: &TokenSequence) -> Result<()> {
    write_file(path.as_ref(), &encode_tokens(seq))
}

/// Reads an externally produced token file (75 Hz coarse stream).
pub fn load_tokens(path: impl AsRef<Path>) -> Result<TokenSequence> {
    let path = path.as_ref();
    decode_tokens(&read_file(path)?).map_err(|e| e.in_file(path))
}
