use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{load_mel, load_tokens, write_file};
use crate::tokenizer::{align, AlignedExample};
use crate::training::is_validation;

/// One manifest line: `utterance_id<TAB>tokens_path[<TAB>mel_path]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub tokens_path: PathBuf,
    pub mel_path: Option<PathBuf>,
}

/// Parses manifest text; relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) || fields.iter().take(2).any(|f| f.is_empty()) {
            return Err(Error::parse(
                "manifest",
                i as u64 + 1,
                "expected utterance_id<TAB>tokens_path[<TAB>mel_path] (offset is the line number)",
            ));
        }
        out.push(ManifestEntry {
            utterance_id: fields[0].to_string(),
            tokens_path: base.join(fields[1]),
            mel_path: fields.get(2).filter(|f| !f.is_empty()).map(|f| base.join(f)),
        });
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let mut text = String::new();
    for e in entries {
        let _ = write!(text, "{}\t{}", e.utterance_id, rel(&e.tokens_path));
        if let Some(m) = &e.mel_path {
            let _ = write!(text, "\t{}", rel(m));
        }
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

/// Aligned examples in manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<AlignedExample>,
}

impl Dataset {
    pub fn new(examples: Vec<AlignedExample>) -> Self {
        Dataset { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `(train, validation)` by utterance-id hash, preserving order.
    pub fn split(&self, val_percent: u64) -> (Vec<AlignedExample>, Vec<AlignedExample>) {
        self.examples
            .iter()
            .cloned()
            .partition(|e| !is_validation(&e.utterance_id, val_percent))
    }
}

/// Loads a manifest. With `with_frames`, every entry needs a mel file and
/// is aligned with its tokens; otherwise mel paths are ignored.
pub fn load_dataset(manifest: impl AsRef<Path>, with_frames: bool) -> Result<Dataset> {
    let manifest = manifest.as_ref();
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::from(e).in_file(manifest))?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let entries = parse_manifest(&text, base).map_err(|e| e.in_file(manifest))?;
    let mut examples = Vec::with_capacity(entries.len());
    for e in entries {
        let tokens = load_tokens(&e.tokens_path)?;
        let ex = if with_frames {
            let mel_path = e.mel_path.ok_or_else(|| {
                Error::Contract(format!("{} has no mel file but the model needs frames", e.utterance_id))
                    .in_file(manifest)
            })?;
            let frames = load_mel(&mel_path)?;
            align(tokens, frames, e.utterance_id).map_err(|err| err.in_file(mel_path))?
        } else {
            AlignedExample::token_only(tokens, e.utterance_id)
        };
        examples.push(ex);
    }
    Ok(Dataset::new(examples))
}
