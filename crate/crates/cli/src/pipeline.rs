//! File-level stages: WAV → WGM1 and WGM1 → WGT1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use wgpt_core::audio::{
    apply_normalization, causal_log_mel, fit_normalization, load_wav, resample, MelFrameSequence, NormalizationStats,
    SAMPLE_RATE,
};
use wgpt_core::formats::{
    encode_stats, load_codebook, load_mel, load_stats, save_codebook, save_mel, save_stats, save_tokens,
};
use wgpt_core::tokenizer::{encode_vq, train_vq, VqOptions};
use wgpt_core::training::{write_manifest, ManifestEntry};

const INDEX_FILE: &str = ".featurize-index.json";
/// Bumped whenever the frontend output for identical input changes.
const FRONTEND_VERSION: &str = "wgm1-frontend-1";

/// Files with the given extension (case-insensitive), sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(ext));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Raw 24 kHz causal log-mel frames of a WAV file, resampling if needed.
pub fn wav_to_mel(path: &Path) -> wgpt_core::Result<MelFrameSequence> {
    let mut buf = load_wav(path)?;
    if buf.sample_rate != SAMPLE_RATE {
        buf = resample(&buf, SAMPLE_RATE).map_err(|e| e.in_file(path))?;
    }
    causal_log_mel(&buf).map_err(|e| e.in_file(path))
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct FeaturizeSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

pub struct FeaturizeOptions<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub stats: Option<&'a Path>,
    pub fit_stats: bool,
}

/// One WGM1 per WAV. Outputs whose input content (and normalization) is
/// unchanged since the last run are left alone.
pub fn featurize(opts: &FeaturizeOptions<'_>) -> anyhow::Result<FeaturizeSummary> {
    let wavs = list_files(opts.input, "wav")?;
    std::fs::create_dir_all(opts.output).with_context(|| format!("creating {}", opts.output.display()))?;
    let index_path = opts.output.join(INDEX_FILE);
    let mut index: BTreeMap<String, String> = match std::fs::read_to_string(&index_path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    let mut summary = FeaturizeSummary::default();
    let mut failed: Vec<String> = Vec::new();

    let mut raw: Vec<Option<MelFrameSequence>> = vec![None; wavs.len()];
    let stats: Option<NormalizationStats> = if opts.fit_stats {
        let Some(stats_path) = opts.stats else {
            bail!("--fit-stats needs --stats <path> to write the statistics to");
        };
        let computed: Vec<_> = wavs.par_iter().map(|p| wav_to_mel(p)).collect();
        for (slot, (res, path)) in raw.iter_mut().zip(computed.into_iter().zip(&wavs)) {
            match res {
                Ok(m) => *slot = Some(m),
                Err(e) => {
                    log::error!("{e}");
                    failed.push(stem(path));
                }
            }
        }
        if raw.iter().all(Option::is_none) {
            None
        } else {
            let corpus_id = opts
                .input
                .canonicalize()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|_| opts.input.display().to_string());
            let stats = fit_normalization(raw.iter().flatten(), &corpus_id)?;
            save_stats(stats_path, &stats)?;
            log::info!(
                "fitted normalization over {} files -> {}",
                raw.iter().flatten().count(),
                stats_path.display()
            );
            Some(stats)
        }
    } else {
        match opts.stats {
            Some(p) => Some(load_stats(p)?),
            None => None,
        }
    };
    let stats_tag = stats.as_ref().map(|s| hex(&Sha256::digest(encode_stats(s))));

    let jobs: Vec<(usize, PathBuf, String)> = wavs
        .iter()
        .enumerate()
        .filter(|(_, p)| !failed.contains(&stem(p)))
        .map(|(i, p)| (i, p.clone(), stem(p)))
        .collect();
    let results: Vec<(String, anyhow::Result<Option<String>>)> = jobs
        .into_par_iter()
        .map(|(i, path, name)| {
            let out_path = opts.output.join(format!("{name}.wgm1"));
            let res = (|| -> anyhow::Result<Option<String>> {
                let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                let mut h = Sha256::new();
                h.update(FRONTEND_VERSION);
                h.update(&bytes);
                h.update(stats_tag.as_deref().unwrap_or("raw"));
                let key = hex(&h.finalize());
                if index.get(&name) == Some(&key) && out_path.exists() {
                    return Ok(None);
                }
                let mel = match &raw[i] {
                    Some(m) => m.clone(),
                    None => wav_to_mel(&path)?,
                };
                let mel = match &stats {
                    Some(s) => apply_normalization(&mel, s).map_err(|e| e.in_file(&path))?,
                    None => mel,
                };
                save_mel(&out_path, &mel)?;
                Ok(Some(key))
            })();
            if res.is_err() {
                let _ = std::fs::remove_file(&out_path);
            }
            (name, res)
        })
        .collect();
    for (name, res) in results {
        match res {
            Ok(Some(key)) => {
                index.insert(name, key);
                summary.written += 1;
            }
            Ok(None) => summary.skipped += 1,
            Err(e) => {
                log::error!("{e:#}");
                index.remove(&name);
                failed.push(name);
            }
        }
    }
    for name in &failed {
        index.remove(name);
        let _ = std::fs::remove_file(opts.output.join(format!("{name}.wgm1")));
    }
    summary.failed = failed.len();
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)?)?;
    Ok(summary)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct TokenizeOptions<'a> {
    pub input: &'a Path,
    pub codebook: &'a Path,
    pub output: &'a Path,
    pub train_codebook: bool,
    pub k: usize,
    pub seed: u64,
    pub manifest: Option<&'a Path>,
}

/// One WGT1 per WGM1 via nearest-centroid lookup, optionally training the
/// codebook on the same mels first. Returns the number of token files.
pub fn tokenize(opts: &TokenizeOptions<'_>) -> anyhow::Result<usize> {
    let paths = list_files(opts.input, "wgm1")?;
    let mels = paths.iter().map(load_mel).collect::<wgpt_core::Result<Vec<_>>>()?;
    let book = if opts.train_codebook {
        let vq = VqOptions {
            k: opts.k,
            seed: opts.seed,
            ..VqOptions::default()
        };
        let book = train_vq(&mels, &opts.input.display().to_string(), vq)?;
        log::info!("trained {}-entry codebook in {} iterations", book.k(), book.iterations);
        save_codebook(opts.codebook, &book)?;
        book
    } else {
        if !opts.codebook.exists() {
            bail!(wgpt_core::Error::Config(format!(
                "codebook {} does not exist; pass --train-codebook to create it",
                opts.codebook.display()
            )));
        }
        load_codebook(opts.codebook)?
    };
    std::fs::create_dir_all(opts.output)?;
    let written: Vec<wgpt_core::Result<ManifestEntry>> = paths
        .par_iter()
        .zip(&mels)
        .map(|(path, mel)| {
            let name = stem(path);
            let tokens = encode_vq(mel, &book).map_err(|e| e.in_file(path))?;
            let out = opts.output.join(format!("{name}.wgt1"));
            save_tokens(&out, &tokens)?;
            Ok(ManifestEntry {
                utterance_id: name,
                tokens_path: out,
                mel_path: Some(path.clone()),
            })
        })
        .collect();
    let entries = written.into_iter().collect::<wgpt_core::Result<Vec<_>>>()?;
    if let Some(m) = opts.manifest {
        let abs = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
        let entries: Vec<ManifestEntry> = entries
            .iter()
            .map(|e| ManifestEntry {
                utterance_id: e.utterance_id.clone(),
                tokens_path: abs(&e.tokens_path),
                mel_path: e.mel_path.as_deref().map(abs),
            })
            .collect();
        write_manifest(m, &entries)?;
    }
    Ok(entries.len())
}
