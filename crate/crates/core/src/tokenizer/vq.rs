//! k-means vector quantization of mel frames.

use std::collections::HashSet;

use rand::Rng as _;

use crate::audio::MelFrameSequence;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::tokenizer::{TokenSequence, TokenSource};

#[derive(Clone, Copy, Debug)]
pub struct VqOptions {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves further than this (Euclidean).
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for VqOptions {
    fn default() -> Self {
        VqOptions {
            k: super::VOCAB,
            max_iterations: 50,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// `k × dim` centroids in mel-frame space.
///
/// Centroids are kept at f32 precision so a saved codebook reloads
/// identically. `iterations` is training metadata and is not persisted.
#[derive(Clone, Debug)]
pub struct VqCodebook {
    centroids: Vec<f64>,
    k: usize,
    dim: usize,
    pub trained_on: String,
    pub iterations: usize,
}

impl PartialEq for VqCodebook {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.dim == other.dim
            && self.centroids == other.centroids
            && self.trained_on == other.trained_on
    }
}

impl VqCodebook {
    pub fn from_parts(centroids: Vec<f64>, k: usize, dim: usize, trained_on: String, iterations: usize) -> Self {
        assert_eq!(centroids.len(), k * dim);
        VqCodebook {
            centroids,
            k,
            dim,
            trained_on,
            iterations,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the
/// lowest index.
pub fn nearest_centroid(frame: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(frame, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn train_vq<'a, I>(corpus: I, corpus_id: &str, opts: VqOptions) -> Result<VqCodebook>
where
    I: IntoIterator<Item = &'a MelFrameSequence>,
{
    train_vq_traced(corpus, corpus_id, opts).map(|(book, _)| book)
}

/// Like [`train_vq`], also returning the mean squared quantization error
/// measured after each assignment step.
pub fn train_vq_traced<'a, I>(corpus: I, corpus_id: &str, opts: VqOptions) -> Result<(VqCodebook, Vec<f64>)>
where
    I: IntoIterator<Item = &'a MelFrameSequence>,
{
    let mut dim = 0;
    let mut data = Vec::new();
    for seq in corpus {
        if dim == 0 {
            dim = seq.n_bins;
        } else if seq.n_bins != dim {
            return Err(Error::shape("train_vq", &[dim], &[seq.n_bins]));
        }
        data.extend_from_slice(&seq.frames);
    }
    let k = opts.k;
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if dim == 0 || data.is_empty() {
        return Err(Error::EmptyCorpus("no frames to quantize".into()));
    }
    let n = data.len() / dim;
    let distinct: HashSet<Vec<u64>> = data
        .chunks_exact(dim)
        .map(|f| f.iter().map(|v| v.to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::TooFewDistinct {
            distinct: distinct.len(),
            k,
        });
    }

    let mut rng = rng::stream(opts.seed, streams::VQ);
    let mut centroids = kmeans_pp(&data, dim, k, &mut rng);
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        for (i, f) in data.chunks_exact(dim).enumerate() {
            let (j, d) = nearest_centroid(f, &centroids, dim);
            assign[i] = j;
            dist[i] = d;
        }
        history.push(dist.iter().sum::<f64>() / n as f64);

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, f) in data.chunks_exact(dim).enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * dim..(assign[i] + 1) * dim].iter_mut().zip(f) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        let mut taken = HashSet::new();
        for j in 0..k {
            let new: Vec<f64> = if counts[j] > 0 {
                sums[j * dim..(j + 1) * dim]
                    .iter()
                    .map(|s| s / counts[j] as f64)
                    .collect()
            } else {
                // reseed from the worst-served frame not already used
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("n >= k");
                taken.insert(far);
                dist[far] = 0.0;
                data[far * dim..(far + 1) * dim].to_vec()
            };
            shift = shift.max(sq_dist(&new, &centroids[j * dim..(j + 1) * dim]).sqrt());
            centroids[j * dim..(j + 1) * dim].copy_from_slice(&new);
        }
        if shift < opts.tolerance {
            break;
        }
    }
    for c in centroids.iter_mut() {
        *c = *c as f32 as f64;
    }
    Ok((
        VqCodebook::from_parts(centroids, k, dim, corpus_id.to_string(), iterations),
        history,
    ))
}

fn kmeans_pp(data: &[f64], dim: usize, k: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = data.chunks_exact(dim).map(|f| sq_dist(f, &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // never land on a zero-weight point through rounding
            if d2[idx] == 0.0 {
                idx = (0..n).max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a))).unwrap();
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        let c = data[pick * dim..(pick + 1) * dim].to_vec();
        for (w, f) in d2.iter_mut().zip(data.chunks_exact(dim)) {
            *w = w.min(sq_dist(f, &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Nearest-centroid id for every frame.
pub fn encode_vq(seq: &MelFrameSequence, book: &VqCodebook) -> Result<TokenSequence> {
    if seq.n_bins != book.dim() {
        return Err(Error::shape("encode_vq", &[seq.n_bins], &[book.dim()]));
    }
    let ids = (0..seq.n_frames())
        .map(|t| nearest_centroid(seq.frame(t), book.centroids(), book.dim()).0)
        .collect();
    TokenSequence::new(ids, book.k(), TokenSource::Vq)
}
