//! Windowed-sinc sample-rate conversion.
//!
//! The rate ratio is reduced to `up/down`; output sample `i` sits at input
//! position `i * down / up`, so its fractional part cycles through `up`
//! phases. Kernels for each phase are tabulated when there are few enough
//! of them.

use std::f64::consts::PI;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Zero crossings of the sinc on each side of the centre tap (at the
/// filter's cutoff), giving at least 64 taps.
const ZERO_CROSSINGS: usize = 32;
/// Cutoff as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.95;
const MAX_TABLE_PHASES: usize = 1024;

pub const MIN_SOURCE_RATE: u32 = 8000;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    let t = (u + 1.0) * 0.5;
    0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
}

struct Kernel {
    cutoff: f64,
    half: isize,
}

impl Kernel {
    fn weight(&self, x: f64) -> f64 {
        let span = self.half as f64;
        if x.abs() >= span {
            return 0.0;
        }
        self.cutoff * sinc(self.cutoff * x) * blackman(x / span)
    }

    /// Weights for input offsets `-half+1 ..= half` around `base` when the
    /// output lies `frac` samples after `base`.
    fn taps(&self, frac: f64, out: &mut Vec<f64>) {
        out.clear();
        for k in (-self.half + 1)..=self.half {
            out.push(self.weight(frac - k as f64));
        }
    }
}

/// Converts `buf` to `target_rate`. Equal rates return an exact copy.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if buf.sample_rate == target_rate {
        return Ok(buf.clone());
    }
    if buf.sample_rate < MIN_SOURCE_RATE {
        return Err(Error::Contract(format!(
            "source rate {} Hz below the supported minimum {MIN_SOURCE_RATE} Hz",
            buf.sample_rate
        )));
    }
    if target_rate == 0 {
        return Err(Error::Contract("target rate must be positive".into()));
    }
    let (src, dst) = (buf.sample_rate as u64, target_rate as u64);
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);
    let n_in = buf.samples.len() as u64;
    let n_out = ((n_in as u128 * dst as u128 + src as u128 / 2) / src as u128) as usize;

    let cutoff = ROLLOFF * (dst as f64 / src as f64).min(1.0);
    let half = (ZERO_CROSSINGS as f64 / cutoff).ceil() as isize;
    let kernel = Kernel { cutoff, half };

    let table: Option<Vec<Vec<f64>>> = (up as usize <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|p| {
                let mut t = Vec::new();
                kernel.taps(p as f64 / up as f64, &mut t);
                t
            })
            .collect()
    });

    let x = &buf.samples;
    let mut scratch = Vec::new();
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out as u64 {
        let num = i * down;
        let base = (num / up) as isize;
        let phase = (num % up) as usize;
        let taps: &[f64] = match &table {
            Some(t) => &t[phase],
            None => {
                kernel.taps(phase as f64 / up as f64, &mut scratch);
                &scratch
            }
        };
        let mut acc = 0.0;
        for (j, w) in taps.iter().enumerate() {
            let n = base - half + 1 + j as isize;
            if n >= 0 && (n as usize) < x.len() {
                acc += w * x[n as usize];
            }
        }
        out.push(acc);
    }
    Ok(AudioBuffer {
        samples: out,
        sample_rate: target_rate,
    })
}
