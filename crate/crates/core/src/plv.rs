//! Phase-locking value across trials.
//!
//! For channels `i`, `k` and sample `t`,
//! `PLV(t) = |Σₙ exp(j(φᵢ(t,n) − φₖ(t,n)))| / N`, then averaged over the
//! samples of the analysis window.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BandSpec, Condition};
use crate::phase::PhaseTensor;

pub const DEFAULT_EDGE_TRIM: f64 = 0.1;

/// Symmetric channels × channels PLV, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PlvMatrix {
    pub values: Array2<f64>,
    pub band: BandSpec,
    pub condition: Condition,
    pub n_trials: usize,
}

impl PlvMatrix {
    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[[i, k]]
    }
}

/// Time averaging of the per-sample PLV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlvWindow {
    /// Window in ms on the epoch's time axis.
    pub window_ms: (f64, f64),
    /// Fraction of epoch samples dropped at each end before averaging.
    pub edge_trim: f64,
}

impl PlvWindow {
    pub fn new(window_ms: (f64, f64), edge_trim: f64) -> Self {
        Self {
            window_ms,
            edge_trim,
        }
    }

    /// Sample range `[start, end)` of the window after edge trimming.
    pub fn sample_range(&self, epoch_window: (f64, f64), fs: f64, n_samples: usize) -> Result<(usize, usize)> {
        let (ws, we) = self.window_ms;
        let out_of_bounds = || Error::WindowOutOfBounds {
            start_ms: ws,
            end_ms: we,
        };
        if !(0.0..0.5).contains(&self.edge_trim) {
            return Err(Error::InvalidArgument(format!("edge trim {}", self.edge_trim)));
        }
        let start = ((ws - epoch_window.0) * fs / 1000.0).round();
        let end = ((we - epoch_window.0) * fs / 1000.0).round();
        if !(start >= 0.0 && end <= n_samples as f64 && end > start) {
            return Err(out_of_bounds());
        }
        let trim = (self.edge_trim * n_samples as f64).floor() as usize;
        let start = (start as usize).max(trim);
        let end = (end as usize).min(n_samples - trim);
        if end <= start {
            return Err(out_of_bounds());
        }
        Ok((start, end))
    }
}

/// Unit phasors laid out sample, then channel, then trial, with real and
/// imaginary parts in separate planes. One sample of every channel stays
/// cache resident while all pairs are visited.
struct Phasors {
    re: Vec<f64>,
    im: Vec<f64>,
    n_channels: usize,
    n_trials: usize,
}

impl Phasors {
    fn new(p: &PhaseTensor, start: usize, end: usize) -> Self {
        let (trials, channels, _) = p.data.dim();
        let block = channels * trials;
        let planes: Vec<(Vec<f64>, Vec<f64>)> = (start..end)
            .into_par_iter()
            .map(|t| {
                let mut re = Vec::with_capacity(block);
                let mut im = Vec::with_capacity(block);
                for c in 0..channels {
                    for n in 0..trials {
                        let (s, c) = p.data[[n, c, t]].sin_cos();
                        re.push(c);
                        im.push(s);
                    }
                }
                (re, im)
            })
            .collect();
        let (re, im): (Vec<Vec<f64>>, Vec<Vec<f64>>) = planes.into_iter().unzip();
        Self {
            re: re.concat(),
            im: im.concat(),
            n_channels: channels,
            n_trials: trials,
        }
    }

    fn n_samples(&self) -> usize {
        self.re.len() / (self.n_channels * self.n_trials).max(1)
    }

    /// `|Σₙ aₙ·conj(bₙ)| / N` at one sample, summed in four fixed lanes.
    #[inline]
    fn locking(&self, i: usize, k: usize, t: usize) -> f64 {
        let n = self.n_trials;
        let row = |c: usize| (t * self.n_channels + c) * n..(t * self.n_channels + c + 1) * n;
        let (ar, ai) = (&self.re[row(i)], &self.im[row(i)]);
        let (br, bi) = (&self.re[row(k)], &self.im[row(k)]);
        let mut sr = [0.0f64; 4];
        let mut si = [0.0f64; 4];
        let chunks = n / 4 * 4;
        for j in (0..chunks).step_by(4) {
            for l in 0..4 {
                let (xr, xi, yr, yi) = (ar[j + l], ai[j + l], br[j + l], bi[j + l]);
                sr[l] += xr * yr + xi * yi;
                si[l] += xi * yr - xr * yi;
            }
        }
        let mut re = (sr[0] + sr[1]) + (sr[2] + sr[3]);
        let mut im = (si[0] + si[1]) + (si[2] + si[3]);
        for j in chunks..n {
            re += ar[j] * br[j] + ai[j] * bi[j];
            im += ai[j] * br[j] - ar[j] * bi[j];
        }
        (re.hypot(im) / n as f64).min(1.0)
    }
}

/// Pairs handed to one worker; each worker sweeps time once.
const PAIR_CHUNK: usize = 64;

fn check_pair(p: &PhaseTensor, i: usize, k: usize) -> Result<()> {
    let count = p.n_channels();
    for index in [i, k] {
        if index >= count {
            return Err(Error::ChannelIndex { index, count });
        }
    }
    if i == k {
        return Err(Error::SameChannel(i));
    }
    if p.n_trials() < 2 {
        return Err(Error::TooFewTrials(p.n_trials()));
    }
    Ok(())
}

/// PLV between channels `i` and `k` at every sample.
pub fn plv_timeseries(p: &PhaseTensor, i: usize, k: usize) -> Result<Vec<f64>> {
    check_pair(p, i, k)?;
    let n = p.n_trials() as f64;
    let (a, b) = (p.data.index_axis(Axis(1), i), p.data.index_axis(Axis(1), k));
    Ok((0..p.n_samples())
        .map(|t| {
            let (mut re, mut im) = (0.0, 0.0);
            for trial in 0..p.n_trials() {
                let (s, c) = (a[[trial, t]] - b[[trial, t]]).sin_cos();
                re += c;
                im += s;
            }
            (re.hypot(im) / n).min(1.0)
        })
        .collect())
}

/// Window-averaged PLV for every unordered channel pair.
pub fn plv_matrix(p: &PhaseTensor, window: &PlvWindow) -> Result<PlvMatrix> {
    if p.n_trials() < 2 {
        return Err(Error::TooFewTrials(p.n_trials()));
    }
    let (start, end) = window.sample_range(p.epoch_window, p.fs, p.n_samples())?;
    let phasors = Phasors::new(p, start, end);
    let channels = p.n_channels();
    let pairs: Vec<(usize, usize)> = (0..channels)
        .flat_map(|i| (i + 1..channels).map(move |k| (i, k)))
        .collect();
    let len = (end - start) as f64;
    let entries: Vec<f64> = pairs
        .par_chunks(PAIR_CHUNK)
        .flat_map_iter(|chunk| {
            let mut sums = vec![0.0f64; chunk.len()];
            for t in 0..phasors.n_samples() {
                for (acc, &(i, k)) in sums.iter_mut().zip(chunk) {
                    *acc += phasors.locking(i, k, t);
                }
            }
            sums.into_iter().map(move |s| s / len)
        })
        .collect();
    let mut values = Array2::<f64>::eye(channels);
    for (&(i, k), &v) in pairs.iter().zip(&entries) {
        values[[i, k]] = v;
        values[[k, i]] = v;
    }
    Ok(PlvMatrix {
        values,
        band: p.band.clone(),
        condition: p.condition.clone(),
        n_trials: p.n_trials(),
    })
}
