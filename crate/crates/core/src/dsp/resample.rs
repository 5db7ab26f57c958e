//! Rational-ratio polyphase decimation with a Kaiser-windowed sinc prototype.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const KAISER_BETA: f64 = 8.6;
/// Prototype length per unit of `max(up, down)`.
pub const TAPS_PER_PHASE: usize = 64;
const MAX_FACTOR: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resampler from `from_fs` to `to_fs` (`to_fs ≤ from_fs`).
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half_len: usize,
    /// `banks[p][r]` is prototype tap `p + r·up`, pre-scaled by `up`.
    banks: Vec<Vec<f64>>,
    cutoff_hz: f64,
}

impl Resampler {
    pub fn new(from_fs: f64, to_fs: f64) -> Result<Self> {
        if !(to_fs > 0.0 && from_fs > 0.0) {
            return Err(Error::UnsupportedRatio {
                from: from_fs,
                to: to_fs,
            });
        }
        if to_fs > from_fs {
            return Err(Error::UpsamplingUnsupported {
                from: from_fs,
                to: to_fs,
            });
        }
        // Rates are matched on a millihertz grid.
        let a = (from_fs * 1000.0).round();
        let b = (to_fs * 1000.0).round();
        if (a / 1000.0 - from_fs).abs() > 1e-9 || (b / 1000.0 - to_fs).abs() > 1e-9 {
            return Err(Error::UnsupportedRatio {
                from: from_fs,
                to: to_fs,
            });
        }
        let g = gcd(a as u64, b as u64);
        let up = (b as u64 / g) as usize;
        let down = (a as u64 / g) as usize;
        if up.max(down) > MAX_FACTOR {
            return Err(Error::UnsupportedRatio {
                from: from_fs,
                to: to_fs,
            });
        }

        let span = TAPS_PER_PHASE * up.max(down);
        let half_len = span / 2;
        let len = 2 * half_len + 1;
        let fs_up = from_fs * up as f64;
        // Kaiser estimate of the transition width for this length and beta;
        // the stopband is made to begin at the output Nyquist frequency.
        let atten_db = KAISER_BETA / 0.1102 + 8.7;
        let transition_hz = (atten_db - 7.95) / (2.285 * 2.0 * PI * (len - 1) as f64) * fs_up;
        let cutoff_hz = to_fs / 2.0 - transition_hz / 2.0;
        let fc = cutoff_hz / fs_up;

        let window = kaiser(len, KAISER_BETA);
        let taps: Vec<f64> = (0..len)
            .map(|n| {
                let t = n as f64 - half_len as f64;
                2.0 * fc * sinc(2.0 * fc * t) * window[n] * up as f64
            })
            .collect();
        let banks = (0..up)
            .map(|p| taps.iter().skip(p).step_by(up).copied().collect())
            .collect();
        Ok(Self {
            up,
            down,
            half_len,
            banks,
            cutoff_hz,
        })
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    /// Passband edge of the anti-alias prototype, in Hz.
    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as isize;
        (0..self.output_len(x.len()))
            .map(|m| {
                let u = m * self.down + self.half_len;
                let phase = u % self.up;
                let base = (u / self.up) as isize;
                let bank = &self.banks[phase];
                // Taps r with base - r outside [0, n) see zero padding.
                let r_lo = (base - n + 1).max(0) as usize;
                let r_hi = ((base + 1) as usize).min(bank.len());
                let mut acc = 0.0;
                for r in r_lo..r_hi {
                    acc += bank[r] * x[(base - r as isize) as usize];
                }
                acc
            })
            .collect()
    }
}
