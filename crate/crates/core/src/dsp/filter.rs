//! IIR design and application as cascades of second-order sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

const LANES: usize = 4;

/// One biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Response at `omega` radians per sample.
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (self.a[0] + z1 * self.a[1] + z2 * self.a[2])
    }

    /// Transposed direct form II state after settling on a unit step.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Number of poles of the cascade.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Complex response at `freq` Hz for sampling rate `fs`, single pass.
    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let omega = 2.0 * PI * freq / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    /// Initial conditions for a unit step, per section.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let zi = s.step_state();
                let out = [zi[0] * scale, zi[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Single forward pass in place, starting from `state`.
    fn run(&self, x: &mut [f64], state: &mut [[f64; 2]]) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let (mut z1, mut z2) = (z[0], z[1]);
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
            *z = [z1, z2];
        }
    }

    /// [`Sos::run`] on `LANES` interleaved signals. Each lane performs exactly
    /// the scalar arithmetic, so results match lane by lane.
    fn run_lanes(&self, x: &mut [[f64; LANES]], state: &mut [[[f64; 2]; LANES]]) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let mut z1: [f64; LANES] = std::array::from_fn(|l| z[l][0]);
            let mut z2: [f64; LANES] = std::array::from_fn(|l| z[l][1]);
            for v in x.iter_mut() {
                for l in 0..LANES {
                    let xin = v[l];
                    let y = b0 * xin + z1[l];
                    z1[l] = b1 * xin - a1 * y + z2[l];
                    z2[l] = b2 * xin - a2 * y;
                    v[l] = y;
                }
            }
            for l in 0..LANES {
                z[l] = [z1[l], z2[l]];
            }
        }
    }

    /// [`Sos::filtfilt`] of several equal-length rows, processed a few at a
    /// time so that independent recursions overlap. Output is bit-identical
    /// to filtering each row alone.
    pub fn filtfilt_rows(&self, rows: &[&[f64]]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(LANES) {
            let n = chunk[0].len();
            assert!(chunk.iter().all(|r| r.len() == n), "rows must share one length");
            if n == 0 {
                out.extend(chunk.iter().map(|_| Vec::new()));
                continue;
            }
            let pad = (3 * self.order()).min(n - 1);
            let mut ext = vec![[0.0f64; LANES]; n + 2 * pad];
            for (l, x) in chunk.iter().enumerate() {
                let (first, last) = (x[0], x[n - 1]);
                for (j, i) in (1..=pad).rev().enumerate() {
                    ext[j][l] = 2.0 * first - x[i];
                }
                for (j, &v) in x.iter().enumerate() {
                    ext[pad + j][l] = v;
                }
                for (j, i) in (1..=pad).enumerate() {
                    ext[pad + n + j][l] = 2.0 * last - x[n - 1 - i];
                }
            }
            let zi = self.step_states();
            let seeded = |x0: &[f64; LANES]| -> Vec<[[f64; 2]; LANES]> {
                zi.iter()
                    .map(|z| std::array::from_fn(|l| [z[0] * x0[l], z[1] * x0[l]]))
                    .collect()
            };
            let mut state = seeded(&ext[0]);
            self.run_lanes(&mut ext, &mut state);
            ext.reverse();
            let mut state = seeded(&ext[0]);
            self.run_lanes(&mut ext, &mut state);
            ext.reverse();
            for l in 0..chunk.len() {
                out.push(ext[pad..pad + n].iter().map(|v| v[l]).collect());
            }
        }
        out
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut state = vec![[0.0; 2]; self.sections.len()];
        self.run(&mut y, &mut state);
        y
    }

    /// Forward-backward filtering with odd reflection padding of
    /// `3 × order` samples at each end and step-settled initial state.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * self.order()).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let zi = self.step_states();
        let seeded = |x0: f64| -> Vec<[f64; 2]> { zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect() };

        let mut state = seeded(ext[0]);
        self.run(&mut ext, &mut state);
        ext.reverse();
        let mut state = seeded(ext[0]);
        self.run(&mut ext, &mut state);
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}

/// Digital Butterworth band-pass of `order` poles (even, ≥ 2) between `lo`
/// and `hi` Hz, with unit gain at the warped geometric center.
pub fn butter_bandpass(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Sos> {
    if order < 2 || !order.is_multiple_of(2) {
        return Err(Error::InvalidFilter(format!(
            "band-pass order must be even and at least 2, got {order}"
        )));
    }
    let nyquist = fs / 2.0;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::InvalidFilter(format!("band edges [{lo}, {hi}] Hz")));
    }
    if hi >= nyquist {
        return Err(Error::BandAboveNyquist { edge: hi, nyquist });
    }

    // Pre-warped analog edges.
    let fs2 = 2.0 * fs;
    let w1 = fs2 * (PI * lo / fs).tan();
    let w2 = fs2 * (PI * hi / fs).tan();
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let n = order / 2;
    let mut pole_pairs: Vec<(Complex64, Complex64)> = Vec::with_capacity(n);
    for k in 0..n {
        let p = Complex64::from_polar(1.0, PI * (2 * k + n + 1) as f64 / (2 * n) as f64);
        if p.im < -1e-12 {
            continue;
        }
        let half = p * (bw / 2.0);
        let disc = (half * half - w0_sq).sqrt();
        let (s1, s2) = (half + disc, half - disc);
        if p.im.abs() <= 1e-12 {
            pole_pairs.push((s1, s2));
        } else {
            pole_pairs.push((s1, s1.conj()));
            pole_pairs.push((s2, s2.conj()));
        }
    }

    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let omega0 = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let sections = pole_pairs
        .into_iter()
        .map(|(s1, s2)| {
            let (z1, z2) = (bilinear(s1), bilinear(s2));
            let a = [1.0, -(z1 + z2).re, (z1 * z2).re];
            let mut section = Biquad { b: [1.0, 0.0, -1.0], a };
            let g = 1.0 / section.response(omega0).norm();
            section.b = [g, 0.0, -g];
            section
        })
        .collect();
    Ok(Sos { sections })
}

/// Second-order notch at `center` Hz with -3 dB width `bandwidth` Hz.
pub fn iir_notch(center: f64, bandwidth: f64, fs: f64) -> Result<Sos> {
    let nyquist = fs / 2.0;
    if !(center > 0.0 && bandwidth > 0.0) {
        return Err(Error::InvalidFilter(format!(
            "notch center {center} Hz, bandwidth {bandwidth} Hz"
        )));
    }
    if center + bandwidth / 2.0 >= nyquist {
        return Err(Error::BandAboveNyquist {
            edge: center + bandwidth / 2.0,
            nyquist,
        });
    }
    let w0 = 2.0 * PI * center / fs;
    let beta = (PI * bandwidth / fs).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Ok(Sos {
        sections: vec![Biquad {
            b: [gain, -2.0 * gain * c, gain],
            a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0],
        }],
    })
}
