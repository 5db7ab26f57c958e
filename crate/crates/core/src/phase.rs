//! Instantaneous phase from the FFT-constructed analytic signal.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array3;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{BandSpec, Condition, EpochSet};

pub const MIN_PHASE_SAMPLES: usize = 64;

/// Phase in radians, trials × channels × samples, every value in (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTensor {
    pub(crate) data: Array3<f64>,
    pub(crate) fs: f64,
    pub(crate) band: BandSpec,
    pub(crate) condition: Condition,
    pub(crate) epoch_window: (f64, f64),
}

impl PhaseTensor {
    /// Wraps precomputed phases; values are folded into (−π, π].
    pub fn from_phases(
        mut data: Array3<f64>,
        fs: f64,
        band: BandSpec,
        condition: Condition,
        epoch_window: (f64, f64),
    ) -> Self {
        data.mapv_inplace(wrap_phase);
        Self {
            data,
            fs,
            band,
            condition,
            epoch_window,
        }
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn band(&self) -> &BandSpec {
        &self.band
    }

    pub fn condition(&self) -> &Condition {
        &self.condition
    }

    pub fn epoch_window(&self) -> (f64, f64) {
        self.epoch_window
    }

    pub fn n_trials(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Folds an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Computes analytic signals of equal-length real sequences.
pub struct AnalyticSignal {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl AnalyticSignal {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    /// `x + j·H{x}`: positive frequencies doubled, negative ones zeroed.
    pub fn transform(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.len);
        let n = self.len;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let positive_end = n.div_ceil(2);
        for v in &mut buf[1..positive_end] {
            *v *= 2.0;
        }
        for v in &mut buf[n / 2 + 1..] {
            *v = Complex64::new(0.0, 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        for v in &mut buf {
            *v *= scale;
        }
        buf
    }

    pub fn phase(&self, x: &[f64]) -> Vec<f64> {
        self.transform(x).into_iter().map(|z| wrap_phase(z.arg())).collect()
    }
}

/// Instantaneous phase of a single real sequence.
pub fn analytic_phase_1d(x: &[f64]) -> Vec<f64> {
    AnalyticSignal::new(x.len()).phase(x)
}

/// Phase of the analytic signal for every trial and channel.
pub fn analytic_phase(e: &EpochSet, band: &BandSpec) -> Result<PhaseTensor> {
    let (trials, channels, samples) = e.data().dim();
    if samples < MIN_PHASE_SAMPLES {
        return Err(Error::EmptyEpoch(samples));
    }
    let hilbert = AnalyticSignal::new(samples);
    let rows: Vec<Vec<f64>> = (0..trials * channels)
        .into_par_iter()
        .map(|i| {
            let row = e.data().slice(ndarray::s![i / channels, i % channels, ..]);
            let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            hilbert.phase(&x)
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array3::from_shape_vec((trials, channels, samples), flat).expect("shape preserved");
    Ok(PhaseTensor {
        data,
        fs: e.fs(),
        band: band.clone(),
        condition: e.condition().clone(),
        epoch_window: e.epoch_window(),
    })
}
