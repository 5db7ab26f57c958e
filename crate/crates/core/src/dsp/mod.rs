//! Preprocessing chain: resampling, band-pass and notch filtering, common
//! average reference, epoching with baseline correction, and peak-to-peak
//! trial rejection.
//!
//! Every operation is a pure function of its inputs. Channels are processed
//! independently (in parallel where a rayon pool is active) and each channel's
//! arithmetic is fixed, so results do not depend on the worker count.

pub mod filter;
pub mod resample;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BandSpec, Condition, EpochSet, Paradigm, Recording};

pub use filter::{butter_bandpass, iir_notch, Biquad, Sos};
pub use resample::Resampler;

/// Default band-pass order (poles per pass; forward-backward doubles it).
pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_NOTCH_HZ: f64 = 60.0;
pub const DEFAULT_NOTCH_BANDWIDTH_HZ: f64 = 2.0;
pub const DEFAULT_ARTIFACT_PTP_UV: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Bandpass,
    Notch,
}

/// Filter parameters. `edges` holds `(lo, hi)` for a band-pass and
/// `(center, bandwidth)` for a notch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub edges: (f64, f64),
    pub order: usize,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn bandpass(lo: f64, hi: f64) -> Self {
        Self {
            kind: FilterKind::Bandpass,
            edges: (lo, hi),
            order: DEFAULT_ORDER,
            zero_phase: true,
        }
    }

    pub fn notch(center: f64, bandwidth: f64) -> Self {
        Self {
            kind: FilterKind::Notch,
            edges: (center, bandwidth),
            order: 2,
            zero_phase: true,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn causal(mut self) -> Self {
        self.zero_phase = false;
        self
    }

    /// Designs the section cascade for sampling rate `fs`.
    pub fn design(&self, fs: f64) -> Result<Sos> {
        match self.kind {
            FilterKind::Bandpass => butter_bandpass(self.order, self.edges.0, self.edges.1, fs),
            FilterKind::Notch => {
                if self.order != 2 {
                    return Err(Error::InvalidFilter(format!(
                        "notch order must be 2, got {}",
                        self.order
                    )));
                }
                iir_notch(self.edges.0, self.edges.1, fs)
            }
        }
    }

}

/// Applies `f` to every row of a channels × samples matrix.
pub(crate) fn map_rows<F>(data: &Array2<f32>, f: F) -> Array2<f32>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let rows: Vec<Vec<f64>> = (0..data.nrows())
        .into_par_iter()
        .map(|i| f(&row_f64(data.row(i))))
        .collect();
    rows_to_array(rows)
}

/// Filters every row with `spec`, several rows per task.
fn filter_rows(rows: &[ArrayView1<'_, f32>], spec: &FilterSpec, sos: &Sos) -> Vec<f64> {
    let chunks: Vec<Vec<Vec<f64>>> = rows
        .par_chunks(FILTER_BATCH)
        .map(|chunk| {
            let x: Vec<Vec<f64>> = chunk.iter().map(|r| row_f64(r.view())).collect();
            if spec.zero_phase {
                let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
                sos.filtfilt_rows(&refs)
            } else {
                x.iter().map(|r| sos.filter(r)).collect()
            }
        })
        .collect();
    chunks.into_iter().flatten().flatten().collect()
}

const FILTER_BATCH: usize = 8;

fn filter_matrix(data: &Array2<f32>, spec: &FilterSpec, sos: &Sos) -> Array2<f32> {
    let rows: Vec<ArrayView1<'_, f32>> = data.rows().into_iter().collect();
    let flat = filter_rows(&rows, spec, sos).into_iter().map(|v| v as f32).collect();
    Array2::from_shape_vec(data.dim(), flat).expect("shape preserved")
}

pub(crate) fn row_f64(row: ArrayView1<'_, f32>) -> Vec<f64> {
    row.iter().map(|&v| v as f64).collect()
}

fn rows_to_array(rows: Vec<Vec<f64>>) -> Array2<f32> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f32> = rows.into_iter().flatten().map(|v| v as f32).collect();
    Array2::from_shape_vec((n_rows, n_cols), flat).expect("rows share one length")
}

/// Decimates to `target_fs` through the anti-alias polyphase resampler.
pub fn resample(r: &Recording, target_fs: f64) -> Result<Recording> {
    if !(target_fs > 0.0) {
        return Err(Error::InvalidArgument(format!("target rate {target_fs} Hz")));
    }
    if target_fs > r.fs() {
        return Err(Error::UpsamplingUnsupported {
            from: r.fs(),
            to: target_fs,
        });
    }
    if target_fs == r.fs() {
        return Ok(r.clone());
    }
    let resampler = Resampler::new(r.fs(), target_fs)?;
    let data = map_rows(r.data(), |x| resampler.process(x));
    Ok(r.with_data(target_fs, data))
}

/// Band-pass between the band's edges using the order and phase mode of `spec`.
pub fn bandpass(r: &Recording, band: &BandSpec, spec: &FilterSpec) -> Result<Recording> {
    let nyquist = r.fs() / 2.0;
    if band.hi >= nyquist {
        return Err(Error::BandAboveNyquist {
            edge: band.hi,
            nyquist,
        });
    }
    let spec = FilterSpec {
        kind: FilterKind::Bandpass,
        edges: (band.lo, band.hi),
        ..*spec
    };
    let sos = spec.design(r.fs())?;
    Ok(r.with_data(r.fs(), filter_matrix(r.data(), &spec, &sos)))
}

/// Zero-phase second-order notch.
pub fn notch(r: &Recording, center: f64, bandwidth: f64) -> Result<Recording> {
    let spec = FilterSpec::notch(center, bandwidth);
    let sos = spec.design(r.fs())?;
    Ok(r.with_data(r.fs(), filter_matrix(r.data(), &spec, &sos)))
}

/// Subtracts the across-channel mean at every sample.
pub fn common_average_reference(r: &Recording) -> Result<Recording> {
    if r.montage().count() < 2 {
        return Err(Error::InvalidArgument(
            "common average reference needs at least 2 channels".into(),
        ));
    }
    Ok(r.with_data(r.fs(), car_matrix(r.data())))
}

pub(crate) fn car_matrix(data: &Array2<f32>) -> Array2<f32> {
    let n = data.nrows() as f64;
    let mut out = data.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
        col.mapv_inplace(|v| (v as f64 - mean) as f32);
    }
    out
}

/// Labels attached to epochs cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLabels {
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
}

fn ms_to_samples(ms: f64, fs: f64) -> isize {
    (ms * fs / 1000.0).round() as isize
}

/// Cuts `window` (ms, relative to each onset) around every onset and
/// subtracts each channel's mean over `baseline`.
pub fn extract_epochs(
    r: &Recording,
    onsets: &[usize],
    window: (f64, f64),
    baseline: (f64, f64),
    labels: &EpochLabels,
) -> Result<EpochSet> {
    let fs = r.fs();
    if !(window.1 > window.0) || !(baseline.1 > baseline.0) {
        return Err(Error::InvalidArgument(format!(
            "epoch window {window:?} / baseline {baseline:?}"
        )));
    }
    let w0 = ms_to_samples(window.0, fs);
    let len = ms_to_samples(window.1 - window.0, fs) as usize;
    let b0 = ms_to_samples(baseline.0, fs);
    let b_len = ms_to_samples(baseline.1 - baseline.0, fs).max(1) as usize;
    let total = r.n_samples() as isize;
    let n_ch = r.montage().count();

    let mut out = Array3::<f32>::zeros((onsets.len(), n_ch, len));
    for (trial, &onset) in onsets.iter().enumerate() {
        let start = onset as isize + w0;
        let b_start = onset as isize + b0;
        if start < 0
            || start + len as isize > total
            || b_start < 0
            || b_start + b_len as isize > total
        {
            return Err(Error::EpochOutOfBounds(trial));
        }
        let (start, b_start) = (start as usize, b_start as usize);
        for ch in 0..n_ch {
            let row = r.data().row(ch);
            let mean = row
                .slice(ndarray::s![b_start..b_start + b_len])
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>()
                / b_len as f64;
            for (dst, &src) in out
                .slice_mut(ndarray::s![trial, ch, ..])
                .iter_mut()
                .zip(row.slice(ndarray::s![start..start + len]).iter())
            {
                *dst = (src as f64 - mean) as f32;
            }
        }
    }
    Ok(EpochSet::new(
        r.montage().clone(),
        fs,
        labels.subject.clone(),
        labels.paradigm,
        labels.condition.clone(),
        window,
        out,
    ))
}

/// Largest peak-to-peak amplitude over all channels of one trial.
pub fn trial_peak_to_peak(e: &EpochSet, trial: usize) -> f64 {
    e.data()
        .index_axis(Axis(0), trial)
        .axis_iter(Axis(0))
        .map(|ch| {
            let (lo, hi) = ch
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            (hi - lo) as f64
        })
        .fold(0.0, f64::max)
}

/// Drops trials whose peak-to-peak amplitude on any channel exceeds `limit`.
/// Returns the kept trials (order preserved) and the rejected indices.
pub fn reject_artifacts(e: &EpochSet, peak_to_peak_limit: f64) -> Result<(EpochSet, Vec<usize>)> {
    if !(peak_to_peak_limit > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "peak-to-peak limit {peak_to_peak_limit} µV"
        )));
    }
    let (kept, rejected): (Vec<usize>, Vec<usize>) =
        (0..e.n_trials()).partition(|&t| trial_peak_to_peak(e, t) <= peak_to_peak_limit);
    if kept.is_empty() {
        return Err(Error::AllTrialsRejected(e.n_trials()));
    }
    let data = e.data().select(Axis(0), &kept);
    Ok((e.with_data(e.epoch_window(), data), rejected))
}

/// Keeps only the listed trials.
pub fn select_trials(e: &EpochSet, trials: &[usize]) -> EpochSet {
    e.with_data(e.epoch_window(), e.data().select(Axis(0), trials))
}

/// Filters every channel of every trial independently.
pub fn filter_epochs(e: &EpochSet, spec: &FilterSpec) -> Result<EpochSet> {
    if spec.kind == FilterKind::Bandpass && spec.edges.1 >= e.fs() / 2.0 {
        return Err(Error::BandAboveNyquist {
            edge: spec.edges.1,
            nyquist: e.fs() / 2.0,
        });
    }
    let sos = spec.design(e.fs())?;
    let (trials, channels, samples) = e.data().dim();
    let rows: Vec<ArrayView1<'_, f32>> = (0..trials * channels)
        .map(|i| e.data().slice(ndarray::s![i / channels, i % channels, ..]))
        .collect();
    let flat: Vec<f32> = filter_rows(&rows, spec, &sos).into_iter().map(|v| v as f32).collect();
    let data = Array3::from_shape_vec((trials, channels, samples), flat).expect("shape preserved");
    Ok(e.with_data(e.epoch_window(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Montage;
    use std::f64::consts::PI;

    fn sine_recording(freq: f64, fs: f64, n: usize, channels: usize) -> Recording {
        let labels: Vec<String> = (0..channels).map(|i| format!("C{i}")).collect();
        let m = Montage::new(&labels).unwrap();
        let data = Array2::from_shape_fn((channels, n), |(_, t)| {
            (2.0 * PI * freq * t as f64 / fs).sin() as f32
        });
        Recording::new(m, fs, data).unwrap()
    }

    fn labels() -> EpochLabels {
        EpochLabels {
            subject: "S01".into(),
            paradigm: Paradigm::ImaginedSpeech,
            condition: Condition::rest(),
        }
    }

    fn interior_peak(x: &[f32]) -> f64 {
        let n = x.len();
        x[n / 10..n - n / 10].iter().fold(0.0f64, |a, &v| a.max(v.abs() as f64))
    }

    #[test]
    fn identity_resample_is_bitwise_copy() {
        let r = sine_recording(10.0, 256.0, 300, 2);
        assert_eq!(resample(&r, 256.0).unwrap(), r);
    }

    #[test]
    fn resample_rejects_upsampling() {
        let r = sine_recording(10.0, 256.0, 300, 1);
        assert!(matches!(resample(&r, 512.0), Err(Error::UpsamplingUnsupported { .. })));
    }

    #[test]
    fn zero_in_zero_out() {
        let r = sine_recording(0.0, 256.0, 512, 3);
        let band = BandSpec::beta();
        let y = bandpass(&r, &band, &FilterSpec::bandpass(13.0, 30.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let y = notch(&r, 60.0, 2.0).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_passes_low_frequencies() {
        let r = sine_recording(10.0, 256.0, 1024, 1);
        let y = notch(&r, 60.0, 2.0).unwrap();
        let peak = interior_peak(y.data().row(0).as_slice().unwrap());
        assert!((peak - 1.0).abs() < 0.05, "{peak}");
    }

    #[test]
    fn band_above_nyquist_is_rejected() {
        let r = sine_recording(10.0, 50.0, 256, 1);
        assert!(matches!(
            bandpass(&r, &BandSpec::beta(), &FilterSpec::bandpass(13.0, 30.0)),
            Err(Error::BandAboveNyquist { .. })
        ));
        assert!(matches!(notch(&r, 60.0, 2.0), Err(Error::BandAboveNyquist { .. })));
    }

    #[test]
    fn car_two_constant_channels() {
        let m = Montage::new(&["A", "B"]).unwrap();
        let data = ndarray::array![[1.0f32, 1.0], [3.0, 3.0]];
        let r = Recording::new(m, 100.0, data).unwrap();
        let y = common_average_reference(&r).unwrap();
        assert_eq!(y.data(), &ndarray::array![[-1.0f32, -1.0], [1.0, 1.0]]);
    }

    #[test]
    fn car_needs_two_channels() {
        let r = sine_recording(1.0, 100.0, 10, 1);
        assert!(common_average_reference(&r).is_err());
    }

    #[test]
    fn constant_channel_baselines_to_zero() {
        let m = Montage::new(&["A", "B"]).unwrap();
        let r = Recording::new(m, 256.0, Array2::from_elem((2, 1024), 5.0f32)).unwrap();
        let e = extract_epochs(&r, &[200, 400], (0.0, 2000.0), (-500.0, 0.0), &labels()).unwrap();
        assert_eq!(e.data().dim(), (2, 2, 512));
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn onset_near_start_is_out_of_bounds() {
        let r = sine_recording(10.0, 256.0, 2048, 2);
        match extract_epochs(&r, &[500, 100], (0.0, 2000.0), (-500.0, 0.0), &labels()) {
            Err(Error::EpochOutOfBounds(1)) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            extract_epochs(&r, &[1600], (0.0, 2000.0), (-500.0, 0.0), &labels()),
            Err(Error::EpochOutOfBounds(0))
        ));
    }

    #[test]
    fn epoch_is_sine_segment_minus_baseline_mean() {
        let fs = 256.0;
        let f = 3.0;
        let r = sine_recording(f, fs, 2048, 1);
        let onset = 300;
        let e = extract_epochs(&r, &[onset], (0.0, 2000.0), (-500.0, 0.0), &labels()).unwrap();
        // Baseline mean of the analytic sine over samples [onset-128, onset).
        let s = |t: usize| (2.0 * PI * f * t as f64 / fs).sin();
        let mean: f64 = (onset - 128..onset).map(s).sum::<f64>() / 128.0;
        for j in 0..512 {
            let expected = s(onset + j) - mean;
            approx::assert_abs_diff_eq!(e.data()[[0, 0, j]] as f64, expected, epsilon = 1e-6);
        }
    }

    fn quiet_set(trials: usize) -> EpochSet {
        let m = Montage::new(&["A", "B"]).unwrap();
        let data = Array3::from_shape_fn((trials, 2, 64), |(t, c, s)| {
            ((t + c + s) % 7) as f32 * 3.0
        });
        EpochSet::new(
            m,
            32.0,
            "S01",
            Paradigm::VisualImagery,
            Condition::rest(),
            (0.0, 2000.0),
            data,
        )
    }

    #[test]
    fn quiet_trials_survive() {
        let e = quiet_set(5);
        let (kept, rejected) = reject_artifacts(&e, 100.0).unwrap();
        assert!(rejected.is_empty());
        assert_eq!(kept, e);
    }

    #[test]
    fn spiky_trial_is_rejected() {
        let mut e = quiet_set(5);
        e.data[[3, 1, 10]] = 500.0;
        let (kept, rejected) = reject_artifacts(&e, 100.0).unwrap();
        assert_eq!(rejected, vec![3]);
        assert_eq!(kept.n_trials(), 4);
        assert_eq!(kept.data().index_axis(Axis(0), 3), e.data().index_axis(Axis(0), 4));
    }

    #[test]
    fn everything_rejected_is_an_error() {
        let e = quiet_set(3);
        assert!(matches!(reject_artifacts(&e, 1.0), Err(Error::AllTrialsRejected(3))));
        assert!(reject_artifacts(&e, 0.0).is_err());
    }

    #[test]
    fn causal_and_zero_phase_differ() {
        let r = sine_recording(10.0, 256.0, 512, 1);
        let band = BandSpec::alpha();
        let zp = bandpass(&r, &band, &FilterSpec::bandpass(8.0, 13.0)).unwrap();
        let causal = bandpass(&r, &band, &FilterSpec::bandpass(8.0, 13.0).causal()).unwrap();
        assert_ne!(zp.data(), causal.data());
    }
}
