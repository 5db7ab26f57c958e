//! Helpers shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use eeg_plv::dsp::{filter_epochs, FilterSpec};
use eeg_plv::synth::{CouplingTarget, SynthParams, SynthSpec};
use eeg_plv::*;

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("E{i}")).collect()
}

/// One subject, one paradigm, `n` generic channels, no coupling.
pub fn small_spec(n_channels: usize, n_trials: usize, seed: u64) -> SynthSpec {
    let montage = Montage::new(&labels(n_channels)).unwrap();
    SynthSpec::new(
        SynthParams {
            n_subjects: 1,
            n_trials,
            paradigms: vec![Paradigm::ImaginedSpeech],
            seed,
            ..SynthParams::default()
        },
        montage,
        vec![RegionSpec::whole_brain()],
        BandSpec::canonical(),
    )
}

pub fn couple(spec: SynthSpec, channels: &[&str], band: &str, strength: f64) -> SynthSpec {
    spec.with_coupling(
        CouplingTarget::Channels {
            channels: channels.iter().map(|s| s.to_string()).collect(),
        },
        band,
        strength,
    )
}

/// Band-filters a synthetic set and returns its PLV over the analysis epoch.
pub fn band_plv(e: &EpochSet, band: &BandSpec, epoch_ms: f64) -> PlvMatrix {
    let filtered = filter_epochs(e, &FilterSpec::bandpass(band.lo, band.hi)).unwrap();
    let phase = analytic_phase(&filtered, band).unwrap();
    plv_matrix(&phase, &PlvWindow::new((0.0, epoch_ms), 0.1)).unwrap()
}

pub fn rest_set(sets: &[EpochSet]) -> &EpochSet {
    sets.iter().find(|e| e.condition().is_rest()).unwrap()
}

/// Per-subject matrices with `base + N(0, sigma)` entries; imagery entries
/// inside `planted` get `shift` added.
pub fn noisy_collection(
    montage: &Montage,
    band: &BandSpec,
    n_subjects: usize,
    base: f64,
    sigma: f64,
    planted: &[usize],
    shift: f64,
    seed: u64,
) -> PlvCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = montage.count();
    let mut out = PlvCollection::new();
    for s in 0..n_subjects {
        for condition in [Condition::imagery(), Condition::rest()] {
            let mut values = Array2::eye(n);
            for i in 0..n {
                for k in i + 1..n {
                    let mut v = base + sigma * rng.sample::<f64, _>(StandardNormal);
                    if condition == Condition::imagery() && planted.contains(&i) && planted.contains(&k) {
                        v += shift;
                    }
                    values[[i, k]] = v;
                    values[[k, i]] = v;
                }
            }
            out.insert(
                MatrixKey {
                    subject: format!("S{:02}", s + 1),
                    paradigm: Paradigm::ImaginedSpeech,
                    condition: condition.clone(),
                    band: band.name.clone(),
                },
                PlvMatrix {
                    values,
                    band: band.clone(),
                    condition,
                    n_trials: 88,
                },
            );
        }
    }
    out
}

/// Upper-tail probability of the mean resultant length of `n` uniform
/// angles (Rayleigh test with the second-order correction).
pub fn rayleigh_sf(r: f64, n: usize) -> f64 {
    let n = n as f64;
    let z = n * r * r;
    let corr = 1.0 + (2.0 * z - z * z) / (4.0 * n)
        - (24.0 * z - 132.0 * z * z + 76.0 * z.powi(3) - 9.0 * z.powi(4)) / (288.0 * n * n);
    ((-z).exp() * corr).clamp(0.0, 1.0)
}
