//! Synthetic epoched cohorts with controllable phase coupling.
//!
//! Every channel carries one band-limited noise component per band plus
//! broadband white noise. Channels in a coupling group for a band mix a
//! shared band-limited oscillator `s` into that band's component:
//! `c·s + (1 − c)·nᵢ`, where `nᵢ` is the channel's own band noise. With
//! `c = 1` (and no other noise) the channels carry identical phase; with
//! `c = 0` they are independent.
//!
//! Band-limited signals are white Gaussian noise passed through the same
//! zero-phase Butterworth band-pass used by the preprocessing chain and
//! scaled to unit RMS.

pub mod rng;

use std::f64::consts::PI;

use ndarray::Array3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{butter_bandpass, Sos};
use crate::error::{Error, Result};
use crate::model::{normalize_label, resolve_region, BandSpec, Condition, EpochSet, Montage, Paradigm, RegionSpec};
use rng::keyed_rng;

/// Channels that share one oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingTarget {
    Channels { channels: Vec<String> },
    Region { region: String },
    RegionPair { a: String, b: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub target: CouplingTarget,
    pub band: String,
    pub strength: f64,
    pub condition: Condition,
    /// Delay of every channel after the first, relative to the first.
    #[serde(default)]
    pub lag_ms: f64,
}

/// Scalar generator settings (the `[synth]` config table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_subjects: usize,
    pub n_trials: usize,
    pub fs: f64,
    /// Analysis epoch length in ms; trials start at 0 ms.
    pub epoch_ms: f64,
    /// Extra signal generated before 0 ms and after `epoch_ms`.
    pub pad_ms: f64,
    pub band_amplitude_uv: f64,
    pub noise_sigma_uv: f64,
    pub line_noise_uv: f64,
    pub filter_order: usize,
    pub paradigms: Vec<Paradigm>,
    pub seed: u64,
    pub coupling: Vec<Coupling>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_subjects: 16,
            n_trials: 88,
            fs: 256.0,
            epoch_ms: 2000.0,
            pad_ms: 1000.0,
            band_amplitude_uv: 5.0,
            noise_sigma_uv: 1.0,
            line_noise_uv: 0.0,
            filter_order: 4,
            paradigms: Paradigm::ALL.to_vec(),
            seed: 0,
            coupling: Vec::new(),
        }
    }
}

/// Full generator input: settings plus the montage, regions and bands they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub params: SynthParams,
    pub montage: Montage,
    pub regions: Vec<RegionSpec>,
    pub bands: Vec<BandSpec>,
}

impl SynthSpec {
    pub fn new(params: SynthParams, montage: Montage, regions: Vec<RegionSpec>, bands: Vec<BandSpec>) -> Self {
        Self {
            params,
            montage,
            regions,
            bands,
        }
    }

    /// 16 subjects, 88 trials, bundled montage, regions and bands, no coupling.
    pub fn with_defaults(seed: u64) -> Self {
        Self::new(
            SynthParams {
                seed,
                ..SynthParams::default()
            },
            Montage::canonical(),
            RegionSpec::canonical(),
            BandSpec::canonical(),
        )
    }

    /// Adds the same coupling to both conditions.
    pub fn with_coupling(mut self, target: CouplingTarget, band: &str, strength: f64) -> Self {
        for condition in [Condition::rest(), Condition::imagery()] {
            self.params.coupling.push(Coupling {
                target: target.clone(),
                band: band.into(),
                strength,
                condition,
                lag_ms: 0.0,
            });
        }
        self
    }

    pub fn subject_ids(&self) -> Vec<String> {
        let width = self.params.n_subjects.to_string().len().max(2);
        (1..=self.params.n_subjects).map(|i| format!("S{i:0width$}")).collect()
    }

    fn samples(&self) -> usize {
        ((self.params.epoch_ms + 2.0 * self.params.pad_ms) * self.params.fs / 1000.0).round() as usize
    }

    fn resolve_target(&self, target: &CouplingTarget) -> Result<Vec<usize>> {
        let region = |name: &str| -> Result<Vec<usize>> {
            let spec = self
                .regions
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown region `{name}`")))?;
            resolve_region(spec, &self.montage)
        };
        let mut idx = match target {
            CouplingTarget::Channels { channels } => channels
                .iter()
                .map(|c| self.montage.index_of(c).ok_or_else(|| Error::UnknownChannel(normalize_label(c))))
                .collect::<Result<Vec<_>>>()?,
            CouplingTarget::Region { region: name } => region(name)?,
            CouplingTarget::RegionPair { a, b } => {
                let mut v = region(a)?;
                for i in region(b)? {
                    if !v.contains(&i) {
                        v.push(i);
                    }
                }
                v
            }
        };
        let mut seen = std::collections::HashSet::new();
        idx.retain(|i| seen.insert(*i));
        if idx.len() < 2 {
            return Err(Error::InvalidSpec("coupling target needs at least 2 channels".into()));
        }
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if p.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        if p.n_trials < 2 {
            return bad(format!("n_trials {} < 2", p.n_trials));
        }
        if !(p.fs > 0.0 && p.epoch_ms > 0.0 && p.pad_ms >= 0.0) {
            return bad(format!("fs {} / epoch {} ms / pad {} ms", p.fs, p.epoch_ms, p.pad_ms));
        }
        if !(p.band_amplitude_uv >= 0.0 && p.noise_sigma_uv >= 0.0 && p.line_noise_uv >= 0.0) {
            return bad("amplitudes must be non-negative".into());
        }
        if p.paradigms.is_empty() {
            return bad("no paradigms".into());
        }
        if self.bands.is_empty() {
            return bad("no bands".into());
        }
        for band in &self.bands {
            if band.hi >= p.fs / 2.0 {
                return bad(format!("band {} reaches Nyquist at {} Hz", band.name, p.fs));
            }
        }
        if self.samples() < 8 {
            return bad("trials are too short".into());
        }
        for c in &p.coupling {
            if !(0.0..=1.0).contains(&c.strength) {
                return Err(Error::CouplingOutOfRange(c.strength));
            }
            if !self.bands.iter().any(|b| b.name == c.band) {
                return bad(format!("coupling refers to unknown band `{}`", c.band));
            }
            if !(c.lag_ms >= 0.0) {
                return bad(format!("negative lag {} ms", c.lag_ms));
            }
            self.resolve_target(&c.target)?;
        }
        Ok(())
    }
}

/// Returns a spec whose imagery condition couples `region` in `band` with
/// the rest strength shifted by `delta_c`.
pub fn plant_effect(spec: &SynthSpec, region: &str, band: &str, delta_c: f64) -> Result<SynthSpec> {
    let target = CouplingTarget::Region {
        region: region.into(),
    };
    if !spec.regions.iter().any(|r| r.name == region) {
        return Err(Error::InvalidSpec(format!("unknown region `{region}`")));
    }
    if !spec.bands.iter().any(|b| b.name == band) {
        return Err(Error::InvalidSpec(format!("unknown band `{band}`")));
    }
    let matches = |c: &Coupling| c.target == target && c.band == band;
    let rest = spec
        .params
        .coupling
        .iter()
        .find(|c| matches(c) && c.condition.is_rest());
    let (c_rest, lag_ms) = rest.map_or((0.0, 0.0), |c| (c.strength, c.lag_ms));
    let c_imagery = c_rest + delta_c;
    if !(0.0..=1.0).contains(&c_imagery) {
        return Err(Error::CouplingOutOfRange(c_imagery));
    }
    let mut out = spec.clone();
    out.params
        .coupling
        .retain(|c| !(matches(c) && c.condition == Condition::imagery()));
    out.params.coupling.push(Coupling {
        target,
        band: band.into(),
        strength: c_imagery,
        condition: Condition::imagery(),
        lag_ms,
    });
    Ok(out)
}

// Stream coordinate tags.
const TAG_CHANNEL_BAND: u64 = 1;
const TAG_GROUP: u64 = 2;
const TAG_BROADBAND: u64 = 3;
const TAG_LINE: u64 = 4;

fn condition_code(c: &Condition) -> u64 {
    c.as_str().bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64))
}

fn paradigm_code(p: Paradigm) -> u64 {
    match p {
        Paradigm::ImaginedSpeech => 1,
        Paradigm::VisualImagery => 2,
    }
}

fn white_noise<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Band-passes each white-noise row and scales it to unit RMS.
fn band_limited(sos: &Sos, white: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let refs: Vec<&[f64]> = white.iter().map(Vec::as_slice).collect();
    let mut rows = sos.filtfilt_rows(&refs);
    for y in &mut rows {
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        if rms > 0.0 {
            y.iter_mut().for_each(|v| *v /= rms);
        }
    }
    rows
}

/// Unit-RMS band-limited Gaussian noise.
fn band_noise<R: Rng>(rng: &mut R, sos: &Sos, len: usize) -> Vec<f64> {
    band_limited(sos, &[white_noise(rng, len)]).pop().expect("one row")
}

struct Group {
    band: usize,
    channels: Vec<usize>,
    strength: f64,
    lag: usize,
}

struct Plan<'a> {
    spec: &'a SynthSpec,
    filters: Vec<Sos>,
    len: usize,
}

impl Plan<'_> {
    fn groups(&self, condition: &Condition) -> Result<Vec<Group>> {
        self.spec
            .params
            .coupling
            .iter()
            .filter(|c| &c.condition == condition)
            .map(|c| {
                Ok(Group {
                    band: self.spec.bands.iter().position(|b| b.name == c.band).expect("validated"),
                    channels: self.spec.resolve_target(&c.target)?,
                    strength: c.strength,
                    lag: (c.lag_ms * self.spec.params.fs / 1000.0).round() as usize,
                })
            })
            .collect()
    }

    fn trial(&self, subject: u64, paradigm: Paradigm, condition: &Condition, groups: &[Group], trial: usize) -> Vec<f32> {
        let p = &self.spec.params;
        let n_ch = self.spec.montage.count();
        let len = self.len;
        let coords = |tag: u64, a: u64, b: u64| {
            [subject, paradigm_code(paradigm), condition_code(condition), trial as u64, tag, a, b]
        };
        let mut out = vec![0.0f64; n_ch * len];

        for (bi, sos) in self.filters.iter().enumerate() {
            let oscillators: Vec<Option<Vec<f64>>> = groups
                .iter()
                .enumerate()
                .map(|(gi, g)| {
                    (g.band == bi).then(|| {
                        band_noise(&mut keyed_rng(p.seed, &coords(TAG_GROUP, gi as u64, bi as u64)), sos, len + g.lag)
                    })
                })
                .collect();
            let white: Vec<Vec<f64>> = (0..n_ch)
                .map(|ch| white_noise(&mut keyed_rng(p.seed, &coords(TAG_CHANNEL_BAND, ch as u64, bi as u64)), len))
                .collect();
            let owns = band_limited(sos, &white);
            for (ch, own) in owns.iter().enumerate() {
                let mut component = vec![0.0; len];
                let mut c_max = 0.0f64;
                for (g, s) in groups.iter().zip(&oscillators) {
                    let (Some(s), Some(pos)) = (s, g.channels.iter().position(|&c| c == ch)) else {
                        continue;
                    };
                    let offset = if pos == 0 { g.lag } else { 0 };
                    for (dst, v) in component.iter_mut().zip(&s[offset..offset + len]) {
                        *dst += g.strength * v;
                    }
                    c_max = c_max.max(g.strength);
                }
                let row = &mut out[ch * len..(ch + 1) * len];
                for ((dst, c), n) in row.iter_mut().zip(&component).zip(own) {
                    *dst += p.band_amplitude_uv * (c + (1.0 - c_max) * n);
                }
            }
        }

        if p.noise_sigma_uv > 0.0 {
            for ch in 0..n_ch {
                let mut rng = keyed_rng(p.seed, &coords(TAG_BROADBAND, ch as u64, 0));
                for dst in &mut out[ch * len..(ch + 1) * len] {
                    *dst += p.noise_sigma_uv * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if p.line_noise_uv > 0.0 {
            let phase = keyed_rng(p.seed, &coords(TAG_LINE, 0, 0)).random::<f64>() * 2.0 * PI;
            for ch in 0..n_ch {
                for (t, dst) in out[ch * len..(ch + 1) * len].iter_mut().enumerate() {
                    *dst += p.line_noise_uv * (2.0 * PI * 60.0 * t as f64 / p.fs + phase).sin();
                }
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }
}

/// Epoch sets of one subject, ordered by paradigm then condition (imagery, rest).
pub fn generate_subject(spec: &SynthSpec, subject_index: usize) -> Result<Vec<EpochSet>> {
    spec.validate()?;
    let p = &spec.params;
    if subject_index >= p.n_subjects {
        return Err(Error::InvalidSpec(format!("subject index {subject_index} out of range")));
    }
    let plan = Plan {
        spec,
        filters: spec
            .bands
            .iter()
            .map(|b| butter_bandpass(p.filter_order, b.lo, b.hi, p.fs))
            .collect::<Result<_>>()?,
        len: spec.samples(),
    };
    let subject = &spec.subject_ids()[subject_index];
    let n_ch = spec.montage.count();
    let window = (-p.pad_ms, p.epoch_ms + p.pad_ms);
    let mut sets = Vec::new();
    for &paradigm in &p.paradigms {
        for condition in [Condition::imagery(), Condition::rest()] {
            let groups = plan.groups(&condition)?;
            let trials: Vec<Vec<f32>> = (0..p.n_trials)
                .into_par_iter()
                .map(|t| plan.trial(subject_index as u64, paradigm, &condition, &groups, t))
                .collect();
            let flat: Vec<f32> = trials.into_iter().flatten().collect();
            let data = Array3::from_shape_vec((p.n_trials, n_ch, plan.len), flat).expect("trial shape");
            sets.push(EpochSet::new(
                spec.montage.clone(),
                p.fs,
                subject.clone(),
                paradigm,
                condition,
                window,
                data,
            ));
        }
    }
    Ok(sets)
}

/// Every subject's epoch sets, subject-major.
pub fn generate(spec: &SynthSpec) -> Result<Vec<EpochSet>> {
    spec.validate()?;
    let mut out = Vec::new();
    for s in 0..spec.params.n_subjects {
        out.extend(generate_subject(spec, s)?);
    }
    Ok(out)
}
