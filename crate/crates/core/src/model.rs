//! Domain types shared by every pipeline stage.
//!
//! Channel labels are stored in canonical form: ASCII uppercase with digits
//! preserved, so `Fp1`, `FP1` and `fp1` all name the same electrode.

use std::collections::HashSet;
use std::fmt;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical form of a 10-10 channel label.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_ascii_uppercase()
}

/// Ordered, duplicate-free list of channel labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Montage {
    labels: Vec<String>,
}

impl Montage {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|l| normalize_label(l.as_ref())).collect();
        if labels.is_empty() {
            return Err(Error::InvalidMontage("no channels".into()));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::InvalidMontage("empty channel label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateChannel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// The bundled 64-channel 10-10 montage.
    pub fn canonical() -> Self {
        crate::io::config::PipelineConfig::bundled().montage.clone()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        let label = normalize_label(label);
        self.labels.iter().position(|l| *l == label)
    }
}

impl TryFrom<Vec<String>> for Montage {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Montage::new(&labels)
    }
}

impl From<Montage> for Vec<String> {
    fn from(m: Montage) -> Self {
        m.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    ImaginedSpeech,
    VisualImagery,
}

impl Paradigm {
    pub const ALL: [Paradigm; 2] = [Paradigm::ImaginedSpeech, Paradigm::VisualImagery];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::ImaginedSpeech => "imagined-speech",
            Paradigm::VisualImagery => "visual-imagery",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Paradigm::ImaginedSpeech => "Imagined Speech",
            Paradigm::VisualImagery => "Visual Imagery",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The twelve cued word/phrase classes.
pub const IMAGERY_CLASSES: [&str; 12] = [
    "ambulance",
    "clock",
    "hello",
    "help-me",
    "light",
    "pain",
    "stop",
    "thank-you",
    "toilet",
    "tv",
    "water",
    "yes",
];

/// Trial condition label: one of [`IMAGERY_CLASSES`], `rest`, or the pooled
/// `imagery` condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Condition(String);

impl Condition {
    pub const REST: &'static str = "rest";
    pub const IMAGERY: &'static str = "imagery";

    pub fn new(label: &str) -> Result<Self> {
        let label = label.trim().to_ascii_lowercase();
        if Self::is_known(&label) {
            Ok(Self(label))
        } else {
            Err(Error::InvalidEpochSet(format!("unknown condition `{label}`")))
        }
    }

    pub fn rest() -> Self {
        Self(Self::REST.into())
    }

    pub fn imagery() -> Self {
        Self(Self::IMAGERY.into())
    }

    fn is_known(label: &str) -> bool {
        label == Self::REST || label == Self::IMAGERY || IMAGERY_CLASSES.contains(&label)
    }

    pub fn is_rest(&self) -> bool {
        self.0 == Self::REST
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Continuous multichannel signal, channels × samples, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    montage: Montage,
    fs: f64,
    data: Array2<f32>,
}

impl Recording {
    pub fn new(montage: Montage, fs: f64, data: Array2<f32>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidEpochSet(format!("sampling rate {fs} Hz")));
        }
        if data.nrows() != montage.count() {
            return Err(Error::ShapeMismatch(format!(
                "{} data rows for {} montage channels",
                data.nrows(),
                montage.count()
            )));
        }
        Ok(Self { montage, fs, data })
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub(crate) fn with_data(&self, fs: f64, data: Array2<f32>) -> Self {
        Self {
            montage: self.montage.clone(),
            fs,
            data,
        }
    }
}

/// Epoched data for one subject, paradigm and condition:
/// trials × channels × samples, single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub(crate) montage: Montage,
    pub(crate) fs: f64,
    pub(crate) subject: String,
    pub(crate) paradigm: Paradigm,
    pub(crate) condition: Condition,
    pub(crate) epoch_window: (f64, f64),
    pub(crate) data: Array3<f32>,
}

impl EpochSet {
    /// Builds the set without checking invariants; see [`validate_epoch_set`].
    pub fn new(
        montage: Montage,
        fs: f64,
        subject: impl Into<String>,
        paradigm: Paradigm,
        condition: Condition,
        epoch_window: (f64, f64),
        data: Array3<f32>,
    ) -> Self {
        Self {
            montage,
            fs,
            subject: subject.into(),
            paradigm,
            condition,
            epoch_window,
            data,
        }
    }

    /// Like [`EpochSet::new`], but fails on the first invariant violation.
    pub fn try_new(
        montage: Montage,
        fs: f64,
        subject: impl Into<String>,
        paradigm: Paradigm,
        condition: Condition,
        epoch_window: (f64, f64),
        data: Array3<f32>,
    ) -> Result<Self> {
        let set = Self::new(montage, fs, subject, paradigm, condition, epoch_window, data);
        match validate_epoch_set(&set).into_iter().next() {
            None => Ok(set),
            Some(v) => Err(Error::InvalidEpochSet(v.to_string())),
        }
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn paradigm(&self) -> Paradigm {
        self.paradigm
    }

    pub fn condition(&self) -> &Condition {
        &self.condition
    }

    pub fn epoch_window(&self) -> (f64, f64) {
        self.epoch_window
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
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

    pub fn with_condition(mut self, condition: Condition) -> Self {
        self.condition = condition;
        self
    }

    pub(crate) fn with_data(&self, epoch_window: (f64, f64), data: Array3<f32>) -> Self {
        Self {
            montage: self.montage.clone(),
            fs: self.fs,
            subject: self.subject.clone(),
            paradigm: self.paradigm,
            condition: self.condition.clone(),
            epoch_window,
            data,
        }
    }
}

/// One failed invariant, with the offending index where there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: &'static str,
    pub index: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated", self.invariant)?;
        if let Some(i) = self.index {
            write!(f, " at index {i}")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

pub const MIN_TRIALS_INVARIANT: &str = "trial count N ≥ 2";
pub const CHANNEL_COUNT_INVARIANT: &str = "channel count == montage.count";
pub const SAMPLING_RATE_INVARIANT: &str = "fs > 0";
pub const WINDOW_INVARIANT: &str = "epoch window matches sample count";
pub const FINITE_INVARIANT: &str = "finite amplitudes";

/// Checks every [`EpochSet`] invariant and reports all failures.
pub fn validate_epoch_set(e: &EpochSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let (trials, channels, samples) = e.data.dim();
    if trials < 2 {
        out.push(Violation {
            invariant: MIN_TRIALS_INVARIANT,
            index: None,
            detail: format!("{trials} trial(s)"),
        });
    }
    if channels != e.montage.count() {
        out.push(Violation {
            invariant: CHANNEL_COUNT_INVARIANT,
            index: Some(channels.min(e.montage.count())),
            detail: format!("{channels} data channels, {} montage labels", e.montage.count()),
        });
    }
    if !(e.fs > 0.0 && e.fs.is_finite()) {
        out.push(Violation {
            invariant: SAMPLING_RATE_INVARIANT,
            index: None,
            detail: format!("{} Hz", e.fs),
        });
    } else {
        let (start, end) = e.epoch_window;
        let expected = (end - start) * e.fs / 1000.0;
        if !(end > start) || (expected - samples as f64).abs() > 1.0 {
            out.push(Violation {
                invariant: WINDOW_INVARIANT,
                index: None,
                detail: format!("window [{start}, {end}] ms at {} Hz vs {samples} samples", e.fs),
            });
        }
    }
    for (t, trial) in e.data.outer_iter().enumerate() {
        if let Some(pos) = trial.iter().position(|v| !v.is_finite()) {
            out.push(Violation {
                invariant: FINITE_INVARIANT,
                index: Some(t),
                detail: format!("channel {}, sample {}", pos / samples, pos % samples),
            });
        }
    }
    out
}

/// Named frequency interval in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBand")]
pub struct BandSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Deserialize)]
struct RawBand {
    name: String,
    lo: f64,
    hi: f64,
}

impl TryFrom<RawBand> for BandSpec {
    type Error = Error;

    fn try_from(raw: RawBand) -> Result<Self> {
        BandSpec::new(&raw.name, raw.lo, raw.hi)
    }
}

impl BandSpec {
    pub fn new(name: &str, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidBand {
                name: name.into(),
                lo,
                hi,
            });
        }
        Ok(Self {
            name: name.into(),
            lo,
            hi,
        })
    }

    pub fn delta() -> Self {
        Self::new("delta", 0.5, 4.0).unwrap()
    }

    pub fn theta() -> Self {
        Self::new("theta", 4.0, 8.0).unwrap()
    }

    pub fn alpha() -> Self {
        Self::new("alpha", 8.0, 13.0).unwrap()
    }

    pub fn beta() -> Self {
        Self::new("beta", 13.0, 30.0).unwrap()
    }

    pub fn canonical() -> Vec<Self> {
        vec![Self::delta(), Self::theta(), Self::alpha(), Self::beta()]
    }

    pub fn center(&self) -> f64 {
        (self.lo * self.hi).sqrt()
    }

    /// Range as printed in table captions, e.g. `0.5-4 Hz`.
    pub fn range_label(&self) -> String {
        format!("{}-{} Hz", self.lo, self.hi)
    }
}

/// Named group of channels. A single `"*"` entry selects the whole montage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub short: String,
    pub channels: Vec<String>,
}

impl RegionSpec {
    pub const ALL_CHANNELS: &'static str = "*";

    pub fn new<S: AsRef<str>>(name: &str, channels: &[S]) -> Result<Self> {
        let region = Self {
            name: name.into(),
            label: name.into(),
            short: String::new(),
            channels: channels.iter().map(|c| c.as_ref().to_string()).collect(),
        };
        region.check_unique()?;
        Ok(region)
    }

    pub fn whole_brain() -> Self {
        Self {
            name: "whole_brain".into(),
            label: "Whole brain".into(),
            short: "W".into(),
            channels: vec![Self::ALL_CHANNELS.into()],
        }
    }

    /// The seven bundled regions: whole brain followed by the six cortical groups.
    pub fn canonical() -> Vec<Self> {
        crate::io::config::PipelineConfig::bundled().regions.clone()
    }

    pub fn is_whole_montage(&self) -> bool {
        self.channels.len() == 1 && self.channels[0] == Self::ALL_CHANNELS
    }

    pub fn display_label(&self) -> &str {
        if self.label.is_empty() {
            &self.name
        } else {
            &self.label
        }
    }

    pub(crate) fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.channels {
            if !seen.insert(normalize_label(c)) {
                return Err(Error::DuplicateChannel(c.clone()));
            }
        }
        Ok(())
    }
}

/// Maps a region's labels to montage indices, preserving the region's order.
pub fn resolve_region(spec: &RegionSpec, montage: &Montage) -> Result<Vec<usize>> {
    if spec.is_whole_montage() {
        return Ok((0..montage.count()).collect());
    }
    spec.check_unique()?;
    spec.channels
        .iter()
        .map(|label| montage.index_of(label).ok_or_else(|| Error::UnknownChannel(label.clone())))
        .collect()
}
