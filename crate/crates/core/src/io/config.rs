//! Pipeline configuration: a bundled TOML default plus user overrides.
//!
//! A user file is merged key by key over the bundled default. Tables merge
//! recursively; any other value (including arrays such as `bands` or
//! `regions`) replaces the default wholesale.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::StatsOptions;
use crate::error::{Error, Result};
use crate::model::{normalize_label, resolve_region, BandSpec, Montage, RegionSpec};
use crate::plv::PlvWindow;
use crate::synth::{SynthParams, SynthSpec};

pub const BUNDLED_TOML: &str = include_str!("../../config/default.toml");

/// Whether band filters run before or after epoching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandFilterStage {
    Continuous,
    Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_fs: f64,
    pub broadband: (f64, f64),
    pub filter_order: usize,
    pub notch_hz: f64,
    pub notch_bandwidth_hz: f64,
    pub epoch_ms: (f64, f64),
    pub baseline_ms: (f64, f64),
    pub artifact_ptp_uv: f64,
    pub band_filter_stage: BandFilterStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlvConfig {
    pub window_ms: (f64, f64),
    pub edge_trim: f64,
}

impl PlvConfig {
    pub fn window(&self) -> PlvWindow {
        PlvWindow::new(self.window_ms, self.edge_trim)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MontageTable {
    labels: Montage,
}

mod montage_table {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Montage, s: S) -> std::result::Result<S::Ok, S::Error> {
        MontageTable { labels: m.clone() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Montage, D::Error> {
        Ok(MontageTable::deserialize(d)?.labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(with = "montage_table")]
    pub montage: Montage,
    pub preprocess: PreprocessConfig,
    pub plv: PlvConfig,
    pub stats: StatsOptions,
    pub bands: Vec<BandSpec>,
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub synth: SynthParams,
    #[serde(default)]
    pub paths: PathsConfig,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
}

impl PipelineConfig {
    /// The bundled default.
    pub fn bundled() -> &'static PipelineConfig {
        static BUNDLED: OnceLock<PipelineConfig> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            let table = parse_table(BUNDLED_TOML).expect("bundled config parses");
            toml::Value::Table(table).try_into().expect("bundled config is well-formed")
        })
    }

    /// Parses `text` as overrides on top of the bundled default and validates the result.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table = parse_table(BUNDLED_TOML)?;
        merge(&mut table, parse_table(text)?);
        let config: PipelineConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a user file. `None` yields the bundled default.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => {
                let config = Self::bundled().clone();
                config.validate()?;
                Ok(config)
            }
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                Self::from_toml_str(&text).map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Pre-flight checks of every parameter against the preconditions of the stage that uses it.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let p = &self.preprocess;
        let nyquist = p.target_fs / 2.0;
        if self.montage.count() < 2 {
            return bad("montage needs at least 2 channels".into());
        }
        if !(p.target_fs > 0.0 && p.target_fs.is_finite()) {
            return bad(format!("preprocess.target_fs {} must be positive", p.target_fs));
        }
        if p.filter_order < 2 || !p.filter_order.is_multiple_of(2) {
            return bad(format!("preprocess.filter_order {} must be even and at least 2", p.filter_order));
        }
        let (lo, hi) = p.broadband;
        if !(lo > 0.0 && hi > lo) {
            return bad(format!("preprocess.broadband [{lo}, {hi}] is not an interval above 0"));
        }
        if hi >= nyquist {
            return bad(format!("preprocess.broadband upper edge {hi} Hz is not below Nyquist ({nyquist} Hz)"));
        }
        if !(p.notch_bandwidth_hz > 0.0 && p.notch_hz - p.notch_bandwidth_hz / 2.0 > 0.0) {
            return bad(format!("notch {} Hz / {} Hz", p.notch_hz, p.notch_bandwidth_hz));
        }
        if p.notch_hz + p.notch_bandwidth_hz / 2.0 >= nyquist {
            return bad(format!("notch at {} Hz is not below Nyquist ({nyquist} Hz)", p.notch_hz));
        }
        if !(p.epoch_ms.1 > p.epoch_ms.0) {
            return bad(format!("preprocess.epoch_ms {:?} is empty", p.epoch_ms));
        }
        if !(p.baseline_ms.1 > p.baseline_ms.0) {
            return bad(format!("preprocess.baseline_ms {:?} is empty", p.baseline_ms));
        }
        if !(p.artifact_ptp_uv > 0.0) {
            return bad(format!("preprocess.artifact_ptp_uv {} must be positive", p.artifact_ptp_uv));
        }
        let w = &self.plv;
        if !(0.0..0.5).contains(&w.edge_trim) {
            return bad(format!("plv.edge_trim {} outside [0, 0.5)", w.edge_trim));
        }
        if !(w.window_ms.1 > w.window_ms.0 && w.window_ms.0 >= p.epoch_ms.0 && w.window_ms.1 <= p.epoch_ms.1) {
            return bad(format!("plv.window_ms {:?} outside epoch {:?}", w.window_ms, p.epoch_ms));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return bad(format!("stats.alpha {} outside (0, 1)", self.stats.alpha));
        }
        if self.bands.is_empty() {
            return bad("no bands".into());
        }
        let mut names = HashSet::new();
        for b in &self.bands {
            if !names.insert(b.name.as_str()) {
                return bad(format!("band `{}` defined twice", b.name));
            }
            if b.hi >= nyquist {
                return bad(format!(
                    "band `{}` upper edge {} Hz is not below Nyquist ({nyquist} Hz at {} Hz)",
                    b.name, b.hi, p.target_fs
                ));
            }
        }
        if self.regions.is_empty() {
            return bad("no regions".into());
        }
        let mut names = HashSet::new();
        for r in &self.regions {
            if !names.insert(r.name.as_str()) {
                return bad(format!("region `{}` defined twice", r.name));
            }
            let idx = resolve_region(r, &self.montage).map_err(|e| Error::Config(format!("region `{}`: {e}", r.name)))?;
            if idx.len() < 2 {
                return bad(format!("region `{}` needs at least 2 channels", r.name));
            }
        }
        if let Some(input) = &self.paths.input {
            if !input.exists() {
                return bad(format!("paths.input {} does not exist", input.display()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of every setting that can change results. Paths are
    /// excluded; channel labels are hashed in canonical form.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            montage: &'a Montage,
            preprocess: &'a PreprocessConfig,
            plv: &'a PlvConfig,
            stats: &'a StatsOptions,
            bands: &'a [BandSpec],
            regions: Vec<RegionSpec>,
            synth: &'a SynthParams,
        }
        let regions = self
            .regions
            .iter()
            .map(|r| RegionSpec {
                channels: r.channels.iter().map(|c| normalize_label(c)).collect(),
                ..r.clone()
            })
            .collect();
        let semantic = Semantic {
            montage: &self.montage,
            preprocess: &self.preprocess,
            plv: &self.plv,
            stats: &self.stats,
            bands: &self.bands,
            regions,
            synth: &self.synth,
        };
        let json = serde_json::to_vec(&semantic).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn region(&self, name: &str) -> Option<&RegionSpec> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn band(&self, name: &str) -> Option<&BandSpec> {
        self.bands.iter().find(|b| b.name == name)
    }

    /// Generator spec over this config's montage, regions and bands.
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec::new(
            self.synth.clone(),
            self.montage.clone(),
            self.regions.clone(),
            self.bands.clone(),
        )
    }
}
