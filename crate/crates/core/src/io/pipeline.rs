//! Orchestration of the full analysis and of each stage on its own.
//!
//! Raw inputs are epoch containers, one per subject, paradigm and condition,
//! each trial holding a segment long enough to contain the baseline and the
//! analysis epoch. The 12 imagery classes of a paradigm are pooled into one
//! `imagery` condition. Per trial, the chain is:
//!
//! resample → broadband band-pass → notch → common average reference →
//! band filter → epoch with baseline correction → trial rejection →
//! analytic phase → PLV.
//!
//! Rejection uses the broadband epoch and removes the same trials from every
//! band. With `band_filter_stage = "epoch"` band filters run on the
//! baseline-corrected broadband epoch instead.
//!
//! Work runs inside a rayon pool of the requested size. Every parallel step
//! collects in input order and no reduction depends on scheduling, so outputs
//! are identical for any thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{region_values, run_comparisons, CellValue, MatrixKey, PairedStatResult, PlvCollection};
use crate::dsp::{self, EpochLabels, FilterSpec};
use crate::error::{Error, Result};
use crate::io::config::{BandFilterStage, PipelineConfig};
use crate::io::container::{self, read_container, read_header, write_container};
use crate::io::report::{results_csv, write_reports, write_text};
use crate::model::{validate_epoch_set, BandSpec, Condition, EpochSet, Montage, Paradigm, Recording};
use crate::phase::analytic_phase;
use crate::plv::{plv_matrix, PlvMatrix};
use crate::synth;

pub const THREADS_ENV: &str = "EEG_PLV_THREADS";
pub const PLV_SUFFIX: &str = ".plv.json";
pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";
pub const INDEX: &str = "index.json";

/// Restrictions and resources for one invocation.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Only these bands (by name); empty means all configured bands.
    pub bands: Vec<String>,
    /// Only these paradigms; empty means all.
    pub paradigms: Vec<Paradigm>,
    /// Worker count; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn selected_bands(&self, config: &PipelineConfig) -> Result<Vec<BandSpec>> {
        if self.bands.is_empty() {
            return Ok(config.bands.clone());
        }
        for name in &self.bands {
            if config.band(name).is_none() {
                return Err(Error::InvalidArgument(format!("unknown band `{name}`")));
            }
        }
        Ok(config.bands.iter().filter(|b| self.bands.contains(&b.name)).cloned().collect())
    }

    fn wants(&self, p: Paradigm) -> bool {
        self.paradigms.is_empty() || self.paradigms.contains(&p)
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(f))
}

/// Subject, paradigm and (pooled) condition of one analysis unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.subject, self.paradigm, self.condition)
    }
}

fn pooled(condition: &Condition) -> Condition {
    if condition.is_rest() {
        Condition::rest()
    } else {
        Condition::imagery()
    }
}

fn files_with_suffix(dir: &Path, suffix: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            files_with_suffix(&path, suffix, out)?;
        } else if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)) {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Container files grouped by analysis unit, each group's files sorted by
/// condition then path.
pub fn scan_inputs(dir: &Path, options: &RunOptions) -> Result<BTreeMap<GroupKey, Vec<PathBuf>>> {
    if !dir.is_dir() {
        return Err(Error::NoSubjects(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    files_with_suffix(dir, &format!(".{}", container::EXTENSION), &mut files)?;
    let mut groups: BTreeMap<GroupKey, Vec<(Condition, PathBuf)>> = BTreeMap::new();
    for path in files {
        let h = read_header(&path).map_err(|e| e.in_stage("scan", path.display().to_string()))?;
        if !options.wants(h.paradigm) {
            continue;
        }
        let key = GroupKey {
            subject: h.subject,
            paradigm: h.paradigm,
            condition: pooled(&h.condition),
        };
        groups.entry(key).or_default().push((h.condition, path));
    }
    if groups.is_empty() {
        return Err(Error::NoSubjects(dir.to_path_buf()));
    }
    Ok(groups
        .into_iter()
        .map(|(k, mut v)| {
            v.sort();
            (k, v.into_iter().map(|(_, p)| p).collect())
        })
        .collect())
}

/// Reorders channels to `montage`; extra input channels are dropped.
pub fn conform(e: &EpochSet, montage: &Montage) -> Result<EpochSet> {
    if e.montage() == montage {
        return Ok(e.clone());
    }
    let idx = montage
        .labels()
        .iter()
        .map(|l| e.montage().index_of(l).ok_or_else(|| Error::UnknownChannel(l.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(EpochSet::new(
        montage.clone(),
        e.fs(),
        e.subject(),
        e.paradigm(),
        e.condition().clone(),
        e.epoch_window(),
        e.data().select(Axis(1), &idx),
    ))
}

/// Concatenates trials of sets that share montage, rate and window.
pub fn pool_sets(sets: &[EpochSet], condition: Condition) -> Result<EpochSet> {
    let first = sets.first().ok_or_else(|| Error::InvalidEpochSet("nothing to pool".into()))?;
    for e in sets {
        if e.montage() != first.montage()
            || e.fs() != first.fs()
            || e.epoch_window() != first.epoch_window()
            || e.n_samples() != first.n_samples()
            || e.subject() != first.subject()
            || e.paradigm() != first.paradigm()
        {
            return Err(Error::InvalidEpochSet(format!(
                "cannot pool {}/{} with {}/{}",
                first.subject(),
                first.condition(),
                e.subject(),
                e.condition()
            )));
        }
    }
    let views: Vec<_> = sets.iter().map(|e| e.data().view()).collect();
    let data = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(EpochSet::new(
        first.montage().clone(),
        first.fs(),
        first.subject(),
        first.paradigm(),
        condition,
        first.epoch_window(),
        data,
    ))
}

fn check_input(e: &EpochSet) -> Result<()> {
    let violations = validate_epoch_set(e);
    if violations.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(Error::InvalidEpochSet(msgs.join("; ")))
    }
}

/// Band-filtered, artifact-screened epochs of one analysis unit.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// One set per requested band, in band order.
    pub bands: Vec<(BandSpec, EpochSet)>,
    pub n_input: usize,
    pub rejected: Vec<usize>,
}

fn stack(trials: Vec<EpochSet>) -> Result<EpochSet> {
    let first = trials.first().expect("at least one trial");
    let views: Vec<_> = trials.iter().map(|e| e.data().view()).collect();
    let data = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(EpochSet::new(
        first.montage().clone(),
        first.fs(),
        first.subject(),
        first.paradigm(),
        first.condition().clone(),
        first.epoch_window(),
        data,
    ))
}

/// Runs the preprocessing chain on every trial of `raw`.
pub fn preprocess_set(raw: &EpochSet, config: &PipelineConfig, bands: &[BandSpec]) -> Result<Preprocessed> {
    check_input(raw)?;
    let p = &config.preprocess;
    let broadband = BandSpec::new("broadband", p.broadband.0, p.broadband.1)?;
    let filter = FilterSpec::bandpass(p.broadband.0, p.broadband.1).with_order(p.filter_order);
    let labels = EpochLabels {
        subject: raw.subject().to_string(),
        paradigm: raw.paradigm(),
        condition: raw.condition().clone(),
    };
    // Onset = 0 ms on the segment's own time axis.
    let onset_ms = -raw.epoch_window().0;
    if onset_ms < 0.0 {
        return Err(Error::EpochOutOfBounds(0));
    }
    let onset = (onset_ms * p.target_fs / 1000.0).round() as usize;
    let continuous = p.band_filter_stage == BandFilterStage::Continuous;

    let per_trial: Vec<(EpochSet, Vec<EpochSet>)> = (0..raw.n_trials())
        .into_par_iter()
        .map(|t| -> Result<(EpochSet, Vec<EpochSet>)> {
            let segment: Array2<f32> = raw.data().index_axis(Axis(0), t).to_owned();
            let rec = Recording::new(raw.montage().clone(), raw.fs(), segment)?;
            let rec = dsp::resample(&rec, p.target_fs)?;
            let rec = dsp::bandpass(&rec, &broadband, &filter)?;
            let rec = dsp::notch(&rec, p.notch_hz, p.notch_bandwidth_hz)?;
            let rec = dsp::common_average_reference(&rec)?;
            let cut = |r: &Recording| {
                dsp::extract_epochs(r, &[onset], p.epoch_ms, p.baseline_ms, &labels)
                    .map_err(|e| if let Error::EpochOutOfBounds(_) = e { Error::EpochOutOfBounds(t) } else { e })
            };
            let wide = cut(&rec)?;
            let banded = if continuous {
                bands
                    .iter()
                    .map(|b| cut(&dsp::bandpass(&rec, b, &filter)?))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok((wide, banded))
        })
        .collect::<Result<_>>()?;

    let mut wide = Vec::with_capacity(per_trial.len());
    let mut banded: Vec<Vec<EpochSet>> = vec![Vec::with_capacity(per_trial.len()); bands.len()];
    for (w, b) in per_trial {
        wide.push(w);
        for (dst, e) in banded.iter_mut().zip(b) {
            dst.push(e);
        }
    }
    let wide = stack(wide)?;
    let (kept_wide, rejected) = dsp::reject_artifacts(&wide, p.artifact_ptp_uv)?;
    let kept: Vec<usize> = (0..wide.n_trials()).filter(|t| !rejected.contains(t)).collect();

    let out = if continuous {
        bands
            .iter()
            .zip(banded)
            .map(|(b, trials)| Ok((b.clone(), dsp::select_trials(&stack(trials)?, &kept))))
            .collect::<Result<Vec<_>>>()?
    } else {
        bands
            .iter()
            .map(|b| {
                let spec = FilterSpec::bandpass(b.lo, b.hi).with_order(p.filter_order);
                Ok((b.clone(), dsp::filter_epochs(&kept_wide, &spec)?))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(Preprocessed {
        bands: out,
        n_input: raw.n_trials(),
        rejected,
    })
}

/// PLV matrix of one preprocessed band set.
pub fn plv_for_set(e: &EpochSet, band: &BandSpec, config: &PipelineConfig) -> Result<PlvMatrix> {
    let phases = analytic_phase(e, band)?;
    plv_matrix(&phases, &config.plv.window())
}

/// Per-unit record of trial rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
    pub files: Vec<String>,
    pub n_trials: usize,
    pub n_rejected: usize,
    pub rejected: Vec<usize>,
}

/// PLV matrices of one raw unit, one per band.
pub fn analyze_unit(
    raw: &EpochSet,
    config: &PipelineConfig,
    bands: &[BandSpec],
) -> Result<(Vec<(MatrixKey, PlvMatrix)>, Preprocessed)> {
    let raw = conform(raw, &config.montage)?;
    let pre = preprocess_set(&raw, config, bands)?;
    let matrices = pre
        .bands
        .par_iter()
        .map(|(band, e)| {
            let key = MatrixKey {
                subject: raw.subject().to_string(),
                paradigm: raw.paradigm(),
                condition: raw.condition().clone(),
                band: band.name.clone(),
            };
            Ok((key, plv_for_set(e, band, config)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((matrices, pre))
}

/// Everything computed from one set of raw units.
#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub matrices: PlvCollection,
    pub rejections: Vec<RejectionRecord>,
    pub results: Vec<PairedStatResult>,
}

/// In-memory analysis of raw units (any condition labels; imagery classes are pooled).
pub fn analyze_sets(sets: &[EpochSet], config: &PipelineConfig, options: &RunOptions) -> Result<Analysis> {
    config.validate()?;
    let bands = options.selected_bands(config)?;
    let mut groups: BTreeMap<GroupKey, Vec<&EpochSet>> = BTreeMap::new();
    for e in sets.iter().filter(|e| options.wants(e.paradigm())) {
        groups
            .entry(GroupKey {
                subject: e.subject().to_string(),
                paradigm: e.paradigm(),
                condition: pooled(e.condition()),
            })
            .or_default()
            .push(e);
    }
    if groups.is_empty() {
        return Err(Error::NoSubjects(PathBuf::from("<memory>")));
    }
    let mut analysis = Analysis::default();
    for (key, members) in groups {
        let mut members: Vec<EpochSet> = members.into_iter().cloned().collect();
        members.sort_by(|a, b| a.condition().cmp(b.condition()));
        let raw = pool_sets(&members, key.condition.clone()).map_err(|e| e.in_stage("pool", key.to_string()))?;
        let (matrices, pre) = analyze_unit(&raw, config, &bands).map_err(|e| e.in_stage("preprocess+plv", key.to_string()))?;
        analysis.matrices.extend(matrices);
        analysis.rejections.push(rejection_record(&key, Vec::new(), &pre));
    }
    analysis.results = run_comparisons(&analysis.matrices, &config.regions, &bands, &config.montage, &config.stats)
        .map_err(|e| e.in_stage("stats", "all subjects"))?;
    Ok(analysis)
}

fn rejection_record(key: &GroupKey, files: Vec<String>, pre: &Preprocessed) -> RejectionRecord {
    RejectionRecord {
        subject: key.subject.clone(),
        paradigm: key.paradigm,
        condition: key.condition.clone(),
        files,
        n_trials: pre.n_input,
        n_rejected: pre.rejected.len(),
        rejected: pre.rejected.clone(),
    }
}

/// Machine-readable description of a run. Wall-clock timings live in a
/// separate file so that the manifest itself is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub container_version: u32,
    pub command: String,
    pub config_hash: String,
    pub band_filter_stage: BandFilterStage,
    pub artifact_rejection: ArtifactRejection,
    pub bands: Vec<String>,
    pub paradigms: Vec<Paradigm>,
    pub subjects: Vec<String>,
    pub rejections: Vec<RejectionRecord>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRejection {
    pub method: String,
    pub limit_uv: f64,
    pub substitutes_for: String,
}

impl Manifest {
    fn new(command: &str, config: &PipelineConfig, bands: &[BandSpec]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            container_version: container::VERSION,
            command: command.into(),
            config_hash: config.hash(),
            band_filter_stage: config.preprocess.band_filter_stage,
            artifact_rejection: ArtifactRejection {
                method: "peak-to-peak amplitude threshold on the broadband epoch".into(),
                limit_uv: config.preprocess.artifact_ptp_uv,
                substitutes_for: "SOBI and BSS-CCA artifact removal".into(),
            },
            bands: bands.iter().map(|b| b.name.clone()).collect(),
            paradigms: Vec::new(),
            subjects: Vec::new(),
            rejections: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn set_units<'a>(&mut self, keys: impl Iterator<Item = (&'a str, Paradigm)>) {
        for (s, p) in keys {
            if !self.subjects.iter().any(|x| x == s) {
                self.subjects.push(s.to_string());
            }
            if !self.paradigms.contains(&p) {
                self.paradigms.push(p);
            }
        }
        self.subjects.sort();
        self.paradigms.sort();
    }
}

/// Stage durations in seconds, in execution order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub threads: usize,
    pub stages: Vec<(String, f64)>,
    pub total_s: f64,
}

struct Clock {
    start: Instant,
    lap: Instant,
    timings: Timings,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            lap: now,
            timings: Timings {
                threads: rayon::current_num_threads(),
                ..Timings::default()
            },
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.stages.push((stage.into(), (now - self.lap).as_secs_f64()));
        self.lap = now;
    }

    fn finish(mut self) -> Timings {
        self.timings.total_s = self.start.elapsed().as_secs_f64();
        self.timings
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// On-disk form of one PLV matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlvRecord {
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
    pub band: BandSpec,
    pub n_trials: usize,
    pub channels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl PlvRecord {
    pub fn new(key: &MatrixKey, m: &PlvMatrix, montage: &Montage) -> Self {
        Self {
            subject: key.subject.clone(),
            paradigm: key.paradigm,
            condition: key.condition.clone(),
            band: m.band.clone(),
            n_trials: m.n_trials,
            channels: montage.labels().to_vec(),
            values: m.values.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn into_parts(self, montage: &Montage) -> Result<(MatrixKey, PlvMatrix)> {
        let stored = Montage::new(&self.channels)?;
        if &stored != montage {
            return Err(Error::ShapeMismatch(format!(
                "PLV matrix for {} uses a different montage than the config",
                self.subject
            )));
        }
        let n = self.channels.len();
        if self.values.len() != n || self.values.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch(format!("PLV matrix for {} is not {n} × {n}", self.subject)));
        }
        let values = Array2::from_shape_vec((n, n), self.values.into_iter().flatten().collect()).expect("checked");
        let key = MatrixKey {
            subject: self.subject,
            paradigm: self.paradigm,
            condition: self.condition.clone(),
            band: self.band.name.clone(),
        };
        Ok((
            key,
            PlvMatrix {
                values,
                band: self.band,
                condition: self.condition,
                n_trials: self.n_trials,
            },
        ))
    }
}

fn plv_path(key: &MatrixKey) -> PathBuf {
    PathBuf::from(&key.subject).join(format!("{}_{}_{}{PLV_SUFFIX}", key.paradigm.as_str(), key.condition, key.band))
}

fn region_csv(values: &[CellValue]) -> String {
    let mut out = String::from("subject,paradigm,condition,band,cell,value\n");
    for v in values {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            v.subject,
            v.paradigm.as_str(),
            v.condition,
            v.band,
            v.cell,
            crate::io::report::format_full(v.value)
        ));
    }
    out
}

fn write_stats(out: &Path, analysis_results: &[PairedStatResult], values: &[CellValue]) -> Result<Vec<String>> {
    write_json(&out.join("results.json"), &analysis_results)?;
    write_text(&out.join("results.csv"), &results_csv(analysis_results))?;
    write_text(&out.join("region_plv.csv"), &region_csv(values))?;
    Ok(vec!["results.json".into(), "results.csv".into(), "region_plv.csv".into()])
}

/// What a completed run wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub timings: Timings,
    pub results: Vec<PairedStatResult>,
}

/// End-to-end run over a directory of raw containers.
pub fn run_pipeline(config: &PipelineConfig, input: &Path, out: &Path, options: &RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let bands = options.selected_bands(config)?;
    with_threads(options.threads, || -> Result<RunSummary> {
        let mut clock = Clock::new();
        let groups = scan_inputs(input, options)?;
        clock.lap("scan");
        let mut manifest = Manifest::new("run", config, &bands);
        manifest.set_units(groups.keys().map(|k| (k.subject.as_str(), k.paradigm)));

        let mut matrices = PlvCollection::new();
        for (key, paths) in &groups {
            let stage_err = |stage: &'static str| move |e: Error| e.in_stage(stage, key.to_string());
            let sets = paths
                .iter()
                .map(|p| read_container(p).map_err(|e| e.in_stage("read", p.display().to_string())))
                .collect::<Result<Vec<_>>>()?;
            let raw = pool_sets(&sets, key.condition.clone()).map_err(stage_err("pool"))?;
            drop(sets);
            let (unit, pre) = analyze_unit(&raw, config, &bands).map_err(stage_err("preprocess+plv"))?;
            let files = paths.iter().map(|p| relative(p, input)).collect();
            manifest.rejections.push(rejection_record(key, files, &pre));
            for (k, m) in unit {
                let rel = PathBuf::from("plv").join(plv_path(&k));
                write_json(&out.join(&rel), &PlvRecord::new(&k, &m, &config.montage))?;
                manifest.outputs.push(relative(&rel, Path::new("")));
                matrices.insert(k, m);
            }
        }
        clock.lap("preprocess+plv");

        let results = run_comparisons(&matrices, &config.regions, &bands, &config.montage, &config.stats)
            .map_err(|e| e.in_stage("stats", input.display().to_string()))?;
        let values = region_values(&matrices, &config.regions, &config.montage)?;
        manifest.outputs.extend(write_stats(out, &results, &values)?);
        clock.lap("stats");

        let reports = write_reports(out, &results, &bands, &config.regions, &config.stats)
            .map_err(|e| e.in_stage("report", out.display().to_string()))?;
        manifest.outputs.extend(reports.iter().map(|p| relative(p, Path::new(""))));
        clock.lap("report");

        finish(out, manifest, clock, results)
    })?
}

fn finish(out: &Path, manifest: Manifest, clock: Clock, results: Vec<PairedStatResult>) -> Result<RunSummary> {
    write_json(&out.join(MANIFEST), &manifest)?;
    let timings = clock.finish();
    write_json(&out.join(TIMINGS), &timings)?;
    Ok(RunSummary {
        manifest,
        timings,
        results,
    })
}

/// Entry of the preprocessing stage's index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
    pub band: BandSpec,
}

/// Stage: raw containers to per-band preprocessed containers plus `index.json`.
pub fn run_preprocess(config: &PipelineConfig, input: &Path, out: &Path, options: &RunOptions) -> Result<Manifest> {
    config.validate()?;
    let bands = options.selected_bands(config)?;
    with_threads(options.threads, || -> Result<Manifest> {
        let clock = Clock::new();
        let groups = scan_inputs(input, options)?;
        let mut manifest = Manifest::new("preprocess", config, &bands);
        manifest.set_units(groups.keys().map(|k| (k.subject.as_str(), k.paradigm)));
        let mut index = Vec::new();
        for (key, paths) in &groups {
            let sets = paths
                .iter()
                .map(|p| read_container(p).map_err(|e| e.in_stage("read", p.display().to_string())))
                .collect::<Result<Vec<_>>>()?;
            let pre = pool_sets(&sets, key.condition.clone())
                .and_then(|raw| conform(&raw, &config.montage))
                .and_then(|raw| preprocess_set(&raw, config, &bands))
                .map_err(|e| e.in_stage("preprocess", key.to_string()))?;
            for (band, e) in &pre.bands {
                let rel = PathBuf::from(&key.subject).join(format!(
                    "{}_{}_{}.{}",
                    key.paradigm.as_str(),
                    key.condition,
                    band.name,
                    container::EXTENSION
                ));
                write_container(&out.join(&rel), e)?;
                let rel = relative(&rel, Path::new(""));
                manifest.outputs.push(rel.clone());
                index.push(IndexEntry {
                    path: rel,
                    subject: key.subject.clone(),
                    paradigm: key.paradigm,
                    condition: key.condition.clone(),
                    band: band.clone(),
                });
            }
            let files = paths.iter().map(|p| relative(p, input)).collect();
            manifest.rejections.push(rejection_record(key, files, &pre));
        }
        write_json(&out.join(INDEX), &index)?;
        manifest.outputs.push(INDEX.into());
        finish(out, manifest, clock, Vec::new()).map(|s| s.manifest)
    })?
}

/// Stage: preprocessed containers (via `index.json`) to PLV matrices.
pub fn run_plv(config: &PipelineConfig, input: &Path, out: &Path, options: &RunOptions) -> Result<Manifest> {
    config.validate()?;
    let bands = options.selected_bands(config)?;
    with_threads(options.threads, || -> Result<Manifest> {
        let clock = Clock::new();
        let index: Vec<IndexEntry> = read_json(&input.join(INDEX)).map_err(|e| e.in_stage("plv", input.join(INDEX).display().to_string()))?;
        let index: Vec<IndexEntry> = index
            .into_iter()
            .filter(|e| options.wants(e.paradigm) && bands.iter().any(|b| b.name == e.band.name))
            .collect();
        if index.is_empty() {
            return Err(Error::NoSubjects(input.to_path_buf()));
        }
        let mut manifest = Manifest::new("plv", config, &bands);
        manifest.set_units(index.iter().map(|e| (e.subject.as_str(), e.paradigm)));
        for entry in &index {
            let path = input.join(&entry.path);
            let e = read_container(&path)
                .and_then(|e| conform(&e, &config.montage))
                .map_err(|err| err.in_stage("read", path.display().to_string()))?;
            let m = plv_for_set(&e, &entry.band, config).map_err(|err| err.in_stage("plv", entry.path.clone()))?;
            let key = MatrixKey {
                subject: entry.subject.clone(),
                paradigm: entry.paradigm,
                condition: entry.condition.clone(),
                band: entry.band.name.clone(),
            };
            let rel = plv_path(&key);
            write_json(&out.join(&rel), &PlvRecord::new(&key, &m, &config.montage))?;
            manifest.outputs.push(relative(&rel, Path::new("")));
        }
        finish(out, manifest, clock, Vec::new()).map(|s| s.manifest)
    })?
}

/// Reads every `*.plv.json` below `dir`.
pub fn load_plv_dir(dir: &Path, config: &PipelineConfig, options: &RunOptions) -> Result<PlvCollection> {
    if !dir.is_dir() {
        return Err(Error::NoSubjects(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    files_with_suffix(dir, PLV_SUFFIX, &mut files)?;
    files.sort();
    let bands = options.selected_bands(config)?;
    let mut out = PlvCollection::new();
    for path in files {
        let record: PlvRecord = read_json(&path).map_err(|e| e.in_stage("read", path.display().to_string()))?;
        if !options.wants(record.paradigm) || !bands.iter().any(|b| b.name == record.band.name) {
            continue;
        }
        let (k, m) = record.into_parts(&config.montage).map_err(|e| e.in_stage("read", path.display().to_string()))?;
        out.insert(k, m);
    }
    if out.is_empty() {
        return Err(Error::NoSubjects(dir.to_path_buf()));
    }
    Ok(out)
}

/// Stage: PLV matrices to paired comparisons.
pub fn run_stats(config: &PipelineConfig, input: &Path, out: &Path, options: &RunOptions) -> Result<Vec<PairedStatResult>> {
    config.validate()?;
    let bands = options.selected_bands(config)?;
    let matrices = load_plv_dir(input, config, options)?;
    let results = run_comparisons(&matrices, &config.regions, &bands, &config.montage, &config.stats)
        .map_err(|e| e.in_stage("stats", input.display().to_string()))?;
    let values = region_values(&matrices, &config.regions, &config.montage)?;
    write_stats(out, &results, &values)?;
    Ok(results)
}

/// Stage: comparison results (a `results.json` file or a directory holding one) to reports.
pub fn run_report(config: &PipelineConfig, input: &Path, out: &Path, options: &RunOptions) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let bands = options.selected_bands(config)?;
    let path = if input.is_dir() { input.join("results.json") } else { input.to_path_buf() };
    let mut results: Vec<PairedStatResult> = read_json(&path).map_err(|e| e.in_stage("report", path.display().to_string()))?;
    results.retain(|r| options.wants(r.key.paradigm));
    write_reports(out, &results, &bands, &config.regions, &config.stats).map_err(|e| e.in_stage("report", path.display().to_string()))
}

/// Writes a synthetic cohort as raw containers: `<subject>/<paradigm>_<condition>.epo`.
pub fn run_synth(config: &PipelineConfig, seed: Option<u64>, out: &Path, threads: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut spec = config.synth_spec();
    if let Some(seed) = seed {
        spec.params.seed = seed;
    }
    spec.validate()?;
    with_threads(threads, || -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for s in 0..spec.params.n_subjects {
            for e in synth::generate_subject(&spec, s)? {
                let rel = PathBuf::from(e.subject()).join(format!(
                    "{}_{}.{}",
                    e.paradigm().as_str(),
                    e.condition(),
                    container::EXTENSION
                ));
                write_container(&out.join(&rel), &e)?;
                written.push(rel);
            }
        }
        write_json(&out.join("synth.json"), &spec.params)?;
        Ok(written)
    })?
}
