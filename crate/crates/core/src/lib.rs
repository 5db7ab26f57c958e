//! Phase-locking-value functional connectivity for epoched multichannel EEG.
//!
//! The crate covers preprocessing ([`dsp`]), analytic phase ([`phase`]),
//! trial-wise PLV ([`plv`]), regional aggregation ([`regions`]), paired
//! statistics ([`stats`], [`compare`]), a synthetic cohort generator
//! ([`synth`]) and file formats, reports and orchestration ([`io`]).

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod dsp;
pub mod error;
pub mod io;
pub mod model;
pub mod phase;
pub mod plv;
pub mod regions;
pub mod stats;
pub mod synth;

pub use compare::{run_comparisons, Cell, ComparisonKey, MatrixKey, PairedStatResult, PlvCollection, StatsOptions};
pub use error::{Error, Result};
pub use io::config::PipelineConfig;
pub use model::{resolve_region, validate_epoch_set, BandSpec, Condition, EpochSet, Montage, Paradigm, Recording, RegionSpec};
pub use phase::{analytic_phase, PhaseTensor};
pub use plv::{plv_matrix, plv_timeseries, PlvMatrix, PlvWindow};
pub use regions::{inter_region_plv, intra_region_plv};
pub use stats::{paired_t_test, TTest};
