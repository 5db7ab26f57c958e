//! Imagery-versus-rest comparisons over subjects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{resolve_region, BandSpec, Condition, Montage, Paradigm, RegionSpec};
use crate::plv::PlvMatrix;
use crate::regions::{inter_region_plv, intra_region_plv};
use crate::stats::paired_t_test;

/// Identifies one subject's matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatrixKey {
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
    pub band: String,
}

pub type PlvCollection = BTreeMap<MatrixKey, PlvMatrix>;

/// What a comparison aggregates over.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cell {
    Region { region: String },
    Pair { a: String, b: String },
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Region { region } => f.write_str(region),
            Cell::Pair { a, b } => write!(f, "{a}~{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComparisonKey {
    pub paradigm: Paradigm,
    pub band: String,
    pub cell: Cell,
}

/// One row of a region table or one cell of an inter-region matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStatResult {
    pub key: ComparisonKey,
    pub mean_imagery: f64,
    pub mean_rest: f64,
    #[serde(with = "crate::io::float")]
    pub t: f64,
    #[serde(with = "crate::io::float")]
    pub p: f64,
    pub df: usize,
    pub n_subjects: usize,
    /// `p < threshold`.
    pub significant: bool,
    pub threshold: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub alpha: f64,
    /// Divide `alpha` by the number of comparisons in each table or matrix.
    pub bonferroni: bool,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            bonferroni: false,
        }
    }
}

/// Region or region-pair PLV of one subject's matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub subject: String,
    pub paradigm: Paradigm,
    pub condition: Condition,
    pub band: String,
    pub cell: Cell,
    pub value: f64,
}

struct ResolvedRegion {
    name: String,
    indices: Vec<usize>,
    whole: bool,
}

fn resolve_all(regions: &[RegionSpec], montage: &Montage) -> Result<Vec<ResolvedRegion>> {
    regions
        .iter()
        .map(|r| {
            Ok(ResolvedRegion {
                name: r.name.clone(),
                indices: resolve_region(r, montage)?,
                whole: r.is_whole_montage(),
            })
        })
        .collect()
}

/// Cells in report order: every region, then each unordered pair of
/// non-whole-montage regions in listing order.
pub fn cells_for(regions: &[RegionSpec]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = regions
        .iter()
        .map(|r| Cell::Region {
            region: r.name.clone(),
        })
        .collect();
    let named: Vec<&RegionSpec> = regions.iter().filter(|r| !r.is_whole_montage()).collect();
    for (i, a) in named.iter().enumerate() {
        for b in &named[i + 1..] {
            cells.push(Cell::Pair {
                a: a.name.clone(),
                b: b.name.clone(),
            });
        }
    }
    cells
}

fn cell_values(m: &PlvMatrix, resolved: &[ResolvedRegion]) -> Result<Vec<(Cell, f64)>> {
    let mut out = Vec::new();
    for r in resolved {
        out.push((
            Cell::Region {
                region: r.name.clone(),
            },
            intra_region_plv(m, &r.indices)?,
        ));
    }
    let named: Vec<&ResolvedRegion> = resolved.iter().filter(|r| !r.whole).collect();
    for (i, a) in named.iter().enumerate() {
        for b in &named[i + 1..] {
            out.push((
                Cell::Pair {
                    a: a.name.clone(),
                    b: b.name.clone(),
                },
                inter_region_plv(m, &a.indices, &b.indices)?,
            ));
        }
    }
    Ok(out)
}

/// Region and region-pair values of every matrix in the collection.
pub fn region_values(matrices: &PlvCollection, regions: &[RegionSpec], montage: &Montage) -> Result<Vec<CellValue>> {
    let resolved = resolve_all(regions, montage)?;
    let mut out = Vec::new();
    for (key, m) in matrices {
        check_size(key, m, montage)?;
        for (cell, value) in cell_values(m, &resolved)? {
            out.push(CellValue {
                subject: key.subject.clone(),
                paradigm: key.paradigm,
                condition: key.condition.clone(),
                band: key.band.clone(),
                cell,
                value,
            });
        }
    }
    Ok(out)
}

fn check_size(key: &MatrixKey, m: &PlvMatrix, montage: &Montage) -> Result<()> {
    if m.n_channels() != montage.count() {
        return Err(Error::ShapeMismatch(format!(
            "{}/{}/{}/{}: {} channels, montage has {}",
            key.subject,
            key.paradigm,
            key.condition,
            key.band,
            m.n_channels(),
            montage.count()
        )));
    }
    Ok(())
}

/// Paired t-tests of pooled imagery against rest for every paradigm present,
/// every band in `bands`, every region and every region pair.
pub fn run_comparisons(
    matrices: &PlvCollection,
    regions: &[RegionSpec],
    bands: &[BandSpec],
    montage: &Montage,
    options: &StatsOptions,
) -> Result<Vec<PairedStatResult>> {
    let resolved = resolve_all(regions, montage)?;
    let imagery = Condition::imagery();
    let rest = Condition::rest();
    let n_intra = regions.len();
    let n_inter = cells_for(regions).len() - n_intra;

    let paradigms: BTreeSet<Paradigm> = matrices.keys().map(|k| k.paradigm).collect();
    let mut results = Vec::new();
    for paradigm in paradigms {
        let subjects: BTreeSet<&str> = matrices
            .keys()
            .filter(|k| k.paradigm == paradigm)
            .map(|k| k.subject.as_str())
            .collect();
        for band in bands {
            let mut per_cell: BTreeMap<usize, (Cell, Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for &subject in &subjects {
                let lookup = |condition: &Condition| {
                    let key = MatrixKey {
                        subject: subject.to_string(),
                        paradigm,
                        condition: condition.clone(),
                        band: band.name.clone(),
                    };
                    match matrices.get(&key) {
                        Some(m) => check_size(&key, m, montage).map(|_| m),
                        None => Err(Error::MissingCondition {
                            subject: subject.to_string(),
                            condition: format!("{paradigm}/{condition}/{}", band.name),
                        }),
                    }
                };
                let im = cell_values(lookup(&imagery)?, &resolved)?;
                let re = cell_values(lookup(&rest)?, &resolved)?;
                for (pos, ((cell, vi), (_, vr))) in im.into_iter().zip(re).enumerate() {
                    let entry = per_cell.entry(pos).or_insert_with(|| (cell, Vec::new(), Vec::new()));
                    entry.1.push(vi);
                    entry.2.push(vr);
                }
            }
            for (_, (cell, xi, xr)) in per_cell {
                let family = if matches!(cell, Cell::Region { .. }) { n_intra } else { n_inter };
                let threshold = if options.bonferroni {
                    options.alpha / family.max(1) as f64
                } else {
                    options.alpha
                };
                let test = paired_t_test(&xi, &xr)?;
                results.push(PairedStatResult {
                    key: ComparisonKey {
                        paradigm,
                        band: band.name.clone(),
                        cell,
                    },
                    mean_imagery: test.mean_x,
                    mean_rest: test.mean_y,
                    t: test.t,
                    p: test.p,
                    df: test.df,
                    n_subjects: test.n,
                    significant: test.p < threshold,
                    threshold,
                    degenerate: test.degenerate,
                });
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn collection(shift: f64) -> (PlvCollection, Montage, Vec<RegionSpec>) {
        let montage = Montage::new(&["A", "B", "C", "D"]).unwrap();
        let regions = vec![
            RegionSpec::whole_brain(),
            RegionSpec::new("left", &["A", "B"]).unwrap(),
            RegionSpec::new("right", &["C", "D"]).unwrap(),
        ];
        let mut out = PlvCollection::new();
        for s in 0..5 {
            for (condition, delta) in [(Condition::imagery(), shift), (Condition::rest(), 0.0)] {
                let base = 0.3 + 0.01 * s as f64;
                let mut values = Array2::from_elem((4, 4), base);
                values[[0, 1]] += delta;
                values[[1, 0]] += delta;
                values.diag_mut().fill(1.0);
                out.insert(
                    MatrixKey {
                        subject: format!("S{s:02}"),
                        paradigm: Paradigm::ImaginedSpeech,
                        condition: condition.clone(),
                        band: "theta".into(),
                    },
                    PlvMatrix {
                        values,
                        band: BandSpec::theta(),
                        condition,
                        n_trials: 20,
                    },
                );
            }
        }
        (out, montage, regions)
    }

    #[test]
    fn cells_in_report_order() {
        let (_, _, regions) = collection(0.0);
        let cells = cells_for(&regions);
        assert_eq!(cells.len(), 4);
        assert_eq!(
            cells[3],
            Cell::Pair {
                a: "left".into(),
                b: "right".into()
            }
        );
    }

    #[test]
    fn equal_conditions_give_zero_t() {
        let (c, m, r) = collection(0.0);
        let res = run_comparisons(&c, &r, &[BandSpec::theta()], &m, &StatsOptions::default()).unwrap();
        assert_eq!(res.len(), 4);
        for x in &res {
            assert_eq!(x.t, 0.0);
            assert_eq!(x.p, 1.0);
            assert!(!x.significant);
            assert_eq!(x.df, 4);
        }
    }

    #[test]
    fn missing_rest_is_reported() {
        let (mut c, m, r) = collection(0.0);
        let key = c.keys().find(|k| k.subject == "S03" && k.condition.is_rest()).unwrap().clone();
        c.remove(&key);
        match run_comparisons(&c, &r, &[BandSpec::theta()], &m, &StatsOptions::default()) {
            Err(Error::MissingCondition { subject, .. }) => assert_eq!(subject, "S03"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bonferroni_divides_alpha_per_family() {
        let (c, m, r) = collection(-0.1);
        let opts = StatsOptions {
            alpha: 0.05,
            bonferroni: true,
        };
        let res = run_comparisons(&c, &r, &[BandSpec::theta()], &m, &opts).unwrap();
        assert_eq!(res[0].threshold, 0.05 / 3.0);
        assert_eq!(res[3].threshold, 0.05);
    }

    #[test]
    fn region_values_cover_every_cell() {
        let (c, m, r) = collection(0.2);
        let v = region_values(&c, &r, &m).unwrap();
        assert_eq!(v.len(), c.len() * 4);
        let left = v
            .iter()
            .find(|x| x.subject == "S00" && !x.condition.is_rest() && x.cell == Cell::Region { region: "left".into() })
            .unwrap();
        approx::assert_abs_diff_eq!(left.value, 0.5, epsilon = 1e-12);
    }
}
