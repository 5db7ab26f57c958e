//! Report rendering against the committed published-table fixtures.

use std::fs;
use std::path::PathBuf;

use eeg_plv::io::report::{emit_interregion_matrix, emit_region_table, write_reports};
use eeg_plv::*;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/published")
}

fn published() -> Vec<PairedStatResult> {
    serde_json::from_str(&fs::read_to_string(fixtures().join("results.json")).unwrap()).unwrap()
}

#[test]
fn published_tables_render_byte_for_byte() {
    let results = published();
    let regions = RegionSpec::canonical();
    for paradigm in Paradigm::ALL {
        for band in BandSpec::canonical() {
            let table = emit_region_table(&results, paradigm, &band, &regions, &StatsOptions::default()).unwrap();
            let stem = format!("{}_{}", paradigm.as_str(), band.name);
            let csv = fs::read_to_string(fixtures().join(format!("expected/{stem}.csv"))).unwrap();
            let txt = fs::read_to_string(fixtures().join(format!("expected/{stem}.txt"))).unwrap();
            assert_eq!(table.to_csv(), csv, "{stem}.csv");
            assert_eq!(table.to_text(), txt, "{stem}.txt");
        }
    }
}

#[test]
fn published_flags_agree_with_the_threshold() {
    for r in published() {
        assert_eq!(r.significant, r.p < 0.05, "{:?}", r.key);
    }
}

#[test]
fn written_tables_match_the_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let results = published();
    let regions = RegionSpec::canonical();
    // The published set has no region-pair cells, so matrices cannot be built yet.
    assert!(write_reports(dir.path(), &results, &BandSpec::canonical(), &regions, &StatsOptions::default()).is_err());
    let mut all = results.clone();
    for paradigm in Paradigm::ALL {
        for band in BandSpec::canonical() {
            for cell in eeg_plv::compare::cells_for(&regions) {
                if matches!(cell, Cell::Pair { .. }) {
                    all.push(PairedStatResult {
                        key: ComparisonKey { paradigm, band: band.name.clone(), cell },
                        mean_imagery: 0.5,
                        mean_rest: 0.5,
                        t: 0.0,
                        p: 1.0,
                        df: 15,
                        n_subjects: 16,
                        significant: false,
                        threshold: 0.05,
                        degenerate: false,
                    });
                }
            }
        }
    }
    let written = write_reports(dir.path(), &all, &BandSpec::canonical(), &regions, &StatsOptions::default()).unwrap();
    assert_eq!(written.len(), 8 * 5);
    for entry in fs::read_dir(fixtures().join("expected")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("tables").join(name)).unwrap(),
            fs::read_to_string(&path).unwrap(),
            "{}",
            name.to_string_lossy()
        );
    }
}

#[test]
fn missing_region_is_incomplete() {
    let results: Vec<_> = published()
        .into_iter()
        .filter(|r| r.key.cell != Cell::Region { region: "sensory".into() })
        .collect();
    let err = emit_region_table(&results, Paradigm::ImaginedSpeech, &BandSpec::theta(), &RegionSpec::canonical(), &StatsOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::IncompleteResults(_)), "{err}");
}

fn pair_results(t_of: impl Fn(usize, usize) -> f64) -> Vec<PairedStatResult> {
    let regions = RegionSpec::canonical();
    let named: Vec<&RegionSpec> = regions.iter().filter(|r| !r.is_whole_montage()).collect();
    let mut out = Vec::new();
    for i in 0..named.len() {
        for k in i + 1..named.len() {
            let t = t_of(i, k);
            let p = if t == 0.0 { 1.0 } else { 0.01 };
            out.push(PairedStatResult {
                key: ComparisonKey {
                    paradigm: Paradigm::VisualImagery,
                    band: "alpha".into(),
                    cell: Cell::Pair { a: named[i].name.clone(), b: named[k].name.clone() },
                },
                mean_imagery: 0.4,
                mean_rest: 0.4,
                t,
                p,
                df: 15,
                n_subjects: 16,
                significant: p < 0.05,
                threshold: 0.05,
                degenerate: false,
            });
        }
    }
    out
}

#[test]
fn interregion_csv_is_symmetric() {
    let results = pair_results(|i, k| (i * 10 + k) as f64 / 7.0 - 3.0);
    let m = emit_interregion_matrix(&results, Paradigm::VisualImagery, &BandSpec::alpha(), &RegionSpec::canonical(), &StatsOptions::default())
        .unwrap();
    for csv in [m.t_csv(), m.mask_csv()] {
        let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').skip(1).map(String::from).collect()).collect();
        assert_eq!(rows.len(), 6);
        for i in 0..6 {
            assert_eq!(rows[i][i], "");
            for k in 0..6 {
                assert_eq!(rows[i][k], rows[k][i]);
            }
        }
    }
    assert!(m.to_svg().starts_with("<svg"));
    assert!(m.to_svg().trim_end().ends_with("</svg>"));
}

#[test]
fn identical_conditions_give_an_empty_mask() {
    let results = pair_results(|_, _| 0.0);
    let m = emit_interregion_matrix(&results, Paradigm::VisualImagery, &BandSpec::alpha(), &RegionSpec::canonical(), &StatsOptions::default())
        .unwrap();
    assert!(m.significant.iter().all(|s| !s));
    assert!(m.t.iter().all(|t| t.is_nan() || *t == 0.0));
    let missing = &results[1..];
    assert!(matches!(
        emit_interregion_matrix(missing, Paradigm::VisualImagery, &BandSpec::alpha(), &RegionSpec::canonical(), &StatsOptions::default()),
        Err(Error::IncompleteResults(_))
    ));
}
