//! Region tables, inter-region matrices and flat result listings.
//!
//! Displayed PLV means carry 2 decimals, t and p carry 3. A p-value below
//! 0.001 prints as `< 0.001`, as does a t-value whose magnitude is below
//! 0.001. CSV outputs repeat every number at full precision.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::compare::{Cell, ComparisonKey, PairedStatResult, StatsOptions};
use crate::error::{Error, Result};
use crate::model::{BandSpec, Paradigm, RegionSpec};

pub const TABLE_CSV_HEADER: &str =
    "Region,Imagery,Rest,t-value,p-value,Significant,imagery_mean,rest_mean,t,p,df,n_subjects";
pub const RESULTS_CSV_HEADER: &str =
    "paradigm,band,cell,region_a,region_b,mean_imagery,mean_rest,t,p,df,n_subjects,threshold,significant,degenerate";

pub fn format_mean(v: f64) -> String {
    format!("{v:.2}")
}

pub fn format_t(t: f64) -> String {
    if t.abs() < 0.001 {
        "< 0.001".into()
    } else {
        format!("{t:.3}")
    }
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

/// Shortest representation that parses back to the same value.
pub fn format_full(v: f64) -> String {
    format!("{v}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn find<'a>(results: &'a [PairedStatResult], key: &ComparisonKey) -> Option<&'a PairedStatResult> {
    results.iter().find(|r| &r.key == key)
}

fn footnote(options: &StatsOptions, family: usize) -> String {
    if options.bonferroni {
        format!(
            "* significant (p < {}, Bonferroni-corrected over {family} comparisons)",
            options.alpha
        )
    } else {
        format!("* significant (p < {})", options.alpha)
    }
}

/// One row per region in listing order.
#[derive(Debug, Clone)]
pub struct RegionTable {
    pub paradigm: Paradigm,
    pub band: BandSpec,
    pub rows: Vec<(String, PairedStatResult)>,
    pub options: StatsOptions,
}

/// Collects the rows of one table; every region must have a result.
pub fn emit_region_table(
    results: &[PairedStatResult],
    paradigm: Paradigm,
    band: &BandSpec,
    regions: &[RegionSpec],
    options: &StatsOptions,
) -> Result<RegionTable> {
    let rows = regions
        .iter()
        .map(|r| {
            let key = ComparisonKey {
                paradigm,
                band: band.name.clone(),
                cell: Cell::Region { region: r.name.clone() },
            };
            find(results, &key)
                .map(|res| (r.display_label().to_string(), res.clone()))
                .ok_or_else(|| {
                    Error::IncompleteResults(format!("no result for region `{}` in {paradigm}/{}", r.name, band.name))
                })
        })
        .collect::<Result<_>>()?;
    Ok(RegionTable {
        paradigm,
        band: band.clone(),
        rows,
        options: *options,
    })
}

impl RegionTable {
    pub fn title(&self) -> String {
        format!(
            "Comparison Between PLV of {} and Resting State ({} Frequency Range)",
            self.paradigm.title(),
            self.band.range_label()
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(TABLE_CSV_HEADER);
        out.push('\n');
        for (label, r) in &self.rows {
            let fields = [
                csv_field(label),
                format_mean(r.mean_imagery),
                format_mean(r.mean_rest),
                format_t(r.t),
                format_p(r.p),
                if r.significant { "*".into() } else { String::new() },
                format_full(r.mean_imagery),
                format_full(r.mean_rest),
                format_full(r.t),
                format_full(r.p),
                r.df.to_string(),
                r.n_subjects.to_string(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Fixed-width rendering; significant rows carry a trailing `*`.
    pub fn to_text(&self) -> String {
        let header = ["Region", "Imagery", "Rest", "t-value", "p-value"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|(label, r)| {
                [
                    label.clone(),
                    format_mean(r.mean_imagery),
                    format_mean(r.mean_rest),
                    format_t(r.t),
                    format_p(r.p),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: [&str; 5], mark: &str| {
            let mut s = format!("{:<w$}", row[0], w = widths[0]);
            for (c, w) in row[1..].iter().zip(&widths[1..]) {
                let _ = write!(s, "  {c:>w$}");
            }
            if !mark.is_empty() {
                s.push_str("  ");
                s.push_str(mark);
            }
            s.push('\n');
            s
        };
        let mut out = format!(
            "Comparison Between PLV of {} and Resting State\n({} Frequency Range)\n\n",
            self.paradigm.title(),
            self.band.range_label()
        );
        out.push_str(&line(header, ""));
        let rule = widths.map(|w| "-".repeat(w));
        out.push_str(&line([&rule[0], &rule[1], &rule[2], &rule[3], &rule[4]], ""));
        for (row, (_, r)) in cells.iter().zip(&self.rows) {
            let row = [&*row[0], &*row[1], &*row[2], &*row[3], &*row[4]];
            out.push_str(&line(row, if r.significant { "*" } else { "" }));
        }
        out.push('\n');
        out.push_str(&footnote(&self.options, self.rows.len()));
        out.push('\n');
        out
    }
}

/// Symmetric t-value grid and significance mask over the named regions.
#[derive(Debug, Clone)]
pub struct InterRegionMatrix {
    pub paradigm: Paradigm,
    pub band: BandSpec,
    pub names: Vec<String>,
    pub shorts: Vec<String>,
    /// NaN on the diagonal.
    pub t: Array2<f64>,
    pub significant: Array2<bool>,
    pub options: StatsOptions,
}

/// Assembles the grid over every non-whole-montage region in listing order.
pub fn emit_interregion_matrix(
    results: &[PairedStatResult],
    paradigm: Paradigm,
    band: &BandSpec,
    regions: &[RegionSpec],
    options: &StatsOptions,
) -> Result<InterRegionMatrix> {
    let named: Vec<&RegionSpec> = regions.iter().filter(|r| !r.is_whole_montage()).collect();
    let n = named.len();
    let mut t = Array2::from_elem((n, n), f64::NAN);
    let mut significant = Array2::from_elem((n, n), false);
    for i in 0..n {
        for k in i + 1..n {
            let key = ComparisonKey {
                paradigm,
                band: band.name.clone(),
                cell: Cell::Pair {
                    a: named[i].name.clone(),
                    b: named[k].name.clone(),
                },
            };
            let r = find(results, &key).ok_or_else(|| {
                Error::IncompleteResults(format!(
                    "no result for region pair `{}`-`{}` in {paradigm}/{}",
                    named[i].name, named[k].name, band.name
                ))
            })?;
            t[[i, k]] = r.t;
            t[[k, i]] = r.t;
            significant[[i, k]] = r.significant;
            significant[[k, i]] = r.significant;
        }
    }
    Ok(InterRegionMatrix {
        paradigm,
        band: band.clone(),
        names: named.iter().map(|r| r.name.clone()).collect(),
        shorts: named
            .iter()
            .map(|r| if r.short.is_empty() { r.name.clone() } else { r.short.clone() })
            .collect(),
        t,
        significant,
        options: *options,
    })
}

fn hex(rgb: (u8, u8, u8)) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb.0, rgb.1, rgb.2)
}

/// Blue for negative, red for positive, white at zero.
fn diverging(v: f64) -> (u8, u8, u8) {
    let (end, x) = if v < 0.0 { ((59.0, 76.0, 192.0), -v) } else { ((180.0, 4.0, 38.0), v) };
    let x = x.clamp(0.0, 1.0);
    let mix = |e: f64| (255.0 + (e - 255.0) * x).round() as u8;
    (mix(end.0), mix(end.1), mix(end.2))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl InterRegionMatrix {
    fn grid_csv(&self, cell: impl Fn(usize, usize) -> String) -> String {
        let mut out = String::from("region");
        for name in &self.names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(&csv_field(name));
            for k in 0..self.names.len() {
                out.push(',');
                if i != k {
                    out.push_str(&cell(i, k));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Full-precision t-values; the diagonal is left empty.
    pub fn t_csv(&self) -> String {
        self.grid_csv(|i, k| format_full(self.t[[i, k]]))
    }

    /// `1` where significant, `0` elsewhere; the diagonal is left empty.
    pub fn mask_csv(&self) -> String {
        self.grid_csv(|i, k| if self.significant[[i, k]] { "1".into() } else { "0".into() })
    }

    /// Two panels: (a) t-values on a diverging scale, (b) significance in white.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 48;
        const MARGIN: usize = 40;
        const TOP: usize = 56;
        let n = self.names.len();
        let panel = n * CELL;
        let width = 3 * MARGIN + 2 * panel;
        let height = TOP + panel + 64;
        let scale = self
            .t
            .iter()
            .filter(|v| v.is_finite())
            .fold(1.0f64, |m, v| m.max(v.abs()));

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{} vs resting state, {} ({})</text>"#,
            width / 2,
            xml_escape(self.paradigm.title()),
            xml_escape(&self.band.name),
            xml_escape(&self.band.range_label())
        );
        for (p, caption) in [(0usize, "(a) t-values"), (1, "(b) p < threshold (white)")] {
            let x0 = MARGIN + p * (panel + MARGIN);
            let _ = writeln!(s, r#"<g transform="translate({x0},{TOP})">"#);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="-22" text-anchor="middle">{}</text>"#,
                panel / 2,
                xml_escape(caption)
            );
            for (i, short) in self.shorts.iter().enumerate() {
                let c = i * CELL + CELL / 2;
                let label = xml_escape(short);
                let _ = writeln!(s, r#"<text x="{c}" y="-6" text-anchor="middle">{label}</text>"#);
                let _ = writeln!(s, r#"<text x="-6" y="{}" text-anchor="end">{label}</text>"#, c + 4);
            }
            for i in 0..n {
                for k in 0..n {
                    let (x, y) = (k * CELL, i * CELL);
                    let fill = if i == k {
                        "#bdbdbd".to_string()
                    } else if p == 0 {
                        let t = self.t[[i, k]];
                        if t.is_nan() {
                            "#bdbdbd".to_string()
                        } else {
                            hex(diverging(t / scale))
                        }
                    } else if self.significant[[i, k]] {
                        "#ffffff".to_string()
                    } else {
                        "#000000".to_string()
                    };
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#808080" stroke-width="0.5"/>"##
                    );
                    if p == 0 && i != k {
                        let _ = writeln!(
                            s,
                            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{:.2}</text>"#,
                            x + CELL / 2,
                            y + CELL / 2 + 4,
                            self.t[[i, k]]
                        );
                    }
                }
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{}">color scale: t from {:.3} (blue) to {:.3} (red)</text>"#,
            TOP + panel + 24,
            -scale,
            scale
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{}">{}</text>"#,
            TOP + panel + 44,
            xml_escape(&footnote(&self.options, n * (n.saturating_sub(1)) / 2).replacen("* ", "white: ", 1))
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Every result as one CSV row, in the order given.
pub fn results_csv(results: &[PairedStatResult]) -> String {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for r in results {
        let (cell, a, b) = match &r.key.cell {
            Cell::Region { region } => ("region", region.as_str(), ""),
            Cell::Pair { a, b } => ("pair", a.as_str(), b.as_str()),
        };
        let fields = [
            r.key.paradigm.as_str().to_string(),
            csv_field(&r.key.band),
            cell.into(),
            csv_field(a),
            csv_field(b),
            format_full(r.mean_imagery),
            format_full(r.mean_rest),
            format_full(r.t),
            format_full(r.p),
            r.df.to_string(),
            r.n_subjects.to_string(),
            format_full(r.threshold),
            r.significant.to_string(),
            r.degenerate.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes region tables and inter-region matrices for every paradigm present
/// in `results` and every band in `bands`. Returns paths relative to `dir`.
pub fn write_reports(
    dir: &Path,
    results: &[PairedStatResult],
    bands: &[BandSpec],
    regions: &[RegionSpec],
    options: &StatsOptions,
) -> Result<Vec<PathBuf>> {
    let mut paradigms: Vec<Paradigm> = results.iter().map(|r| r.key.paradigm).collect();
    paradigms.sort();
    paradigms.dedup();
    let has_pairs = regions.iter().filter(|r| !r.is_whole_montage()).count() >= 2;
    let mut written = Vec::new();
    let mut emit = |rel: PathBuf, text: String| -> Result<()> {
        write_text(&dir.join(&rel), &text)?;
        written.push(rel);
        Ok(())
    };
    for paradigm in paradigms {
        for band in bands {
            let stem = format!("{}_{}", paradigm.as_str(), band.name);
            let table = emit_region_table(results, paradigm, band, regions, options)?;
            emit(PathBuf::from("tables").join(format!("{stem}.csv")), table.to_csv())?;
            emit(PathBuf::from("tables").join(format!("{stem}.txt")), table.to_text())?;
            if has_pairs {
                let m = emit_interregion_matrix(results, paradigm, band, regions, options)?;
                emit(PathBuf::from("matrices").join(format!("{stem}_t.csv")), m.t_csv())?;
                emit(PathBuf::from("matrices").join(format!("{stem}_mask.csv")), m.mask_csv())?;
                emit(PathBuf::from("matrices").join(format!("{stem}.svg")), m.to_svg())?;
            }
        }
    }
    Ok(written)
}
