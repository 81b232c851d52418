//! Tables, plots and the run manifest written at the end of a run.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use cranscope_core::albedo::{ClassHistogram, CLASSES};
use cranscope_core::meta::{parse_date, Variety};
use cranscope_core::synth::Palette;
use cranscope_core::timeline::{first_risk_date, RipenessSeries, VarietyRank};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult, DataExt};
use crate::io::{write_file, write_json};

pub const RIPENESS_CSV: &str = "ripeness.csv";
pub const HISTOGRAMS_CSV: &str = "histograms.csv";
pub const RISK_JSON: &str = "risk.json";
pub const VARIETIES_JSON: &str = "varieties.json";
pub const MANIFEST_JSON: &str = "manifest.json";

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> AppResult<()> {
    let bytes = w.into_inner().map_err(|e| AppError::file(path, e))?;
    write_file(path, &bytes)
}

/// One row per bog, one column per date; blank where a bog has no session.
pub fn write_ripeness_csv(path: &Path, series: &[RipenessSeries]) -> AppResult<()> {
    let dates: BTreeSet<NaiveDate> = series
        .iter()
        .flat_map(|s| s.dates.iter().copied())
        .collect();
    let mut w = csv_writer();
    let mut header = vec!["bog".to_string()];
    header.extend(dates.iter().map(|d| d.to_string()));
    w.write_record(&header)
        .map_err(|e| AppError::file(path, e))?;
    for s in series {
        let mut row = vec![s.bog_id.clone()];
        for d in &dates {
            row.push(
                s.dates
                    .iter()
                    .position(|x| x == d)
                    .map(|i| format!("{:.3}", s.ratios[i]))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row).map_err(|e| AppError::file(path, e))?;
    }
    finish(path, w)
}

/// Rows `bog,date,c1,c2,c3,c4,c5,count`.
pub fn write_histograms_csv(path: &Path, hists: &[ClassHistogram]) -> AppResult<()> {
    let mut w = csv_writer();
    w.write_record(["bog", "date", "c1", "c2", "c3", "c4", "c5", "count"])
        .map_err(|e| AppError::file(path, e))?;
    for h in hists {
        let mut row = vec![h.bog_id.clone(), h.date.to_string()];
        row.extend(h.fractions.iter().map(|f| format!("{f:.6}")));
        row.push(h.berry_count.to_string());
        w.write_record(&row).map_err(|e| AppError::file(path, e))?;
    }
    finish(path, w)
}

/// Parse a histogram CSV. Varieties are unknown at this point.
pub fn read_histograms_csv(path: &Path) -> AppResult<Vec<ClassHistogram>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::file(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| AppError::file(path, e))?;
        let bad = |what: &str| AppError::file(path, format!("row {}: {what}", line + 2));
        if rec.len() != 3 + CLASSES {
            return Err(bad("expected 8 fields"));
        }
        let date =
            parse_date(&rec[1]).context(|| format!("{} row {}", path.display(), line + 2))?;
        let mut fractions = [0.0; CLASSES];
        for (c, f) in fractions.iter_mut().enumerate() {
            *f = rec[2 + c]
                .parse()
                .map_err(|_| bad("class share is not a number"))?;
        }
        let berry_count = rec[7].parse().map_err(|_| bad("count is not an integer"))?;
        out.push(ClassHistogram {
            bog_id: rec[0].to_string(),
            variety: None,
            date,
            fractions,
            berry_count,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub bog: String,
    pub variety: Option<Variety>,
    pub first_risk_date: Option<NaiveDate>,
    pub threshold: f64,
}

pub fn risk_records(series: &[RipenessSeries]) -> Vec<RiskRecord> {
    series
        .iter()
        .map(|s| RiskRecord {
            bog: s.bog_id.clone(),
            variety: s.variety,
            first_risk_date: first_risk_date(s),
            threshold: s.threshold,
        })
        .collect()
}

pub fn write_risk_json(path: &Path, series: &[RipenessSeries]) -> AppResult<()> {
    write_json(path, &risk_records(series))
}

pub fn write_varieties_json(path: &Path, ranks: &[VarietyRank]) -> AppResult<()> {
    write_json(path, ranks)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn hex(rgb: &[f64; 3]) -> String {
    let b = rgb.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
    format!("#{:02x}{:02x}{:02x}", b[0], b[1], b[2])
}

const PANEL_W: f64 = 130.0;
const PANEL_H: f64 = 150.0;
const BAR_W: f64 = 18.0;
const MARGIN: f64 = 40.0;

/// Class-share bar chart for one bog: one panel per date, five bars each.
pub fn histogram_svg(bog_id: &str, hists: &[ClassHistogram], palette: &Palette) -> String {
    let width = MARGIN * 2.0 + PANEL_W * hists.len().max(1) as f64;
    let height = MARGIN * 2.0 + PANEL_H + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        s,
        r#"  <text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">Bog {}</text>"#,
        escape(bog_id)
    );
    let base = MARGIN + PANEL_H;
    for (p, h) in hists.iter().enumerate() {
        let x0 = MARGIN + PANEL_W * p as f64;
        let _ = writeln!(s, r#"  <g class="panel" data-date="{}">"#, h.date);
        let _ = writeln!(
            s,
            r##"    <line x1="{x0}" y1="{base}" x2="{}" y2="{base}" stroke="#444"/>"##,
            x0 + PANEL_W - 10.0
        );
        for (c, f) in h.fractions.iter().enumerate() {
            let bar_h = f.clamp(0.0, 1.0) * PANEL_H;
            let _ = writeln!(
                s,
                r#"    <rect class="bar" data-class="{}" x="{:.1}" y="{:.3}" width="{BAR_W}" height="{:.3}" fill="{}"/>"#,
                c + 1,
                x0 + 8.0 + c as f64 * (BAR_W + 4.0),
                base - bar_h,
                bar_h,
                hex(&palette.colors()[c])
            );
        }
        let _ = writeln!(
            s,
            r#"    <text x="{}" y="{}" font-family="sans-serif" font-size="11">{} (n={})</text>"#,
            x0 + 8.0,
            base + 16.0,
            h.date,
            h.berry_count
        );
        s.push_str("  </g>\n");
    }
    s.push_str("</svg>\n");
    s
}

pub fn svg_file_name(bog_id: &str) -> String {
    let safe: String = bog_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("histograms_{safe}.svg")
}

/// What produced a run. Contains no timestamps so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
    pub input_hash: String,
    pub input_files: usize,
    pub crops: usize,
    pub bogs: usize,
    /// Count MAE and IoU, where reported, are per crop.
    pub count_unit: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use cranscope_core::timeline::{series_from_fractions, RiskConfig};

    fn date(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn hist(bog: &str, d: &str, fractions: [f64; 5]) -> ClassHistogram {
        ClassHistogram {
            bog_id: bog.into(),
            variety: None,
            date: date(d),
            fractions,
            berry_count: 10,
        }
    }

    #[test]
    fn ripeness_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RiskConfig::default();
        let a = series_from_fractions(
            "A4",
            None,
            vec![date("2022-08-02"), date("2022-08-16")],
            vec![0.5, 0.4],
            &cfg,
        )
        .unwrap();
        let b = series_from_fractions(
            "K4",
            None,
            vec![date("2022-08-16"), date("2022-08-25")],
            vec![0.1, 0.2],
            &cfg,
        )
        .unwrap();
        let path = dir.path().join(RIPENESS_CSV);
        write_ripeness_csv(&path, &[a, b]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "bog,2022-08-02,2022-08-16,2022-08-25\nA4,1.250,1.000,\nK4,,0.500,1.000\n"
        );
    }

    #[test]
    fn histogram_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(HISTOGRAMS_CSV);
        let hs = vec![
            hist("A5", "2022-08-02", [0.5, 0.25, 0.125, 0.125, 0.0]),
            hist("A5", "2022-08-16", [0.0, 0.0, 0.0, 0.5, 0.5]),
        ];
        write_histograms_csv(&path, &hs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("bog,date,c1,c2,c3,c4,c5,count\n"));
        assert_eq!(read_histograms_csv(&path).unwrap(), hs);
    }

    #[test]
    fn svg_is_valid_xml_with_five_bars_per_panel() {
        let hs = vec![
            hist("A<5>", "2022-08-02", [0.2; 5]),
            hist("A<5>", "2022-08-16", [0.0, 0.0, 0.0, 0.5, 0.5]),
            hist("A<5>", "2022-08-25", [0.0, 0.0, 0.0, 0.0, 1.0]),
        ];
        let svg = histogram_svg("A<5>", &hs, &Palette::default());
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let panels: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("panel"))
            .collect();
        assert_eq!(panels.len(), 3);
        for p in panels {
            let bars = p
                .descendants()
                .filter(|n| n.attribute("class") == Some("bar"))
                .count();
            assert_eq!(bars, 5);
        }
        assert_eq!(svg_file_name("A<5>"), "histograms_A_5_.svg");
    }
}
