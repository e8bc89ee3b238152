//! CSV and plot-data output for evaluation rows.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PerformanceRow;
use crate::error::{Error, Result};

pub const PLOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    PlotJson,
}

/// Plot data: one panel per hypothesis pair, one series per design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotDocument {
    pub schema_version: u32,
    pub panels: Vec<PlotPanel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPanel {
    pub p0: f64,
    pub p1: f64,
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub design: String,
    pub max_n: u32,
    pub points: Vec<PerformanceRow>,
}

pub fn write_csv<W: Write>(rows: &[PerformanceRow], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<PerformanceRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Groups rows by `(p0, p1)` and then by design label, keeping first-seen order.
pub fn plot_json(rows: &[PerformanceRow]) -> Result<PlotDocument> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let mut panels: Vec<PlotPanel> = Vec::new();
    for row in rows {
        let panel = match panels.iter().position(|p| p.p0 == row.p0 && p.p1 == row.p1) {
            Some(i) => &mut panels[i],
            None => {
                panels.push(PlotPanel { p0: row.p0, p1: row.p1, series: Vec::new() });
                panels.last_mut().expect("just pushed")
            }
        };
        let series = match panel.series.iter().position(|s| s.design == row.design) {
            Some(i) => &mut panel.series[i],
            None => {
                panel.series.push(PlotSeries { design: row.design.clone(), max_n: row.max_n, points: Vec::new() });
                panel.series.last_mut().expect("just pushed")
            }
        };
        series.points.push(row.clone());
    }
    Ok(PlotDocument { schema_version: PLOT_SCHEMA_VERSION, panels })
}

/// Writes `rows` to `path` in the requested format.
pub fn emit_results(rows: &[PerformanceRow], format: OutputFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    match format {
        OutputFormat::Csv => write_csv(rows, file),
        OutputFormat::PlotJson => {
            let mut file = file;
            serde_json::to_writer_pretty(&mut file, &plot_json(rows)?)?;
            file.write_all(b"\n").map_err(io_err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{evaluate_oc, EvalMode, ScenarioGrid};
    use proptest::prelude::*;

    #[test]
    fn empty_rows_rejected() {
        assert!(matches!(write_csv(&[], Vec::new()), Err(Error::EmptyRows)));
        assert!(matches!(plot_json(&[]), Err(Error::EmptyRows)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        assert!(matches!(emit_results(&[], OutputFormat::Csv, &path), Err(Error::EmptyRows)));
    }

    #[test]
    fn io_errors_carry_path() {
        let rows = evaluate_oc(&ScenarioGrid::single(0.1, 0.5), EvalMode::Exact).unwrap();
        let err = emit_results(&rows, OutputFormat::Csv, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }

    #[test]
    fn oc_panel_has_four_series() {
        let rows = evaluate_oc(&ScenarioGrid::single(0.1, 0.35), EvalMode::Exact).unwrap();
        let doc = plot_json(&rows).unwrap();
        assert_eq!(doc.panels.len(), 1);
        let names: Vec<&str> = doc.panels[0].series.iter().map(|s| s.design.as_str()).collect();
        assert_eq!(names, ["Proposed", "Fixed", "Minimax", "Optimal"]);
        assert!(doc.panels[0].series.iter().all(|s| s.points.len() == 12));
        assert_eq!(doc.panels[0].series[0].max_n, 22);
    }

    #[test]
    fn csv_round_trip_with_monte_carlo_rows() {
        let rows =
            evaluate_oc(&ScenarioGrid::single(0.1, 0.5), EvalMode::MonteCarlo { replications: 500, seed: 3 }).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn csv_round_trips_arbitrary_values(power in 0.0f64..=1.0, asn in 0.0f64..500.0, bias in proptest::option::of(-1.0f64..1.0), seed in proptest::option::of(any::<u64>())) {
            let rows = evaluate_oc(&ScenarioGrid { p_true: vec![0.3], ..ScenarioGrid::single(0.1, 0.5) }, EvalMode::Exact).unwrap();
            let mut row = rows[0].clone();
            row.power = power;
            row.asn = asn;
            row.bias_naive = bias;
            row.seed = seed;
            let mut buf = Vec::new();
            write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
            prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![row]);
        }
    }
}
