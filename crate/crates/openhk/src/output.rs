//! CSV and JSON emission for external plotting and analysis.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! f64 exactly; `read_series` is the matching reader used to verify that.

use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::ensemble::{EnsembleStats, StatSeries, TimeGrid};
use crate::open_process::Trace;

pub const SERIES_HEADER: &str =
    "t,mean_U0,var_U0,mean_U,var_U,mean_V,var_V,mean_W0,var_W0,mean_n,var_n,count";
pub const EVENTS_HEADER: &str = "time,kind,agent_id,opinion,n_after";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

/// 17 significant digits: enough to reproduce any f64 bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Write { path: path.into(), source })
}

/// Write ensemble statistics as one CSV row per grid point.
pub fn write_series(stats: &EnsembleStats, path: &Path) -> Result<(), OutputError> {
    let mut out = String::with_capacity(64 * (stats.grid.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for (k, &t) in stats.grid.points().iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        for series in [&stats.u0, &stats.u_local, &stats.v_local, &stats.w0, &stats.population] {
            row.push(fmt_f64(series.mean[k]));
            row.push(fmt_f64(series.variance[k]));
        }
        row.push(stats.count.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read back a series CSV written by [`write_series`].
pub fn read_series(path: &Path) -> Result<EnsembleStats, OutputError> {
    let malformed = |line: usize, reason: String| OutputError::Malformed {
        path: path.into(),
        line,
        reason,
    };
    let text =
        fs::read_to_string(path).map_err(|source| OutputError::Read { path: path.into(), source })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty file".into()))?;
    if header != SERIES_HEADER {
        return Err(malformed(1, format!("unexpected header `{header}`")));
    }
    let mut ts = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 10];
    let mut count: Option<usize> = None;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(malformed(i + 1, format!("expected 12 fields, got {}", fields.len())));
        }
        let parse =
            |s: &str| s.parse::<f64>().map_err(|e| malformed(i + 1, format!("bad float: {e}")));
        ts.push(parse(fields[0])?);
        for (c, field) in fields[1..11].iter().enumerate() {
            columns[c].push(parse(field)?);
        }
        let c = fields[11]
            .parse::<usize>()
            .map_err(|e| malformed(i + 1, format!("bad count: {e}")))?;
        if *count.get_or_insert(c) != c {
            return Err(malformed(i + 1, "inconsistent realization count".into()));
        }
    }
    let grid = TimeGrid::from_points(ts).map_err(|reason| malformed(0, reason))?;
    let mut take = columns.into_iter();
    let mut stat = || StatSeries { mean: take.next().unwrap(), variance: take.next().unwrap() };
    Ok(EnsembleStats {
        grid,
        u0: stat(),
        u_local: stat(),
        v_local: stat(),
        w0: stat(),
        population: stat(),
        count: count.ok_or_else(|| malformed(2, "no data rows".into()))?,
    })
}

/// Write a realization's event log: arrivals, departures, topology switches.
pub fn write_events(trace: &Trace, path: &Path) -> Result<(), OutputError> {
    let mut out = String::with_capacity(32 * (trace.events.len() + 1));
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    for ev in &trace.events {
        let agent = ev.agent.map(|id| id.to_string()).unwrap_or_default();
        let opinion = ev.opinion.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(ev.time),
            ev.kind.as_str(),
            agent,
            opinion,
            ev.n_after
        ));
    }
    write_file(path, &out)
}

/// Write the run manifest: artifact version, master seed, and the full
/// normalized config the outputs were produced from.
pub fn write_manifest(config: &ScenarioConfig, path: &Path) -> Result<(), OutputError> {
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": config.seed,
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(path, &text)
}

/// Convenience for writing into a directory that may not exist yet.
pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Write { path: dir.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{aggregate, ObservableSeries};
    use crate::open_process::{simulate_realization, EventKind, OpinionLaw, RealizationConfig};

    fn tiny_stats() -> EnsembleStats {
        let grid = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let series = ObservableSeries {
            grid: grid.clone(),
            u0: vec![0.1, 0.2],
            u_local: vec![0.3, 0.4],
            v_local: vec![0.5, 0.6],
            w0: vec![0.7, 0.8],
            population: vec![10.0, 11.0],
        };
        let mut other = series.clone();
        other.u0 = vec![1.0 / 3.0, 2.0 / 3.0];
        aggregate(&[series, other]).unwrap()
    }

    #[test]
    fn two_point_grid_writes_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_series(&tiny_stats(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], SERIES_HEADER);
    }

    #[test]
    fn series_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let stats = tiny_stats();
        write_series(&stats, &path).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(stats, back);
    }

    #[test]
    fn write_into_missing_directory_reports_path() {
        let err = write_series(&tiny_stats(), Path::new("/nonexistent/dir/series.csv"));
        let msg = err.unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/dir/series.csv"), "{msg}");
    }

    #[test]
    fn events_csv_of_closed_run_has_only_switch_rows() {
        let cfg = RealizationConfig {
            n0: 10,
            init_law: OpinionLaw::uniform(0.0, 6.0),
            t_end: 3.0,
            step: 1e-3,
            grid: TimeGrid::uniform(0.0, 3.0, 11).unwrap(),
            churn: None,
        };
        let trace = simulate_realization(&cfg, 42, 0).unwrap();
        assert!(!trace.events.is_empty(), "expected switches in this run");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events_0.csv");
        write_events(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), EVENTS_HEADER);
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[1], "switch");
            assert_eq!(fields[2], "");
            assert_eq!(fields[3], "");
            assert_eq!(fields[4], "10");
        }
    }

    #[test]
    fn events_csv_population_column_tracks_churn() {
        use crate::open_process::Churn;
        let cfg = RealizationConfig {
            n0: 5,
            init_law: OpinionLaw::uniform(0.0, 6.0),
            t_end: 2.0,
            step: 5e-3,
            grid: TimeGrid::uniform(0.0, 2.0, 11).unwrap(),
            churn: Some(Churn {
                lambda_arrival: 5.0,
                lambda_departure: 0.4,
                arrival_law: OpinionLaw::uniform(0.0, 6.0),
            }),
        };
        let trace = simulate_realization(&cfg, 7, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events_0.csv");
        write_events(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut n = cfg.n0 as i64;
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            match fields[1] {
                "arrival" => n += 1,
                "departure" => n -= 1,
                _ => {}
            }
            assert_eq!(fields[4].parse::<i64>().unwrap(), n);
        }
        let arrivals = trace.events.iter().filter(|e| e.kind == EventKind::Arrival).count();
        assert!(arrivals > 0);
    }

    #[test]
    fn manifest_echoes_config_and_seed() {
        let cfg = crate::config::parse_config(
            r#"{"mode": "closed", "n0": 3, "a": 0.0, "b": 6.0, "t_end": 1.0, "seed": 9}"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        write_manifest(&cfg, &path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value["master_seed"], 9);
        assert_eq!(value["config"]["n0"], 3);
        assert_eq!(value["version"], env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn fmt_round_trips_awkward_floats() {
        for x in [0.1, 1.0 / 3.0, 2.0_f64.sqrt(), 1e-300, -0.0, 12.5, 6.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }
}
