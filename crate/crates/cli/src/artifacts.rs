//! Output files and their readers.

use std::fs;
use std::path::{Path, PathBuf};

use dsm_core::{DayResult, SimulationReport};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEDULE_DIR: &str = "schedules";
pub const LOAD_CURVES: &str = "load_curves.csv";
pub const REPORT: &str = "report.json";
pub const MANIFEST: &str = "manifest.json";
pub const SWEEP_TABLE: &str = "sweep.csv";
pub const ORACLE: &str = "oracle.json";

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(dsm_core::Error::Shape(format!("{}: {other:?}", path.display()))),
    }
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable artifact");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(dsm_core::Error::Shape(format!("{}: {e}", path.display()))))
}

/// One row of a schedule file: the equilibrium decisions of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub player: usize,
    pub household: usize,
    pub decisions: Vec<f64>,
}

pub fn schedule_file(dir: &Path, day: usize) -> PathBuf {
    dir.join(SCHEDULE_DIR).join(format!("day_{day:03}.csv"))
}

pub fn write_schedule(path: &Path, result: &DayResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let horizon = result.scheduled.first().map_or(0, Vec::len);
    let header = ["player".to_string(), "household".to_string()]
        .into_iter()
        .chain((0..horizon).map(|t| format!("stage_{t}")));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for (n, (row, &m)) in result.scheduled.iter().zip(&result.participants).enumerate() {
        let record = [n.to_string(), m.to_string()]
            .into_iter()
            .chain(row.iter().map(|a| a.to_string()));
        w.write_record(record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_schedule(path: &Path) -> Result<Vec<ScheduleRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let bad = |line: usize, message: String| {
        CliError::Data(dsm_core::Error::Parse {
            path: path.display().to_string(),
            line: line as u64,
            message,
        })
    };
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let nums: Vec<&str> = record.iter().collect();
        if nums.len() < 2 {
            return Err(bad(i + 2, "missing player/household columns".into()));
        }
        let index = |s: &str| s.parse::<usize>().map_err(|e| bad(i + 2, e.to_string()));
        let decisions = nums[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(i + 2, e.to_string())))
            .collect::<Result<_, _>>()?;
        rows.push(ScheduleRow {
            player: index(nums[0])?,
            household: index(nums[1])?,
            decisions,
        });
    }
    Ok(rows)
}

/// Aggregate load per interval: raw demand, no-battery reference and the
/// executed equilibrium load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCurveRow {
    pub day: usize,
    pub interval: usize,
    pub demand: f64,
    pub reference: f64,
    pub ne_load: f64,
}

pub fn load_curve_rows(results: &[DayResult]) -> Vec<LoadCurveRow> {
    results
        .iter()
        .enumerate()
        .flat_map(|(day, r)| {
            (0..r.aggregate_load.len()).map(move |t| LoadCurveRow {
                day,
                interval: t,
                demand: r.demand_load[t],
                reference: r.reference_load[t],
                ne_load: r.aggregate_load[t],
            })
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// One row of the combined sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub neighbourhood: String,
    pub participants: usize,
    pub participation_rate: f64,
    pub error_magnitude: f64,
    pub par_reduction_mean: f64,
    pub par_reduction_std: f64,
    pub savings_mean: f64,
    pub savings_std: f64,
}

/// Writes the schedules, load curves and report of one simulated run.
/// Returns the written paths relative to `dir`.
pub fn write_run(
    dir: &Path,
    results: &[DayResult],
    report: &SimulationReport,
    schedules: bool,
) -> Result<Vec<String>, CliError> {
    create_dir(dir)?;
    let mut files = Vec::new();
    if schedules {
        create_dir(&dir.join(SCHEDULE_DIR))?;
        for (day, r) in results.iter().enumerate() {
            write_schedule(&schedule_file(dir, day), r)?;
            files.push(format!("{SCHEDULE_DIR}/day_{day:03}.csv"));
        }
    }
    write_rows(&dir.join(LOAD_CURVES), &load_curve_rows(results))?;
    files.push(LOAD_CURVES.into());
    write_json(&dir.join(REPORT), report)?;
    files.push(REPORT.into());
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsm_core::execution::{chain_days, report};
    use dsm_core::{synth_days, BatteryParams, Category, ForecastErrorSpec, Household, Scenario, SolverOptions, TariffParams};

    fn results() -> Vec<DayResult> {
        let mix = [Category::Low, Category::High, Category::Base];
        let sc = Scenario {
            households: vec![
                Household::participant(0, Category::Low, 0.3, BatteryParams::reference()),
                Household::non_participant(1, Category::High),
                Household::participant(2, Category::Base, 0.5, BatteryParams::reference()),
            ],
            dt: 1.0,
            tariff: TariffParams::default(),
            errors: ForecastErrorSpec::worst_case(0.08, 0.1),
            solver: SolverOptions::default(),
            initial_soc: 0.0,
            chain: true,
        };
        chain_days(&sc, &synth_days(11, &mix, 24, 150, 2)).unwrap()
    }

    #[test]
    fn schedules_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = results();
        let path = dir.path().join("s.csv");
        write_schedule(&path, &r[1]).unwrap();
        let back = read_schedule(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!((back[1].player, back[1].household), (1, 2));
        for (row, sched) in back.iter().zip(&r[1].scheduled) {
            assert_eq!(&row.decisions, sched);
        }
    }

    #[test]
    fn load_curves_and_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = results();
        let rep = report(&r);
        let files = write_run(dir.path(), &r, &rep, true).unwrap();
        assert_eq!(files.len(), 4);
        let rows: Vec<LoadCurveRow> = read_rows(&dir.path().join(LOAD_CURVES)).unwrap();
        assert_eq!(rows, load_curve_rows(&r));
        let back: SimulationReport = read_json(&dir.path().join(REPORT)).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn sweep_table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![SweepRow {
            neighbourhood: "MIXED".into(),
            participants: 4,
            participation_rate: 0.16,
            error_magnitude: 0.3,
            par_reduction_mean: -0.123456789012345,
            par_reduction_std: 0.01,
            savings_mean: 0.05,
            savings_std: f64::NAN,
        }];
        let path = dir.path().join(SWEEP_TABLE);
        write_rows(&path, &rows).unwrap();
        let back: Vec<SweepRow> = read_rows(&path).unwrap();
        assert_eq!(back[0].par_reduction_mean, rows[0].par_reduction_mean);
        assert!(back[0].savings_std.is_nan());
    }

    #[test]
    fn malformed_schedule_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "player,household,stage_0\n0,1,abc\n").unwrap();
        assert_eq!(read_schedule(&path).unwrap_err().exit_code(), 3);
    }
}
