//! Machine-readable run reports: per-epoch CSV plus a JSON summary.
//!
//! Wall-clock times go to a separate `timing.csv` so that `report.csv` and
//! `summary.json` are byte-identical across runs with the same seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{lr_at, Schedule};

pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TIMING_CSV: &str = "timing.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Top-1 error of the training-mode predictions seen during the epoch.
    pub train_error: f64,
    pub val_error: Option<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub train_loss: Option<f64>,
    pub train_error: Option<f64>,
    pub val_error: Option<f64>,
    pub test_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub algebra_dim: usize,
    pub seed: u64,
    pub config_hash: String,
    pub steps: u64,
    pub final_metrics: FinalMetrics,
    #[serde(skip)]
    pub rows: Vec<EpochRow>,
}

impl RunReport {
    pub fn new(command: &str, algebra_dim: usize, seed: u64, config_hash: String) -> Self {
        Self {
            command: command.into(),
            algebra_dim,
            seed,
            config_hash,
            steps: 0,
            final_metrics: FinalMetrics::default(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; epochs must strictly increase.
    pub fn push(&mut self, row: EpochRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::Domain(format!("epoch {} after epoch {}", row.epoch, last.epoch)));
            }
        }
        self.final_metrics.train_loss = Some(row.train_loss);
        self.final_metrics.train_error = Some(row.train_error);
        self.final_metrics.val_error = row.val_error;
        self.rows.push(row);
        Ok(())
    }

    /// Checks the rate column against the schedule.
    pub fn check_schedule(&self, schedule: &Schedule) -> Result<()> {
        for r in &self.rows {
            let expected = lr_at(schedule, r.epoch)?;
            if r.lr != expected {
                return Err(Error::Domain(format!("epoch {}: lr {} but schedule gives {expected}", r.epoch, r.lr)));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(["epoch", "lr", "train_loss", "train_error", "val_error"])
                .map_err(csv_err)?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,wall_time_s\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.3}\n", r.epoch, r.wall_time_s));
        }
        s
    }

    /// Writes `report.csv`, `summary.json` and `timing.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(REPORT_CSV), self.to_csv()?)?;
        fs::write(dir.join(SUMMARY_JSON), self.summary_json()?)?;
        fs::write(dir.join(TIMING_CSV), self.timing_csv())?;
        Ok(())
    }

    /// Reads back a report written by [`RunReport::write_dir`]; wall times
    /// are not restored.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let summary = fs::read_to_string(dir.join(SUMMARY_JSON))?;
        let mut report: Self = serde_json::from_str(&summary).map_err(|e| Error::Format(e.to_string()))?;
        let mut r = csv::Reader::from_path(dir.join(REPORT_CSV)).map_err(csv_err)?;
        for row in r.deserialize() {
            report.rows.push(row.map_err(csv_err)?);
        }
        Ok(report)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, lr: f64, wall: f64) -> EpochRow {
        EpochRow {
            epoch,
            lr,
            train_loss: 0.6931471805599453,
            train_error: 0.25,
            val_error: if epoch == 0 { None } else { Some(0.125) },
            wall_time_s: wall,
        }
    }

    fn report(wall: f64) -> RunReport {
        let mut r = RunReport::new("train", 8, 3, "abc".into());
        r.push(row(0, 0.01, wall)).unwrap();
        r.push(row(1, 0.1, wall * 2.0)).unwrap();
        r.steps = 10;
        r
    }

    #[test]
    fn csv_layout() {
        let csv = report(1.0).to_csv().unwrap();
        assert_eq!(
            csv,
            "epoch,lr,train_loss,train_error,val_error\n0,0.01,0.6931471805599453,0.25,\n1,0.1,0.6931471805599453,0.25,0.125\n"
        );
    }

    #[test]
    fn wall_time_only_in_timing_file() {
        let (a, b) = (report(1.0), report(7.5));
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
        assert_ne!(a.timing_csv(), b.timing_csv());
    }

    #[test]
    fn rows_must_increase() {
        let mut r = report(1.0);
        assert!(r.push(row(1, 0.1, 0.0)).is_err());
        assert!(r.push(row(0, 0.1, 0.0)).is_err());
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(1.0);
        r.write_dir(dir.path()).unwrap();
        let mut back = RunReport::read_dir(dir.path()).unwrap();
        back.rows.iter_mut().zip(&r.rows).for_each(|(b, a)| b.wall_time_s = a.wall_time_s);
        assert_eq!(back, r);
        assert_eq!(back.final_metrics.val_error, Some(0.125));
    }

    #[test]
    fn schedule_column_check() {
        let sched = Schedule::convex().fit_to(2);
        let mut r = report(1.0);
        assert!(r.check_schedule(&sched).is_err());
        r.rows[1].lr = 0.01;
        r.check_schedule(&sched).unwrap();
    }
}
