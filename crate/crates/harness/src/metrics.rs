//! `metrics.csv`, format version 1.
//!
//! Columns, in order: `run_id, seed, step, episode, win_rate, mean_return,
//! valid_pct, loss, epsilon, wall_clock`. One row per evaluation point,
//! strictly increasing `step`. Floats use the shortest representation that
//! round-trips.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use asn_core::runner::MetricsRow;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

pub const COLUMNS: [&str; 10] = [
    "run_id",
    "seed",
    "step",
    "episode",
    "win_rate",
    "mean_return",
    "valid_pct",
    "loss",
    "epsilon",
    "wall_clock",
];

/// One `metrics.csv` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub step: u64,
    pub episode: u64,
    pub win_rate: f64,
    pub mean_return: f64,
    pub valid_pct: f64,
    pub loss: f64,
    pub epsilon: f64,
    /// Seconds since the run started, or 0 when not recorded.
    pub wall_clock: f64,
}

impl MetricsRecord {
    pub fn new(run_id: &str, seed: u64, row: &MetricsRow, wall_clock: f64) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            step: row.step,
            episode: row.episode,
            win_rate: row.win_rate,
            mean_return: row.mean_return,
            valid_pct: row.valid_pct,
            loss: row.loss,
            epsilon: row.epsilon,
            wall_clock,
        }
    }

    pub fn check(&self) -> Result<()> {
        ensure!((0.0..=1.0).contains(&self.win_rate), "win_rate {} outside [0, 1]", self.win_rate);
        ensure!((0.0..=100.0).contains(&self.valid_pct), "valid_pct {} outside [0, 100]", self.valid_pct);
        Ok(())
    }
}

/// Sole writer of one metrics file. The header is written on creation, so
/// a run without evaluation points leaves a header-only file.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(COLUMNS)?;
        inner.flush()?;
        Ok(Self { inner, last_step: None })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        record.check()?;
        if let Some(prev) = self.last_step {
            ensure!(record.step > prev, "metrics rows must have increasing steps ({} after {prev})", record.step);
        }
        self.last_step = Some(record.step);
        self.inner.serialize(record)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let file = self.inner.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        Ok(())
    }
}

/// Reads a metrics file, checking the header and every row.
pub fn read(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    ensure!(header == COLUMNS, "unexpected metrics header {header:?}");
    let mut rows = Vec::new();
    for r in reader.deserialize() {
        let r: MetricsRecord = r?;
        r.check()?;
        rows.push(r);
    }
    Ok(rows)
}

/// Writes any serializable rows as CSV with the given header.
pub fn write_table<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step,
            episode: step / 10,
            win_rate: 0.25,
            mean_return: -1.5,
            valid_pct: 62.5,
            loss: 0.1,
            epsilon: 0.05,
        }
    }

    #[test]
    fn header_only_then_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        MetricsWriter::create(&path).unwrap().finish().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", COLUMNS.join(",")));
        assert!(read(&path).unwrap().is_empty());

        let mut w = MetricsWriter::create(&path).unwrap();
        let a = MetricsRecord::new("r", 3, &row(10), 0.0);
        let b = MetricsRecord::new("r", 3, &row(20), 0.0);
        w.write(&a).unwrap();
        w.write(&b).unwrap();
        assert!(w.write(&a).is_err());
        w.finish().unwrap();
        assert_eq!(read(&path).unwrap(), vec![a, b]);
    }

    #[test]
    fn rows_outside_bounds_are_refused() {
        let mut r = MetricsRecord::new("r", 0, &row(1), 0.0);
        r.win_rate = 1.5;
        assert!(r.check().is_err());
        r.win_rate = 1.0;
        r.valid_pct = -0.1;
        assert!(r.check().is_err());
    }
}
