use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "step,epoch,l_d,l_ae,l_gan_g,l_g,lr,wall_seconds";

/// One optimization step. `l_d` is absent when the critic step is skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: u64,
    pub l_d: Option<f64>,
    pub l_ae: f64,
    pub l_gan_g: f64,
    pub l_g: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

impl LogRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{}", self.loss_fields(), self.wall_seconds)
    }

    /// The line without wall time, for reproducibility comparisons.
    pub fn loss_fields(&self) -> String {
        let l_d = self.l_d.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.epoch, l_d, self.l_ae, self.l_gan_g, self.l_g, self.lr
        )
    }

    pub fn is_finite(&self) -> bool {
        self.l_d.is_none_or(f64::is_finite) && self.l_ae.is_finite() && self.l_gan_g.is_finite() && self.l_g.is_finite()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn push(&mut self, r: LogRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.step < r.step));
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{LOG_HEADER}\n");
        for r in &self.records {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<TrainLog> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::Dataset("train log: missing or unexpected header".into()));
        }
        let mut log = TrainLog::default();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Dataset(format!("train log line {}: malformed record", i + 2));
            if f.len() != 8 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            log.records.push(LogRecord {
                step: f[0].parse().map_err(|_| bad())?,
                epoch: f[1].parse().map_err(|_| bad())?,
                l_d: if f[2].is_empty() { None } else { Some(num(f[2])?) },
                l_ae: num(f[3])?,
                l_gan_g: num(f[4])?,
                l_g: num(f[5])?,
                lr: num(f[6])?,
                wall_seconds: num(f[7])?,
            });
        }
        Ok(log)
    }
}

/// Appends records to a CSV file, writing the header when the file is new or empty.
pub fn append_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let empty = f.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut s = String::new();
    if empty {
        s.push_str(LOG_HEADER);
        s.push('\n');
    }
    for r in records {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}
