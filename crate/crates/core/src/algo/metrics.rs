//! Training metrics and their CSV form.
//!
//! Files open with a `# schema=b3c-metrics/1` line followed by a header row.
//! Reals are written in Rust's shortest round-trip form, so reading a file
//! back yields the exact values that were logged.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_SCHEMA: &str = "b3c-metrics/1";

pub const METRICS_COLUMNS: [&str; 10] = [
    "step",
    "eval_return",
    "critic_loss",
    "policy_loss_rl",
    "policy_loss_bc",
    "w",
    "target_q_mean",
    "target_q_max",
    "clip_active_fraction",
    "diverged_at",
];

/// One evaluation point. Loss, weight and target statistics summarize the
/// training steps since the previous record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub eval_return: f64,
    pub critic_loss: f64,
    pub policy_loss_rl: f64,
    pub policy_loss_bc: f64,
    pub w: f64,
    pub target_q_mean: f64,
    pub target_q_max: f64,
    pub clip_active_fraction: f64,
    pub diverged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: MetricsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(Error::Protocol(format!(
                    "metrics step {} does not follow step {}",
                    record.step, last.step
                )));
            }
        }
        if !(0.0..=1.0).contains(&record.clip_active_fraction) {
            return Err(Error::Protocol(format!(
                "clip_active_fraction {} outside [0, 1]",
                record.clip_active_fraction
            )));
        }
        if record.diverged_at.is_some() && self.diverged_at().is_some() {
            return Err(Error::Protocol("divergence recorded twice".into()));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn diverged_at(&self) -> Option<u64> {
        self.records.iter().find_map(|r| r.diverged_at)
    }

    pub fn final_return(&self) -> Option<f64> {
        self.records.last().map(|r| r.eval_return)
    }

    pub fn max_target_q(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.target_q_max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema={METRICS_SCHEMA}").map_err(csv_io)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_COLUMNS).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.eval_return.to_string(),
                r.critic_loss.to_string(),
                r.policy_loss_rl.to_string(),
                r.policy_loss_bc.to_string(),
                r.w.to_string(),
                r.target_q_mean.to_string(),
                r.target_q_max.to_string(),
                r.clip_active_fraction.to_string(),
                r.diverged_at.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(csv_io)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text).map_err(csv_io)?;
        let expected = format!("# schema={METRICS_SCHEMA}");
        match text.lines().next() {
            Some(first) if first.trim_end() == expected => {}
            other => {
                return Err(Error::Csv(format!(
                    "expected `{expected}` as the first line, found {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(METRICS_COLUMNS) {
            return Err(Error::Csv(format!("unexpected metrics header {header:?}")));
        }
        let mut log = MetricsLog::new();
        for (i, row) in r.records().enumerate() {
            let row = row.map_err(csv_err)?;
            let line = i + 3;
            let real = |c: usize| -> Result<f64> {
                row[c]
                    .parse()
                    .map_err(|_| Error::Csv(format!("line {line}: `{}` is not a number in `{}`", &row[c], METRICS_COLUMNS[c])))
            };
            let int = |c: usize| -> Result<u64> {
                row[c]
                    .parse()
                    .map_err(|_| Error::Csv(format!("line {line}: `{}` is not a step in `{}`", &row[c], METRICS_COLUMNS[c])))
            };
            log.push(MetricsRecord {
                step: int(0)?,
                eval_return: real(1)?,
                critic_loss: real(2)?,
                policy_loss_rl: real(3)?,
                policy_loss_bc: real(4)?,
                w: real(5)?,
                target_q_mean: real(6)?,
                target_q_max: real(7)?,
                clip_active_fraction: real(8)?,
                diverged_at: if row[9].is_empty() { None } else { Some(int(9)?) },
            })?;
        }
        Ok(log)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

fn csv_io(e: std::io::Error) -> Error {
    Error::Csv(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> MetricsRecord {
        MetricsRecord {
            step,
            eval_return: -12.345678901234567,
            critic_loss: 0.1 + step as f64,
            policy_loss_rl: -4.0,
            policy_loss_bc: 1e-7,
            w: 2.0 / 3.0,
            target_q_mean: -3.5,
            target_q_max: -1.25,
            clip_active_fraction: 0.5,
            diverged_at: None,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut log = MetricsLog::new();
        log.push(rec(1000)).unwrap();
        let mut last = rec(2000);
        last.diverged_at = Some(1777);
        log.push(last).unwrap();
        let text = log.to_csv_string();
        assert!(text.starts_with("# schema=b3c-metrics/1\nstep,eval_return,"));
        let back = MetricsLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.diverged_at(), Some(1777));
    }

    #[test]
    fn invariants_enforced() {
        let mut log = MetricsLog::new();
        log.push(rec(10)).unwrap();
        assert!(log.push(rec(10)).is_err());
        let mut r = rec(20);
        r.clip_active_fraction = 1.5;
        assert!(log.push(r).is_err());
        let mut r = rec(30);
        r.diverged_at = Some(30);
        log.push(r).unwrap();
        let mut r = rec(40);
        r.diverged_at = Some(40);
        assert!(log.push(r).is_err());
    }

    #[test]
    fn missing_schema_line_rejected() {
        assert!(matches!(
            MetricsLog::read_csv("step,eval_return\n".as_bytes()),
            Err(Error::Csv(_))
        ));
    }
}
