//! Per-epoch metrics and their CSV form.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,mode,t_e_ms,rpc_calls,nodes_pulled,bytes_pulled,cache_hits,cache_misses,reuse_ratio,loss,train_acc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Synchronous pull of every batch, no cache, no prefetch.
    Baseline,
    #[default]
    Rapid,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Rapid => "rapid",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "rapid" => Ok(Mode::Rapid),
            _ => Err(Error::arg(format!("unknown mode {s:?} (expected baseline|rapid)"))),
        }
    }
}

/// One epoch of one worker. Traffic columns count fallback pulls only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// 1-based.
    pub epoch: usize,
    pub mode: Mode,
    pub t_e_ms: f64,
    pub rpc_calls: u64,
    pub nodes_pulled: u64,
    pub bytes_pulled: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub reuse_ratio: Option<f64>,
    pub loss: f64,
    pub train_acc: f64,
}

impl MetricsRecord {
    /// Every column except the wall time, for determinism comparisons.
    pub fn without_time(&self) -> MetricsRecord {
        MetricsRecord { t_e_ms: 0.0, ..self.clone() }
    }

    fn to_row(&self) -> String {
        let reuse = self.reuse_ratio.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.mode,
            self.t_e_ms,
            self.rpc_calls,
            self.nodes_pulled,
            self.bytes_pulled,
            self.cache_hits,
            self.cache_misses,
            reuse,
            self.loss,
            self.train_acc
        )
    }
}

pub fn write_metrics_to<W: Write>(records: &[MetricsRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_metrics_to(records, BufWriter::new(File::create(path)?))
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::format(format!("metrics line {line}: bad value {raw:?} in column {i}")))
}

pub fn read_metrics_from<R: Read>(r: R) -> Result<Vec<MetricsRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(|e| Error::format(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::format("unexpected metrics header"));
    }
    let mut out = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(e.to_string()))?;
        let line = k as u64 + 2;
        let reuse = match rec.get(8).unwrap_or("") {
            "" => None,
            _ => Some(field(&rec, 8, line)?),
        };
        out.push(MetricsRecord {
            epoch: field(&rec, 0, line)?,
            mode: field(&rec, 1, line)?,
            t_e_ms: field(&rec, 2, line)?,
            rpc_calls: field(&rec, 3, line)?,
            nodes_pulled: field(&rec, 4, line)?,
            bytes_pulled: field(&rec, 5, line)?,
            cache_hits: field(&rec, 6, line)?,
            cache_misses: field(&rec, 7, line)?,
            reuse_ratio: reuse,
            loss: field(&rec, 9, line)?,
            train_acc: field(&rec, 10, line)?,
        });
    }
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    read_metrics_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, reuse: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            epoch,
            mode: Mode::Rapid,
            t_e_ms: 12.345678,
            rpc_calls: 3,
            nodes_pulled: 1000,
            bytes_pulled: 1000 * 16 * 4,
            cache_hits: 10,
            cache_misses: 30,
            reuse_ratio: reuse,
            loss: 1.0986122886681098,
            train_acc: 1.0 / 3.0,
        }
    }

    #[test]
    fn empty_is_header_only() {
        let mut buf = Vec::new();
        write_metrics_to(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn round_trip() {
        let recs = vec![rec(1, Some(0.25)), rec(2, None), rec(3, Some(1e-7))];
        let mut buf = Vec::new();
        write_metrics_to(&recs, &mut buf).unwrap();
        assert_eq!(read_metrics_from(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn undefined_reuse_is_empty_field() {
        let mut buf = Vec::new();
        write_metrics_to(&[rec(1, None)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row.split(',').nth(8), Some(""));
        assert!(!row.contains("NaN"));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_metrics_from("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn mode_parse() {
        assert_eq!("baseline".parse::<Mode>().unwrap(), Mode::Baseline);
        assert_eq!(Mode::Rapid.to_string(), "rapid");
        assert!("fast".parse::<Mode>().is_err());
    }
}
