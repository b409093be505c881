//! Run reports: CSV emission, parsing and the run manifest.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::runtime::Mode;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
}

/// Metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub frames: usize,
    pub seed: u64,
    pub clock_hz: f64,
    pub total_cycles: u64,
    /// `frames * clock_hz / total_cycles`.
    pub frames_per_second: f64,
    pub dram_read_words: u64,
    pub dram_write_words: u64,
    /// Keyed by `(x,y)->(x,y)/Plane`. Links that carried nothing are omitted.
    pub per_link_flits: BTreeMap<String, u64>,
    pub per_node_busy_cycles: BTreeMap<String, u64>,
    /// SHA-256 of the canonical SoC and dataflow descriptions.
    pub fingerprint: String,
    /// SHA-256 over every NoC inject and eject event.
    pub trace_digest: String,
    /// SHA-256 over the output buffers.
    pub output_digest: String,
}

impl RunReport {
    pub fn dram_words(&self) -> u64 {
        self.dram_read_words + self.dram_write_words
    }

    pub fn fps(frames: usize, clock_hz: f64, total_cycles: u64) -> f64 {
        frames as f64 * clock_hz / total_cycles as f64
    }

    pub fn total_link_flits(&self) -> u64 {
        self.per_link_flits.values().sum()
    }
}

fn record(
    w: &mut csv::Writer<Vec<u8>>,
    mode: Mode,
    metric: &str,
    key: &str,
    value: String,
) -> Result<(), ReportError> {
    w.write_record([mode.label(), metric, key, &value])?;
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Long-format CSV with columns `mode,metric,key,value`.
pub fn to_csv(reports: &[RunReport]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "metric", "key", "value"])?;
    for r in reports {
        let m = r.mode;
        record(&mut w, m, "frames", "", r.frames.to_string())?;
        record(&mut w, m, "seed", "", r.seed.to_string())?;
        record(&mut w, m, "clock_hz", "", r.clock_hz.to_string())?;
        record(&mut w, m, "total_cycles", "", r.total_cycles.to_string())?;
        record(
            &mut w,
            m,
            "frames_per_second",
            "",
            r.frames_per_second.to_string(),
        )?;
        record(
            &mut w,
            m,
            "dram_read_words",
            "",
            r.dram_read_words.to_string(),
        )?;
        record(
            &mut w,
            m,
            "dram_write_words",
            "",
            r.dram_write_words.to_string(),
        )?;
        for (k, v) in &r.per_link_flits {
            record(&mut w, m, "link_flits", k, v.to_string())?;
        }
        for (k, v) in &r.per_node_busy_cycles {
            record(&mut w, m, "busy_cycles", k, v.to_string())?;
        }
        record(&mut w, m, "fingerprint", "", r.fingerprint.clone())?;
        record(&mut w, m, "trace_digest", "", r.trace_digest.clone())?;
        record(&mut w, m, "output_digest", "", r.output_digest.clone())?;
    }
    finish(w)
}

/// Parses CSV produced by [`to_csv`], one report per mode in order of first
/// appearance.
pub fn parse_csv(text: &str) -> Result<Vec<RunReport>, ReportError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut reports: Vec<RunReport> = Vec::new();
    for row in rd.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| ReportError::Malformed { line, msg };
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let mode: Mode = row[0].parse().map_err(bad)?;
        let (metric, key, value) = (&row[1], &row[2], &row[3]);
        let int = || {
            value
                .parse::<u64>()
                .map_err(|e| bad(format!("{metric}: {e}")))
        };
        let r = match reports.iter_mut().find(|r| r.mode == mode) {
            Some(r) => r,
            None => {
                reports.push(RunReport {
                    mode,
                    frames: 0,
                    seed: 0,
                    clock_hz: 0.0,
                    total_cycles: 0,
                    frames_per_second: 0.0,
                    dram_read_words: 0,
                    dram_write_words: 0,
                    per_link_flits: BTreeMap::new(),
                    per_node_busy_cycles: BTreeMap::new(),
                    fingerprint: String::new(),
                    trace_digest: String::new(),
                    output_digest: String::new(),
                });
                reports.last_mut().expect("just pushed")
            }
        };
        match metric {
            "frames" => r.frames = int()? as usize,
            "seed" => r.seed = int()?,
            "clock_hz" => r.clock_hz = value.parse().map_err(|e| bad(format!("clock_hz: {e}")))?,
            "total_cycles" => r.total_cycles = int()?,
            "frames_per_second" => {
                r.frames_per_second = value
                    .parse()
                    .map_err(|e| bad(format!("frames_per_second: {e}")))?
            }
            "dram_read_words" => r.dram_read_words = int()?,
            "dram_write_words" => r.dram_write_words = int()?,
            "link_flits" => {
                r.per_link_flits.insert(key.to_string(), int()?);
            }
            "busy_cycles" => {
                r.per_node_busy_cycles.insert(key.to_string(), int()?);
            }
            "fingerprint" => r.fingerprint = value.to_string(),
            "trace_digest" => r.trace_digest = value.to_string(),
            "output_digest" => r.output_digest = value.to_string(),
            other => return Err(bad(format!("unknown metric `{other}`"))),
        }
    }
    Ok(reports)
}

/// DRAM traffic per mode relative to the p2p run.
pub fn dram_table(reports: &[RunReport]) -> Result<String, ReportError> {
    let base = reports
        .iter()
        .find(|r| r.mode == Mode::P2p)
        .map(RunReport::dram_words);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mode",
        "dram_read_words",
        "dram_write_words",
        "dram_words",
        "relative_to_p2p",
    ])?;
    for r in reports {
        let rel = base.filter(|&b| b > 0).map_or(String::new(), |b| {
            (r.dram_words() as f64 / b as f64).to_string()
        });
        w.write_record([
            r.mode.label().to_string(),
            r.dram_read_words.to_string(),
            r.dram_write_words.to_string(),
            r.dram_words().to_string(),
            rel,
        ])?;
    }
    finish(w)
}

/// Throughput per mode relative to the serial run.
pub fn throughput_table(reports: &[RunReport]) -> Result<String, ReportError> {
    let base = reports
        .iter()
        .find(|r| r.mode == Mode::Serial)
        .map(|r| r.frames_per_second);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mode",
        "total_cycles",
        "frames_per_second",
        "speedup_vs_serial",
    ])?;
    for r in reports {
        let rel = base
            .filter(|&b| b > 0.0)
            .map_or(String::new(), |b| (r.frames_per_second / b).to_string());
        w.write_record([
            r.mode.label().to_string(),
            r.total_cycles.to_string(),
            r.frames_per_second.to_string(),
            rel,
        ])?;
    }
    finish(w)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    soc: &'a str,
    dataflow: &'a str,
    csv: &'a str,
    runs: Vec<ManifestRun<'a>>,
}

#[derive(Debug, Serialize)]
struct ManifestRun<'a> {
    mode: &'static str,
    frames: usize,
    seed: u64,
    total_cycles: u64,
    frames_per_second: f64,
    dram_words: u64,
    fingerprint: &'a str,
    trace_digest: &'a str,
    output_digest: &'a str,
}

/// TOML summary of an invocation, written next to the CSV.
pub fn manifest(reports: &[RunReport], soc: &str, dataflow: &str, csv: &str) -> String {
    let m = Manifest {
        tool: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        soc,
        dataflow,
        csv,
        runs: reports
            .iter()
            .map(|r| ManifestRun {
                mode: r.mode.label(),
                frames: r.frames,
                seed: r.seed,
                total_cycles: r.total_cycles,
                frames_per_second: r.frames_per_second,
                dram_words: r.dram_words(),
                fingerprint: &r.fingerprint,
                trace_digest: &r.trace_digest,
                output_digest: &r.output_digest,
            })
            .collect(),
    };
    toml::to_string(&m).expect("manifest is serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(mode: Mode) -> RunReport {
        RunReport {
            mode,
            frames: 3,
            seed: 9,
            clock_hz: 78e6,
            total_cycles: 777,
            frames_per_second: RunReport::fps(3, 78e6, 777),
            dram_read_words: 10,
            dram_write_words: 4,
            per_link_flits: BTreeMap::from([("(0,0)->(1,0)/DmaReq".to_string(), 12)]),
            per_node_busy_cycles: BTreeMap::from([("a".to_string(), 50)]),
            fingerprint: "ab".into(),
            trace_digest: "cd".into(),
            output_digest: "ef".into(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let rs = vec![sample(Mode::Serial), sample(Mode::P2p)];
        let text = to_csv(&rs).unwrap();
        assert!(text.starts_with("mode,metric,key,value\n"));
        assert_eq!(parse_csv(&text).unwrap(), rs);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_csv("mode,metric,key,value\nfast,frames,,1\n").is_err());
        assert!(parse_csv("mode,metric,key,value\npipe,bogus,,1\n").is_err());
    }

    #[test]
    fn tables() {
        let mut a = sample(Mode::Pipe);
        a.dram_read_words = 20;
        a.dram_write_words = 8;
        let t = dram_table(&[a, sample(Mode::P2p)]).unwrap();
        assert!(t.contains("pipe,20,8,28,2\n"), "{t}");
        let t = throughput_table(&[sample(Mode::Serial)]).unwrap();
        assert!(t.lines().nth(1).unwrap().ends_with(",1"));
        assert!(manifest(&[sample(Mode::Pipe)], "s.toml", "d.toml", "o.csv")
            .contains("mode = \"pipe\""));
    }
}
