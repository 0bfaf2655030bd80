//! Snapshot stream files and report outputs.
//!
//! A stream file is line oriented. Each snapshot starts with a header
//!
//! ```text
//! # t=<int> n=<int> directed=<0|1>
//! ```
//!
//! followed by one `u v` edge per line with 1-based node ids. Blank lines are
//! ignored. Snapshots are returned sorted by timestamp.
//!
//! Reports are written as CSV with the header in [`REPORT_HEADER`]; alarm
//! flags are `0`/`1` and weights are left empty unless both lower-level
//! alarms fired.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{ChangeReport, DetectorConfig};
use crate::error::{Error, Result};
use crate::sbm::GraphSnapshot;

/// Column order of report CSV files.
pub const REPORT_HEADER: [&str; 16] = [
    "t",
    "phi",
    "phi_xz",
    "phi_z",
    "delta_l",
    "eps",
    "eps_xz",
    "eps_z",
    "k_hat",
    "k_hat1",
    "k_hat2",
    "alarm_level3",
    "alarm_level2",
    "alarm_level1",
    "w_xz",
    "w_z",
];

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Header {
    t: i64,
    n: usize,
    directed: bool,
}

fn parse_header(body: &str, line: usize) -> Result<Header> {
    let (mut t, mut n, mut directed) = (None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key=value, found {field:?}")))?;
        let bad = |what: &str| parse_err(line, format!("invalid {what} {value:?}"));
        match key {
            "t" => t = Some(value.parse::<i64>().map_err(|_| bad("timestamp"))?),
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("node count"))?),
            "directed" => {
                directed = Some(match value {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("directed flag")),
                })
            }
            other => return Err(parse_err(line, format!("unknown header field {other:?}"))),
        }
    }
    let missing = |f: &str| parse_err(line, format!("header lacks {f}="));
    let header = Header {
        t: t.ok_or_else(|| missing("t"))?,
        n: n.ok_or_else(|| missing("n"))?,
        directed: directed.ok_or_else(|| missing("directed"))?,
    };
    if header.n == 0 {
        return Err(parse_err(line, "node count must be positive"));
    }
    Ok(header)
}

struct Pending {
    header: Header,
    line: usize,
    edges: Vec<(u32, u32)>,
}

impl Pending {
    fn finish(self) -> Result<GraphSnapshot> {
        let line = self.line;
        GraphSnapshot::new(self.header.n, self.header.directed, self.header.t, self.edges)
            .map_err(|e| parse_err(line, e.to_string()))
    }
}

/// Parses a stream from any buffered reader.
pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<GraphSnapshot>> {
    let mut snapshots = Vec::new();
    let mut current: Option<Pending> = None;
    let mut first: Option<(usize, bool, usize)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(body) = text.strip_prefix('#') {
            let header = parse_header(body, line_no)?;
            match first {
                None => first = Some((header.n, header.directed, line_no)),
                Some((n, directed, at)) => {
                    if header.n != n {
                        return Err(parse_err(
                            line_no,
                            format!("snapshot has n={} but line {at} declared n={n}", header.n),
                        ));
                    }
                    if header.directed != directed {
                        return Err(parse_err(line_no, "directedness differs from the first snapshot"));
                    }
                }
            }
            if let Some(p) = current.take() {
                snapshots.push(p.finish()?);
            }
            current = Some(Pending { header, line: line_no, edges: Vec::new() });
            continue;
        }
        let pending = current
            .as_mut()
            .ok_or_else(|| parse_err(line_no, "edge before the first snapshot header"))?;
        let mut parts = text.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(line_no, format!("expected `u v`, found {text:?}")));
        };
        let n = pending.header.n;
        let node = |s: &str| -> Result<u32> {
            let v: usize = s.parse().map_err(|_| parse_err(line_no, format!("invalid node id {s:?}")))?;
            if v == 0 || v > n {
                return Err(parse_err(line_no, format!("node id {v} outside 1..={n}")));
            }
            Ok((v - 1) as u32)
        };
        let (u, v) = (node(a)?, node(b)?);
        if u == v {
            return Err(parse_err(line_no, format!("self-loop on node {}", u + 1)));
        }
        pending.edges.push((u, v));
    }
    if let Some(p) = current.take() {
        snapshots.push(p.finish()?);
    }
    if snapshots.is_empty() {
        return Err(Error::Empty);
    }
    snapshots.sort_by_key(GraphSnapshot::timestamp);
    if let Some(w) = snapshots.windows(2).find(|w| w[0].timestamp() == w[1].timestamp()) {
        return Err(Error::InvalidParameter(format!("duplicate timestamp t={}", w[0].timestamp())));
    }
    Ok(snapshots)
}

/// Parses a stream held in memory.
pub fn parse_stream(text: &str) -> Result<Vec<GraphSnapshot>> {
    read_stream(text.as_bytes())
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<Vec<GraphSnapshot>> {
    read_stream(BufReader::new(File::open(path)?))
}

pub fn write_stream<W: Write>(mut writer: W, snapshots: &[GraphSnapshot]) -> Result<()> {
    for g in snapshots {
        writeln!(writer, "# t={} n={} directed={}", g.timestamp(), g.n_nodes(), u8::from(g.directed()))?;
        for &(u, v) in g.edges() {
            writeln!(writer, "{} {}", u + 1, v + 1)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn save_stream(path: impl AsRef<Path>, snapshots: &[GraphSnapshot]) -> Result<()> {
    write_stream(BufWriter::new(File::create(path)?), snapshots)
}

/// One CSV row; mirrors [`REPORT_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: i64,
    pub phi: f64,
    pub phi_xz: f64,
    pub phi_z: f64,
    pub delta_l: f64,
    pub eps: f64,
    pub eps_xz: f64,
    pub eps_z: f64,
    pub k_hat: usize,
    pub k_hat1: usize,
    pub k_hat2: usize,
    pub alarm_level3: u8,
    pub alarm_level2: u8,
    pub alarm_level1: u8,
    pub w_xz: Option<f64>,
    pub w_z: Option<f64>,
}

impl From<&ChangeReport> for ReportRow {
    fn from(r: &ChangeReport) -> Self {
        Self {
            t: r.t,
            phi: r.phi,
            phi_xz: r.phi_xz,
            phi_z: r.phi_z,
            delta_l: r.delta_l,
            eps: r.eps,
            eps_xz: r.eps_xz,
            eps_z: r.eps_z,
            k_hat: r.k_hat,
            k_hat1: r.k_hat1,
            k_hat2: r.k_hat2,
            alarm_level3: r.alarm_level3.into(),
            alarm_level2: r.alarm_level2.into(),
            alarm_level1: r.alarm_level1.into(),
            w_xz: r.w_xz,
            w_z: r.w_z,
        }
    }
}

pub fn write_reports<W: Write>(writer: W, reports: &[ChangeReport]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    out.write_record(REPORT_HEADER)?;
    for r in reports {
        out.serialize(ReportRow::from(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_reports(path: impl AsRef<Path>, reports: &[ChangeReport]) -> Result<()> {
    write_reports(BufWriter::new(File::create(path)?), reports)
}

/// Reads a report CSV, checking the header.
pub fn read_reports<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if !header.iter().eq(REPORT_HEADER.iter().copied()) {
        return Err(parse_err(1, format!("unexpected report header {:?}", header.iter().collect::<Vec<_>>())));
    }
    Ok(input.deserialize().collect::<csv::Result<Vec<ReportRow>>>()?)
}

/// Timestamps of the reports raising each alarm level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmTimes {
    pub level3: Vec<i64>,
    pub level2: Vec<i64>,
    pub level1: Vec<i64>,
}

impl AlarmTimes {
    pub fn collect(reports: &[ChangeReport]) -> Self {
        let pick = |f: fn(&ChangeReport) -> bool| reports.iter().filter(|r| f(r)).map(|r| r.t).collect();
        Self {
            level3: pick(|r| r.alarm_level3),
            level2: pick(|r| r.alarm_level2),
            level1: pick(|r| r.alarm_level1),
        }
    }
}

/// JSON sidecar written next to a report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: DetectorConfig,
    pub n_snapshots: usize,
    pub n_nodes: usize,
    pub n_reports: usize,
    pub alarms: AlarmTimes,
}

impl RunSummary {
    pub fn new(config: DetectorConfig, stream: &[GraphSnapshot], reports: &[ChangeReport]) -> Self {
        Self {
            config,
            n_snapshots: stream.len(),
            n_nodes: stream.first().map_or(0, GraphSnapshot::n_nodes),
            n_reports: reports.len(),
            alarms: AlarmTimes::collect(reports),
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_json(BufWriter::new(File::create(path)?), value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::gen_abrupt;
    use proptest::prelude::*;

    const SMALL: &str = "# t=2 n=4 directed=0\n1 2\n3 4\n\n# t=1 n=4 directed=0\n2 3\n# t=3 n=4 directed=0\n";

    #[test]
    fn parses_and_sorts() {
        let s = parse_stream(SMALL).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().map(|g| g.timestamp()).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(s.iter().all(|g| g.n_nodes() == 4));
        assert_eq!(s[0].edges(), &[(1, 2)]);
        assert_eq!(s[1].edges(), &[(0, 1), (2, 3)]);
        assert_eq!(s[2].n_edges(), 0);
    }

    #[test]
    fn empty_input_has_no_snapshots() {
        let err = parse_stream("").unwrap_err();
        assert_eq!(err.to_string(), "no snapshots");
        assert!(matches!(parse_stream("\n  \n"), Err(Error::Empty)));
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=0\n1 2\n1 x\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=0\n1 2 3\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_stream("1 2\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=0\n0 2\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=0\n1 5\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=0\n\n3 3\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_stream("# t=1 n=4\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=2\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_stream("# t=1 n=4 directed=0 k=3\n").unwrap_err()), 1);
    }

    #[test]
    fn inconsistent_node_counts_rejected() {
        let err = parse_stream("# t=1 n=4 directed=0\n# t=2 n=5 directed=0\n").unwrap_err();
        assert_eq!(line_of(err), 2);
        let err = parse_stream("# t=1 n=4 directed=0\n# t=2 n=4 directed=1\n").unwrap_err();
        assert_eq!(line_of(err), 2);
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let err = parse_stream("# t=1 n=4 directed=0\n# t=1 n=4 directed=0\n").unwrap_err();
        assert!(err.to_string().contains("duplicate timestamp t=1"));
    }

    #[test]
    fn directed_edges_keep_orientation() {
        let s = parse_stream("# t=0 n=3 directed=1\n2 1\n1 2\n").unwrap();
        assert_eq!(s[0].edges(), &[(0, 1), (1, 0)]);
        let mut buf = Vec::new();
        write_stream(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# t=0 n=3 directed=1\n1 2\n2 1\n");
    }

    #[test]
    fn generated_stream_round_trips_through_file() {
        let s = gen_abrupt(25, 3).unwrap().snapshots;
        let dir = std::env::temp_dir().join(format!("latent-change-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stream.txt");
        save_stream(&path, &s).unwrap();
        assert_eq!(load_stream(&path).unwrap(), s);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn report(t: i64, w: Option<(f64, f64)>) -> ChangeReport {
        ChangeReport {
            t,
            position: t as usize,
            phi: 0.1 * t as f64,
            phi_xz: -1.5,
            phi_z: 2.25,
            delta_l: 0.125,
            eps: 3.0,
            eps_xz: 2.0,
            eps_z: 1.0,
            k_hat: 3,
            k_hat1: 3,
            k_hat2: 4,
            alarm_level3: false,
            alarm_level2: w.is_some(),
            alarm_level1: w.is_some(),
            w_xz: w.map(|w| w.0),
            w_z: w.map(|w| w.1),
        }
    }

    #[test]
    fn report_csv_layout() {
        let reports = vec![report(1, None), report(2, Some((0.25, 0.75)))];
        let mut buf = Vec::new();
        write_reports(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER.join(","));
        assert_eq!(lines[1], "1,0.1,-1.5,2.25,0.125,3.0,2.0,1.0,3,3,4,0,0,0,,");
        assert_eq!(lines[2], "2,0.2,-1.5,2.25,0.125,3.0,2.0,1.0,3,3,4,0,1,1,0.25,0.75");
        let rows = read_reports(text.as_bytes()).unwrap();
        assert_eq!(rows, reports.iter().map(ReportRow::from).collect::<Vec<_>>());
    }

    #[test]
    fn report_reader_checks_header() {
        assert!(read_reports("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_lists_alarm_times() {
        let mut a = report(5, None);
        a.alarm_level3 = true;
        let reports = vec![a, report(6, Some((0.5, 0.5))), report(7, None)];
        let stream: Vec<_> = (0..8).map(|t| GraphSnapshot::empty(4, false, t)).collect();
        let summary = RunSummary::new(DetectorConfig::default(), &stream, &reports);
        assert_eq!(summary.alarms, AlarmTimes { level3: vec![5], level2: vec![6], level1: vec![6] });
        let mut buf = Vec::new();
        write_json(&mut buf, &summary).unwrap();
        let back: RunSummary = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, summary);
    }

    fn arb_stream() -> impl Strategy<Value = Vec<GraphSnapshot>> {
        (2usize..9, any::<bool>(), 1usize..5).prop_flat_map(|(n, directed, len)| {
            let pairs = proptest::collection::vec((0..n as u32, 0..n as u32), 0..20);
            proptest::collection::vec(pairs, len).prop_map(move |edge_sets| {
                edge_sets
                    .into_iter()
                    .enumerate()
                    .map(|(t, edges)| {
                        let edges: Vec<_> = edges.into_iter().filter(|(u, v)| u != v).collect();
                        GraphSnapshot::new(n, directed, t as i64 * 3 - 2, edges).unwrap()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(stream in arb_stream()) {
            let mut buf = Vec::new();
            write_stream(&mut buf, &stream).unwrap();
            prop_assert_eq!(parse_stream(std::str::from_utf8(&buf).unwrap()).unwrap(), stream);
        }
    }
}
