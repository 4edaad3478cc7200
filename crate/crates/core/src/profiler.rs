//! Labeled interval timers and counters, CSV dumps, and aggregation of dumps
//! into per-label statistics.
//!
//! Intervals are measured on the monotonic clock in nanoseconds. Records are
//! buffered in memory and written out by [`Profiler::dump`]:
//!
//! ```text
//! label,kind,value,process,thread,seq
//! read::l-r,interval,18211,worker2,worker2,0
//! nodeVisited,counter,3,worker2,worker2,1
//! ```
//!
//! [`aggregate`] reads any number of dumps and reports, per label, the
//! count, mean, sample standard deviation (n-1 denominator, 0 when n is 1),
//! minimum and maximum.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread::{self, ThreadId};
use std::time::{Duration, Instant};

pub const DUMP_HEADER: [&str; 6] = ["label", "kind", "value", "process", "thread", "seq"];
pub const STATS_HEADER: [&str; 6] = ["label", "n", "mean", "stddev", "min", "max"];
const STATS_NOTE: &str = "# stddev is the sample standard deviation (n-1 denominator)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Interval,
    Counter,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Interval => "interval",
            MetricKind::Counter => "counter",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interval" => Ok(MetricKind::Interval),
            "counter" => Ok(MetricKind::Counter),
            other => Err(format!("unknown metric kind {other:?}")),
        }
    }
}

/// One raw measurement. `value` is nanoseconds for intervals and a count
/// for counters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricRecord {
    pub label: String,
    pub kind: MetricKind,
    pub value: u64,
    pub process: String,
    pub thread: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStats {
    pub label: String,
    pub n: u64,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfilerError {
    #[error("end({label:?}) without a matching begin on thread {thread}")]
    UnmatchedEnd { label: String, thread: String },
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
}

#[derive(Default)]
struct State {
    open: HashMap<(ThreadId, String), Vec<Instant>>,
    counters: BTreeMap<(String, String), u64>,
    seq: HashMap<String, u64>,
    records: Vec<MetricRecord>,
    diagnostics: Vec<String>,
}

impl State {
    fn push(&mut self, process: &str, thread: String, label: &str, kind: MetricKind, value: u64) {
        let seq = self.seq.entry(thread.clone()).or_default();
        let record = MetricRecord { label: label.to_owned(), kind, value, process: process.to_owned(), thread, seq: *seq };
        *seq += 1;
        self.records.push(record);
    }
}

fn thread_label() -> String {
    let t = thread::current();
    match t.name() {
        Some(name) => name.to_owned(),
        None => format!("{:?}", t.id()),
    }
}

/// Collects records for one process (or role). Shareable between threads;
/// records are attributed to the calling thread.
pub struct Profiler {
    process: String,
    state: Mutex<State>,
}

impl fmt::Debug for Profiler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profiler").field("process", &self.process).finish()
    }
}

impl Profiler {
    pub fn new(process: impl Into<String>) -> Profiler {
        Profiler { process: process.into(), state: Mutex::default() }
    }

    pub fn process(&self) -> &str {
        &self.process
    }

    pub fn begin(&self, label: &str) {
        let now = Instant::now();
        let key = (thread::current().id(), label.to_owned());
        self.state.lock().unwrap().open.entry(key).or_default().push(now);
    }

    /// Closes the most recent `begin(label)` on this thread.
    pub fn end(&self, label: &str) -> Result<(), ProfilerError> {
        let now = Instant::now();
        let key = (thread::current().id(), label.to_owned());
        let mut st = self.state.lock().unwrap();
        match st.open.get_mut(&key).and_then(Vec::pop) {
            Some(start) => {
                let ns = now.duration_since(start).as_nanos().min(u64::MAX as u128) as u64;
                st.push(&self.process, thread_label(), label, MetricKind::Interval, ns);
                Ok(())
            }
            None => {
                let err = ProfilerError::UnmatchedEnd { label: label.to_owned(), thread: thread_label() };
                st.diagnostics.push(err.to_string());
                Err(err)
            }
        }
    }

    /// Records an interval measured elsewhere.
    pub fn record_interval(&self, label: &str, elapsed: Duration) {
        let ns = elapsed.as_nanos().min(u64::MAX as u128) as u64;
        self.state.lock().unwrap().push(&self.process, thread_label(), label, MetricKind::Interval, ns);
    }

    /// Times `f` and records the interval under `label`.
    pub fn time<T>(&self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record_interval(label, start.elapsed());
        out
    }

    pub fn inc_counter(&self, label: &str) {
        self.add_counter(label, 1);
    }

    pub fn add_counter(&self, label: &str, n: u64) {
        let key = (thread_label(), label.to_owned());
        *self.state.lock().unwrap().counters.entry(key).or_default() += n;
    }

    /// Emits one counter record right away instead of accumulating, so
    /// that statistics over `label` are per event.
    pub fn record_count(&self, label: &str, value: u64) {
        self.state.lock().unwrap().push(&self.process, thread_label(), label, MetricKind::Counter, value);
    }

    /// Diagnostics such as unmatched ends, oldest first.
    pub fn diagnostics(&self) -> Vec<String> {
        self.state.lock().unwrap().diagnostics.clone()
    }

    /// Drains buffered records, flushing counters into counter records.
    pub fn take_records(&self) -> Vec<MetricRecord> {
        let mut st = self.state.lock().unwrap();
        let counters = std::mem::take(&mut st.counters);
        for ((thread, label), value) in counters {
            st.push(&self.process, thread, &label, MetricKind::Counter, value);
        }
        std::mem::take(&mut st.records)
    }

    /// Writes every buffered record to `path` as CSV and clears the buffer.
    pub fn dump(&self, path: &Path) -> Result<(), ProfilerError> {
        let records = self.take_records();
        write_dump(path, &records)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ProfilerError + '_ {
    move |source| ProfilerError::Io { path: path.to_owned(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ProfilerError + '_ {
    move |e| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => ProfilerError::Io { path: path.to_owned(), source },
            kind => ProfilerError::Parse { path: path.to_owned(), line, message: format!("{kind:?}") },
        }
    }
}

pub fn write_dump(path: &Path, records: &[MetricRecord]) -> Result<(), ProfilerError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file));
    w.write_record(DUMP_HEADER).map_err(csv_err(path))?;
    for r in records {
        w.write_record([
            r.label.as_str(),
            r.kind.as_str(),
            &r.value.to_string(),
            &r.process,
            &r.thread,
            &r.seq.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parses a dump written by [`Profiler::dump`].
pub fn read_dump(path: &Path) -> Result<Vec<MetricRecord>, ProfilerError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(DUMP_HEADER) {
        return Err(ProfilerError::Parse { path: path.to_owned(), line: 1, message: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| ProfilerError::Parse { path: path.to_owned(), line, message };
        if row.len() != DUMP_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", DUMP_HEADER.len(), row.len())));
        }
        out.push(MetricRecord {
            label: row[0].to_owned(),
            kind: row[1].parse().map_err(bad)?,
            value: row[2].parse().map_err(|e| bad(format!("value: {e}")))?,
            process: row[3].to_owned(),
            thread: row[4].to_owned(),
            seq: row[5].parse().map_err(|e| bad(format!("seq: {e}")))?,
        });
    }
    Ok(out)
}

/// Streaming mean and variance (Welford) with min and max.
#[derive(Debug, Clone, Copy)]
struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn new() -> Accumulator {
        Accumulator { n: 0, mean: 0.0, m2: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }

    fn add(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    fn stats(&self, label: &str) -> MetricStats {
        let stddev = if self.n > 1 { (self.m2.max(0.0) / (self.n - 1) as f64).sqrt() } else { 0.0 };
        // Rounding can push the running mean a hair outside [min, max].
        let mean = self.mean.clamp(self.min, self.max);
        MetricStats { label: label.to_owned(), n: self.n, mean, stddev, min: self.min, max: self.max }
    }
}

/// Statistics per label over the given records.
pub fn summarize<'a>(records: impl IntoIterator<Item = &'a MetricRecord>) -> BTreeMap<String, MetricStats> {
    let mut acc: BTreeMap<&str, Accumulator> = BTreeMap::new();
    for r in records {
        acc.entry(r.label.as_str()).or_insert_with(Accumulator::new).add(r.value as f64);
    }
    acc.into_iter().map(|(label, a)| (label.to_owned(), a.stats(label))).collect()
}

/// Reads every dump and computes statistics per label across all of them.
pub fn aggregate<P: AsRef<Path>>(files: &[P]) -> Result<BTreeMap<String, MetricStats>, ProfilerError> {
    let mut records = Vec::new();
    for f in files {
        records.extend(read_dump(f.as_ref())?);
    }
    Ok(summarize(&records))
}

pub fn write_stats(path: &Path, stats: &BTreeMap<String, MetricStats>) -> Result<(), ProfilerError> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(file, "{STATS_NOTE}").map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(STATS_HEADER).map_err(csv_err(path))?;
    for s in stats.values() {
        w.write_record([
            s.label.clone(),
            s.n.to_string(),
            s.mean.to_string(),
            s.stddev.to_string(),
            s.min.to_string(),
            s.max.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_stats(path: &Path) -> Result<BTreeMap<String, MetricStats>, ProfilerError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let mut out = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| ProfilerError::Parse { path: path.to_owned(), line, message };
        if row.len() != STATS_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", STATS_HEADER.len(), row.len())));
        }
        let num = |i: usize| row[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", STATS_HEADER[i])));
        let s = MetricStats {
            label: row[0].to_owned(),
            n: row[1].parse().map_err(|e| bad(format!("n: {e}")))?,
            mean: num(2)?,
            stddev: num(3)?,
            min: num(4)?,
            max: num(5)?,
        };
        out.insert(s.label.clone(), s);
    }
    Ok(out)
}
