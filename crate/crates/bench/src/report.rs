//! Run manifests, per-group aggregation of dumps, and comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tuplespace::profiler::{self, read_dump, read_stats, summarize, write_stats, MetricKind, MetricStats, ProfilerError};

use crate::protocol::{LABEL_SEARCH, LABEL_VISITED};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no dumps found in {0}")]
    NoDumps(PathBuf),
    #[error("metric {metric:?} not present in {dir}")]
    MissingMetric { metric: String, dir: PathBuf },
    #[error(transparent)]
    Profiler(#[from] ProfilerError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_owned(), source }
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Manifest {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
            .collect();
        Manifest { entries }
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.render()).map_err(io(path))
    }

    pub fn read(path: &Path) -> Result<Manifest, ReportError> {
        Ok(Manifest::parse(&fs::read_to_string(path).map_err(io(path))?))
    }

    /// Directory-safe name of the workload group this run belongs to.
    pub fn group(&self) -> String {
        let get = |k| self.get(k).unwrap_or("unknown");
        let mut g = format!("{}_w{}_n{}_{}", get("case"), get("workers"), get("size"), get("strategy"));
        if self.get("case") == Some("matmul") {
            g.push('_');
            g.push_str(get("distribution"));
        }
        g
    }
}

pub fn manifest_path(dir: &Path, run_key: &str) -> PathBuf {
    dir.join(format!("manifest_{run_key}.txt"))
}

/// Run key embedded in a dump file name `dump_<run key>_rep<r>_<role>.csv`.
pub fn run_key_of_dump(path: &Path) -> Option<&str> {
    let name = path.file_name()?.to_str()?;
    let rest = name.strip_prefix("dump_")?.strip_suffix(".csv")?;
    rest.rfind("_rep").map(|i| &rest[..i])
}

fn list(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>, ReportError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix) && n.ends_with(suffix))
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn dump_files(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    list(dir, "dump_", ".csv")
}

/// One aggregated group.
#[derive(Debug, Clone)]
pub struct GroupStats {
    pub group: String,
    pub path: PathBuf,
    pub dumps: Vec<PathBuf>,
    pub stats: BTreeMap<String, MetricStats>,
}

/// Aggregates every dump in `dir`, grouped by the workload recorded in the
/// matching manifest. A single group is written to `dir/stats.csv`; several
/// groups go to `dir/<group>/stats.csv`.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<GroupStats>, ReportError> {
    let dumps = dump_files(dir)?;
    if dumps.is_empty() {
        return Err(ReportError::NoDumps(dir.to_owned()));
    }
    let mut group_of_run = BTreeMap::new();
    for m in list(dir, "manifest_", ".txt")? {
        let manifest = Manifest::read(&m)?;
        if let Some(key) = manifest.get("run_key") {
            group_of_run.insert(key.to_owned(), manifest.group());
        }
    }
    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for d in dumps {
        let group = run_key_of_dump(&d).and_then(|k| group_of_run.get(k)).cloned().unwrap_or_else(|| "ungrouped".into());
        groups.entry(group).or_default().push(d);
    }
    let single = groups.len() == 1;
    let mut out = Vec::new();
    for (group, dumps) in groups {
        let stats = profiler::aggregate(&dumps)?;
        let target = if single { dir.to_owned() } else { dir.join(&group) };
        fs::create_dir_all(&target).map_err(io(&target))?;
        let path = target.join("stats.csv");
        write_stats(&path, &stats)?;
        out.push(GroupStats { group, path, dumps, stats });
    }
    Ok(out)
}

/// Statistics for every label in `dir`: from its dumps when present,
/// otherwise from an existing `stats.csv`.
pub fn dir_stats(dir: &Path) -> Result<BTreeMap<String, MetricStats>, ReportError> {
    let dumps = dump_files(dir)?;
    if !dumps.is_empty() {
        return Ok(profiler::aggregate(&dumps)?);
    }
    let stats = dir.join("stats.csv");
    if stats.is_file() {
        return Ok(read_stats(&stats)?);
    }
    Err(ReportError::NoDumps(dir.to_owned()))
}

/// Two-column comparison of `metric` between `a` and `b`.
pub fn compare(a: &Path, b: &Path, metric: &str) -> Result<String, ReportError> {
    let pick = |dir: &Path| -> Result<MetricStats, ReportError> {
        dir_stats(dir)?
            .remove(metric)
            .ok_or_else(|| ReportError::MissingMetric { metric: metric.to_owned(), dir: dir.to_owned() })
    };
    let (sa, sb) = (pick(a)?, pick(b)?);
    let ratio = sa.mean / sb.mean;
    let mut t = String::new();
    writeln!(t, "metric: {metric}").unwrap();
    writeln!(t, "A: {}", a.display()).unwrap();
    writeln!(t, "B: {}", b.display()).unwrap();
    writeln!(t, "{:<10} {:>18} {:>18}", "", "A", "B").unwrap();
    writeln!(t, "{:<10} {:>18} {:>18}", "n", sa.n, sb.n).unwrap();
    writeln!(t, "{:<10} {:>18.6} {:>18.6}", "mean", sa.mean, sb.mean).unwrap();
    writeln!(t, "{:<10} {:>18.6} {:>18.6}", "stddev", sa.stddev, sb.stddev).unwrap();
    writeln!(t, "ratio A/B: {ratio:.6}").unwrap();
    Ok(t)
}

/// Search totals read back from dumps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VisitTotals {
    /// Sum of first-round probes over all searches.
    pub visited_first_round: u64,
    pub searches: u64,
}

impl VisitTotals {
    pub fn mean(&self) -> f64 {
        if self.searches == 0 {
            0.0
        } else {
            self.visited_first_round as f64 / self.searches as f64
        }
    }
}

impl std::ops::Add for VisitTotals {
    type Output = VisitTotals;

    fn add(self, o: VisitTotals) -> VisitTotals {
        VisitTotals { visited_first_round: self.visited_first_round + o.visited_first_round, searches: self.searches + o.searches }
    }
}

pub fn visit_totals<P: AsRef<Path>>(dumps: &[P]) -> Result<VisitTotals, ReportError> {
    let mut t = VisitTotals::default();
    for d in dumps {
        for r in read_dump(d.as_ref())? {
            match (r.label.as_str(), r.kind) {
                (LABEL_VISITED, MetricKind::Counter) => t.visited_first_round += r.value,
                (LABEL_SEARCH, MetricKind::Interval) => t.searches += 1,
                _ => {}
            }
        }
    }
    Ok(t)
}

/// Labels present across `dumps`.
pub fn labels<P: AsRef<Path>>(dumps: &[P]) -> Result<Vec<String>, ReportError> {
    let mut all = Vec::new();
    for d in dumps {
        all.extend(read_dump(d.as_ref())?);
    }
    Ok(summarize(&all).into_keys().collect())
}
