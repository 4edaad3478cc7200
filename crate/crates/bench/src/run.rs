//! The `run` command: repetitions, dumps, manifest and aggregation.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::cases::CaseOutcome;
use crate::config::{Mode, RunConfig};
use crate::report::{aggregate_dir, manifest_path, visit_totals, Manifest, ReportError, VisitTotals};
use crate::topology::{check_free, loopback_addresses, parse_hosts, run_procs, run_threads, RepError, RepRun};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("repetition {rep}: {source}")]
    Rep { rep: u32, source: RepError },
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Rep { .. } | RunError::Report(_) => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RepReport {
    pub rep: u32,
    pub seed: u64,
    pub test_key: String,
    pub outcome: CaseOutcome,
    pub dumps: Vec<PathBuf>,
    pub wall: Duration,
    pub visits: VisitTotals,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub run_key: String,
    pub manifest: PathBuf,
    pub reps: Vec<RepReport>,
    pub aggregate: Option<PathBuf>,
}

impl RunReport {
    pub fn all_correct(&self) -> bool {
        self.reps.iter().all(|r| r.outcome.correct)
    }

    pub fn visits(&self) -> VisitTotals {
        self.reps.iter().fold(VisitTotals::default(), |a, r| a + r.visits)
    }
}

/// `<unix millis>-<pid>-<counter>-s<seed>`; unique per invocation.
pub fn new_run_key(seed: u64) -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let millis = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    format!("{millis}-{}-{}-s{seed}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed))
}

fn base_manifest(rc: &RunConfig, run_key: &str) -> Manifest {
    let c = &rc.bench;
    let mut m = Manifest::default();
    m.set("run_key", run_key);
    m.set("case", c.case);
    m.set("workers", c.workers);
    m.set("size", c.size);
    m.set("strategy", c.strategy);
    m.set("distribution", c.distribution);
    m.set("reps", rc.reps);
    m.set("seed", c.seed);
    m.set("threshold", c.threshold);
    m.set("iters", c.iters);
    m.set("mode", rc.mode);
    m.set("base_port", rc.base_port);
    if let Some(h) = &rc.hosts {
        m.set("hosts", h.display());
    }
    m.set("poll_interval_ms", c.poll_interval.as_millis());
    m.set("deadline_s", c.deadline.as_secs());
    m
}

fn record_rep(m: &mut Manifest, r: &RepReport) {
    let p = format!("rep.{}.", r.rep);
    m.set(format!("{p}seed"), r.seed);
    m.set(format!("{p}test_key"), &r.test_key);
    m.set(format!("{p}correct"), r.outcome.correct);
    m.set(format!("{p}digest"), &r.outcome.digest);
    m.set(format!("{p}detail"), &r.outcome.detail);
    m.set(format!("{p}wall_ms"), r.wall.as_millis());
    m.set(format!("{p}visited_first_round"), r.visits.visited_first_round);
    m.set(format!("{p}searches"), r.visits.searches);
    let names: Vec<String> =
        r.dumps.iter().map(|d| d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned())).collect();
    m.set(format!("{p}dumps"), names.join(","));
}

/// Runs every repetition of `rc`. `exe` is the `tsbench` binary, needed
/// for the process modes. Returns the report even when some repetition
/// was incorrect; infrastructure failures and deadlines are errors.
pub fn run(rc: &RunConfig, exe: Option<&Path>) -> Result<RunReport, RunError> {
    rc.validate().map_err(RunError::Usage)?;
    fs::create_dir_all(&rc.out).map_err(|e| RunError::Usage(format!("--out {}: {e}", rc.out.display())))?;
    let host_addrs = match &rc.hosts {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| RunError::Usage(format!("--hosts {}: {e}", path.display())))?;
            let addrs = parse_hosts(&text).map_err(RunError::Usage)?;
            if addrs.len() != rc.bench.workers + 1 {
                return Err(RunError::Usage(format!(
                    "--hosts lists {} roles, expected {} (master plus {} workers)",
                    addrs.len(),
                    rc.bench.workers + 1,
                    rc.bench.workers
                )));
            }
            Some(addrs)
        }
        None => None,
    };
    let exe = match (rc.mode, exe) {
        (Mode::Threads, _) => None,
        (_, Some(exe)) => Some(exe.to_owned()),
        (_, None) => Some(std::env::current_exe().map_err(|e| RunError::Usage(format!("locating tsbench: {e}")))?),
    };

    let run_key = new_run_key(rc.bench.seed);
    let manifest_file = manifest_path(&rc.out, &run_key);
    let mut manifest = base_manifest(rc, &run_key);
    manifest.write(&manifest_file)?;
    let mut reps = Vec::new();
    for rep in 0..rc.reps {
        let cfg = rc.bench.for_rep(rep);
        let test_key = format!("{run_key}_rep{rep}");
        let result: Result<RepRun, RepError> = match rc.mode {
            Mode::Threads => run_threads(&cfg, rc.base_port, &test_key, &rc.out, rc.fault_worker),
            Mode::Procs | Mode::Hosts => {
                let addrs = match &host_addrs {
                    Some(a) => check_free(a).map(|_| a.clone()),
                    None => loopback_addresses(cfg.workers + 1, rc.base_port),
                };
                addrs.and_then(|a| run_procs(exe.as_deref().unwrap(), &cfg, &a, &test_key, &rc.out, rc.fault_worker))
            }
        };
        let run = match result {
            Ok(run) => run,
            Err(source) => {
                manifest.set(format!("rep.{rep}.error"), &source);
                manifest.write(&manifest_file)?;
                return Err(RunError::Rep { rep, source });
            }
        };
        let report = RepReport {
            rep,
            seed: cfg.seed,
            test_key,
            visits: visit_totals(&run.dumps)?,
            outcome: run.outcome,
            dumps: run.dumps,
            wall: run.wall,
        };
        record_rep(&mut manifest, &report);
        manifest.write(&manifest_file)?;
        reps.push(report);
    }
    let groups = aggregate_dir(&rc.out)?;
    let group = manifest.group();
    let aggregate = groups.iter().find(|g| g.group == group || groups.len() == 1).map(|g| g.path.clone());
    if let Some(path) = &aggregate {
        manifest.set("aggregate", path.display());
    }
    manifest.set("all_correct", reps.iter().all(|r| r.outcome.correct));
    manifest.write(&manifest_file)?;
    Ok(RunReport { run_key, manifest: manifest_file, reps, aggregate })
}
