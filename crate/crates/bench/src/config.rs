//! Workload parameters and their validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use tuplespace::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Password,
    Sort,
    Ocean,
    Matmul,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Password => "password",
            Case::Sort => "sort",
            Case::Ocean => "ocean",
            Case::Matmul => "matmul",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "password" => Ok(Case::Password),
            "sort" => Ok(Case::Sort),
            "ocean" => Ok(Case::Ocean),
            "matmul" => Ok(Case::Matmul),
            other => Err(format!("unknown case {other:?} (expected password, sort, ocean or matmul)")),
        }
    }
}

/// Where matmul places the rows of B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Distribution {
    #[default]
    Uniform,
    BOnOne,
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::BOnOne => "b_on_one",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "b_on_one" => Ok(Distribution::BOnOne),
            other => Err(format!("unknown distribution {other:?} (expected uniform or b_on_one)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Every role is a thread of this process, talking over loopback TCP.
    #[default]
    Threads,
    /// Every role is a child process on this host.
    Procs,
    /// Like `Procs`, with role addresses taken from a hosts file.
    Hosts,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Threads => "threads",
            Mode::Procs => "procs",
            Mode::Hosts => "hosts",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threads" => Ok(Mode::Threads),
            "procs" => Ok(Mode::Procs),
            "hosts" => Ok(Mode::Hosts),
            other => Err(format!("unknown mode {other:?} (expected threads, procs or hosts)")),
        }
    }
}

pub const DEFAULT_REPS: u32 = 10;
pub const DEFAULT_THRESHOLD: usize = 10_000;
pub const DEFAULT_ITERS: u32 = 20;
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(300);
/// Number of password lookups per run.
pub const PASSWORD_TASKS: usize = 100;

/// Parameters of one repetition, as seen by every role.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub case: Case,
    pub workers: usize,
    /// Entries (password), elements (sort), grid side (ocean) or matrix
    /// order (matmul).
    pub size: usize,
    pub strategy: Strategy,
    pub distribution: Distribution,
    pub seed: u64,
    pub threshold: usize,
    pub iters: u32,
    pub poll_interval: Duration,
    pub deadline: Duration,
}

impl BenchConfig {
    pub fn new(case: Case, workers: usize, size: usize, strategy: Strategy) -> BenchConfig {
        BenchConfig {
            case,
            workers,
            size,
            strategy,
            distribution: Distribution::Uniform,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            iters: DEFAULT_ITERS,
            poll_interval: tuplespace::search::DEFAULT_POLL_INTERVAL,
            deadline: DEFAULT_DEADLINE,
        }
    }

    /// Checks the case preconditions. The message is meant for a usage error.
    pub fn validate(&self) -> Result<(), String> {
        if self.workers == 0 {
            return Err("--workers must be at least 1".into());
        }
        if self.size == 0 {
            return Err("--size must be at least 1".into());
        }
        if self.deadline.is_zero() {
            return Err("--deadline-s must be positive".into());
        }
        if self.distribution != Distribution::Uniform && self.case != Case::Matmul {
            return Err("--distribution applies to matmul only".into());
        }
        match self.case {
            Case::Password => Ok(()),
            Case::Sort if self.strategy == Strategy::Notify => {
                Err("sort acquires work destructively; the notify strategy only reads".into())
            }
            Case::Sort if self.threshold == 0 => Err("--threshold must be at least 1".into()),
            Case::Sort => Ok(()),
            Case::Ocean if self.workers < 2 => Err("ocean needs at least 2 workers".into()),
            Case::Ocean if self.workers > self.size => Err("ocean needs --workers <= --size".into()),
            Case::Ocean => Ok(()),
            Case::Matmul if self.size < self.workers => Err("matmul needs --size >= --workers".into()),
            Case::Matmul => Ok(()),
        }
    }

    /// The same configuration with the seed of repetition `rep`.
    pub fn for_rep(&self, rep: u32) -> BenchConfig {
        BenchConfig { seed: self.seed.wrapping_add(rep as u64), ..self.clone() }
    }
}

/// A full `run` invocation: the workload plus how to lay it out.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub bench: BenchConfig,
    pub reps: u32,
    pub mode: Mode,
    /// Port of the master; worker `k` listens on `base_port + k`. Zero
    /// picks free ports.
    pub base_port: u16,
    pub hosts: Option<PathBuf>,
    pub out: PathBuf,
    /// Worker index (1-based) that exits abruptly after loading its data.
    pub fault_worker: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.bench.validate()?;
        if self.reps == 0 {
            return Err("--reps must be at least 1".into());
        }
        match (self.mode, &self.hosts) {
            (Mode::Hosts, None) => return Err("--mode hosts needs --hosts <file>".into()),
            (Mode::Threads | Mode::Procs, Some(_)) => return Err("--hosts is only used with --mode hosts".into()),
            _ => {}
        }
        if let Some(k) = self.fault_worker {
            if k == 0 || k > self.bench.workers {
                return Err(format!("fault worker {k} is not a worker index"));
            }
        }
        if self.base_port != 0 && self.base_port as usize + self.bench.workers > u16::MAX as usize {
            return Err("--base-port leaves no room for every role".into());
        }
        Ok(())
    }
}
