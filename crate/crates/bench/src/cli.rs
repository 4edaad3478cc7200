//! Command-line interface of `tsbench`.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use tuplespace::{serve, LocalSpace, Strategy};

use crate::config::{BenchConfig, Case, Distribution, Mode, RunConfig, DEFAULT_ITERS, DEFAULT_REPS, DEFAULT_THRESHOLD};
use crate::node::{role_name, Node, RoleError, MASTER};
use crate::report::{aggregate_dir, compare};
use crate::roles::{run_master, run_worker};
use crate::run::run;
use crate::topology::{parse_hosts, result_path, write_result};

#[derive(Debug, Parser)]
#[command(name = "tsbench", version, about = "Master-worker benchmarks over distributed tuple spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a case for several repetitions and write dumps, a manifest and statistics.
    Run(RunArgs),
    /// Aggregate the dumps in a directory into stats.csv.
    Aggregate {
        dir: PathBuf,
    },
    /// Compare one metric between two result directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        metric: String,
    },
    /// Run a single role of a repetition (started by `run` in process modes,
    /// or by hand on each host).
    #[command(hide = true)]
    Role(RoleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    #[arg(long)]
    pub case: Case,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Entries (password), elements (sort), grid side (ocean) or matrix order (matmul).
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = Strategy::Sequential)]
    pub strategy: Strategy,
    /// Placement of B rows; matmul only.
    #[arg(long)]
    pub distribution: Option<Distribution>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest array a sort worker sorts without splitting.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: usize,
    /// Ocean iterations.
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    pub iters: u32,
    #[arg(long, default_value_t = 1)]
    pub poll_interval_ms: u64,
    /// Per-repetition deadline.
    #[arg(long, default_value_t = 300)]
    pub deadline_s: u64,
}

impl CaseArgs {
    pub fn config(&self) -> BenchConfig {
        BenchConfig {
            case: self.case,
            workers: self.workers,
            size: self.size,
            strategy: self.strategy,
            distribution: self.distribution.unwrap_or_default(),
            seed: self.seed,
            threshold: self.threshold,
            iters: self.iters,
            poll_interval: Duration::from_millis(self.poll_interval_ms),
            deadline: Duration::from_secs(self.deadline_s),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: u32,
    #[arg(long, default_value_t = Mode::Threads)]
    pub mode: Mode,
    /// Master port; worker k listens on base + k. 0 picks free ports.
    #[arg(long, default_value_t = 0)]
    pub base_port: u16,
    /// `name host:port` per line, master first (with --mode hosts).
    #[arg(long)]
    pub hosts: Option<PathBuf>,
    #[arg(long, default_value = "bench_out")]
    pub out: PathBuf,
    /// Make this worker (1-based) exit right after loading its data.
    #[arg(long, hide = true)]
    pub fault_worker: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RoleArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    /// Role index: 0 is the master, k the k-th worker.
    #[arg(long)]
    pub index: usize,
    #[arg(long)]
    pub hosts: PathBuf,
    /// Run key the master publishes; ignored by workers.
    #[arg(long, default_value = "manual")]
    pub test_key: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Print `listening` once bound, then wait for a line on stdin.
    #[arg(long)]
    pub await_go: bool,
    #[arg(long)]
    pub fault: bool,
}

/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn usage(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    eprintln!("see `tsbench --help`");
    2
}

fn cmd_run(args: RunArgs) -> i32 {
    if args.case.distribution.is_some() && args.case.case != Case::Matmul {
        return usage("--distribution applies to matmul only");
    }
    let rc = RunConfig {
        bench: args.case.config(),
        reps: args.reps,
        mode: args.mode,
        base_port: args.base_port,
        hosts: args.hosts,
        out: args.out,
        fault_worker: args.fault_worker,
    };
    if let Err(msg) = rc.validate() {
        return usage(msg);
    }
    match run(&rc, None) {
        Ok(report) => {
            for r in &report.reps {
                say!(
                    "rep {} seed {}: {} digest {} wall {:.3}s visited/search {:.3} ({})",
                    r.rep,
                    r.seed,
                    if r.outcome.correct { "correct" } else { "INCORRECT" },
                    r.outcome.digest,
                    r.wall.as_secs_f64(),
                    r.visits.mean(),
                    r.outcome.detail
                );
            }
            say!("manifest {}", report.manifest.display());
            if let Some(a) = &report.aggregate {
                say!("stats {}", a.display());
            }
            if report.all_correct() {
                0
            } else {
                eprintln!("error: at least one repetition produced an incorrect result");
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_aggregate(dir: PathBuf) -> i32 {
    match aggregate_dir(&dir) {
        Ok(groups) => {
            for g in groups {
                say!("{}: {} dumps -> {}", g.group, g.dumps.len(), g.path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_compare(a: PathBuf, b: PathBuf, metric: String) -> i32 {
    match compare(&a, &b, &metric) {
        Ok(table) => {
            let _ = std::io::stdout().lock().write_all(table.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_role(args: RoleArgs) -> i32 {
    let cfg = args.case.config();
    if let Err(msg) = cfg.validate() {
        return usage(msg);
    }
    let addrs = match std::fs::read_to_string(&args.hosts).map_err(|e| e.to_string()).and_then(|t| parse_hosts(&t)) {
        Ok(a) if a.len() == cfg.workers + 1 && args.index < a.len() => a,
        Ok(a) => return usage(format!("hosts file lists {} roles, expected {}", a.len(), cfg.workers + 1)),
        Err(e) => return usage(format!("--hosts: {e}")),
    };
    let server = match serve(LocalSpace::new(), &addrs[args.index]) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", role_name(args.index));
            return 3;
        }
    };
    if args.await_go {
        println!("listening");
        let _ = std::io::stdout().flush();
        let mut line = String::new();
        if std::io::stdin().lock().read_line(&mut line).is_err() || line.trim() != "go" {
            return 3;
        }
    }
    let deadline = Instant::now() + cfg.deadline;
    let result = Node::connect(args.index, cfg, &addrs, server.space().clone(), deadline).and_then(|node| {
        if args.index == MASTER {
            let (outcome, _) = run_master(&node, &args.test_key, &args.out)?;
            write_result(&result_path(&args.out, &args.test_key), &outcome)
                .map_err(|e| RoleError::Protocol(format!("writing result: {e}")))?;
            Ok(if outcome.correct { 0 } else { 1 })
        } else {
            run_worker(&node, &args.out, args.fault).map(|_| 0)
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}: {e}", role_name(args.index));
            3
        }
    }
}

/// Parses `argv` and runs the command; returns the process exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Aggregate { dir } => cmd_aggregate(dir),
        Command::Compare { a, b, metric } => cmd_compare(a, b, metric),
        Command::Role(args) => cmd_role(args),
    }
}
