//! Laying out one repetition: role addresses, the hosts file, and running
//! the roles as threads or as child processes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use tuplespace::{serve, LocalSpace, NodeAddress};

use crate::cases::CaseOutcome;
use crate::config::BenchConfig;
use crate::node::{role_name, Node, RoleError, MASTER};
use crate::roles::{dump_path, run_master, run_worker};

/// Why a repetition could not produce a result.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepError {
    #[error("deadline exceeded: {0}")]
    Deadline(String),
    #[error("infrastructure failure: {0}")]
    Infra(String),
}

impl From<(usize, RoleError)> for RepError {
    fn from((role, e): (usize, RoleError)) -> RepError {
        let msg = format!("{}: {e}", role_name(role));
        match e {
            RoleError::Deadline(_) => RepError::Deadline(msg),
            _ => RepError::Infra(msg),
        }
    }
}

/// What one repetition produced.
#[derive(Debug, Clone)]
pub struct RepRun {
    pub outcome: CaseOutcome,
    pub dumps: Vec<PathBuf>,
    pub wall: Duration,
}

/// Parses a hosts file: one `name host:port` line per role, master first.
/// Blank lines and `#` comments are ignored.
pub fn parse_hosts(text: &str) -> Result<Vec<NodeAddress>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |why: &str| format!("hosts line {}: {why}: {line:?}", n + 1);
        let mut parts = line.split_whitespace();
        let (Some(name), Some(addr), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected `name host:port`"));
        };
        let (host, port) = addr.rsplit_once(':').ok_or_else(|| bad("missing port"))?;
        let port: u16 = port.parse().map_err(|_| bad("bad port"))?;
        if port == 0 {
            return Err(bad("port must be 1-65535"));
        }
        let host = host.trim_start_matches('[').trim_end_matches(']');
        out.push(NodeAddress::new(name, host, port));
    }
    Ok(out)
}

pub fn format_hosts(addrs: &[NodeAddress]) -> String {
    addrs
        .iter()
        .map(|a| if a.host.contains(':') { format!("{} [{}]:{}\n", a.name, a.host, a.port) } else { format!("{} {}:{}\n", a.name, a.host, a.port) })
        .collect()
}

/// Addresses `base_port + role` on loopback, after checking each is free.
/// A zero base picks free ports instead.
pub fn loopback_addresses(roles: usize, base_port: u16) -> Result<Vec<NodeAddress>, RepError> {
    let listeners: Vec<TcpListener> = (0..roles)
        .map(|i| {
            let port = if base_port == 0 { 0 } else { base_port + i as u16 };
            TcpListener::bind(("127.0.0.1", port)).map_err(|e| RepError::Infra(format!("port {port}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    Ok(listeners
        .iter()
        .enumerate()
        .map(|(i, l)| NodeAddress::new(role_name(i), "127.0.0.1", l.local_addr().unwrap().port()))
        .collect())
}

/// Checks that every address can be bound on this host.
pub fn check_free(addrs: &[NodeAddress]) -> Result<(), RepError> {
    for a in addrs {
        TcpListener::bind((a.host.as_str(), a.port)).map_err(|e| RepError::Infra(format!("{a}: {e}")))?;
    }
    Ok(())
}

enum Finished {
    Master(CaseOutcome, PathBuf),
    Worker(PathBuf),
}

/// Runs every role as a thread of this process. Servers are bound before
/// any role starts, so connection attempts never race a bind.
pub fn run_threads(cfg: &BenchConfig, base_port: u16, test_key: &str, out: &Path, fault: Option<usize>) -> Result<RepRun, RepError> {
    let start = Instant::now();
    let roles = cfg.workers + 1;
    let mut servers = Vec::with_capacity(roles);
    for i in 0..roles {
        let port = if base_port == 0 { 0 } else { base_port + i as u16 };
        let addr = NodeAddress::new(role_name(i), "127.0.0.1", port);
        servers.push(serve(LocalSpace::new(), &addr).map_err(|e| RepError::Infra(format!("{addr}: {e}")))?);
    }
    let addrs: Vec<NodeAddress> = servers.iter().map(|s| s.address()).collect();
    let deadline = start + cfg.deadline;
    let (tx, rx) = mpsc::channel();
    for (i, server) in servers.into_iter().enumerate() {
        let (tx, cfg, addrs, out, key) = (tx.clone(), cfg.clone(), addrs.clone(), out.to_owned(), test_key.to_owned());
        let spawned = thread::Builder::new().name(role_name(i)).spawn(move || {
            let result = Node::connect(i, cfg, &addrs, server.space().clone(), deadline).and_then(|node| {
                if i == MASTER {
                    run_master(&node, &key, &out).map(|(o, d)| Finished::Master(o, d))
                } else {
                    run_worker(&node, &out, fault == Some(i)).map(Finished::Worker)
                }
            });
            drop(server);
            let _ = tx.send((i, result));
        });
        spawned.map_err(|e| RepError::Infra(format!("spawning {}: {e}", role_name(i))))?;
    }
    drop(tx);

    let mut outcome = None;
    let mut dumps = vec![PathBuf::new(); roles];
    for _ in 0..roles {
        // Roles bound every blocking call by the deadline; the grace period
        // covers the unwinding after it.
        let wait = deadline.saturating_duration_since(Instant::now()) + Duration::from_secs(5);
        match rx.recv_timeout(wait) {
            Ok((i, Ok(Finished::Master(o, d)))) => {
                outcome = Some(o);
                dumps[i] = d;
            }
            Ok((i, Ok(Finished::Worker(d)))) => dumps[i] = d,
            Ok((i, Err(e))) => return Err((i, e).into()),
            Err(_) => return Err(RepError::Deadline("roles did not finish".into())),
        }
    }
    Ok(RepRun { outcome: outcome.expect("master reported"), dumps, wall: start.elapsed() })
}

pub fn result_path(out: &Path, test_key: &str) -> PathBuf {
    out.join(format!("result_{test_key}.txt"))
}

pub fn write_result(path: &Path, outcome: &CaseOutcome) -> std::io::Result<()> {
    fs::write(path, format!("correct={}\ndigest={}\ndetail={}\n", outcome.correct, outcome.digest, outcome.detail))
}

pub fn read_result(path: &Path) -> Result<CaseOutcome, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let get = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .map(str::to_owned)
            .ok_or_else(|| format!("{}: missing {key}", path.display()))
    };
    Ok(CaseOutcome { correct: get("correct")? == "true", digest: get("digest")?, detail: get("detail")? })
}

/// Command-line flags that reproduce `cfg` for a `role` child.
pub fn config_args(cfg: &BenchConfig) -> Vec<String> {
    vec![
        "--case".into(),
        cfg.case.to_string(),
        "--workers".into(),
        cfg.workers.to_string(),
        "--size".into(),
        cfg.size.to_string(),
        "--strategy".into(),
        cfg.strategy.to_string(),
        "--distribution".into(),
        cfg.distribution.to_string(),
        "--seed".into(),
        cfg.seed.to_string(),
        "--threshold".into(),
        cfg.threshold.to_string(),
        "--iters".into(),
        cfg.iters.to_string(),
        "--poll-interval-ms".into(),
        cfg.poll_interval.as_millis().to_string(),
        "--deadline-s".into(),
        cfg.deadline.as_secs().to_string(),
    ]
}

struct Children(Vec<Child>);

impl Drop for Children {
    fn drop(&mut self) {
        for c in &mut self.0 {
            if matches!(c.try_wait(), Ok(None)) {
                let _ = c.kill();
            }
            let _ = c.wait();
        }
    }
}

/// Runs every role as a child process of `exe` (this binary), bound to
/// `addrs`. Children report once they listen; they are released together
/// so that no connection attempt races a bind.
pub fn run_procs(
    exe: &Path,
    cfg: &BenchConfig,
    addrs: &[NodeAddress],
    test_key: &str,
    out: &Path,
    fault: Option<usize>,
) -> Result<RepRun, RepError> {
    let start = Instant::now();
    let deadline = start + cfg.deadline;
    let infra = |what: &str, e: &dyn std::fmt::Display| RepError::Infra(format!("{what}: {e}"));
    let hosts = out.join(format!("hosts_{test_key}.txt"));
    fs::write(&hosts, format_hosts(addrs)).map_err(|e| infra("writing hosts file", &e))?;
    let result_file = result_path(out, test_key);
    let _ = fs::remove_file(&result_file);

    let mut children = Children(Vec::new());
    let (tx, rx) = mpsc::channel();
    for i in 0..addrs.len() {
        let mut cmd = Command::new(exe);
        cmd.arg("role")
            .args(["--index", &i.to_string(), "--hosts"])
            .arg(&hosts)
            .args(["--test-key", test_key, "--out"])
            .arg(out)
            .arg("--await-go")
            .args(config_args(cfg))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if fault == Some(i) {
            cmd.arg("--fault");
        }
        let mut child = cmd.spawn().map_err(|e| infra(&format!("spawning {}", role_name(i)), &e))?;
        let stdout = child.stdout.take().unwrap();
        let tx = tx.clone();
        thread::spawn(move || {
            let mut line = String::new();
            let _ = BufReader::new(stdout).read_line(&mut line);
            let _ = tx.send((i, line.trim() == "listening"));
        });
        children.0.push(child);
    }
    drop(tx);
    for _ in 0..addrs.len() {
        match rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
            Ok((_, true)) => {}
            Ok((i, false)) => return Err(RepError::Infra(format!("{} failed to start", role_name(i)))),
            Err(_) => return Err(RepError::Deadline("roles did not start".into())),
        }
    }
    for c in &mut children.0 {
        let mut stdin = c.stdin.take().unwrap();
        stdin.write_all(b"go\n").and_then(|_| stdin.flush()).map_err(|e| infra("releasing roles", &e))?;
    }

    let mut codes: Vec<Option<i32>> = vec![None; addrs.len()];
    while codes.iter().any(Option::is_none) {
        for (i, c) in children.0.iter_mut().enumerate() {
            if codes[i].is_some() {
                continue;
            }
            if let Some(status) = c.try_wait().map_err(|e| infra("waiting", &e))? {
                let code = status.code().unwrap_or(-1);
                codes[i] = Some(code);
                let master_verdict = i == MASTER && code == 1;
                if code != 0 && !master_verdict {
                    return Err(RepError::Infra(format!("{} exited with status {status}", role_name(i))));
                }
            }
        }
        if Instant::now() >= deadline {
            return Err(RepError::Deadline("roles did not finish".into()));
        }
        thread::sleep(Duration::from_millis(5));
    }
    let outcome = read_result(&result_file).map_err(RepError::Infra)?;
    let dumps = (0..addrs.len()).map(|i| dump_path(out, test_key, &role_name(i))).collect();
    Ok(RepRun { outcome, dumps, wall: start.elapsed() })
}
