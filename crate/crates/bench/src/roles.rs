//! Master and worker lifecycles: start-up barrier, run-key distribution,
//! the case itself, and the shutdown handshake.

use std::path::{Path, PathBuf};

use tuplespace::template_of;

use crate::cases::{self, CaseOutcome};
use crate::node::{Node, RoleError, RoleResult, MASTER};
use crate::protocol::*;

pub fn dump_path(out: &Path, test_key: &str, role: &str) -> PathBuf {
    out.join(format!("dump_{test_key}_{role}.csv"))
}

/// Consumes one READY per worker, then one LOADED per worker.
pub fn barrier_ready(node: &Node, workers: usize) -> RoleResult<()> {
    for _ in 0..workers {
        node.take(MASTER, &template_of(&ready()))?;
    }
    for _ in 0..workers {
        node.take(MASTER, &template_of(&loaded()))?;
    }
    Ok(())
}

pub fn run_master(node: &Node, test_key: &str, out: &Path) -> RoleResult<(CaseOutcome, PathBuf)> {
    let w = node.cfg.workers;
    barrier_ready(node, w)?;
    node.profiler().begin(LABEL_TOTAL);
    cases::distribute(node)?;
    node.write(MASTER, key(test_key))?;
    let collected = cases::collect(node)?;
    node.profiler().end(LABEL_TOTAL)?;
    let outcome = cases::check(&node.cfg, &collected);

    for _ in 0..w {
        node.take(MASTER, &template_of(&worker_done()))?;
    }
    node.write(MASTER, shutdown())?;
    for _ in 0..w {
        node.take(MASTER, &template_of(&worker_exit()))?;
    }
    let dump = dump_path(out, test_key, &node.name);
    node.dump(&dump)?;
    Ok((outcome, dump))
}

/// Runs a worker to completion. With `fault` set the worker stops right
/// after reporting its data as loaded.
pub fn run_worker(node: &Node, out: &Path, fault: bool) -> RoleResult<PathBuf> {
    node.write(MASTER, ready())?;
    cases::load(node)?;
    node.write(MASTER, loaded())?;
    if fault {
        return Err(RoleError::Fault);
    }
    let key = node.read(MASTER, &any_key())?;
    let test_key = key[2].as_str().unwrap().to_owned();
    cases::work(node)?;

    node.write(MASTER, worker_done())?;
    node.read(MASTER, &template_of(&shutdown()))?;
    node.write(MASTER, worker_exit())?;
    let dump = dump_path(out, &test_key, &node.name);
    node.dump(&dump)?;
    Ok(dump)
}
