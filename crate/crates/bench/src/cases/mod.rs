//! The four master-worker workloads. Each case module provides the worker
//! side (`load`, `work`), the master side (`distribute`, `collect`), input
//! generation and a sequential oracle used by [`check`].

pub mod matmul;
pub mod ocean;
pub mod password;
pub mod sort;

use md5::{Digest, Md5};

use crate::config::{BenchConfig, Case};
use crate::node::{Node, RoleResult};

/// What the master gathered from the workers.
#[derive(Debug, Clone, PartialEq)]
pub enum Collected {
    /// `(hash, password)` answers in arrival order.
    Password(Vec<(String, String)>),
    Sort { merged: Vec<i64>, run_lengths: Vec<usize> },
    /// Row-major `n x n` grid.
    Ocean(Vec<f64>),
    /// Row-major `n x n` product.
    Matmul(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseOutcome {
    pub correct: bool,
    /// MD5 of the canonical output bytes.
    pub digest: String,
    pub detail: String,
}

pub fn md5_hex(bytes: &[u8]) -> String {
    format!("{:x}", Md5::digest(bytes))
}

pub(crate) fn i64_bytes(values: &[i64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect()
}

/// Worker side, before it reports its data as loaded.
pub fn load(node: &Node) -> RoleResult<()> {
    match node.cfg.case {
        Case::Password => password::load(node),
        Case::Sort | Case::Ocean | Case::Matmul => Ok(()),
    }
}

/// Master side, after the barrier and before the run key is published.
pub fn distribute(node: &Node) -> RoleResult<()> {
    match node.cfg.case {
        Case::Password => Ok(()),
        Case::Sort => sort::distribute(node),
        Case::Ocean => ocean::distribute(node),
        Case::Matmul => matmul::distribute(node),
    }
}

/// Master side, after the run key is published.
pub fn collect(node: &Node) -> RoleResult<Collected> {
    match node.cfg.case {
        Case::Password => password::collect(node),
        Case::Sort => sort::collect(node),
        Case::Ocean => ocean::collect(node),
        Case::Matmul => matmul::collect(node),
    }
}

/// Worker side, after it has read the run key.
pub fn work(node: &Node) -> RoleResult<()> {
    match node.cfg.case {
        Case::Password => password::work(node),
        Case::Sort => sort::work(node),
        Case::Ocean => ocean::work(node),
        Case::Matmul => matmul::work(node),
    }
}

/// Compares what the master collected against the case oracle, regenerating
/// the inputs from the configuration.
pub fn check(cfg: &BenchConfig, collected: &Collected) -> CaseOutcome {
    match collected {
        Collected::Password(answers) => password::check(cfg, answers),
        Collected::Sort { merged, run_lengths } => sort::check(cfg, merged, run_lengths),
        Collected::Ocean(grid) => ocean::check(cfg, grid),
        Collected::Matmul(c) => matmul::check(cfg, c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md5_reference_values() {
        assert_eq!(md5_hex(b"0"), "cfcd208495d565ef66e7dff9f98764da");
        assert_eq!(md5_hex(b"9999"), "fa246d0262c3925617b0c72bb20eeb1d");
        assert_eq!(md5_hex(b""), "d41d8cd98f00b204e9800998ecf8427e");
    }
}
