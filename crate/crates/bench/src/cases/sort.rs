use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use tuplespace::rng::SplitMix64;
use tuplespace::template;

use super::{i64_bytes, md5_hex, CaseOutcome, Collected};
use crate::config::BenchConfig;
use crate::node::{worker_role, Node, RoleError, RoleResult, MASTER};
use crate::protocol::*;

/// Largest array sent in one tuple; longer arrays are split into parts so a
/// frame stays well under the 64 MiB limit.
pub const MAX_ARRAY: usize = 4 * 1024 * 1024;

pub fn input(cfg: &BenchConfig) -> Vec<i64> {
    let mut rng = SplitMix64::new(cfg.seed);
    (0..cfg.size).map(|_| rng.next_i64()).collect()
}

/// Splits `values` so the first half has `ceil(len / 2)` elements.
pub fn split(mut values: Vec<i64>) -> (Vec<i64>, Vec<i64>) {
    let rest = values.split_off(values.len().div_ceil(2));
    (values, rest)
}

/// Merges ascending runs into one ascending array.
pub fn merge(runs: &[Vec<i64>]) -> Vec<i64> {
    let mut heap: BinaryHeap<Reverse<(i64, usize, usize)>> =
        runs.iter().enumerate().filter(|(_, r)| !r.is_empty()).map(|(k, r)| Reverse((r[0], k, 0))).collect();
    let mut out = Vec::with_capacity(runs.iter().map(Vec::len).sum());
    while let Some(Reverse((v, k, i))) = heap.pop() {
        out.push(v);
        if let Some(&next) = runs[k].get(i + 1) {
            heap.push(Reverse((next, k, i + 1)));
        }
    }
    out
}

/// Sorts by repeated splitting down to `threshold`, sequentially. Returns
/// the runs in the order a single worker would emit them.
pub fn reference_runs(values: Vec<i64>, threshold: usize) -> Vec<Vec<i64>> {
    let mut pending = vec![values];
    let mut runs = Vec::new();
    while let Some(mut v) = pending.pop() {
        while v.len() > threshold {
            let (first, rest) = split(v);
            pending.push(first);
            v = rest;
        }
        v.sort_unstable();
        runs.push(v);
    }
    runs
}

pub fn distribute(node: &Node) -> RoleResult<()> {
    let values = input(&node.cfg);
    for chunk in values.chunks(MAX_ARRAY) {
        node.write(worker_role(0), unsorted(chunk.to_vec()))?;
    }
    Ok(())
}

pub fn collect(node: &Node) -> RoleResult<Collected> {
    let n = node.cfg.size;
    let mut runs: Vec<Vec<i64>> = Vec::new();
    let mut parts: HashMap<i64, Vec<Option<Vec<i64>>>> = HashMap::new();
    let mut total = 0;
    while total < n {
        if let Some(t) = node.take_within(MASTER, &any_sorted(), node.cfg.poll_interval)? {
            let run = t[1].as_int_array().unwrap().to_vec();
            total += run.len();
            runs.push(run);
        }
        while let Some(t) = node.take_probe(MASTER, &any_sorted_part())? {
            let (id, idx, count) = (t[1].as_i64().unwrap(), t[2].as_i64().unwrap() as usize, t[3].as_i64().unwrap() as usize);
            let slots = parts.entry(id).or_insert_with(|| vec![None; count]);
            if idx >= slots.len() || slots[idx].is_some() {
                return Err(RoleError::Protocol(format!("bad sorted_part {idx}/{count} of run {id}")));
            }
            slots[idx] = Some(t[4].as_int_array().unwrap().to_vec());
            if slots.iter().all(Option::is_some) {
                let run: Vec<i64> = parts.remove(&id).unwrap().into_iter().flatten().flatten().collect();
                total += run.len();
                runs.push(run);
            }
        }
    }
    if total != n {
        return Err(RoleError::Protocol(format!("received {total} sorted elements, expected {n}")));
    }
    let merged = merge(&runs);
    for id in 0..node.cfg.workers {
        node.write(worker_role(id), sort_complete())?;
    }
    Ok(Collected::Sort { merged, run_lengths: runs.iter().map(Vec::len).collect() })
}

fn send_run(node: &Node, run: Vec<i64>, next_run: &mut i64) -> RoleResult<()> {
    if run.len() <= MAX_ARRAY {
        return node.write(MASTER, sorted(run));
    }
    let id = ((node.worker_id() as i64) << 32) | *next_run;
    *next_run += 1;
    let parts = run.len().div_ceil(MAX_ARRAY) as i64;
    for (k, chunk) in run.chunks(MAX_ARRAY).enumerate() {
        node.write(MASTER, sorted_part(id, k as i64, parts, chunk.to_vec()))?;
    }
    Ok(())
}

pub fn work(node: &Node) -> RoleResult<()> {
    let stop = template!["sort_complete"];
    let mut next_run = 0;
    while let Some(t) = node.search(&any_unsorted(), true, Some(&stop))? {
        let mut values = t[1].as_int_array().unwrap().to_vec();
        while values.len() > node.cfg.threshold {
            let (first, rest) = split(values);
            node.write(node.index, unsorted(first))?;
            values = rest;
        }
        values.sort_unstable();
        send_run(node, values, &mut next_run)?;
    }
    Ok(())
}

pub fn check(cfg: &BenchConfig, merged: &[i64], run_lengths: &[usize]) -> CaseOutcome {
    let mut reference = input(cfg);
    reference.sort_unstable();
    let conserved = run_lengths.iter().sum::<usize>() == cfg.size;
    CaseOutcome {
        correct: conserved && merged == reference.as_slice(),
        digest: md5_hex(&i64_bytes(merged)),
        detail: format!(
            "{} elements in {} runs, run lengths sum to {}, {}",
            merged.len(),
            run_lengths.len(),
            run_lengths.iter().sum::<usize>(),
            if merged == reference.as_slice() { "equal to reference sort" } else { "differs from reference sort" }
        ),
    }
}
