use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use tuplespace::profiler::read_dump;
use tuplespace::{serve, LocalSpace, NodeAddress, Strategy};
use tuplespace_bench::node::{role_name, Node, RoleError, MASTER};
use tuplespace_bench::protocol::{self, LABEL_VISITED};
use tuplespace_bench::report::visit_totals;
use tuplespace_bench::roles::barrier_ready;
use tuplespace_bench::topology::run_threads;
use tuplespace_bench::{BenchConfig, Case, Distribution};

fn cfg(case: Case, w: usize, n: usize, strategy: Strategy) -> BenchConfig {
    let mut c = BenchConfig::new(case, w, n, strategy);
    c.deadline = Duration::from_secs(60);
    c
}

fn run_ok(c: &BenchConfig, out: &Path) -> tuplespace_bench::topology::RepRun {
    let run = run_threads(c, 0, &format!("t{}", c.seed), out, None).unwrap();
    assert!(run.outcome.correct, "{}", run.outcome.detail);
    run
}

#[test]
fn password_single_worker_visits_one_node_per_search() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(Case::Password, 1, 10, Strategy::Sequential);
    c.seed = 42;
    let run = run_ok(&c, dir.path());
    let visited: Vec<u64> = run
        .dumps
        .iter()
        .flat_map(|d| read_dump(d).unwrap())
        .filter(|r| r.label == LABEL_VISITED)
        .map(|r| r.value)
        .collect();
    assert_eq!(visited.len(), 100);
    assert!(visited.iter().all(|&v| v == 1));
}

#[test]
fn password_with_duplicate_draws_over_four_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(Case::Password, 4, 10_000, Strategy::SuccessFactor);
    c.seed = 3;
    run_ok(&c, dir.path());
    // A tiny database forces repeated hashes among the 100 tasks.
    let mut small = cfg(Case::Password, 4, 5, Strategy::Sequential);
    small.seed = 3;
    run_ok(&small, dir.path());
}

#[test]
fn every_label_is_emitted_by_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut configs = vec![
        cfg(Case::Password, 2, 100, Strategy::Sequential),
        cfg(Case::Sort, 2, 1000, Strategy::Sequential),
        cfg(Case::Ocean, 2, 8, Strategy::Sequential),
        cfg(Case::Matmul, 2, 6, Strategy::Sequential),
    ];
    configs[1].threshold = 100;
    configs[2].iters = 2;
    for c in configs {
        let run = run_ok(&c, dir.path());
        let labels = tuplespace_bench::report::labels(&run.dumps).unwrap();
        for l in protocol::ALL_LABELS {
            assert!(labels.iter().any(|x| x == l), "{} lacks {l}: {labels:?}", c.case);
        }
    }
}

#[test]
fn sort_conserves_elements_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    for (w, n, t) in [(1, 8, 2), (3, 1, 10), (4, 100_000, 10_000), (2, 5000, 7)] {
        let mut c = cfg(Case::Sort, w, n, Strategy::SuccessFactor);
        c.threshold = t;
        run_ok(&c, dir.path());
    }
}

#[test]
fn ocean_small_grids() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(Case::Ocean, 2, 4, Strategy::Sequential);
    c.iters = 1;
    run_ok(&c, dir.path());
    for strategy in [Strategy::SuccessFactor, Strategy::Notify] {
        let mut c = cfg(Case::Ocean, 5, 30, strategy);
        c.iters = 5;
        run_ok(&c, dir.path());
    }
}

#[test]
fn ocean_searches_hit_in_the_first_round() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(Case::Ocean, 4, 16, Strategy::Sequential);
    let run = run_ok(&c, dir.path());
    // Worker k finds its left neighbour at peer position k-1 and its right
    // neighbour at position k, after probing its own space first.
    let per_iteration: u64 = (1..4).map(|k| 1 + k).sum::<u64>() + (0..3).map(|k| 2 + k).sum::<u64>();
    let totals = visit_totals(&run.dumps).unwrap();
    assert_eq!(totals.searches, 6 * 20);
    assert_eq!(totals.visited_first_round, per_iteration * 20);
}

#[test]
fn matmul_distributions_and_strategies() {
    let dir = tempfile::tempdir().unwrap();
    for d in [Distribution::Uniform, Distribution::BOnOne] {
        for s in [Strategy::Sequential, Strategy::SuccessFactor, Strategy::Notify] {
            let mut c = cfg(Case::Matmul, 3, 7, s);
            c.distribution = d;
            run_ok(&c, dir.path());
        }
    }
}

#[test]
fn matmul_b_on_one_visits_fewer_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let mut means = Vec::new();
    for d in [Distribution::Uniform, Distribution::BOnOne] {
        let mut c = cfg(Case::Matmul, 5, 50, Strategy::SuccessFactor);
        c.distribution = d;
        means.push(visit_totals(&run_ok(&c, dir.path()).dumps).unwrap().mean());
    }
    assert!(means[1] < means[0], "{means:?}");
}

fn cluster(roles: usize) -> (Vec<tuplespace::Server>, Vec<NodeAddress>) {
    let servers: Vec<_> =
        (0..roles).map(|i| serve(LocalSpace::new(), &NodeAddress::new(role_name(i), "127.0.0.1", 0)).unwrap()).collect();
    let addrs = servers.iter().map(|s| s.address()).collect();
    (servers, addrs)
}

#[test]
fn barrier_returns_once_every_worker_reports() {
    let (servers, addrs) = cluster(2);
    let c = cfg(Case::Password, 1, 1, Strategy::Sequential);
    let deadline = Instant::now() + Duration::from_secs(10);
    let worker = {
        let (c, addrs, space) = (c.clone(), addrs.clone(), servers[1].space().clone());
        thread::spawn(move || {
            let node = Node::connect(1, c, &addrs, space, deadline).unwrap();
            node.write(MASTER, protocol::ready()).unwrap();
            node.write(MASTER, protocol::loaded()).unwrap();
        })
    };
    let master = Node::connect(0, c, &addrs, servers[0].space().clone(), deadline).unwrap();
    barrier_ready(&master, 1).unwrap();
    worker.join().unwrap();
    assert!(servers[0].space().is_empty());
}

#[test]
fn barrier_times_out_when_a_worker_is_silent() {
    let (servers, addrs) = cluster(4);
    let c = cfg(Case::Password, 3, 1, Strategy::Sequential);
    let deadline = Instant::now() + Duration::from_millis(300);
    for (i, server) in servers.iter().enumerate().take(3).skip(1) {
        let node = Node::connect(i, c.clone(), &addrs, server.space().clone(), deadline).unwrap();
        node.write(MASTER, protocol::ready()).unwrap();
        node.write(MASTER, protocol::loaded()).unwrap();
    }
    let master = Node::connect(0, c, &addrs, servers[0].space().clone(), deadline).unwrap();
    match barrier_ready(&master, 3) {
        Err(RoleError::Deadline(_)) => {}
        other => panic!("expected a deadline, got {other:?}"),
    }
}
