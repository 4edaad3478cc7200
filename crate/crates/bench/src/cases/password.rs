use std::collections::BTreeMap;

use tuplespace::rng::SplitMix64;

use super::{md5_hex, CaseOutcome};
use crate::config::{BenchConfig, PASSWORD_TASKS};
use crate::node::{Node, RoleError, RoleResult, MASTER};
use crate::protocol::*;

pub fn hash_of(password: &str) -> String {
    md5_hex(password.as_bytes())
}

/// Database entries `[lo, hi)` held by worker `id`.
pub fn partition(n: usize, workers: usize, id: usize) -> (usize, usize) {
    (id * n / workers, (id + 1) * n / workers)
}

/// Hashes to look up, drawn uniformly with replacement.
pub fn task_hashes(cfg: &BenchConfig) -> Vec<String> {
    let mut rng = SplitMix64::new(cfg.seed);
    (0..PASSWORD_TASKS).map(|_| hash_of(&rng.below(cfg.size as u64).to_string())).collect()
}

pub fn load(node: &Node) -> RoleResult<()> {
    let (lo, hi) = partition(node.cfg.size, node.cfg.workers, node.worker_id());
    for i in lo..hi {
        let password = i.to_string();
        node.write(node.index, hash_set(&hash_of(&password), &password))?;
    }
    Ok(())
}

pub fn collect(node: &Node) -> RoleResult<super::Collected> {
    for hash in task_hashes(&node.cfg) {
        node.write(MASTER, task(&hash, STATUS_NOT_PROCESSED))?;
    }
    let mut answers = Vec::with_capacity(PASSWORD_TASKS);
    for _ in 0..PASSWORD_TASKS {
        let t = node.take(MASTER, &any_found())?;
        answers.push((t[1].as_str().unwrap().to_owned(), t[2].as_str().unwrap().to_owned()));
    }
    for _ in 0..node.cfg.workers {
        node.write(MASTER, task("", STATUS_COMPLETE))?;
    }
    Ok(super::Collected::Password(answers))
}

pub fn work(node: &Node) -> RoleResult<()> {
    loop {
        let t = node.take(MASTER, &any_task())?;
        let (hash, status) = (t[1].as_str().unwrap(), t[2].as_str().unwrap());
        if status == STATUS_COMPLETE {
            return Ok(());
        }
        let hit = node
            .search(&hash_lookup(hash), false, None)?
            .ok_or_else(|| RoleError::Protocol("hash search stopped".into()))?;
        node.write(MASTER, found(hash, hit[2].as_str().unwrap()))?;
    }
}

fn multiset<'a>(items: impl IntoIterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut m = BTreeMap::new();
    for s in items {
        *m.entry(s).or_insert(0) += 1;
    }
    m
}

pub fn check(cfg: &BenchConfig, answers: &[(String, String)]) -> CaseOutcome {
    let tasks = task_hashes(cfg);
    let wrong: Vec<&(String, String)> = answers.iter().filter(|(h, p)| &hash_of(p) != h).collect();
    let same_hashes = multiset(tasks.iter().map(String::as_str)) == multiset(answers.iter().map(|(h, _)| h.as_str()));
    let mut lines: Vec<String> = answers.iter().map(|(h, p)| format!("{h} {p}\n")).collect();
    lines.sort();
    CaseOutcome {
        correct: wrong.is_empty() && same_hashes && answers.len() == tasks.len(),
        digest: md5_hex(lines.concat().as_bytes()),
        detail: format!(
            "{} tasks, {} answers, {} wrong passwords, task multiset {}",
            tasks.len(),
            answers.len(),
            wrong.len(),
            if same_hashes { "matched" } else { "differs" }
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Case;
    use tuplespace::Strategy;

    #[test]
    fn partitions_cover_the_database() {
        for (n, w) in [(10, 1), (10, 3), (10_000, 4), (7, 7)] {
            let mut next = 0;
            for id in 0..w {
                let (lo, hi) = partition(n, w, id);
                assert_eq!(lo, next);
                next = hi;
            }
            assert_eq!(next, n);
        }
    }

    #[test]
    fn tasks_are_seeded_and_in_range() {
        let mut cfg = BenchConfig::new(Case::Password, 1, 10, Strategy::Sequential);
        cfg.seed = 7;
        let a = task_hashes(&cfg);
        assert_eq!(a.len(), 100);
        assert_eq!(a, task_hashes(&cfg));
        let db: Vec<String> = (0..10).map(|i| hash_of(&i.to_string())).collect();
        assert!(a.iter().all(|h| db.contains(h)));
        cfg.seed = 8;
        assert_ne!(a, task_hashes(&cfg));
    }

    #[test]
    fn check_accepts_exact_answers_and_rejects_others() {
        let cfg = BenchConfig::new(Case::Password, 1, 50, Strategy::Sequential);
        let db: BTreeMap<String, String> = (0..50).map(|i| (hash_of(&i.to_string()), i.to_string())).collect();
        let mut answers: Vec<(String, String)> = task_hashes(&cfg).into_iter().map(|h| (h.clone(), db[&h].clone())).collect();
        answers.reverse();
        let ok = check(&cfg, &answers);
        assert!(ok.correct, "{}", ok.detail);
        answers[0].1 = "not it".into();
        assert!(!check(&cfg, &answers).correct);
        answers.pop();
        assert!(!check(&cfg, &answers[1..]).correct);
    }
}
