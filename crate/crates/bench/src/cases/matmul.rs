use tuplespace::rng::SplitMix64;

use super::{f64_bytes, md5_hex, CaseOutcome, Collected};
use crate::config::{BenchConfig, Distribution};
use crate::node::{worker_role, Node, RoleError, RoleResult, MASTER};
use crate::protocol::*;

/// `A` then `B`, both row-major `n x n`, uniform in `[0, 1)`.
pub fn inputs(cfg: &BenchConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(cfg.seed);
    let n = cfg.size;
    let a = (0..n * n).map(|_| rng.next_f64()).collect();
    let b = (0..n * n).map(|_| rng.next_f64()).collect();
    (a, b)
}

/// `c_i += a_ij * b_j` with `j` ascending, the order every worker uses.
pub fn row_times<E>(n: usize, a_row: &[f64], mut b_row: impl FnMut(usize) -> Result<Vec<f64>, E>) -> Result<Vec<f64>, E> {
    let mut c = vec![0.0; n];
    for (j, &a) in a_row.iter().enumerate() {
        for (cm, bm) in c.iter_mut().zip(b_row(j)?) {
            *cm += a * bm;
        }
    }
    Ok(c)
}

pub fn reference(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                c[i * n + m] += a[i * n + j] * b[j * n + m];
            }
        }
    }
    c
}

/// Worker id that holds row `j` of B.
pub fn b_owner(distribution: Distribution, workers: usize, j: usize) -> usize {
    match distribution {
        Distribution::Uniform => j % workers,
        Distribution::BOnOne => 0,
    }
}

pub fn distribute(node: &Node) -> RoleResult<()> {
    let (n, w) = (node.cfg.size, node.cfg.workers);
    let (a, b) = inputs(&node.cfg);
    for (i, row) in a.chunks(n).enumerate() {
        node.write(worker_role(i % w), a_row(i as i64, row.to_vec()))?;
    }
    for (j, row) in b.chunks(n).enumerate() {
        node.write(worker_role(b_owner(node.cfg.distribution, w, j)), b_row(j as i64, row.to_vec()))?;
    }
    Ok(())
}

pub fn collect(node: &Node) -> RoleResult<Collected> {
    let n = node.cfg.size;
    let mut c = vec![f64::NAN; n * n];
    let mut seen = vec![false; n];
    for _ in 0..n {
        let t = node.take(MASTER, &any_c_row())?;
        let i = t[1].as_i64().unwrap() as usize;
        let row = t[2].as_float_array().unwrap();
        if i >= n || seen[i] || row.len() != n {
            return Err(RoleError::Protocol(format!("bad C row {i}")));
        }
        seen[i] = true;
        c[i * n..(i + 1) * n].copy_from_slice(row);
    }
    Ok(Collected::Matmul(c))
}

pub fn work(node: &Node) -> RoleResult<()> {
    let n = node.cfg.size;
    let mut rows = Vec::new();
    while let Some(t) = node.take_probe(node.index, &any_a_row())? {
        rows.push((t[1].as_i64().unwrap(), t[2].as_float_array().unwrap().to_vec()));
    }
    for (i, a) in rows {
        let c = row_times(n, &a, |j| match node.search(&b_lookup(j as i64), false, None)? {
            Some(t) => Ok(t[2].as_float_array().unwrap().to_vec()),
            None => Err(RoleError::Protocol("B row search stopped".into())),
        })?;
        node.write(MASTER, c_row(i, c))?;
    }
    Ok(())
}

pub fn check(cfg: &BenchConfig, c: &[f64]) -> CaseOutcome {
    let (a, b) = inputs(cfg);
    let reference = reference(cfg.size, &a, &b);
    let same = f64_bytes(c) == f64_bytes(&reference);
    CaseOutcome {
        correct: same,
        digest: md5_hex(&f64_bytes(c)),
        detail: format!(
            "order {} product ({}) {} the triple-loop reference",
            cfg.size,
            cfg.distribution,
            if same { "bit-identical to" } else { "differs from" }
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        assert_eq!(reference(2, &[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn identity_reproduces_b() {
        let mut id = vec![0.0; 9];
        for i in 0..3 {
            id[i * 3 + i] = 1.0;
        }
        let b: Vec<f64> = (0..9).map(|k| k as f64 * 0.3).collect();
        assert_eq!(reference(3, &id, &b), b);
    }

    #[test]
    fn row_product_matches_triple_loop_bits() {
        let cfg = BenchConfig::new(crate::config::Case::Matmul, 1, 17, tuplespace::Strategy::Sequential);
        let (a, b) = inputs(&cfg);
        let n = cfg.size;
        let rows: Vec<f64> = (0..n).flat_map(|i| row_times::<()>(n, &a[i * n..(i + 1) * n], |j| Ok(b[j * n..(j + 1) * n].to_vec())).unwrap())
            .collect();
        assert_eq!(f64_bytes(&rows), f64_bytes(&reference(n, &a, &b)));
    }

    #[test]
    fn owners() {
        assert_eq!((0..6).map(|j| b_owner(Distribution::Uniform, 4, j)).collect::<Vec<_>>(), vec![0, 1, 2, 3, 0, 1]);
        assert!((0..6).all(|j| b_owner(Distribution::BOnOne, 4, j) == 0));
    }
}
