use super::{f64_bytes, md5_hex, CaseOutcome, Collected};
use crate::config::BenchConfig;
use crate::node::{worker_role, Node, RoleError, RoleResult, MASTER};
use crate::protocol::*;

/// Top row at 1.0, everything else 0.0, row-major.
pub fn initial_grid(n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    g[..n].fill(1.0);
    g
}

/// Column offset and width of every panel; widths differ by at most one.
pub fn panels(n: usize, workers: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (n / workers, n % workers);
    let mut offset = 0;
    (0..workers)
        .map(|k| {
            let width = base + usize::from(k < extra);
            let p = (offset, width);
            offset += width;
            p
        })
        .collect()
}

/// The five-point average, summed in a fixed order.
fn stencil(up: f64, down: f64, left: f64, right: f64) -> f64 {
    0.25 * (up + down + left + right)
}

/// One Jacobi sweep over a whole `n x n` grid; the outer ring is fixed.
pub fn jacobi_step(n: usize, g: &[f64]) -> Vec<f64> {
    let mut next = g.to_vec();
    for i in 1..n.saturating_sub(1) {
        for j in 1..n - 1 {
            next[i * n + j] = stencil(g[(i - 1) * n + j], g[(i + 1) * n + j], g[i * n + j - 1], g[i * n + j + 1]);
        }
    }
    next
}

pub fn reference(n: usize, iters: u32) -> Vec<f64> {
    (0..iters).fold(initial_grid(n), |g, _| jacobi_step(n, &g))
}

/// One sweep over a panel of `width` columns starting at global column
/// `offset`, with the neighbouring columns supplied as ghosts.
pub fn panel_step(n: usize, offset: usize, width: usize, cells: &[f64], left: Option<&[f64]>, right: Option<&[f64]>) -> Vec<f64> {
    let at = |i: usize, c: isize| -> f64 {
        if c < 0 {
            left.expect("left ghost")[i]
        } else if c as usize >= width {
            right.expect("right ghost")[i]
        } else {
            cells[i * width + c as usize]
        }
    };
    let mut next = cells.to_vec();
    for i in 1..n.saturating_sub(1) {
        for c in 0..width {
            let j = offset + c;
            if j == 0 || j == n - 1 {
                continue;
            }
            let c = c as isize;
            next[i * width + c as usize] = stencil(at(i - 1, c), at(i + 1, c), at(i, c - 1), at(i, c + 1));
        }
    }
    next
}

fn column(cells: &[f64], width: usize, c: usize) -> Vec<f64> {
    cells.chunks(width).map(|row| row[c]).collect()
}

pub fn distribute(node: &Node) -> RoleResult<()> {
    let n = node.cfg.size;
    let grid = initial_grid(n);
    for (id, (offset, width)) in panels(n, node.cfg.workers).into_iter().enumerate() {
        let cells: Vec<f64> = grid.chunks(n).flat_map(|row| row[offset..offset + width].iter().copied()).collect();
        node.write(worker_role(id), panel(id as i64, n as i64, width as i64, cells))?;
    }
    Ok(())
}

pub fn collect(node: &Node) -> RoleResult<Collected> {
    let w = node.cfg.workers;
    for t in 1..=node.cfg.iters as i64 {
        for _ in 0..w {
            node.take(MASTER, &any_ocean_sync(t))?;
        }
        if t > 1 {
            node.take(MASTER, &tuplespace::template_of(&ocean_go(t - 1)))?;
        }
        node.write(MASTER, ocean_go(t))?;
    }
    let n = node.cfg.size;
    let layout = panels(n, w);
    let mut grid = vec![f64::NAN; n * n];
    let mut seen = vec![false; w];
    for _ in 0..w {
        let t = node.take(MASTER, &any_result_panel())?;
        let id = t[1].as_i64().unwrap() as usize;
        let cells = t[2].as_float_array().unwrap();
        let Some(&(offset, width)) = layout.get(id) else {
            return Err(RoleError::Protocol(format!("result panel from unknown worker {id}")));
        };
        if seen[id] || cells.len() != n * width {
            return Err(RoleError::Protocol(format!("bad result panel from worker {id}")));
        }
        seen[id] = true;
        for (i, row) in cells.chunks(width).enumerate() {
            grid[i * n + offset..i * n + offset + width].copy_from_slice(row);
        }
    }
    Ok(Collected::Ocean(grid))
}

pub fn work(node: &Node) -> RoleResult<()> {
    let (id, w) = (node.worker_id() as i64, node.cfg.workers as i64);
    let p = node.take(node.index, &panel_for(id))?;
    let (n, width) = (p[2].as_i64().unwrap() as usize, p[3].as_i64().unwrap() as usize);
    let offset = panels(n, w as usize)[id as usize].0;
    let mut cells = p[4].as_float_array().unwrap().to_vec();
    for t in 1..=node.cfg.iters as i64 {
        if id > 0 {
            node.write(node.index, border(id, t, "left", column(&cells, width, 0)))?;
        }
        if id < w - 1 {
            node.write(node.index, border(id, t, "right", column(&cells, width, width - 1)))?;
        }
        node.write(MASTER, ocean_sync(t, id))?;
        node.read(MASTER, &tuplespace::template_of(&ocean_go(t)))?;
        // Every neighbour has read the previous borders by now.
        if t > 1 {
            node.take_probe(node.index, &border_of(id, t - 1, "left"))?;
            node.take_probe(node.index, &border_of(id, t - 1, "right"))?;
        }
        let fetch = |neighbour: i64, side: &str| -> RoleResult<Vec<f64>> {
            let hit = node
                .search(&border_of(neighbour, t, side), false, None)?
                .ok_or_else(|| RoleError::Protocol("border search stopped".into()))?;
            Ok(hit[4].as_float_array().unwrap().to_vec())
        };
        let left = if id > 0 { Some(fetch(id - 1, "right")?) } else { None };
        let right = if id < w - 1 { Some(fetch(id + 1, "left")?) } else { None };
        cells = panel_step(n, offset, width, &cells, left.as_deref(), right.as_deref());
    }
    node.write(MASTER, result_panel(id, cells))
}

pub fn check(cfg: &BenchConfig, grid: &[f64]) -> CaseOutcome {
    let reference = reference(cfg.size, cfg.iters);
    let same = f64_bytes(grid) == f64_bytes(&reference);
    CaseOutcome {
        correct: same,
        digest: md5_hex(&f64_bytes(grid)),
        detail: format!(
            "{}x{} grid after {} iterations {} the sequential reference",
            cfg.size,
            cfg.size,
            cfg.iters,
            if same { "bit-identical to" } else { "differs from" }
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_by_hand() {
        let g = jacobi_step(4, &initial_grid(4));
        // Interior cells of row 1 average the hot top row with three zeros.
        assert_eq!(g[4 + 1], 0.25);
        assert_eq!(g[4 + 2], 0.25);
        assert_eq!(g[2 * 4 + 1], 0.0);
        assert_eq!(&g[..4], &[1.0; 4]);
    }

    #[test]
    fn panel_widths() {
        assert_eq!(panels(10, 3), vec![(0, 4), (4, 3), (7, 3)]);
        assert_eq!(panels(4, 4), vec![(0, 1), (1, 1), (2, 1), (3, 1)]);
    }

    fn by_panels(n: usize, w: usize, iters: u32) -> Vec<f64> {
        let layout = panels(n, w);
        let grid = initial_grid(n);
        let mut parts: Vec<Vec<f64>> =
            layout.iter().map(|&(o, wd)| grid.chunks(n).flat_map(|r| r[o..o + wd].to_vec()).collect()).collect();
        for _ in 0..iters {
            let next: Vec<Vec<f64>> = (0..w)
                .map(|k| {
                    let (o, wd) = layout[k];
                    let left = (k > 0).then(|| column(&parts[k - 1], layout[k - 1].1, layout[k - 1].1 - 1));
                    let right = (k + 1 < w).then(|| column(&parts[k + 1], layout[k + 1].1, 0));
                    panel_step(n, o, wd, &parts[k], left.as_deref(), right.as_deref())
                })
                .collect();
            parts = next;
        }
        let mut out = vec![0.0; n * n];
        for (k, &(o, wd)) in layout.iter().enumerate() {
            for (i, row) in parts[k].chunks(wd).enumerate() {
                out[i * n + o..i * n + o + wd].copy_from_slice(row);
            }
        }
        out
    }

    #[test]
    fn panels_reproduce_the_whole_grid_bit_for_bit() {
        for (n, w, iters) in [(4, 2, 1), (9, 4, 5), (16, 16, 3), (30, 7, 12)] {
            assert_eq!(f64_bytes(&by_panels(n, w, iters)), f64_bytes(&reference(n, iters)), "n={n} w={w}");
        }
    }
}
