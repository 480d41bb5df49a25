//! Dense square linear assignment by shortest augmenting paths
//! (Jonker–Volgenant).
//!
//! An epsilon-scaling auction first brings the column prices close to
//! optimal duals. Starting from an empty matching, each row is then
//! inserted along a shortest augmenting path (Dijkstra on reduced costs),
//! after which the prices of the scanned columns are updated so reduced
//! costs stay nonnegative. Exactness rests on the second stage alone; with
//! good prices its searches are short.

use crate::error::{Error, Result};

pub const SOLVER_ID: &str = "jv-auction-prices";

const FREE: usize = usize::MAX;

/// Price phases stop at this fraction of the cost range.
const AUCTION_EPS_MIN: f64 = 1e-5;
/// Factor between successive phases (and the first `eps` as range / factor).
const AUCTION_SCALE: f64 = 5.0;
/// Bids allowed per row over all phases.
const AUCTION_BIDS_PER_ROW: usize = 200;

/// Optimal assignment for a row-major `n x n` cost matrix. Returns the
/// column assigned to each row.
pub fn solve(n: usize, cost: &[f64]) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::dim("assignment", format!("{} costs for a {n}x{n} problem", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    let mut v = vec![0.0; n];
    auction_prices(n, cost, &mut v);
    let mut col4row = vec![FREE; n];
    let mut row4col = vec![FREE; n];
    let free: Vec<usize> = (0..n).collect();
    augment(n, cost, &mut v, &mut col4row, &mut row4col, &free);
    Ok(col4row)
}

/// Column prices from an epsilon-scaling auction. Each phase empties the
/// matching and lets free rows bid: a row takes its cheapest column and
/// lowers that column's price by the gap to its second cheapest plus `eps`,
/// evicting the previous owner. Phases shrink `eps` geometrically. The
/// prices only seed `augment`, so the work is capped and any result is safe.
fn auction_prices(n: usize, cost: &[f64], v: &mut [f64]) {
    let (lo, hi) = cost.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    let range = hi - lo;
    if !(range > 0.0) {
        return;
    }
    let eps_min = range * AUCTION_EPS_MIN;
    let mut eps = range / AUCTION_SCALE;
    let mut owner = vec![FREE; n];
    let mut todo: Vec<usize> = Vec::with_capacity(n);
    let mut budget = AUCTION_BIDS_PER_ROW * n;
    loop {
        owner.iter_mut().for_each(|o| *o = FREE);
        todo.clear();
        todo.extend((0..n).rev());
        while let Some(i) = todo.pop() {
            if budget == 0 {
                return;
            }
            budget -= 1;
            let row = &cost[i * n..(i + 1) * n];
            let (mut u1, mut j1) = (row[0] - v[0], 0);
            let mut u2 = f64::INFINITY;
            for j in 1..n {
                let h = row[j] - v[j];
                if h < u2 {
                    if h < u1 {
                        u2 = u1;
                        u1 = h;
                        j1 = j;
                    } else {
                        u2 = h;
                    }
                }
            }
            v[j1] -= u2 - u1 + eps;
            if owner[j1] != FREE {
                todo.push(owner[j1]);
            }
            owner[j1] = i;
        }
        if eps <= eps_min {
            return;
        }
        eps = (eps / AUCTION_SCALE).max(eps_min);
    }
}

/// Inserts each free row along a shortest augmenting path. Columns are
/// kept in `cols`, partitioned into scanned `[0, low)`, tied at the current
/// minimum `[low, up)` and unreached `[up, n)`.
fn augment(n: usize, cost: &[f64], v: &mut [f64], col4row: &mut [usize], row4col: &mut [usize], free: &[usize]) {
    let mut d = vec![0.0; n];
    let mut pred = vec![0usize; n];
    let mut cols: Vec<usize> = (0..n).collect();
    for &start in free {
        let row = &cost[start * n..(start + 1) * n];
        for j in 0..n {
            d[j] = row[j] - v[j];
            pred[j] = start;
            cols[j] = j;
        }
        let (mut low, mut up, mut last) = (0, 0, 0);
        let mut min = 0.0;
        let sink = 'search: loop {
            if up == low {
                last = low;
                min = d[cols[up]];
                up += 1;
                for k in up..n {
                    let j = cols[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        cols[k] = cols[up];
                        cols[up] = j;
                        up += 1;
                    }
                }
                for &j in &cols[low..up] {
                    if row4col[j] == FREE {
                        break 'search j;
                    }
                }
            }
            let j1 = cols[low];
            low += 1;
            let i = row4col[j1];
            let ri = &cost[i * n..(i + 1) * n];
            let h = ri[j1] - v[j1] - min;
            let mut k = up;
            while k < n {
                let j = cols[k];
                let r = ri[j] - v[j] - h;
                if r < d[j] {
                    pred[j] = i;
                    d[j] = r;
                    if r == min {
                        if row4col[j] == FREE {
                            break 'search j;
                        }
                        cols[k] = cols[up];
                        cols[up] = j;
                        up += 1;
                    }
                }
                k += 1;
            }
        };
        for &j in &cols[..last] {
            v[j] += d[j] - min;
        }
        let mut j = sink;
        loop {
            let i = pred[j];
            row4col[j] = i;
            std::mem::swap(&mut col4row[i], &mut j);
            if i == start {
                break;
            }
        }
    }
}
