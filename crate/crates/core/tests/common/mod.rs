//! Independent oracles for cross-checking the solvers on small instances.
//!
//! Everything here is deliberately self-contained (own linear solve, own
//! objective evaluations) so it shares no code path with the library
//! implementations it checks.

use qot_core::qot::QotProblem;

/// Dense Gaussian elimination with partial pivoting; `None` on (near)
/// singular systems.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Solution of the regularized transport problem found by brute force.
pub struct QpOracleSolution {
    /// Dense plan values in row-major cell order.
    pub plan: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    /// `int c pi + gamma/2 ||pi||^2`, evaluated with the oracle's own loops.
    pub primal: f64,
    /// `-1/2 ||(a1+a2-c)_+||^2 + gamma (int a1 mu1 + int a2 mu2)`.
    pub dual: f64,
}

/// Brute-force solve by enumerating the active set of the strictly convex
/// quadratic program: for every candidate support, solve the reduced linear
/// optimality system for the duals, rebuild the plan, and keep the candidate
/// that satisfies every optimality condition. Instances up to 9 cells.
pub fn brute_force_qp(prob: &QotProblem) -> Option<QpOracleSolution> {
    let n1 = prob.mu1.grid.n;
    let n2 = prob.mu2.grid.n;
    let cells = n1 * n2;
    assert!(cells <= 9, "oracle enumerates up to 9 cells");
    let h1 = prob.mu1.grid.h;
    let h2 = prob.mu2.grid.h;
    let gamma = prob.gamma;
    let c = |i: usize, j: usize| prob.cost.values[i * n2 + j];

    'subset: for mask in 0u32..(1u32 << cells) {
        let active = |i: usize, j: usize| mask & (1 << (i * n2 + j)) != 0;
        // rows/cols with mass need support
        for i in 0..n1 {
            if prob.mu1.values[i] > 1e-13 && (0..n2).all(|j| !active(i, j)) {
                continue 'subset;
            }
        }
        for j in 0..n2 {
            if prob.mu2.values[j] > 1e-13 && (0..n1).all(|i| !active(i, j)) {
                continue 'subset;
            }
        }

        // linear system for the duals on the candidate support, bordered by
        // the zero-mean row; a tiny ridge keeps disconnected supports
        // solvable (validity is established by the optimality check below)
        let dim = n1 + n2 + 1;
        let mut a = vec![vec![0.0f64; dim]; dim];
        let mut b = vec![0.0f64; dim];
        for i in 0..n1 {
            let mut count = 0usize;
            for j in 0..n2 {
                if active(i, j) {
                    count += 1;
                    a[i][n1 + j] += 1.0;
                    b[i] += c(i, j);
                }
            }
            a[i][i] = count as f64 + 1e-11;
            b[i] += gamma * prob.mu1.values[i] / h2;
        }
        for j in 0..n2 {
            let mut count = 0usize;
            for i in 0..n1 {
                if active(i, j) {
                    count += 1;
                    a[n1 + j][i] += 1.0;
                    b[n1 + j] += c(i, j);
                }
            }
            a[n1 + j][n1 + j] = count as f64 + 1e-11;
            a[n1 + j][dim - 1] = 1.0;
            b[n1 + j] += gamma * prob.mu2.values[j] / h1;
        }
        for j in 0..n2 {
            a[dim - 1][n1 + j] = 1.0;
        }
        let Some(x) = solve_dense(a, b) else {
            continue 'subset;
        };
        let alpha1 = &x[..n1];
        let alpha2 = &x[n1..n1 + n2];

        // rebuild the plan and check every optimality condition
        let mut plan = vec![0.0f64; cells];
        for i in 0..n1 {
            for j in 0..n2 {
                let slack = alpha1[i] + alpha2[j] - c(i, j);
                if active(i, j) {
                    if slack < -1e-9 {
                        continue 'subset;
                    }
                    plan[i * n2 + j] = slack.max(0.0) / gamma;
                } else if slack > 1e-9 {
                    continue 'subset;
                }
            }
        }
        for i in 0..n1 {
            let row: f64 = (0..n2).map(|j| plan[i * n2 + j]).sum::<f64>() * h2;
            if (row - prob.mu1.values[i]).abs() > 1e-8 {
                continue 'subset;
            }
        }
        for j in 0..n2 {
            let col: f64 = (0..n1).map(|i| plan[i * n2 + j]).sum::<f64>() * h1;
            if (col - prob.mu2.values[j]).abs() > 1e-8 {
                continue 'subset;
            }
        }

        let area = h1 * h2;
        let mut transport = 0.0;
        let mut quad = 0.0;
        let mut pos_sq = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                let p = plan[i * n2 + j];
                transport += p * c(i, j);
                quad += p * p;
                let s = (alpha1[i] + alpha2[j] - c(i, j)).max(0.0);
                pos_sq += s * s;
            }
        }
        let lin1: f64 = alpha1
            .iter()
            .zip(&prob.mu1.values)
            .map(|(a, m)| a * m)
            .sum::<f64>()
            * h1;
        let lin2: f64 = alpha2
            .iter()
            .zip(&prob.mu2.values)
            .map(|(a, m)| a * m)
            .sum::<f64>()
            * h2;
        return Some(QpOracleSolution {
            plan,
            alpha1: alpha1.to_vec(),
            alpha2: alpha2.to_vec(),
            primal: (transport + 0.5 * gamma * quad) * area,
            dual: -0.5 * pos_sq * area + gamma * (lin1 + lin2),
        });
    }
    None
}

/// Exact LP optimum by enumerating every spanning-tree basic solution of the
/// transportation polytope (up to 16 cells). Flows are recovered by leaf
/// elimination; infeasible and cyclic arc sets are discarded.
pub fn lp_enumerated_optimum(
    cost_at: impl Fn(usize, usize) -> f64,
    supply: &[f64],
    demand: &[f64],
) -> Option<f64> {
    let n1 = supply.len();
    let n2 = demand.len();
    let cells = n1 * n2;
    assert!(cells <= 16, "enumeration supports up to 16 cells");
    let pick = n1 + n2 - 1;
    let mut best: Option<f64> = None;

    // Gosper's hack over arc subsets of size n1 + n2 - 1
    let mut mask: u32 = (1u32 << pick) - 1;
    let limit: u32 = 1u32 << cells;
    while mask < limit {
        let arcs: Vec<(usize, usize)> = (0..cells)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| (b / n2, b % n2))
            .collect();

        // leaf elimination on the bipartite graph
        let nodes = n1 + n2;
        let mut degree = vec![0usize; nodes];
        for &(i, j) in &arcs {
            degree[i] += 1;
            degree[n1 + j] += 1;
        }
        let mut balance = vec![0.0f64; nodes];
        balance[..n1].copy_from_slice(supply);
        balance[n1..].copy_from_slice(demand);
        let mut flow = vec![0.0f64; arcs.len()];
        let mut done = vec![false; arcs.len()];
        let mut queue: Vec<usize> = (0..nodes).filter(|&u| degree[u] == 1).collect();
        let mut processed = 0usize;
        while let Some(u) = queue.pop() {
            let Some(e) = arcs
                .iter()
                .enumerate()
                .position(|(e, &(i, j))| !done[e] && (i == u || n1 + j == u))
            else {
                continue;
            };
            let (i, j) = arcs[e];
            let v = if i == u { n1 + j } else { i };
            done[e] = true;
            processed += 1;
            flow[e] = balance[u];
            balance[u] = 0.0;
            balance[v] -= flow[e];
            degree[u] -= 1;
            degree[v] -= 1;
            if degree[v] == 1 {
                queue.push(v);
            }
        }
        if processed == arcs.len() && flow.iter().all(|f| *f >= -1e-12) {
            let value: f64 = arcs
                .iter()
                .zip(&flow)
                .map(|(&(i, j), f)| f.max(0.0) * cost_at(i, j))
                .sum();
            best = Some(match best {
                Some(b) if b <= value => b,
                _ => value,
            });
        }

        // next subset of the same popcount
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        if r >= limit || c == 0 {
            break;
        }
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    best
}
