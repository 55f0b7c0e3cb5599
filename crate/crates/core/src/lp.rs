//! Exact solver for the discrete transport linear program on small
//! instances, used as the vanishing-regularization reference and for the
//! complementarity checks.
//!
//! Transportation simplex on the spanning-tree basis. Entering arcs follow
//! the most-negative reduced cost; a run of degenerate pivots switches to
//! Bland's rule until a nondegenerate pivot occurs, which prevents cycling
//! on symmetric instances. Optimality of the output is certified by the
//! complementary-slackness checks in the calling code, not by the pivot
//! rule itself.

use crate::error::{Error, Result};
use crate::grid::{Field2d, Grid2d};
use crate::measures::DiscreteMeasure;

/// Instances above this cell count are refused; the oracle is meant for
/// cross-checks, not large-scale solves.
pub const MAX_ORACLE_CELLS: usize = 65536;

const DEGENERATE_RUN_LIMIT: usize = 40;

/// Optimal basic solution of the transport LP, sparse over grid cells.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub grid: Grid2d,
    /// `(i, j, mass)` with positive mass, sorted lexicographically.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost_value: f64,
}

impl TransportPlan {
    pub fn row_sums(&self, n1: usize) -> Vec<f64> {
        let mut s = vec![0.0; n1];
        for &(i, _, w) in &self.entries {
            s[i] += w;
        }
        s
    }

    pub fn col_sums(&self, n2: usize) -> Vec<f64> {
        let mut s = vec![0.0; n2];
        for &(_, j, w) in &self.entries {
            s[j] += w;
        }
        s
    }
}

/// Dual potentials of the transport LP (feasible: `phi_i + psi_j <= c_ij`).
#[derive(Debug, Clone)]
pub struct LpPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Transport cost of a plan: `sum w_ij c_ij`.
pub fn kantorovich_cost(plan: &TransportPlan, cost: &Field2d) -> f64 {
    plan.entries
        .iter()
        .map(|&(i, j, w)| w * cost.at(i, j))
        .sum()
}

/// Complementarity pairing `sum w_ij (phi_i + psi_j - c_ij)`. Nonpositive
/// under dual feasibility; zero exactly at an optimal primal-dual pair.
pub fn complementarity_residual(
    plan: &TransportPlan,
    pot: &LpPotentials,
    cost: &Field2d,
) -> f64 {
    plan.entries
        .iter()
        .map(|&(i, j, w)| w * (pot.phi[i] + pot.psi[j] - cost.at(i, j)))
        .sum()
}

struct Basis {
    n1: usize,
    n2: usize,
    /// Basic cells `(i, j)` with their current flow.
    cells: Vec<(usize, usize, f64)>,
    /// Adjacency over nodes `0..n1` (rows) and `n1..n1+n2` (cols):
    /// `(neighbor, basis index)`.
    adj: Vec<Vec<(usize, usize)>>,
    phi: Vec<f64>,
    psi: Vec<f64>,
}

impl Basis {
    fn rebuild_adjacency(&mut self) {
        for a in &mut self.adj {
            a.clear();
        }
        for (e, &(i, j, _)) in self.cells.iter().enumerate() {
            self.adj[i].push((self.n1 + j, e));
            self.adj[self.n1 + j].push((i, e));
        }
    }

    /// Potentials from the spanning tree: `phi_0 = 0`, `phi_i + psi_j = c_ij`
    /// along basic cells.
    fn compute_potentials(&mut self, cost: &Field2d) {
        let nodes = self.n1 + self.n2;
        let mut value = vec![0.0f64; nodes];
        let mut seen = vec![false; nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, e) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    let (i, j, _) = self.cells[e];
                    let c = cost.at(i, j);
                    value[v] = c - value[u];
                    stack.push(v);
                }
            }
        }
        self.phi.copy_from_slice(&value[..self.n1]);
        self.psi.copy_from_slice(&value[self.n1..]);
    }

    /// Unique tree path from node `a` to node `b`, as a list of basis edge
    /// indices in path order.
    fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let nodes = self.n1 + self.n2;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nodes];
        let mut seen = vec![false; nodes];
        let mut stack = vec![a];
        seen[a] = true;
        while let Some(u) = stack.pop() {
            if u == b {
                break;
            }
            for &(v, e) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, e));
                    stack.push(v);
                }
            }
        }
        let mut edges = Vec::new();
        let mut u = b;
        while let Some((p, e)) = parent[u] {
            edges.push(e);
            u = p;
        }
        edges.reverse();
        edges
    }

    /// Exact basic flows from the supplies/demands by leaf elimination,
    /// removing the drift accumulated across pivots.
    fn recompute_flows(&mut self, supply: &[f64], demand: &[f64]) -> Result<()> {
        let nodes = self.n1 + self.n2;
        let mut balance = vec![0.0f64; nodes];
        balance[..self.n1].copy_from_slice(supply);
        balance[self.n1..].copy_from_slice(demand);
        let mut degree: Vec<usize> = self.adj.iter().map(|a| a.len()).collect();
        let mut done = vec![false; self.cells.len()];
        let mut queue: Vec<usize> = (0..nodes).filter(|&u| degree[u] == 1).collect();
        let scale = supply.iter().chain(demand.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        while let Some(u) = queue.pop() {
            let Some(&(v, e)) = self.adj[u].iter().find(|&&(_, e)| !done[e]) else {
                continue;
            };
            done[e] = true;
            let flow = balance[u];
            if flow < -1e-9 * scale {
                return Err(Error::Lp(format!("negative basic flow {flow}")));
            }
            self.cells[e].2 = flow.max(0.0);
            balance[u] = 0.0;
            balance[v] -= flow;
            degree[u] -= 1;
            degree[v] -= 1;
            if degree[v] == 1 {
                queue.push(v);
            }
        }
        if !done.iter().all(|d| *d) {
            return Err(Error::Lp("basis is not a spanning tree".into()));
        }
        Ok(())
    }
}

/// Solve the transport LP exactly, returning an optimal basic plan and dual
/// potentials.
pub fn solve_lp(
    cost: &Field2d,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
) -> Result<(TransportPlan, LpPotentials)> {
    let n1 = mu1.grid.n;
    let n2 = mu2.grid.n;
    if cost.grid.x != mu1.grid || cost.grid.y != mu2.grid {
        return Err(Error::ShapeMismatch(
            "measure grids do not match the cost grid axes".into(),
        ));
    }
    if n1 * n2 > MAX_ORACLE_CELLS {
        return Err(Error::Lp(format!(
            "instance has {} cells, oracle cap is {MAX_ORACLE_CELLS}",
            n1 * n2
        )));
    }
    let supply = &mu1.weights;
    let demand = &mu2.weights;
    let mass = mu1.total_mass.max(mu2.total_mass);
    if (mu1.total_mass - mu2.total_mass).abs() > 1e-10 * mass.max(1.0) {
        return Err(Error::InfeasibleMasses(mu1.total_mass, mu2.total_mass));
    }

    // northwest-corner initial basis: a staircase of n1 + n2 - 1 cells
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut cells = Vec::with_capacity(n1 + n2 - 1);
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let q = s[i].min(d[j]);
        cells.push((i, j, q));
        s[i] -= q;
        d[j] -= q;
        if i == n1 - 1 && j == n2 - 1 {
            break;
        }
        if s[i] <= 0.0 && i < n1 - 1 {
            i += 1;
        } else if j < n2 - 1 {
            j += 1;
        } else {
            i += 1;
        }
    }
    debug_assert_eq!(cells.len(), n1 + n2 - 1);

    let mut basis = Basis {
        n1,
        n2,
        cells,
        adj: vec![Vec::new(); n1 + n2],
        phi: vec![0.0; n1],
        psi: vec![0.0; n2],
    };
    basis.rebuild_adjacency();
    basis.compute_potentials(cost);

    let cmax = cost.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let enter_tol = 1e-11 * (1.0 + cmax);
    let mass_scale = mass.max(1.0);
    let pivot_cap = 20_000 + 200 * (n1 + n2);
    let mut degenerate_run = 0usize;
    let mut bland = false;

    for _pivot in 0..pivot_cap {
        // entering arc
        let mut enter: Option<(usize, usize)> = None;
        let mut best = -enter_tol;
        'scan: for ii in 0..n1 {
            let row = &cost.values[ii * n2..(ii + 1) * n2];
            let pi = basis.phi[ii];
            for (jj, &c) in row.iter().enumerate() {
                let rc = c - pi - basis.psi[jj];
                if rc < best {
                    enter = Some((ii, jj));
                    if bland {
                        break 'scan;
                    }
                    best = rc;
                }
            }
        }
        let Some((ei, ej)) = enter else {
            // optimal: no reduced cost below tolerance
            basis.recompute_flows(supply, demand)?;
            basis.compute_potentials(cost);
            let mut entries: Vec<(usize, usize, f64)> = basis
                .cells
                .iter()
                .filter(|&&(_, _, w)| w > 0.0)
                .map(|&(a, b, w)| (a, b, w))
                .collect();
            entries.sort_unstable_by_key(|&(a, b, _)| (a, b));
            let plan = TransportPlan {
                grid: cost.grid.clone(),
                cost_value: entries.iter().map(|&(a, b, w)| w * cost.at(a, b)).sum(),
                entries,
            };
            let pot = LpPotentials { phi: basis.phi.clone(), psi: basis.psi.clone() };
            return Ok((plan, pot));
        };

        // the cycle closed by the entering arc: tree path from row ei to
        // col ej; edges at even path positions give up flow
        let path = basis.path(ei, basis.n1 + ej);
        let mut theta = f64::INFINITY;
        let mut leave: Option<usize> = None;
        let mut leave_cell = (usize::MAX, usize::MAX);
        for (t, &e) in path.iter().enumerate() {
            if t % 2 == 0 {
                let (ci, cj, w) = basis.cells[e];
                if w < theta - 1e-15 * mass_scale
                    || (w <= theta + 1e-15 * mass_scale && (ci, cj) < leave_cell)
                {
                    theta = w.min(theta);
                    leave = Some(e);
                    leave_cell = (ci, cj);
                }
            }
        }
        let leave = leave.ok_or_else(|| Error::Lp("cycle without leaving arc".into()))?;
        for (t, &e) in path.iter().enumerate() {
            if t % 2 == 0 {
                basis.cells[e].2 -= theta;
            } else {
                basis.cells[e].2 += theta;
            }
        }
        basis.cells[leave] = (ei, ej, theta);
        basis.rebuild_adjacency();
        basis.compute_potentials(cost);

        if theta <= 1e-14 * mass_scale {
            degenerate_run += 1;
            if degenerate_run > DEGENERATE_RUN_LIMIT {
                bland = true;
            }
        } else {
            degenerate_run = 0;
            bland = false;
        }
    }
    Err(Error::Lp("pivot cap exceeded".into()))
}
