//! Quadratically regularized transport: semi-smooth Newton solve of the
//! reduced dual system, with dual-ascent fallback and duality diagnostics.
//!
//! The dual pair `(alpha1, alpha2)` determines the plan through the positive
//! part `pi = (alpha1 (+) alpha2 - c)_+ / gamma`; the solver drives the
//! marginal residuals of that plan to zero. The dual objective is concave and
//! invariant under the constant shift `(alpha1 + r, alpha2 - r)`, so the
//! Newton system is solved on the subspace of zero-sum updates of `alpha2`
//! and the reported duals carry the zero-mean normalization of `alpha2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Field1d, Field2d};
use crate::measures::marginals;

/// Armijo slope fraction for the backtracking line search.
const ARMIJO: f64 = 1e-4;
/// Maximum number of step halvings in one line search.
const MAX_HALVINGS: usize = 40;

/// Problem data for a regularized transport solve on a product grid.
#[derive(Debug, Clone)]
pub struct QotProblem {
    pub cost: Field2d,
    pub mu1: Field1d,
    pub mu2: Field1d,
    pub gamma: f64,
    /// Common marginal mass.
    pub mass: f64,
    /// Cellwise lower bound of the cost.
    pub c_lower: f64,
}

impl QotProblem {
    pub fn new(cost: Field2d, mu1: Field1d, mu2: Field1d, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization parameter must be positive, got {gamma}"
            )));
        }
        if cost.grid.x != mu1.grid || cost.grid.y != mu2.grid {
            return Err(Error::ShapeMismatch(
                "marginal grids do not match the cost grid axes".into(),
            ));
        }
        for v in mu1.values.iter().chain(&mu2.values) {
            if !(*v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "marginal densities must be nonnegative, got {v}"
                )));
            }
        }
        let m1 = mu1.integrate();
        let m2 = mu2.integrate();
        let mass = 0.5 * (m1 + m2);
        if (m1 - m2).abs() > 1e-10 * mass + 1e-14 {
            return Err(Error::InfeasibleMasses(m1, m2));
        }
        let c_lower = cost.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        Ok(Self { cost, mu1, mu2, gamma, mass, c_lower })
    }
}

/// Dual potential pair for the marginal constraints.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    pub alpha1: Field1d,
    pub alpha2: Field1d,
    /// Set once the second potential has been normalized to zero mean.
    pub zero_mean: bool,
}

/// Plan induced by a dual pair: `(alpha1 (+) alpha2 - c)_+ / gamma`.
pub fn plan_from_duals(duals: &DualPotentials, cost: &Field2d, gamma: f64) -> Result<Field2d> {
    if duals.alpha1.grid != cost.grid.x || duals.alpha2.grid != cost.grid.y {
        return Err(Error::ShapeMismatch(
            "dual potential grids do not match the cost grid axes".into(),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularization parameter must be positive, got {gamma}"
        )));
    }
    let ny = cost.grid.y.n;
    let mut values = Vec::with_capacity(cost.values.len());
    for (i, &a1) in duals.alpha1.values.iter().enumerate() {
        let row = &cost.values[i * ny..(i + 1) * ny];
        for (j, &c) in row.iter().enumerate() {
            values.push((a1 + duals.alpha2.values[j] - c).max(0.0) / gamma);
        }
    }
    Ok(Field2d { grid: cost.grid.clone(), values })
}

/// Marginal residuals of the plan induced by `duals`.
pub fn dual_residual(duals: &DualPotentials, prob: &QotProblem) -> Result<(Field1d, Field1d)> {
    let plan = plan_from_duals(duals, &prob.cost, prob.gamma)?;
    let (m1, m2) = marginals(&plan);
    let r1 = m1
        .values
        .iter()
        .zip(&prob.mu1.values)
        .map(|(a, b)| a - b)
        .collect();
    let r2 = m2
        .values
        .iter()
        .zip(&prob.mu2.values)
        .map(|(a, b)| a - b)
        .collect();
    Ok((
        Field1d { grid: prob.mu1.grid.clone(), values: r1 },
        Field1d { grid: prob.mu2.grid.clone(), values: r2 },
    ))
}

/// Dual objective
/// `-1/2 ||(a1 (+) a2 - c)_+||^2 + gamma * (int a1 mu1 + int a2 mu2)`.
///
/// At the solution this evaluates to `gamma` times the primal objective; see
/// the duality diagnostics in the solver output.
pub fn dual_objective(duals: &DualPotentials, prob: &QotProblem) -> f64 {
    phi(
        &duals.alpha1.values,
        &duals.alpha2.values,
        &prob.cost,
        &prob.mu1,
        &prob.mu2,
        prob.gamma,
    )
}

/// Primal objective `int c pi + gamma/2 ||pi||^2`.
pub fn primal_objective(plan: &Field2d, cost: &Field2d, gamma: f64) -> f64 {
    debug_assert_eq!(plan.grid, cost.grid);
    let area = plan.grid.cell_area();
    let mut transport = 0.0;
    let mut quad = 0.0;
    for (p, c) in plan.values.iter().zip(&cost.values) {
        transport += p * c;
        quad += p * p;
    }
    (transport + 0.5 * gamma * quad) * area
}

/// Shift the pair so the second potential has zero mean; the induced plan is
/// unchanged (shift invariance of the direct sum).
pub fn normalize_zero_mean(duals: &DualPotentials) -> DualPotentials {
    let n2 = duals.alpha2.values.len() as f64;
    let r = duals.alpha2.values.iter().sum::<f64>() / n2;
    DualPotentials {
        alpha1: Field1d {
            grid: duals.alpha1.grid.clone(),
            values: duals.alpha1.values.iter().map(|v| v + r).collect(),
        },
        alpha2: Field1d {
            grid: duals.alpha2.grid.clone(),
            values: duals.alpha2.values.iter().map(|v| v - r).collect(),
        },
        zero_mean: true,
    }
}

/// Options for [`solve`].
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Max-norm tolerance on the marginal residual.
    pub tol: f64,
    pub max_newton: usize,
    pub max_fallback: usize,
    /// Tikhonov factor relative to the infinity norm of the Newton matrix.
    pub tikhonov: f64,
    pub warm_start: Option<DualPotentials>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton: 200,
            max_fallback: 2000,
            tikhonov: 1e-12,
            warm_start: None,
        }
    }
}

/// Converged solve output with duality diagnostics.
#[derive(Debug, Clone)]
pub struct QotSolution {
    pub plan: Field2d,
    pub duals: DualPotentials,
    /// Max norm of the two marginal residuals.
    pub marginal_residual: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub fallback_iterations: usize,
    pub converged: bool,
    /// False when a marginal has cells below 1e-12: the primal solution is
    /// still unique but the duals are not guaranteed to exist.
    pub duals_certified: bool,
    /// Dual objective after every accepted step (nondecreasing).
    pub phi_trace: Vec<f64>,
}

fn phi(a1: &[f64], a2: &[f64], cost: &Field2d, mu1: &Field1d, mu2: &Field1d, gamma: f64) -> f64 {
    let ny = cost.grid.y.n;
    let area = cost.grid.cell_area();
    let mut quad = 0.0;
    for (i, &ai) in a1.iter().enumerate() {
        let row = &cost.values[i * ny..(i + 1) * ny];
        for (j, &c) in row.iter().enumerate() {
            let v = (ai + a2[j] - c).max(0.0);
            quad += v * v;
        }
    }
    let lin1: f64 = a1.iter().zip(&mu1.values).map(|(a, m)| a * m).sum();
    let lin2: f64 = a2.iter().zip(&mu2.values).map(|(a, m)| a * m).sum();
    -0.5 * quad * area + gamma * (lin1 * mu1.grid.h + lin2 * mu2.grid.h)
}

/// Fill `r1`, `r2` with the marginal residuals of the plan induced by
/// `(a1, a2)` and return their max norm.
fn residuals(
    a1: &[f64],
    a2: &[f64],
    cost: &Field2d,
    mu1: &Field1d,
    mu2: &Field1d,
    gamma: f64,
    r1: &mut [f64],
    r2: &mut [f64],
) -> f64 {
    let ny = cost.grid.y.n;
    let hx = cost.grid.x.h;
    let hy = cost.grid.y.h;
    for v in r2.iter_mut() {
        *v = 0.0;
    }
    for (i, &ai) in a1.iter().enumerate() {
        let row = &cost.values[i * ny..(i + 1) * ny];
        let mut s = 0.0;
        for (j, &c) in row.iter().enumerate() {
            let v = (ai + a2[j] - c).max(0.0);
            s += v;
            r2[j] += v;
        }
        r1[i] = s * hy / gamma - mu1.values[i];
    }
    let mut res = 0.0f64;
    for (j, v) in r2.iter_mut().enumerate() {
        *v = *v * hx / gamma - mu2.values[j];
        res = res.max(v.abs());
    }
    for v in r1.iter() {
        res = res.max(v.abs());
    }
    res
}

/// Solve the regularized transport problem by semi-smooth Newton iteration on
/// the dual residual system, with an ascent-line-search safeguard and a
/// gradient-ascent fallback.
pub fn solve(prob: &QotProblem, opts: &SolverOptions) -> Result<QotSolution> {
    let n1 = prob.mu1.grid.n;
    let n2 = prob.mu2.grid.n;
    let hx = prob.mu1.grid.h;
    let hy = prob.mu2.grid.h;
    let area = hx * hy;
    let gamma = prob.gamma;
    let cost = &prob.cost;

    let mut a1;
    let mut a2;
    match &opts.warm_start {
        Some(w) => {
            if w.alpha1.grid != prob.mu1.grid || w.alpha2.grid != prob.mu2.grid {
                return Err(Error::ShapeMismatch(
                    "warm-start potentials live on different grids".into(),
                ));
            }
            a1 = w.alpha1.values.clone();
            a2 = w.alpha2.values.clone();
        }
        None => {
            // keeps the initial active set nonempty
            let mean_c = cost.values.iter().sum::<f64>() / cost.values.len() as f64;
            let omega = cost.grid.measure();
            a1 = vec![mean_c + gamma * prob.mass / omega; n1];
            a2 = vec![0.0; n2];
        }
    }
    // start from a zero-mean iterate; the plan is unchanged
    let mean2 = a2.iter().sum::<f64>() / n2 as f64;
    for v in &mut a2 {
        *v -= mean2;
    }
    for v in &mut a1 {
        *v += mean2;
    }

    let mut r1 = vec![0.0; n1];
    let mut r2 = vec![0.0; n2];
    let mut active: Vec<Vec<u32>> = vec![Vec::with_capacity(n2); n1];
    let mut colcount = vec![0u32; n2];
    let mut d1 = vec![0.0; n1];
    let mut d2 = vec![0.0; n2];
    let mut t1 = vec![0.0; n1];
    let mut t2 = vec![0.0; n2];

    let mut phi_now = phi(&a1, &a2, cost, &prob.mu1, &prob.mu2, gamma);
    let mut phi_trace = vec![phi_now];
    let mut newton_used = 0usize;
    let mut fallback_used = 0usize;
    let mut ascent_step = 1.0f64;
    let mut converged = false;

    loop {
        let res = residuals(&a1, &a2, cost, &prob.mu1, &prob.mu2, gamma, &mut r1, &mut r2);
        if res <= opts.tol {
            converged = true;
            break;
        }

        // gradient of the dual objective
        let g1: Vec<f64> = r1.iter().map(|r| -gamma * hx * r).collect();
        let g2: Vec<f64> = r2.iter().map(|r| -gamma * hy * r).collect();

        let mut stepped = false;

        if newton_used < opts.max_newton {
            newton_used += 1;

            // active mask, row-wise; the generalized derivative of the
            // positive part is taken as 0 at the kink
            for c in colcount.iter_mut() {
                *c = 0;
            }
            let mut max_row = 0usize;
            for i in 0..n1 {
                let row = &cost.values[i * n2..(i + 1) * n2];
                let set = &mut active[i];
                set.clear();
                let ai = a1[i];
                for (j, &c) in row.iter().enumerate() {
                    if ai + a2[j] - c > 0.0 {
                        set.push(j as u32);
                        colcount[j] += 1;
                    }
                }
                max_row = max_row.max(set.len());
            }
            let max_col = colcount.iter().copied().max().unwrap_or(0) as usize;
            let norm_inf = 2.0 * area * max_row.max(max_col) as f64;
            let eps = opts.tikhonov * norm_inf.max(area);

            // Schur complement of the row block in the bordered system
            let dim = n2 + 1;
            let mut s = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            for j in 0..n2 {
                s[(j, j)] = area * colcount[j] as f64 + eps;
                s[(n2, j)] = 1.0;
                s[(j, n2)] = 1.0;
                rhs[j] = g2[j];
            }
            let mut full_row_coeff = 0.0;
            for i in 0..n1 {
                let aii = area * active[i].len() as f64 + eps;
                let f = area * area / aii;
                let gshare = area * g1[i] / aii;
                if active[i].len() == n2 {
                    full_row_coeff += f;
                    for j in 0..n2 {
                        rhs[j] -= gshare;
                    }
                } else {
                    for &j in &active[i] {
                        rhs[j as usize] -= gshare;
                        for &k in &active[i] {
                            s[(j as usize, k as usize)] -= f;
                        }
                    }
                }
            }
            if full_row_coeff != 0.0 {
                for j in 0..n2 {
                    for k in 0..n2 {
                        s[(j, k)] -= full_row_coeff;
                    }
                }
            }

            if let Some(sol) = s.lu().solve(&rhs) {
                let mut d2_sum = 0.0;
                for j in 0..n2 {
                    d2[j] = sol[j];
                    d2_sum += sol[j];
                }
                for i in 0..n1 {
                    let aii = area * active[i].len() as f64 + eps;
                    let s_active = if active[i].len() == n2 {
                        d2_sum
                    } else {
                        active[i].iter().map(|&j| d2[j as usize]).sum::<f64>()
                    };
                    d1[i] = (g1[i] - area * s_active) / aii;
                }
                let slope: f64 = g1.iter().zip(&d1).map(|(g, d)| g * d).sum::<f64>()
                    + g2.iter().zip(&d2).map(|(g, d)| g * d).sum::<f64>();
                if slope.is_finite() && slope > 0.0 {
                    let mut t = 1.0;
                    for _ in 0..MAX_HALVINGS {
                        for (dst, (a, d)) in t1.iter_mut().zip(a1.iter().zip(&d1)) {
                            *dst = a + t * d;
                        }
                        for (dst, (a, d)) in t2.iter_mut().zip(a2.iter().zip(&d2)) {
                            *dst = a + t * d;
                        }
                        let phi_trial = phi(&t1, &t2, cost, &prob.mu1, &prob.mu2, gamma);
                        if phi_trial >= phi_now + ARMIJO * t * slope {
                            std::mem::swap(&mut a1, &mut t1);
                            std::mem::swap(&mut a2, &mut t2);
                            phi_now = phi_trial;
                            phi_trace.push(phi_now);
                            stepped = true;
                            break;
                        }
                        t *= 0.5;
                    }
                }
            }
            if stepped {
                continue;
            }
        }

        // gradient ascent fallback on the concave dual objective
        if fallback_used >= opts.max_fallback {
            break;
        }
        fallback_used += 1;
        let slope: f64 =
            g1.iter().map(|g| g * g).sum::<f64>() + g2.iter().map(|g| g * g).sum::<f64>();
        if !(slope > 0.0) {
            break;
        }
        let mut t = ascent_step * 2.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for (dst, (a, g)) in t1.iter_mut().zip(a1.iter().zip(&g1)) {
                *dst = a + t * g;
            }
            for (dst, (a, g)) in t2.iter_mut().zip(a2.iter().zip(&g2)) {
                *dst = a + t * g;
            }
            let phi_trial = phi(&t1, &t2, cost, &prob.mu1, &prob.mu2, gamma);
            if phi_trial >= phi_now + ARMIJO * t * slope {
                std::mem::swap(&mut a1, &mut t1);
                std::mem::swap(&mut a2, &mut t2);
                phi_now = phi_trial;
                phi_trace.push(phi_now);
                ascent_step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // no ascent progress at line-search resolution
        }
    }

    // zero-mean normalization; the plan is invariant under the shift
    let mean2 = a2.iter().sum::<f64>() / n2 as f64;
    for v in &mut a2 {
        *v -= mean2;
    }
    for v in &mut a1 {
        *v += mean2;
    }
    let duals = DualPotentials {
        alpha1: Field1d { grid: prob.mu1.grid.clone(), values: a1 },
        alpha2: Field1d { grid: prob.mu2.grid.clone(), values: a2 },
        zero_mean: true,
    };
    let plan = plan_from_duals(&duals, cost, gamma)?;
    let (m1, m2) = marginals(&plan);
    let mut residual = 0.0f64;
    for (a, b) in m1.values.iter().zip(&prob.mu1.values) {
        residual = residual.max((a - b).abs());
    }
    for (a, b) in m2.values.iter().zip(&prob.mu2.values) {
        residual = residual.max((a - b).abs());
    }
    let min_mu = prob
        .mu1
        .values
        .iter()
        .chain(&prob.mu2.values)
        .fold(f64::INFINITY, |m, v| m.min(*v));
    Ok(QotSolution {
        primal_value: primal_objective(&plan, cost, gamma),
        dual_value: dual_objective(&duals, prob),
        marginal_residual: residual,
        iterations: newton_used + fallback_used,
        newton_iterations: newton_used,
        fallback_iterations: fallback_used,
        converged: converged && residual <= opts.tol * (1.0 + 1e-6),
        duals_certified: min_mu >= 1e-12,
        phi_trace,
        plan,
        duals,
    })
}
