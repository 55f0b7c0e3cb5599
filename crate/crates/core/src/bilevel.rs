//! Marginal (and cost) identification governed by the regularized transport
//! solve: the upper level optimizes a data-misfit objective over the first
//! marginal and the cost, where the plan is produced by the smoothing
//! pipeline (zero-extension of the cost, mollify-and-shift of the marginals,
//! inner solve on the dilated box, restriction back).
//!
//! The inner solution map is only Hölder-1/2 in the data, so the outer loop
//! is a derivative-free projected descent: central finite differences along
//! simplex-tangent directions for the marginal and batched coordinate
//! directions for the cost, backtracking on strict decrease, plus seeded
//! random restarts. An adjoint-based outer loop is a possible extension, not
//! part of the contract.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{w1p_penalty, Field2d};
use crate::measures::{extend_by_zero, mollify_shift, restrict, DilatedGrid, DiscreteMeasure};
use crate::qot::{solve, DualPotentials, QotProblem, SolverOptions};

/// Norm used by the data-misfit part of the upper objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjectiveNorm {
    /// Integrated absolute deviation (reporting mode).
    L1,
    /// Squared L2 deviation (descent mode).
    L2,
}

/// Outer-loop settings.
#[derive(Debug, Clone)]
pub struct OuterOptions {
    /// Initial backtracking step.
    pub step0: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
    /// Total outer-iteration budget across all restarts.
    pub max_iters: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Number of additional random feasible starts.
    pub restarts: usize,
    pub seed: u64,
    /// Number of coordinate batches for cost directions.
    pub c_batches: usize,
    /// Halvings per backtracking search.
    pub max_backtracks: usize,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            step0: 1.0,
            shrink: 0.5,
            max_iters: 200,
            fd_step: 1e-5,
            restarts: 0,
            seed: 0,
            c_batches: 8,
            max_backtracks: 30,
        }
    }
}

/// Data and parameters of the identification problem.
#[derive(Debug, Clone)]
pub struct BilevelConfig {
    pub gamma: f64,
    pub delta: f64,
    /// Penalty exponent (> 2).
    pub p: f64,
    /// Weight of the marginal-misfit term.
    pub nu: f64,
    /// Reference cost the penalty anchors to.
    pub cost_ref: Field2d,
    /// Fixed second marginal, total mass one.
    pub mu2_data: DiscreteMeasure,
    /// Observed plan on the base product grid.
    pub obs_plan: Field2d,
    /// Observation window: mask over base product cells.
    pub obs_mask: Vec<bool>,
    /// Optional observed first marginal with its own window.
    pub obs_mu1: Option<(DiscreteMeasure, Vec<bool>)>,
    pub objective_norm: ObjectiveNorm,
    pub solver: SolverOptions,
    pub outer: OuterOptions,
}

impl BilevelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(
                "gamma and delta must be positive".into(),
            ));
        }
        if !(self.p > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "penalty exponent must satisfy p > 2, got {}",
                self.p
            )));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::InvalidParameter("nu must be nonnegative".into()));
        }
        if (self.mu2_data.total_mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "second marginal must have unit mass, got {}",
                self.mu2_data.total_mass
            )));
        }
        if self.mu2_data.grid != self.cost_ref.grid.y {
            return Err(Error::ShapeMismatch(
                "second marginal grid does not match the cost grid".into(),
            ));
        }
        if self.obs_plan.grid != self.cost_ref.grid {
            return Err(Error::ShapeMismatch(
                "observed plan grid does not match the cost grid".into(),
            ));
        }
        if self.obs_mask.len() != self.cost_ref.grid.cell_count() {
            return Err(Error::ShapeMismatch(
                "observation mask length does not match the product grid".into(),
            ));
        }
        if let Some((mu1d, mask)) = &self.obs_mu1 {
            if mu1d.grid != self.cost_ref.grid.x || mask.len() != mu1d.grid.n {
                return Err(Error::ShapeMismatch(
                    "observed first marginal does not match its grid/mask".into(),
                ));
            }
        }
        if self.outer.c_batches == 0 {
            return Err(Error::InvalidParameter("c_batches must be >= 1".into()));
        }
        Ok(())
    }
}

/// One inner solve through the smoothing pipeline.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Plan restricted to the base product grid.
    pub plan: Field2d,
    /// Duals on the dilated grids (warm start for the next solve).
    pub duals: DualPotentials,
    pub converged: bool,
    /// Plan mass on the dilated box (equals the common marginal mass).
    pub full_mass: f64,
    /// Plan mass after restriction; at most `mu1 mass + delta`.
    pub restricted_mass: f64,
    pub solver_iterations: usize,
}

/// Evaluate the plan at `(mu1, cost)`: extend the cost by zero, mollify and
/// shift both marginals, solve on the dilated box, restrict to the base box.
pub fn forward_map(
    mu1: &DiscreteMeasure,
    cost: &Field2d,
    cfg: &BilevelConfig,
    warm: Option<&DualPotentials>,
) -> Result<ForwardOutput> {
    if mu1.grid != cost.grid.x {
        return Err(Error::ShapeMismatch(
            "first marginal grid does not match the cost grid".into(),
        ));
    }
    let dx = DilatedGrid::new(cost.grid.x.clone(), cfg.delta)?;
    let dy = DilatedGrid::new(cost.grid.y.clone(), cfg.delta)?;
    let (_, m1) = mollify_shift(mu1, cfg.delta)?;
    let (_, m2) = mollify_shift(&cfg.mu2_data, cfg.delta)?;
    let cost_ext = extend_by_zero(cost, &dx, &dy)?;
    let prob = QotProblem::new(cost_ext, m1, m2, cfg.gamma)?;
    let mut opts = cfg.solver.clone();
    opts.warm_start = warm.cloned();
    let sol = solve(&prob, &opts)?;
    let plan = restrict(&sol.plan, &dx, &dy)?;
    Ok(ForwardOutput {
        full_mass: sol.plan.integrate(),
        restricted_mass: plan.integrate(),
        plan,
        duals: sol.duals,
        converged: sol.converged,
        solver_iterations: sol.iterations,
    })
}

/// Data-misfit objective over the observation windows.
pub fn upper_objective(plan: &Field2d, mu1: &DiscreteMeasure, cfg: &BilevelConfig) -> f64 {
    let area = plan.grid.cell_area();
    let mut plan_term = 0.0;
    for ((p, d), m) in plan
        .values
        .iter()
        .zip(&cfg.obs_plan.values)
        .zip(&cfg.obs_mask)
    {
        if *m {
            let e = p - d;
            plan_term += match cfg.objective_norm {
                ObjectiveNorm::L1 => e.abs(),
                ObjectiveNorm::L2 => e * e,
            };
        }
    }
    plan_term *= area;
    let mut mu_term = 0.0;
    if let Some((mu1d, mask)) = &cfg.obs_mu1 {
        for ((w, wd), m) in mu1.weights.iter().zip(&mu1d.weights).zip(mask) {
            if *m {
                let e = w - wd;
                mu_term += match cfg.objective_norm {
                    ObjectiveNorm::L1 => e.abs(),
                    ObjectiveNorm::L2 => e * e,
                };
            }
        }
    }
    plan_term + cfg.nu * mu_term
}

/// Upper objective split into misfit and cost-anchor penalty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ObjectiveParts {
    pub jgamma: f64,
    pub j: f64,
    pub penalty: f64,
}

/// Full regularized objective: misfit plus `1/(p gamma) ||c - c_ref||^p`.
pub fn eval_jgamma(
    plan: &Field2d,
    mu1: &DiscreteMeasure,
    cost: &Field2d,
    cfg: &BilevelConfig,
) -> Result<ObjectiveParts> {
    let diff = cost.sub(&cfg.cost_ref)?;
    let penalty = w1p_penalty(&diff, cfg.p)? / (cfg.p * cfg.gamma);
    let j = upper_objective(plan, mu1, cfg);
    Ok(ObjectiveParts { jgamma: j + penalty, j, penalty })
}

/// Euclidean projection onto the probability simplex `{w >= 0, sum w = 1}`.
pub fn project_to_simplex(raw: &[f64]) -> Vec<f64> {
    let mut sorted = raw.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    raw.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Projection wrapper returning a feasible measure on `grid`.
pub fn project_feasible(grid: &crate::grid::Grid1d, raw: &[f64]) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(grid.clone(), project_to_simplex(raw))
}

/// One outer-iteration record (also the JSONL log schema).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OuterRecord {
    pub iter: usize,
    pub jgamma: f64,
    pub j: f64,
    pub penalty: f64,
    pub step: f64,
    pub accepted: bool,
}

/// Outcome of the outer optimization.
#[derive(Debug, Clone)]
pub struct BilevelState {
    pub mu1: DiscreteMeasure,
    pub cost: Field2d,
    /// Plan at the returned point (restricted to the base grid).
    pub plan: Field2d,
    pub j_value: f64,
    pub jgamma_value: f64,
    pub penalty_value: f64,
    /// Every outer iteration, accepted or not, across all restarts.
    pub log: Vec<OuterRecord>,
    pub iterations: usize,
    pub forward_evals: usize,
    /// Largest restricted plan mass seen at any evaluated trial point.
    pub max_trial_plan_mass: f64,
    /// Largest deviation of an accepted iterate's mass from one.
    pub feas_max_mass_dev: f64,
    /// Smallest weight of an accepted iterate.
    pub feas_min_weight: f64,
}

impl BilevelState {
    /// Objective values at accepted steps (strictly decreasing).
    pub fn accepted_history(&self) -> Vec<(usize, f64)> {
        self.log
            .iter()
            .filter(|r| r.accepted)
            .map(|r| (r.iter, r.jgamma))
            .collect()
    }
}

struct EvalOutcome {
    jgamma: f64,
    restricted_mass: f64,
}

/// Evaluate the full objective at a trial point; `None` when the inner solve
/// does not converge (the trial is rejected by the caller).
fn eval_trial(
    grid: &crate::grid::Grid1d,
    weights: &[f64],
    cost_values: &[f64],
    cfg: &BilevelConfig,
    warm: Option<&DualPotentials>,
) -> Option<EvalOutcome> {
    let mu = DiscreteMeasure::new(grid.clone(), weights.to_vec()).ok()?;
    let cost = Field2d::new(cfg.cost_ref.grid.clone(), cost_values.to_vec()).ok()?;
    let fwd = forward_map(&mu, &cost, cfg, warm).ok()?;
    if !fwd.converged {
        return None;
    }
    let parts = eval_jgamma(&fwd.plan, &mu, &cost, cfg).ok()?;
    Some(EvalOutcome { jgamma: parts.jgamma, restricted_mass: fwd.restricted_mass })
}

struct Driver<'a> {
    cfg: &'a BilevelConfig,
    log: Vec<OuterRecord>,
    iters_used: usize,
    forward_evals: usize,
    max_trial_plan_mass: f64,
    feas_max_mass_dev: f64,
    feas_min_weight: f64,
}

struct RunResult {
    weights: Vec<f64>,
    cost: Vec<f64>,
    jgamma: f64,
}

impl<'a> Driver<'a> {
    fn track_feasibility(&mut self, w: &[f64]) {
        let mass: f64 = w.iter().sum();
        self.feas_max_mass_dev = self.feas_max_mass_dev.max((mass - 1.0).abs());
        let minw = w.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        self.feas_min_weight = self.feas_min_weight.min(minw);
    }

    /// Projected descent from one start, drawing on the shared iteration
    /// budget. Accepted steps strictly decrease the objective.
    fn descend(&mut self, start_w: Vec<f64>, start_c: Vec<f64>) -> Result<Option<RunResult>> {
        let cfg = self.cfg;
        let grid = &cfg.cost_ref.grid.x;
        let n1 = grid.n;
        let nc = cfg.cost_ref.values.len();
        let batches = cfg.outer.c_batches.min(nc);

        let mut w = project_to_simplex(&start_w);
        let mut c = start_c;
        self.track_feasibility(&w);

        let mu0 = DiscreteMeasure::new(grid.clone(), w.clone())?;
        let cost0 = Field2d::new(cfg.cost_ref.grid.clone(), c.clone())?;
        let fwd0 = forward_map(&mu0, &cost0, cfg, None)?;
        self.forward_evals += 1;
        self.max_trial_plan_mass = self.max_trial_plan_mass.max(fwd0.restricted_mass);
        if !fwd0.converged {
            return Ok(None);
        }
        let mut warm = fwd0.duals.clone();
        let mut jg = eval_jgamma(&fwd0.plan, &mu0, &cost0, cfg)?.jgamma;
        let mut step_init = cfg.outer.step0;

        while self.iters_used < cfg.outer.max_iters {
            if jg <= 1e-15 {
                break; // already at the global minimum
            }
            self.iters_used += 1;
            let iter_id = self.iters_used;

            let t_mu = cfg.outer.fd_step * (1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let t_c = cfg.outer.fd_step * (1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs())));

            // simplex-tangent directions e_k - 1/n, then batched cost
            // directions; each probed centrally at projected points
            let mut trials: Vec<(Vec<f64>, Vec<f64>)> =
                Vec::with_capacity(2 * n1 + 2 * batches);
            for k in 0..n1 {
                for sign in [1.0, -1.0] {
                    let mut raw = w.clone();
                    for (i, r) in raw.iter_mut().enumerate() {
                        let d = if i == k { 1.0 - 1.0 / n1 as f64 } else { -1.0 / n1 as f64 };
                        *r += sign * t_mu * d;
                    }
                    trials.push((project_to_simplex(&raw), c.clone()));
                }
            }
            for b in 0..batches {
                let size = (nc - b + batches - 1) / batches;
                let scale = 1.0 / (size as f64).sqrt();
                for sign in [1.0, -1.0] {
                    let mut cv = c.clone();
                    for (idx, v) in cv.iter_mut().enumerate() {
                        if idx % batches == b {
                            *v += sign * t_c * scale;
                        }
                    }
                    trials.push((w.clone(), cv));
                }
            }

            let outcomes: Vec<Option<EvalOutcome>> = trials
                .par_iter()
                .map(|(tw, tc)| eval_trial(grid, tw, tc, cfg, Some(&warm)))
                .collect();
            self.forward_evals += outcomes.len();
            for o in outcomes.iter().flatten() {
                self.max_trial_plan_mass = self.max_trial_plan_mass.max(o.restricted_mass);
            }

            let mut g_mu = vec![0.0; n1];
            for k in 0..n1 {
                let (plus, minus) = (&outcomes[2 * k], &outcomes[2 * k + 1]);
                if let (Some(p), Some(m)) = (plus, minus) {
                    let slope = (p.jgamma - m.jgamma) / (2.0 * t_mu);
                    for (i, g) in g_mu.iter_mut().enumerate() {
                        let d = if i == k { 1.0 - 1.0 / n1 as f64 } else { -1.0 / n1 as f64 };
                        *g += slope * d;
                    }
                }
            }
            let mut g_c = vec![0.0; nc];
            for b in 0..batches {
                let base = 2 * n1 + 2 * b;
                if let (Some(p), Some(m)) = (&outcomes[base], &outcomes[base + 1]) {
                    let size = (nc - b + batches - 1) / batches;
                    let scale = 1.0 / (size as f64).sqrt();
                    let slope = (p.jgamma - m.jgamma) / (2.0 * t_c);
                    for (idx, g) in g_c.iter_mut().enumerate() {
                        if idx % batches == b {
                            *g += slope * scale;
                        }
                    }
                }
            }
            let gnorm2: f64 = g_mu.iter().map(|g| g * g).sum::<f64>()
                + g_c.iter().map(|g| g * g).sum::<f64>();
            if !(gnorm2 > 0.0) || !gnorm2.is_finite() {
                self.log.push(OuterRecord {
                    iter: iter_id,
                    jgamma: jg,
                    j: f64::NAN,
                    penalty: f64::NAN,
                    step: 0.0,
                    accepted: false,
                });
                break;
            }

            // backtracking on strict decrease
            let mut accepted: Option<(Vec<f64>, Vec<f64>, f64, f64)> = None;
            let mut step = step_init;
            for _ in 0..cfg.outer.max_backtracks {
                let tw = project_to_simplex(
                    &w.iter().zip(&g_mu).map(|(v, g)| v - step * g).collect::<Vec<_>>(),
                );
                let tc: Vec<f64> = c.iter().zip(&g_c).map(|(v, g)| v - step * g).collect();
                self.forward_evals += 1;
                if let Some(o) = eval_trial(grid, &tw, &tc, cfg, Some(&warm)) {
                    self.max_trial_plan_mass = self.max_trial_plan_mass.max(o.restricted_mass);
                    if o.jgamma < jg {
                        accepted = Some((tw, tc, o.jgamma, step));
                        break;
                    }
                }
                step *= cfg.outer.shrink;
            }

            match accepted {
                Some((tw, tc, tjg, used_step)) => {
                    let decrease = jg - tjg;
                    w = tw;
                    c = tc;
                    jg = tjg;
                    self.track_feasibility(&w);
                    // refresh warm-start duals at the accepted point
                    let mu = DiscreteMeasure::new(grid.clone(), w.clone())?;
                    let cost = Field2d::new(cfg.cost_ref.grid.clone(), c.clone())?;
                    let fwd = forward_map(&mu, &cost, cfg, Some(&warm))?;
                    self.forward_evals += 1;
                    self.max_trial_plan_mass =
                        self.max_trial_plan_mass.max(fwd.restricted_mass);
                    let parts = eval_jgamma(&fwd.plan, &mu, &cost, cfg)?;
                    warm = fwd.duals;
                    self.log.push(OuterRecord {
                        iter: iter_id,
                        jgamma: parts.jgamma,
                        j: parts.j,
                        penalty: parts.penalty,
                        step: used_step,
                        accepted: true,
                    });
                    step_init = (used_step * 4.0).min(cfg.outer.step0);
                    if decrease < 1e-10 {
                        break;
                    }
                }
                None => {
                    self.log.push(OuterRecord {
                        iter: iter_id,
                        jgamma: jg,
                        j: f64::NAN,
                        penalty: f64::NAN,
                        step,
                        accepted: false,
                    });
                    break;
                }
            }
        }
        Ok(Some(RunResult { weights: w, cost: c, jgamma: jg }))
    }
}

/// Minimize the regularized objective over `(mu1, cost)` by projected
/// finite-difference descent with seeded random restarts; returns the best
/// state found.
pub fn solve_bilevel(
    cfg: &BilevelConfig,
    init_mu1: &DiscreteMeasure,
    init_cost: &Field2d,
) -> Result<BilevelState> {
    use rand::{Rng, SeedableRng};
    cfg.validate()?;
    if init_mu1.grid != cfg.cost_ref.grid.x || init_cost.grid != cfg.cost_ref.grid {
        return Err(Error::ShapeMismatch(
            "initial point does not match the configured grids".into(),
        ));
    }
    let grid = &cfg.cost_ref.grid.x;
    let n1 = grid.n;

    let mut driver = Driver {
        cfg,
        log: Vec::new(),
        iters_used: 0,
        forward_evals: 0,
        max_trial_plan_mass: 0.0,
        feas_max_mass_dev: 0.0,
        feas_min_weight: f64::INFINITY,
    };

    let mut starts = vec![(init_mu1.weights.clone(), init_cost.values.clone())];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.outer.seed);
    for _ in 0..cfg.outer.restarts {
        // Dirichlet(1): exponentials normalized to the simplex
        let mut raw: Vec<f64> = (0..n1).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = raw.iter().sum();
        for v in &mut raw {
            *v /= s;
        }
        starts.push((raw, init_cost.values.clone()));
    }

    let mut best: Option<RunResult> = None;
    for (sw, sc) in starts {
        if driver.iters_used >= cfg.outer.max_iters && best.is_some() {
            break;
        }
        if let Some(run) = driver.descend(sw, sc)? {
            let better = best.as_ref().map_or(true, |b| run.jgamma < b.jgamma);
            if better {
                best = Some(run);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::InvalidParameter("no start produced a converged inner solve".into())
    })?;

    let mu1 = DiscreteMeasure::new(grid.clone(), best.weights)?;
    let cost = Field2d::new(cfg.cost_ref.grid.clone(), best.cost)?;
    let fwd = forward_map(&mu1, &cost, cfg, None)?;
    let parts = eval_jgamma(&fwd.plan, &mu1, &cost, cfg)?;
    Ok(BilevelState {
        mu1,
        cost,
        plan: fwd.plan,
        j_value: parts.j,
        jgamma_value: parts.jgamma,
        penalty_value: parts.penalty,
        log: driver.log,
        iterations: driver.iters_used,
        forward_evals: driver.forward_evals,
        max_trial_plan_mass: driver.max_trial_plan_mass,
        feas_max_mass_dev: driver.feas_max_mass_dev,
        feas_min_weight: driver.feas_min_weight,
    })
}

/// Warm-started sweep over a schedule of `(gamma, delta)` pairs with
/// nonincreasing `gamma`; each stage starts from the previous best point.
pub fn gamma_delta_path(
    cfg: &BilevelConfig,
    schedule: &[(f64, f64)],
    init_mu1: &DiscreteMeasure,
    init_cost: &Field2d,
) -> Result<Vec<BilevelState>> {
    if schedule.is_empty() {
        return Err(Error::InvalidParameter("empty schedule".into()));
    }
    for pair in schedule.windows(2) {
        if pair[1].0 > pair[0].0 {
            return Err(Error::InvalidParameter(
                "schedule must be nonincreasing in gamma".into(),
            ));
        }
    }
    let mut out: Vec<BilevelState> = Vec::with_capacity(schedule.len());
    for &(gamma, delta) in schedule {
        let mut stage_cfg = cfg.clone();
        stage_cfg.gamma = gamma;
        stage_cfg.delta = delta;
        let state = match out.last() {
            Some(prev) => solve_bilevel(&stage_cfg, &prev.mu1, &prev.cost)?,
            None => solve_bilevel(&stage_cfg, init_mu1, init_cost)?,
        };
        out.push(state);
    }
    Ok(out)
}

/// `W^{1,p}` distance of the state's cost from the reference, recovered from
/// the penalty value.
pub fn cost_anchor_distance(state: &BilevelState, cfg: &BilevelConfig) -> f64 {
    (state.penalty_value * cfg.p * cfg.gamma).powf(1.0 / cfg.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field1d, Grid1d, Grid2d};

    fn unit_grid(n: usize) -> Grid1d {
        Grid1d::new(0.0, 1.0, n).unwrap()
    }

    fn base_config(n: usize) -> BilevelConfig {
        let g = unit_grid(n);
        let grid2 = Grid2d::new(g.clone(), g.clone());
        BilevelConfig {
            gamma: 1.0,
            delta: 0.1,
            p: 3.0,
            nu: 0.0,
            cost_ref: Field2d::from_fn(grid2.clone(), |x, y| (x - y) * (x - y)),
            mu2_data: DiscreteMeasure::uniform(g, 1.0),
            obs_plan: Field2d::constant(grid2.clone(), 0.0),
            obs_mask: vec![true; grid2.cell_count()],
            obs_mu1: None,
            objective_norm: ObjectiveNorm::L2,
            solver: SolverOptions::default(),
            outer: OuterOptions { max_iters: 40, ..OuterOptions::default() },
        }
    }

    #[test]
    fn simplex_projection_cases() {
        // already feasible
        let w = project_to_simplex(&[0.25, 0.25, 0.5]);
        assert!((w[0] - 0.25).abs() < 1e-15);
        assert!((w[2] - 0.5).abs() < 1e-15);

        // all-equal negative vector lands on the uniform point
        let w = project_to_simplex(&[-3.0, -3.0, -3.0, -3.0]);
        for v in &w {
            assert!((v - 0.25).abs() < 1e-15);
        }

        // closed form: (0.9, 0.9) -> (0.5, 0.5)
        let w = project_to_simplex(&[0.9, 0.9]);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);

        // sum constraint and nonnegativity on a generic point
        let w = project_to_simplex(&[1.4, -0.3, 0.2, 0.05]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn forward_map_uniform_is_flat_inside() {
        let n = 8;
        let mut cfg = base_config(n);
        cfg.cost_ref = Field2d::constant(cfg.cost_ref.grid.clone(), 0.0);
        let mu1 = DiscreteMeasure::uniform(unit_grid(n), 1.0);
        let fwd = forward_map(&mu1, &cfg.cost_ref, &cfg, None).unwrap();
        assert!(fwd.converged);
        assert!(fwd.restricted_mass <= 1.0 + cfg.delta + 1e-10);
        // interior cells are flat; kernel boundary effects stay near the rim
        let mid = fwd.plan.at(n / 2, n / 2);
        let off = fwd.plan.at(n / 2 - 1, n / 2 + 1);
        assert!((mid - off).abs() < 1e-8);
    }

    #[test]
    fn forward_map_mass_bound_random_points() {
        let n = 6;
        let cfg = base_config(n);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mu = project_feasible(&unit_grid(n), &raw).unwrap();
            let fwd = forward_map(&mu, &cfg.cost_ref, &cfg, None).unwrap();
            assert!(fwd.converged);
            assert!(fwd.restricted_mass <= 1.0 + cfg.delta + 1e-10);
            assert!((fwd.full_mass - (1.0 + cfg.delta)).abs() < 1e-9);
        }
    }

    #[test]
    fn upper_objective_cases() {
        let n = 4;
        let mut cfg = base_config(n);
        let mu = DiscreteMeasure::uniform(unit_grid(n), 1.0);

        // plan equal to the observation: zero misfit
        let plan = cfg.obs_plan.clone();
        assert_eq!(upper_objective(&plan, &mu, &cfg), 0.0);

        // nu = 0: the marginal term is ignored even when data is present
        cfg.obs_mu1 = Some((
            DiscreteMeasure::uniform(unit_grid(n), 1.0),
            vec![true; n],
        ));
        let mut off = DiscreteMeasure::uniform(unit_grid(n), 1.0);
        off.weights[0] += 0.5;
        off.weights[1] -= 0.5;
        assert_eq!(upper_objective(&plan, &off, &cfg), 0.0);

        // quarter window, L1 mode: pi_d = 0, pi = 1 on |D| = 1/4
        cfg.objective_norm = ObjectiveNorm::L1;
        let mut mask = vec![false; cfg.obs_mask.len()];
        for m in mask.iter_mut().take(cfg.obs_mask.len() / 4) {
            *m = true;
        }
        cfg.obs_mask = mask;
        cfg.obs_mu1 = None;
        let one = Field2d::constant(cfg.obs_plan.grid.clone(), 1.0);
        assert!((upper_objective(&one, &mu, &cfg) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn jgamma_reduces_to_j_at_reference_cost() {
        let n = 4;
        let cfg = base_config(n);
        let mu = DiscreteMeasure::uniform(unit_grid(n), 1.0);
        let plan = Field2d::constant(cfg.obs_plan.grid.clone(), 0.3);
        let parts = eval_jgamma(&plan, &mu, &cfg.cost_ref, &cfg).unwrap();
        assert_eq!(parts.penalty, 0.0);
        assert_eq!(parts.jgamma, parts.j);
    }

    #[test]
    fn bilevel_stops_at_global_minimum() {
        let n = 6;
        let mut cfg = base_config(n);
        let mu0 = DiscreteMeasure::uniform(unit_grid(n), 1.0);
        let fwd = forward_map(&mu0, &cfg.cost_ref, &cfg, None).unwrap();
        cfg.obs_plan = fwd.plan.clone();
        let state = solve_bilevel(&cfg, &mu0, &cfg.cost_ref.clone()).unwrap();
        assert_eq!(state.jgamma_value, 0.0);
        assert_eq!(state.iterations, 0);
    }

    #[test]
    fn bilevel_penalty_dominated_limit() {
        // large nu with an observed first marginal pins mu1 to the data
        let n = 16;
        let mut cfg = base_config(n);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
        let target = project_feasible(&unit_grid(n), &raw).unwrap();
        cfg.nu = 1e6;
        cfg.obs_mu1 = Some((target.clone(), vec![true; n]));
        cfg.outer.max_iters = 300;
        cfg.outer.seed = 3;
        let start = DiscreteMeasure::uniform(unit_grid(n), 1.0);
        let state = solve_bilevel(&cfg, &start, &cfg.cost_ref.clone()).unwrap();
        let tv: f64 = state
            .mu1
            .weights
            .iter()
            .zip(&target.weights)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(tv < 1e-3, "total variation {tv} too large");
        // accepted history strictly decreasing
        let hist = state.accepted_history();
        for w in hist.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        assert!(state.feas_max_mass_dev <= 1e-12);
        assert!(state.feas_min_weight >= 0.0);
    }

    #[test]
    fn path_of_length_one_matches_single_solve() {
        let n = 6;
        let mut cfg = base_config(n);
        cfg.outer.max_iters = 10;
        let mu0 = DiscreteMeasure::uniform(unit_grid(n), 1.0);
        let mut shifted = mu0.clone();
        shifted.weights[0] += 0.1;
        shifted.weights[n - 1] -= 0.1;
        shifted.total_mass = shifted.weights.iter().sum();
        let fwd = forward_map(&shifted, &cfg.cost_ref, &cfg, None).unwrap();
        cfg.obs_plan = fwd.plan.clone();

        let single = solve_bilevel(&cfg, &mu0, &cfg.cost_ref.clone()).unwrap();
        let path =
            gamma_delta_path(&cfg, &[(cfg.gamma, cfg.delta)], &mu0, &cfg.cost_ref.clone())
                .unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].jgamma_value, single.jgamma_value);
        assert_eq!(path[0].mu1.weights, single.mu1.weights);
    }

    #[test]
    fn schedule_must_decrease_in_gamma() {
        let cfg = base_config(4);
        let mu0 = DiscreteMeasure::uniform(unit_grid(4), 1.0);
        let err = gamma_delta_path(
            &cfg,
            &[(0.5, 0.1), (1.0, 0.1)],
            &mu0,
            &cfg.cost_ref.clone(),
        );
        assert!(err.is_err());
    }
}
