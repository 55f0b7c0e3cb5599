//! Numerical reproductions of the analytic facts behind the solvers: the
//! oscillating-dual family whose weak limit is feasible but suboptimal, the
//! energy identity satisfied by converged solves, boundedness of zero-mean
//! duals, the Hölder-1/2 modulus of the solution map, and value stability of
//! the exact LP under mollification of the marginals.
//!
//! All probes are seeded; trials are independent and may run in parallel,
//! with aggregation in trial order so reports are reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field1d, Field2d, Grid1d, Grid2d};
use crate::lp::solve_lp;
use crate::measures::{marginals, mollify_shift, DiscreteMeasure};
use crate::qot::{
    plan_from_duals, primal_objective, solve, DualPotentials, QotProblem, QotSolution,
    SolverOptions,
};

/// Order-independent summary of a sample (quantiles from the sorted values).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SummaryStats {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                min: f64::NAN,
                q25: f64::NAN,
                median: f64::NAN,
                q75: f64::NAN,
                max: f64::NAN,
                mean: f64::NAN,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
        Self {
            count: sorted.len(),
            min: sorted[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        }
    }
}

// --------------------------------------------------------------------------
// Oscillating-dual counterexample
// --------------------------------------------------------------------------

/// Closed-form fields of the oscillating-dual family at frequency `n`,
/// discretized at `resolution` cells per axis on the unit square, together
/// with their weak limit and all four quadrature marginals.
#[derive(Debug, Clone)]
pub struct CounterexampleFields {
    pub n: usize,
    pub resolution: usize,
    pub alpha1n: Field1d,
    pub alpha2n: Field1d,
    pub plan_n: Field2d,
    pub limit_plan: Field2d,
    pub mu1n: Field1d,
    pub mu2n: Field1d,
    pub mu1_lim: Field1d,
    pub mu2_lim: Field1d,
}

/// Square-wave sign of `sin(2 pi x)`: +1 on (0, 1/2) mod 1, -1 on (1/2, 1).
fn square_wave(x: f64) -> f64 {
    let frac = x - x.floor();
    if frac < 0.5 {
        1.0
    } else {
        -1.0
    }
}

fn quarter_sqdist(x: f64, y: f64) -> f64 {
    0.25 * (x - y) * (x - y)
}

/// Build the counterexample fields. `resolution` must be a multiple of `4n`
/// so no cell straddles a sign change of the oscillation or the 1/2
/// breakpoints.
pub fn counterexample_fields(n: usize, resolution: usize) -> Result<CounterexampleFields> {
    if n == 0 {
        return Err(Error::InvalidParameter("frequency must be >= 1".into()));
    }
    if resolution == 0 || resolution % (4 * n) != 0 {
        return Err(Error::InvalidParameter(format!(
            "resolution {resolution} is not a multiple of 4n = {}",
            4 * n
        )));
    }
    let g = Grid1d::new(0.0, 1.0, resolution)?;
    let g2 = Grid2d::new(g.clone(), g.clone());
    let nf = n as f64;

    let alpha1n = Field1d::from_fn(g.clone(), |x| {
        square_wave(nf * x) + if x <= 0.5 { 2.25 } else { 1.25 }
    });
    let alpha2n = Field1d::from_fn(g.clone(), |y| if y <= 0.5 { 0.0 } else { -0.5 });

    let plan_n = Field2d::from_fn(g2.clone(), |x, y| {
        let f = square_wave(nf * x);
        let c = quarter_sqdist(x, y);
        match (x <= 0.5, y <= 0.5) {
            (true, true) => f + 2.25 - c,
            (false, true) => f + 1.25 - c,
            (true, false) => f + 1.75 - c,
            (false, false) => (f + 0.75 - c).max(0.0),
        }
    });
    let limit_plan = Field2d::from_fn(g2, |x, y| {
        let c = quarter_sqdist(x, y);
        match (x <= 0.5, y <= 0.5) {
            (true, true) => 2.25 - c,
            (false, true) => 1.25 - c,
            (true, false) => 1.75 - c,
            (false, false) => 0.875 - 0.5 * c,
        }
    });

    let (mu1n, mu2n) = marginals(&plan_n);
    let (mu1_lim, mu2_lim) = marginals(&limit_plan);
    Ok(CounterexampleFields {
        n,
        resolution,
        alpha1n,
        alpha2n,
        plan_n,
        limit_plan,
        mu1n,
        mu2n,
        mu1_lim,
        mu2_lim,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleCase {
    pub n: usize,
    /// Max-norm residual of the optimality system satisfied by the
    /// closed-form triple with its own marginals.
    pub system_residual: f64,
    pub mu_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleLimit {
    /// Marginal residual of the limit plan against the limit marginals.
    pub feasibility_residual: f64,
    /// L2 distance between the solved plan and the limit plan.
    pub l2_distance: f64,
    pub objective_solved: f64,
    pub objective_limit: f64,
    /// `objective_limit - objective_solved`; strictly positive.
    pub optimality_gap: f64,
    /// Residual of the best separable dual fit to the limit plan
    /// (diagnostic: bounded away from zero).
    pub lsq_dual_residual: f64,
    pub solver_converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub resolution: usize,
    pub gamma: f64,
    pub cases: Vec<CounterexampleCase>,
    pub limit: CounterexampleLimit,
}

/// Check the closed-form family at each frequency and solve the regularized
/// problem at the weak-limit marginals, quantifying how far the weak-limit
/// plan is from the actual solution.
pub fn run_counterexample(
    n_list: &[usize],
    resolution: usize,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<CounterexampleReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("empty frequency list".into()));
    }
    let mut cases = Vec::with_capacity(n_list.len());
    let mut limit_fields: Option<CounterexampleFields> = None;
    for &n in n_list {
        let fields = counterexample_fields(n, resolution)?;
        let duals = DualPotentials {
            alpha1: fields.alpha1n.clone(),
            alpha2: fields.alpha2n.clone(),
            zero_mean: false,
        };
        let cost = Field2d::from_fn(fields.plan_n.grid.clone(), quarter_sqdist);
        let induced = plan_from_duals(&duals, &cost, gamma)?;
        let mut residual = 0.0f64;
        for (a, b) in induced.values.iter().zip(&fields.plan_n.values) {
            residual = residual.max((a - b).abs());
        }
        let (m1, m2) = marginals(&fields.plan_n);
        for (a, b) in m1.values.iter().zip(&fields.mu1n.values) {
            residual = residual.max((a - b).abs());
        }
        for (a, b) in m2.values.iter().zip(&fields.mu2n.values) {
            residual = residual.max((a - b).abs());
        }
        let mu_min = fields
            .mu1n
            .values
            .iter()
            .chain(&fields.mu2n.values)
            .fold(f64::INFINITY, |m, v| m.min(*v));
        cases.push(CounterexampleCase { n, system_residual: residual, mu_min });
        limit_fields = Some(fields);
    }
    let fields = limit_fields.expect("nonempty frequency list");

    let cost = Field2d::from_fn(fields.limit_plan.grid.clone(), quarter_sqdist);
    let (lm1, lm2) = marginals(&fields.limit_plan);
    let mut feas = 0.0f64;
    for (a, b) in lm1.values.iter().zip(&fields.mu1_lim.values) {
        feas = feas.max((a - b).abs());
    }
    for (a, b) in lm2.values.iter().zip(&fields.mu2_lim.values) {
        feas = feas.max((a - b).abs());
    }

    let prob = QotProblem::new(
        cost.clone(),
        fields.mu1_lim.clone(),
        fields.mu2_lim.clone(),
        gamma,
    )?;
    let sol = solve(&prob, opts)?;
    let diff = sol.plan.sub(&fields.limit_plan)?;
    let l2_distance = diff.lp_norm(2.0)?;
    let objective_solved = primal_objective(&sol.plan, &cost, gamma);
    let objective_limit = primal_objective(&fields.limit_plan, &cost, gamma);

    // best separable fit alpha1 (+) alpha2 to gamma*plan + c: row/column
    // means of the target; the remainder cannot be removed by any duals
    let target = Field2d::new(
        cost.grid.clone(),
        fields
            .limit_plan
            .values
            .iter()
            .zip(&cost.values)
            .map(|(p, c)| gamma * p + c)
            .collect(),
    )?;
    let nx = target.grid.x.n;
    let ny = target.grid.y.n;
    let mut row_mean = vec![0.0; nx];
    let mut col_mean = vec![0.0; ny];
    for i in 0..nx {
        for j in 0..ny {
            let v = target.at(i, j);
            row_mean[i] += v / ny as f64;
            col_mean[j] += v / nx as f64;
        }
    }
    let grand = row_mean.iter().sum::<f64>() / nx as f64;
    let mut lsq = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let r = target.at(i, j) - row_mean[i] - col_mean[j] + grand;
            lsq += r * r;
        }
    }
    let lsq_dual_residual = (lsq * target.grid.cell_area()).sqrt();

    Ok(CounterexampleReport {
        resolution,
        gamma,
        cases,
        limit: CounterexampleLimit {
            feasibility_residual: feas,
            l2_distance,
            objective_solved,
            objective_limit,
            optimality_gap: objective_limit - objective_solved,
            lsq_dual_residual,
            solver_converged: sol.converged,
        },
    })
}

// --------------------------------------------------------------------------
// Seeded instance families
// --------------------------------------------------------------------------

/// Sampler of bounded problem instances with strictly positive marginals and
/// matched masses.
#[derive(Debug, Clone)]
pub struct InstanceFamily {
    pub grid1: Grid1d,
    pub grid2: Grid1d,
    pub gamma: f64,
    /// Cost values drawn uniformly from this range.
    pub cost_range: (f64, f64),
    /// Marginal densities drawn uniformly from this range (before the mass
    /// matching rescale of the second marginal).
    pub density_range: (f64, f64),
    pub seed: u64,
}

impl InstanceFamily {
    pub fn unit_square(n: usize, gamma: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            grid1: Grid1d::new(0.0, 1.0, n)?,
            grid2: Grid1d::new(0.0, 1.0, n)?,
            gamma,
            cost_range: (0.0, 1.0),
            density_range: (0.5, 1.5),
            seed,
        })
    }

    fn rng_for(&self, trial: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            self.seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491),
        )
    }

    /// Draw a problem instance; masses are matched exactly by rescaling the
    /// second marginal.
    pub fn sample(&self, trial: u64) -> QotProblem {
        let mut rng = self.rng_for(trial);
        let (clo, chi) = self.cost_range;
        let (dlo, dhi) = self.density_range;
        let grid2 = Grid2d::new(self.grid1.clone(), self.grid2.clone());
        let cost = Field2d::new(
            grid2.clone(),
            (0..grid2.cell_count()).map(|_| rng.gen_range(clo..chi)).collect(),
        )
        .expect("sampled cost matches the grid");
        let mu1 = Field1d::new(
            self.grid1.clone(),
            (0..self.grid1.n).map(|_| rng.gen_range(dlo..dhi)).collect(),
        )
        .expect("sampled marginal matches the grid");
        let mut mu2 = Field1d::new(
            self.grid2.clone(),
            (0..self.grid2.n).map(|_| rng.gen_range(dlo..dhi)).collect(),
        )
        .expect("sampled marginal matches the grid");
        let scale = mu1.integrate() / mu2.integrate();
        for v in &mut mu2.values {
            *v *= scale;
        }
        QotProblem::new(cost, mu1, mu2, self.gamma).expect("sampled instance is feasible")
    }

    /// Draw a unit-norm, mass-preserving perturbation direction
    /// `(dc, dmu1, dmu2)`; the marginal components have zero grid integral.
    pub fn sample_direction(&self, trial: u64) -> (Field2d, Field1d, Field1d) {
        let mut rng = self.rng_for(trial ^ 0xD1CE_D1CE_D1CE_D1CE);
        let grid2 = Grid2d::new(self.grid1.clone(), self.grid2.clone());
        let dc = Field2d::new(
            grid2.clone(),
            (0..grid2.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .expect("direction matches the grid");
        let mut d1: Vec<f64> = (0..self.grid1.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean1 = d1.iter().sum::<f64>() / d1.len() as f64;
        for v in &mut d1 {
            *v -= mean1;
        }
        let mut d2: Vec<f64> = (0..self.grid2.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean2 = d2.iter().sum::<f64>() / d2.len() as f64;
        for v in &mut d2 {
            *v -= mean2;
        }
        let dmu1 = Field1d::new(self.grid1.clone(), d1).expect("direction matches the grid");
        let dmu2 = Field1d::new(self.grid2.clone(), d2).expect("direction matches the grid");
        let norm = (dc.lp_norm(2.0).unwrap().powi(2)
            + dmu1.lp_norm(2.0).unwrap().powi(2)
            + dmu2.lp_norm(2.0).unwrap().powi(2))
        .sqrt();
        let scale = 1.0 / norm;
        let dc = Field2d::new(grid2, dc.values.iter().map(|v| v * scale).collect()).unwrap();
        let dmu1 = Field1d::new(
            self.grid1.clone(),
            dmu1.values.iter().map(|v| v * scale).collect(),
        )
        .unwrap();
        let dmu2 = Field1d::new(
            self.grid2.clone(),
            dmu2.values.iter().map(|v| v * scale).collect(),
        )
        .unwrap();
        (dc, dmu1, dmu2)
    }
}

// --------------------------------------------------------------------------
// Hölder probe
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub samples: usize,
    pub discarded: usize,
    pub seed: u64,
    /// Pooled log-log slope of perturbation response against scale.
    pub fitted_exponent: f64,
    /// Largest response ratio `r(t) / sqrt(t)` observed.
    pub max_ratio: f64,
    pub ratio_stats: SummaryStats,
}

/// Perturb sampled instances along mass-preserving directions at several
/// scales and measure the solution response in L2. Reports the response
/// ratios against `sqrt(t)` and the fitted growth exponent.
pub fn holder_probe(
    family: &InstanceFamily,
    trials: usize,
    scales: &[f64],
) -> Result<ProbeReport> {
    if trials == 0 || scales.is_empty() {
        return Err(Error::InvalidParameter("need trials >= 1 and scales".into()));
    }
    if scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("scales must be positive".into()));
    }
    let opts = SolverOptions::default();
    let per_trial: Vec<Option<Vec<(f64, f64)>>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let prob = family.sample(trial);
            let base = solve(&prob, &opts).ok()?;
            if !base.converged {
                return None;
            }
            let (dc, dmu1, dmu2) = family.sample_direction(trial);
            let mut points = Vec::with_capacity(scales.len());
            for &t in scales {
                let cost = Field2d::new(
                    prob.cost.grid.clone(),
                    prob.cost
                        .values
                        .iter()
                        .zip(&dc.values)
                        .map(|(c, d)| c + t * d)
                        .collect(),
                )
                .ok()?;
                let mu1 = Field1d::new(
                    prob.mu1.grid.clone(),
                    prob.mu1
                        .values
                        .iter()
                        .zip(&dmu1.values)
                        .map(|(m, d)| m + t * d)
                        .collect(),
                )
                .ok()?;
                let mu2 = Field1d::new(
                    prob.mu2.grid.clone(),
                    prob.mu2
                        .values
                        .iter()
                        .zip(&dmu2.values)
                        .map(|(m, d)| m + t * d)
                        .collect(),
                )
                .ok()?;
                let perturbed = QotProblem::new(cost, mu1, mu2, prob.gamma).ok()?;
                let sol = solve(&perturbed, &opts).ok()?;
                if !sol.converged {
                    return None;
                }
                let r = sol.plan.sub(&base.plan).ok()?.lp_norm(2.0).ok()?;
                points.push((t, r));
            }
            Some(points)
        })
        .collect();

    let mut ratios = Vec::new();
    let mut log_points = Vec::new();
    let mut discarded = 0usize;
    for entry in per_trial {
        match entry {
            Some(points) => {
                for (t, r) in points {
                    ratios.push(r / t.sqrt());
                    if r > 1e-13 {
                        log_points.push((t.ln(), r.ln()));
                    }
                }
            }
            None => discarded += 1,
        }
    }
    if log_points.len() < 2 {
        return Err(Error::InvalidParameter(
            "not enough converged perturbation responses to fit an exponent".into(),
        ));
    }
    let xm = log_points.iter().map(|p| p.0).sum::<f64>() / log_points.len() as f64;
    let ym = log_points.iter().map(|p| p.1).sum::<f64>() / log_points.len() as f64;
    let sxx: f64 = log_points.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = log_points.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let max_ratio = ratios.iter().fold(0.0f64, |m, r| m.max(*r));
    Ok(ProbeReport {
        samples: trials,
        discarded,
        seed: family.seed,
        fitted_exponent: slope,
        max_ratio,
        ratio_stats: SummaryStats::from_values(&ratios),
    })
}

// --------------------------------------------------------------------------
// Dual-bound probe
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DualBoundReport {
    pub samples: usize,
    pub discarded: usize,
    pub seed: u64,
    /// Largest `|integral of alpha2|` over all converged solves.
    pub max_zero_mean_defect: f64,
    /// `(||a1||_L1 + ||a2||_L1) / (||mu1|| ||mu2|| + ||c|| + 1)^2`.
    pub l1_ratio: SummaryStats,
    /// `(||a1||_L2 + ||a2||_L2) / (||mu1|| ||mu2|| + ||c|| + 1)^6`.
    pub l2_ratio: SummaryStats,
    /// `||pi||_L2 / (||mu1|| ||mu2|| + ||c||)`.
    pub plan_ratio: SummaryStats,
}

/// Solve sampled instances and report normalized dual and plan norms; the
/// ratios stay bounded over bounded families.
pub fn dual_bound_probe(family: &InstanceFamily, trials: usize) -> Result<DualBoundReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need trials >= 1".into()));
    }
    let opts = SolverOptions::default();
    let rows: Vec<Option<(f64, f64, f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let prob = family.sample(trial);
            let sol = solve(&prob, &opts).ok()?;
            if !sol.converged {
                return None;
            }
            let defect = sol.duals.alpha2.integrate().abs();
            let m1 = prob.mu1.lp_norm(2.0).ok()?;
            let m2 = prob.mu2.lp_norm(2.0).ok()?;
            let cn = prob.cost.lp_norm(2.0).ok()?;
            let den = m1 * m2 + cn + 1.0;
            let a1_l1 = sol.duals.alpha1.lp_norm(1.0).ok()?;
            let a2_l1 = sol.duals.alpha2.lp_norm(1.0).ok()?;
            let a1_l2 = sol.duals.alpha1.lp_norm(2.0).ok()?;
            let a2_l2 = sol.duals.alpha2.lp_norm(2.0).ok()?;
            let plan_l2 = sol.plan.lp_norm(2.0).ok()?;
            Some((
                defect,
                (a1_l1 + a2_l1) / den.powi(2),
                (a1_l2 + a2_l2) / den.powi(6),
                plan_l2 / (m1 * m2 + cn),
            ))
        })
        .collect();

    let mut defect_max = 0.0f64;
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    let mut plan = Vec::new();
    let mut discarded = 0usize;
    for row in rows {
        match row {
            Some((d, r1, r2, rp)) => {
                defect_max = defect_max.max(d);
                l1.push(r1);
                l2.push(r2);
                plan.push(rp);
            }
            None => discarded += 1,
        }
    }
    Ok(DualBoundReport {
        samples: trials,
        discarded,
        seed: family.seed,
        max_zero_mean_defect: defect_max,
        l1_ratio: SummaryStats::from_values(&l1),
        l2_ratio: SummaryStats::from_values(&l2),
        plan_ratio: SummaryStats::from_values(&plan),
    })
}

// --------------------------------------------------------------------------
// Energy identity
// --------------------------------------------------------------------------

/// Relative residual of the identity
/// `gamma ||pi||^2 = int mu1 a1 + int mu2 a2 - int pi c`
/// that every converged solve satisfies.
pub fn energy_identity_check(sol: &QotSolution, prob: &QotProblem) -> f64 {
    let lhs = prob.gamma * sol.plan.lp_norm(2.0).expect("p=2 is valid").powi(2);
    let rhs = sol.duals.alpha1.inner(&prob.mu1) + sol.duals.alpha2.inner(&prob.mu2)
        - sol.plan.inner(&prob.cost);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30)
}

// --------------------------------------------------------------------------
// LP value stability under mollification
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct StabilityEntry {
    pub delta: f64,
    pub lp_value: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub base_value: f64,
    pub entries: Vec<StabilityEntry>,
}

/// Exact LP values for mollified marginal pairs against the LP value at the
/// target measures. The cost is given as a function so it extends to the
/// dilated boxes.
pub fn stability_probe(
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    deltas: &[f64],
    cost_fn: impl Fn(f64, f64) -> f64,
) -> Result<StabilityReport> {
    if deltas.is_empty() {
        return Err(Error::InvalidParameter("need at least one delta".into()));
    }
    let base_cost = Field2d::from_fn(
        Grid2d::new(mu1.grid.clone(), mu2.grid.clone()),
        &cost_fn,
    );
    let (base_plan, _) = solve_lp(&base_cost, mu1, mu2)?;
    let base_value = base_plan.cost_value;

    let mut entries = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let (dg1, f1) = mollify_shift(mu1, delta)?;
        let (dg2, f2) = mollify_shift(mu2, delta)?;
        let m1 = DiscreteMeasure::from_density(&f1)?;
        let mut m2 = DiscreteMeasure::from_density(&f2)?;
        // kill the last-ulp mass mismatch from the two quadratures
        let ratio = m1.total_mass / m2.total_mass;
        for w in &mut m2.weights {
            *w *= ratio;
        }
        m2.total_mass = m2.weights.iter().sum();
        let cost = Field2d::from_fn(
            Grid2d::new(dg1.dilated.clone(), dg2.dilated.clone()),
            &cost_fn,
        );
        let (plan, _) = solve_lp(&cost, &m1, &m2)?;
        entries.push(StabilityEntry {
            delta,
            lp_value: plan.cost_value,
            abs_diff: (plan.cost_value - base_value).abs(),
        });
    }
    Ok(StabilityReport { base_value, entries })
}
