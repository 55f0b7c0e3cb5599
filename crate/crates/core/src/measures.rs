//! Discrete measures, marginal projections, and the smoothing pipeline:
//! mollification with a constant shift onto a dilated grid, plus the
//! zero-extension / restriction pair between the base box and its dilation.

use crate::error::{Error, Result};
use crate::grid::{Field1d, Field2d, Grid1d, Grid2d};

/// Nonnegative atomic measure with one atom per grid cell (weights are
/// masses, not densities).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub grid: Grid1d,
    pub weights: Vec<f64>,
    pub total_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid1d, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n {
            return Err(Error::ShapeMismatch(format!(
                "measure has {} weights for a grid of {} cells",
                weights.len(),
                grid.n
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "measure weights must be nonnegative, got {w}"
            )));
        }
        let total_mass = weights.iter().sum();
        Ok(Self { grid, weights, total_mass })
    }

    pub fn uniform(grid: Grid1d, total_mass: f64) -> Self {
        let n = grid.n;
        let w = total_mass / n as f64;
        let weights = vec![w; n];
        Self { grid, weights, total_mass: w * n as f64 }
    }

    /// Atomic representation of a density field: weight = density * h.
    pub fn from_density(f: &Field1d) -> Result<Self> {
        let weights = f.values.iter().map(|v| v * f.grid.h).collect();
        Self::new(f.grid.clone(), weights)
    }
}

/// Marginal densities of a plan density on a product grid:
/// first output integrates over the second axis, second over the first.
pub fn marginals(pi: &Field2d) -> (Field1d, Field1d) {
    let nx = pi.grid.x.n;
    let ny = pi.grid.y.n;
    let hx = pi.grid.x.h;
    let hy = pi.grid.y.h;
    let mut m1 = vec![0.0; nx];
    let mut m2 = vec![0.0; ny];
    for i in 0..nx {
        let row = &pi.values[i * ny..(i + 1) * ny];
        let mut s = 0.0;
        for (j, v) in row.iter().enumerate() {
            s += v;
            m2[j] += v;
        }
        m1[i] = s * hy;
    }
    for v in &mut m2 {
        *v *= hx;
    }
    (
        Field1d { grid: pi.grid.x.clone(), values: m1 },
        Field1d { grid: pi.grid.y.clone(), values: m2 },
    )
}

/// Smooth bump profile `exp(-1 / (1 - (t/delta)^2))` supported on `(-delta, delta)`,
/// renormalized so its grid quadrature at cell width `h` equals one exactly.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub delta: f64,
    /// Profile values at integer cell offsets `0, 1, ..` times `h`
    /// (symmetric in the offset).
    taps: Vec<f64>,
}

impl MollifierKernel {
    /// Kernel normalized for a discrete convolution on a grid of width `h`.
    pub fn for_grid(delta: f64, h: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mollifier radius must be positive, got {delta}"
            )));
        }
        let reach = (delta / h).ceil() as usize;
        let bump = |t: f64| -> f64 {
            let s = t / delta;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let raw: Vec<f64> = (0..=reach).map(|o| bump(o as f64 * h)).collect();
        let mass: f64 = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
        let z = 1.0 / (mass * h);
        let taps = raw.into_iter().map(|v| v * z).collect();
        Ok(Self { delta, taps })
    }

    /// Profile value at signed cell offset `o` (i.e. at distance `o * h`).
    #[inline]
    pub fn tap(&self, o: isize) -> f64 {
        let k = o.unsigned_abs();
        if k < self.taps.len() {
            self.taps[k]
        } else {
            0.0
        }
    }

    pub fn reach(&self) -> usize {
        self.taps.len() - 1
    }

    /// Grid quadrature of the profile (equals one by construction).
    pub fn discrete_mass(&self, h: f64) -> f64 {
        (self.taps[0] + 2.0 * self.taps[1..].iter().sum::<f64>()) * h
    }
}

/// A base interval grid together with its dilation by `delta`, rounded
/// outward to whole cells so both grids share the same cell width and
/// cell boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedGrid {
    pub base: Grid1d,
    pub delta: f64,
    /// Number of collar cells added on each side.
    pub collar: usize,
    pub dilated: Grid1d,
}

impl DilatedGrid {
    pub fn new(base: Grid1d, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dilation radius must be positive, got {delta}"
            )));
        }
        let collar = (delta / base.h).ceil() as usize;
        let pad = collar as f64 * base.h;
        let dilated = Grid1d::new(base.lo - pad, base.hi + pad, base.n + 2 * collar)?;
        Ok(Self { base, delta, collar, dilated })
    }
}

/// Mollify-and-shift: convolve the atomic measure with the bump kernel and
/// add the constant `delta / |dilated domain|`, producing a smooth strictly
/// positive density on the dilated grid with `L^1` norm `total_mass + delta`.
pub fn mollify_shift(mu: &DiscreteMeasure, delta: f64) -> Result<(DilatedGrid, Field1d)> {
    let dg = DilatedGrid::new(mu.grid.clone(), delta)?;
    let kernel = MollifierKernel::for_grid(delta, mu.grid.h)?;
    let shift = delta / dg.dilated.measure();
    let n_d = dg.dilated.n;
    let collar = dg.collar as isize;
    let mut values = vec![shift; n_d];
    let reach = kernel.reach() as isize;
    for (k, &w) in mu.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        // atom k sits at dilated index k + collar
        let center = k as isize + collar;
        let lo = (center - reach).max(0);
        let hi = (center + reach).min(n_d as isize - 1);
        for idx in lo..=hi {
            values[idx as usize] += w * kernel.tap(idx - center);
        }
    }
    let field = Field1d { grid: dg.dilated.clone(), values };
    Ok((dg, field))
}

/// Zero-extension of a field on the base product grid to the dilated
/// product grid.
pub fn extend_by_zero(f: &Field2d, dx: &DilatedGrid, dy: &DilatedGrid) -> Result<Field2d> {
    if f.grid.x != dx.base || f.grid.y != dy.base {
        return Err(Error::ShapeMismatch(
            "field grid does not match the base of the dilation".into(),
        ));
    }
    let grid = Grid2d::new(dx.dilated.clone(), dy.dilated.clone());
    let ny_d = dy.dilated.n;
    let mut values = vec![0.0; grid.cell_count()];
    for i in 0..f.grid.x.n {
        for j in 0..f.grid.y.n {
            values[(i + dx.collar) * ny_d + (j + dy.collar)] = f.at(i, j);
        }
    }
    Ok(Field2d { grid, values })
}

/// Adjoint of [`extend_by_zero`]: restriction of a field on the dilated
/// product grid back to the base product grid.
pub fn restrict(f: &Field2d, dx: &DilatedGrid, dy: &DilatedGrid) -> Result<Field2d> {
    if f.grid.x != dx.dilated || f.grid.y != dy.dilated {
        return Err(Error::ShapeMismatch(
            "field grid does not match the dilated product grid".into(),
        ));
    }
    let grid = Grid2d::new(dx.base.clone(), dy.base.clone());
    let ny_d = dy.dilated.n;
    let mut values = Vec::with_capacity(grid.cell_count());
    for i in 0..dx.base.n {
        for j in 0..dy.base.n {
            values.push(f.values[(i + dx.collar) * ny_d + (j + dy.collar)]);
        }
    }
    Ok(Field2d { grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid1d {
        Grid1d::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn marginals_of_uniform_plan() {
        let g = Grid2d::new(unit_grid(8), unit_grid(4));
        let pi = Field2d::constant(g, 1.0);
        let (m1, m2) = marginals(&pi);
        assert!(m1.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(m2.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn marginals_of_diagonal_plan() {
        // unit cells: grids over [0,2] with two cells of width 1
        let g1 = Grid1d::new(0.0, 2.0, 2).unwrap();
        let g = Grid2d::new(g1.clone(), g1);
        let pi = Field2d::new(g, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let (m1, m2) = marginals(&pi);
        assert_eq!(m1.values, vec![0.5, 0.5]);
        assert_eq!(m2.values, vec![0.5, 0.5]);
    }

    #[test]
    fn measure_rejects_negative_weights() {
        assert!(DiscreteMeasure::new(unit_grid(2), vec![0.5, -0.1]).is_err());
        assert!(DiscreteMeasure::new(unit_grid(2), vec![0.5]).is_err());
    }

    #[test]
    fn kernel_quadrature_is_one() {
        for (delta, h) in [(0.1, 0.01), (0.05, 0.0125), (0.2, 0.1), (0.03, 0.1)] {
            let k = MollifierKernel::for_grid(delta, h).unwrap();
            assert!((k.discrete_mass(h) - 1.0).abs() < 1e-10);
            assert!(k.taps.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn mollify_point_mass() {
        let g = unit_grid(10);
        let mut w = vec![0.0; 10];
        w[4] = 1.0;
        let mu = DiscreteMeasure::new(g, w).unwrap();
        let (dg, f) = mollify_shift(&mu, 0.1).unwrap();
        // collar of one cell on each side: domain [-0.1, 1.1]
        assert_eq!(dg.collar, 1);
        assert!((dg.dilated.lo + 0.1).abs() < 1e-12);
        assert!((f.integrate() - 1.1).abs() < 1e-6);
        let shift = 0.1 / 1.2;
        assert!(f.values.iter().all(|v| *v >= shift - 1e-15));
        // far from the atom only the constant shift remains
        assert!((f.values[0] - shift).abs() < 1e-12);
    }

    #[test]
    fn mollify_zero_measure() {
        let mu = DiscreteMeasure::new(unit_grid(10), vec![0.0; 10]).unwrap();
        let (dg, f) = mollify_shift(&mu, 0.5).unwrap();
        let shift = 0.5 / dg.dilated.measure();
        assert!(f.values.iter().all(|v| (*v - shift).abs() < 1e-15));
        assert!((f.integrate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mollify_uniform_measure() {
        let mu = DiscreteMeasure::uniform(unit_grid(20), 1.0);
        let (dg, f) = mollify_shift(&mu, 0.05).unwrap();
        let shift = 0.05 / dg.dilated.measure();
        assert!(f.values.iter().all(|v| *v >= shift - 1e-15));
        // interior cells see the full kernel mass: density 1 + shift
        let mid = dg.dilated.n / 2;
        assert!((f.values[mid] - (1.0 + shift)).abs() < 1e-10);
    }

    #[test]
    fn mollify_mass_bookkeeping() {
        let g = unit_grid(16);
        let mu = DiscreteMeasure::new(
            g,
            (0..16).map(|k| 0.01 + (k as f64 * 0.37).fract()).collect(),
        )
        .unwrap();
        for delta in [0.2, 0.1, 0.05] {
            let (_, f) = mollify_shift(&mu, delta).unwrap();
            assert!((f.integrate() - (mu.total_mass + delta)).abs() < 1e-10);
        }
        assert!(mollify_shift(&mu, 0.0).is_err());
        assert!(mollify_shift(&mu, -0.5).is_err());
    }

    #[test]
    fn mollify_weak_star_consistency() {
        // two atoms strictly inside; test against a smooth function
        let g = unit_grid(40);
        let mut w = vec![0.0; 40];
        w[12] = 0.4;
        w[27] = 0.6;
        let mu = DiscreteMeasure::new(g.clone(), w.clone()).unwrap();
        let phi = |x: f64| (1.3 * x).cos() + 0.5 * x;
        let point_value: f64 = (0..40).map(|k| phi(g.centers[k]) * w[k]).sum();
        let mut prev = f64::INFINITY;
        for delta in [0.2, 0.1, 0.05] {
            let (dg, f) = mollify_shift(&mu, delta).unwrap();
            let test = Field1d::from_fn(dg.dilated.clone(), phi);
            let err = (f.inner(&test) - point_value).abs();
            assert!(err < prev, "weak-* error did not shrink at delta={delta}");
            prev = err;
        }
    }

    #[test]
    fn extend_restrict_pair() {
        let gx = unit_grid(6);
        let gy = unit_grid(5);
        let dx = DilatedGrid::new(gx.clone(), 0.1).unwrap();
        let dy = DilatedGrid::new(gy.clone(), 0.1).unwrap();
        let f = Field2d::from_fn(Grid2d::new(gx, gy), |x, y| x * y);
        let ext = extend_by_zero(&f, &dx, &dy).unwrap();

        // zero extension adds no mass
        assert!((ext.integrate() - f.integrate()).abs() < 1e-12);

        // restriction recovers the field exactly
        let back = restrict(&ext, &dx, &dy).unwrap();
        assert_eq!(back.values, f.values);

        // collar-only support restricts to zero
        let mut collar_only = Field2d::constant(ext.grid.clone(), 1.0);
        for i in 0..dx.base.n {
            for j in 0..dy.base.n {
                collar_only.values[(i + dx.collar) * dy.dilated.n + (j + dy.collar)] = 0.0;
            }
        }
        let r = restrict(&collar_only, &dx, &dy).unwrap();
        assert!(r.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn extend_restrict_adjoint() {
        let gx = unit_grid(4);
        let gy = unit_grid(7);
        let dx = DilatedGrid::new(gx.clone(), 0.15).unwrap();
        let dy = DilatedGrid::new(gy.clone(), 0.3).unwrap();
        let f = Field2d::from_fn(Grid2d::new(gx, gy), |x, y| (5.0 * x).sin() + y);
        let g = Field2d::from_fn(
            Grid2d::new(dx.dilated.clone(), dy.dilated.clone()),
            |x, y| x - y * y,
        );
        let lhs = extend_by_zero(&f, &dx, &dy).unwrap().inner(&g);
        let rhs = f.inner(&restrict(&g, &dx, &dy).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
