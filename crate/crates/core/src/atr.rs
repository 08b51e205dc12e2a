//! Averaged time reversal: harmonic extensions, the Dirichlet-energy
//! projection, the time-reversal operator and the Neumann series iteration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{BoundaryTrace, GammaMask, GridSpec, ScalarField};
use crate::landweber::{iterate_metrics, LandweberConfig, LandweberRun, LinearOperator};
use crate::measurement::Measurement;
use crate::wave::{Pinning, WaveSolver};

/// Boundary condition of an elliptic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipticBc {
    /// Dirichlet on the whole boundary.
    Dirichlet,
    /// Dirichlet on Gamma, homogeneous Neumann elsewhere.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticSolveSpec {
    pub tolerance: f64,
    /// Iteration cap; `None` means `10 * nx * ny`.
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

impl Default for EllipticSolveSpec {
    fn default() -> Self {
        EllipticSolveSpec { tolerance: 1e-8, max_iterations: None }
    }
}

impl EllipticSolveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(invalid(format!("elliptic tolerance must lie in (0, 1), got {}", self.tolerance)));
        }
        if self.max_iterations == Some(0) {
            return Err(invalid("elliptic iteration cap must be positive"));
        }
        Ok(())
    }

    fn cap(&self, grid: &GridSpec) -> usize {
        self.max_iterations.unwrap_or(10 * grid.len())
    }
}

/// `-w * dx^2 * Δ_h u` with Neumann mirrors, `w` the trapezoid factor; a
/// symmetric positive semidefinite stencil.
fn stiffness(grid: &GridSpec, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    for j in 0..ny {
        let wy = if j == 0 || j + 1 == ny { 0.5 } else { 1.0 };
        let up = if j + 1 == ny { j - 1 } else { j + 1 };
        let down = if j == 0 { 1 } else { j - 1 };
        for i in 0..nx {
            let wx = if i == 0 || i + 1 == nx { 0.5 } else { 1.0 };
            let right = if i + 1 == nx { i - 1 } else { i + 1 };
            let left = if i == 0 { 1 } else { i - 1 };
            let k = j * nx + i;
            let lap = u[j * nx + left] + u[j * nx + right] + u[up * nx + i] + u[down * nx + i] - 4.0 * u[k];
            out[k] = -wx * wy * lap;
        }
    }
}

/// Conjugate gradients on the stiffness system restricted to `free` nodes.
/// `b` and the returned vector live on the full grid, zero off `free`.
fn solve_free(grid: &GridSpec, free: &[bool], b: &[f64], spec: &EllipticSolveSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = grid.len();
    let dot = |a: &[f64], c: &[f64]| -> f64 { a.iter().zip(c).map(|(x, y)| x * y).sum() };
    let mut r: Vec<f64> = b.iter().zip(free).map(|(v, &f)| if f { *v } else { 0.0 }).collect();
    let bnorm = dot(&r, &r).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let cap = spec.cap(grid);
    for _ in 0..cap {
        stiffness(grid, &p, &mut ap);
        for (v, &f) in ap.iter_mut().zip(free) {
            if !f {
                *v = 0.0;
            }
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= spec.tolerance * bnorm {
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err(Error::NoConvergence { iterations: cap, residual: rr.sqrt() / bnorm })
}

/// Discrete harmonic function with the given perimeter values on the pinned
/// part of the boundary (all of it, or Gamma for [`EllipticBc::Mixed`]).
pub fn harmonic_extension(
    bdata: &[f64],
    grid: &GridSpec,
    spec: &EllipticSolveSpec,
    bc: EllipticBc,
    gamma: Option<&GammaMask>,
) -> Result<ScalarField> {
    if bdata.len() != grid.perimeter_len() {
        return Err(Error::GridMismatch("boundary data length differs from perimeter".into()));
    }
    if !bdata.iter().all(|v| v.is_finite()) {
        return Err(invalid("boundary data has non-finite values"));
    }
    let perimeter = grid.perimeter_indices();
    let pinned_k: Vec<usize> = match bc {
        EllipticBc::Dirichlet => (0..perimeter.len()).collect(),
        EllipticBc::Mixed => {
            let g = gamma.ok_or_else(|| invalid("mixed problem needs Gamma"))?;
            let ks: Vec<usize> = (0..perimeter.len()).filter(|&k| g.contains(k)).collect();
            if ks.is_empty() {
                return Err(invalid("Gamma is empty"));
            }
            ks
        }
    };
    let mut free = vec![true; grid.len()];
    let mut u = vec![0.0; grid.len()];
    for &k in &pinned_k {
        free[perimeter[k]] = false;
        u[perimeter[k]] = bdata[k];
    }
    let mut ku = vec![0.0; grid.len()];
    stiffness(grid, &u, &mut ku);
    let b: Vec<f64> = ku.iter().map(|v| -v).collect();
    let x = solve_free(grid, &free, &b, spec)?;
    for k in 0..grid.len() {
        if free[k] {
            u[k] = x[k];
        }
    }
    ScalarField::from_values(*grid, u)
}

fn check_omega0(omega0: &ScalarField) -> Result<Vec<bool>> {
    let g = omega0.grid();
    let mut inside = vec![false; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if omega0.values()[k] != 0.0 {
                if g.is_boundary(i, j) {
                    return Err(invalid("interior domain must not touch the boundary"));
                }
                inside[k] = true;
            }
        }
    }
    if !inside.iter().any(|&b| b) {
        return Err(invalid("interior domain is empty"));
    }
    Ok(inside)
}

/// Dirichlet-energy orthogonal projection onto fields vanishing outside the
/// interior mask: `Δ_h h = Δ_h f` on the mask, `h = 0` elsewhere.
pub fn project_pi0(f: &ScalarField, omega0: &ScalarField, spec: &EllipticSolveSpec) -> Result<ScalarField> {
    f.check_same_grid(omega0)?;
    let inside = check_omega0(omega0)?;
    let grid = *f.grid();
    let mut kf = vec![0.0; grid.len()];
    stiffness(&grid, f.values(), &mut kf);
    let h = solve_free(&grid, &inside, &kf, spec)?;
    ScalarField::from_values(grid, h)
}

/// `D(f, g)`: forward-difference Dirichlet inner product.
pub fn hd_dot(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.check_same_grid(g)?;
    let grid = f.grid();
    let (a, b) = (f.values(), g.values());
    let (nx, ny) = (grid.nx, grid.ny);
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i + 1 < nx {
                s += (a[k + 1] - a[k]) * (b[k + 1] - b[k]) / (grid.dx * grid.dx);
            }
            if j + 1 < ny {
                s += (a[k + nx] - a[k]) * (b[k + nx] - b[k]) / (grid.dy * grid.dy);
            }
        }
    }
    Ok(s * grid.dx * grid.dy)
}

pub fn hd_norm(f: &ScalarField) -> f64 {
    hd_dot(f, f).map(|v| v.max(0.0).sqrt()).unwrap_or(f64::NAN)
}

/// Full or partial-data reversal.
#[derive(Debug, Clone, PartialEq)]
pub enum ReversalMode {
    Full,
    Partial(GammaMask),
}

impl ReversalMode {
    fn pinning(&self) -> Pinning<'_> {
        match self {
            ReversalMode::Full => Pinning::Full,
            ReversalMode::Partial(g) => Pinning::Partial(g),
        }
    }

    fn extension(&self, bdata: &[f64], grid: &GridSpec, spec: &EllipticSolveSpec) -> Result<ScalarField> {
        match self {
            ReversalMode::Full => harmonic_extension(bdata, grid, spec, EllipticBc::Dirichlet, None),
            ReversalMode::Partial(g) => harmonic_extension(bdata, grid, spec, EllipticBc::Mixed, Some(g)),
        }
    }
}

/// Quadrature of a unit-mass weight `chi(tau)` on time levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingSpec {
    /// Time levels `tau_j / dt`, strictly increasing, in `1..=nt`.
    pub levels: Vec<usize>,
    /// Trapezoid weight times `chi(tau_j)`; non-negative, summing to one.
    pub weights: Vec<f64>,
}

impl AveragingSpec {
    /// `count` uniform nodes on `[t0_fraction * T, T]` with trapezoid weights
    /// against a plateau whose ends rise and fall by a C² polynomial
    /// (`6s^5 - 15s^4 + 10s^3`) over `taper` of the support at each side,
    /// normalized to unit mass.
    pub fn tapered(grid: &GridSpec, count: usize, t0_fraction: f64, taper: f64) -> Result<Self> {
        if count < 3 {
            return Err(invalid("averaging needs at least 3 nodes"));
        }
        if !(0.0..1.0).contains(&t0_fraction) {
            return Err(invalid("averaging start must lie in [0, 1)"));
        }
        if !(taper > 0.0 && taper <= 0.5) {
            return Err(invalid(format!("taper must lie in (0, 0.5], got {taper}")));
        }
        let nt = grid.nt;
        let lo = ((t0_fraction * nt as f64).round() as usize).max(1);
        let mut levels: Vec<usize> =
            (0..count).map(|j| lo + ((nt - lo) as f64 * j as f64 / (count - 1) as f64).round() as usize).collect();
        levels.dedup();
        if levels.len() < 3 {
            return Err(invalid("time grid too coarse for the requested averaging"));
        }
        let t_lo = grid.time(lo);
        let t_hi = grid.time(nt);
        let taus: Vec<f64> = levels.iter().map(|&l| grid.time(l)).collect();
        let ramp = |s: f64| {
            let s = (s / taper).clamp(0.0, 1.0);
            s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
        };
        let mut weights = Vec::with_capacity(levels.len());
        for (j, &t) in taus.iter().enumerate() {
            let left = if j > 0 { t - taus[j - 1] } else { 0.0 };
            let right = if j + 1 < taus.len() { taus[j + 1] - t } else { 0.0 };
            let s = (t - t_lo) / (t_hi - t_lo);
            weights.push(0.5 * (left + right) * ramp(s) * ramp(1.0 - s));
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let spec = AveragingSpec { levels, weights };
        spec.validate(grid)?;
        Ok(spec)
    }

    /// 32 nodes on `[0.1 T, T]`, tapers over a tenth of the support.
    pub fn standard(grid: &GridSpec) -> Result<Self> {
        Self::tapered(grid, 32, 0.1, 0.1)
    }

    /// All weight on one level.
    pub fn single(level: usize) -> Self {
        AveragingSpec { levels: vec![level], weights: vec![1.0] }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.levels.is_empty() || self.levels.len() != self.weights.len() {
            return Err(invalid("averaging needs matching, nonempty levels and weights"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("averaging levels must increase strictly"));
        }
        if self.levels[0] == 0 || *self.levels.last().unwrap() > grid.nt {
            return Err(invalid("averaging levels must lie in (0, T]"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("averaging weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("averaging weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Time reversal with Dirichlet data on a (partial) boundary.
#[derive(Debug, Clone)]
pub struct TimeReversal {
    solver: WaveSolver,
    mode: ReversalMode,
    elliptic: EllipticSolveSpec,
}

impl TimeReversal {
    pub fn new(grid: GridSpec, c: &ScalarField, mode: ReversalMode, elliptic: EllipticSolveSpec) -> Result<Self> {
        elliptic.validate()?;
        if let ReversalMode::Partial(g) = &mode {
            if g.flags().len() != grid.perimeter_len() {
                return Err(Error::GridMismatch("Gamma mask length differs from perimeter".into()));
            }
        }
        Ok(TimeReversal { solver: WaveSolver::new(grid, c)?, mode, elliptic })
    }

    pub fn grid(&self) -> &GridSpec {
        self.solver.grid()
    }

    fn masked(&self, h: &BoundaryTrace) -> Result<BoundaryTrace> {
        match &self.mode {
            ReversalMode::Full => Ok(h.clone()),
            ReversalMode::Partial(g) => h.restricted(g),
        }
    }

    /// `A(tau) h`: reversal of `H(tau - t)(h(t) - h(tau))` from zero terminal
    /// data plus the harmonic extension of `h(tau)`.
    pub fn apply(&self, h: &BoundaryTrace, tau: f64) -> Result<ScalarField> {
        let level = self.solver.level_of(tau)?;
        if level == 0 {
            return Err(invalid("reversal time must be positive"));
        }
        let h = self.masked(h)?;
        let grid = *self.grid();
        let p = grid.perimeter_len();
        let at_tau = h.row(level).to_vec();
        let mut values = vec![0.0; h.values().len()];
        for n in 0..level {
            for k in 0..p {
                values[n * p + k] = h.at(n, k) - at_tau[k];
            }
        }
        let shifted = BoundaryTrace::from_values(grid, h.gamma().clone(), values)?;
        let v0 =
            self.solver.dirichlet_reversal_level(&shifted, &ScalarField::zeros(grid), level, self.mode.pinning())?;
        let ext = self.mode.extension(&at_tau, &grid, &self.elliptic)?;
        v0.add(&ext)
    }

    /// `Σ_j w_j ṽ^{tau_j}(0)` as a single backward solve of the superposed
    /// boundary data (the harmonic terms are omitted).
    pub fn averaged_reversal(&self, h: &BoundaryTrace, avg: &AveragingSpec) -> Result<ScalarField> {
        let grid = *self.grid();
        avg.validate(&grid)?;
        let h = self.masked(h)?;
        let p = grid.perimeter_len();
        let start = *avg.levels.last().unwrap();
        let mut values = vec![0.0; h.values().len()];
        let mut active_weight = 0.0;
        let mut active_target = vec![0.0; p];
        let mut next = avg.levels.len();
        // Walk down in time; node j contributes w_j (h(t) - h(tau_j)) for t < tau_j.
        for n in (0..start).rev() {
            while next > 0 && avg.levels[next - 1] > n {
                next -= 1;
                let w = avg.weights[next];
                active_weight += w;
                for (t, v) in active_target.iter_mut().zip(h.row(avg.levels[next])) {
                    *t += w * v;
                }
            }
            for k in 0..p {
                values[n * p + k] = active_weight * h.at(n, k) - active_target[k];
            }
        }
        let data = BoundaryTrace::from_values(grid, h.gamma().clone(), values)?;
        self.solver.dirichlet_reversal_level(&data, &ScalarField::zeros(grid), start, self.mode.pinning())
    }

    /// `Π_0 Σ_j w_j A(tau_j) h`.
    pub fn averaged_a0(&self, h: &BoundaryTrace, avg: &AveragingSpec, omega0: &ScalarField) -> Result<ScalarField> {
        let v = self.averaged_reversal(h, avg)?;
        project_pi0(&v, omega0, &self.elliptic)
    }
}

/// Measurement paired with `𝒜_0` as back-projection; Landweber with unit
/// step on this operator is the Neumann series iteration.
pub struct AtrOperator<'a> {
    pub measurement: &'a Measurement,
    pub reversal: &'a TimeReversal,
    pub averaging: &'a AveragingSpec,
    pub omega0: &'a ScalarField,
}

impl LinearOperator for AtrOperator<'_> {
    fn model_len(&self) -> usize {
        self.measurement.model_len()
    }

    fn data_len(&self) -> usize {
        self.measurement.data_len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.measurement.forward(x)
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let grid = *self.measurement.grid();
        let h = BoundaryTrace::from_values(grid, self.measurement.config().gamma.clone(), y.to_vec())?;
        Ok(self.reversal.averaged_a0(&h, self.averaging, self.omega0)?.into_values())
    }

    fn model_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.measurement.model_dot(a, b)
    }

    fn data_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.measurement.data_dot(a, b)
    }
}

/// `f_1 = 𝒜_0 m`, `f_n = f_{n-1} - 𝒜_0 (L f_{n-1} - m)`. The log carries the
/// weighted `L^2` error as `rel_error` and the Dirichlet-energy error as
/// `hd_error` when `truth` is given.
pub fn atr_iterate(
    op: &AtrOperator<'_>,
    m: &BoundaryTrace,
    steps: usize,
    truth: Option<&ScalarField>,
) -> Result<LandweberRun> {
    if steps == 0 {
        return Err(invalid("need at least one step"));
    }
    let grid = *op.measurement.grid();
    let cfg = LandweberConfig::new(1.0, steps);
    let data = op.measurement.weight_data(m)?;
    let l2 = truth.map(|t| {
        let t = t.values().to_vec();
        let norm = op.model_norm(&t);
        move |f: &[f64]| {
            let d: Vec<f64> = f.iter().zip(&t).map(|(a, b)| a - b).collect();
            op.model_norm(&d) / norm
        }
    });
    let hd = truth.map(|t| {
        let t = t.clone();
        let norm = hd_norm(&t);
        move |f: &[f64]| {
            let d = ScalarField::from_values(grid, f.to_vec()).and_then(|x| x.sub(&t));
            d.map(|d| hd_norm(&d) / norm).unwrap_or(f64::NAN)
        }
    });
    iterate_metrics(
        op,
        data.values(),
        &cfg,
        l2.as_ref().map(|f| f as &dyn Fn(&[f64]) -> f64),
        hd.as_ref().map(|f| f as &dyn Fn(&[f64]) -> f64),
    )
}
