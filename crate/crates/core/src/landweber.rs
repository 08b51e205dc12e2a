//! Landweber iteration and step-size theory.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A linear map between two inner-product spaces of flat vectors.
///
/// `adjoint` is whatever back-projection the iteration should use; for the
/// plain Landweber method it is the adjoint of `forward`.
pub trait LinearOperator: Sync {
    fn model_len(&self) -> usize;
    fn data_len(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;

    fn model_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        euclid(a, b)
    }

    fn data_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        euclid(a, b)
    }

    fn model_norm(&self, a: &[f64]) -> f64 {
        self.model_dot(a, a).max(0.0).sqrt()
    }

    fn data_norm(&self, a: &[f64]) -> f64 {
        self.data_dot(a, a).max(0.0).sqrt()
    }

    /// `adjoint(forward(x))`.
    fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.adjoint(&self.forward(x)?)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense matrix with Euclidean inner products.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    pub matrix: DMatrix<f64>,
}

impl MatrixOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        MatrixOperator { matrix }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        MatrixOperator { matrix: DMatrix::from_diagonal(&DVector::from_column_slice(d)) }
    }
}

impl LinearOperator for MatrixOperator {
    fn model_len(&self) -> usize {
        self.matrix.ncols()
    }

    fn data_len(&self) -> usize {
        self.matrix.nrows()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.matrix.ncols() {
            return Err(Error::GridMismatch(format!("expected {} entries, got {}", self.matrix.ncols(), x.len())));
        }
        Ok((&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec())
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.matrix.nrows() {
            return Err(Error::GridMismatch(format!("expected {} entries, got {}", self.matrix.nrows(), y.len())));
        }
        Ok((self.matrix.tr_mul(&DVector::from_column_slice(y))).as_slice().to_vec())
    }
}

/// Discrepancy principle: stop once `||L f_k - m|| < c * delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub c: f64,
    pub delta: f64,
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0) || !(self.delta >= 0.0) {
            return Err(invalid(format!(
                "stopping rule needs C > 1 and delta >= 0, got C={} delta={}",
                self.c, self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandweberConfig {
    pub gamma: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub f0: Option<Vec<f64>>,
    #[serde(default)]
    pub stop: Option<StoppingRule>,
    #[serde(default = "one")]
    pub log_every: usize,
    /// Record wall-clock seconds in the log (breaks bit reproducibility).
    #[serde(default)]
    pub timing: bool,
}

fn one() -> usize {
    1
}

impl LandweberConfig {
    pub fn new(gamma: f64, max_steps: usize) -> Self {
        LandweberConfig { gamma, max_steps, f0: None, stop: None, log_every: 1, timing: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(invalid(format!("step size must be positive, got {}", self.gamma)));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(invalid("log_every must be at least 1"));
        }
        if let Some(s) = &self.stop {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub residual: f64,
    pub rel_error: Option<f64>,
    pub seconds: Option<f64>,
    /// Dirichlet-energy relative error, logged by the time-reversal iteration.
    #[serde(default)]
    pub hd_error: Option<f64>,
}

/// Why an iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    MaxSteps,
    Stopped { step: usize },
    Diverged { step: usize, norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationLog {
    pub entries: Vec<LogEntry>,
}

impl IterationLog {
    pub fn errors(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.rel_error).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.residual).collect()
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn at_step(&self, step: usize) -> Option<&LogEntry> {
        self.entries.iter().find(|e| e.step == step)
    }

    /// `step,residual,rel_error,seconds` (plus `hd_error` when logged);
    /// absent values are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let hd = self.entries.iter().any(|e| e.hd_error.is_some());
        write!(w, "step,residual,rel_error,seconds")?;
        writeln!(w, "{}", if hd { ",hd_error" } else { "" })?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for e in &self.entries {
            let sec = e.seconds.map(|v| format!("{v:.6}")).unwrap_or_default();
            write!(w, "{},{:e},{},{}", e.step, e.residual, opt(e.rel_error), sec)?;
            if hd {
                write!(w, ",{}", opt(e.hd_error))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LandweberRun {
    pub solution: Vec<f64>,
    pub log: IterationLog,
    pub outcome: Outcome,
}

impl LandweberRun {
    /// Turn a divergence into an error.
    pub fn into_result(self) -> Result<(Vec<f64>, IterationLog)> {
        match self.outcome {
            Outcome::Diverged { step, norm } => Err(Error::Diverged { step, norm }),
            _ => Ok((self.solution, self.log)),
        }
    }
}

/// Maps an iterate to a scalar error.
pub type Metric<'a> = &'a dyn Fn(&[f64]) -> f64;

const DIVERGENCE_FACTOR: f64 = 1e12;

/// Relative model-norm distance to a known solution.
pub fn relative_error_metric<'a, O: LinearOperator + ?Sized>(
    op: &'a O,
    truth: &'a [f64],
) -> impl Fn(&[f64]) -> f64 + 'a {
    let norm = op.model_norm(truth);
    move |f: &[f64]| {
        let d: Vec<f64> = f.iter().zip(truth).map(|(a, b)| a - b).collect();
        op.model_norm(&d) / norm
    }
}

/// `f_k = f_{k-1} - gamma * adjoint(forward(f_{k-1}) - m)`.
///
/// The log holds `f_0 .. f_N` (or up to the stopping step); `error` maps an
/// iterate to its error against ground truth when one is known.
pub fn iterate<O: LinearOperator + ?Sized>(
    op: &O,
    m: &[f64],
    cfg: &LandweberConfig,
    error: Option<Metric<'_>>,
) -> Result<LandweberRun> {
    iterate_metrics(op, m, cfg, error, None)
}

/// [`iterate`] with an additional Dirichlet-energy error metric.
pub fn iterate_metrics<O: LinearOperator + ?Sized>(
    op: &O,
    m: &[f64],
    cfg: &LandweberConfig,
    error: Option<Metric<'_>>,
    hd_error: Option<Metric<'_>>,
) -> Result<LandweberRun> {
    cfg.validate()?;
    if m.len() != op.data_len() {
        return Err(Error::GridMismatch(format!("data has {} entries, operator expects {}", m.len(), op.data_len())));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(invalid("data has non-finite values"));
    }
    let mut f = match &cfg.f0 {
        Some(f0) if f0.len() != op.model_len() => {
            return Err(Error::GridMismatch("initial guess has the wrong length".into()));
        }
        Some(f0) => f0.clone(),
        None => vec![0.0; op.model_len()],
    };
    let start = Instant::now();
    let scale = op.data_norm(m).max(op.model_norm(&f));
    let limit = DIVERGENCE_FACTOR * scale;
    let mut log = IterationLog::default();
    let mut outcome = Outcome::MaxSteps;
    for k in 0..=cfg.max_steps {
        let norm = op.model_norm(&f);
        if !norm.is_finite() || norm > limit {
            outcome = Outcome::Diverged { step: k, norm };
            break;
        }
        let mut r = op.forward(&f)?;
        for (ri, mi) in r.iter_mut().zip(m) {
            *ri -= mi;
        }
        let residual = op.data_norm(&r);
        let stop = cfg.stop.is_some_and(|s| residual < s.c * s.delta);
        if k % cfg.log_every == 0 || k == cfg.max_steps || stop {
            log.entries.push(LogEntry {
                step: k,
                residual,
                rel_error: error.map(|e| e(&f)),
                seconds: cfg.timing.then(|| start.elapsed().as_secs_f64()),
                hd_error: hd_error.map(|e| e(&f)),
            });
        }
        if stop {
            outcome = Outcome::Stopped { step: k };
            break;
        }
        if k == cfg.max_steps {
            break;
        }
        let g = op.adjoint(&r)?;
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi -= cfg.gamma * gi;
        }
    }
    Ok(LandweberRun { solution: f, log, outcome })
}

/// [`iterate`] started from `f0`.
pub fn iterate_with_guess<O: LinearOperator + ?Sized>(
    op: &O,
    m: &[f64],
    f0: Vec<f64>,
    cfg: &LandweberConfig,
    error: Option<Metric<'_>>,
) -> Result<LandweberRun> {
    let mut cfg = cfg.clone();
    cfg.f0 = Some(f0);
    iterate(op, m, &cfg, error)
}

/// Bounds `mu^2 <= L*L <= ||L||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub mu2: f64,
    pub l2norm: f64,
    /// Set when the estimate did not reach its tolerance.
    #[serde(default)]
    pub approximate: bool,
}

impl SpectralBounds {
    pub fn new(mu2: f64, l2norm: f64) -> Result<Self> {
        if !(mu2 >= 0.0) || !(l2norm >= mu2) {
            return Err(invalid(format!("need 0 <= mu2 <= L2norm, got {mu2}, {l2norm}")));
        }
        Ok(SpectralBounds { mu2, l2norm, approximate: false })
    }
}

/// `2 / (mu^2 + ||L||^2)`.
pub fn gamma_star(b: &SpectralBounds) -> Result<f64> {
    if !(b.l2norm > 0.0) {
        return Err(invalid("operator norm must be positive"));
    }
    Ok(2.0 / (b.mu2 + b.l2norm))
}

/// `max(|1 - gamma ||L||^2|, 1 - gamma mu^2)`.
pub fn contraction_norm(gamma: f64, b: &SpectralBounds) -> f64 {
    (1.0 - gamma * b.l2norm).abs().max(1.0 - gamma * b.mu2)
}

/// `min(gamma mu^2, 2 - gamma ||L||^2)`; non-positive means no contraction.
pub fn convergence_rate(gamma: f64, b: &SpectralBounds) -> f64 {
    (gamma * b.mu2).min(2.0 - gamma * b.l2norm)
}

const POWER_TOL: f64 = 1e-6;
const POWER_CAP: usize = 500;

/// Power iteration for the top of the spectrum of `normal`, from `trials`
/// seeded random starts; `mu2` is taken as given.
pub fn estimate_bounds_with(
    n: usize,
    normal: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    dot: &dyn Fn(&[f64], &[f64]) -> f64,
    trials: usize,
    seed: u64,
    mu2: f64,
) -> Result<SpectralBounds> {
    if n == 0 || trials == 0 {
        return Err(invalid("need a nonempty space and at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let mut converged_all = true;
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut last = f64::NAN;
        let mut converged = false;
        for _ in 0..POWER_CAP {
            let nx = dot(&x, &x).sqrt();
            if nx == 0.0 {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let y = normal(&x)?;
            let q = dot(&y, &x);
            best = best.max(q);
            if (q - last).abs() <= POWER_TOL * q.abs() {
                converged = true;
                break;
            }
            last = q;
            x = y;
        }
        converged_all &= converged;
    }
    Ok(SpectralBounds { mu2: mu2.min(best), l2norm: best, approximate: !converged_all })
}

pub fn estimate_bounds<O: LinearOperator + ?Sized>(op: &O, trials: usize, seed: u64) -> Result<SpectralBounds> {
    estimate_bounds_with(op.model_len(), &|x| op.normal(x), &|a, b| op.model_dot(a, b), trials, seed, 0.0)
}

/// `(1 - (1 - gamma lambda^2)^N) / lambda`, with value 0 at `lambda = 0`.
pub fn g_n(gamma: f64, n: usize, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let x = gamma * lambda * lambda;
    let one_minus_pow = if x < 1.0 { -((n as f64) * (-x).ln_1p()).exp_m1() } else { 1.0 - (1.0 - x).powi(n as i32) };
    one_minus_pow / lambda
}

pub fn g_n_curve(gamma: f64, n: usize, lambdas: &[f64]) -> Vec<f64> {
    lambdas.iter().map(|&l| g_n(gamma, n, l)).collect()
}

/// Location and value of the maximum of `g_N` on `[0, sqrt(2/gamma)]`.
pub fn g_n_max(gamma: f64, n: usize) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || n == 0 {
        return Err(invalid("need gamma > 0 and N >= 1"));
    }
    const SAMPLES: usize = 2048;
    let hi = (2.0 / gamma).sqrt();
    let h = hi / (SAMPLES - 1) as f64;
    let (mut best_i, mut best) = (0, 0.0);
    for i in 0..SAMPLES {
        let v = g_n(gamma, n, i as f64 * h);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut a = (best_i as f64 - 1.0).max(0.0) * h;
    let mut b = ((best_i + 1) as f64 * h).min(hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (g_n(gamma, n, c), g_n(gamma, n, d));
    for _ in 0..200 {
        if (b - a) <= 1e-14 * hi {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g_n(gamma, n, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g_n(gamma, n, d);
        }
    }
    let x = 0.5 * (a + b);
    let v = g_n(gamma, n, x);
    Ok(if v >= best { (x, v) } else { (best_i as f64 * h, best) })
}
