//! Measurement operator, its adjoint, time windows, noise and the
//! boundary-data frequency filter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{BoundaryTrace, GammaMask, GridSpec, ScalarField, Side};
use crate::landweber::LinearOperator;
use crate::wave::{AdjointScheme, Record, WaveSolver};

/// Weighting of the measured data in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeWindow {
    /// Weight one everywhere.
    None,
    /// Indicator of `[0, T - steps*dt]`.
    Cutoff { steps: usize },
    /// One up to `(1 - fraction) T`, then a cosine taper to zero at `T`.
    Taper { fraction: f64 },
}

impl Default for TimeWindow {
    fn default() -> Self {
        TimeWindow::Cutoff { steps: 2 }
    }
}

impl TimeWindow {
    pub fn weights(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let t_end = grid.final_time();
        let w = match *self {
            TimeWindow::None => vec![1.0; grid.nt + 1],
            TimeWindow::Cutoff { steps } => {
                let last = grid.nt.saturating_sub(steps);
                (0..=grid.nt).map(|n| if n <= last { 1.0 } else { 0.0 }).collect()
            }
            TimeWindow::Taper { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(invalid(format!("taper fraction must lie in (0, 1], got {fraction}")));
                }
                let start = (1.0 - fraction) * t_end;
                (0..=grid.nt)
                    .map(|n| {
                        let t = grid.time(n);
                        if t <= start {
                            1.0
                        } else {
                            let s = ((t - start) / (t_end - start)).min(1.0);
                            0.5 * (1.0 + (std::f64::consts::PI * s).cos())
                        }
                    })
                    .collect()
            }
        };
        Ok(w)
    }
}

/// Per-side Fourier multiplier on `(time, arclength)` data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Temporal low-pass edge as a fraction of the Nyquist frequency.
    pub cutoff: f64,
    /// Keep only `|omega_t| >= cone_speed * |omega_s|` when set.
    #[serde(default)]
    pub cone_speed: Option<f64>,
    /// Width of the raised-cosine transitions relative to each edge.
    #[serde(default = "default_taper")]
    pub taper: f64,
}

fn default_taper() -> f64 {
    0.1
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { cutoff: 0.5, cone_speed: None, taper: default_taper() }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(invalid(format!("filter cutoff must lie in (0, 1], got {}", self.cutoff)));
        }
        if !(0.0..1.0).contains(&self.taper) {
            return Err(invalid(format!("filter taper must lie in [0, 1), got {}", self.taper)));
        }
        if let Some(c) = self.cone_speed {
            if !(c > 0.0) {
                return Err(invalid(format!("cone speed must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Multiplier at temporal frequency `ft` and spatial frequency `fs`
    /// (cycles per unit), given the temporal Nyquist frequency.
    pub fn mask(&self, ft: f64, fs: f64, nyquist_t: f64) -> f64 {
        let ft = ft.abs();
        let fs = fs.abs();
        let r = ft / (self.cutoff * nyquist_t);
        let mut m = falling_edge(r, self.taper);
        if let Some(c) = self.cone_speed {
            if fs > 0.0 {
                let q = ft / (c * fs);
                m *= rising_edge(q, self.taper);
            }
        }
        m
    }
}

/// One for `r <= 1 - taper`, zero for `r > 1`, raised cosine in between.
fn falling_edge(r: f64, taper: f64) -> f64 {
    if r <= 1.0 - taper {
        1.0
    } else if r > 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (r - (1.0 - taper)) / taper).cos())
    }
}

/// Zero for `q < 1 - taper`, one for `q >= 1`, raised cosine in between.
fn rising_edge(q: f64, taper: f64) -> f64 {
    if q >= 1.0 {
        1.0
    } else if q < 1.0 - taper {
        0.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (q - (1.0 - taper)) / taper).cos())
    }
}

fn signed_frequency(q: usize, n: usize, spacing: f64) -> f64 {
    let q = if q <= n / 2 { q as f64 } else { q as f64 - n as f64 };
    q / (n as f64 * spacing)
}

/// Filter each side independently; returns the output and the largest
/// imaginary part discarded by the inverse transform.
pub fn apply_filter_with_residual(m: &BoundaryTrace, spec: &FilterSpec) -> Result<(BoundaryTrace, f64)> {
    spec.validate()?;
    let grid = *m.grid();
    let rows = m.levels();
    let mut planner = FftPlanner::<f64>::new();
    let mut out = m.clone();
    let mut max_imag = 0.0f64;
    for side in Side::ALL {
        let cols = grid.side_len(side);
        let block = m.side_block(side);
        if block.iter().all(|&v| v == 0.0) {
            continue;
        }
        let mut data: Vec<Complex64> = block.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut planner, &mut data, rows, cols, false);
        let nyq = 0.5 / grid.dt;
        for a in 0..rows {
            let ft = signed_frequency(a, rows, grid.dt);
            for b in 0..cols {
                let fs = signed_frequency(b, cols, grid.boundary_spacing());
                data[a * cols + b] *= spec.mask(ft, fs, nyq);
            }
        }
        fft2(&mut planner, &mut data, rows, cols, true);
        let scale = 1.0 / (rows * cols) as f64;
        let filtered: Vec<f64> = data
            .iter()
            .map(|z| {
                max_imag = max_imag.max((z.im * scale).abs());
                z.re * scale
            })
            .collect();
        out.set_side_block(side, &filtered);
    }
    Ok((out, max_imag))
}

pub fn apply_filter(m: &BoundaryTrace, spec: &FilterSpec) -> Result<BoundaryTrace> {
    apply_filter_with_residual(m, spec).map(|(t, _)| t)
}

fn fft2(planner: &mut FftPlanner<f64>, data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let row_fft = if inverse { planner.plan_fft_inverse(cols) } else { planner.plan_fft_forward(cols) };
    for row in data.chunks_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = if inverse { planner.plan_fft_inverse(rows) } else { planner.plan_fft_forward(rows) };
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for b in 0..cols {
        for a in 0..rows {
            column[a] = data[a * cols + b];
        }
        col_fft.process(&mut column);
        for a in 0..rows {
            data[a * cols + b] = column[a];
        }
    }
}

/// Add i.i.d. `N(0, sigma^2)` samples to every measured entry.
pub fn add_noise(m: &BoundaryTrace, sigma: f64, seed: u64) -> Result<BoundaryTrace> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("noise level must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(m.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = *m.grid();
    let p = grid.perimeter_len();
    let mut values = m.values().to_vec();
    for n in 0..m.levels() {
        for k in 0..p {
            if m.gamma().active(&grid, n, k) {
                values[n * p + k] += normal.sample(&mut rng);
            }
        }
    }
    BoundaryTrace::from_values(grid, m.gamma().clone(), values)
}

/// Add the data of `src` onto `dst`, matched by position along each side in
/// perimeter order. The result is generally outside the range.
pub fn add_side_swap_perturbation(m: &BoundaryTrace, src: Side, dst: Side) -> Result<BoundaryTrace> {
    if src == dst {
        return Err(invalid("source and destination sides must differ"));
    }
    let grid = m.grid();
    for side in [src, dst] {
        if !m.gamma().side_fully_inside(grid, side) {
            return Err(invalid(format!("side {side:?} is not fully inside Gamma")));
        }
    }
    if grid.side_len(src) != grid.side_len(dst) {
        return Err(invalid("sides have different lengths"));
    }
    let a = m.side_block(src);
    let b = m.side_block(dst);
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let mut out = m.clone();
    out.set_side_block(dst, &sum);
    Ok(out)
}

/// Everything that shapes the measurement besides the wave solver.
#[derive(Debug, Clone)]
pub struct MeasurementConfig {
    pub gamma: GammaMask,
    /// Spatial cutoff, values in `[0, 1]`.
    pub interior_chi: ScalarField,
    /// Per-level weights in `[0, 1]`.
    pub time_weight: Vec<f64>,
    pub data_filter: Option<FilterSpec>,
    pub adjoint: AdjointScheme,
}

impl MeasurementConfig {
    /// Full boundary, no spatial cutoff, unit weights, no filter.
    pub fn plain(grid: &GridSpec) -> Self {
        MeasurementConfig {
            gamma: GammaMask::full(grid),
            interior_chi: ScalarField::constant(*grid, 1.0),
            time_weight: vec![1.0; grid.nt + 1],
            data_filter: None,
            adjoint: AdjointScheme::default(),
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.gamma.flags().len() != grid.perimeter_len() {
            return Err(Error::GridMismatch("Gamma mask length differs from perimeter".into()));
        }
        if !self.interior_chi.grid().same_space(grid) {
            return Err(Error::GridMismatch("cutoff lives on a different grid".into()));
        }
        if self.interior_chi.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("spatial cutoff must take values in [0, 1]"));
        }
        if self.time_weight.len() != grid.nt + 1 {
            return Err(Error::GridMismatch(format!(
                "time weight has {} entries, expected {}",
                self.time_weight.len(),
                grid.nt + 1
            )));
        }
        if self.time_weight.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("time weights must lie in [0, 1]"));
        }
        if let Some(f) = &self.data_filter {
            f.validate()?;
        }
        Ok(())
    }
}

/// The discrete measurement operator bound to a grid and a sound speed.
#[derive(Debug, Clone)]
pub struct Measurement {
    solver: WaveSolver,
    c: ScalarField,
    cfg: MeasurementConfig,
}

impl Measurement {
    pub fn new(grid: GridSpec, c: ScalarField, cfg: MeasurementConfig) -> Result<Self> {
        cfg.validate(&grid)?;
        let solver = WaveSolver::new(grid, &c)?;
        Ok(Measurement { solver, c, cfg })
    }

    pub fn grid(&self) -> &GridSpec {
        self.solver.grid()
    }

    pub fn speed(&self) -> &ScalarField {
        &self.c
    }

    pub fn config(&self) -> &MeasurementConfig {
        &self.cfg
    }

    pub fn solver(&self) -> &WaveSolver {
        &self.solver
    }

    /// Restrict to Gamma and apply the time weight.
    pub fn weight_data(&self, m: &BoundaryTrace) -> Result<BoundaryTrace> {
        m.restricted(&self.cfg.gamma)?.time_weighted(&self.cfg.time_weight)
    }

    /// Forward trace restricted to Gamma and weighted in time.
    pub fn apply_l(&self, f: &ScalarField) -> Result<BoundaryTrace> {
        let trace = self.solver.forward(f, Record::TRACE)?.trace;
        self.weight_data(&trace)
    }

    /// Adjoint: mask, optional filter (re-masked), backward solve, spatial cutoff.
    pub fn apply_lstar(&self, g: &BoundaryTrace) -> Result<ScalarField> {
        let mut data = self.weight_data(g)?;
        if let Some(spec) = &self.cfg.data_filter {
            data = self.weight_data(&apply_filter(&data, spec)?)?;
        }
        let v = self.solver.adjoint(&data, self.cfg.adjoint)?;
        v.mul(&self.cfg.interior_chi)
    }

    /// `chi L* L chi f`.
    pub fn apply_normal(&self, f: &ScalarField) -> Result<ScalarField> {
        let cut = f.mul(&self.cfg.interior_chi)?;
        self.apply_lstar(&self.apply_l(&cut)?)
    }

    fn field(&self, x: &[f64]) -> Result<ScalarField> {
        ScalarField::from_values(*self.grid(), x.to_vec())
    }

    fn trace(&self, y: &[f64]) -> Result<BoundaryTrace> {
        BoundaryTrace::from_values(*self.grid(), self.cfg.gamma.clone(), y.to_vec())
    }
}

/// Model space: fields with the `c^-2` trapezoid inner product. Data space:
/// traces with `dt * ds` weights. `forward` includes the spatial cutoff.
impl LinearOperator for Measurement {
    fn model_len(&self) -> usize {
        self.grid().len()
    }

    fn data_len(&self) -> usize {
        (self.grid().nt + 1) * self.grid().perimeter_len()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.field(x)?.mul(&self.cfg.interior_chi)?;
        Ok(self.apply_l(&f)?.into_values())
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_lstar(&self.trace(y)?)?.into_values())
    }

    fn model_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let g = self.grid();
        let mut s = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                let c = self.c.values()[k];
                s += g.quadrature_weight(i, j) * a[k] * b[k] / (c * c);
            }
        }
        s
    }

    fn data_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let g = self.grid();
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * g.dt * g.boundary_spacing()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{interior_cutoff, Extent};

    fn grid(nx: usize, t: f64) -> GridSpec {
        GridSpec::new(nx, Extent::default(), t, 1.0).unwrap()
    }

    #[test]
    fn time_windows() {
        let g = grid(21, 1.0);
        let cut = TimeWindow::Cutoff { steps: 2 }.weights(&g).unwrap();
        assert_eq!(cut.iter().filter(|&&w| w == 0.0).count(), 2);
        let taper = TimeWindow::Taper { fraction: 0.1 }.weights(&g).unwrap();
        assert_eq!(taper[0], 1.0);
        assert!(taper[g.nt].abs() < 1e-15);
        assert!(taper.windows(2).all(|w| w[1] <= w[0]));
        assert!(TimeWindow::Taper { fraction: 0.0 }.weights(&g).is_err());
    }

    #[test]
    fn filter_keeps_constants_and_is_real() {
        let g = grid(17, 1.0);
        let t = BoundaryTrace::from_fn(g, GammaMask::full(&g), |_, _| 0.75);
        let spec = FilterSpec { cutoff: 0.5, cone_speed: Some(1.0), taper: 0.1 };
        let (out, imag) = apply_filter_with_residual(&t, &spec).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.75).abs() < 1e-12));
        assert!(imag <= 1e-12);
    }

    #[test]
    fn binary_filter_is_idempotent_and_contracts() {
        let g = grid(17, 1.0);
        let t = BoundaryTrace::from_fn(g, GammaMask::full(&g), |t, k| {
            ((t * 13.0).sin() + (k as f64 * 1.3).cos()) * (t * 3.0).cos()
        });
        let spec = FilterSpec { cutoff: 0.4, cone_speed: Some(1.0), taper: 0.0 };
        let once = apply_filter(&t, &spec).unwrap();
        let twice = apply_filter(&once, &spec).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(once.norm() <= t.norm());
        assert!(once.norm() < 0.999 * t.norm());
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let g = grid(101, 4.0);
        let t = BoundaryTrace::zeros(g, GammaMask::full(&g));
        let a = add_noise(&t, 0.1, 7).unwrap();
        assert_eq!(a, add_noise(&t, 0.1, 7).unwrap());
        assert_ne!(a, add_noise(&t, 0.1, 8).unwrap());
        let n = a.values().len() as f64;
        assert!(n >= 1e5);
        let mean = a.values().iter().sum::<f64>() / n;
        let sd = (a.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 0.1).abs() < 0.003, "{sd}");
        assert_eq!(add_noise(&t, 0.0, 1).unwrap(), t);
    }

    #[test]
    fn side_swap() {
        let g = grid(11, 0.5);
        let t = BoundaryTrace::from_fn(g, GammaMask::full(&g), |t, k| t + k as f64);
        assert!(add_side_swap_perturbation(&t, Side::Top, Side::Top).is_err());
        let out = add_side_swap_perturbation(&t, Side::Left, Side::Bottom).unwrap();
        let diff = out.sub(&t).unwrap();
        let bottom = g.side_offset(Side::Bottom)..g.side_offset(Side::Bottom) + g.side_len(Side::Bottom);
        for n in 0..diff.levels() {
            for k in 0..g.perimeter_len() {
                if !bottom.contains(&k) {
                    assert_eq!(diff.at(n, k), 0.0);
                }
            }
        }
        let partial = GammaMask::bottom_left_plus(&g, 0.2).unwrap();
        assert!(add_side_swap_perturbation(&t.restricted(&partial).unwrap(), Side::Left, Side::Top).is_err());
    }

    #[test]
    fn lstar_support_and_masking() {
        let g = grid(21, 1.0);
        let c = ScalarField::constant(g, 1.0);
        let mut cfg = MeasurementConfig::plain(&g);
        cfg.gamma = GammaMask::bottom_left_plus(&g, 0.2).unwrap();
        cfg.interior_chi = interior_cutoff(&g, 0.1).unwrap();
        let m = Measurement::new(g, c.clone(), cfg.clone()).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (-(x * x + y * y) * 8.0).exp());
        let partial = m.apply_l(&f).unwrap();
        let full = Measurement::new(g, c, MeasurementConfig::plain(&g)).unwrap().apply_l(&f).unwrap();
        assert_eq!(partial, full.restricted(&cfg.gamma).unwrap());
        let back = m.apply_lstar(&full).unwrap();
        assert_eq!(back, m.apply_lstar(&partial).unwrap());
        for (v, chi) in back.values().iter().zip(cfg.interior_chi.values()) {
            if *chi == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }
}
