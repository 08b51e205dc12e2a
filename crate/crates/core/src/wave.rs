//! Leapfrog solvers for the acoustic wave equation on a box.
//!
//! Forward problems carry homogeneous Neumann conditions through mirror
//! ghost nodes. The adjoint injects Neumann data through the same ghosts and
//! runs backward in time; the reversal solver pins Dirichlet data on a subset
//! of the perimeter and mirrors elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fields::{BoundaryTrace, GammaMask, GridSpec, ScalarField};

const FINITE_CHECK_EVERY: usize = 32;

/// Two consecutive time levels `(u^n, u^{n-1})` of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub current: ScalarField,
    pub previous: ScalarField,
    pub step: usize,
}

/// Discrete energy between levels `step` and `step + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
}

/// What a forward solve keeps besides the boundary trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Record {
    pub full: bool,
    pub energy: bool,
}

impl Record {
    pub const TRACE: Record = Record { full: false, energy: false };
    pub const FULL: Record = Record { full: true, energy: false };
    pub const ENERGY: Record = Record { full: false, energy: true };
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub trace: BoundaryTrace,
    /// Every time level `0..=nt`, when requested.
    pub frames: Option<Vec<ScalarField>>,
    pub energy: Option<Vec<EnergySample>>,
    /// Levels `nt` and `nt - 1`.
    pub state: WaveState,
}

/// Discretization of the backward Neumann problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjointScheme {
    /// Ghost data taken at the level being stepped from, output `-(v^1 - v^0)/dt`.
    GhostLevel,
    /// Exact transpose of the forward trace map in the weighted inner products.
    #[default]
    Transpose,
}

/// Which perimeter nodes a reversal solve pins to Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pinning<'a> {
    /// Every boundary node.
    Full,
    /// Only nodes inside Gamma; mirror ghosts elsewhere.
    Partial(&'a GammaMask),
    /// No pinned nodes (homogeneous Neumann).
    None,
}

/// Solver bound to one grid and one sound speed.
#[derive(Debug, Clone)]
pub struct WaveSolver {
    grid: GridSpec,
    c2: Vec<f64>,
    perimeter: Vec<usize>,
    /// `ds / (w dx dy)` for each perimeter node, `w` its trapezoid factor.
    injection: Vec<f64>,
}

impl WaveSolver {
    pub fn new(grid: GridSpec, c: &ScalarField) -> Result<Self> {
        if !c.grid().same_space(&grid) {
            return Err(Error::GridMismatch("sound speed lives on a different grid".into()));
        }
        if !c.values().iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(invalid("sound speed must be positive and finite"));
        }
        grid.check_cfl(c.max())?;
        let perimeter = grid.perimeter_indices();
        let injection = (0..grid.perimeter_len())
            .map(|k| {
                let (i, j) = grid.perimeter_node(k);
                grid.boundary_spacing() / grid.quadrature_weight(i, j)
            })
            .collect();
        Ok(WaveSolver { grid, c2: c.values().iter().map(|v| v * v).collect(), perimeter, injection })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn check_field(&self, f: &ScalarField, what: &str) -> Result<()> {
        if !f.grid().same_space(&self.grid) {
            return Err(Error::GridMismatch(format!("{what} lives on a different grid")));
        }
        if !f.is_finite() {
            return Err(invalid(format!("{what} has non-finite values")));
        }
        Ok(())
    }

    fn check_trace(&self, g: &BoundaryTrace) -> Result<()> {
        let tg = g.grid();
        if !tg.same_space(&self.grid) || tg.nt != self.grid.nt || tg.dt != self.grid.dt {
            return Err(Error::GridMismatch("trace sampled on a different space-time grid".into()));
        }
        Ok(())
    }

    fn field(&self, values: Vec<f64>) -> ScalarField {
        ScalarField::from_values(self.grid, values).expect("solver keeps fields consistent")
    }

    /// `next = a*cur - b*prev + s * dt^2 c^2 lap(cur)` with Neumann mirrors.
    fn step(&self, prev: &[f64], cur: &[f64], next: &mut [f64], a: f64, b: f64, s: f64) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let sx = s * g.dt * g.dt / (g.dx * g.dx);
        let sy = s * g.dt * g.dt / (g.dy * g.dy);
        let c2 = &self.c2;
        exec::for_each_row(next, nx, |j, row| {
            let base = j * nx;
            let up = if j + 1 == ny { base - nx } else { base + nx };
            let down = if j == 0 { base + nx } else { base - nx };
            let row_cur = &cur[base..base + nx];
            for (i, out) in row.iter_mut().enumerate() {
                let k = base + i;
                let left = if i == 0 { row_cur[1] } else { row_cur[i - 1] };
                let right = if i + 1 == nx { row_cur[nx - 2] } else { row_cur[i + 1] };
                let u = row_cur[i];
                let lap = sx * (left + right - 2.0 * u) + sy * (cur[up + i] + cur[down + i] - 2.0 * u);
                *out = a * u - b * prev[k] + c2[k] * lap;
            }
        });
    }

    fn check_finite(values: &[f64], step: usize) -> Result<()> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { step })
        }
    }

    /// Forward Neumann problem with `u(0) = f`, `u_t(0) = 0`.
    pub fn forward(&self, f: &ScalarField, record: Record) -> Result<ForwardOutput> {
        self.check_field(f, "initial field")?;
        let g = self.grid;
        let p = self.perimeter.len();
        let mut trace = vec![0.0; (g.nt + 1) * p];
        let mut frames = record.full.then(|| Vec::with_capacity(g.nt + 1));
        let mut energy = record.energy.then(|| Vec::with_capacity(g.nt));

        let mut prev = f.values().to_vec();
        let mut cur = vec![0.0; g.len()];
        self.step(&prev, &prev, &mut cur, 1.0, 0.0, 0.5);
        let mut next = vec![0.0; g.len()];
        self.sample(&prev, &mut trace[..p]);
        if let Some(fr) = frames.as_mut() {
            fr.push(self.field(prev.clone()));
        }
        for n in 1..=g.nt {
            if let Some(e) = energy.as_mut() {
                e.push(EnergySample { step: n - 1, time: (n as f64 - 0.5) * g.dt, energy: self.energy(&cur, &prev) });
            }
            self.sample(&cur, &mut trace[n * p..(n + 1) * p]);
            if let Some(fr) = frames.as_mut() {
                fr.push(self.field(cur.clone()));
            }
            if n % FINITE_CHECK_EVERY == 0 || n == g.nt {
                Self::check_finite(&cur, n)?;
            }
            if n == g.nt {
                break;
            }
            self.step(&prev, &cur, &mut next, 2.0, 1.0, 1.0);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        let trace = BoundaryTrace::from_values(g, GammaMask::full(&g), trace)?;
        let state = WaveState { current: self.field(cur), previous: self.field(prev), step: g.nt };
        Ok(ForwardOutput { trace, frames, energy, state })
    }

    fn sample(&self, u: &[f64], out: &mut [f64]) {
        for (o, &idx) in out.iter_mut().zip(&self.perimeter) {
            *o = u[idx];
        }
    }

    /// Conserved leapfrog energy between levels `a = u^{n+1}` and `b = u^n`:
    /// kinetic part in the `c^-2` trapezoid metric plus the edge-weighted
    /// Dirichlet form `D(u^{n+1}, u^n)`.
    pub fn energy(&self, a: &[f64], b: &[f64]) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for j in 0..ny {
            let wy = if j == 0 || j + 1 == ny { 0.5 } else { 1.0 };
            for i in 0..nx {
                let k = j * nx + i;
                let wx = if i == 0 || i + 1 == nx { 0.5 } else { 1.0 };
                let v = (a[k] - b[k]) / g.dt;
                kinetic += wx * wy * v * v / self.c2[k];
                if i + 1 < nx {
                    potential += wy * (a[k + 1] - a[k]) * (b[k + 1] - b[k]) / (g.dx * g.dx);
                }
                if j + 1 < ny {
                    potential += wx * (a[k + nx] - a[k]) * (b[k + nx] - b[k]) / (g.dy * g.dy);
                }
            }
        }
        0.5 * (kinetic + potential) * g.dx * g.dy
    }

    fn inject(&self, gk: &[f64], scale: f64, out: &mut [f64]) {
        for ((&idx, &w), &v) in self.perimeter.iter().zip(&self.injection).zip(gk) {
            out[idx] += scale * self.c2[idx] * w * v;
        }
    }

    /// Backward Neumann problem driven by `g`, returning `-v_t` at `t = 0`.
    pub fn adjoint(&self, g: &BoundaryTrace, scheme: AdjointScheme) -> Result<ScalarField> {
        self.check_trace(g)?;
        let grid = self.grid;
        let n = grid.len();
        let dt = grid.dt;
        let dt2 = dt * dt;
        let mut later = vec![0.0; n]; // v^{k+2}
        let mut cur = vec![0.0; n]; // v^{k+1}
        let mut next = vec![0.0; n];
        match scheme {
            AdjointScheme::Transpose => {
                for k in (0..=grid.nt).rev() {
                    self.step(&later, &cur, &mut next, 2.0, 1.0, 1.0);
                    self.inject(g.row(k), dt2, &mut next);
                    if k % FINITE_CHECK_EVERY == 0 {
                        Self::check_finite(&next, k)?;
                    }
                    std::mem::swap(&mut later, &mut cur);
                    std::mem::swap(&mut cur, &mut next);
                }
                // cur = v^0, later = v^1.
                let mut lap = vec![0.0; n];
                let zero = vec![0.0; n];
                self.step(&zero, &later, &mut lap, 0.0, 0.0, 1.0);
                let out = (0..n).map(|i| (cur[i] - later[i]) / dt - 0.5 * lap[i] / dt).collect();
                Ok(self.field(out))
            }
            AdjointScheme::GhostLevel => {
                // v^{nt} = 0 and v_t = 0: first step uses the half-weight Taylor update.
                let zero = vec![0.0; n];
                self.step(&zero, &cur, &mut next, 1.0, 0.0, 0.5);
                self.inject(g.row(grid.nt), 0.5 * dt2, &mut next);
                std::mem::swap(&mut later, &mut cur);
                std::mem::swap(&mut cur, &mut next);
                for k in (0..grid.nt.saturating_sub(1)).rev() {
                    self.step(&later, &cur, &mut next, 2.0, 1.0, 1.0);
                    self.inject(g.row(k + 1), dt2, &mut next);
                    if k % FINITE_CHECK_EVERY == 0 {
                        Self::check_finite(&next, k)?;
                    }
                    std::mem::swap(&mut later, &mut cur);
                    std::mem::swap(&mut cur, &mut next);
                }
                let out = (0..n).map(|i| (cur[i] - later[i]) / dt).collect();
                Ok(self.field(out))
            }
        }
    }

    fn pinned_nodes(&self, pinning: Pinning<'_>) -> Vec<(usize, usize)> {
        match pinning {
            Pinning::Full => self.perimeter.iter().copied().enumerate().collect(),
            Pinning::Partial(gamma) => {
                self.perimeter.iter().copied().enumerate().filter(|(k, _)| gamma.contains(*k)).collect()
            }
            Pinning::None => Vec::new(),
        }
    }

    /// Backward solve from level `start` with `v(start) = terminal`,
    /// `v_t(start) = 0` and Dirichlet data `h` on the pinned nodes for every
    /// earlier level. Returns `v(0)`.
    pub fn dirichlet_reversal_level(
        &self,
        h: &BoundaryTrace,
        terminal: &ScalarField,
        start: usize,
        pinning: Pinning<'_>,
    ) -> Result<ScalarField> {
        self.check_trace(h)?;
        self.check_field(terminal, "terminal field")?;
        if start > self.grid.nt {
            return Err(invalid(format!("start level {start} beyond nt = {}", self.grid.nt)));
        }
        if start == 0 {
            return Ok(terminal.clone());
        }
        let pinned = self.pinned_nodes(pinning);
        let n = self.grid.len();
        let mut later = terminal.values().to_vec();
        let mut cur = vec![0.0; n];
        self.step(&later, &later, &mut cur, 1.0, 0.0, 0.5);
        let row = h.row(start - 1);
        for &(k, idx) in &pinned {
            cur[idx] = row[k];
        }
        let mut next = vec![0.0; n];
        for level in (0..start - 1).rev() {
            self.step(&later, &cur, &mut next, 2.0, 1.0, 1.0);
            let row = h.row(level);
            for &(k, idx) in &pinned {
                next[idx] = row[k];
            }
            if level % FINITE_CHECK_EVERY == 0 {
                Self::check_finite(&next, level)?;
            }
            std::mem::swap(&mut later, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(self.field(cur))
    }

    /// [`Self::dirichlet_reversal_level`] starting from time `tau`
    /// (rounded to the nearest level).
    pub fn dirichlet_reversal(
        &self,
        h: &BoundaryTrace,
        terminal: &ScalarField,
        tau: f64,
        pinning: Pinning<'_>,
    ) -> Result<ScalarField> {
        let start = self.level_of(tau)?;
        self.dirichlet_reversal_level(h, terminal, start, pinning)
    }

    /// Nearest time level to `tau`, rejecting times outside `[0, T]`.
    pub fn level_of(&self, tau: f64) -> Result<usize> {
        let g = &self.grid;
        if !(tau >= 0.0) || tau > g.final_time() * (1.0 + 1e-12) {
            return Err(invalid(format!("time {tau} outside [0, {}]", g.final_time())));
        }
        Ok(((tau / g.dt).round() as usize).min(g.nt))
    }

    /// Run the leapfrog recursion backward from a two-level state down to
    /// levels `(1, 0)`. With [`Pinning::None`] this inverts [`Self::forward`]
    /// exactly up to round-off; otherwise pinned nodes take values from `h`.
    pub fn reverse_from_state(
        &self,
        state: &WaveState,
        h: Option<&BoundaryTrace>,
        pinning: Pinning<'_>,
    ) -> Result<WaveState> {
        self.check_field(&state.current, "state")?;
        self.check_field(&state.previous, "state")?;
        if state.step == 0 {
            return Err(invalid("state at level 0 has no earlier level"));
        }
        let pinned = self.pinned_nodes(pinning);
        if !pinned.is_empty() {
            let h = h.ok_or_else(|| invalid("pinned reversal needs boundary data"))?;
            self.check_trace(h)?;
        }
        let mut later = state.current.values().to_vec();
        let mut cur = state.previous.values().to_vec();
        let mut next = vec![0.0; self.grid.len()];
        for level in (0..state.step - 1).rev() {
            self.step(&later, &cur, &mut next, 2.0, 1.0, 1.0);
            if let Some(h) = h {
                let row = h.row(level);
                for &(k, idx) in &pinned {
                    next[idx] = row[k];
                }
            }
            std::mem::swap(&mut later, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Self::check_finite(&cur, 0)?;
        Ok(WaveState { current: self.field(later), previous: self.field(cur), step: 1 })
    }

    /// `c^2 Δ_h u` with Neumann mirrors.
    pub fn wave_operator(&self, u: &ScalarField) -> Result<ScalarField> {
        self.check_field(u, "field")?;
        let mut out = vec![0.0; self.grid.len()];
        let zero = vec![0.0; self.grid.len()];
        self.step(&zero, u.values(), &mut out, 0.0, 0.0, 1.0);
        let s = 1.0 / (self.grid.dt * self.grid.dt);
        Ok(self.field(out.into_iter().map(|v| v * s).collect()))
    }
}

/// Forward trace of `f`.
pub fn forward_solve(f: &ScalarField, c: &ScalarField, grid: &GridSpec, record: Record) -> Result<ForwardOutput> {
    WaveSolver::new(*grid, c)?.forward(f, record)
}

pub fn adjoint_solve(
    g: &BoundaryTrace,
    c: &ScalarField,
    grid: &GridSpec,
    scheme: AdjointScheme,
) -> Result<ScalarField> {
    WaveSolver::new(*grid, c)?.adjoint(g, scheme)
}

pub fn dirichlet_reversal_solve(
    h: &BoundaryTrace,
    terminal: &ScalarField,
    c: &ScalarField,
    grid: &GridSpec,
    stop_at: f64,
) -> Result<ScalarField> {
    WaveSolver::new(*grid, c)?.dirichlet_reversal(h, terminal, stop_at, Pinning::Full)
}
