use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::grid::{GridSpec, Side};

/// A contiguous piece of one side, as fractions of the side length measured
/// in the counterclockwise direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideSpan {
    pub side: Side,
    #[serde(default)]
    pub from: f64,
    #[serde(default = "one")]
    pub to: f64,
}

fn one() -> f64 {
    1.0
}

impl SideSpan {
    pub fn whole(side: Side) -> Self {
        SideSpan { side, from: 0.0, to: 1.0 }
    }
}

/// Membership of perimeter nodes in the measured set Gamma, with an optional
/// upper bound on the measured time window.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMask {
    flags: Vec<bool>,
    t_max: Option<f64>,
}

impl GammaMask {
    pub fn full(grid: &GridSpec) -> Self {
        GammaMask { flags: vec![true; grid.perimeter_len()], t_max: None }
    }

    pub fn from_flags(flags: Vec<bool>) -> Result<Self> {
        if !flags.iter().any(|&f| f) {
            return Err(invalid("Gamma must contain at least one boundary node"));
        }
        Ok(GammaMask { flags, t_max: None })
    }

    pub fn from_spans(grid: &GridSpec, spans: &[SideSpan]) -> Result<Self> {
        let mut flags = vec![false; grid.perimeter_len()];
        for span in spans {
            if !(0.0..=1.0).contains(&span.from) || !(0.0..=1.0).contains(&span.to) || span.from > span.to {
                return Err(invalid(format!("bad side span {span:?}")));
            }
            let n = grid.side_len(span.side);
            let offset = grid.side_offset(span.side);
            for q in 0..n {
                let s = q as f64 / n as f64;
                if s >= span.from - 1e-9 && s <= span.to + 1e-9 {
                    flags[offset + q] = true;
                }
            }
        }
        Self::from_flags(flags)
    }

    /// Bottom and left sides plus the adjoining 20% of the right and top sides.
    pub fn bottom_left_plus(grid: &GridSpec, fraction: f64) -> Result<Self> {
        Self::from_spans(grid, &Self::bottom_left_spans(fraction))
    }

    pub fn bottom_left_spans(fraction: f64) -> Vec<SideSpan> {
        vec![
            SideSpan::whole(Side::Bottom),
            SideSpan::whole(Side::Left),
            SideSpan { side: Side::Right, from: 0.0, to: fraction },
            SideSpan { side: Side::Top, from: 1.0 - fraction, to: 1.0 },
        ]
    }

    pub fn with_time_window(mut self, t_max: Option<f64>) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn t_max(&self) -> Option<f64> {
        self.t_max
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn contains(&self, k: usize) -> bool {
        self.flags[k]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_full(&self) -> bool {
        self.t_max.is_none() && self.flags.iter().all(|&f| f)
    }

    /// Whether sample `(n, k)` is measured.
    pub fn active(&self, grid: &GridSpec, n: usize, k: usize) -> bool {
        self.flags[k] && self.t_max.is_none_or(|t| grid.time(n) <= t + 1e-12)
    }

    pub fn side_fully_inside(&self, grid: &GridSpec, side: Side) -> bool {
        let off = grid.side_offset(side);
        (off..off + grid.side_len(side)).all(|k| self.flags[k])
    }
}

/// Samples of a function on `[0, T] x boundary`: `nt + 1` time levels by
/// perimeter nodes, identically zero outside Gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    grid: GridSpec,
    gamma: GammaMask,
    values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: GridSpec, gamma: GammaMask) -> Self {
        let n = (grid.nt + 1) * grid.perimeter_len();
        BoundaryTrace { grid, gamma, values: vec![0.0; n] }
    }

    /// Build from raw samples; samples outside Gamma are zeroed.
    pub fn from_values(grid: GridSpec, gamma: GammaMask, values: Vec<f64>) -> Result<Self> {
        let expected = (grid.nt + 1) * grid.perimeter_len();
        if values.len() != expected {
            return Err(Error::GridMismatch(format!("trace needs {expected} samples, got {}", values.len())));
        }
        if gamma.flags.len() != grid.perimeter_len() {
            return Err(Error::GridMismatch("Gamma mask length differs from perimeter".into()));
        }
        let mut t = BoundaryTrace { grid, gamma, values };
        t.apply_mask();
        Ok(t)
    }

    /// Sample `h(t, s)` at every time level and perimeter node.
    pub fn from_fn(grid: GridSpec, gamma: GammaMask, h: impl Fn(f64, usize) -> f64) -> Self {
        let p = grid.perimeter_len();
        let mut values = Vec::with_capacity((grid.nt + 1) * p);
        for n in 0..=grid.nt {
            let t = grid.time(n);
            for k in 0..p {
                values.push(h(t, k));
            }
        }
        let mut tr = BoundaryTrace { grid, gamma, values };
        tr.apply_mask();
        tr
    }

    fn apply_mask(&mut self) {
        let p = self.grid.perimeter_len();
        for n in 0..=self.grid.nt {
            for k in 0..p {
                if !self.gamma.active(&self.grid, n, k) {
                    self.values[n * p + k] = 0.0;
                }
            }
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn gamma(&self) -> &GammaMask {
        &self.gamma
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn perimeter_len(&self) -> usize {
        self.grid.perimeter_len()
    }

    pub fn levels(&self) -> usize {
        self.grid.nt + 1
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let p = self.perimeter_len();
        &self.values[n * p..(n + 1) * p]
    }

    #[inline]
    pub fn at(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.perimeter_len() + k]
    }

    /// Restrict to a (sub)set Gamma, zeroing everything outside it.
    pub fn restricted(&self, gamma: &GammaMask) -> Result<BoundaryTrace> {
        BoundaryTrace::from_values(self.grid, gamma.clone(), self.values.clone())
    }

    /// Multiply each time level by a weight.
    pub fn time_weighted(&self, weights: &[f64]) -> Result<BoundaryTrace> {
        if weights.len() != self.levels() {
            return Err(Error::GridMismatch("time weight length".into()));
        }
        let p = self.perimeter_len();
        let mut out = self.clone();
        for (n, w) in weights.iter().enumerate() {
            for v in &mut out.values[n * p..(n + 1) * p] {
                *v *= w;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BoundaryTrace {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out.apply_mask();
        out
    }

    pub fn scaled(&self, a: f64) -> BoundaryTrace {
        self.map(|v| a * v)
    }

    fn check_compatible(&self, other: &BoundaryTrace) -> Result<()> {
        if !self.grid.same_space(&other.grid) || self.grid.nt != other.grid.nt {
            return Err(Error::GridMismatch("traces on different grids".into()));
        }
        Ok(())
    }

    /// Difference; the result keeps `self`'s Gamma.
    pub fn sub(&self, other: &BoundaryTrace) -> Result<BoundaryTrace> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        BoundaryTrace::from_values(self.grid, self.gamma.clone(), values)
    }

    pub fn add(&self, other: &BoundaryTrace) -> Result<BoundaryTrace> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        BoundaryTrace::from_values(self.grid, self.gamma.clone(), values)
    }

    /// Inner product in `L^2((0,T) x boundary)`: each sample carries `dt * ds`.
    pub fn dot(&self, other: &BoundaryTrace) -> Result<f64> {
        self.check_compatible(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.dt * self.grid.boundary_spacing())
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.dt * self.grid.boundary_spacing()).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time-by-arclength block of one side (`levels x side_len`, row-major).
    pub fn side_block(&self, side: Side) -> Vec<f64> {
        let p = self.perimeter_len();
        let off = self.grid.side_offset(side);
        let len = self.grid.side_len(side);
        let mut out = Vec::with_capacity(self.levels() * len);
        for n in 0..self.levels() {
            out.extend_from_slice(&self.values[n * p + off..n * p + off + len]);
        }
        out
    }

    pub(crate) fn set_side_block(&mut self, side: Side, block: &[f64]) {
        let p = self.perimeter_len();
        let off = self.grid.side_offset(side);
        let len = self.grid.side_len(side);
        for n in 0..self.levels() {
            self.values[n * p + off..n * p + off + len].copy_from_slice(&block[n * len..(n + 1) * len]);
        }
        self.apply_mask();
    }
}

/// Linearly interpolate a trace onto the time levels and perimeter nodes of a
/// coarser grid of the same box.
pub fn resample_trace(fine: &BoundaryTrace, coarse: &GridSpec) -> Result<BoundaryTrace> {
    let fg = fine.grid();
    if fg.extent != coarse.extent {
        return Err(Error::GridMismatch("resampling requires the same box".into()));
    }
    if fg.dx > coarse.dx * (1.0 + 1e-12) || fg.dt > coarse.dt * (1.0 + 1e-12) {
        return Err(invalid("source trace must be at least as fine as the target grid"));
    }
    let t_end = coarse.final_time();
    if t_end > fg.final_time() * (1.0 + 1e-12) + 1e-14 {
        return Err(invalid(format!(
            "target final time {t_end} extrapolates beyond source final time {}",
            fg.final_time()
        )));
    }
    let perimeter = 2.0 * (fg.extent.width() + fg.extent.height());
    let pf = fg.perimeter_len();
    let pc = coarse.perimeter_len();

    // Arclength interpolation stencil (periodic around the perimeter).
    let space: Vec<(usize, usize, f64)> = (0..pc)
        .map(|k| {
            let s = (k as f64 * coarse.dx).min(perimeter);
            let pos = s / fg.dx;
            let k0 = (pos.floor() as usize).min(pf - 1);
            let w = (pos - k0 as f64).clamp(0.0, 1.0);
            (k0, (k0 + 1) % pf, w)
        })
        .collect();

    let mut values = Vec::with_capacity((coarse.nt + 1) * pc);
    for n in 0..=coarse.nt {
        let pos = (coarse.time(n) / fg.dt).min(fg.nt as f64);
        let n0 = (pos.floor() as usize).min(fg.nt);
        let n1 = (n0 + 1).min(fg.nt);
        let wt = (pos - n0 as f64).clamp(0.0, 1.0);
        for &(k0, k1, ws) in &space {
            let a = (1.0 - ws) * fine.at(n0, k0) + ws * fine.at(n0, k1);
            let b = (1.0 - ws) * fine.at(n1, k0) + ws * fine.at(n1, k1);
            values.push((1.0 - wt) * a + wt * b);
        }
    }

    // Carry Gamma over by nearest-node lookup.
    let flags: Vec<bool> = space
        .iter()
        .map(|&(k0, k1, w)| if w < 0.5 { fine.gamma().contains(k0) } else { fine.gamma().contains(k1) })
        .collect();
    let gamma = GammaMask::from_flags(flags)?.with_time_window(fine.gamma().t_max());
    BoundaryTrace::from_values(*coarse, gamma, values)
}
