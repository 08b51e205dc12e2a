use crate::error::{invalid, Error, Result};

use super::grid::GridSpec;

/// A real function sampled on the nodes of a spatial grid (row-major in y).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField { grid, values: vec![value; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("expected {} samples, got {}", grid.len(), values.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite sample at index {k}")));
        }
        Ok(ScalarField { grid, values })
    }

    /// Sample `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Replace the time sampling carried with the field; spatial layout must match.
    pub fn with_grid(mut self, grid: GridSpec) -> Result<Self> {
        if !self.grid.same_space(&grid) {
            return Err(Error::GridMismatch("spatial layout differs".into()));
        }
        self.grid = grid;
        Ok(self)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if !self.grid.same_space(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.grid.nx, self.grid.ny, other.grid.nx, other.grid.ny
            )));
        }
        Ok(())
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) -> Result<()> {
        self.check_same_grid(other)?;
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
        Ok(())
    }
}

/// Inner product in `L^2(Omega, c^-2 dx)` with trapezoid weights.
pub fn weighted_dot(f: &ScalarField, g: &ScalarField, c: &ScalarField) -> Result<f64> {
    f.check_same_grid(g)?;
    f.check_same_grid(c)?;
    let grid = f.grid();
    let mut s = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            let ck = c.values[k];
            s += grid.quadrature_weight(i, j) * f.values[k] * g.values[k] / (ck * ck);
        }
    }
    Ok(s)
}

/// `||f||` in `L^2(Omega, c^-2 dx)`.
pub fn weighted_norm(f: &ScalarField, c: &ScalarField) -> Result<f64> {
    if c.values().iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("speed must be positive"));
    }
    Ok(weighted_dot(f, f, c)?.max(0.0).sqrt())
}

/// `||f - f_ref|| / ||f_ref||` in the weighted norm.
pub fn relative_error(f: &ScalarField, f_ref: &ScalarField, c: &ScalarField) -> Result<f64> {
    let denom = weighted_norm(f_ref, c)?;
    if denom == 0.0 {
        return Err(invalid("reference field has zero norm"));
    }
    Ok(weighted_norm(&f.sub(f_ref)?, c)? / denom)
}

/// Number of frame nodes removed on each side for a margin fraction.
pub fn cutoff_frame(grid: &GridSpec, margin_fraction: f64) -> usize {
    (margin_fraction * (grid.nx - 1) as f64 + 1e-9).floor() as usize
}

/// Indicator of the interior square left after removing a frame of
/// `floor(margin_fraction * (nx - 1))` nodes on every side.
pub fn interior_cutoff(grid: &GridSpec, margin_fraction: f64) -> Result<ScalarField> {
    if !(0.0..0.5).contains(&margin_fraction) {
        return Err(invalid(format!("margin fraction must be in [0, 0.5), got {margin_fraction}")));
    }
    let k = cutoff_frame(grid, margin_fraction);
    let mut out = ScalarField::zeros(*grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let inside = i >= k && j >= k && i + k < grid.nx && j + k < grid.ny;
            if inside {
                out.set(i, j, 1.0);
            }
        }
    }
    Ok(out)
}

/// Flat indices of nodes where a {0,1} mask is set, in row-major order.
pub fn mask_indices(mask: &ScalarField) -> Vec<usize> {
    mask.values().iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(k, _)| k).collect()
}
