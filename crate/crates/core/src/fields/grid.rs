use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Axis-aligned spatial box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Extent {
    fn default() -> Self {
        Extent { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 }
    }
}

impl Extent {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// One of the four sides of the box, in counterclockwise perimeter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn index(self) -> usize {
        match self {
            Side::Bottom => 0,
            Side::Right => 1,
            Side::Top => 2,
            Side::Left => 3,
        }
    }
}

/// Uniform space-time discretization of a square box and `[0, nt*dt]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub extent: Extent,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub nt: usize,
}

const CFL_SLACK: f64 = 1e-12;

impl GridSpec {
    /// Grid with the largest stable time step `dt = dx / (sqrt(2) c_max)` and
    /// `nt = ceil(t_final / dt)`.
    pub fn new(nx: usize, extent: Extent, t_final: f64, c_max: f64) -> Result<Self> {
        if !(c_max > 0.0) || !c_max.is_finite() {
            return Err(invalid(format!("c_max must be positive, got {c_max}")));
        }
        let dx = Self::spacing(nx, &extent)?;
        Self::with_time_step(nx, extent, t_final, dx / (std::f64::consts::SQRT_2 * c_max))
    }

    /// Grid with an explicit time step (used for oversampled forward data).
    pub fn with_time_step(nx: usize, extent: Extent, t_final: f64, dt: f64) -> Result<Self> {
        let dx = Self::spacing(nx, &extent)?;
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(invalid(format!("final time must be positive, got {t_final}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        // Tolerate round-off when t_final is an exact multiple of dt.
        let nt = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
        Ok(GridSpec { nx, ny: nx, extent, dx, dy: dx, dt, nt })
    }

    fn spacing(nx: usize, extent: &Extent) -> Result<f64> {
        if nx < 3 {
            return Err(invalid(format!("need at least 3 nodes per axis, got {nx}")));
        }
        let (w, h) = (extent.width(), extent.height());
        if !(w > 0.0) || !(h > 0.0) {
            return Err(invalid("extent must have positive width and height"));
        }
        if ((w - h) / w).abs() > 1e-12 {
            return Err(invalid(format!("extent must be square, got {w} x {h}")));
        }
        Ok(w / (nx - 1) as f64)
    }

    pub fn final_time(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.extent.x_min + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.extent.y_min + j as f64 * self.dy
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Largest stable time step for the given maximum speed.
    pub fn cfl_limit(&self, c_max: f64) -> f64 {
        self.dx / (std::f64::consts::SQRT_2 * c_max)
    }

    pub fn check_cfl(&self, c_max: f64) -> Result<()> {
        let limit = self.cfl_limit(c_max);
        if self.dt > limit * (1.0 + CFL_SLACK) {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Same spatial layout (node counts and extent), ignoring time sampling.
    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.extent == other.extent
    }

    /// Trapezoid quadrature weight of node `(i, j)`: `dx*dy`, halved on edges,
    /// quartered at corners.
    #[inline]
    pub fn quadrature_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.dx * self.dy
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                w.push(self.quadrature_weight(i, j));
            }
        }
        w
    }

    /// Number of nodes on a side in the closed-open perimeter layout.
    pub fn side_len(&self, side: Side) -> usize {
        match side {
            Side::Bottom | Side::Top => self.nx - 1,
            Side::Right | Side::Left => self.ny - 1,
        }
    }

    pub fn perimeter_len(&self) -> usize {
        2 * (self.nx - 1) + 2 * (self.ny - 1)
    }

    /// Offset of a side's first node in the perimeter ordering.
    pub fn side_offset(&self, side: Side) -> usize {
        Side::ALL[..side.index()].iter().map(|s| self.side_len(*s)).sum()
    }

    /// Grid coordinates of perimeter node `k`.
    ///
    /// Order is counterclockwise starting at the bottom-left corner:
    /// bottom, right, top, left. Each corner belongs to the side it starts.
    pub fn perimeter_node(&self, k: usize) -> (usize, usize) {
        let (nx, ny) = (self.nx, self.ny);
        let (b, r, t) = (nx - 1, ny - 1, nx - 1);
        if k < b {
            (k, 0)
        } else if k < b + r {
            (nx - 1, k - b)
        } else if k < b + r + t {
            (nx - 1 - (k - b - r), ny - 1)
        } else {
            (0, ny - 1 - (k - b - r - t))
        }
    }

    pub fn perimeter_side(&self, k: usize) -> (Side, usize) {
        let mut rem = k;
        for side in Side::ALL {
            let n = self.side_len(side);
            if rem < n {
                return (side, rem);
            }
            rem -= n;
        }
        panic!("perimeter index {k} out of range");
    }

    /// Flat grid indices of every perimeter node, in perimeter order.
    pub fn perimeter_indices(&self) -> Vec<usize> {
        (0..self.perimeter_len())
            .map(|k| {
                let (i, j) = self.perimeter_node(k);
                self.index(i, j)
            })
            .collect()
    }

    /// Arclength spacing between consecutive perimeter nodes.
    pub fn boundary_spacing(&self) -> f64 {
        self.dx
    }
}
