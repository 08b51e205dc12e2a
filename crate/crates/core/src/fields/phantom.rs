//! Test objects: the Shepp–Logan head phantom and sums of Gaussians.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::field::ScalarField;
use super::grid::GridSpec;

/// One ellipse of the phantom: intensity, semi-axes, center, rotation (degrees).
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse { intensity, a, b, x0, y0, phi_deg }
}

/// The contrast-enhanced ten-ellipse Shepp–Logan table (Toft), values in [0, 1].
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Point evaluation of the ellipse stack.
pub fn shepp_logan_value(x: f64, y: f64) -> f64 {
    SHEPP_LOGAN.iter().filter(|el| el.contains(x, y)).map(|el| el.intensity).sum()
}

/// Rasterize the phantom at `supersample` times the grid resolution and
/// box-average each `supersample x supersample` block onto its node.
pub fn render_shepp_logan(grid: &GridSpec, supersample: usize) -> Result<ScalarField> {
    if supersample == 0 {
        return Err(invalid("supersample factor must be at least 1"));
    }
    let s = supersample as f64;
    let offsets: Vec<f64> = (0..supersample).map(|a| (a as f64 + 0.5) / s - 0.5).collect();
    let (dx, dy) = (grid.dx, grid.dy);
    Ok(ScalarField::from_fn(*grid, |x, y| {
        let mut acc = 0.0;
        for oy in &offsets {
            for ox in &offsets {
                acc += shepp_logan_value(x + ox * dx, y + oy * dy);
            }
        }
        acc / (s * s)
    }))
}

/// Isotropic Gaussian `amplitude * exp(-|x - center|^2 / width^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: (f64, f64),
    pub width: f64,
    pub amplitude: f64,
}

pub fn render_gaussians(grid: &GridSpec, blobs: &[Blob]) -> Result<ScalarField> {
    if let Some(b) = blobs.iter().find(|b| !(b.width > 0.0)) {
        return Err(invalid(format!("blob width must be positive, got {}", b.width)));
    }
    Ok(ScalarField::from_fn(*grid, |x, y| {
        blobs
            .iter()
            .map(|b| {
                let r2 = (x - b.center.0).powi(2) + (y - b.center.1).powi(2);
                b.amplitude * (-r2 / (b.width * b.width)).exp()
            })
            .sum()
    }))
}
