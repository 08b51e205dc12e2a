use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::field::ScalarField;
use super::grid::GridSpec;

/// Sound-speed models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpeedModel {
    Constant {
        c: f64,
    },
    /// `1 + 0.3 sin(pi x) + 0.2 cos(pi y)`
    Trig,
    /// `c_in` inside the centered square of the given half-side, `c_out` outside.
    SquareJump {
        half_side: f64,
        c_in: f64,
        c_out: f64,
    },
}

impl Default for SpeedModel {
    fn default() -> Self {
        SpeedModel::Constant { c: 1.0 }
    }
}

impl SpeedModel {
    /// Jump model with an inner square of half-side 0.5 and faster outer medium.
    pub fn default_square_jump() -> Self {
        SpeedModel::SquareJump { half_side: 0.5, c_in: 1.0, c_out: 1.3 }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            SpeedModel::Constant { c } => c,
            SpeedModel::Trig => 1.0 + 0.3 * (PI * x).sin() + 0.2 * (PI * y).cos(),
            SpeedModel::SquareJump { half_side, c_in, c_out } => {
                if x.abs() <= half_side && y.abs() <= half_side {
                    c_in
                } else {
                    c_out
                }
            }
        }
    }

    /// Upper bound of the speed on the default box, used to pick the time step.
    pub fn max_speed(&self) -> f64 {
        match *self {
            SpeedModel::Constant { c } => c,
            SpeedModel::Trig => 1.5,
            SpeedModel::SquareJump { c_in, c_out, .. } => c_in.max(c_out),
        }
    }
}

pub fn make_speed(grid: &GridSpec, model: &SpeedModel) -> Result<ScalarField> {
    let c = ScalarField::from_fn(*grid, |x, y| model.eval(x, y));
    if let Some(v) = c.values().iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("speed model produces non-positive value {v}")));
    }
    Ok(c)
}
