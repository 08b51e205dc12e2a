//! Grids, scalar fields, phantoms, sound speeds, boundary traces and their
//! serialization.

pub mod field;
pub mod grid;
pub mod io;
pub mod phantom;
pub mod speed;
pub mod trace;

pub use field::{
    cutoff_frame, interior_cutoff, mask_indices, relative_error, weighted_dot, weighted_norm, ScalarField,
};
pub use grid::{Extent, GridSpec, Side};
pub use phantom::{render_gaussians, render_shepp_logan, Blob};
pub use speed::{make_speed, SpeedModel};
pub use trace::{resample_trace, BoundaryTrace, GammaMask, SideSpan};
