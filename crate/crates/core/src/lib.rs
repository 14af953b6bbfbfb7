//! Numerical laboratory for the two-component cubic Camassa-Holm system
//!
//! ```text
//! m_t + [((uv - ux vx) - (u vx - ux v)) m]_x = 0,   m = u - u_xx,
//! n_t + [((uv - ux vx) - (u vx - ux v)) n]_x = 0,   n = v - v_xx.
//! ```

pub mod blowup;
pub mod characteristics;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod peakon;
pub mod scenario;
pub mod weakform;

pub use error::{Result, SqqError};
pub use grid::{FieldState, Grid, Stencil};
