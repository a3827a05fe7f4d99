//! Desk-scale building blocks for longitudinal lung-volume synthesis:
//! volume handling and metrics, synthetic phantom cohorts, lung-region
//! pre-registration, and the residual diffusion bridge math.

pub mod affine;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod patch;
pub mod phantom;
pub mod prereg;
pub mod rvol;
pub mod schedule;
pub mod volume;

pub use error::{CoreError, Result};
pub use volume::Volume;
