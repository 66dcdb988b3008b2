//! Unified Gaussian representation for oriented objects.
//!
//! Oriented boxes, quadrilaterals and free point sets are all mapped to a
//! 2-D Gaussian `N(μ, Σ)`. Distances between Gaussians (Kullback-Leibler,
//! Bhattacharyya, Wasserstein) then drive both the regression losses and
//! label assignment, which removes the angle-boundary and corner-ordering
//! problems of parameter-space regression.
//!
//! Modules, bottom up:
//!
//! - [`linalg`]: closed-form 2×2 symmetric kernels.
//! - [`geometry`]: representations, conversions, rotated IoU.
//! - [`metrics`]: KLD, BD and WD.
//! - [`losses`]: normalized losses and their gradients w.r.t. points.
//! - [`assignment`]: similarity scores and fixed/ATSS/PATSS assignment.
//! - [`simulator`]: synthetic scenes, point-set optimization, sweeps.
//! - [`ingest`]: DOTA annotation parsing and dataset statistics.
//! - [`svg`]: plain SVG overlays.

pub mod assignment;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod simulator;
pub mod svg;

pub use error::{Error, Result};
pub use geometry::{Gaussian2, Obb, PointSet, Qbb};
pub use linalg::{Sym2, Vec2};
pub use metrics::MetricKind;
pub use losses::LossKind;
