//! Extremes of locally stationary Gaussian and chi fields on compact manifolds.
//!
//! The crate provides, as a library:
//!
//! * scalar and matrix primitives (structure modules, Mills ratio, minor
//!   norms, Gumbel quantiles) in [`math`],
//! * closed-form parametrized manifolds with tangent frames and
//!   Hausdorff-measure quadrature in [`manifold`],
//! * epsilon-nets, packing bounds, restricted Voronoi partitions and
//!   anisotropic discretization grids in [`geometry`],
//! * locally stationary covariance kernels and exact Gaussian field
//!   simulation in [`field`],
//! * Monte Carlo estimation of generalized Pickands constants in
//!   [`pickands`],
//! * closed-form excursion asymptotics and their Monte Carlo verification
//!   in [`excursion`],
//! * Gumbel limit normalizations, distributional experiments and the
//!   confidence tube / confidence region constructions in [`evd`].
//!
//! All simulation entry points take an explicit 64-bit seed and are
//! bitwise reproducible independent of the worker thread count.

pub mod evd;
pub mod excursion;
pub mod field;
pub mod geometry;
pub mod manifold;
pub mod math;
pub mod num;
pub mod pickands;
pub mod rng;

/// Concrete scalar used throughout the simulation stack.
///
/// The pure kernels in [`math`] are generic over [`num::Real`]; everything
/// that touches linear algebra or random number streams is pinned to `f64`
/// because the normalizing constants involve `log log(1/h)`-scale terms
/// that single precision cannot resolve.
pub type Scalar = f64;

pub use crate::field::{CovarianceModel, FieldSample};
pub use crate::geometry::{DiscretizationGrid, EpsilonNet, VoronoiPartition};
pub use crate::manifold::{ManifoldDescriptor, Point, TangentFrame};
pub use crate::math::Structure;
pub use crate::pickands::PickandsEstimate;
