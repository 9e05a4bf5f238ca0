//! Numerical harmonic analysis on the Heisenberg group ℍⁿ: group geometry,
//! Hausdorff operators and their commutators, weighted central Morrey and
//! CMO norms, and the boundedness constants of those operators.
//!
//! Integration is exact-radial where the inputs declare radial structure
//! and seeded, stratified Monte Carlo elsewhere. With the `parallel`
//! feature (on by default) strata, radii and ball families are spread over
//! a rayon pool; results do not depend on the number of threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod error;
pub mod field;
pub mod heis;
pub mod linmap;
pub mod norms;
pub mod ops;
pub mod par;
pub mod quad;
pub mod sharpness;
pub mod weights;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use heis::{BallSpec, GroupPoint, HeisDim};
pub use linmap::{LinearMap, NormEstimate};
pub use norms::{NormParams, NormResult, RadiusGrid};
pub use ops::{GeneratingFunction, MatrixField, OperatorEval, Piece, Support};
pub use quad::{Estimate, McConfig, McRegion, QuadOptions, RadialProfile};
pub use sharpness::{ConstantId, Theorem, TheoremConstant, Tolerances, Verdict, VerificationReport};
pub use weights::{WeightKind, WeightSpec};
