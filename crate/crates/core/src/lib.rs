//! walklab-core: exact arithmetic and Monte Carlo simulation for random
//! walks on lattices, lamplighter (wreath) groups, and polycyclic
//! semidirect products Z^m ⋉ Z^d.
//!
//! The crate is organized around the pipeline
//! descriptor → elements → measures → walk engine → estimators:
//!
//! - [`descriptor`]: group family descriptors and validation
//! - [`element`]: exact group arithmetic (multiply / inverse / action)
//! - [`encode`]: canonical injective byte encoding of elements
//! - [`measure`]: exact-rational finitely supported measures and builders
//! - [`eigen`]: dominant eigen-structure of the action matrices
//! - [`observe`]: the functionals F_R, φ, (·, v1) and the test sets
//! - [`walk`]: deterministic, parallel trajectory simulation
//! - [`green`]: Green's function estimation (Monte Carlo + exact oracle)

pub mod alias;
pub mod descriptor;
pub mod element;
pub mod encode;
pub mod error;
pub mod matrix;
pub mod measure;
pub mod rng;

pub mod eigen;
pub mod green;
pub mod observe;
pub mod walk;

pub use descriptor::{GroupDescriptor, LampGroup};
pub use element::{apply_action, conforms, identity, inverse, multiply, GroupElement};
pub use encode::{canonical_key, key_hex};
pub use error::{EigenError, GroupError, MeasureError, WalkError};
pub use measure::Measure;
