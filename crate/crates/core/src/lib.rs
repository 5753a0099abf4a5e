//! Worst-case optimal branch-and-bound joins over dictionary-encoded
//! relations, with bound-guided uniform sampling of join answers.

pub mod binarise;
pub mod constraints;
pub mod enumerate;
pub mod estimate;
pub mod index;
pub mod lp;
pub mod oracle;
pub mod relation;
pub mod sampler;

pub use binarise::{bin_query, BinarisedQuery, BitLayout};
pub use constraints::{ConstraintSet, DegreeConstraint};
pub use enumerate::{wcj, wcj_binarised, EnumerationStats};
pub use estimate::{verify_estimator, EstimatorContext, TraceWalker};
pub use index::IndexedQuery;
pub use lp::{FractionalCover, LpScalar};
pub use relation::{Code, JoinQuery, Relation, Tuple, VarId, VarSet};
pub use sampler::{BinarySampler, SampleError, Sampler, SamplerStats, UpMemo};

/// Exact scalar used for covers.
pub type Rational = num_rational::BigRational;
pub type ExactCover = FractionalCover<Rational>;
pub type Estimator = EstimatorContext<f64>;
