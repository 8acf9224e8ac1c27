//! Additive functionals on uniformly random m-ary search trees.
//!
//! The crate covers exact enumeration of trees and of the moments of any
//! additive functional, the singular-expansion constants that govern their
//! asymptotics, the moment sequences of the limit laws, an exact sampler,
//! and a catalog of cross-checks tying these together.

pub mod enumeration;
pub mod error;
pub mod io;
pub mod limits;
pub mod moments;
pub mod numerics;
pub mod par;
pub mod sampler;
pub mod scalar;
pub mod series;
pub mod singular;
pub mod stats;
pub mod toll;
pub mod tree;
pub mod verify;

pub use enumeration::{brute_force_count, tree_counts, ScaledCounts, TreeCountTable};
pub use error::{Error, Result};
pub use limits::{moments_y_alpha, moments_y_half, normal_limit_moments, j_integral, LimitMomentSequence};
pub use moments::{central_stats, centered_spec, degeneracy_check, exact_moments, MomentMode, MomentTable};
pub use sampler::{monte_carlo, Model, SplitSampler};
pub use scalar::{ArithmeticMode, Real};
pub use series::{convolve, Series};
pub use singular::{dominant_singularity, expansion_coefficients, theorem_constants, toll_series_constant, SingularData, TheoremConstants};
pub use toll::{TollKind, TollSpec};
pub use tree::Tree;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "MSEARCH_CACHE";
