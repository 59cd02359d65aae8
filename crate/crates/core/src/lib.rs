//! Certified distortion lower bounds for complete binary trees in uniformly
//! convex `l_p` spaces.
//!
//! The crate turns the fork-based self-improvement argument into code:
//!
//! - [`metric`]: trees `T_n`, embeddings into `l_p^d`, exact distortion.
//! - [`convexity`]: `l_p` norms, moduli of uniform convexity and type-`p` constants.
//! - [`fork`]: the fork lemma, its proof replay, and half-depth extraction.
//! - [`bound`]: lower bounds from iterating `f(D) = D - K(D) / D^(p-1)`.
//! - [`optimize`]: seeded multi-start search for good embeddings (upper bounds).
//! - [`io`]: JSON/CSV encodings with 17-digit reals.
//!
//! ```
//! use treebound_core::{convexity_profile, lower_bound_iterative, SpaceSpec};
//!
//! let profile = convexity_profile(&SpaceSpec::euclidean(4)).unwrap();
//! let bound = lower_bound_iterative(1, &profile, 0.0).unwrap();
//! assert!((bound.value - 1.0486).abs() < 1e-4);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod convexity;
pub mod error;
pub mod fork;
pub mod io;
pub mod metric;
mod nelder_mead;
pub mod optimize;
pub mod seed;

pub use bound::{
    asymptotic_constant, f_iterate, f_step, iteration_count, lower_bound_asymptotic, lower_bound_iterative,
    lower_bound_iterative_u64, BoundMethod, Iteration, LowerBoundResult,
};
pub use convexity::{
    convexity_profile, modulus_analytic, modulus_numeric, norm_value, ConvexityProfile, ModulusEstimate, ProfileSource,
    SpaceSpec,
};
pub use error::{Error, Result};
pub use fork::{
    certify_chain, certify_fork_points, check_fork, extract_half, fork_bound, fork_constant, fork_eta,
    replay_lemma_proof, separation_bound, CertifiedStatement, ExtractionLevel, ExtractionTrace, Fork, ForkCertificate,
    InequalityCheck, ProofTrace, DEFAULT_TAU,
};
pub use metric::{
    build_tree, evaluate_distortion, normalize_embedding, restrict_to_selection, tree_distance, BinaryTree,
    DistortionReport, Embedding, Selection,
};
pub use optimize::{
    multi_start, optimize_embedding, random_embedding, HistoryRow, OptimizationResult, OptimizerConfig, RestartSummary,
    StepSchedule,
};
