//! Shared fixtures for the benchmarks.

use treebound_core::{
    convexity_profile, normalize_embedding, random_embedding, ConvexityProfile, Embedding, SpaceSpec,
};

/// A normalized random embedding of `T_depth` into `l_p^dim` with a fixed seed.
pub fn fixture(depth: u32, p: f64, dim: usize) -> Embedding {
    let space = SpaceSpec::new(p, dim).expect("valid space");
    normalize_embedding(&random_embedding(depth, &space, 1).expect("embedding")).expect("normalizable")
}

pub fn hilbert() -> ConvexityProfile {
    convexity_profile(&SpaceSpec::euclidean(2)).expect("l_2 profile")
}
