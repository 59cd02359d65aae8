use proptest::prelude::*;
use rand::Rng;
use treebound_core::seed::{derive_seed, rng};
use treebound_core::{
    certify_chain, convexity_profile, evaluate_distortion, extract_half, f_iterate, f_step, fork_constant,
    lower_bound_iterative, multi_start, normalize_embedding, optimize_embedding, random_embedding,
    restrict_to_selection, separation_bound, BinaryTree, ConvexityProfile, Embedding, Error, OptimizerConfig,
    ProfileSource, Selection, SpaceSpec, DEFAULT_TAU,
};

fn walk_distance(mut u: usize, mut v: usize) -> f64 {
    let mut steps = 0;
    while u != v {
        if u > v {
            u /= 2;
        } else {
            v /= 2;
        }
        steps += 1;
    }
    steps as f64
}

fn brute_distortion(e: &Embedding) -> (f64, f64, f64) {
    let n = e.tree().vertex_count();
    let p = e.space().p;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for u in 1..=n {
        for v in u + 1..=n {
            let dist: f64 = e
                .point(u)
                .iter()
                .zip(e.point(v))
                .map(|(a, b)| (a - b).abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p);
            let r = dist / walk_distance(u, v);
            hi = hi.max(r);
            lo = lo.min(r);
        }
    }
    (hi, lo, hi / lo)
}

/// Largest `K` with the fork constraint, by plain bisection.
fn bisect_k(d: f64, p: f64, c: f64, tau: f64) -> f64 {
    let g = |k: f64| 4.0 * k / d.powf(p - 1.0) + 2.0 * (2.0 * k / c).powf(1.0 / p) - 2.0 * (1.0 - tau);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn distortion_matches_brute_force_on_t3() {
    let space = SpaceSpec::new(3.0, 2).unwrap();
    let e = random_embedding(3, &space, 7).unwrap();
    assert_eq!(e.tree().pair_count(), 105);
    let report = evaluate_distortion(&e).unwrap();
    let (hi, lo, d) = brute_distortion(&e);
    assert!((report.expansion - hi).abs() <= 1e-12 * hi);
    assert!((report.contraction - lo).abs() <= 1e-12 * lo);
    assert!((report.distortion - d).abs() <= 1e-12 * d);
}

#[test]
fn restriction_matches_relabelling_oracle() {
    let space = SpaceSpec::euclidean(3);
    let e = random_embedding(4, &space, 11).unwrap();
    let mut r = rng(5);
    let mut kept = Selection::new();
    // label in T_2 -> vertex of T_4
    let mut labels = vec![(1usize, 1usize)];
    let mut frontier = vec![(1usize, 1usize)];
    while let Some((label, v)) = frontier.pop() {
        if label >= 4 {
            continue;
        }
        let left = 4 * v + r.random_range(0..2);
        let right = 4 * v + 2 + r.random_range(0..2);
        kept.insert(v, [left, right]);
        for (l, w) in [(2 * label, left), (2 * label + 1, right)] {
            labels.push((l, w));
            frontier.push((l, w));
        }
    }
    let half = restrict_to_selection(&e, &kept).unwrap();
    assert_eq!(half.tree().depth(), 2);
    assert_eq!(labels.len(), 7);
    for &(l, v) in &labels {
        let expect: Vec<f64> = e.point(v).iter().map(|x| x / 2.0).collect();
        assert_eq!(half.point(l), expect.as_slice());
        for &(l2, v2) in &labels {
            assert_eq!(walk_distance(v, v2), 2.0 * walk_distance(l, l2));
        }
    }

    let mut extra = kept.clone();
    extra.insert(3, [12, 14]);
    assert!(matches!(restrict_to_selection(&e, &extra), Err(Error::Selection(_))));
}

#[test]
fn fork_constant_matches_bisection() {
    for (p, c) in [(2.0, 0.125), (3.0, 1.0 / 24.0), (4.0, 1.0 / 64.0), (2.5, 0.05)] {
        let profile = ConvexityProfile::new(p, c, ProfileSource::Analytic).unwrap();
        for d in [1.0, 1.5, 2.0, 10.0, 1e3, 1e6] {
            for tau in [0.0, DEFAULT_TAU, 0.3] {
                let k = fork_constant(d, &profile, tau).unwrap();
                let oracle = bisect_k(d, p, c, tau);
                assert!(
                    (k - oracle).abs() <= 1e-12 * oracle.max(1e-300),
                    "p {p} D {d} tau {tau}: {k} vs {oracle}"
                );
            }
        }
    }
}

#[test]
fn both_grandchildren_far_forces_small_separation() {
    // If both grandchildren exceed the bound they lie within 4 eta + 2 eps D of
    // each other, which the choice of K keeps below the required 2.
    let profile = ConvexityProfile::new(2.0, 0.125, ProfileSource::Analytic).unwrap();
    for i in 0..200 {
        let d = 1.0 + i as f64 * 0.5;
        assert!(separation_bound(d, &profile, DEFAULT_TAU).unwrap() < 2.0);
    }
}

#[test]
fn lower_bound_is_minimal() {
    let profile = ConvexityProfile::new(2.0, 0.125, ProfileSource::Analytic).unwrap();
    for m in [1u32, 2, 5, 50, 1000] {
        let l = lower_bound_iterative(m, &profile, DEFAULT_TAU).unwrap().value;
        let at = f_iterate(l, m as u64, &profile, DEFAULT_TAU).unwrap();
        assert!(at.dropped_at.is_none() && at.value >= 1.0 - 1e-9, "m = {m}");
        let below = f_iterate(l * (1.0 - 1e-6), m as u64, &profile, DEFAULT_TAU).unwrap();
        assert!(below.dropped_at.is_some(), "m = {m}");
    }
}

#[test]
fn optimizer_sanity_on_t4() {
    let space = SpaceSpec::euclidean(4);
    let config = OptimizerConfig {
        restarts: 8,
        steps: 2000,
        ..OptimizerConfig::default()
    };
    let best = multi_start(4, &space, &config).unwrap();
    assert!(best.report.distortion < 3.0, "{}", best.report.distortion);
    let profile = convexity_profile(&space).unwrap();
    assert!(best.report.distortion >= lower_bound_iterative(2, &profile, DEFAULT_TAU).unwrap().value);
    let (_, _, oracle) = brute_distortion(&best.embedding);
    assert!((best.report.distortion - oracle).abs() <= 1e-12 * oracle);
    for h in &best.history {
        assert!(h.best_distortion <= h.initial_distortion);
    }

    let single = multi_start(4, &space, &OptimizerConfig { restarts: 1, ..config }).unwrap();
    let direct = optimize_embedding(
        4,
        &space,
        &OptimizerConfig {
            restarts: 1,
            seed: derive_seed(config.seed, 0),
            ..config
        },
    )
    .unwrap();
    assert_eq!(single.embedding, direct.embedding);
    assert!(best.report.distortion <= single.report.distortion);
}

#[test]
fn extraction_contract_on_optimized_embeddings() {
    // Low-distortion inputs are where the contract has the least room.
    for (depth, p) in [(2u32, 2.0), (3, 2.0), (4, 3.0), (5, 2.0)] {
        let space = SpaceSpec::new(p, 3).unwrap();
        let profile = convexity_profile(&space).unwrap();
        let config = OptimizerConfig {
            restarts: 2,
            steps: 800,
            ..OptimizerConfig::default()
        };
        let e = multi_start(depth, &space, &config).unwrap().embedding;
        let d = brute_distortion(&e).2;
        let (next, trace) = extract_half(&e, &profile, DEFAULT_TAU).unwrap();
        let d_next = brute_distortion(&next).2;
        assert!(d_next <= f_step(d, &profile, DEFAULT_TAU).unwrap() + 1e-9);
        assert_eq!(trace.levels[0].certificates.len(), 2 * ((1 << (depth / 2)) - 1));

        let chain = certify_chain(&e, &profile, DEFAULT_TAU).unwrap();
        assert!(chain.d_sequence.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(chain.certified_statement.unwrap().pass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distortion_is_scale_and_translation_invariant(
        seed in any::<u64>(),
        depth in 1u32..4,
        factor in 1e-3f64..1e3,
        shift in -10.0f64..10.0,
        p in prop::sample::select(vec![2.0, 3.0, 4.5]),
    ) {
        let space = SpaceSpec::new(p, 2).unwrap();
        let e = random_embedding(depth, &space, seed).unwrap();
        let base = evaluate_distortion(&e).unwrap().distortion;
        let scaled = evaluate_distortion(&e.scaled(factor)).unwrap().distortion;
        prop_assert!((scaled - base).abs() <= 1e-12 * base);
        let moved = Embedding::new(
            *e.tree(),
            space,
            e.points().into_iter().map(|x| x.into_iter().map(|v| v + shift).collect()).collect(),
        ).unwrap();
        let translated = evaluate_distortion(&moved).unwrap().distortion;
        prop_assert!((translated - base).abs() <= 1e-9 * base);
    }

    #[test]
    fn normalized_embeddings_are_non_contracting(seed in any::<u64>(), depth in 1u32..4) {
        let space = SpaceSpec::euclidean(3);
        let e = normalize_embedding(&random_embedding(depth, &space, seed).unwrap()).unwrap();
        let r = evaluate_distortion(&e).unwrap();
        prop_assert!((r.contraction - 1.0).abs() <= 1e-12);
        prop_assert!(r.distortion >= 1.0);
    }

    #[test]
    fn f_step_decreases_and_stays_above_d_minus_quarter(d in 1.0f64..1e4) {
        let profile = ConvexityProfile::new(2.0, 0.125, ProfileSource::Analytic).unwrap();
        let f = f_step(d, &profile, DEFAULT_TAU).unwrap();
        prop_assert!(f < d);
        prop_assert!(f >= d - 0.0625 / d - 1e-12);
    }
}

#[test]
fn tree_distances_match_walk() {
    let t = BinaryTree::new(5).unwrap();
    for u in 1..=t.vertex_count() {
        for v in 1..=t.vertex_count() {
            assert_eq!(t.distance(u, v).unwrap() as f64, walk_distance(u, v));
        }
    }
}
