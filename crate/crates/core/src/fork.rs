//! The fork lemma as executable checks, and the half-depth extraction built on it.
//!
//! A fork is the four-vertex tree `a0 - a1 - {a2, a2'}`. If `phi` is distance
//! non-decreasing and `D`-Lipschitz on a fork inside a space of type `(p, c)`,
//! one of the two grandchildren satisfies
//!
//! ```text
//! |phi(a0) - phi(a2)| <= 2 (D - K(D) / D^(p-1))
//! ```
//!
//! where `K(D)` is the largest constant making `4 eta + 2 D (2 eta / (c D))^(1/p)`
//! at most `2 (1 - tau)` for `eta = K / D^(p-1)`. Keeping that grandchild below
//! every other generation yields an embedding of `T_floor(n/2)` with distortion
//! at most `f(D) = D - K(D) / D^(p-1)`.

use serde::{Deserialize, Serialize};

use crate::bound::lower_bound_iterative;
use crate::convexity::{ConvexityProfile, SpaceSpec};
use crate::error::{Error, Result};
use crate::metric::{
    evaluate_distortion, heap_distance, normalize_embedding, restrict_to_selection, vertex_depth, Embedding, Selection,
};

/// Slack turning the strict `< 2` of the lemma into a checkable `<= 2 (1 - tau)`.
pub const DEFAULT_TAU: f64 = 1e-6;

/// Relative tolerance on the fork hypotheses of a normalized embedding.
pub const HYPOTHESIS_TOL: f64 = 1e-9;

/// Slack allowed on the per-level extraction contract.
pub const CONTRACT_TOL: f64 = 1e-9;

/// Solves for `K(D)` with the parameters that do not depend on `D` precomputed.
///
/// Writing `s = K^(1/p)`, the constraint is `g(s) = 4 s^p / D^(p-1) + a s - b <= 0`
/// with `a = 2 (2/c)^(1/p)` and `b = 2 (1 - tau)`. `g` is convex and increasing
/// in `s`, so Newton's method started above the root descends monotonically.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ForkSolver {
    p: f64,
    c: f64,
    a: f64,
    b: f64,
}

impl ForkSolver {
    pub(crate) fn new(profile: &ConvexityProfile, tau: f64) -> Result<Self> {
        if tau.is_nan() || tau < 0.0 {
            return Err(Error::domain(format!("margin tau = {tau} must be >= 0")));
        }
        if tau >= 1.0 {
            return Err(Error::InfeasibleMargin { tau });
        }
        let (p, c) = (profile.p_type, profile.c);
        if !(p >= 2.0 && c > 0.0 && c.is_finite() && p.is_finite()) {
            return Err(Error::domain(format!("invalid convexity profile (p = {p}, c = {c})")));
        }
        Ok(ForkSolver {
            p,
            c,
            a: 2.0 * (2.0 / c).powf(1.0 / p),
            b: 2.0 * (1.0 - tau),
        })
    }

    pub(crate) fn p(&self) -> f64 {
        self.p
    }

    /// Returns `(K, s)` where `s = K^(1/p)`.
    ///
    /// `hint` may carry the root for a larger `D`, which is still above the root
    /// for this `D` because `K` grows with `D`.
    pub(crate) fn solve(&self, d: f64, hint: Option<f64>) -> Result<(f64, f64)> {
        if !(d >= 1.0) || !d.is_finite() {
            return Err(Error::domain(format!("D = {d} must be a finite value >= 1")));
        }
        let scale = 4.0 / d.powf(self.p - 1.0);
        let g = |s: f64| scale * s.powf(self.p) + self.a * s - self.b;
        let dg = |s: f64| scale * self.p * s.powf(self.p - 1.0) + self.a;

        // Dropping the first term gives an upper bound on the root.
        let mut s = self.b / self.a;
        if let Some(h) = hint {
            if h > 0.0 && h < s && g(h) >= 0.0 {
                s = h;
            }
        }
        for _ in 0..100 {
            let step = g(s) / dg(s);
            s -= step;
            if step.abs() <= 1e-15 * s {
                break;
            }
        }
        // Land on the feasible side of the root.
        let mut guard = 0;
        while g(s) > 0.0 && guard < 64 {
            s -= (g(s) / dg(s)).max(s * f64::EPSILON);
            guard += 1;
        }
        if !(s > 0.0) {
            return Err(Error::InfeasibleMargin {
                tau: 1.0 - self.b / 2.0,
            });
        }
        let k = s.powf(self.p);
        let eps = (2.0 * k / (self.c * d.powf(self.p))).powf(1.0 / self.p);
        if eps > 2.0 {
            return Err(Error::domain(format!(
                "proof parameter eps = {eps} leaves the modulus domain (0, 2]"
            )));
        }
        Ok((k, s))
    }
}

/// The largest `K > 0` with `4K / D^(p-1) + 2 (2K / c)^(1/p) <= 2 (1 - tau)`.
pub fn fork_constant(d: f64, profile: &ConvexityProfile, tau: f64) -> Result<f64> {
    Ok(ForkSolver::new(profile, tau)?.solve(d, None)?.0)
}

/// `eta = K(D) / D^(p-1)`.
pub fn fork_eta(d: f64, profile: &ConvexityProfile, tau: f64) -> Result<f64> {
    Ok(fork_constant(d, profile, tau)? / d.powf(profile.p_type - 1.0))
}

/// `2 (D - K(D) / D^(p-1))`, the lemma's bound on the kept grandchild.
pub fn fork_bound(d: f64, profile: &ConvexityProfile, tau: f64) -> Result<f64> {
    Ok(2.0 * (d - fork_eta(d, profile, tau)?))
}

/// `eps = (2 eta / (c D))^(1/p)` used in the proof of the lemma.
pub fn proof_eps(d: f64, eta: f64, profile: &ConvexityProfile) -> f64 {
    (2.0 * eta / (profile.c * d)).powf(1.0 / profile.p_type)
}

/// `4 eta + 2 eps D`: how far apart two grandchildren can be when both exceed
/// the fork bound. At most `2 (1 - tau)` by the choice of `K`.
pub fn separation_bound(d: f64, profile: &ConvexityProfile, tau: f64) -> Result<f64> {
    let eta = fork_eta(d, profile, tau)?;
    Ok(4.0 * eta + 2.0 * proof_eps(d, eta, profile) * d)
}

/// Root, child and the two grandchildren through that child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct Fork {
    pub a0: usize,
    pub a1: usize,
    pub a2: usize,
    pub a2p: usize,
}

impl Fork {
    pub fn new(a0: usize, a1: usize, a2: usize, a2p: usize) -> Result<Self> {
        let heap_ok = a0 >= 1
            && (a1 == 2 * a0 || a1 == 2 * a0 + 1)
            && ((a2 == 2 * a1 && a2p == 2 * a1 + 1) || (a2 == 2 * a1 + 1 && a2p == 2 * a1));
        if heap_ok {
            Ok(Fork { a0, a1, a2, a2p })
        } else {
            Err(Error::domain(format!("({a0}, {a1}, {a2}, {a2p}) is not a fork")))
        }
    }

    /// The fork below `a0` through `a1`, grandchildren in increasing order.
    pub fn through(a0: usize, a1: usize) -> Result<Self> {
        Fork::new(a0, a1, 2 * a1, 2 * a1 + 1)
    }

    pub fn vertices(&self) -> [usize; 4] {
        [self.a0, self.a1, self.a2, self.a2p]
    }
}

impl TryFrom<[usize; 4]> for Fork {
    type Error = Error;

    fn try_from(v: [usize; 4]) -> Result<Self> {
        Fork::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Fork> for [usize; 4] {
    fn from(f: Fork) -> Self {
        f.vertices()
    }
}

/// Record of one lemma application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkCertificate {
    pub fork: Fork,
    #[serde(rename = "D")]
    pub d: f64,
    pub eta: f64,
    pub bound: f64,
    pub kept: usize,
    pub kept_norm: f64,
    pub other_norm: f64,
}

/// Applies the lemma to four points given in fork order `[a0, a1, a2, a2']`.
///
/// Fails with [`Error::Hypothesis`] when the points are not distance
/// non-decreasing and `D`-Lipschitz for the fork metric, and with
/// [`Error::LemmaViolation`] if both grandchildren exceed the bound.
pub fn certify_fork_points(
    fork: Fork,
    points: [&[f64]; 4],
    space: &SpaceSpec,
    d: f64,
    profile: &ConvexityProfile,
    tau: f64,
) -> Result<ForkCertificate> {
    if !(d >= 1.0) {
        return Err(Error::domain(format!("D = {d} must be >= 1")));
    }
    let ids = fork.vertices();
    for i in 0..4 {
        for j in i + 1..4 {
            let tree_d = heap_distance(ids[i], ids[j]) as f64;
            let img_d = space.distance(points[i], points[j]);
            if img_d < tree_d * (1.0 - HYPOTHESIS_TOL) {
                return Err(Error::hypothesis(format!(
                    "pair ({}, {}) contracts: image distance {img_d} < tree distance {tree_d}",
                    ids[i], ids[j]
                )));
            }
            if img_d > d * tree_d * (1.0 + HYPOTHESIS_TOL) {
                return Err(Error::hypothesis(format!(
                    "pair ({}, {}) expands: image distance {img_d} > D * {tree_d} with D = {d}",
                    ids[i], ids[j]
                )));
            }
        }
    }

    let eta = fork_eta(d, profile, tau)?;
    let bound = 2.0 * (d - eta);
    let n2 = space.distance(points[0], points[2]);
    let n2p = space.distance(points[0], points[3]);
    let first_is_kept = n2 < n2p || (n2 == n2p && fork.a2 < fork.a2p);
    let (kept, kept_norm, other_norm) = if first_is_kept {
        (fork.a2, n2, n2p)
    } else {
        (fork.a2p, n2p, n2)
    };
    if kept_norm > bound {
        return Err(Error::LemmaViolation {
            fork: ids,
            kept_norm,
            bound,
        });
    }
    Ok(ForkCertificate {
        fork,
        d,
        eta,
        bound,
        kept,
        kept_norm,
        other_norm,
    })
}

/// [`certify_fork_points`] on the images of a fork under an embedding.
pub fn check_fork(e: &Embedding, fork: Fork, d: f64, profile: &ConvexityProfile, tau: f64) -> Result<ForkCertificate> {
    for v in fork.vertices() {
        if !e.tree().contains(v) {
            return Err(Error::InvalidVertex {
                vertex: v,
                count: e.tree().vertex_count(),
            });
        }
    }
    let pts = fork.vertices().map(|v| e.point(v));
    certify_fork_points(fork, pts, e.space(), d, profile, tau)
}

/// One displayed inequality of the lemma's proof, with both sides recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Numeric replay of the lemma's proof for one grandchild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTrace {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `(|x1| / |x2 - x1|) (x2 - x1)`.
    pub v: Vec<f64>,
    pub eta: f64,
    pub eps: f64,
    pub checks: Vec<InequalityCheck>,
}

impl ProofTrace {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }
}

// Rounding slack for comparisons in the replay; both sides are O(D).
const REPLAY_SLACK: f64 = 1e-12;

fn le(name: &str, lhs: f64, rhs: f64) -> InequalityCheck {
    InequalityCheck {
        name: name.to_string(),
        lhs,
        rhs,
        holds: lhs <= rhs + REPLAY_SLACK * rhs.abs().max(1.0),
    }
}

fn ge(name: &str, lhs: f64, rhs: f64) -> InequalityCheck {
    InequalityCheck {
        name: name.to_string(),
        lhs,
        rhs,
        holds: lhs + REPLAY_SLACK * rhs.abs().max(1.0) >= rhs,
    }
}

/// Recomputes the chain of inequalities in the proof of the fork lemma.
///
/// `x1 = phi(a1)` and `x2 = phi(a2)` with `phi(a0) = 0`. The hypotheses are
/// checked first; if any fails the error carries a trace containing only the
/// hypothesis checks.
pub fn replay_lemma_proof(
    x1: &[f64],
    x2: &[f64],
    d: f64,
    space: &SpaceSpec,
    profile: &ConvexityProfile,
    tau: f64,
) -> Result<ProofTrace> {
    if x1.len() != space.dim || x2.len() != space.dim {
        return Err(Error::DimensionMismatch {
            expected: space.dim,
            got: if x1.len() != space.dim { x1.len() } else { x2.len() },
        });
    }
    let eta = fork_eta(d, profile, tau)?;
    let eps = proof_eps(d, eta, profile);

    let n1 = space.norm(x1);
    let n2 = space.norm(x2);
    let diff: Vec<f64> = x2.iter().zip(x1).map(|(b, a)| b - a).collect();
    let n21 = space.norm(&diff);

    let hypotheses = vec![
        le("hyp: |x1| <= D", n1, d),
        le("hyp: |x2 - x1| <= D", n21, d),
        ge("hyp: |x1| >= 1", n1, 1.0),
        ge("hyp: |x2 - x1| >= 1", n21, 1.0),
        ge("hyp: |x2| >= 2", n2, 2.0),
        ge("hyp: |x2| >= 2(D - eta)", n2, 2.0 * (d - eta)),
    ];
    let v: Vec<f64> = if n21 > 0.0 {
        diff.iter().map(|z| n1 / n21 * z).collect()
    } else {
        vec![0.0; space.dim]
    };
    if hypotheses.iter().any(|c| !c.holds) {
        let failed: Vec<&str> = hypotheses
            .iter()
            .filter(|c| !c.holds)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::Hypothesis {
            message: format!("replay preconditions fail: {}", failed.join(", ")),
            trace: Some(Box::new(ProofTrace {
                x1: x1.to_vec(),
                x2: x2.to_vec(),
                v,
                eta,
                eps,
                checks: hypotheses,
            })),
        });
    }

    let x1_plus_v: Vec<f64> = x1.iter().zip(&v).map(|(a, b)| a + b).collect();
    let x1_minus_v: Vec<f64> = x1.iter().zip(&v).map(|(a, b)| a - b).collect();
    let gap = space.distance(&x1_plus_v, x2);
    let sum_norm = space.norm(&x1_plus_v);
    let mid = sum_norm / (2.0 * n1);
    let chord = space.norm(&x1_minus_v);
    let twice_x1_minus_x2: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| 2.0 * a - b).collect();
    let p = profile.p_type;

    let mut checks = hypotheses;
    checks.extend([
        ge("|x1| >= D - 2 eta", n1, d - 2.0 * eta),
        ge("|x2 - x1| >= D - 2 eta", n21, d - 2.0 * eta),
        le(
            "|x1 + v - x2| = ||x1| - |x2 - x1||",
            (gap - (n1 - n21).abs()).abs(),
            0.0,
        ),
        le("|x1 + v - x2| <= 2 eta", gap, 2.0 * eta),
        ge("|x1 + v| >= |x2| - |x1 + v - x2|", sum_norm, n2 - gap),
        ge("|x1 + v| >= 2D - 4 eta", sum_norm, 2.0 * d - 4.0 * eta),
        ge("|x1 + v| / (2 |x1|) >= 1 - 2 eta / D", mid, 1.0 - 2.0 * eta / d),
        le(
            "c (|x1 - v| / |x1|)^p <= 1 - |x1 + v| / (2 |x1|)",
            profile.c * (chord / n1).powf(p),
            1.0 - mid,
        ),
        le("|x1 - v| <= eps D", chord, eps * d),
        le(
            "|2 x1 - x2| <= |x1 + v - x2| + |x1 - v|",
            space.norm(&twice_x1_minus_x2),
            gap + chord,
        ),
        le(
            "|2 x1 - x2| <= 2 eta + eps D",
            space.norm(&twice_x1_minus_x2),
            2.0 * eta + eps * d,
        ),
    ]);
    Ok(ProofTrace {
        x1: x1.to_vec(),
        x2: x2.to_vec(),
        v,
        eta,
        eps,
        checks,
    })
}

/// Result of the lemma and restriction at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionLevel {
    pub depth: u32,
    #[serde(rename = "D")]
    pub d: f64,
    pub certificates: Vec<ForkCertificate>,
}

/// The final claim of a certification chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedStatement {
    pub text: String,
    /// Number of extractions, `floor(log2 n)`.
    pub m: u32,
    pub lower_bound: f64,
    pub observed_distortion: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTrace {
    pub levels: Vec<ExtractionLevel>,
    pub d_sequence: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_statement: Option<CertifiedStatement>,
}

/// One self-improvement step: `T_n` with distortion `D` to `T_floor(n/2)`
/// with distortion at most `D - K(D) / D^(p-1)`.
///
/// `e` must be normalized (contraction 1). The result is normalized again.
pub fn extract_half(e: &Embedding, profile: &ConvexityProfile, tau: f64) -> Result<(Embedding, ExtractionTrace)> {
    let depth = e.tree().depth();
    if depth < 2 {
        return Err(Error::Depth { depth, required: 2 });
    }
    let report = evaluate_distortion(e)?;
    if (report.contraction - 1.0).abs() > HYPOTHESIS_TOL {
        return Err(Error::hypothesis(format!(
            "embedding is not normalized (contraction {})",
            report.contraction
        )));
    }
    let d = report.distortion;
    let selected_depth = 2 * (depth / 2);

    let mut certificates = Vec::new();
    let mut kept = Selection::new();
    let mut frontier = vec![1usize];
    while let Some(s) = frontier.pop() {
        if vertex_depth(s) + 2 > selected_depth {
            continue;
        }
        let mut pair = [0usize; 2];
        for (slot, a1) in [2 * s, 2 * s + 1].into_iter().enumerate() {
            let cert = check_fork(e, Fork::through(s, a1)?, d, profile, tau)?;
            pair[slot] = cert.kept;
            certificates.push(cert);
        }
        kept.insert(s, pair);
        frontier.extend(pair.iter().rev());
    }
    certificates.sort_by_key(|c| (c.fork.a0, c.fork.a1));

    let restricted = restrict_to_selection(e, &kept)?;
    let next = normalize_embedding(&restricted)?;
    let d_next = evaluate_distortion(&next)?.distortion;
    let f_d = d - fork_eta(d, profile, tau)?;
    if d_next > f_d + CONTRACT_TOL {
        return Err(Error::ContractViolation(format!(
            "extracted distortion {d_next} exceeds f(D) = {f_d} for D = {d}"
        )));
    }
    let trace = ExtractionTrace {
        levels: vec![ExtractionLevel { depth, d, certificates }],
        d_sequence: vec![d, d_next],
        certified_statement: None,
    };
    Ok((next, trace))
}

/// Repeats [`extract_half`] down to depth 1 and compares the observed
/// distortion with the certified lower bound for `m = floor(log2 n)`.
pub fn certify_chain(e: &Embedding, profile: &ConvexityProfile, tau: f64) -> Result<ExtractionTrace> {
    let depth = e.tree().depth();
    if depth < 2 {
        return Err(Error::Depth { depth, required: 2 });
    }
    let mut current = normalize_embedding(e)?;
    let mut levels = Vec::new();
    let mut d_sequence = vec![evaluate_distortion(&current)?.distortion];
    while current.tree().depth() >= 2 {
        let (next, mut step) = extract_half(&current, profile, tau)?;
        levels.append(&mut step.levels);
        d_sequence.push(step.d_sequence[1]);
        current = next;
    }
    let m = depth.ilog2();
    debug_assert_eq!(levels.len(), m as usize);
    let lower = lower_bound_iterative(m, profile, tau)?.value;
    let observed = d_sequence[0];
    let pass = observed >= lower;
    let text = format!(
        "any embedding of T_{depth} into l_{}^{} has distortion >= {lower:.9} (m = {m}); observed D_0 = {observed:.9}: {}",
        e.space().p,
        e.space().dim,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(ExtractionTrace {
        levels,
        d_sequence,
        certified_statement: Some(CertifiedStatement {
            text,
            m,
            lower_bound: lower,
            observed_distortion: observed,
            pass,
        }),
    })
}
