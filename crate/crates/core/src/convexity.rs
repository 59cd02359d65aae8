//! `l_p^d` norms and the modulus of uniform convexity.
//!
//! The modulus of a normed space is
//!
//! ```text
//! delta(eps) = inf { 1 - |(x + y) / 2| : |x| = |y| = 1, |x - y| >= eps },   eps in (0, 2]
//! ```
//!
//! and a space has type `p` when `delta(eps) >= c * eps^p` for some `c > 0`.
//! For `l_p` with `p >= 2` the modulus has the closed form
//! `1 - (1 - (eps/2)^p)^(1/p)`; for `1 < p < 2` it is estimated numerically.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nelder_mead;
use crate::seed::{derive_seed, rng};

/// The host space `l_p^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SpaceSpec {
    pub p: f64,
    pub dim: usize,
}

#[derive(Deserialize)]
struct RawSpace {
    p: f64,
    dim: usize,
}

impl TryFrom<RawSpace> for SpaceSpec {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        SpaceSpec::new(raw.p, raw.dim)
    }
}

impl SpaceSpec {
    pub fn new(p: f64, dim: usize) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::domain(format!("norm exponent p = {p} must lie in (1, inf)")));
        }
        if dim == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        Ok(SpaceSpec { p, dim })
    }

    pub fn euclidean(dim: usize) -> Self {
        SpaceSpec { p: 2.0, dim }
    }

    /// `|x|_p` without dimension checks.
    #[inline]
    pub fn norm(&self, x: &[f64]) -> f64 {
        lp_norm(self.p, x.iter().copied())
    }

    /// `|a - b|_p` without allocating.
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        lp_norm(self.p, a.iter().zip(b).map(|(x, y)| x - y))
    }

    /// Writes a subgradient of the norm at `x` into `out`.
    ///
    /// Coordinates equal to zero receive 0, and `x = 0` yields the zero vector.
    pub fn norm_gradient(&self, x: &[f64], out: &mut [f64]) {
        let norm = self.norm(x);
        if norm == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        if self.p == 2.0 {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = xi / norm;
            }
            return;
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = if *xi == 0.0 {
                0.0
            } else {
                xi.signum() * (xi.abs() / norm).powf(self.p - 1.0)
            };
        }
    }
}

#[inline]
fn lp_norm(p: f64, xs: impl Iterator<Item = f64> + Clone) -> f64 {
    if p == 2.0 {
        return xs.map(|x| x * x).sum::<f64>().sqrt();
    }
    // Rescale by the largest coordinate so that |x|^p cannot overflow.
    let scale = xs.clone().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * xs.map(|x| (x.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `(sum |x_i|^p)^(1/p)`, checking that `x` lives in `space`.
pub fn norm_value(space: &SpaceSpec, x: &[f64]) -> Result<f64> {
    if x.len() != space.dim {
        return Err(Error::DimensionMismatch {
            expected: space.dim,
            got: x.len(),
        });
    }
    Ok(space.norm(x))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("eps = {eps} must lie in (0, 2]")))
    }
}

/// Closed-form modulus of `l_p` for `p >= 2`.
pub fn modulus_analytic(space: &SpaceSpec, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if space.p < 2.0 {
        return Err(Error::Unsupported(format!(
            "closed-form modulus needs p >= 2, got p = {}",
            space.p
        )));
    }
    let p = space.p;
    // 1 - (1 - t)^(1/p) without cancellation for small t.
    let t = (eps / 2.0).powf(p);
    Ok(-((-t).ln_1p() / p).exp_m1())
}

/// A feasible pair found by [`modulus_numeric`] together with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusEstimate {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `|x - y|` of the reported pair.
    pub separation: f64,
}

pub const MODULUS_RESTARTS: u64 = 16;
pub const DEFAULT_MODULUS_BUDGET: usize = 3000;
/// Allowed deviation of `|x|`, `|y|` from 1 and of `|x - y|` from `eps`.
pub const CONSTRAINT_TOL: f64 = 1e-10;
const OBJECTIVE_TOL: f64 = 1e-12;

/// Numeric upper estimate of the modulus of `l_p^d`.
///
/// Every candidate pair is feasible by construction: `x = u / |u|`, and `y`
/// is found on the normalised arc `t -> (x cos t + w sin t) / |.|`, which
/// joins `x` to `-x`, by solving `|x - y(t)| = eps` in `t`. A simplex search
/// then minimises `1 - |(x + y) / 2|` over `(u, w)` from
/// [`MODULUS_RESTARTS`] seeded starting points. `budget` caps the simplex
/// iterations per restart.
pub fn modulus_numeric(space: &SpaceSpec, eps: f64, seed: u64, budget: usize) -> Result<ModulusEstimate> {
    check_eps(eps)?;
    let d = space.dim;

    // For p > 1 the norm is strictly convex, so |x - y| = 2 forces y = -x.
    if eps == 2.0 || d == 1 {
        return Ok(one_dimensional(space, eps, d));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..MODULUS_RESTARTS {
        let mut r = rng(derive_seed(seed, restart));
        let start: Vec<f64> = (0..2 * d).map(|_| r.sample(StandardNormal)).collect();
        let objective = |z: &[f64]| match arc_pair(space, eps, &z[..d], &z[d..]) {
            Some((x, y)) => {
                let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                1.0 - space.norm(&mid)
            }
            None => f64::INFINITY,
        };
        let first = nelder_mead::minimize(objective, &start, 0.5, budget, OBJECTIVE_TOL);
        let remaining = budget.saturating_sub(first.iterations).max(budget / 4);
        let polished = nelder_mead::minimize(objective, &first.point, 0.05, remaining, OBJECTIVE_TOL);
        let candidate = if polished.value <= first.value { polished } else { first };
        if candidate.value.is_finite() && best.as_ref().is_none_or(|(v, _)| candidate.value < *v) {
            best = Some((candidate.value, candidate.point));
        }
    }

    let (_, z) =
        best.ok_or_else(|| Error::Convergence(format!("no feasible pair found for eps = {eps} within budget")))?;
    let (x, y) = arc_pair(space, eps, &z[..d], &z[d..])
        .ok_or_else(|| Error::Convergence("best pair became infeasible".into()))?;
    let separation = space.distance(&x, &y);
    let unit_err = (space.norm(&x) - 1.0).abs().max((space.norm(&y) - 1.0).abs());
    if (separation - eps).abs() > CONSTRAINT_TOL || unit_err > CONSTRAINT_TOL {
        return Err(Error::Convergence(format!(
            "constraint residual {:.3e} exceeds {CONSTRAINT_TOL:e}",
            (separation - eps).abs().max(unit_err)
        )));
    }
    let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(ModulusEstimate {
        value: 1.0 - space.norm(&mid),
        x,
        y,
        separation,
    })
}

/// Exact answer when only antipodal pairs are feasible (`eps = 2`, or `d = 1`
/// where the unit sphere is `{-1, 1}`).
fn one_dimensional(space: &SpaceSpec, eps: f64, d: usize) -> ModulusEstimate {
    let mut best: Option<ModulusEstimate> = None;
    for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        x[0] = sx;
        y[0] = sy;
        let separation = space.distance(&x, &y);
        if separation < eps {
            continue;
        }
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let value = 1.0 - space.norm(&mid);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(ModulusEstimate {
                value,
                x,
                y,
                separation,
            });
        }
    }
    best.expect("the antipodal pattern is always feasible")
}

fn normalized(space: &SpaceSpec, v: Vec<f64>) -> Option<Vec<f64>> {
    let n = space.norm(&v);
    if n > 1e-12 && n.is_finite() {
        Some(v.into_iter().map(|x| x / n).collect())
    } else {
        None
    }
}

fn arc_pair(space: &SpaceSpec, eps: f64, u: &[f64], w: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let x = normalized(space, u.to_vec())?;
    let point = |t: f64| -> Option<Vec<f64>> {
        let (s, c) = t.sin_cos();
        normalized(space, x.iter().zip(w).map(|(xi, wi)| c * xi + s * wi).collect())
    };
    let gap = |t: f64| -> Option<f64> { Some(space.distance(&x, &point(t)?) - eps) };

    // gap(0) = -eps < 0 and gap(pi) = 2 - eps > 0; Illinois false position.
    let (mut lo, mut hi) = (0.0_f64, std::f64::consts::PI);
    let (mut g_lo, mut g_hi) = (-eps, 2.0 - eps);
    let mut side = 0i8;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        t = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let g = gap(t)?;
        if g.abs() <= 1e-14 || hi - lo <= 1e-15 {
            break;
        }
        if g < 0.0 {
            lo = t;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    let y = point(t)?;
    Some((x, y))
}

/// Whether a [`ConvexityProfile`] constant was derived in closed form or fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSource {
    Analytic,
    Numeric,
    /// Given by the caller.
    Supplied,
}

/// A type-`p` witness: `delta(eps) >= c * eps^p_type` on `(0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProfile {
    pub p_type: f64,
    pub c: f64,
    pub source: ProfileSource,
}

/// Shrink factor applied to numerically fitted constants.
pub const NUMERIC_SAFETY: f64 = 0.9;
const PROFILE_FIT_GRID: usize = 20;
const PROFILE_SEED: u64 = 0x5eed;

impl ConvexityProfile {
    /// A profile with an explicit constant, for callers that know their own `c`.
    pub fn new(p_type: f64, c: f64, source: ProfileSource) -> Result<Self> {
        if !(p_type >= 2.0 && p_type.is_finite()) {
            return Err(Error::domain(format!("convexity type {p_type} must be >= 2")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("convexity constant {c} must be positive")));
        }
        Ok(ConvexityProfile { p_type, c, source })
    }

    /// Numerically fitted constants are not certified.
    pub fn is_rigorous(&self) -> bool {
        self.source != ProfileSource::Numeric
    }
}

/// The standard profile of `l_p^d`.
///
/// For `p >= 2` this is `(p, 1 / (p 2^p))`, valid on all of `(0, 2]` because
/// `(1 - t)^(1/p) <= 1 - t/p`. For `1 < p < 2` the type is 2 and `c` is the
/// smallest ratio `delta(eps) / eps^2` seen on a grid, shrunk by
/// [`NUMERIC_SAFETY`]; such profiles are marked numeric.
pub fn convexity_profile(space: &SpaceSpec) -> Result<ConvexityProfile> {
    let p = space.p;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::domain(format!("p = {p} must lie in (1, inf)")));
    }
    if p >= 2.0 {
        return ConvexityProfile::new(p, 1.0 / (p * 2f64.powf(p)), ProfileSource::Analytic);
    }
    // l_p^d contains l_p^2 isometrically and sits inside L_p, so for d >= 2
    // its modulus is that of l_p^2.
    let plane = SpaceSpec::new(p, space.dim.min(2))?;
    let mut c = f64::INFINITY;
    for k in 1..=PROFILE_FIT_GRID {
        let eps = 2.0 * k as f64 / PROFILE_FIT_GRID as f64;
        let est = modulus_numeric(&plane, eps, PROFILE_SEED, DEFAULT_MODULUS_BUDGET)?;
        c = c.min(est.value / (eps * eps));
    }
    ConvexityProfile::new(2.0, NUMERIC_SAFETY * c, ProfileSource::Numeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(p: f64, dim: usize) -> SpaceSpec {
        SpaceSpec::new(p, dim).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm_value(&space(2.0, 2), &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(norm_value(&space(3.3, 3), &[0.0; 3]).unwrap(), 0.0);
        let v = norm_value(&space(4.0, 2), &[1.0, 1.0]).unwrap();
        assert!((v - 2f64.powf(0.25)).abs() < 1e-15);
        assert!((v - 1.189207).abs() < 1e-6);
        assert!(matches!(
            norm_value(&space(2.0, 3), &[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn norm_handles_huge_coordinates() {
        let v = space(3.0, 2).norm(&[1e200, 1e200]);
        assert!((v / 1e200 - 2f64.powf(1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn space_validation() {
        assert!(SpaceSpec::new(1.0, 2).is_err());
        assert!(SpaceSpec::new(f64::INFINITY, 2).is_err());
        assert!(SpaceSpec::new(2.0, 0).is_err());
        let parsed: std::result::Result<SpaceSpec, _> = serde_json::from_str(r#"{"p":0.5,"dim":2}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = space(3.0, 3);
        let x = [0.7, -1.3, 0.0];
        let mut g = [0.0; 3];
        s.norm_gradient(&x, &mut g);
        for i in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (s.norm(&xp) - s.norm(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn analytic_examples() {
        let l2 = space(2.0, 3);
        assert_eq!(modulus_analytic(&l2, 2.0).unwrap(), 1.0);
        let v = modulus_analytic(&l2, 1.0).unwrap();
        assert!((v - (1.0 - 3f64.sqrt() / 2.0)).abs() < 1e-15);
        assert!((v - 0.133975).abs() < 1e-6);
        let v4 = modulus_analytic(&space(4.0, 2), 1.0).unwrap();
        assert!((v4 - (1.0 - 0.9375f64.powf(0.25))).abs() < 1e-15);
        assert!((v4 - 0.016005).abs() < 1e-6);
    }

    #[test]
    fn analytic_errors() {
        assert!(matches!(modulus_analytic(&space(2.0, 2), 0.0), Err(Error::Domain(_))));
        assert!(matches!(modulus_analytic(&space(2.0, 2), 2.5), Err(Error::Domain(_))));
        assert!(matches!(
            modulus_analytic(&space(1.5, 2), 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn analytic_is_nondecreasing() {
        for p in [2.0, 2.5, 3.0, 4.0, 7.0] {
            let s = space(p, 2);
            let mut prev = 0.0;
            for k in 1..=1000 {
                let v = modulus_analytic(&s, 2.0 * k as f64 / 1000.0).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn hilbert_small_eps_ratio() {
        let s = space(2.0, 2);
        let mut prev_gap = f64::INFINITY;
        for k in 1..8 {
            let eps = 10f64.powi(-k);
            let ratio = modulus_analytic(&s, eps).unwrap() / (eps * eps);
            let gap = (ratio - 0.125).abs();
            assert!(ratio >= 0.125 - 1e-6);
            assert!(gap <= prev_gap + 1e-9);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-6);
    }

    #[test]
    fn numeric_examples() {
        let est = modulus_numeric(&space(2.0, 3), 1.0, 7, DEFAULT_MODULUS_BUDGET).unwrap();
        assert!((est.value - (1.0 - 3f64.sqrt() / 2.0)).abs() < 1e-4);
        assert!((est.separation - 1.0).abs() < CONSTRAINT_TOL);

        let s = space(4.0, 2);
        let est = modulus_numeric(&s, 0.5, 7, DEFAULT_MODULUS_BUDGET).unwrap();
        assert!((est.value - modulus_analytic(&s, 0.5).unwrap()).abs() < 1e-4);

        for (p, d) in [(2.0, 3), (1.5, 2), (4.0, 1)] {
            let est = modulus_numeric(&space(p, d), 2.0, 1, 10).unwrap();
            assert!((est.value - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn numeric_one_dimensional_is_exact() {
        let est = modulus_numeric(&space(3.0, 1), 0.3, 0, 10).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.separation, 2.0);
    }

    #[test]
    fn numeric_rejects_bad_eps() {
        assert!(matches!(
            modulus_numeric(&space(2.0, 2), -0.1, 0, 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn numeric_is_deterministic() {
        let s = space(3.0, 3);
        let a = modulus_numeric(&s, 0.8, 99, 500).unwrap();
        let b = modulus_numeric(&s, 0.8, 99, 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_profiles() {
        for (p, c) in [(2.0, 0.125), (3.0, 1.0 / 24.0), (4.0, 0.015625)] {
            let s = space(p, 3);
            let prof = convexity_profile(&s).unwrap();
            assert_eq!(prof.p_type, p);
            assert!((prof.c - c).abs() < 1e-15);
            assert!(prof.is_rigorous());
            for k in 1..=100 {
                let eps = 2.0 * k as f64 / 100.0;
                assert!(modulus_analytic(&s, eps).unwrap() >= prof.c * eps.powf(p));
            }
        }
    }

    #[test]
    fn numeric_profile_for_small_p() {
        let s = space(1.5, 4);
        let prof = convexity_profile(&s).unwrap();
        assert_eq!(prof.p_type, 2.0);
        assert_eq!(prof.source, ProfileSource::Numeric);
        assert!(!prof.is_rigorous());
        // delta of l_p, 1 < p < 2, behaves like (p - 1) eps^2 / 8 near 0.
        assert!(prof.c > 0.0 && prof.c < 0.0625 / 0.9 + 1e-9);
        assert!(convexity_profile(&space(1.5, 4)).unwrap() == prof);
    }
}
