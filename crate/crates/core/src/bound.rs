//! Lower bounds on the distortion of `T_n` from iterating the self-improvement map
//!
//! ```text
//! f(D) = D - K(D) / D^(p-1)
//! ```
//!
//! Any embedding of `T_n` with distortion `D` yields one of `T_1` with
//! distortion at most `f^m(D)`, `m = floor(log2 n)`, and that must be at
//! least one. The smallest `D` whose first `m` iterates all stay `>= 1` is
//! therefore a lower bound for `c(T_n)`.

use serde::{Deserialize, Serialize};

use crate::convexity::ConvexityProfile;
use crate::error::{Error, Result};
use crate::fork::ForkSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    Iterative,
    Asymptotic,
}

impl BoundMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundMethod::Iterative => "iterative",
            BoundMethod::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundResult {
    pub m: u64,
    pub profile: ConvexityProfile,
    pub tau: f64,
    pub value: f64,
    pub method: BoundMethod,
    /// Iterates `f^k(value)` for `k = 0..=m`, kept when `m` is small.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_sequence: Option<Vec<f64>>,
    /// Asymptotic values drop the unquantified lower-order terms.
    pub leading_order_only: bool,
    /// False when the coarse monotonicity check failed and a scan was used.
    pub monotonicity_validated: bool,
}

/// `D - K(D) / D^(p-1)`.
pub fn f_step(d: f64, profile: &ConvexityProfile, tau: f64) -> Result<f64> {
    let solver = ForkSolver::new(profile, tau)?;
    let (k, _) = solver.solve(d, None)?;
    Ok(d - k / d.powf(solver.p() - 1.0))
}

/// Outcome of iterating `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iteration {
    /// The last computed iterate.
    pub value: f64,
    /// Number of steps whose result stayed `>= 1`.
    pub survived: u64,
    /// Step (1-based) at which the iterate first dropped below 1.
    pub dropped_at: Option<u64>,
}

struct Chain {
    solver: ForkSolver,
}

impl Chain {
    fn run(&self, d: f64, m: u64, mut record: Option<&mut Vec<f64>>) -> Result<Iteration> {
        let mut x = d;
        let mut hint = None;
        if let Some(r) = record.as_deref_mut() {
            r.push(x);
        }
        for step in 1..=m {
            let (k, s) = self.solver.solve(x, hint)?;
            hint = Some(s);
            x -= k / x.powf(self.solver.p() - 1.0);
            if let Some(r) = record.as_deref_mut() {
                r.push(x);
            }
            if x < 1.0 {
                return Ok(Iteration {
                    value: x,
                    survived: step - 1,
                    dropped_at: Some(step),
                });
            }
        }
        Ok(Iteration {
            value: x,
            survived: m,
            dropped_at: None,
        })
    }

    fn survives(&self, d: f64, m: u64) -> Result<bool> {
        Ok(self.run(d, m, None)?.dropped_at.is_none())
    }
}

/// Applies `f` up to `m` times, stopping at the first iterate below 1.
pub fn f_iterate(d: f64, m: u64, profile: &ConvexityProfile, tau: f64) -> Result<Iteration> {
    Chain {
        solver: ForkSolver::new(profile, tau)?,
    }
    .run(d, m, None)
}

/// Relative width at which the bisection over `D` stops.
pub const BOUND_RTOL: f64 = 1e-9;
const MONOTONICITY_GRID: usize = 16;
const SEQUENCE_LIMIT: u64 = 4096;

/// The smallest `D >= 1` whose first `m` iterates under `f` all stay `>= 1`.
pub fn lower_bound_iterative(m: u32, profile: &ConvexityProfile, tau: f64) -> Result<LowerBoundResult> {
    lower_bound_iterative_u64(m as u64, profile, tau)
}

/// [`lower_bound_iterative`] for iteration counts beyond `u32`.
pub fn lower_bound_iterative_u64(m: u64, profile: &ConvexityProfile, tau: f64) -> Result<LowerBoundResult> {
    if m == 0 {
        return Err(Error::domain("iteration count m must be >= 1"));
    }
    let it = Chain {
        solver: ForkSolver::new(profile, tau)?,
    };
    let p = profile.p_type;

    let mut lo = 1.0_f64;
    let mut hi = (2.0 * p * profile.c * m as f64).powf(1.0 / p) + 2.0;
    let mut widen = 0;
    while !it.survives(hi, m)? {
        lo = hi;
        hi *= 2.0;
        widen += 1;
        if widen > 200 {
            return Err(Error::Convergence(format!("no surviving D found for m = {m}")));
        }
    }

    // The predicate must read false...false true...true along a coarse grid.
    let grid: Vec<f64> = (0..=MONOTONICITY_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / MONOTONICITY_GRID as f64)
        .collect();
    let flags = grid.iter().map(|&d| it.survives(d, m)).collect::<Result<Vec<bool>>>()?;
    let monotone = flags.windows(2).all(|w| w[0] <= w[1]);
    if monotone {
        let first = flags.iter().position(|&f| f).expect("hi survives");
        if first > 0 {
            lo = grid[first - 1];
        }
        hi = grid[first];
    } else {
        // Ascending scan for the first surviving value, refined below.
        let steps = 4096;
        let h = (hi - lo) / steps as f64;
        let mut prev = lo;
        for i in 1..=steps {
            let d = lo + h * i as f64;
            if it.survives(d, m)? {
                hi = d;
                break;
            }
            prev = d;
        }
        lo = prev;
    }

    while hi - lo > BOUND_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if it.survives(mid, m)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let d_sequence = if m <= SEQUENCE_LIMIT {
        let mut seq = Vec::with_capacity(m as usize + 1);
        it.run(hi, m, Some(&mut seq))?;
        Some(seq)
    } else {
        None
    };
    Ok(LowerBoundResult {
        m,
        profile: *profile,
        tau,
        value: hi,
        method: BoundMethod::Iterative,
        d_sequence,
        leading_order_only: false,
        monotonicity_validated: monotone,
    })
}

/// Leading-order bound `(p c / 2)^(1/p) m^(1/p)`.
///
/// Lower-order terms are not known explicitly, so this value is never used
/// as a certificate.
pub fn lower_bound_asymptotic(m: u64, profile: &ConvexityProfile) -> Result<LowerBoundResult> {
    if m == 0 {
        return Err(Error::domain("iteration count m must be >= 1"));
    }
    let p = profile.p_type;
    Ok(LowerBoundResult {
        m,
        profile: *profile,
        tau: 0.0,
        value: asymptotic_constant(profile) * (m as f64).powf(1.0 / p),
        method: BoundMethod::Asymptotic,
        d_sequence: None,
        leading_order_only: true,
        monotonicity_validated: true,
    })
}

/// `(p c / 2)^(1/p)`.
pub fn asymptotic_constant(profile: &ConvexityProfile) -> f64 {
    (profile.p_type * profile.c / 2.0).powf(1.0 / profile.p_type)
}

/// `floor(log2 n)` for `n >= 1`.
pub fn iteration_count(n: u64) -> Result<u32> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    Ok(n.ilog2())
}
