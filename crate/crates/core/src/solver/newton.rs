//! Scalar dual update: safeguarded Newton on a log-sum-exp residual.
//!
//! Each base node's second-moment constraint reduces to solving
//!
//! ```text
//! F(p) = sum_j B_j exp(p r_j^2) r_j^2 - target = 0
//! ```
//!
//! for one scalar `p`, with `B_j >= 0` and `target > 0`. `F` is strictly
//! increasing and convex, so the root exists and is unique whenever some
//! `B_j > 0`. The solve works on `G(p) = log(sum_j exp(c_j + p s_j)) -
//! log(target)` with `c_j = log(B_j r_j^2)` and slopes `s_j = r_j^2`: `G`
//! is increasing and convex with derivative in `[min s, max s]`, which
//! makes Newton steps inside a sign-change bracket (bisection fallback)
//! globally convergent, and it is immune to over/underflow for the very
//! spread-out weights log-domain sweeps produce.

use crate::error::{Error, Result};

/// `|G| <= 1e-13` keeps the linear-domain residual `|F| = target*|e^G - 1|`
/// within the required `1e-12 * target`.
const G_TOL: f64 = 1e-13;
const MAX_ITER: usize = 200;
const BRACKET_LIMIT: f64 = 1e9;

/// Value and derivative of `G` at `p`.
fn eval(log_terms: &[f64], slopes: &[f64], log_target: f64, p: f64) -> (f64, f64) {
    let mut m = f64::NEG_INFINITY;
    for (c, s) in log_terms.iter().zip(slopes) {
        let t = c + p * s;
        if t > m {
            m = t;
        }
    }
    debug_assert!(m.is_finite());
    let mut sum = 0.0;
    let mut dsum = 0.0;
    for (c, s) in log_terms.iter().zip(slopes) {
        let w = (c + p * s - m).exp();
        sum += w;
        dsum += w * s;
    }
    (m + sum.ln() - log_target, dsum / sum)
}

/// Root of `G` for one node. `log_terms[j] = log(B_j r_j^2)` may be
/// `-inf` (dropped); at least one entry must be finite.
pub(crate) fn solve_log_terms(log_terms: &[f64], slopes: &[f64], log_target: f64) -> Result<f64> {
    debug_assert_eq!(log_terms.len(), slopes.len());
    if !log_terms.iter().any(|c| c.is_finite()) {
        return Err(Error::RootSolve("no positive terms in dual update".into()));
    }

    // Sign-change bracket by doubling.
    let (mut lo, mut hi);
    let (g0, _) = eval(log_terms, slopes, log_target, 0.0);
    if g0 == 0.0 {
        return Ok(0.0);
    } else if g0 > 0.0 {
        hi = 0.0;
        let mut step = 1.0;
        loop {
            let p = hi - step;
            let (g, _) = eval(log_terms, slopes, log_target, p);
            if g < 0.0 {
                lo = p;
                break;
            }
            hi = p;
            step *= 2.0;
            if step > BRACKET_LIMIT {
                return Err(Error::RootSolve("bracketing ran away downward".into()));
            }
        }
    } else {
        lo = 0.0;
        let mut step = 1.0;
        loop {
            let p = lo + step;
            let (g, _) = eval(log_terms, slopes, log_target, p);
            if g > 0.0 {
                hi = p;
                break;
            }
            lo = p;
            step *= 2.0;
            if step > BRACKET_LIMIT {
                return Err(Error::RootSolve("bracketing ran away upward".into()));
            }
        }
    }

    // Newton from the midpoint, bisecting whenever a step leaves the bracket.
    let mut p = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let (g, dg) = eval(log_terms, slopes, log_target, p);
        if g.abs() <= G_TOL {
            return Ok(p);
        }
        if g > 0.0 {
            hi = p;
        } else {
            lo = p;
        }
        let newton = p - g / dg;
        p = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::RootSolve(format!(
        "dual update did not reach |G| <= {G_TOL} in {MAX_ITER} iterations"
    )))
}
