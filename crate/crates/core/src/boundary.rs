//! Boundary maps `h: [0,1] -> [0,1]` prescribing where particles end up.
//!
//! The final-time coupling sends a particle starting at `x` to the cone
//! point `[h(x), sqrt(|h'(x)|)]`: the radius carries the square root of the
//! Jacobian so that the terminal homogeneous marginal is again uniform.

use crate::error::{Error, Result};

/// Continuous piecewise-linear map given by knots and values.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearMap {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseLinearMap {
    /// Knots must start at 0, end at 1, and be strictly increasing; values
    /// must stay in `[0, 1]` and every piece must have nonzero slope.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let slopes: Vec<f64> = breakpoints
            .windows(2)
            .zip(values.windows(2))
            .map(|(b, v)| (v[1] - v[0]) / (b[1] - b[0]))
            .collect();
        Self::validated(breakpoints, values, slopes)
    }

    /// Same map specified by slopes and the value at 0; knot values are
    /// integrated from the left and the given slopes are kept exactly
    /// (re-deriving them from the values would perturb the Jacobian in the
    /// last digit).
    pub fn from_slopes(breakpoints: Vec<f64>, slopes: Vec<f64>, h0: f64) -> Result<Self> {
        if breakpoints.len() != slopes.len() + 1 {
            return Err(Error::BoundaryMap(format!(
                "need one slope per piece: {} breakpoints but {} slopes",
                breakpoints.len(),
                slopes.len()
            )));
        }
        let mut values = vec![h0];
        for (w, s) in breakpoints.windows(2).zip(&slopes) {
            values.push(values.last().unwrap() + s * (w[1] - w[0]));
        }
        Self::validated(breakpoints, values, slopes)
    }

    fn validated(breakpoints: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints.len() != values.len() {
            return Err(Error::BoundaryMap(format!(
                "need matching breakpoint/value lists of length >= 2, got {} and {}",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::BoundaryMap("breakpoints must cover [0, 1]".into()));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::BoundaryMap("breakpoints must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::BoundaryMap("values must lie in [0, 1]".into()));
        }
        if slopes.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::BoundaryMap(
                "every piece needs a nonzero slope so the Jacobian stays positive".into(),
            ));
        }
        Ok(Self { breakpoints, values, slopes })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piece index whose closed right end contains `x`, so interior
    /// breakpoints use the left piece's slope.
    fn piece(&self, x: f64) -> usize {
        if x <= self.breakpoints[0] {
            return 0;
        }
        match self.breakpoints.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(k) => k.saturating_sub(1).min(self.slopes.len() - 1),
            Err(k) => (k - 1).min(self.slopes.len() - 1),
        }
    }
}

/// Boundary condition for the terminal coupling.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryMap {
    /// `h(x) = x`; particles return to their starting base point.
    Identity,
    /// `h(x) = 1 - x`; measure preserving but orientation reversing, only
    /// realizable by a non-deterministic plan.
    Reflection,
    PiecewiseLinear(PiecewiseLinearMap),
}

impl BoundaryMap {
    /// Two-slope map with a Jacobian jump at `x = 0.5` (slopes 1.4 and 0.6),
    /// the peakon-like reference experiment.
    pub fn peakon() -> Self {
        BoundaryMap::PiecewiseLinear(
            PiecewiseLinearMap::from_slopes(vec![0.0, 0.5, 1.0], vec![1.4, 0.6], 0.0)
                .expect("static preset is valid"),
        )
    }

    /// Map value and Jacobian magnitude `|h'(x)|` at `x`. Interior
    /// breakpoints of piecewise-linear maps report the left piece's slope.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(Error::BaseCoordinate(x));
        }
        Ok(match self {
            BoundaryMap::Identity => (x, 1.0),
            BoundaryMap::Reflection => (1.0 - x, 1.0),
            BoundaryMap::PiecewiseLinear(map) => {
                let k = map.piece(x);
                let h = map.values[k] + map.slopes[k] * (x - map.breakpoints[k]);
                (h.clamp(0.0, 1.0), map.slopes[k].abs())
            }
        })
    }
}

/// Map value and Jacobian magnitude at `x`.
pub fn boundary_eval(map: &BoundaryMap, x: f64) -> Result<(f64, f64)> {
    map.eval(x)
}
