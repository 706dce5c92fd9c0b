//! Influence kernels `phi(r) >= 0` weighting the interaction between two
//! agents at distance `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};

/// Nonnegative Lipschitz function of inter-agent distance.
///
/// Three families are supported, each with a Lipschitz bound that can be
/// derived in closed form:
///
/// * `Constant`: `phi(r) = value`.
/// * `PiecewiseLinear`: linear interpolation through `(r, phi(r))` knots,
///   held flat to the left of the first knot and to the right of the last.
/// * `RationalDecay`: `phi(r) = a / (1 + b r^2)^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InfluenceKernel {
    Constant { value: f64 },
    PiecewiseLinear { knots: Vec<[f64; 2]> },
    RationalDecay { a: f64, b: f64, p: f64 },
}

impl InfluenceKernel {
    pub fn constant(value: f64) -> Self {
        InfluenceKernel::Constant { value }
    }

    pub fn rational_decay(a: f64, b: f64, p: f64) -> Self {
        InfluenceKernel::RationalDecay { a, b, p }
    }

    pub fn piecewise_linear(knots: impl IntoIterator<Item = (f64, f64)>) -> Self {
        InfluenceKernel::PiecewiseLinear {
            knots: knots.into_iter().map(|(r, v)| [r, v]).collect(),
        }
    }

    /// The nonlinear default, `1 / (1 + r^2)`.
    pub fn inverse_square() -> Self {
        Self::rational_decay(1.0, 1.0, 1.0)
    }

    /// Checks parameter ranges. Knots with repeated abscissae describe a jump,
    /// which has no finite Lipschitz bound and is reported against H1.
    pub fn validate(&self) -> Result<()> {
        match self {
            InfluenceKernel::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "constant kernel value must be finite and >= 0, got {value}"
                    )));
                }
            }
            InfluenceKernel::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidParameter(
                        "piecewise-linear kernel needs at least one knot".into(),
                    ));
                }
                for &[r, v] in knots {
                    if !(r.is_finite() && r >= 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "knot abscissa must be finite and >= 0, got {r}"
                        )));
                    }
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "knot value must be finite and >= 0, got {v}"
                        )));
                    }
                }
                for w in knots.windows(2) {
                    if w[1][0] < w[0][0] {
                        return Err(Error::InvalidParameter(
                            "knot abscissae must be increasing".into(),
                        ));
                    }
                    if w[1][0] == w[0][0] && w[1][1] != w[0][1] {
                        return Err(Error::HypothesisViolation {
                            hypothesis: Hypothesis::H1,
                            detail: format!("kernel jumps at r = {}", w[0][0]),
                        });
                    }
                }
            }
            InfluenceKernel::RationalDecay { a, b, p } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidParameter(format!("a must be > 0, got {a}")));
                }
                if !(b.is_finite() && *b >= 0.0) {
                    return Err(Error::InvalidParameter(format!("b must be >= 0, got {b}")));
                }
                if !(p.is_finite() && *p >= 0.0) {
                    return Err(Error::InvalidParameter(format!("p must be >= 0, got {p}")));
                }
            }
        }
        Ok(())
    }

    /// Evaluates `phi(r)`. Never negative for a validated kernel.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            InfluenceKernel::Constant { value } => *value,
            InfluenceKernel::RationalDecay { .. } => self.eval_sq(r * r),
            InfluenceKernel::PiecewiseLinear { knots } => interpolate(knots, r),
        }
    }

    /// Evaluates `phi` from the squared distance, skipping the square root
    /// where the family allows it.
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        match self {
            InfluenceKernel::Constant { value } => *value,
            InfluenceKernel::RationalDecay { a, b, p } => {
                let base = 1.0 + b * r2;
                if *p == 1.0 {
                    a / base
                } else {
                    a * base.powf(-p)
                }
            }
            InfluenceKernel::PiecewiseLinear { knots } => interpolate(knots, r2.sqrt()),
        }
    }

    /// True when `phi` does not depend on the distance at all.
    pub fn is_constant(&self) -> bool {
        matches!(self, InfluenceKernel::Constant { .. })
    }

    /// Global Lipschitz constant on `[0, inf)`. Infinite when the knots
    /// describe a discontinuity.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            InfluenceKernel::Constant { .. } => 0.0,
            InfluenceKernel::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|w| {
                    let dr = w[1][0] - w[0][0];
                    let dv = (w[1][1] - w[0][1]).abs();
                    if dr > 0.0 {
                        dv / dr
                    } else if dv == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max),
            InfluenceKernel::RationalDecay { a, b, p } => {
                if *b == 0.0 || *p == 0.0 {
                    return 0.0;
                }
                // |phi'(r)| = 2abp r (1 + b r^2)^(-p-1), maximal at b r^2 = 1/(2p+1).
                let r_star = (1.0 / (b * (2.0 * p + 1.0))).sqrt();
                let base = 1.0 + b * r_star * r_star;
                2.0 * a * b * p * r_star * base.powf(-p - 1.0)
            }
        }
    }

    /// Points in `[lo, hi]` where the family can attain an interior extremum.
    pub(crate) fn critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        match self {
            InfluenceKernel::PiecewiseLinear { knots } => knots
                .iter()
                .map(|k| k[0])
                .filter(|&r| r >= lo && r <= hi)
                .collect(),
            // Constant is flat and rational decay is monotone in r.
            _ => Vec::new(),
        }
    }
}

fn interpolate(knots: &[[f64; 2]], r: f64) -> f64 {
    let first = knots[0];
    if r <= first[0] {
        return first[1];
    }
    let last = knots[knots.len() - 1];
    if r >= last[0] {
        return last[1];
    }
    // First knot strictly to the right of r.
    let hi = knots.partition_point(|k| k[0] <= r);
    let [r0, v0] = knots[hi - 1];
    let [r1, v1] = knots[hi];
    let s = (r - r0) / (r1 - r0);
    v0 + s * (v1 - v0)
}
