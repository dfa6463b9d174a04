//! Piecewise-linear functions of endowment.
//!
//! A [`PwlFunction`] stores a value function sampled at a handful of knots and
//! linearly interpolated in between. The consecutive knot differences bound
//! the interpolation error of any nondecreasing function that agrees with it at
//! the knots, which is what the grid solvers and the refiners in [`refine`]
//! are built around.

pub mod refine;

pub use refine::{vg1_refine, vg2_refine, RefinementBudget};

use crate::error::{Error, Result};

/// Slack allowed when checking that knot values are nondecreasing. Knot values
/// come out of a numerical maximization, so exact ties can differ in the last
/// few ulps.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Queries this close outside the domain are clamped rather than rejected.
const DOMAIN_TOL: f64 = 1e-9;

/// A piecewise-linear function given by knots with strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PwlFunction {
    pub fn new(knots: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
        if xs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a piecewise-linear function needs at least 2 knots, got {}",
                xs.len()
            )));
        }
        if let Some(bad) = xs.iter().chain(&ys).find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite knot coordinate {bad}"
            )));
        }
        for w in xs.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateKnot(w[0]));
            }
            if w[1] < w[0] {
                return Err(Error::InvalidArgument(format!(
                    "knot abscissae must be strictly increasing ({} after {})",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self { xs, ys })
    }

    /// `slope * d` on `[0, hi]`.
    pub fn linear(hi: f64, slope: f64) -> Result<Self> {
        Self::new([(0.0, 0.0), (hi, slope * hi)])
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Linear interpolation on the bracketing segment. Queries outside the
    /// domain are errors; there is no extrapolation.
    pub fn eval(&self, d: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(d >= lo - DOMAIN_TOL && d <= hi + DOMAIN_TOL) {
            return Err(Error::OutOfDomain { d, lo, hi });
        }
        Ok(self.eval_clamped(d))
    }

    /// Interpolates after clamping `d` into the domain.
    pub fn eval_clamped(&self, d: f64) -> f64 {
        let last = self.xs.len() - 1;
        if d <= self.xs[0] {
            return self.ys[0];
        }
        if d >= self.xs[last] {
            return self.ys[last];
        }
        // first knot strictly greater than d; 1 <= j <= last
        let j = self.xs.partition_point(|&x| x <= d);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.ys[j - 1], self.ys[j]);
        if d == x0 {
            return y0;
        }
        y0 + (y1 - y0) / (x1 - x0) * (d - x0)
    }

    /// Returns a copy with `(d, v)` inserted at its sorted position.
    pub fn insert_knot(&self, d: f64, v: f64) -> Result<Self> {
        let (lo, hi) = self.domain();
        if !(d >= lo && d <= hi) {
            return Err(Error::OutOfDomain { d, lo, hi });
        }
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite knot value {v}")));
        }
        let pos = self.xs.partition_point(|&x| x < d);
        if pos < self.xs.len() && self.xs[pos] == d {
            return Err(Error::DuplicateKnot(d));
        }
        let mut out = self.clone();
        out.xs.insert(pos, d);
        out.ys.insert(pos, v);
        Ok(out)
    }

    /// Largest consecutive knot-value difference and the index of its
    /// interval (lowest index on ties). Fails if the knot values decrease by
    /// more than [`MONOTONE_TOL`].
    pub fn max_consecutive_delta(&self) -> Result<(f64, usize)> {
        let mut best = (0.0_f64, 0_usize);
        for i in 0..self.ys.len() - 1 {
            let delta = self.ys[i + 1] - self.ys[i];
            if delta < -MONOTONE_TOL * self.ys[i].abs().max(1.0) {
                return Err(Error::NonMonotone { interval: i });
            }
            if delta > best.0 {
                best = (delta, i);
            }
        }
        Ok(best)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.max_consecutive_delta().is_ok()
    }

    /// The same function plus a constant.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y + offset).collect(),
        }
    }

    /// Restriction to `[lo, hi]`, which must lie inside the domain. Knots are
    /// added at the new endpoints when they fall between existing ones.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let (dlo, dhi) = self.domain();
        if !(lo < hi) || lo < dlo || hi > dhi {
            return Err(Error::InvalidArgument(format!(
                "cannot restrict [{dlo}, {dhi}] to [{lo}, {hi}]"
            )));
        }
        let mut knots = vec![(lo, self.eval_clamped(lo))];
        knots.extend(self.knots().filter(|&(x, _)| x > lo && x < hi));
        knots.push((hi, self.eval_clamped(hi)));
        Self::new(knots)
    }

    /// Built from knots already known to be sorted and distinct.
    pub(crate) fn from_sorted_unchecked(knots: Vec<(f64, f64)>) -> Self {
        debug_assert!(knots.windows(2).all(|w| w[0].0 < w[1].0));
        let (xs, ys) = knots.into_iter().unzip();
        Self { xs, ys }
    }
}
