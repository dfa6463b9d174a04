//! Variable-grid refinement of a piecewise-linear approximation.
//!
//! Both refiners start from the domain endpoints and repeatedly add knots
//! where an externally supplied evaluator is called. [`vg1_refine`] bisects
//! the interval whose knot values differ most, which shrinks the a-posteriori
//! error bound fastest. [`vg2_refine`] expands the knot whose introduction
//! changed the interpolant most (its error reduction factor), adding a pair
//! of flanking knots, so stretches where the function is linear stop
//! attracting knots.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::PwlFunction;
use crate::error::{Error, Result};

/// Intervals narrower than this are never split.
pub const MIN_SPLIT_WIDTH: f64 = 1e-9;

/// Priority keys closer than this are treated as ties and ordered by position.
const KEY_QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RefinementBudget {
    pub max_knots: usize,
    pub threshold: f64,
}

impl RefinementBudget {
    pub fn new(max_knots: usize, threshold: f64) -> Result<Self> {
        let budget = Self {
            max_knots,
            threshold,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_knots < 2 {
            return Err(Error::InvalidArgument(format!(
                "refinement budget needs max_knots >= 2, got {}",
                self.max_knots
            )));
        }
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "refinement threshold must be finite and >= 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Heap entry: larger key first, then smaller abscissa first.
#[derive(Debug, Clone, Copy)]
struct Entry {
    key: i64,
    priority: f64,
    pos: f64,
}

impl Entry {
    fn new(priority: f64, pos: f64) -> Self {
        let priority = priority.max(0.0);
        Self {
            key: (priority / KEY_QUANTUM).round().min(i64::MAX as f64) as i64,
            priority,
            pos,
        }
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then_with(|| other.pos.total_cmp(&self.pos))
    }
}

/// Sorted knot list with O(n) insertion; grids here hold tens of knots.
struct Knots(Vec<(f64, f64)>);

impl Knots {
    fn position(&self, d: f64) -> usize {
        self.0.partition_point(|&(x, _)| x < d)
    }

    fn insert(&mut self, d: f64, v: f64) {
        let pos = self.position(d);
        self.0.insert(pos, (d, v));
    }

    /// Chord prediction at `d` from the current interpolant.
    fn predict(&self, d: f64) -> f64 {
        let j = self.position(d).clamp(1, self.0.len() - 1);
        let (x0, y0) = self.0[j - 1];
        let (x1, y1) = self.0[j];
        y0 + (y1 - y0) / (x1 - x0) * (d - x0)
    }

    fn into_function(self) -> PwlFunction {
        PwlFunction::from_sorted_unchecked(self.0)
    }
}

fn check_domain(domain: (f64, f64)) -> Result<()> {
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "refinement domain [{lo}, {hi}] is empty or non-finite"
        )));
    }
    Ok(())
}

/// Largest-difference bisection (VG1).
///
/// Intervals sit in a max-priority queue keyed on their knot-value
/// difference. The top interval is split at its midpoint until the budget is
/// spent or the top difference falls below `budget.threshold`.
pub fn vg1_refine<F>(
    mut evaluate: F,
    domain: (f64, f64),
    budget: RefinementBudget,
) -> Result<PwlFunction>
where
    F: FnMut(f64) -> Result<f64>,
{
    budget.validate()?;
    check_domain(domain)?;
    let (lo, hi) = domain;
    let mut knots = Knots(vec![(lo, evaluate(lo)?), (hi, evaluate(hi)?)]);

    // keyed by interval left end; the right end is looked up when popped
    let mut queue = BinaryHeap::new();
    queue.push(Entry::new(knots.0[1].1 - knots.0[0].1, lo));

    while knots.0.len() < budget.max_knots {
        let Some(top) = queue.pop() else { break };
        if top.priority < budget.threshold {
            break;
        }
        let i = knots.position(top.pos);
        let (left, v_left) = knots.0[i];
        let (right, v_right) = knots.0[i + 1];
        if right - left < MIN_SPLIT_WIDTH {
            continue;
        }
        let mid = 0.5 * (left + right);
        let v_mid = evaluate(mid)?;
        knots.insert(mid, v_mid);
        queue.push(Entry::new(v_mid - v_left, left));
        queue.push(Entry::new(v_right - v_mid, mid));
    }
    Ok(knots.into_function())
}

/// Error-reduction-factor expansion (VG2).
///
/// Seeds the endpoints plus the midpoint, whose error reduction factor is its
/// distance from the chord. Each expansion pops the unexpanded interior knot
/// with the largest factor and bisects the intervals on both of its sides,
/// scoring each new knot against the interpolant just before it was added.
/// Endpoints are never expanded. Stops when fewer than two knots of budget
/// remain or the top factor falls below `budget.threshold`.
pub fn vg2_refine<F>(
    mut evaluate: F,
    domain: (f64, f64),
    budget: RefinementBudget,
) -> Result<PwlFunction>
where
    F: FnMut(f64) -> Result<f64>,
{
    budget.validate()?;
    check_domain(domain)?;
    let (lo, hi) = domain;
    let mut knots = Knots(vec![(lo, evaluate(lo)?), (hi, evaluate(hi)?)]);
    if budget.max_knots < 3 {
        return Ok(knots.into_function());
    }

    let mut queue = BinaryHeap::new();
    let mid = 0.5 * (lo + hi);
    let predicted = knots.predict(mid);
    let v_mid = evaluate(mid)?;
    knots.insert(mid, v_mid);
    queue.push(Entry::new((v_mid - predicted).abs(), mid));

    while knots.0.len() + 2 <= budget.max_knots {
        let Some(top) = queue.pop() else { break };
        if top.priority < budget.threshold {
            break;
        }
        let i = knots.position(top.pos);
        let center = knots.0[i].0;
        let left = knots.0[i - 1].0;
        let right = knots.0[i + 1].0;

        let mut fresh = Vec::with_capacity(2);
        for (a, b) in [(left, center), (center, right)] {
            if b - a < MIN_SPLIT_WIDTH {
                continue;
            }
            let d = 0.5 * (a + b);
            fresh.push((d, knots.predict(d)));
        }
        for (d, predicted) in fresh {
            let v = evaluate(d)?;
            knots.insert(d, v);
            queue.push(Entry::new((v - predicted).abs(), d));
        }
    }
    Ok(knots.into_function())
}
