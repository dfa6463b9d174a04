//! Small hand-checkable instances used by tests and examples.

use crate::auction::{BidDistribution, Bundle, Mode, ProblemSpec, ResidualSpec};

fn bundle(members: &[u32], value: f64) -> Bundle {
    Bundle {
        members: members.to_vec(),
        value,
    }
}

fn coin() -> BidDistribution {
    BidDistribution::Multinomial {
        probs: vec![0.5, 0.5],
    }
}

/// One resource worth 10, endowment 2, high bid 0 or 1 with equal odds,
/// `f(d) = 0.7d`. Optimal: bid 2 for a sure 10.
pub fn single_resource() -> ProblemSpec {
    ProblemSpec {
        n: 1,
        bundles: vec![bundle(&[1], 10.0)],
        endowment: 2.0,
        residual: ResidualSpec::Linear { linear_slope: 0.7 },
        distributions: vec![coin()],
        mode: Mode::Discrete,
    }
}

/// Bundles `{r1, r2}` worth 10 and `{r2}` worth 4, endowment 3, both high
/// bids 0 or 1 with equal odds. Optimal start value 7.35 bidding 1.
pub fn two_resource() -> ProblemSpec {
    ProblemSpec {
        n: 2,
        bundles: vec![bundle(&[1, 2], 10.0), bundle(&[2], 4.0)],
        endowment: 3.0,
        residual: ResidualSpec::Linear { linear_slope: 0.7 },
        distributions: vec![coin(), coin()],
        mode: Mode::Discrete,
    }
}

/// One resource worth 10, endowment 2, high bid `N(1, 0.5²)` truncated at 0.
pub fn single_resource_continuous() -> ProblemSpec {
    ProblemSpec {
        n: 1,
        bundles: vec![bundle(&[1], 10.0)],
        endowment: 2.0,
        residual: ResidualSpec::Linear { linear_slope: 0.7 },
        distributions: vec![BidDistribution::Gaussian {
            mean: 1.0,
            std: 0.5,
        }],
        mode: Mode::Continuous,
    }
}
