//! Monte Carlo rounds under arbitrary bidders, and error measurement of
//! approximate solutions against the exact discrete solution.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::auction::{Holdings, Problem, ResourceIndex, WinModel};
use crate::continuous::{greedy_bid, HybridValueFunction, MaximizerConfig};
use crate::discrete::{BidTable, DiscretePolicy, DiscreteValueSolution};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// `((e - v) / v)²` when `v >= 1`, otherwise `(e - v)²`.
pub fn relative_sq_error(estimate: f64, truth: f64) -> f64 {
    let diff = estimate - truth;
    if truth >= 1.0 {
        (diff / truth).powi(2)
    } else {
        diff * diff
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Anything that can bid in a round.
pub trait Bidder {
    fn bid(&self, stage: usize, h: Holdings, d: f64) -> Result<f64>;
}

impl<F> Bidder for F
where
    F: Fn(usize, Holdings, f64) -> f64,
{
    fn bid(&self, stage: usize, h: Holdings, d: f64) -> Result<f64> {
        Ok(self(stage, h, d))
    }
}

fn integer_endowment(d: f64) -> Result<u32> {
    if d < 0.0 || d.fract() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "a discrete policy needs an integer endowment, got {d}"
        )));
    }
    Ok(d as u32)
}

impl Bidder for DiscreteValueSolution {
    fn bid(&self, stage: usize, h: Holdings, d: f64) -> Result<f64> {
        Ok(DiscretePolicy::bid(self, stage, h, integer_endowment(d)?)? as f64)
    }
}

impl Bidder for BidTable {
    fn bid(&self, stage: usize, h: Holdings, d: f64) -> Result<f64> {
        Ok(DiscretePolicy::bid(self, stage, h, integer_endowment(d)?)? as f64)
    }
}

/// Bids by maximizing one step ahead against a stored value function.
pub struct GreedyBidder<'a> {
    pub values: &'a HybridValueFunction,
    pub problem: &'a Problem,
    pub cfg: MaximizerConfig,
}

impl Bidder for GreedyBidder<'_> {
    fn bid(&self, stage: usize, h: Holdings, d: f64) -> Result<f64> {
        greedy_bid(
            self.values,
            h,
            d,
            stage,
            self.problem.win_model(stage),
            &self.cfg,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub high_bid: f64,
    pub bid: f64,
    pub won: bool,
    pub endowment_after: f64,
}

/// Everything that happened in one simulated round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub auctions: Vec<AuctionOutcome>,
    pub holdings: Holdings,
    pub endowment: f64,
    pub utility: f64,
}

fn sample_high_bid(win: &WinModel, rng: &mut Rng) -> f64 {
    match win {
        WinModel::Multinomial { probs, .. } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (level, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return level as f64;
                }
            }
            // rounding left a sliver above the last cumulative sum
            probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as f64
        }
        WinModel::Gaussian(g) => {
            let normal = Normal::new(g.mean(), g.std()).expect("validated parameters");
            loop {
                let w = normal.sample(rng);
                if w >= 0.0 {
                    return w;
                }
            }
        }
    }
}

/// One round of auctions with high bids drawn from the problem's
/// distributions. The agent wins an auction only by bidding strictly more
/// than the high bid.
pub fn simulate_round<B: Bidder + ?Sized>(
    problem: &Problem,
    bidder: &B,
    seed: u64,
) -> Result<RoundTrace> {
    let mut rng = rng_from_seed(seed);
    let mut h = Holdings::EMPTY;
    let mut d = problem.endowment();
    let mut auctions = Vec::with_capacity(problem.n());
    for t in 0..problem.n() {
        let high_bid = sample_high_bid(problem.win_model(t), &mut rng);
        let bid = bidder.bid(t, h, d)?;
        if bid > d {
            return Err(Error::BidExceedsEndowment { bid, endowment: d });
        }
        if !(bid >= 0.0) {
            return Err(Error::InvalidArgument(format!("bid {bid} is negative")));
        }
        let won = bid > high_bid;
        if won {
            h = h.with(ResourceIndex::auctioned_at(t));
            d -= bid;
        }
        auctions.push(AuctionOutcome {
            high_bid,
            bid,
            won,
            endowment_after: d,
        });
    }
    Ok(RoundTrace {
        auctions,
        holdings: h,
        endowment: d,
        utility: problem.terminal_value(h, d)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean and standard error of utility over `rounds` rounds, round `i`
/// seeded by `derive_seed(seed, i)`.
pub fn estimate_policy_value<B: Bidder + Sync + ?Sized>(
    problem: &Problem,
    bidder: &B,
    rounds: usize,
    seed: u64,
) -> Result<PolicyEstimate> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("need at least one round".into()));
    }
    let utilities = (0..rounds as u64)
        .into_par_iter()
        .map(|i| simulate_round(problem, bidder, derive_seed(seed, i)).map(|r| r.utility))
        .collect::<Result<Vec<f64>>>()?;
    let n = rounds as f64;
    let mean = utilities
        .iter()
        .copied()
        .collect::<CompensatedSum>()
        .total()
        / n;
    let stderr = if rounds > 1 {
        let ss = utilities
            .iter()
            .map(|u| (u - mean).powi(2))
            .collect::<CompensatedSum>()
            .total();
        (ss / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(PolicyEstimate { mean, stderr })
}

/// Values and bids of a solution at integer endowments, for comparison.
pub trait ApproxSolution: Sync {
    fn n(&self) -> usize;
    fn max_endowment(&self) -> f64;
    fn value(&self, t: usize, h: Holdings, d: u32) -> Result<f64>;
    fn bid(&self, t: usize, h: Holdings, d: u32) -> Result<f64>;
}

impl ApproxSolution for DiscreteValueSolution {
    fn n(&self) -> usize {
        DiscreteValueSolution::n(self)
    }

    fn max_endowment(&self) -> f64 {
        self.endowment() as f64
    }

    fn value(&self, t: usize, h: Holdings, d: u32) -> Result<f64> {
        DiscreteValueSolution::value(self, t, h, d)
    }

    fn bid(&self, t: usize, h: Holdings, d: u32) -> Result<f64> {
        Ok(DiscreteValueSolution::bid(self, t, h, d)? as f64)
    }
}

/// A grid solution read through its interpolated values and greedy bids.
pub struct GridApprox<'a> {
    pub values: &'a HybridValueFunction,
    /// The continuous problem the grid was solved on.
    pub problem: &'a Problem,
    pub cfg: MaximizerConfig,
}

impl ApproxSolution for GridApprox<'_> {
    fn n(&self) -> usize {
        self.values.n()
    }

    fn max_endowment(&self) -> f64 {
        self.values.max_endowment()
    }

    fn value(&self, t: usize, h: Holdings, d: u32) -> Result<f64> {
        self.values.eval(t, h, d as f64)
    }

    fn bid(&self, t: usize, h: Holdings, d: u32) -> Result<f64> {
        greedy_bid(
            self.values,
            h,
            d as f64,
            t,
            self.problem.win_model(t),
            &self.cfg,
        )
    }
}

/// Mean and max squared errors over a set of states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub mean_value_err: f64,
    pub max_value_err: f64,
    pub mean_policy_err: f64,
    pub max_policy_err: f64,
    pub states: usize,
}

impl ErrorStats {
    fn from_samples(samples: &[(f64, f64)]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        Self {
            mean_value_err: samples
                .iter()
                .map(|s| s.0)
                .collect::<CompensatedSum>()
                .total()
                / n,
            max_value_err: samples.iter().map(|s| s.0).fold(0.0, f64::max),
            mean_policy_err: samples
                .iter()
                .map(|s| s.1)
                .collect::<CompensatedSum>()
                .total()
                / n,
            max_policy_err: samples.iter().map(|s| s.1).fold(0.0, f64::max),
            states: samples.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// One entry per stage `0..n`.
    pub stages: Vec<ErrorStats>,
    pub aggregate: ErrorStats,
    /// States the approximate solver evaluated.
    pub state_count: usize,
}

impl ErrorReport {
    /// `stage,mean_value_err,max_value_err,mean_policy_err,max_policy_err,states`
    /// with a final `all` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "stage",
            "mean_value_err",
            "max_value_err",
            "mean_policy_err",
            "max_policy_err",
            "states",
        ])?;
        let rows = self
            .stages
            .iter()
            .enumerate()
            .map(|(t, s)| (t.to_string(), s))
            .chain(std::iter::once(("all".to_string(), &self.aggregate)));
        for (label, s) in rows {
            w.write_record(&[
                label,
                s.mean_value_err.to_string(),
                s.max_value_err.to_string(),
                s.mean_policy_err.to_string(),
                s.max_policy_err.to_string(),
                s.states.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Squared value and policy errors of `approx` at every unsettled state of
/// `exact`, over integer endowments `0..=e`.
pub fn compare_solutions<A: ApproxSolution + ?Sized>(
    exact: &DiscreteValueSolution,
    approx: &A,
    state_count: usize,
) -> Result<ErrorReport> {
    if approx.n() != exact.n() {
        return Err(Error::InstanceMismatch(format!(
            "{} auctions against {}",
            approx.n(),
            exact.n()
        )));
    }
    if approx.max_endowment() < exact.endowment() as f64 {
        return Err(Error::InstanceMismatch(format!(
            "approximation covers endowments up to {}, exact solution up to {}",
            approx.max_endowment(),
            exact.endowment()
        )));
    }
    let n = exact.n();
    let e = exact.endowment();
    let pairs: Vec<(usize, Holdings)> = exact.unsettled_pairs().collect();
    let per_pair = pairs
        .par_iter()
        .map(|&(t, h)| {
            (0..=e)
                .map(|d| {
                    let v = exact.value(t, h, d)?;
                    let b = exact.bid(t, h, d)? as f64;
                    Ok((
                        relative_sq_error(approx.value(t, h, d)?, v),
                        relative_sq_error(approx.bid(t, h, d)?, b),
                    ))
                })
                .collect::<Result<Vec<_>>>()
                .map(|errs| (t, errs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut by_stage: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    for (t, errs) in per_pair {
        by_stage[t].extend(errs);
    }
    let all: Vec<(f64, f64)> = by_stage.iter().flatten().copied().collect();
    Ok(ErrorReport {
        stages: by_stage
            .iter()
            .map(|s| ErrorStats::from_samples(s))
            .collect(),
        aggregate: ErrorStats::from_samples(&all),
        state_count,
    })
}
