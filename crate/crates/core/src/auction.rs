//! Resources, bundles, holdings valuation, terminal utility and the
//! high-bid distributions every solver shares.
//!
//! Resources `r_1..r_n` are auctioned in index order; stage `t` is the moment
//! just before the auction for `r_{t+1}`. A [`ProblemSpec`] is the raw,
//! serializable instance; [`validate_problem`] turns it into a [`Problem`]
//! with precomputed bundle masks and win-probability models.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Diagnostics, Error, Result};
use crate::pwl::PwlFunction;

/// Holdings are bitmasks, so instances are capped well below 32 resources.
pub const MAX_RESOURCES: usize = 24;

/// Tolerance on the total mass of a multinomial bid distribution.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// 1-based auction-order position of a resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceIndex(u32);

impl ResourceIndex {
    pub fn new(position: u32) -> Result<Self> {
        if position == 0 || position as usize > MAX_RESOURCES {
            return Err(Error::InvalidArgument(format!(
                "resource position {position} outside 1..={MAX_RESOURCES}"
            )));
        }
        Ok(Self(position))
    }

    /// The resource sold at stage `stage` (0-based), i.e. `r_{stage+1}`.
    pub fn auctioned_at(stage: usize) -> Self {
        debug_assert!(stage < MAX_RESOURCES);
        Self(stage as u32 + 1)
    }

    pub fn position(self) -> u32 {
        self.0
    }

    fn bit(self) -> u32 {
        1 << (self.0 - 1)
    }
}

/// The set of resources currently held; bit `i-1` stands for `r_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Holdings(u32);

impl Holdings {
    pub const EMPTY: Holdings = Holdings(0);

    pub fn from_mask(mask: u32) -> Self {
        Self(mask)
    }

    pub fn from_positions(positions: &[u32]) -> Result<Self> {
        positions
            .iter()
            .try_fold(Self::EMPTY, |h, &p| Ok(h.with(ResourceIndex::new(p)?)))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, r: ResourceIndex) -> bool {
        self.0 & r.bit() != 0
    }

    #[must_use]
    pub fn with(self, r: ResourceIndex) -> Self {
        Self(self.0 | r.bit())
    }

    pub fn is_subset_of(self, other: Holdings) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Every holdings set that can exist at `stage`: all subsets of `R^stage`.
    pub fn all_at_stage(stage: usize) -> impl Iterator<Item = Holdings> {
        (0..1u32 << stage).map(Holdings)
    }
}

impl fmt::Display for Holdings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for i in 0..32 {
            if self.0 & (1 << i) != 0 {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "r{}", i + 1)?;
                first = false;
            }
        }
        write!(f, "}}")
    }
}

/// A set of resources worth `value` when held in its entirety.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub members: Vec<u32>,
    pub value: f64,
}

/// Model of the highest competing bid for one auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BidDistribution {
    /// Probability of each integer high bid `0..probs.len()`.
    Multinomial { probs: Vec<f64> },
    /// Normal density truncated at 0 and renormalized.
    Gaussian { mean: f64, std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Discrete,
    Continuous,
}

/// Utility of unspent endowment, as it appears in a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResidualSpec {
    Knots { knots: Vec<[f64; 2]> },
    Linear { linear_slope: f64 },
}

/// A full problem instance in its file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub bundles: Vec<Bundle>,
    pub endowment: f64,
    pub residual: ResidualSpec,
    pub distributions: Vec<BidDistribution>,
    pub mode: Mode,
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The integer-bid version of this instance: Gaussians are discretized
    /// with [`discretize_distribution`] at their default support bound and the
    /// mode becomes discrete. Multinomials are kept as they are.
    pub fn discrete_twin(&self) -> Result<ProblemSpec> {
        if self.endowment.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "discrete twin needs an integer endowment, got {}",
                self.endowment
            )));
        }
        let distributions = self
            .distributions
            .iter()
            .map(|d| match *d {
                BidDistribution::Gaussian { mean, std } => {
                    discretize_distribution(mean, std, default_w_max(mean, std))
                }
                ref m @ BidDistribution::Multinomial { .. } => Ok(m.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemSpec {
            distributions,
            mode: Mode::Discrete,
            ..self.clone()
        })
    }
}

/// Union of all bundle members.
pub fn useful_resources(bundles: &[Bundle]) -> Result<BTreeSet<u32>> {
    if bundles.is_empty() {
        return Err(Error::InvalidArgument("bundle list is empty".into()));
    }
    Ok(bundles
        .iter()
        .flat_map(|b| b.members.iter().copied())
        .collect())
}

/// Value of the best bundle fully contained in `h`, or 0 if there is none.
pub fn bundle_value(h: Holdings, bundles: &[Bundle]) -> f64 {
    bundles
        .iter()
        .filter(|b| {
            b.members
                .iter()
                .all(|&p| ResourceIndex::new(p).is_ok_and(|r| h.contains(r)))
        })
        .map(|b| b.value)
        .fold(0.0, f64::max)
}

/// `v(h) + f(d)` for a validated problem.
pub fn terminal_value(h: Holdings, d: f64, problem: &Problem) -> Result<f64> {
    problem.terminal_value(h, d)
}

/// `Pr(w < z)`: ties lose.
pub fn win_probability(dist: &BidDistribution, z: f64) -> Result<f64> {
    WinModel::new(dist)?.win_probability(z)
}

/// Smallest support bound accepted by [`discretize_distribution`].
pub fn default_w_max(mean: f64, std: f64) -> u32 {
    (mean + 4.0 * std).ceil().max(0.0) as u32
}

/// Integer-bid multinomial matching a truncated Gaussian.
///
/// Level `k` receives the truncated mass of `(k - 0.5, k + 0.5]`; level 0 takes
/// `[0, 0.5]` and level `w_max` absorbs the whole upper tail.
pub fn discretize_distribution(mean: f64, std: f64, w_max: u32) -> Result<BidDistribution> {
    let model = TruncatedGaussian::new(mean, std)?;
    if w_max < default_w_max(mean, std) {
        return Err(Error::InvalidArgument(format!(
            "w_max {w_max} too small for mean {mean}, std {std} (need >= {})",
            default_w_max(mean, std)
        )));
    }
    let mut probs = Vec::with_capacity(w_max as usize + 1);
    let mut below = 0.0;
    for k in 0..w_max {
        let upper = model.cdf(k as f64 + 0.5);
        probs.push(upper - below);
        below = upper;
    }
    probs.push(1.0 - below);
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(BidDistribution::Multinomial { probs })
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGaussian {
    mean: f64,
    std: f64,
    mass_below_zero: f64,
    mass_above_zero: f64,
}

impl TruncatedGaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian needs finite mean and std > 0, got mean {mean}, std {std}"
            )));
        }
        let mass_below_zero = std_normal_cdf(-mean / std);
        // Φ(μ/σ) rather than 1 - Φ(-μ/σ) keeps precision when μ ≫ σ.
        let mass_above_zero = std_normal_cdf(mean / std);
        if !(mass_above_zero > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gaussian mean {mean}, std {std} has no mass above zero"
            )));
        }
        Ok(Self {
            mean,
            std,
            mass_below_zero,
            mass_above_zero,
        })
    }

    /// `Pr(w <= z)`; the distribution is atomless so this is also `Pr(w < z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let x = (z - self.mean) / self.std;
        let within = if x > 0.0 {
            // 1 - Φ(x) computed directly avoids cancellation in the upper tail
            self.mass_above_zero - std_normal_cdf(-x)
        } else {
            std_normal_cdf(x) - self.mass_below_zero
        };
        (within / self.mass_above_zero).clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }
}

/// Precomputed form of a [`BidDistribution`] for hot loops.
#[derive(Debug, Clone, PartialEq)]
pub enum WinModel {
    /// `below[j] = Pr(w < j)`, with `below[len] = 1`.
    Multinomial {
        probs: Vec<f64>,
        below: Vec<f64>,
    },
    Gaussian(TruncatedGaussian),
}

impl WinModel {
    pub fn new(dist: &BidDistribution) -> Result<Self> {
        match dist {
            BidDistribution::Multinomial { probs } => {
                check_probs(probs).map_err(Error::InvalidArgument)?;
                let mut below = Vec::with_capacity(probs.len() + 1);
                let mut acc = 0.0_f64;
                for &p in probs {
                    below.push(acc.min(1.0));
                    acc += p;
                }
                below.push(1.0);
                Ok(Self::Multinomial {
                    probs: probs.clone(),
                    below,
                })
            }
            BidDistribution::Gaussian { mean, std } => {
                Ok(Self::Gaussian(TruncatedGaussian::new(*mean, *std)?))
            }
        }
    }

    pub fn win_probability(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::InvalidArgument(format!("bid {z} is negative")));
        }
        Ok(self.prob_below(z))
    }

    /// `Pr(w < z)` for `z >= 0` without argument checks.
    #[inline]
    pub fn prob_below(&self, z: f64) -> f64 {
        match self {
            Self::Multinomial { below, .. } => {
                if z <= 0.0 {
                    return 0.0;
                }
                let j = z.ceil();
                if j >= (below.len() - 1) as f64 {
                    1.0
                } else {
                    below[j as usize]
                }
            }
            Self::Gaussian(g) => g.cdf(z),
        }
    }

    /// `Pr(w < z)` at an integer bid.
    #[inline]
    pub fn prob_below_int(&self, z: u32) -> f64 {
        match self {
            Self::Multinomial { below, .. } => below[(z as usize).min(below.len() - 1)],
            Self::Gaussian(g) => g.cdf(z as f64),
        }
    }
}

fn check_probs(probs: &[f64]) -> std::result::Result<(), String> {
    if probs.is_empty() {
        return Err("multinomial has no levels".into());
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("probabilities must be finite and nonnegative".into());
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(format!("probabilities sum to {total}, not 1"));
    }
    Ok(())
}

/// A validated instance with derived data the solvers need.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    bundle_masks: Vec<(u32, f64)>,
    residual: PwlFunction,
    win: Vec<WinModel>,
}

impl Problem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn endowment(&self) -> f64 {
        self.spec.endowment
    }

    pub fn mode(&self) -> Mode {
        self.spec.mode
    }

    /// The residual utility `f`, defined at least on `[0, endowment]`.
    pub fn residual(&self) -> &PwlFunction {
        &self.residual
    }

    /// Win model for the auction held at `stage` (resource `r_{stage+1}`).
    pub fn win_model(&self, stage: usize) -> &WinModel {
        &self.win[stage]
    }

    pub fn bundle_value(&self, h: Holdings) -> f64 {
        self.bundle_masks
            .iter()
            .filter(|(mask, _)| mask & !h.mask() == 0)
            .map(|&(_, v)| v)
            .fold(0.0, f64::max)
    }

    pub fn terminal_value(&self, h: Holdings, d: f64) -> Result<f64> {
        let e = self.endowment();
        if !(d >= 0.0 && d <= e) {
            return Err(Error::OutOfDomain { d, lo: 0.0, hi: e });
        }
        Ok(self.bundle_value(h) + self.residual.eval(d)?)
    }

    /// No bundle worth more than `v(h)` can still be completed from `h` plus
    /// the resources auctioned at stages `stage..n`.
    pub fn is_settled(&self, h: Holdings, stage: usize) -> bool {
        let n = self.n();
        if stage >= n {
            return true;
        }
        let future = ((1u32 << n) - 1) & !((1u32 << stage) - 1);
        let reachable = h.mask() | future;
        let current = self.bundle_value(h);
        !self
            .bundle_masks
            .iter()
            .any(|&(mask, v)| v > current && mask & !reachable == 0)
    }
}

/// `is_settled` as a free function.
pub fn is_settled(h: Holdings, stage: usize, problem: &Problem) -> bool {
    problem.is_settled(h, stage)
}

/// Checks every invariant of `spec` and builds the solver-ready [`Problem`].
pub fn validate_problem(spec: &ProblemSpec) -> Result<Problem> {
    let mut diag = Diagnostics::default();
    let n = spec.n;
    if n == 0 || n > MAX_RESOURCES {
        diag.push(
            "n",
            format!("resource count must be in 1..={MAX_RESOURCES}"),
        );
    }

    if spec.bundles.is_empty() {
        diag.push("bundles", "at least one bundle is required");
    }
    let mut bundle_masks = Vec::with_capacity(spec.bundles.len());
    for (i, b) in spec.bundles.iter().enumerate() {
        if b.members.is_empty() {
            diag.push(format!("bundles[{i}].members"), "bundle has no members");
        }
        let mut mask = 0u32;
        for (j, &m) in b.members.iter().enumerate() {
            if m == 0 || m as usize > n || m as usize > MAX_RESOURCES {
                diag.push(format!("bundles[{i}].members[{j}]"), "member out of range");
                continue;
            }
            let bit = 1u32 << (m - 1);
            if mask & bit != 0 {
                diag.push(format!("bundles[{i}].members[{j}]"), "duplicate member");
            }
            mask |= bit;
        }
        if !(b.value > 0.0) || !b.value.is_finite() {
            diag.push(
                format!("bundles[{i}].value"),
                "bundle value must be positive",
            );
        }
        bundle_masks.push((mask, b.value));
    }
    if !spec.bundles.is_empty() && n <= MAX_RESOURCES {
        let useful = useful_resources(&spec.bundles)?;
        for r in 1..=n as u32 {
            if !useful.contains(&r) {
                diag.push(
                    format!("resources[{r}]"),
                    "resource belongs to no bundle; remove it and renumber",
                );
            }
        }
    }

    let e = spec.endowment;
    if !(e >= 0.0) || !e.is_finite() {
        diag.push("endowment", "endowment must be finite and >= 0");
    }
    match spec.mode {
        Mode::Discrete if e.fract() != 0.0 => {
            diag.push("endowment", "discrete mode needs an integer endowment")
        }
        Mode::Continuous if e == 0.0 => {
            diag.push("endowment", "continuous mode needs a positive endowment")
        }
        _ => {}
    }

    let residual = match build_residual(&spec.residual, e) {
        Ok(f) => Some(f),
        Err(msg) => {
            diag.push("residual", msg);
            None
        }
    };

    if spec.distributions.len() != n {
        diag.push(
            "distributions",
            format!(
                "expected {n} distributions, got {}",
                spec.distributions.len()
            ),
        );
    }
    let mut win = Vec::with_capacity(spec.distributions.len());
    for (i, dist) in spec.distributions.iter().enumerate() {
        if spec.mode == Mode::Discrete && matches!(dist, BidDistribution::Gaussian { .. }) {
            diag.push(format!("distributions[{i}]"), "mode/distribution mismatch");
        }
        match WinModel::new(dist) {
            Ok(w) => win.push(w),
            Err(err) => diag.push(format!("distributions[{i}]"), err.to_string()),
        }
    }

    match residual {
        Some(residual) if diag.is_empty() => Ok(Problem {
            spec: spec.clone(),
            bundle_masks,
            residual,
            win,
        }),
        _ => Err(Error::Invalid(diag)),
    }
}

fn build_residual(
    residual: &ResidualSpec,
    endowment: f64,
) -> std::result::Result<PwlFunction, String> {
    match residual {
        ResidualSpec::Linear { linear_slope } => {
            if !(*linear_slope >= 0.0) || !linear_slope.is_finite() {
                return Err("linear slope must be finite and >= 0".into());
            }
            let hi = if endowment > 0.0 { endowment } else { 1.0 };
            PwlFunction::linear(hi, *linear_slope).map_err(|e| e.to_string())
        }
        ResidualSpec::Knots { knots } => {
            let f =
                PwlFunction::new(knots.iter().map(|k| (k[0], k[1]))).map_err(|e| e.to_string())?;
            let (lo, hi) = f.domain();
            if lo != 0.0 || f.ys()[0] != 0.0 {
                return Err("residual must start at the knot (0, 0)".into());
            }
            if hi < endowment {
                return Err(format!(
                    "residual knots end at {hi}, before the endowment {endowment}"
                ));
            }
            if !f.is_nondecreasing() {
                return Err("residual utility must be nondecreasing".into());
            }
            Ok(f)
        }
    }
}
