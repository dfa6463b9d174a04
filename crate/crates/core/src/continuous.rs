//! Grid-based dynamic programming over continuous endowments and bids.
//!
//! The value function at each stage is a table of one-dimensional
//! components, one per holdings set, each a [`PwlFunction`] of endowment on
//! `[0, m]`. A component is built by maximizing the one-step Q-value at a
//! set of knots (a fixed uniform grid, or one chosen adaptively by
//! [`vg1_refine`]/[`vg2_refine`]) against the already-built next stage, and
//! interpolating in between. Consecutive knot differences feed a
//! [`DeltaLedger`] from which an a-posteriori error estimate follows.

use std::borrow::Cow;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{Holdings, Mode, Problem, ResourceIndex, WinModel};
use crate::error::{Error, Result};
use crate::pwl::{vg1_refine, vg2_refine, PwlFunction, RefinementBudget};

const TIE_EPS: f64 = 1e-12;

fn tie_eps(q: f64) -> f64 {
    TIE_EPS * q.abs().max(1.0)
}

/// Settings for the one-dimensional bid maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MaximizerConfig {
    /// Interior samples per linear piece of the win branch.
    pub samples_per_segment: usize,
    /// Width at which golden-section refinement stops, in dollars.
    pub refine_tolerance: f64,
}

impl Default for MaximizerConfig {
    fn default() -> Self {
        Self {
            samples_per_segment: 32,
            refine_tolerance: 1e-4,
        }
    }
}

impl MaximizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_segment < 2 {
            return Err(Error::InvalidArgument(
                "samples_per_segment must be >= 2".into(),
            ));
        }
        if !(self.refine_tolerance > 0.0) || !self.refine_tolerance.is_finite() {
            return Err(Error::InvalidArgument(
                "refine_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How the knots of each component are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GridStrategy {
    /// `knots` points uniformly covering `[0, m]`, endpoints included.
    UniformFixed {
        knots: usize,
    },
    Vg1(RefinementBudget),
    Vg2(RefinementBudget),
}

impl GridStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::UniformFixed { knots } if *knots < 2 => Err(Error::InvalidArgument(format!(
                "a fixed grid needs at least 2 knots, got {knots}"
            ))),
            Self::UniformFixed { .. } => Ok(()),
            Self::Vg1(b) | Self::Vg2(b) => b.validate(),
        }
    }
}

impl fmt::Display for GridStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UniformFixed { knots } => write!(f, "fixed:{knots}"),
            Self::Vg1(b) => write!(f, "vg1:{},{}", b.max_knots, b.threshold),
            Self::Vg2(b) => write!(f, "vg2:{},{}", b.max_knots, b.threshold),
        }
    }
}

impl FromStr for GridStrategy {
    type Err = Error;

    /// `fixed:<g>`, `vg1:<maxKnots>,<threshold>` or `vg2:<maxKnots>,<threshold>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized grid strategy {s:?}"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let strategy = match kind {
            "fixed" => Self::UniformFixed {
                knots: args.trim().parse().map_err(|_| bad())?,
            },
            "vg1" | "vg2" => {
                let (k, thr) = args.split_once(',').ok_or_else(bad)?;
                let budget = RefinementBudget {
                    max_knots: k.trim().parse().map_err(|_| bad())?,
                    threshold: thr.trim().parse().map_err(|_| bad())?,
                };
                if kind == "vg1" {
                    Self::Vg1(budget)
                } else {
                    Self::Vg2(budget)
                }
            }
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

impl TryFrom<String> for GridStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridStrategy> for String {
    fn from(g: GridStrategy) -> String {
        g.to_string()
    }
}

/// One `(stage, holdings)` entry of a [`HybridValueFunction`].
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    /// `v(h) + f(d)`, stored as the bundle value only.
    Settled { bundle_value: f64 },
    /// Knot values with the maximizing bid found at each knot.
    Grid { values: PwlFunction, bids: Vec<f64> },
}

#[derive(Clone, Copy)]
enum ComponentRef<'a> {
    Shifted(f64, &'a PwlFunction),
    Grid(&'a PwlFunction),
}

impl<'a> ComponentRef<'a> {
    fn function(&self) -> &'a PwlFunction {
        match *self {
            Self::Shifted(_, f) | Self::Grid(f) => f,
        }
    }

    fn offset(&self) -> f64 {
        match *self {
            Self::Shifted(v, _) => v,
            Self::Grid(_) => 0.0,
        }
    }

    fn knot_value(&self, i: usize) -> f64 {
        self.function().ys()[i] + self.offset()
    }

    fn eval(&self, d: f64) -> f64 {
        self.function().eval_clamped(d) + self.offset()
    }
}

/// Read-only view of one stage of a value function under construction.
#[derive(Clone, Copy)]
pub struct StageView<'a> {
    stage: usize,
    components: &'a [Component],
    residual: &'a PwlFunction,
    max_endowment: f64,
}

impl<'a> StageView<'a> {
    fn get(&self, h: Holdings) -> Result<ComponentRef<'a>> {
        match self.components.get(h.mask() as usize) {
            Some(Component::Settled { bundle_value }) => {
                Ok(ComponentRef::Shifted(*bundle_value, self.residual))
            }
            Some(Component::Grid { values, .. }) => Ok(ComponentRef::Grid(values)),
            None => Err(Error::MissingComponent {
                stage: self.stage,
                holdings: h.mask(),
            }),
        }
    }

    fn check_endowment(&self, d: f64) -> Result<()> {
        if !(d >= 0.0 && d <= self.max_endowment) {
            return Err(Error::OutOfDomain {
                d,
                lo: 0.0,
                hi: self.max_endowment,
            });
        }
        Ok(())
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn component(&self, h: Holdings) -> Result<Cow<'a, PwlFunction>> {
        Ok(match self.get(h)? {
            ComponentRef::Shifted(v, f) => Cow::Owned(f.shifted(v)),
            ComponentRef::Grid(f) => Cow::Borrowed(f),
        })
    }

    pub fn eval(&self, h: Holdings, d: f64) -> Result<f64> {
        self.check_endowment(d)?;
        Ok(self.get(h)?.eval(d))
    }
}

/// Per-stage table of piecewise-linear value components on `[0, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridValueFunction {
    n: usize,
    max_endowment: f64,
    /// `f` restricted to `[0, m]`.
    residual: PwlFunction,
    /// `stages[t][mask]`
    stages: Vec<Vec<Component>>,
}

impl HybridValueFunction {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_endowment(&self) -> f64 {
        self.max_endowment
    }

    pub fn stage(&self, t: usize) -> Result<StageView<'_>> {
        let components = self.stages.get(t).ok_or(Error::MissingComponent {
            stage: t,
            holdings: 0,
        })?;
        Ok(StageView {
            stage: t,
            components,
            residual: &self.residual,
            max_endowment: self.max_endowment,
        })
    }

    pub fn component(&self, t: usize, h: Holdings) -> Result<Cow<'_, PwlFunction>> {
        self.stage(t)?.component(h)
    }

    pub fn raw_component(&self, t: usize, h: Holdings) -> Option<&Component> {
        self.stages.get(t)?.get(h.mask() as usize)
    }

    pub fn eval(&self, t: usize, h: Holdings, d: f64) -> Result<f64> {
        self.stage(t)?.eval(h, d)
    }

    pub fn is_settled(&self, t: usize, h: Holdings) -> bool {
        matches!(self.raw_component(t, h), Some(Component::Settled { .. }))
    }

    /// Every knot of every component as
    /// `stage,holdings,knot_endowment,knot_value,knot_bid`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "stage",
            "holdings",
            "knot_endowment",
            "knot_value",
            "knot_bid",
        ])?;
        for (t, stage) in self.stages.iter().enumerate() {
            for (mask, comp) in stage.iter().enumerate() {
                let rows: Vec<(f64, f64, f64)> = match comp {
                    Component::Settled { bundle_value } => self
                        .residual
                        .knots()
                        .map(|(x, y)| (x, y + bundle_value, 0.0))
                        .collect(),
                    Component::Grid { values, bids } => values
                        .knots()
                        .zip(bids)
                        .map(|((x, y), &b)| (x, y, b))
                        .collect(),
                };
                for (x, y, b) in rows {
                    w.write_record(&[
                        t.to_string(),
                        mask.to_string(),
                        x.to_string(),
                        y.to_string(),
                        b.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a value function from [`write_csv`](Self::write_csv) output.
    /// Every component comes back as a grid component.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let expected = [
            "stage",
            "holdings",
            "knot_endowment",
            "knot_value",
            "knot_bid",
        ];
        if headers.iter().ne(expected) {
            return Err(Error::MalformedSolution(format!(
                "expected grid solution header {expected:?}"
            )));
        }
        let malformed = |what: &str| Error::MalformedSolution(what.to_string());
        let mut knots: Vec<Vec<Vec<(f64, f64, f64)>>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let t: usize = rec[0].parse().map_err(|_| malformed("bad stage"))?;
            let mask: usize = rec[1].parse().map_err(|_| malformed("bad holdings"))?;
            let num =
                |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| malformed("bad number")) };
            let row = (num(2)?, num(3)?, num(4)?);
            if t >= knots.len() {
                knots.resize_with(t + 1, Vec::new);
            }
            if mask >= 1 << t {
                return Err(malformed("holdings outside the stage"));
            }
            if knots[t].len() < 1 << t {
                knots[t].resize_with(1 << t, Vec::new);
            }
            knots[t][mask].push(row);
        }
        if knots.is_empty() {
            return Err(malformed("solution file has no rows"));
        }
        let n = knots.len() - 1;
        let mut stages = Vec::with_capacity(n + 1);
        for (t, stage) in knots.into_iter().enumerate() {
            if stage.len() != 1 << t {
                return Err(Error::MalformedSolution(format!("stage {t} is incomplete")));
            }
            let comps = stage
                .into_iter()
                .map(|rows| {
                    let bids = rows.iter().map(|r| r.2).collect();
                    let values = PwlFunction::new(rows.iter().map(|r| (r.0, r.1)))?;
                    Ok(Component::Grid { values, bids })
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(comps);
        }
        let Component::Grid {
            values: residual, ..
        } = stages[n][0].clone()
        else {
            unreachable!()
        };
        let max_endowment = residual.domain().1;
        Ok(Self {
            n,
            max_endowment,
            residual,
            stages,
        })
    }
}

/// `δ(Ṽ^t)` per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLedger {
    deltas: Vec<Option<f64>>,
}

impl DeltaLedger {
    /// An empty ledger for stages `0..=n`.
    pub fn new(n: usize) -> Self {
        Self {
            deltas: vec![None; n + 1],
        }
    }

    pub fn from_deltas(deltas: Vec<f64>) -> Self {
        Self {
            deltas: deltas.into_iter().map(Some).collect(),
        }
    }

    pub fn set(&mut self, stage: usize, delta: f64) {
        self.deltas[stage] = Some(delta);
    }

    pub fn delta(&self, stage: usize) -> Option<f64> {
        self.deltas.get(stage).copied().flatten()
    }

    pub fn n(&self) -> usize {
        self.deltas.len() - 1
    }

    /// `Σ_{i=t+1}^{n} δ(Ṽ^i)`, the estimated error bound at stage `t`.
    pub fn error_bound(&self, t: usize) -> Result<f64> {
        if t >= self.deltas.len() {
            return Err(Error::IncompleteLedger(t));
        }
        (t + 1..self.deltas.len()).try_fold(0.0, |acc, i| {
            Ok(acc + self.deltas[i].ok_or(Error::IncompleteLedger(i))?)
        })
    }

    /// `stage,delta,cumulative_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "delta", "cumulative_bound"])?;
        for t in 0..self.deltas.len() {
            let delta = self.deltas[t].ok_or(Error::IncompleteLedger(t))?;
            w.write_record(&[
                t.to_string(),
                delta.to_string(),
                self.error_bound(t)?.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `error_bound` as a free function.
pub fn error_bound(ledger: &DeltaLedger, t: usize) -> Result<f64> {
    ledger.error_bound(t)
}

/// A bid and the Q-value it attains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidChoice {
    pub bid: f64,
    pub value: f64,
}

/// One-step value of bidding `z` at `(h, d)` before the auction at `stage`.
pub fn q_value(
    h: Holdings,
    d: f64,
    z: f64,
    stage: usize,
    next: &StageView<'_>,
    win: &WinModel,
) -> Result<f64> {
    next.check_endowment(d)?;
    if !(z >= 0.0) {
        return Err(Error::InvalidArgument(format!("bid {z} is negative")));
    }
    if z > d {
        return Err(Error::BidExceedsEndowment {
            bid: z,
            endowment: d,
        });
    }
    let won = next.get(h.with(ResourceIndex::auctioned_at(stage)))?;
    let lose = next.get(h)?.eval(d);
    let p = win.prob_below(z);
    Ok(p * won.eval(d - z) + (1.0 - p) * lose)
}

#[derive(Clone, Copy)]
struct Best {
    z: f64,
    q: f64,
}

impl Best {
    fn offer(&mut self, z: f64, q: f64) {
        let eps = tie_eps(self.q);
        if q > self.q + eps || (q >= self.q - eps && z < self.z) {
            *self = Best { z, q };
        }
    }
}

/// Golden-section search for a maximum of `q` on `[lo, hi]`; returns the best
/// point it evaluated.
fn golden_max(q: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Best {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut q1 = q(x1);
    let mut q2 = q(x2);
    let mut best = Best { z: x1, q: q1 };
    best.offer(x2, q2);
    while hi - lo > tol {
        if q1 >= q2 {
            hi = x2;
            x2 = x1;
            q2 = q1;
            x1 = hi - INV_PHI * (hi - lo);
            q1 = q(x1);
            best.offer(x1, q1);
        } else {
            lo = x1;
            x1 = x2;
            q1 = q2;
            x2 = lo + INV_PHI * (hi - lo);
            q2 = q(x2);
            best.offer(x2, q2);
        }
    }
    best
}

/// Best bid at `(h, d)` against the stage-`stage+1` view `next`.
///
/// `[0, d]` is cut at `d - k` for every knot `k` of the win-branch component,
/// so that branch is linear in the bid on each piece. Every cut point is
/// evaluated; a piece is then sampled and refined by golden-section search
/// only when the cheap upper bound `L + F(b)·(W(d-a) - L)` can still beat the
/// incumbent. Ties go to the smaller bid.
pub fn maximize_bid(
    h: Holdings,
    d: f64,
    stage: usize,
    next: &StageView<'_>,
    win: &WinModel,
    cfg: &MaximizerConfig,
) -> Result<BidChoice> {
    next.check_endowment(d)?;
    let lose = next.get(h)?.eval(d);
    let won = next.get(h.with(ResourceIndex::auctioned_at(stage)))?;
    let mut best = Best { z: 0.0, q: lose };
    if d <= 0.0 {
        return Ok(BidChoice {
            bid: 0.0,
            value: lose,
        });
    }

    // (bid, win-branch value) at each cut, ascending in the bid
    let xs = won.function().xs();
    let mut cuts = Vec::with_capacity(xs.len() + 2);
    cuts.push((0.0, won.eval(d)));
    for i in (0..xs.len()).rev() {
        if xs[i] > 0.0 && xs[i] < d {
            cuts.push((d - xs[i], won.knot_value(i)));
        }
    }
    cuts.push((d, won.knot_value(0)));

    let probs: Vec<f64> = cuts.iter().map(|&(z, _)| win.prob_below(z)).collect();
    for (&(z, w), &p) in cuts.iter().zip(&probs) {
        best.offer(z, p * w + (1.0 - p) * lose);
    }

    let samples = cfg.samples_per_segment;
    for j in 0..cuts.len() - 1 {
        let (a, wa) = cuts[j];
        let (b, wb) = cuts[j + 1];
        if !(b > a) {
            continue;
        }
        let bound = if wa > lose {
            lose + probs[j + 1] * (wa - lose)
        } else {
            lose
        };
        if bound <= best.q + tie_eps(best.q) {
            continue;
        }
        let slope = (wb - wa) / (b - a);
        let q = |z: f64| {
            let p = win.prob_below(z);
            p * (wa + slope * (z - a)) + (1.0 - p) * lose
        };
        let step = (b - a) / (samples + 1) as f64;
        let mut piece = Best { z: a, q: q(a) };
        let mut at = 0;
        for k in 1..=samples + 1 {
            let z = if k == samples + 1 {
                b
            } else {
                a + step * k as f64
            };
            let before = piece.q;
            piece.offer(z, q(z));
            if piece.q > before {
                at = k;
            }
        }
        best.offer(piece.z, piece.q);
        let lo = a + step * at.saturating_sub(1) as f64;
        let hi = (a + step * (at + 1) as f64).min(b);
        if hi - lo > cfg.refine_tolerance {
            let refined = golden_max(q, lo, hi, cfg.refine_tolerance);
            best.offer(refined.z, refined.q);
        }
    }
    Ok(BidChoice {
        bid: best.z.clamp(0.0, d),
        value: best.q,
    })
}

/// The bid a greedy agent makes at stage `t` given the stored stage-`t+1`
/// components of `values`.
pub fn greedy_bid(
    values: &HybridValueFunction,
    h: Holdings,
    d: f64,
    t: usize,
    win: &WinModel,
    cfg: &MaximizerConfig,
) -> Result<f64> {
    if t >= values.n() {
        return Err(Error::InvalidArgument(format!(
            "no auction at terminal stage {t}"
        )));
    }
    Ok(maximize_bid(h, d, t, &values.stage(t + 1)?, win, cfg)?.bid)
}

/// Output of [`solve_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub values: HybridValueFunction,
    pub ledger: DeltaLedger,
    /// Knots evaluated across all unsettled `(stage, holdings)` pairs.
    pub state_count: usize,
}

/// Abscissae of a uniform grid of `g` knots on `[0, m]`.
pub fn uniform_knots(m: f64, g: usize) -> Vec<f64> {
    (0..g)
        .map(|i| {
            if i + 1 == g {
                m
            } else {
                m * i as f64 / (g - 1) as f64
            }
        })
        .collect()
}

fn build_component(
    h: Holdings,
    t: usize,
    next: &StageView<'_>,
    win: &WinModel,
    strategy: &GridStrategy,
    cfg: &MaximizerConfig,
) -> Result<(Component, usize)> {
    let m = next.max_endowment;
    match strategy {
        GridStrategy::UniformFixed { knots } => {
            let xs = uniform_knots(m, *knots);
            let choices = xs
                .iter()
                .map(|&d| maximize_bid(h, d, t, next, win, cfg))
                .collect::<Result<Vec<_>>>()?;
            let values = PwlFunction::new(xs.iter().copied().zip(choices.iter().map(|c| c.value)))?;
            let bids = choices.iter().map(|c| c.bid).collect();
            Ok((Component::Grid { values, bids }, *knots))
        }
        GridStrategy::Vg1(budget) | GridStrategy::Vg2(budget) => {
            let mut seen: Vec<(f64, f64)> = Vec::new();
            let evaluate = |d: f64| -> Result<f64> {
                let c = maximize_bid(h, d, t, next, win, cfg)?;
                seen.push((d, c.bid));
                Ok(c.value)
            };
            let values = match strategy {
                GridStrategy::Vg1(_) => vg1_refine(evaluate, (0.0, m), *budget)?,
                _ => vg2_refine(evaluate, (0.0, m), *budget)?,
            };
            let bids = values
                .xs()
                .iter()
                .map(|x| {
                    seen.iter()
                        .find(|(d, _)| d == x)
                        .map(|&(_, b)| b)
                        .expect("every knot was evaluated")
                })
                .collect();
            Ok((Component::Grid { values, bids }, seen.len()))
        }
    }
}

/// Backward grid dynamic programming on a continuous-mode problem.
pub fn solve_grid(
    problem: &Problem,
    strategy: &GridStrategy,
    cfg: &MaximizerConfig,
) -> Result<GridSolution> {
    if problem.mode() != Mode::Continuous {
        return Err(Error::InvalidArgument(
            "grid solving needs a continuous-mode problem".into(),
        ));
    }
    strategy.validate()?;
    cfg.validate()?;
    let n = problem.n();
    let m = problem.endowment();
    let residual = problem.residual().restrict(0.0, m)?;

    let mut stages: Vec<Vec<Component>> = vec![Vec::new(); n + 1];
    stages[n] = Holdings::all_at_stage(n)
        .map(|h| Component::Settled {
            bundle_value: problem.bundle_value(h),
        })
        .collect();
    let mut ledger = DeltaLedger::new(n);
    ledger.set(n, residual.max_consecutive_delta()?.0);
    let mut state_count = 0;

    for t in (0..n).rev() {
        let next = StageView {
            stage: t + 1,
            components: &stages[t + 1],
            residual: &residual,
            max_endowment: m,
        };
        let win = problem.win_model(t);
        let built = (0..1u32 << t)
            .into_par_iter()
            .map(|mask| {
                let h = Holdings::from_mask(mask);
                if problem.is_settled(h, t) {
                    return Ok((
                        Component::Settled {
                            bundle_value: problem.bundle_value(h),
                        },
                        0,
                    ));
                }
                build_component(h, t, &next, win, strategy, cfg)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut delta = 0.0_f64;
        let mut comps = Vec::with_capacity(built.len());
        for (comp, evaluated) in built {
            if let Component::Grid { values, .. } = &comp {
                delta = delta.max(values.max_consecutive_delta()?.0);
            }
            state_count += evaluated;
            comps.push(comp);
        }
        ledger.set(t, delta);
        stages[t] = comps;
    }

    Ok(GridSolution {
        values: HybridValueFunction {
            n,
            max_endowment: m,
            residual,
            stages,
        },
        ledger,
        state_count,
    })
}
