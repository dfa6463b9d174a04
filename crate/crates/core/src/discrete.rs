//! Exact value iteration over integer endowments and integer bids.
//!
//! Stage tables are filled backward from the terminal stage. A `(stage,
//! holdings)` pair from which no better bundle can still be completed is
//! settled: its value is `v(h) + f(d)` in closed form, its bid is 0, and it
//! is neither stored nor counted.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::auction::{Holdings, Mode, Problem, ResourceIndex, WinModel};
use crate::error::{Error, Result};

/// Q-values within this relative distance of the best are ties, and the
/// smallest bid among them wins.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiscreteSolverOptions {
    /// Stop scanning bids once Q starts to decrease. Only exact when Q is
    /// unimodal in the bid.
    pub early_exit: bool,
}

/// Lookup of stage-`t+1` values used by a backup.
pub trait StageValues {
    fn value(&self, h: Holdings, d: u32) -> Option<f64>;
}

impl<F> StageValues for F
where
    F: Fn(Holdings, u32) -> Option<f64>,
{
    fn value(&self, h: Holdings, d: u32) -> Option<f64> {
        self(h, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backup {
    pub value: f64,
    pub bid: u32,
}

/// Optimal value and smallest optimal bid at `(h, d)` for the auction at `stage`.
pub fn backup_state_discrete<S: StageValues + ?Sized>(
    h: Holdings,
    d: u32,
    stage: usize,
    next: &S,
    win: &WinModel,
    opts: DiscreteSolverOptions,
) -> Result<Backup> {
    let missing = |holdings: Holdings| Error::MissingComponent {
        stage: stage + 1,
        holdings: holdings.mask(),
    };
    let won = h.with(ResourceIndex::auctioned_at(stage));
    let lose = next.value(h, d).ok_or_else(|| missing(h))?;
    // F(0) = 0, so a zero bid always yields the losing branch
    let mut best = Backup {
        value: lose,
        bid: 0,
    };
    let mut prev = lose;
    for z in 1..=d {
        let p = win.prob_below_int(z);
        let q = p * next.value(won, d - z).ok_or_else(|| missing(won))? + (1.0 - p) * lose;
        if q > best.value + TIE_EPS * best.value.abs().max(1.0) {
            best = Backup { value: q, bid: z };
        } else if opts.early_exit && q < prev {
            break;
        }
        prev = q;
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
struct StateTable {
    values: Vec<f64>,
    bids: Vec<u32>,
}

/// Closed-form part shared by settled entries: bundle values and `f` at
/// every integer endowment.
#[derive(Debug, Clone, PartialEq)]
struct Terminal {
    bundle_masks: Vec<(u32, f64)>,
    residual: Vec<f64>,
}

impl Terminal {
    fn new(problem: &Problem, endowment: u32) -> Self {
        let n = problem.n();
        let bundle_masks = (0..1u32 << n)
            .filter_map(|mask| {
                let v = problem.bundle_value(Holdings::from_mask(mask));
                (v > 0.0).then_some((mask, v))
            })
            .collect();
        let residual = (0..=endowment)
            .map(|d| problem.residual().eval_clamped(d as f64))
            .collect();
        Self {
            bundle_masks,
            residual,
        }
    }

    fn bundle_value(&self, h: Holdings) -> f64 {
        match self
            .bundle_masks
            .binary_search_by_key(&h.mask(), |&(m, _)| m)
        {
            Ok(i) => self.bundle_masks[i].1,
            Err(_) => 0.0,
        }
    }

    fn value(&self, h: Holdings, d: u32) -> f64 {
        self.bundle_value(h) + self.residual[d as usize]
    }
}

/// Optimal values and bids for every `(stage, holdings, endowment)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteValueSolution {
    n: usize,
    endowment: u32,
    /// `stages[t][mask]`; `None` marks a settled pair.
    stages: Vec<Vec<Option<StateTable>>>,
    terminal: Terminal,
    state_count: usize,
}

struct StageRef<'a> {
    tables: &'a [Option<StateTable>],
    terminal: &'a Terminal,
    endowment: u32,
}

impl StageValues for StageRef<'_> {
    fn value(&self, h: Holdings, d: u32) -> Option<f64> {
        if d > self.endowment {
            return None;
        }
        match self.tables.get(h.mask() as usize)? {
            Some(t) => Some(t.values[d as usize]),
            None => Some(self.terminal.value(h, d)),
        }
    }
}

fn integer_endowment(problem: &Problem) -> Result<u32> {
    let e = problem.endowment();
    if problem.mode() != Mode::Discrete || e.fract() != 0.0 {
        return Err(Error::InvalidArgument(
            "the exact solver needs a discrete-mode problem with an integer endowment".into(),
        ));
    }
    Ok(e as u32)
}

/// Backward value iteration with settled-state pruning.
pub fn solve_discrete(problem: &Problem) -> Result<DiscreteValueSolution> {
    solve_discrete_with(problem, DiscreteSolverOptions::default())
}

pub fn solve_discrete_with(
    problem: &Problem,
    opts: DiscreteSolverOptions,
) -> Result<DiscreteValueSolution> {
    let e = integer_endowment(problem)?;
    let n = problem.n();
    let terminal = Terminal::new(problem, e);

    let mut stages: Vec<Vec<Option<StateTable>>> = vec![Vec::new(); n + 1];
    stages[n] = vec![None; 1 << n];
    let mut state_count = 0;

    for t in (0..n).rev() {
        let next = StageRef {
            tables: &stages[t + 1],
            terminal: &terminal,
            endowment: e,
        };
        let win = problem.win_model(t);
        let tables = (0..1u32 << t)
            .into_par_iter()
            .map(|mask| {
                let h = Holdings::from_mask(mask);
                if problem.is_settled(h, t) {
                    return Ok(None);
                }
                let mut values = Vec::with_capacity(e as usize + 1);
                let mut bids = Vec::with_capacity(e as usize + 1);
                for d in 0..=e {
                    let b = backup_state_discrete(h, d, t, &next, win, opts)?;
                    values.push(b.value);
                    bids.push(b.bid);
                }
                Ok(Some(StateTable { values, bids }))
            })
            .collect::<Result<Vec<_>>>()?;
        state_count += tables.iter().flatten().count() * (e as usize + 1);
        stages[t] = tables;
    }

    Ok(DiscreteValueSolution {
        n,
        endowment: e,
        stages,
        terminal,
        state_count,
    })
}

impl DiscreteValueSolution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn endowment(&self) -> u32 {
        self.endowment
    }

    /// Unpruned `(stage, holdings, endowment)` triples that were backed up.
    pub fn state_count(&self) -> usize {
        self.state_count
    }

    fn table(&self, t: usize, h: Holdings, d: u32) -> Result<Option<&StateTable>> {
        if t > self.n || h.mask() as usize >= self.stages[t].len() {
            return Err(Error::MissingComponent {
                stage: t,
                holdings: h.mask(),
            });
        }
        if d > self.endowment {
            return Err(Error::OutOfDomain {
                d: d as f64,
                lo: 0.0,
                hi: self.endowment as f64,
            });
        }
        Ok(self.stages[t][h.mask() as usize].as_ref())
    }

    pub fn value(&self, t: usize, h: Holdings, d: u32) -> Result<f64> {
        Ok(match self.table(t, h, d)? {
            Some(tab) => tab.values[d as usize],
            None => self.terminal.value(h, d),
        })
    }

    pub fn bid(&self, t: usize, h: Holdings, d: u32) -> Result<u32> {
        Ok(match self.table(t, h, d)? {
            Some(tab) => tab.bids[d as usize],
            None => 0,
        })
    }

    pub fn is_settled(&self, t: usize, h: Holdings) -> bool {
        self.stages
            .get(t)
            .and_then(|s| s.get(h.mask() as usize))
            .is_none_or(|e| e.is_none())
    }

    pub fn start_value(&self) -> f64 {
        self.value(0, Holdings::EMPTY, self.endowment)
            .expect("start state always exists")
    }

    pub fn start_bid(&self) -> u32 {
        self.bid(0, Holdings::EMPTY, self.endowment)
            .expect("start state always exists")
    }

    /// Unsettled `(stage, holdings)` pairs, stage-major and mask-ascending.
    pub fn unsettled_pairs(&self) -> impl Iterator<Item = (usize, Holdings)> + '_ {
        self.stages.iter().enumerate().flat_map(|(t, s)| {
            s.iter()
                .enumerate()
                .filter(|(_, e)| e.is_some())
                .map(move |(mask, _)| (t, Holdings::from_mask(mask as u32)))
        })
    }

    /// Dumps every state as `stage,holdings,endowment,value,bid,settled`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "holdings", "endowment", "value", "bid", "settled"])?;
        for (t, stage) in self.stages.iter().enumerate() {
            for (mask, entry) in stage.iter().enumerate() {
                let h = Holdings::from_mask(mask as u32);
                for d in 0..=self.endowment {
                    let (v, b) = match entry {
                        Some(tab) => (tab.values[d as usize], tab.bids[d as usize]),
                        None => (self.terminal.value(h, d), 0),
                    };
                    w.write_record(&[
                        t.to_string(),
                        mask.to_string(),
                        d.to_string(),
                        v.to_string(),
                        b.to_string(),
                        u8::from(entry.is_none()).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A bid for every integer state, possibly suboptimal.
pub trait DiscretePolicy {
    fn bid(&self, stage: usize, h: Holdings, d: u32) -> Result<u32>;
}

impl<F> DiscretePolicy for F
where
    F: Fn(usize, Holdings, u32) -> u32,
{
    fn bid(&self, stage: usize, h: Holdings, d: u32) -> Result<u32> {
        Ok(self(stage, h, d))
    }
}

impl DiscretePolicy for DiscreteValueSolution {
    fn bid(&self, stage: usize, h: Holdings, d: u32) -> Result<u32> {
        DiscreteValueSolution::bid(self, stage, h, d)
    }
}

/// Bid table loaded from a discrete solution dump.
#[derive(Debug, Clone, PartialEq)]
pub struct BidTable {
    endowment: u32,
    /// `bids[t][mask][d]`
    bids: Vec<Vec<Vec<u32>>>,
}

impl BidTable {
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let expected = ["stage", "holdings", "endowment", "value", "bid", "settled"];
        if headers.iter().ne(expected) {
            return Err(Error::MalformedSolution(format!(
                "expected discrete solution header {expected:?}"
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<u32> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::MalformedSolution(format!("bad integer {:?}", &rec[i])))
            };
            rows.push((field(0)? as usize, field(1)?, field(2)?, field(4)?));
        }
        let n = rows
            .iter()
            .map(|r| r.0)
            .max()
            .ok_or_else(|| Error::MalformedSolution("solution file has no rows".into()))?;
        let endowment = rows.iter().map(|r| r.2).max().unwrap_or(0);
        let mut bids: Vec<Vec<Vec<Option<u32>>>> = (0..=n)
            .map(|t| vec![vec![None; endowment as usize + 1]; 1 << t])
            .collect();
        for (t, mask, d, bid) in rows {
            let slot = bids[t]
                .get_mut(mask as usize)
                .and_then(|s| s.get_mut(d as usize))
                .ok_or_else(|| {
                    Error::MalformedSolution(format!("holdings {mask} invalid at stage {t}"))
                })?;
            *slot = Some(bid);
        }
        let bids = bids
            .into_iter()
            .enumerate()
            .map(|(t, stage)| {
                stage
                    .into_iter()
                    .enumerate()
                    .map(|(mask, row)| {
                        row.into_iter()
                            .collect::<Option<Vec<u32>>>()
                            .ok_or_else(|| {
                                Error::MalformedSolution(format!(
                                    "missing rows for stage {t}, holdings {mask}"
                                ))
                            })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { endowment, bids })
    }

    pub fn n(&self) -> usize {
        self.bids.len() - 1
    }

    pub fn endowment(&self) -> u32 {
        self.endowment
    }
}

impl DiscretePolicy for BidTable {
    fn bid(&self, stage: usize, h: Holdings, d: u32) -> Result<u32> {
        self.bids
            .get(stage)
            .and_then(|s| s.get(h.mask() as usize))
            .and_then(|row| row.get(d as usize))
            .copied()
            .ok_or(Error::MissingComponent {
                stage,
                holdings: h.mask(),
            })
    }
}

/// Expected value of following a fixed policy from every state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueTable {
    endowment: u32,
    /// `values[t][mask][d]`
    values: Vec<Vec<Vec<f64>>>,
}

impl PolicyValueTable {
    pub fn value(&self, t: usize, h: Holdings, d: u32) -> Result<f64> {
        self.values
            .get(t)
            .and_then(|s| s.get(h.mask() as usize))
            .and_then(|row| row.get(d as usize))
            .copied()
            .ok_or(Error::MissingComponent {
                stage: t,
                holdings: h.mask(),
            })
    }

    pub fn start_value(&self) -> f64 {
        self.values[0][0][self.endowment as usize]
    }
}

/// Backward induction without maximization: the exact expected terminal
/// utility of executing `policy` from each state.
pub fn evaluate_policy_exact<P: DiscretePolicy + Sync + ?Sized>(
    problem: &Problem,
    policy: &P,
) -> Result<PolicyValueTable> {
    let e = integer_endowment(problem)?;
    let n = problem.n();
    let terminal = Terminal::new(problem, e);
    let mut values: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n + 1];
    values[n] = (0..1u32 << n)
        .map(|mask| {
            (0..=e)
                .map(|d| terminal.value(Holdings::from_mask(mask), d))
                .collect()
        })
        .collect();

    for t in (0..n).rev() {
        let next = &values[t + 1];
        let win = problem.win_model(t);
        let r = ResourceIndex::auctioned_at(t);
        let stage = (0..1u32 << t)
            .into_par_iter()
            .map(|mask| {
                let h = Holdings::from_mask(mask);
                let won = h.with(r).mask() as usize;
                (0..=e)
                    .map(|d| {
                        let z = policy.bid(t, h, d)?;
                        if z > d {
                            return Err(Error::BidExceedsEndowment {
                                bid: z as f64,
                                endowment: d as f64,
                            });
                        }
                        let p = win.prob_below_int(z);
                        Ok(p * next[won][(d - z) as usize]
                            + (1.0 - p) * next[mask as usize][d as usize])
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        values[t] = stage;
    }
    Ok(PolicyValueTable {
        endowment: e,
        values,
    })
}
