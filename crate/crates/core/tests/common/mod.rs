//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use seqbid::auction::{BidDistribution, Bundle, Mode, ProblemSpec, ResidualSpec};
use seqbid::continuous::HybridValueFunction;
use seqbid::experiment::{generate_instance, GeneratorParams};
use seqbid::{Holdings, PwlFunction};

/// A random discrete instance with at most 3 resources, endowment at most 5
/// and high bids supported on at most `{0, 1, 2, 3}`.
pub fn micro_instance(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let n: u32 = rng.random_range(1..=3);
    let n_bundles = rng.random_range(1..=3);
    let mut bundles: Vec<Bundle> = (0..n_bundles)
        .map(|_| {
            let mut members: Vec<u32> = (1..=n).filter(|_| rng.random_bool(0.5)).collect();
            if members.is_empty() {
                members.push(rng.random_range(1..=n));
            }
            Bundle {
                members,
                value: rng.random_range(1.0..20.0),
            }
        })
        .collect();
    for r in 1..=n {
        if !bundles.iter().any(|b| b.members.contains(&r)) {
            let i = rng.random_range(0..bundles.len());
            bundles[i].members.push(r);
            bundles[i].members.sort_unstable();
        }
    }
    let endowment: u32 = rng.random_range(0..=5);
    let residual = if rng.random_bool(0.5) {
        ResidualSpec::Linear {
            linear_slope: rng.random_range(0.0..1.5),
        }
    } else {
        let mut knots = vec![[0.0, 0.0]];
        let (mut x, mut y) = (0.0, 0.0);
        while x < endowment as f64 {
            x += rng.random_range(0.5..3.0);
            y += rng.random_range(0.0..3.0);
            knots.push([x, y]);
        }
        if knots.len() < 2 {
            knots.push([1.0, rng.random_range(0.0..2.0)]);
        }
        ResidualSpec::Knots { knots }
    };
    let distributions = (0..n)
        .map(|_| {
            let support = rng.random_range(1..=4);
            let weights: Vec<f64> = (0..support).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let head: f64 = probs[..support - 1].iter().sum();
            probs[support - 1] = (1.0 - head).max(0.0);
            BidDistribution::Multinomial { probs }
        })
        .collect();
    ProblemSpec {
        n: n as usize,
        bundles,
        endowment: endowment as f64,
        residual,
        distributions,
        mode: Mode::Discrete,
    }
}

/// Linear interpolation through `(xs, ys)`, clamped at the ends.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let mut i = 0;
    while xs[i + 1] < x {
        i += 1;
    }
    ys[i] + (ys[i + 1] - ys[i]) * (x - xs[i]) / (xs[i + 1] - xs[i])
}

pub fn residual_value(spec: &ProblemSpec, d: f64) -> f64 {
    match &spec.residual {
        ResidualSpec::Linear { linear_slope } => linear_slope * d,
        ResidualSpec::Knots { knots } => {
            let xs: Vec<f64> = knots.iter().map(|k| k[0]).collect();
            let ys: Vec<f64> = knots.iter().map(|k| k[1]).collect();
            interp(&xs, &ys, d)
        }
    }
}

/// Best complete bundle in `mask` (bit `i` is resource `i + 1`) plus `f(d)`.
pub fn terminal_value(spec: &ProblemSpec, mask: u32, d: f64) -> f64 {
    let v = spec
        .bundles
        .iter()
        .filter(|b| b.members.iter().all(|&m| mask & (1 << (m - 1)) != 0))
        .map(|b| b.value)
        .fold(0.0, f64::max);
    v + residual_value(spec, d)
}

/// Expectimax over every integer bid and every high-bid outcome.
pub fn expectimax(spec: &ProblemSpec, t: usize, mask: u32, d: u32) -> f64 {
    if t == spec.n {
        return terminal_value(spec, mask, d as f64);
    }
    let BidDistribution::Multinomial { probs } = &spec.distributions[t] else {
        panic!("expectimax needs multinomial bids");
    };
    let lose = expectimax(spec, t + 1, mask, d);
    (0..=d)
        .map(|z| {
            probs
                .iter()
                .enumerate()
                .map(|(w, p)| {
                    if z as usize > w {
                        p * expectimax(spec, t + 1, mask | 1 << t, d - z)
                    } else {
                        p * lose
                    }
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

/// `Pr(w < z)` for a normal truncated at 0, tabulated on `z = k·step` by
/// piecewise Simpson integration of the density.
pub struct CdfTable {
    mean: f64,
    std: f64,
    step: f64,
    cum: Vec<f64>,
    total: f64,
}

impl CdfTable {
    pub fn new(mean: f64, std: f64, step: f64, hi: f64) -> Self {
        let dens = move |x: f64| (-(x - mean).powi(2) / (2.0 * std * std)).exp();
        let k_max = (hi / step).ceil() as usize + 1;
        let mut cum = Vec::with_capacity(k_max + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for k in 0..k_max {
            acc += simpson(dens, k as f64 * step, (k + 1) as f64 * step);
            cum.push(acc);
        }
        let far = mean.max(0.0) + 14.0 * std;
        let pieces = 20_000;
        let h = far / pieces as f64;
        let total = (0..pieces)
            .map(|i| simpson(dens, i as f64 * h, (i + 1) as f64 * h))
            .sum();
        Self {
            mean,
            std,
            step,
            cum,
            total,
        }
    }

    pub fn for_spec(spec: &ProblemSpec, t: usize, step: f64) -> Self {
        let BidDistribution::Gaussian { mean, std } = spec.distributions[t] else {
            panic!("expected a Gaussian bid distribution");
        };
        Self::new(mean, std, step, spec.endowment)
    }

    pub fn at_index(&self, k: usize) -> f64 {
        (self.cum[k] / self.total).min(1.0)
    }

    pub fn at(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let k = ((z / self.step).floor() as usize).min(self.cum.len() - 1);
        let (mean, std) = (self.mean, self.std);
        let dens = |x: f64| (-(x - mean).powi(2) / (2.0 * std * std)).exp();
        ((self.cum[k] + simpson(dens, k as f64 * self.step, z)) / self.total).min(1.0)
    }
}

fn knots(f: &PwlFunction) -> (Vec<f64>, Vec<f64>) {
    (f.xs().to_vec(), f.ys().to_vec())
}

/// Largest Q over bids `k·step` in `[0, d]`, together with `d` itself and
/// every point where the win branch has a knot.
pub fn dense_backup(
    values: &HybridValueFunction,
    t: usize,
    h: Holdings,
    d: f64,
    cdf: &CdfTable,
    step: f64,
) -> f64 {
    let (lx, ly) = knots(&values.component(t + 1, h).unwrap());
    let (wx, wy) = knots(
        &values
            .component(t + 1, Holdings::from_mask(h.mask() | 1 << t))
            .unwrap(),
    );
    let lose = interp(&lx, &ly, d);
    let q = |z: f64, f: f64| f * interp(&wx, &wy, d - z) + (1.0 - f) * lose;
    let mut best = lose;
    let k_max = (d / step).floor() as usize;
    for k in 0..=k_max {
        let z = k as f64 * step;
        if z <= d {
            best = best.max(q(z, cdf.at_index(k)));
        }
    }
    for z in std::iter::once(d).chain(wx.iter().filter(|&&x| x > 0.0 && x < d).map(|x| d - x)) {
        best = best.max(q(z, cdf.at(z)));
    }
    best
}

/// A small random continuous instance: up to 3 resources, endowment 10.
pub fn small_continuous_instance(seed: u64) -> ProblemSpec {
    generate_instance(&GeneratorParams {
        n_resources: 3,
        n_bundles: 2,
        endowment: 10.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}
