//! Random instance generation and the multi-run experiment suite.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{validate_problem, BidDistribution, Bundle, Mode, ProblemSpec, ResidualSpec};
use crate::continuous::{solve_grid, GridStrategy, MaximizerConfig};
use crate::discrete::solve_discrete;
use crate::error::{Error, Result};
use crate::pwl::RefinementBudget;
use crate::rng::{derive_seed, rng_from_seed, RNG_NAME};
use crate::sim::{compare_solutions, CompensatedSum, ErrorReport, ErrorStats, GridApprox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct GeneratorParams {
    pub n_resources: usize,
    pub n_bundles: usize,
    pub bundle_size_mean: f64,
    pub bundle_size_std: f64,
    pub value_mean: f64,
    /// Variance, not standard deviation.
    pub value_var: f64,
    pub bid_mean_range: [f64; 2],
    /// Variance, not standard deviation.
    pub bid_var: f64,
    pub endowment: f64,
    pub residual_slope: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_resources: 10,
            n_bundles: 4,
            bundle_size_mean: 3.0,
            bundle_size_std: 1.0,
            value_mean: 15.0,
            value_var: 2.0,
            bid_mean_range: [3.0, 6.0],
            bid_var: 0.5,
            endowment: 30.0,
            residual_slope: 0.7,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_resources == 0 || self.n_resources > crate::auction::MAX_RESOURCES {
            return bad("nResources out of range");
        }
        if self.n_bundles == 0 {
            return bad("nBundles must be positive");
        }
        if !(self.bundle_size_std >= 0.0 && self.value_var > 0.0 && self.bid_var > 0.0) {
            return bad("variances must be positive");
        }
        let [lo, hi] = self.bid_mean_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return bad("bidMeanRange must be an ordered pair");
        }
        if !(self.endowment > 0.0 && self.endowment.is_finite()) {
            return bad("endowment must be positive");
        }
        if !(self.residual_slope >= 0.0) {
            return bad("residualSlope must be nonnegative");
        }
        Ok(())
    }
}

/// Nearest integer to a size draw, clamped to `[1, n_resources]`.
pub fn bundle_size(draw: f64, n_resources: usize) -> usize {
    let r = draw.round();
    if r < 1.0 {
        1
    } else {
        (r as usize).min(n_resources)
    }
}

const MIN_BUNDLE_VALUE: f64 = 1e-3;

/// A random continuous-mode instance. Resources that end up in no bundle are
/// dropped and the rest renumbered in order.
pub fn generate_instance(params: &GeneratorParams) -> Result<ProblemSpec> {
    params.validate()?;
    let mut rng = rng_from_seed(params.seed);
    let size_dist = Normal::new(params.bundle_size_mean, params.bundle_size_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let value_dist = Normal::new(params.value_mean, params.value_var.sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut drawn = Vec::with_capacity(params.n_bundles);
    for _ in 0..params.n_bundles {
        let size = bundle_size(size_dist.sample(&mut rng), params.n_resources);
        let mut members: Vec<u32> = sample(&mut rng, params.n_resources, size)
            .into_iter()
            .map(|i| i as u32 + 1)
            .collect();
        members.sort_unstable();
        let value = value_dist.sample(&mut rng).max(MIN_BUNDLE_VALUE);
        drawn.push((members, value));
    }
    let [lo, hi] = params.bid_mean_range;
    let bid_means: Vec<f64> = (0..params.n_resources)
        .map(|_| {
            if lo < hi {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect();

    let mut renumber = vec![0u32; params.n_resources + 1];
    let mut kept = 0;
    for (r, slot) in renumber.iter_mut().enumerate().skip(1) {
        if drawn.iter().any(|(m, _)| m.contains(&(r as u32))) {
            kept += 1;
            *slot = kept;
        }
    }
    let bundles = drawn
        .into_iter()
        .map(|(members, value)| Bundle {
            members: members.into_iter().map(|r| renumber[r as usize]).collect(),
            value,
        })
        .collect();
    let std = params.bid_var.sqrt();
    let distributions = (1..=params.n_resources)
        .filter(|&r| renumber[r] != 0)
        .map(|r| BidDistribution::Gaussian {
            mean: bid_means[r - 1],
            std,
        })
        .collect();

    let spec = ProblemSpec {
        n: kept as usize,
        bundles,
        endowment: params.endowment,
        residual: ResidualSpec::Linear {
            linear_slope: params.residual_slope,
        },
        distributions,
        mode: Mode::Continuous,
    };
    validate_problem(&spec)?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Discrete,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunDescriptor {
    pub name: String,
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridStrategy>,
}

impl RunDescriptor {
    pub fn discrete() -> Self {
        Self {
            name: "Discrete".into(),
            mode: RunMode::Discrete,
            grid: None,
        }
    }

    pub fn grid(name: impl Into<String>, strategy: GridStrategy) -> Self {
        Self {
            name: name.into(),
            mode: RunMode::Grid,
            grid: Some(strategy),
        }
    }

    pub fn uniform(knots: usize) -> Self {
        Self::grid(format!("G{knots}"), GridStrategy::UniformFixed { knots })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExperimentConfig {
    pub n_experiments: usize,
    pub runs: Vec<RunDescriptor>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// `seed` is ignored; each experiment derives its own from `masterSeed`.
    pub generator: GeneratorParams,
    pub maximizer: MaximizerConfig,
    pub rng: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_experiments: 20,
            runs: Self::default_runs(),
            output_dir: PathBuf::from("results"),
            master_seed: 0,
            generator: GeneratorParams::default(),
            maximizer: MaximizerConfig::default(),
            rng: RNG_NAME.into(),
        }
    }
}

impl ExperimentConfig {
    /// Discrete, G5, G10 and G15.
    pub fn default_runs() -> Vec<RunDescriptor> {
        vec![
            RunDescriptor::discrete(),
            RunDescriptor::uniform(5),
            RunDescriptor::uniform(10),
            RunDescriptor::uniform(15),
        ]
    }

    /// Variable-grid runs with the same knot budgets as the uniform runs.
    pub fn variable_grid_runs(threshold: f64) -> Vec<RunDescriptor> {
        let mut runs = Vec::new();
        for knots in [5, 10, 15] {
            let budget = RefinementBudget {
                max_knots: knots,
                threshold,
            };
            runs.push(RunDescriptor::grid(
                format!("VG1-{knots}"),
                GridStrategy::Vg1(budget),
            ));
            runs.push(RunDescriptor::grid(
                format!("VG2-{knots}"),
                GridStrategy::Vg2(budget),
            ));
        }
        runs
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.runs.is_empty() {
            return bad("at least one run is required".into());
        }
        if !self.runs.iter().any(|r| r.mode == RunMode::Discrete) {
            return bad("error reports need a discrete run".into());
        }
        for (i, r) in self.runs.iter().enumerate() {
            if r.name.is_empty()
                || !r
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return bad(format!(
                    "run name {:?} must be nonempty and alphanumeric",
                    r.name
                ));
            }
            if self.runs[..i].iter().any(|o| o.name == r.name) {
                return bad(format!("duplicate run name {:?}", r.name));
            }
            match (r.mode, &r.grid) {
                (RunMode::Grid, None) => return bad(format!("grid run {:?} has no grid", r.name)),
                (RunMode::Discrete, Some(_)) => {
                    return bad(format!("discrete run {:?} has a grid", r.name))
                }
                (RunMode::Grid, Some(g)) => g.validate()?,
                _ => {}
            }
        }
        if self.rng != RNG_NAME {
            return bad(format!(
                "unsupported rng {:?}; only {RNG_NAME:?} is available",
                self.rng
            ));
        }
        self.generator.validate()?;
        self.maximizer.validate()
    }
}

/// Errors and bound of one run on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub name: String,
    pub report: ErrorReport,
    /// Estimated error bound at stage 0, grid runs only.
    pub error_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub index: usize,
    pub seed: u64,
    pub instance: ProblemSpec,
    pub start_value: f64,
    pub runs: Vec<RunResult>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Generates, solves and compares one instance. Writes its files under
/// `dir` when given.
pub fn run_experiment(
    config: &ExperimentConfig,
    index: usize,
    dir: Option<&Path>,
) -> Result<ExperimentResult> {
    let seed = derive_seed(config.master_seed, index as u64);
    let params = GeneratorParams {
        seed,
        ..config.generator.clone()
    };
    let instance = generate_instance(&params)?;
    let continuous = validate_problem(&instance)?;
    let twin = validate_problem(&instance.discrete_twin()?)?;
    let exact = solve_discrete(&twin)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("instance.json"), instance.to_json()?)?;
    }

    let mut runs = Vec::with_capacity(config.runs.len());
    for run in &config.runs {
        let result = match (&run.mode, &run.grid) {
            (RunMode::Discrete, _) => RunResult {
                name: run.name.clone(),
                report: compare_solutions(&exact, &exact, exact.state_count())?,
                error_bound: None,
            },
            (RunMode::Grid, Some(strategy)) => {
                let sol = solve_grid(&continuous, strategy, &config.maximizer)?;
                let approx = GridApprox {
                    values: &sol.values,
                    problem: &continuous,
                    cfg: config.maximizer,
                };
                let report = compare_solutions(&exact, &approx, sol.state_count)?;
                if let Some(dir) = dir {
                    sol.ledger
                        .write_csv(create(&dir.join(format!("ledger_{}.csv", run.name)))?)?;
                }
                RunResult {
                    name: run.name.clone(),
                    report,
                    error_bound: Some(sol.ledger.error_bound(0)?),
                }
            }
            (RunMode::Grid, None) => {
                return Err(Error::InvalidArgument(format!(
                    "grid run {:?} has no grid",
                    run.name
                )))
            }
        };
        if let Some(dir) = dir {
            result
                .report
                .write_csv(create(&dir.join(format!("errors_{}.csv", run.name)))?)?;
        }
        runs.push(result);
    }

    let result = ExperimentResult {
        index,
        seed,
        instance,
        start_value: exact.start_value(),
        runs,
    };
    if let Some(dir) = dir {
        write_summary(&result, &dir.join("summary.csv"))?;
    }
    Ok(result)
}

fn write_summary(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "run",
        "states",
        "mean_value_err",
        "max_value_err",
        "mean_policy_err",
        "max_policy_err",
        "start_value",
        "error_bound",
    ])?;
    for r in &result.runs {
        let a = &r.report.aggregate;
        w.write_record(&[
            r.name.clone(),
            r.report.state_count.to_string(),
            a.mean_value_err.to_string(),
            a.max_value_err.to_string(),
            a.mean_policy_err.to_string(),
            a.max_policy_err.to_string(),
            result.start_value.to_string(),
            r.error_bound.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the aggregate table: each column averaged over experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: String,
    pub states: f64,
    pub mean_sq_value_error: f64,
    pub mean_max_sq_value_error: f64,
    pub mean_sq_policy_error: f64,
    pub mean_max_sq_policy_error: f64,
    pub experiments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub table: Vec<RunSummary>,
    pub experiments: Vec<ExperimentResult>,
    pub failures: Vec<ExperimentFailure>,
}

impl SuiteReport {
    pub fn run(&self, name: &str) -> Option<&RunSummary> {
        self.table.iter().find(|r| r.run == name)
    }
}

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = CompensatedSum::default();
    for x in xs {
        s.add(x);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s.total() / n as f64
    }
}

fn summarize(config: &ExperimentConfig, experiments: &[ExperimentResult]) -> Vec<RunSummary> {
    config
        .runs
        .iter()
        .enumerate()
        .map(|(i, run)| {
            let runs: Vec<&RunResult> = experiments.iter().map(|e| &e.runs[i]).collect();
            let agg =
                |f: fn(&ErrorStats) -> f64| mean_of(runs.iter().map(|r| f(&r.report.aggregate)));
            RunSummary {
                run: run.name.clone(),
                states: mean_of(runs.iter().map(|r| r.report.state_count as f64)),
                mean_sq_value_error: agg(|s| s.mean_value_err),
                mean_max_sq_value_error: agg(|s| s.max_value_err),
                mean_sq_policy_error: agg(|s| s.mean_policy_err),
                mean_max_sq_policy_error: agg(|s| s.max_policy_err),
                experiments: runs.len(),
            }
        })
        .collect()
}

fn write_table(table: &[RunSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "run",
        "states",
        "mean_sq_value_error",
        "mean_max_sq_value_error",
        "mean_sq_policy_error",
        "mean_max_sq_policy_error",
    ])?;
    for r in table {
        w.write_record(&[
            r.run.clone(),
            r.states.to_string(),
            r.mean_sq_value_error.to_string(),
            r.mean_max_sq_value_error.to_string(),
            r.mean_sq_policy_error.to_string(),
            r.mean_max_sq_policy_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-stage curves: for each run and stage, the stage statistics averaged
/// over the experiments that have unsettled states there.
fn write_per_stage(
    config: &ExperimentConfig,
    experiments: &[ExperimentResult],
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "run",
        "stage",
        "mean_value_err",
        "max_value_err",
        "mean_policy_err",
        "max_policy_err",
        "experiments",
    ])?;
    let stages = experiments.iter().map(|e| e.instance.n).max().unwrap_or(0);
    for (i, run) in config.runs.iter().enumerate() {
        for t in 0..stages {
            let at: Vec<&ErrorStats> = experiments
                .iter()
                .filter_map(|e| e.runs[i].report.stages.get(t))
                .filter(|s| s.states > 0)
                .collect();
            if at.is_empty() {
                continue;
            }
            let avg = |f: fn(&ErrorStats) -> f64| mean_of(at.iter().map(|s| f(s))).to_string();
            w.write_record(&[
                run.name.clone(),
                t.to_string(),
                avg(|s| s.mean_value_err),
                avg(|s| s.max_value_err),
                avg(|s| s.mean_policy_err),
                avg(|s| s.max_policy_err),
                at.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ManifestEntry {
    index: usize,
    seed: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Manifest<'a> {
    master_seed: u64,
    n_experiments: usize,
    rng: &'a str,
    runs: &'a [RunDescriptor],
    generator: &'a GeneratorParams,
    maximizer: &'a MaximizerConfig,
    experiments: Vec<ManifestEntry>,
}

/// Runs every experiment of `config`, writing per-experiment files under
/// `<outputDir>/experiments/exp_NNN/` and `table1.csv`, `per_stage.csv` and
/// `manifest.json` under `<outputDir>`. The manifest records seeds and
/// parameters but not the output location. A failing experiment is logged
/// and skipped.
pub fn run_experiment_suite(config: &ExperimentConfig) -> Result<SuiteReport> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out.join("experiments"))?;

    let outcomes: Vec<std::result::Result<ExperimentResult, ExperimentFailure>> = (0..config
        .n_experiments)
        .into_par_iter()
        .map(|i| {
            let dir = out.join("experiments").join(format!("exp_{i:03}"));
            run_experiment(config, i, Some(&dir)).map_err(|err| {
                log::error!("experiment {i} failed: {err}");
                ExperimentFailure {
                    index: i,
                    seed: derive_seed(config.master_seed, i as u64),
                    error: err.to_string(),
                }
            })
        })
        .collect();

    let mut experiments = Vec::new();
    let mut failures = Vec::new();
    let mut entries = Vec::new();
    for o in outcomes {
        match o {
            Ok(e) => {
                log::info!(
                    "experiment {} done, start value {:.4}",
                    e.index,
                    e.start_value
                );
                entries.push(ManifestEntry {
                    index: e.index,
                    seed: e.seed,
                    status: "ok",
                    error: None,
                });
                experiments.push(e);
            }
            Err(f) => {
                entries.push(ManifestEntry {
                    index: f.index,
                    seed: f.seed,
                    status: "failed",
                    error: Some(f.error.clone()),
                });
                failures.push(f);
            }
        }
    }

    let table = summarize(config, &experiments);
    write_table(&table, &out.join("table1.csv"))?;
    write_per_stage(config, &experiments, &out.join("per_stage.csv"))?;
    let manifest = Manifest {
        master_seed: config.master_seed,
        n_experiments: config.n_experiments,
        rng: &config.rng,
        runs: &config.runs,
        generator: &config.generator,
        maximizer: &config.maximizer,
        experiments: entries,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    Ok(SuiteReport {
        table,
        experiments,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let p = GeneratorParams::default();
        assert_eq!((p.n_resources, p.n_bundles), (10, 4));
        assert_eq!((p.bundle_size_mean, p.bundle_size_std), (3.0, 1.0));
        assert_eq!((p.value_mean, p.value_var), (15.0, 2.0));
        assert_eq!(p.bid_mean_range, [3.0, 6.0]);
        assert_eq!(p.bid_var, 0.5);
        assert_eq!((p.endowment, p.residual_slope), (30.0, 0.7));
        let c = ExperimentConfig::default();
        assert_eq!(c.n_experiments, 20);
        let names: Vec<&str> = c.runs.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["Discrete", "G5", "G10", "G15"]);
        c.validate().unwrap();
    }

    #[test]
    fn size_rounding_and_clamping() {
        assert_eq!(bundle_size(-0.2, 10), 1);
        assert_eq!(bundle_size(0.4, 10), 1);
        assert_eq!(bundle_size(2.5, 10), 3);
        assert_eq!(bundle_size(3.49, 10), 3);
        assert_eq!(bundle_size(14.0, 10), 10);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        for seed in 0..30 {
            let p = GeneratorParams {
                seed,
                ..Default::default()
            };
            let a = generate_instance(&p).unwrap();
            let b = generate_instance(&p).unwrap();
            assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
            validate_problem(&a).unwrap();
            assert_eq!(a.bundles.len(), 4);
            assert!(a.n <= 10);
            for d in &a.distributions {
                let BidDistribution::Gaussian { mean, std } = d else {
                    panic!("continuous instances use Gaussian bids")
                };
                assert!((3.0..=6.0).contains(mean));
                assert!((std - 0.5f64.sqrt()).abs() < 1e-15);
            }
        }
        let a = generate_instance(&GeneratorParams {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let b = generate_instance(&GeneratorParams {
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn config_json_uses_camel_case() {
        let cfg = ExperimentConfig::from_json(
            r#"{"nExperiments": 2, "masterSeed": 5,
                "runs": [{"name": "Discrete", "mode": "discrete"},
                         {"name": "V", "mode": "grid", "grid": "vg2:9,0.01"}],
                "generator": {"nResources": 6}}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_experiments, 2);
        assert_eq!(cfg.generator.n_resources, 6);
        assert_eq!(cfg.generator.n_bundles, 4);
        assert_eq!(
            cfg.runs[1].grid,
            Some(GridStrategy::Vg2(RefinementBudget {
                max_knots: 9,
                threshold: 0.01
            }))
        );
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig {
            runs: vec![RunDescriptor::uniform(5)],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.runs = vec![RunDescriptor::discrete(), RunDescriptor::discrete()];
        assert!(cfg.validate().is_err());
        cfg.runs = vec![RunDescriptor::discrete()];
        cfg.rng = "mt19937".into();
        assert!(cfg.validate().is_err());
    }

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            n_experiments: 2,
            output_dir: dir.to_path_buf(),
            master_seed: 9,
            generator: GeneratorParams {
                n_resources: 4,
                n_bundles: 2,
                endowment: 8.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn discrete_only_suite_has_zero_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            n_experiments: 1,
            runs: vec![RunDescriptor::discrete()],
            ..small_config(dir.path())
        };
        let report = run_experiment_suite(&cfg).unwrap();
        let row = report.run("Discrete").unwrap();
        assert_eq!(row.mean_sq_value_error, 0.0);
        assert_eq!(row.mean_max_sq_policy_error, 0.0);
        assert!(dir
            .path()
            .join("experiments/exp_000/errors_Discrete.csv")
            .exists());
    }

    #[test]
    fn suite_writes_reports_deterministically() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_experiment_suite(&small_config(a.path())).unwrap();
        run_experiment_suite(&small_config(b.path())).unwrap();
        assert!(ra.failures.is_empty());
        let header = fs::read_to_string(a.path().join("table1.csv")).unwrap();
        assert!(header.starts_with(
            "run,states,mean_sq_value_error,mean_max_sq_value_error,mean_sq_policy_error,mean_max_sq_policy_error\n"
        ));
        for f in [
            "table1.csv",
            "per_stage.csv",
            "experiments/exp_001/summary.csv",
            "experiments/exp_001/ledger_G10.csv",
            "experiments/exp_000/instance.json",
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let manifest = fs::read_to_string(a.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("\"masterSeed\": 9"));
    }

    #[test]
    fn start_value_beats_keeping_the_money() {
        let cfg = small_config(Path::new("unused"));
        for i in 0..5 {
            let r = run_experiment(&cfg, i, None).unwrap();
            assert!(r.start_value >= 0.7 * 8.0 - 1e-9);
        }
    }
}
