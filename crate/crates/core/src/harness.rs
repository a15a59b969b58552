//! Experiment configuration, built-in scenarios and report emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{
    estimate_ingredients, fm_w1_simple_coefficient, lemma_suite, BoundReport, Distance, LemmaReport, LhsDistances,
    Mode, Relation,
};
use crate::chaos::{estimate_moments, extract_kernel, product_top_kernel_check, sample_values, ChaosFunctional, Functional};
use crate::error::{Error, Result};
use crate::kernels::SymKernel;
use crate::malliavin::{apply_l, cdcform_check, identity_residuals, skorohod, OperatorTrace};
use crate::oracle::{exact_kernel, exact_moment, exact_product_expectation, to_polynomial};
use crate::rng::{ReplicateRng, SeedTree};
use crate::space::{mecke_check, sample_poisson_with, DiscreteSpace, PointConfig};
use crate::stats::{mean_se, par_replicates, Columns, Estimate};
use crate::stein::{d2_lower_bound, ks_distance, sample_target, stein_properties, w1_distance, Sample, Target, D2_FAMILY_SIZE};

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Classify a nonnegative deviation: pass within max(tol, 2SE), fail at
    /// or beyond 4SE (and beyond tol), inconclusive in between.
    pub fn classify(deviation: f64, se: f64, tol: f64) -> Verdict {
        if deviation.is_nan() {
            return Verdict::Fail;
        }
        if deviation <= tol.max(2.0 * se) {
            Verdict::Pass
        } else if se > 0.0 && deviation < 4.0 * se {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One row of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub scenario: String,
    pub check: String,
    pub estimate: f64,
    pub se: f64,
    pub reference: Option<f64>,
    pub rhs: Option<f64>,
    pub verdict: Verdict,
    pub seed: u64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    fn base(check: &str, estimate: f64, se: f64, verdict: Verdict) -> Self {
        Self {
            scenario: String::new(),
            check: check.to_string(),
            estimate,
            se,
            reference: None,
            rhs: None,
            verdict,
            seed: 0,
            wall_ms: 0.0,
            note: None,
        }
    }

    /// estimate ≈ reference.
    pub fn equality(check: &str, est: Estimate, reference: f64, tol: f64) -> Self {
        let mut r = Self::base(
            check,
            est.value,
            est.se,
            Verdict::classify((est.value - reference).abs(), est.se, tol),
        );
        r.reference = Some(reference);
        r
    }

    /// estimate ≤ rhs, with the two standard errors added.
    pub fn upper(check: &str, lhs: Estimate, rhs: Estimate, tol: f64) -> Self {
        let se = lhs.se + rhs.se;
        let mut r = Self::base(check, lhs.value, se, Verdict::classify(lhs.value - rhs.value, se, tol));
        r.rhs = Some(rhs.value);
        r
    }

    /// Reported quantity without a pass criterion.
    pub fn info(check: &str, est: Estimate) -> Self {
        Self::base(check, est.value, est.se, Verdict::Pass)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Report of one scenario or configured experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_ms: f64,
    pub records: Vec<CheckRecord>,
    #[serde(default)]
    pub bounds: Vec<BoundReport>,
    #[serde(default)]
    pub lemmas: Vec<LemmaReport>,
}

impl ExperimentReport {
    fn new(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads: rayon::current_num_threads(),
            wall_ms: 0.0,
            records: Vec::new(),
            bounds: Vec::new(),
            lemmas: Vec::new(),
        }
    }

    fn finish(mut self, start: Instant) -> Self {
        self.wall_ms = (start.elapsed().as_secs_f64() * 1e3).max(f64::MIN_POSITIVE);
        for r in &mut self.records {
            r.scenario = self.scenario.clone();
            r.seed = self.seed;
            r.wall_ms = self.wall_ms;
        }
        self
    }

    pub fn has_fail(&self) -> bool {
        self.records.iter().any(|r| r.verdict == Verdict::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.has_fail())
    }

    pub fn record(&self, check: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.check == check)
    }

    /// JSON of every number that must replay bit-for-bit: timing and
    /// thread count are excluded.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.wall_ms = 0.0;
        c.threads = 0;
        for r in &mut c.records {
            r.wall_ms = 0.0;
        }
        serde_json::to_string(&c).expect("report serializes")
    }
}

pub const CSV_COLUMNS: [&str; 9] = [
    "scenario",
    "check",
    "estimate",
    "se",
    "reference",
    "rhs",
    "verdict",
    "seed",
    "wall_ms",
];

pub fn emit_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in &report.records {
        w.write_record([
            r.scenario.clone(),
            r.check.clone(),
            r.estimate.to_string(),
            r.se.to_string(),
            opt(r.reference),
            opt(r.rhs),
            r.verdict.as_str().to_string(),
            r.seed.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_json(report: &ExperimentReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Write `report.json` and `report.csv` into `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    emit_json(report, &dir.join("report.json"))?;
    emit_csv(report, &dir.join("report.csv"))
}

/// Checks available to configured experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Identities,
    Moments,
    Bounds,
    SteinProperties,
}

/// A configured experiment, read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub space: DiscreteSpace,
    /// Chaos functionals as `{"constant": c, "kernels": {"p": kernel}}`.
    #[serde(default)]
    pub functionals: Vec<Value>,
    #[serde(default)]
    pub target: Option<Target>,
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_replicates() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if let Some(Target::CenteredGamma { nu }) = self.target {
            Target::centered_gamma(nu).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.parse_functionals()?;
        Ok(())
    }

    pub fn parse_functionals(&self) -> Result<Vec<ChaosFunctional>> {
        self.functionals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                ChaosFunctional::from_json_value(v, &self.space).map_err(|e| Error::Config(format!("functional {i}: {e}")))
            })
            .collect()
    }
}

/// Run a configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let mut report = ExperimentReport::new(&config.name, config.seed);
    let fs = config.parse_functionals()?;
    let space = &config.space;
    let tree = SeedTree::new(config.seed);
    let target = config.target.unwrap_or(Target::Normal);
    for &check in &config.checks {
        match check {
            CheckKind::Identities => {
                for (i, f) in fs.iter().enumerate() {
                    let g = &fs[(i + 1) % fs.len()];
                    let t = tree.child("identities").child_index(i as u64);
                    let prefix = format!("f{i}/");
                    report.records.extend(
                        identity_records(f, g, space, config.n, t)
                            .into_iter()
                            .map(|r| prefixed(r, &prefix)),
                    );
                }
            }
            CheckKind::Moments => {
                for (i, f) in fs.iter().enumerate() {
                    let seed = tree.child("moments").seed(i as u64);
                    let prefix = format!("f{i}/");
                    report.records.extend(
                        moment_records(f, config.n, seed)?
                            .into_iter()
                            .map(|r| prefixed(r, &prefix)),
                    );
                }
            }
            CheckKind::Bounds => {
                for (i, f) in fs.iter().enumerate() {
                    let t = tree.child("bounds").child_index(i as u64);
                    let prefix = format!("f{i}/");
                    let var = f.variance();
                    if var <= 0.0 || !var.is_finite() {
                        return Err(Error::Config(format!("functional {i} has zero variance")));
                    }
                    let f = f.scaled((target.variance() / var).sqrt());
                    let (recs, reps) = bound_records(&f, &target, config.n, config.replicates, t)?;
                    report.records.extend(recs.into_iter().map(|r| prefixed(r, &prefix)));
                    report.bounds.extend(reps);
                }
            }
            CheckKind::SteinProperties => {
                report.records.extend(stein_records(100, 10_000, tree.child("stein").seed(0)));
            }
        }
    }
    Ok(report.finish(start))
}

fn prefixed(mut r: CheckRecord, prefix: &str) -> CheckRecord {
    r.check = format!("{prefix}{}", r.check);
    r
}

/// Parameters shared by the built-in scenarios; `None` picks the
/// scenario's default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub seed: u64,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub lambda: Option<f64>,
    pub q: Option<usize>,
    pub cells: Option<usize>,
    pub nu: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            seed: 42,
            n: None,
            replicates: None,
            lambda: None,
            q: None,
            cells: None,
            nu: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
}

const SCENARIOS: [ScenarioInfo; 9] = [
    ScenarioInfo {
        name: "identities",
        description: "pathwise power/product rules, generator, carre du champ and Skorohod identities (--q, --cells, --n)",
    },
    ScenarioInfo {
        name: "mecke",
        description: "Mecke formula for ten polynomial test functions (--cells, --n)",
    },
    ScenarioInfo {
        name: "moments",
        description: "Monte-Carlo moments against the exact oracle; isometry and orthogonality (--q, --cells, --n)",
    },
    ScenarioInfo {
        name: "kernel-extraction",
        description: "chaos kernels recovered from iterated differences, and top kernels of products (--cells, --n)",
    },
    ScenarioInfo {
        name: "lemmas",
        description: "variance, remainder, indicator and sandwich lemmas: exact for q=2, Monte Carlo for q=3 (--n)",
    },
    ScenarioInfo {
        name: "poisson-clt",
        description: "standardized Poisson count against the normal law: W1 and KS with the fourth-moment bounds (--lambda, --n, --replicates)",
    },
    ScenarioInfo {
        name: "chaos-clt",
        description: "second-chaos nearest-neighbour chain against the normal law with every Gaussian bound (--cells, --lambda, --n, --replicates)",
    },
    ScenarioInfo {
        name: "gamma-approx",
        description: "second-chaos diagonal sum against the centered Gamma law with the Gamma bounds (--nu, --cells, --lambda, --n)",
    },
    ScenarioInfo {
        name: "stein-properties",
        description: "Stein solution bounds on a grid and inequalities on random tuples (--n tuples)",
    },
];

pub fn list_scenarios() -> &'static [ScenarioInfo] {
    &SCENARIOS
}

/// Run a built-in scenario.
pub fn run_scenario(name: &str, params: &ScenarioParams) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new(name, params.seed);
    let tree = SeedTree::new(params.seed).child(name);
    match name {
        "identities" => scenario_identities(params, tree, &mut report)?,
        "mecke" => scenario_mecke(params, tree, &mut report)?,
        "moments" => scenario_moments(params, tree, &mut report)?,
        "kernel-extraction" => scenario_kernels(params, tree, &mut report)?,
        "lemmas" => scenario_lemmas(params, tree, &mut report)?,
        "poisson-clt" => scenario_poisson_clt(params, tree, &mut report)?,
        "chaos-clt" => scenario_chaos_clt(params, tree, &mut report)?,
        "gamma-approx" => scenario_gamma(params, tree, &mut report)?,
        "stein-properties" => {
            let tuples = params.n.unwrap_or(10_000);
            report.records.extend(stein_records(100, tuples, tree.seed(0)));
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    }
    Ok(report.finish(start))
}

/// Run a scenario on a dedicated pool with `threads` workers.
pub fn run_scenario_with_threads(name: &str, params: &ScenarioParams, threads: usize) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| run_scenario(name, params))
}

fn check_range(what: &str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{what} must be in {lo}..={hi}, got {v}")))
    }
}

fn positive(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
    }
}

fn random_space(cells: usize, rng: &mut ReplicateRng) -> Result<DiscreteSpace> {
    DiscreteSpace::new((0..cells).map(|_| rng.random_range(0.3..1.5)).collect())
}

fn random_kernel(cells: usize, order: usize, rng: &mut ReplicateRng) -> Result<SymKernel> {
    SymKernel::from_fn(cells, order, |_| rng.random_range(-1.0..1.0))
}

fn random_integral(space: &DiscreteSpace, order: usize, rng: &mut ReplicateRng) -> Result<ChaosFunctional> {
    ChaosFunctional::integral(space, random_kernel(space.n_cells(), order, rng)?)
}

fn unit_variance(f: ChaosFunctional) -> ChaosFunctional {
    let v = f.variance();
    f.scaled(1.0 / v.sqrt())
}

fn exact(check: &str, value: f64, tol: f64) -> CheckRecord {
    CheckRecord::equality(check, Estimate::exact(value), 0.0, tol)
}

/// Pathwise identity residuals for (F, G) over `n` sampled configurations.
fn identity_records(f: &ChaosFunctional, g: &ChaosFunctional, space: &DiscreteSpace, n: usize, tree: SeedTree) -> Vec<CheckRecord> {
    let names = ["dp2", "dp3", "dm2", "dm3", "mix_plus", "mix_minus"];
    let t = tree.child("triples");
    let rows = par_replicates(n, |i| {
        let mut rng = t.rng(i);
        let config = sample_poisson_with(space, &mut rng);
        let cell = rng.random_range(0..space.n_cells());
        identity_residuals(f, g, &config, cell)
    });
    let mut out: Vec<CheckRecord> = (0..6)
        .map(|k| exact(names[k], rows.iter().map(|r| r[k]).fold(0.0, f64::max), 1e-10))
        .collect();
    if let Some(q) = f.single_order() {
        if f.constant_term() == 0.0 {
            out.push(exact("generator", generator_residual(f, q, space, n.min(1000), tree.child("generator")), 1e-8));
        }
    }
    let cdc = cdcform_check(f, g, space, n.min(1000), tree.child("cdc").seed(0));
    out.push(exact("cdcform", cdc.max_rel, 1e-8));
    out
}

fn generator_residual(f: &ChaosFunctional, q: usize, space: &DiscreteSpace, n: usize, tree: SeedTree) -> f64 {
    let qf = q as f64;
    par_replicates(n, |i| {
        let config = sample_poisson_with(space, &mut tree.rng(i));
        let v = f.eval(&config);
        (apply_l(f, space, &config) + qf * v).abs() / (qf * v.abs()).max(1.0)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

fn scenario_identities(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let q = check_range("q", p.q.unwrap_or(2), 1, 4)?;
    let cells = check_range("cells", p.cells.unwrap_or(5), 1, 16)?;
    let n = p.n.unwrap_or(10_000).max(2);
    let mut rng = tree.child("setup").rng(0);
    let space = random_space(cells, &mut rng)?;
    let mut funcs = Vec::new();
    for k in 0..6 {
        let mut f = ChaosFunctional::constant(&space, if k % 2 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) });
        for order in 1..=q {
            if order == q || rng.random::<bool>() {
                f = f.with_kernel(random_kernel(cells, order, &mut rng)?)?;
            }
        }
        funcs.push(f);
    }
    let per = (n / funcs.len()).max(2);
    let names = ["dp2", "dp3", "dm2", "dm3", "mix_plus", "mix_minus"];
    let mut worst = [0.0f64; 6];
    let mut cdc = 0.0f64;
    for (i, f) in funcs.iter().enumerate() {
        let g = &funcs[(i + 1) % funcs.len()];
        for r in identity_records(f, g, &space, per, tree.child_index(i as u64)) {
            if let Some(k) = names.iter().position(|&s| s == r.check) {
                worst[k] = worst[k].max(r.estimate);
            } else if r.check == "cdcform" {
                cdc = cdc.max(r.estimate);
            }
        }
    }
    for k in 0..6 {
        report.records.push(exact(names[k], worst[k], 1e-10));
    }
    for order in 1..=q {
        let f = random_integral(&space, order, &mut rng)?;
        let res = generator_residual(&f, order, &space, 1000, tree.child("generator").child_index(order as u64));
        report.records.push(exact(&format!("generator_q{order}"), res, 1e-8));
    }
    report.records.push(exact("cdcform", cdc, 1e-8));

    // δ(h) = I₁(h) for a deterministic integrand
    let h = random_kernel(cells, 1, &mut rng)?;
    let i1 = ChaosFunctional::integral(&space, h.clone())?;
    let t = tree.child("skorohod");
    let delta_res = par_replicates(n.min(10_000), |i| {
        let config = sample_poisson_with(&space, &mut t.rng(i));
        let d = skorohod(|_: &PointConfig, z: usize| h.get(&[z]).expect("cell"), &space, &config);
        let v = i1.eval(&config);
        (d - v).abs() / v.abs().max(1.0)
    })
    .into_iter()
    .fold(0.0, f64::max);
    report.records.push(exact("skorohod_deterministic", delta_res, 1e-10));
    report
        .records
        .push(skorohod_duality(&funcs[0], &funcs[1], &h, &space, n, tree.child("duality")));
    Ok(())
}

/// E[F·δ(u)] = E[Σ_z D⁺_zF·u(z)·μ(z)] for u(χ, z) = h(z)·G(χ).
fn skorohod_duality(
    f: &ChaosFunctional,
    g: &ChaosFunctional,
    h: &SymKernel,
    space: &DiscreteSpace,
    n: usize,
    tree: SeedTree,
) -> CheckRecord {
    let u = |c: &PointConfig, z: usize| h.get(&[z]).expect("cell") * g.eval(c);
    let rows: Vec<[f64; 2]> = par_replicates(n, |i| {
        let config = sample_poisson_with(space, &mut tree.rng(i));
        let tr = OperatorTrace::new(f, space, &config);
        let lhs = tr.value * skorohod(u, space, &config);
        let rhs: f64 = (0..space.n_cells())
            .map(|z| tr.d_plus[z] * u(&config, z) * space.mass(z))
            .sum();
        [lhs, rhs]
    });
    let cols = Columns::from_rows(&rows);
    let m = cols.means();
    CheckRecord::equality(
        "skorohod_duality",
        Estimate {
            value: m[0] - m[1],
            se: cols.linear_se(&[1.0, -1.0]),
        },
        0.0,
        0.0,
    )
}

/// Monte-Carlo raw moments of order 2..=4 against the oracle when it fits.
fn moment_records(f: &ChaosFunctional, n: usize, seed: u64) -> Result<Vec<CheckRecord>> {
    let est = estimate_moments(f, f.space(), &[1, 2, 3, 4], n, seed)?;
    Ok(est
        .iter()
        .map(|m| {
            let name = format!("moment_{}", m.order);
            match exact_moment(f, m.order) {
                Ok(v) => CheckRecord::equality(&name, m.raw, v, 1e-12 * v.abs().max(1.0)),
                Err(e) => CheckRecord::info(&name, m.raw).with_note(format!("oracle unavailable: {e}")),
            }
        })
        .collect())
}

fn scenario_moments(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let q = check_range("q", p.q.unwrap_or(2), 1, 4)?;
    let cells = check_range("cells", p.cells.unwrap_or(4), 1, 8)?;
    let n = p.n.unwrap_or(100_000).max(2);
    let mut rng = tree.child("setup").rng(0);
    let space = random_space(cells, &mut rng)?;
    let kq = random_kernel(cells, q, &mut rng)?;
    let fq = ChaosFunctional::integral(&space, kq.clone())?;
    let k1 = random_kernel(cells, 1, &mut rng)?;
    let f1 = ChaosFunctional::integral(&space, k1.clone())?;
    for r in moment_records(&fq, n, tree.seed(0))? {
        report.records.push(prefixed(r, &format!("i{q}/")));
    }
    let mixed = fq.combine(1.0, &f1, 1.0)?;
    for r in moment_records(&mixed, n, tree.seed(1))? {
        report.records.push(prefixed(r, "mixed/"));
    }
    let m2 = exact_moment(&fq, 2)?;
    let iso = crate::kernels::factorial(q) * kq.norm_sq(&space)?;
    report.records.push(exact("isometry", (m2 - iso).abs() / iso.max(1e-300), 1e-9));
    if q > 1 {
        let cross = exact_product_expectation(&f1, &fq)?;
        let scale = (exact_moment(&f1, 2)? * m2).sqrt();
        report.records.push(exact("orthogonality", cross.abs() / scale.max(1e-300), 1e-9));
    }
    let norm2 = k1.norm_sq(&space)?;
    let quartic: f64 = (0..cells).map(|z| k1.get(&[z]).expect("cell").powi(4) * space.mass(z)).sum();
    let want = 3.0 * norm2 * norm2 + quartic;
    report
        .records
        .push(exact("first_chaos_fourth_moment", (exact_moment(&f1, 4)? - want).abs() / want, 1e-9));
    Ok(())
}

fn scenario_mecke(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let cells = check_range("cells", p.cells.unwrap_or(4), 2, 16)?;
    let n = p.n.unwrap_or(100_000).max(2);
    let mut rng = tree.child("setup").rng(0);
    let space = random_space(cells, &mut rng)?;
    let nc = cells;
    type H = Box<dyn Fn(&PointConfig, usize) -> f64 + Sync + Send>;
    let tests: Vec<(&str, H)> = vec![
        ("count_b", Box::new(|c, z| if z == 0 { f64::from(c.count(0)) } else { 0.0 })),
        ("unit", Box::new(|_, _| 1.0)),
        ("own_count", Box::new(|c, z| f64::from(c.count(z)))),
        ("own_count_sq", Box::new(|c, z| f64::from(c.count(z)).powi(2))),
        ("total_weighted", Box::new(|c, z| c.total() as f64 * (z + 1) as f64)),
        (
            "pair_product",
            Box::new(move |c, z| {
                if z == 2 % nc {
                    f64::from(c.count(0) * c.count(1))
                } else {
                    0.0
                }
            }),
        ),
        ("centered_sq", Box::new(|c, z| (f64::from(c.count(z)) - 0.5).powi(2) * z as f64)),
        ("total_sq", Box::new(|c, _| (c.total() as f64).powi(2))),
        ("neighbour", Box::new(move |c, z| f64::from(c.count(z) * c.count((z + 1) % nc)))),
        ("own_cube", Box::new(|c, z| f64::from(c.count(z)).powi(3) / (1 + z) as f64)),
    ];
    for (k, (name, h)) in tests.iter().enumerate() {
        let m = mecke_check(&space, h, n, tree.seed(k as u64));
        report.records.push(CheckRecord::equality(
            &format!("mecke_{name}"),
            Estimate {
                value: m.lhs - m.rhs,
                se: m.se_lhs + m.se_rhs,
            },
            0.0,
            0.0,
        ));
        let closed = match *name {
            "count_b" => Some(space.mass(0) + space.mass(0).powi(2)),
            "unit" => Some(space.total_mass()),
            _ => None,
        };
        if let Some(v) = closed {
            report.records.push(CheckRecord::equality(
                &format!("mecke_{name}_lhs"),
                Estimate { value: m.lhs, se: m.se_lhs },
                v,
                1e-12 * v,
            ));
            report.records.push(CheckRecord::equality(
                &format!("mecke_{name}_rhs"),
                Estimate { value: m.rhs, se: m.se_rhs },
                v,
                1e-12 * v,
            ));
        }
    }
    Ok(())
}

fn scenario_kernels(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let cells = check_range("cells", p.cells.unwrap_or(3), 1, 5)?;
    let n = p.n.unwrap_or(100_000).max(2);
    let mut rng = tree.child("setup").rng(0);
    let space = random_space(cells, &mut rng)?;
    let k1 = random_kernel(cells, 1, &mut rng)?;
    let k2 = random_kernel(cells, 2, &mut rng)?;
    let f = ChaosFunctional::constant(&space, 0.5).with_kernel(k1.clone())?.with_kernel(k2.clone())?;
    let poly = to_polynomial(&f)?;
    for (order, truth) in [(1usize, &k1), (2, &k2)] {
        let est = extract_kernel(&f, &space, order, n, tree.seed(order as u64))?;
        let z = est.max_z_score(truth)?;
        let (mut worst, mut worst_z) = (0usize, -1.0);
        for r in 0..truth.values().len() {
            let t = truth.values()[r];
            let e = Estimate {
                value: est.mean.values()[r],
                se: est.se.values()[r].max(1e-12 * t.abs().max(1.0)),
            };
            let zr = e.z_score(t);
            if zr > worst_z {
                worst = r;
                worst_z = zr;
            }
        }
        report.records.push(
            CheckRecord::equality(
                &format!("extract_q{order}"),
                Estimate {
                    value: est.mean.values()[worst],
                    se: est.se.values()[worst],
                },
                truth.values()[worst],
                1e-12 * truth.values()[worst].abs().max(1.0),
            )
            .with_note(format!("largest entrywise z-score {z:.3}")),
        );
        let exact_k = exact_kernel(&poly, &space, order)?;
        report
            .records
            .push(exact(&format!("oracle_kernel_q{order}"), exact_k.max_abs_diff(truth)?, 1e-9));
    }
    for (a, b) in [(1usize, 1usize), (1, 2), (2, 2)] {
        let fa = random_kernel(cells, a, &mut rng)?;
        let fb = random_kernel(cells, b, &mut rng)?;
        let top = product_top_kernel_check(&space, &fa, &fb)?;
        report
            .records
            .push(exact(&format!("product_top_kernel_{a}{b}"), top.max_abs_diff, 1e-9));
    }
    Ok(())
}

fn lemma_records(rep: &LemmaReport, prefix: &str) -> Vec<CheckRecord> {
    let exact_mode = rep.mode == Mode::Exact;
    rep.checks
        .iter()
        .map(|c| {
            let name = format!("{prefix}{}", c.name);
            match c.relation {
                Relation::Eq => CheckRecord::equality(
                    &name,
                    Estimate {
                        value: c.lhs,
                        se: c.diff.se,
                    },
                    c.rhs,
                    c.tol,
                ),
                Relation::Le => {
                    let tol = if exact_mode { c.tol } else { 0.0 };
                    CheckRecord::upper(
                        &name,
                        Estimate {
                            value: c.lhs,
                            se: c.diff.se,
                        },
                        Estimate::exact(c.rhs),
                        tol,
                    )
                }
            }
        })
        .collect()
}

fn scenario_lemmas(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let n = p.n.unwrap_or(1_000_000).max(2);
    let mut rng = tree.child("setup").rng(0);
    let space2 = random_space(4, &mut rng)?;
    let f2 = unit_variance(random_integral(&space2, 2, &mut rng)?);
    let exact_rep = lemma_suite(&f2, Mode::Exact)?;
    report.records.extend(lemma_records(&exact_rep, "exact_q2/"));
    let space3 = DiscreteSpace::new((0..3).map(|_| rng.random_range(2.0..4.0)).collect())?;
    let f3 = unit_variance(random_integral(&space3, 3, &mut rng)?);
    let mc_rep = lemma_suite(&f3, Mode::Mc { n, seed: tree.seed(3) })?;
    report.records.extend(lemma_records(&mc_rep, "mc_q3/"));
    report.lemmas.push(exact_rep);
    report.lemmas.push(mc_rep);
    Ok(())
}

/// Bias-calibrated distances averaged over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedDistances {
    pub w1: Estimate,
    pub ks: Estimate,
    pub w1_raw: Estimate,
    pub ks_raw: Estimate,
}

/// For each replicate draw `n` values of F and `n` target values and
/// report distance(F sample) − distance(target sample).
pub fn calibrated_distances<F: Functional + ?Sized>(
    f: &F,
    space: &DiscreteSpace,
    target: &Target,
    n: usize,
    replicates: usize,
    tree: SeedTree,
) -> Result<(CalibratedDistances, Vec<f64>)> {
    let mut rows = Vec::with_capacity(replicates);
    let mut pooled = Vec::with_capacity(n * replicates);
    for r in 0..replicates as u64 {
        let vals = sample_values(f, space, n, tree.child("functional").child_index(r));
        pooled.extend_from_slice(&vals);
        let s = Sample::new(vals)?;
        let base = sample_target(target, n, tree.child("baseline").seed(r))?;
        let (w, ks) = (w1_distance(&s, target), ks_distance(&s, target));
        rows.push([w - w1_distance(&base, target), ks - ks_distance(&base, target), w, ks]);
    }
    let cols = Columns::from_rows(&rows);
    let est = |k: usize| {
        if replicates > 1 {
            cols.mean(k)
        } else {
            Estimate::exact(cols.col(k)[0])
        }
    };
    Ok((
        CalibratedDistances {
            w1: est(0),
            ks: est(1),
            w1_raw: est(2),
            ks_raw: est(3),
        },
        pooled,
    ))
}

/// Bound records for a centered functional against `target`.
fn bound_records(
    f: &ChaosFunctional,
    target: &Target,
    n: usize,
    replicates: usize,
    tree: SeedTree,
) -> Result<(Vec<CheckRecord>, Vec<BoundReport>)> {
    let sample = estimate_ingredients(f, n, tree.child("ingredients").seed(0))?;
    let mut recs = Vec::new();
    let lhs = match target {
        Target::Normal => {
            let (d, _) = calibrated_distances(f, f.space(), target, n, replicates, tree.child("distances"))?;
            recs.push(CheckRecord::info("w1_calibrated", d.w1));
            recs.push(CheckRecord::info("ks_calibrated", d.ks));
            LhsDistances {
                w1: Some(d.w1),
                kolmogorov: Some(d.ks),
                d2: None,
            }
        }
        Target::CenteredGamma { .. } => {
            let s = Sample::new(sample.values().to_vec())?;
            let d2 = d2_lower_bound(&s, target, D2_FAMILY_SIZE)?;
            let est = Estimate {
                value: d2.value,
                se: d2.se,
            };
            recs.push(CheckRecord::info("d2_lower_bound", est));
            LhsDistances {
                w1: None,
                kolmogorov: None,
                d2: Some(est),
            }
        }
    };
    let wanted = |d: Distance| match target {
        Target::Normal => d != Distance::D2,
        Target::CenteredGamma { .. } => d == Distance::D2,
    };
    let reports: Vec<BoundReport> = sample.reports(&lhs).into_iter().filter(|r| wanted(r.distance)).collect();
    for r in &reports {
        let name = format!("bound_{}", r.bound);
        let mut rec = match r.lhs {
            Some(l) => CheckRecord::upper(&name, l, r.rhs, 0.0),
            None => CheckRecord::info(&name, r.rhs),
        };
        if r.noise {
            rec = rec.with_note("radicand clamped at 0");
        }
        recs.push(rec);
    }
    let ing = &sample.ingredients;
    recs.push(CheckRecord::info("ingredient_indicator", ing.indicator));
    recs.push(CheckRecord::info("ingredient_quartic", ing.quartic));
    let roundoff = |v: f64| 1e-12 * v.abs().max(1.0);
    let m2 = 2.0 * ing.nu;
    recs.push(CheckRecord::equality("mean_gamma_vs_m2", ing.mean_gamma, m2, roundoff(m2)));
    if let Some(q) = ing.q {
        let want = q as f64 * m2;
        recs.push(CheckRecord::equality("grad_sq_vs_q_m2", ing.grad_sq, want, roundoff(want)));
    }
    Ok((recs, reports))
}

fn scenario_poisson_clt(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let lambda = positive("lambda", p.lambda.unwrap_or(25.0))?;
    let n = p.n.unwrap_or(100_000).max(2);
    let reps = p.replicates.unwrap_or(16).max(1);
    let space = DiscreteSpace::new(vec![lambda])?;
    let f = ChaosFunctional::integral(&space, SymKernel::from_fn(1, 1, |_| 1.0 / lambda.sqrt())?)?;
    let (d, pooled) = calibrated_distances(&f, &space, &Target::Normal, n, reps, tree.child("distances"))?;
    let rows: Vec<[f64; 1]> = pooled.iter().map(|x| [x.powi(4)]).collect();
    let cols = Columns::from_rows(&rows);
    let coef = fm_w1_simple_coefficient();
    let rhs_w1 = cols.delta(|m| coef * (m[0] - 3.0).max(0.0).sqrt());
    let rhs_kol = cols.delta(|m| crate::bounds::fm_kol_rhs(m[0]).value);
    let exact_m4 = 3.0 + 1.0 / lambda;
    report.records.push(CheckRecord::equality("m4", cols.mean(0), exact_m4, 0.0));
    report.records.push(CheckRecord::upper("w1_bound", d.w1, rhs_w1, 0.0));
    report.records.push(CheckRecord::upper(
        "w1_bound_exact_m4",
        d.w1,
        Estimate::exact(coef / lambda.sqrt()),
        0.0,
    ));
    report.records.push(CheckRecord::upper("ks_bound", d.ks, rhs_kol, 0.0));
    report.records.push(CheckRecord::upper(
        "ks_bound_exact_m4",
        d.ks,
        Estimate::exact(crate::bounds::fm_kol_rhs(exact_m4).value),
        0.0,
    ));
    report.records.push(CheckRecord::info("w1_raw", d.w1_raw));
    report.records.push(CheckRecord::info("ks_raw", d.ks_raw));
    let (recs, bounds) = bound_records(&f, &Target::Normal, n.min(50_000), reps, tree.child("bounds"))?;
    report.records.extend(recs.into_iter().map(|r| prefixed(r, "ingredients/")));
    report.bounds.extend(bounds);
    Ok(())
}

/// I₂ of the nearest-neighbour kernel on a chain of cells, normalized to
/// unit variance.
pub fn chain_functional(cells: usize, mass: f64) -> Result<ChaosFunctional> {
    if cells < 2 {
        return Err(Error::InvalidParameter("the chain needs at least two cells".into()));
    }
    let space = DiscreteSpace::uniform(cells, mass)?;
    let c = 1.0 / (2.0 * mass * ((cells - 1) as f64).sqrt());
    let k = SymKernel::from_fn(cells, 2, |idx| if idx[0].abs_diff(idx[1]) == 1 { c } else { 0.0 })?;
    ChaosFunctional::integral(&space, k)
}

/// Σ_i I₂(1_{B_i×B_i}) on `cells` cells of mass `mass`, scaled to
/// E[F²] = 2ν.
pub fn gamma_functional(cells: usize, mass: f64, nu: f64) -> Result<ChaosFunctional> {
    let space = DiscreteSpace::uniform(cells, mass)?;
    let s = (nu / cells as f64).sqrt() / mass;
    let k = SymKernel::from_fn(cells, 2, |idx| if idx[0] == idx[1] { s } else { 0.0 })?;
    ChaosFunctional::integral(&space, k)
}

fn scenario_chaos_clt(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let cells = check_range("cells", p.cells.unwrap_or(12), 2, 16)?;
    let mass = positive("lambda", p.lambda.unwrap_or(1.0))?;
    let n = p.n.unwrap_or(20_000).max(2);
    let reps = p.replicates.unwrap_or(8).max(1);
    let f = chain_functional(cells, mass)?;
    let (recs, bounds) = bound_records(&f, &Target::Normal, n, reps, tree)?;
    report.records.extend(recs);
    report.bounds.extend(bounds);
    Ok(())
}

fn scenario_gamma(p: &ScenarioParams, tree: SeedTree, report: &mut ExperimentReport) -> Result<()> {
    let nu = positive("nu", p.nu.unwrap_or(2.0))?;
    let cells = check_range("cells", p.cells.unwrap_or((nu.ceil() as usize).max(1)), 1, 16)?;
    let mass = positive("lambda", p.lambda.unwrap_or(50.0))?;
    let n = p.n.unwrap_or(20_000).max(2);
    let target = Target::centered_gamma(nu)?;
    let f = gamma_functional(cells, mass, nu)?;
    let (recs, bounds) = bound_records(&f, &target, n, 1, tree.child("bounds"))?;
    report.records.extend(recs);
    report.bounds.extend(bounds);
    let z = sample_target(&target, n, tree.child("lcm").seed(0))?;
    let col: Vec<f64> = z.values().iter().map(|x| x.powi(4) - 12.0 * x.powi(3)).collect();
    report.records.push(CheckRecord::equality(
        "gamma_moment_identity",
        mean_se(&col),
        12.0 * nu * nu - 48.0 * nu,
        0.0,
    ));
    Ok(())
}

fn stein_records(side: usize, tuples: usize, seed: u64) -> Vec<CheckRecord> {
    let r = stein_properties(side, tuples, seed);
    let bound = |name: &str, v: f64, rhs: f64| CheckRecord::upper(name, Estimate::exact(v), Estimate::exact(rhs), 0.0);
    vec![
        exact("equation_residual", r.equation_residual, 1e-10),
        bound("g_max", r.g_max, crate::stein::STEIN_G_BOUND * (1.0 + 1e-14)),
        bound("neg_g_min", -r.g_min, -f64::MIN_POSITIVE),
        bound("max_abs_derivative", r.max_abs_derivative, 1.0 + 1e-14),
        bound("lipschitz_violation", r.lipschitz_violation, 0.0),
        bound("forward_taylor_violation", r.forward_taylor_violation, 0.0),
        bound("backward_taylor_violation", r.backward_taylor_violation, 0.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_thresholds() {
        assert_eq!(Verdict::classify(1.9, 1.0, 0.0), Verdict::Pass);
        assert_eq!(Verdict::classify(3.0, 1.0, 0.0), Verdict::Inconclusive);
        assert_eq!(Verdict::classify(4.0, 1.0, 0.0), Verdict::Fail);
        assert_eq!(Verdict::classify(1e-12, 0.0, 1e-10), Verdict::Pass);
        assert_eq!(Verdict::classify(1e-9, 0.0, 1e-10), Verdict::Fail);
        assert_eq!(Verdict::classify(-5.0, 0.0, 0.0), Verdict::Pass);
        assert_eq!(Verdict::classify(f64::NAN, 1.0, 0.0), Verdict::Fail);
    }

    #[test]
    fn catalog_has_required_entries() {
        let names: Vec<_> = list_scenarios().iter().map(|s| s.name).collect();
        for want in [
            "identities",
            "moments",
            "poisson-clt",
            "gamma-approx",
            "stein-properties",
            "kernel-extraction",
        ] {
            assert!(names.contains(&want));
        }
    }

    #[test]
    fn unknown_scenario_errors() {
        assert!(matches!(
            run_scenario("nope", &ScenarioParams::default()),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn normalized_functionals() {
        let f = chain_functional(6, 2.0).unwrap();
        assert!((f.variance() - 1.0).abs() < 1e-12);
        let g = gamma_functional(3, 10.0, 1.5).unwrap();
        assert!((g.variance() - 3.0).abs() < 1e-12);
    }
}
