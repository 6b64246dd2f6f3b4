//! Experiment orchestration: configuration, the CLI commands, and CSV/plot
//! emission.
//!
//! All commands are pure functions of an [`ExperimentConfig`]; the binary is
//! a thin wrapper. Reruns with the same config and seeds produce
//! byte-identical CSV bodies (timestamps appear only in `#` comments).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distributions::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{NavError, Result};
use crate::geometry::{build_substrate, parse_geometry_spec, Substrate};
use crate::measure::{
    build_cost_geometry, g_of_lambda, sandwich_params, solve_profile, thresholds, CostGeometry,
    CostSpec, EntropicSolution, Thresholds,
};
use crate::routing::{default_step_budget, route_trial_batch, NavGraph};
use crate::sampler::{
    sample_bounded_cost_exact_with, sample_bounded_cost_profiles, sample_product_with, sample_rba,
    ClassEnumerator, EdgeSet,
};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "/", env!("CARGO_PKG_VERSION"));

fn default_theta() -> f64 {
    1.0
}
fn default_sampler() -> String {
    "product".into()
}
fn default_pairs() -> usize {
    1000
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn default_rho() -> f64 {
    0.5
}
fn default_epv() -> usize {
    1
}
fn default_samples() -> usize {
    10_000
}
fn default_sample_pairs() -> usize {
    20_000
}

/// Budget grid over `[Bminus * from_factor, Bplus * to_factor]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepSpec {
    pub from_factor: f64,
    pub to_factor: f64,
    pub points: usize,
}

/// One experiment description. CLI flags `--seed` and `--out` override the
/// corresponding fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Geometry spec: `cycle:n=1024`, `torus:side=64,dims=2`,
    /// `setsystem:branch=2,depth=10`, `setsystem:file=PATH`.
    pub geometry: String,
    /// Cost spec: `indexing:alpha=1.0`, `logdensity:alpha=1.0`,
    /// `explicit:c1,c2,...`. Required by all commands except `coherence`.
    #[serde(default)]
    pub cost: Option<String>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Single budget (optimize, sandwich-check). Defaults to `Ba` when the
    /// cost family defines one.
    #[serde(default)]
    pub budget: Option<f64>,
    /// Explicit budget list for sweeps; mutually exclusive with `sweep`.
    #[serde(default)]
    pub budgets: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// `product`, `rba`, or `exact`.
    #[serde(default = "default_sampler")]
    pub sampler: String,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_epv")]
    pub edges_per_vertex: usize,
    /// Routing step budget; defaults to `10 (ln n)^2`.
    #[serde(default)]
    pub budget_steps: Option<usize>,
    /// Draws per side for sandwich-check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Doubles the product-side probabilities in sandwich-check.
    #[serde(default)]
    pub negative_control: bool,
    /// Pair sample size for coherence H2 above the exhaustive cutoff.
    #[serde(default = "default_sample_pairs")]
    pub sample_pairs: usize,
    /// Exponent grid for exponent-sweep; defaults to 0.6..=1.4 step 0.1.
    #[serde(default)]
    pub exponents: Option<Vec<f64>>,
    #[serde(default)]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Hex-truncated SHA-256 of the effective config serialization. The
    /// output directory is not part of the experiment and is excluded, so
    /// the same experiment hashes identically wherever its artifacts land.
    pub fn hash(&self) -> String {
        let mut identity = self.clone();
        identity.out = None;
        let canonical = serde_json::to_string(&identity).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.out.clone().unwrap_or_else(|| ".".into()))
    }

    fn cost_spec(&self) -> Result<CostSpec> {
        let spec = self
            .cost
            .as_deref()
            .ok_or_else(|| NavError::InvalidArg("this command needs a 'cost' field".into()))?;
        CostSpec::parse(spec)
    }

    fn step_budget(&self, n: usize) -> usize {
        self.budget_steps.unwrap_or_else(|| default_step_budget(n))
    }
}

/// Resolved budget for single-budget commands: the config's `budget`, else
/// `Ba` when the cost family defines one.
fn resolve_budget(config: &ExperimentConfig, th: &Thresholds) -> Result<f64> {
    config
        .budget
        .or(th.b_a)
        .ok_or_else(|| NavError::InvalidArg("no budget given and the cost family has no Ba".into()))
}

/// Coherence verification (plus set-system axiom reports when applicable).
/// Returns the JSON report and the overall pass flag.
pub fn cmd_coherence(config: &ExperimentConfig, seed: u64) -> Result<(serde_json::Value, bool)> {
    if config.geometry.trim_start().starts_with("setsystem") {
        let geometry = parse_geometry_spec(&config.geometry)?;
        let ss = set_system_of(&config.geometry)?;
        let axioms = ss.check_axioms();
        let shrinkage = ss.check_shrinkage();
        let scale_sets = ss.check_scale_sets()?;
        let coherence = geometry.verify_coherence(config.rho, config.sample_pairs, seed)?;
        let pass = axioms.pass() && shrinkage.pass() && scale_sets.pass() && coherence.pass();
        Ok((
            json!({
                "coherence": coherence,
                "axioms": axioms,
                "shrinkage": shrinkage,
                "scaleSets": scale_sets,
            }),
            pass,
        ))
    } else {
        let geometry = parse_geometry_spec(&config.geometry)?;
        let report = geometry.verify_coherence(config.rho, config.sample_pairs, seed)?;
        let pass = report.pass();
        Ok((serde_json::to_value(report)?, pass))
    }
}

fn set_system_of(spec: &str) -> Result<crate::setsystem::SetSystem> {
    let rest = spec
        .split_once(':')
        .map(|(_, r)| r)
        .ok_or_else(|| NavError::Parse(format!("bad setsystem spec '{spec}'")))?;
    let mut branch = None;
    let mut depth = None;
    let mut file = None;
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some(("branch", v)) => branch = Some(v.parse::<usize>()),
            Some(("depth", v)) => depth = Some(v.parse::<usize>()),
            Some(("file", v)) => file = Some(v.to_string()),
            _ => return Err(NavError::Parse(format!("bad setsystem field '{part}'"))),
        }
    }
    if let Some(path) = file {
        return crate::setsystem::load_set_system(Path::new(&path));
    }
    match (branch, depth) {
        (Some(Ok(b)), Some(Ok(d))) => crate::setsystem::build_hierarchy(b, d),
        _ => Err(NavError::Parse(format!(
            "setsystem spec '{spec}' needs branch= and depth="
        ))),
    }
}

/// Entropic solution, sandwich parameters, and thresholds at one budget.
pub fn cmd_optimize(config: &ExperimentConfig) -> Result<serde_json::Value> {
    let geometry = parse_geometry_spec(&config.geometry)?;
    let cg = build_cost_geometry(geometry, &config.cost_spec()?)?;
    let th = thresholds(cg.model(), config.theta)?;
    warn_skipped(&th);
    let budget = resolve_budget(config, &th)?;
    let solution = solve_profile(cg.model(), budget)?;
    let sandwich = sandwich_params(cg.model(), &solution)?;
    Ok(json!({
        "solution": solution,
        "sandwich": sandwich,
        "thresholds": th,
    }))
}

fn warn_skipped(th: &Thresholds) {
    if !th.skipped_scales.is_empty() {
        eprintln!(
            "warning: scales {:?} have density p_k <= 1 and were excluded from threshold minima",
            th.skipped_scales
        );
    }
}

struct SweepCell {
    budget: f64,
    budget_idx: usize,
    seed_idx: usize,
    seed: u64,
}

/// One CSV row of a budget sweep. Partial failures land in `status`.
fn sweep_row(
    config: &ExperimentConfig,
    hash: &str,
    cg: &CostGeometry,
    enumerator: &ClassEnumerator,
    substrate: &Substrate,
    th: &Thresholds,
    cell: &SweepCell,
) -> String {
    let model = cg.model();
    let n = model.n();
    let head = format!(
        "{hash},{VERSION},{n},{},{},{},{},",
        model.gamma(),
        csv_field(&model.family().to_string()),
        config.theta,
        cell.budget,
    );
    let run = || -> Result<String> {
        let solution = solve_profile(model, cell.budget)?;
        let sandwich = sandwich_params(model, &solution)?;
        let edge_set = sample_edges(config, cg, enumerator, &solution, cell.budget, cell.seed)?;
        let ng = NavGraph::new(substrate.clone(), edge_set)?;
        let stats = route_trial_batch(&ng, config.pairs, config.step_budget(n), cell.seed)?;
        let by_scale: Vec<String> = ng
            .long_edges()
            .by_scale
            .iter()
            .map(|c| c.to_string())
            .collect();
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
            solution.lambda,
            cell.seed,
            stats.pairs,
            stats.success_rate,
            stats.p50,
            stats.p90,
            stats.p99,
            stats.mean_long_edges,
            ng.long_edges().len(),
            by_scale.join(";"),
            sandwich.mu,
            sandwich.tau,
            sandwich.epsilon,
            sandwich.delta,
            th.b_minus,
            th.b_plus,
        )
        .unwrap();
        Ok(row)
    };
    match run() {
        Ok(row) => {
            // splice Ba in before the status column
            let ba = th.b_a.map(|b| b.to_string()).unwrap_or_default();
            let (body, status) = row.rsplit_once(',').unwrap();
            format!("{head}{body},{ba},{status}")
        }
        Err(e) => {
            let blank = ",".repeat(16);
            format!("{head}{blank}{},error: {}", "", csv_field(&e.to_string()))
        }
    }
}

fn sample_edges(
    config: &ExperimentConfig,
    cg: &CostGeometry,
    enumerator: &ClassEnumerator,
    solution: &EntropicSolution,
    budget: f64,
    seed: u64,
) -> Result<EdgeSet> {
    match config.sampler.as_str() {
        "product" => sample_product_with(enumerator, cg.model(), &solution.q_star, seed),
        "exact" => sample_bounded_cost_exact_with(enumerator, cg.model(), budget, seed),
        "rba" => sample_rba(cg.geometry(), config.edges_per_vertex, seed),
        other => Err(NavError::InvalidArg(format!("unknown sampler '{other}'"))),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const SWEEP_HEADER: &str = "config_hash,version,n,gamma,cost_spec,theta,B,lambda,seed,pairs,success_rate,p50,p90,p99,mean_long_edges,edges,by_scale,mu,tau,epsilon,delta,Bminus,Bplus,Ba,status";

/// Budget sweep: samples a graph and routes a batch for every
/// `(budget, seed)` cell, in a work pool, with rows written sorted by
/// `(budget, seed)`. Returns the CSV body and the gnuplot script.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<(String, String)> {
    let geometry = parse_geometry_spec(&config.geometry)?;
    let cg = build_cost_geometry(geometry, &config.cost_spec()?)?;
    let th = thresholds(cg.model(), config.theta)?;
    warn_skipped(&th);
    let budgets: Vec<f64> = match (&config.budgets, &config.sweep) {
        (Some(list), _) if !list.is_empty() => list.clone(),
        (_, sweep) => {
            let spec = sweep.clone().unwrap_or(SweepSpec {
                from_factor: 0.5,
                to_factor: 1.0,
                points: 6,
            });
            if spec.points == 0 {
                return Err(NavError::InvalidArg("sweep needs points >= 1".into()));
            }
            let lo = th.b_minus * spec.from_factor;
            let hi = th.b_plus * spec.to_factor;
            if !(hi > lo) || !(lo > 0.0) {
                return Err(NavError::InvalidArg(format!(
                    "empty sweep grid: [{lo}, {hi}] from Bminus={}, Bplus={}",
                    th.b_minus, th.b_plus
                )));
            }
            if spec.points == 1 {
                vec![lo]
            } else {
                (0..spec.points)
                    .map(|i| lo + (hi - lo) * i as f64 / (spec.points - 1) as f64)
                    .collect()
            }
        }
    };

    let substrate = build_substrate(Arc::clone(cg.geometry()))?;
    let enumerator = ClassEnumerator::new(&cg);
    let hash = config.hash();
    let mut cells = Vec::new();
    for (bi, &b) in budgets.iter().enumerate() {
        for (si, &seed) in config.seeds.iter().enumerate() {
            cells.push(SweepCell {
                budget: b,
                budget_idx: bi,
                seed_idx: si,
                seed,
            });
        }
    }
    let mut rows: Vec<((usize, usize), String)> = cells
        .par_iter()
        .map(|cell| {
            (
                (cell.budget_idx, cell.seed_idx),
                sweep_row(config, &hash, &cg, &enumerator, &substrate, &th, cell),
            )
        })
        .collect();
    rows.sort_by_key(|(key, _)| *key);

    let mut csv = String::new();
    writeln!(csv, "{SWEEP_HEADER}").unwrap();
    for (_, row) in rows {
        writeln!(csv, "{row}").unwrap();
    }

    let n = cg.model().n();
    let theta1 = config.theta + 1.0;
    let plot = format!(
        "# gnuplot script for sweep.csv (columns: 7 = B, 11 = success_rate, 16 = edges)\n\
         set datafile separator \",\"\n\
         set key left\n\
         set xlabel \"B\"\n\
         set terminal pngcairo size 900,600\n\
         set output \"sweep_success.png\"\n\
         set ylabel \"success rate\"\n\
         plot \"sweep.csv\" using 7:11 with points title \"success\"\n\
         set output \"sweep_edges.png\"\n\
         set ylabel \"|E| / (n (ln n)^{{{theta1}}})\"\n\
         plot \"sweep.csv\" using 7:($16/({n}*log({n})**{theta1})) with points title \"normalized edges\"\n"
    );
    Ok((csv, plot))
}

/// Per-scale comparison of the exact bounded-cost law against the product
/// approximation at one budget: means must agree within three pooled
/// per-draw standard deviations; the two-sample KS statistic is reported.
pub fn cmd_sandwich_check(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(serde_json::Value, bool)> {
    if config.samples == 0 {
        return Err(NavError::InvalidArg("no samples".into()));
    }
    let geometry = parse_geometry_spec(&config.geometry)?;
    let cg = build_cost_geometry(geometry, &config.cost_spec()?)?;
    let model = cg.model();
    let th = thresholds(model, config.theta)?;
    let budget = resolve_budget(config, &th)?;
    let solution = solve_profile(model, budget)?;
    let draws = config.samples;

    let exact = sample_bounded_cost_profiles(model, budget, seed, draws)?;
    let q: Vec<f64> = if config.negative_control {
        solution.q_star.iter().map(|q| (2.0 * q).min(1.0)).collect()
    } else {
        solution.q_star.clone()
    };
    let product: Vec<Vec<u64>> = {
        let binomials: Vec<Binomial> = model
            .class_sizes()
            .iter()
            .zip(&q)
            .map(|(&p, &qk)| Binomial::new(p, qk).expect("q in [0,1]"))
            .collect();
        (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let mut rng = {
                    use rand::SeedableRng;
                    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
                    r.set_stream(d);
                    r
                };
                binomials.iter().map(|b| b.sample(&mut rng)).collect()
            })
            .collect()
    };

    let mut per_scale = Vec::new();
    let mut consistent = true;
    for k in 0..model.scale_count() {
        let xs: Vec<f64> = exact.iter().map(|p| p[k] as f64).collect();
        let ys: Vec<f64> = product.iter().map(|p| p[k] as f64).collect();
        let (mx, vx) = mean_var(&xs);
        let (my, vy) = mean_var(&ys);
        // agreement at the per-draw dispersion scale: the uniform law's
        // means sit Theta(1/lambda) total cost below the product means, so
        // a standard-error yardstick at large draw counts would flag that
        // real (and theory-consistent) offset
        let pooled_sd = (0.5 * (vx + vy)).sqrt();
        let ok = (mx - my).abs() <= 3.0 * pooled_sd.max(1e-12);
        consistent &= ok;
        per_scale.push(json!({
            "scale": k + 1,
            "meanExact": mx,
            "meanProduct": my,
            "pooledSd": pooled_sd,
            "withinThreeSd": ok,
            "ks": ks_statistic(&xs, &ys),
        }));
    }
    let verdict = if consistent {
        "consistent"
    } else {
        "inconsistent"
    };
    Ok((
        json!({
            "B": budget,
            "lambda": solution.lambda,
            "samples": draws,
            "negativeControl": config.negative_control,
            "perScale": per_scale,
            "verdict": verdict,
        }),
        consistent,
    ))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub const EXPONENT_HEADER: &str =
    "config_hash,version,n,exponent,lambda,B,seed,mean_degree,edges,success_rate,p50,status";

/// Sweeps the effective cost exponent `lambda / alpha` around 1 for a
/// log-density cost family, reporting mean degree and routing success.
/// Purely descriptive.
pub fn cmd_exponent_sweep(config: &ExperimentConfig) -> Result<String> {
    let spec = config.cost_spec()?;
    let alpha = match spec {
        CostSpec::LogDensity { alpha } => alpha,
        _ => {
            return Err(NavError::InvalidArg(
                "exponent-sweep needs a logdensity cost family".into(),
            ))
        }
    };
    let geometry = parse_geometry_spec(&config.geometry)?;
    let cg = build_cost_geometry(geometry, &spec)?;
    let model = cg.model();
    let substrate = build_substrate(Arc::clone(cg.geometry()))?;
    let enumerator = ClassEnumerator::new(&cg);
    let exponents = config
        .exponents
        .clone()
        .unwrap_or_else(|| (0..9).map(|i| 0.6 + 0.1 * i as f64).collect());
    let hash = config.hash();
    let n = model.n();

    let mut cells = Vec::new();
    for (ei, &x) in exponents.iter().enumerate() {
        for (si, &seed) in config.seeds.iter().enumerate() {
            cells.push((ei, si, x, seed));
        }
    }
    let mut rows: Vec<((usize, usize), String)> = cells
        .par_iter()
        .map(|&(ei, si, x, seed)| {
            let lambda = x * alpha;
            let budget = g_of_lambda(model, lambda);
            let row = (|| -> Result<String> {
                let solution = solve_profile(model, budget)?;
                let edge_set = sample_product_with(&enumerator, model, &solution.q_star, seed)?;
                let ng = NavGraph::new(substrate.clone(), edge_set)?;
                let stats = route_trial_batch(&ng, config.pairs, config.step_budget(n), seed)?;
                Ok(format!(
                    "{hash},{VERSION},{n},{x},{lambda},{budget},{seed},{},{},{},{},ok",
                    ng.mean_degree(),
                    ng.long_edges().len(),
                    stats.success_rate,
                    stats.p50,
                ))
            })()
            .unwrap_or_else(|e| {
                format!(
                    "{hash},{VERSION},{n},{x},{lambda},{budget},{seed},,,,,error: {}",
                    csv_field(&e.to_string())
                )
            });
            ((ei, si), row)
        })
        .collect();
    rows.sort_by_key(|(key, _)| *key);

    let mut csv = String::new();
    writeln!(csv, "{EXPONENT_HEADER}").unwrap();
    for (_, row) in rows {
        writeln!(csv, "{row}").unwrap();
    }
    Ok(csv)
}

/// CLI entry point. Exit codes: 0 pass, 1 experiment-level failure,
/// 2 usage or parse error.
pub fn run_cli() -> i32 {
    use clap::{Args, Parser, Subcommand};

    #[derive(Args)]
    struct Common {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for CSV/JSON artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
    }

    #[derive(Subcommand)]
    enum Cmd {
        /// Verify coherence (and set-system axioms when applicable).
        Coherence(Common),
        /// Solve the entropic profile and report sandwich/threshold parameters.
        Optimize(Common),
        /// Sweep budgets x seeds: sample, route, emit CSV + plot script.
        Sweep(Common),
        /// Compare exact bounded-cost draws against the product approximation.
        SandwichCheck(Common),
        /// Sweep the effective cost exponent around 1 (logdensity families).
        ExponentSweep(Common),
    }

    #[derive(Parser)]
    #[command(
        name = "navlab",
        version,
        about = "navigability experiments on cost geometries"
    )]
    struct Cli {
        #[command(subcommand)]
        cmd: Cmd,
    }

    if let Ok(threads) = std::env::var("NAVLAB_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global();
        }
    }

    let cli = Cli::parse();
    let common = match &cli.cmd {
        Cmd::Coherence(c)
        | Cmd::Optimize(c)
        | Cmd::Sweep(c)
        | Cmd::SandwichCheck(c)
        | Cmd::ExponentSweep(c) => c,
    };
    let mut config = match ExperimentConfig::from_file(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        config.out = Some(out.display().to_string());
    }
    let seed = config.seeds.first().copied().unwrap_or(0);

    // Build-phase errors (bad specs) are usage errors.
    if let Err(e) = parse_geometry_spec(&config.geometry) {
        eprintln!("geometry error: {e}");
        return 2;
    }
    if let Some(cost) = &config.cost {
        if let Err(e) = CostSpec::parse(cost) {
            eprintln!("cost error: {e}");
            return 2;
        }
    }

    // stdout gets the JSON report; --out additionally lands it on disk
    let emit_report = |name: &str, report: &serde_json::Value| -> Result<()> {
        let pretty = serde_json::to_string_pretty(report).unwrap();
        println!("{pretty}");
        if config.out.is_some() {
            let dir = config.out_dir();
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join(format!("{name}.json")), pretty + "\n")?;
        }
        Ok(())
    };

    let outcome = match &cli.cmd {
        Cmd::Coherence(_) => cmd_coherence(&config, seed).and_then(|(report, pass)| {
            emit_report("coherence", &report)?;
            Ok(pass)
        }),
        Cmd::Optimize(_) => cmd_optimize(&config).and_then(|report| {
            emit_report("optimize", &report)?;
            Ok(true)
        }),
        Cmd::Sweep(_) => cmd_sweep(&config).and_then(|(csv, plot)| {
            let dir = config.out_dir();
            std::fs::create_dir_all(&dir)?;
            let stamp = comment_stamp();
            std::fs::write(dir.join("sweep.csv"), format!("{stamp}{csv}"))?;
            std::fs::write(dir.join("sweep.gp"), plot)?;
            println!("wrote {}", dir.join("sweep.csv").display());
            println!("wrote {}", dir.join("sweep.gp").display());
            Ok(true)
        }),
        Cmd::SandwichCheck(_) => cmd_sandwich_check(&config, seed).and_then(|(report, pass)| {
            emit_report("sandwich_check", &report)?;
            Ok(pass)
        }),
        Cmd::ExponentSweep(_) => cmd_exponent_sweep(&config).and_then(|csv| {
            let dir = config.out_dir();
            std::fs::create_dir_all(&dir)?;
            let stamp = comment_stamp();
            std::fs::write(dir.join("exponents.csv"), format!("{stamp}{csv}"))?;
            println!("wrote {}", dir.join("exponents.csv").display());
            Ok(true)
        }),
    };

    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ (NavError::Parse(_) | NavError::Json(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn comment_stamp() -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# {VERSION} run at unix {now}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(geometry: &str, cost: Option<&str>) -> ExperimentConfig {
        serde_json::from_value(json!({
            "geometry": geometry,
            "cost": cost,
            "pairs": 50,
            "seeds": [1, 2],
            "samples": 200,
        }))
        .unwrap()
    }

    #[test]
    fn config_defaults_and_hash() {
        let c = base_config("cycle:n=64", Some("indexing:alpha=1.0"));
        assert_eq!(c.theta, 1.0);
        assert_eq!(c.sampler, "product");
        assert_eq!(c.hash(), c.hash());
        let mut c2 = c.clone();
        c2.theta = 2.0;
        assert_ne!(c.hash(), c2.hash());
        // unknown fields are rejected
        let bad: std::result::Result<ExperimentConfig, _> =
            serde_json::from_value(json!({"geometry": "cycle:n=8", "bogus": 1}));
        assert!(bad.is_err());
    }

    #[test]
    fn coherence_command() {
        let c = base_config("torus:side=8,dims=2", None);
        let (report, pass) = cmd_coherence(&c, 0).unwrap();
        assert!(pass);
        assert!(report.get("passH1").unwrap().as_bool().unwrap());

        let c = base_config("setsystem:branch=2,depth=4", None);
        let (report, pass) = cmd_coherence(&c, 0).unwrap();
        assert!(pass);
        assert!(report.get("axioms").is_some());
        assert!(report.get("shrinkage").is_some());
        assert!(report.get("scaleSets").is_some());
    }

    #[test]
    fn optimize_command() {
        let mut c = base_config("cycle:n=64", Some("logdensity:alpha=1.0"));
        c.budget = None; // defaults to Ba
        let report = cmd_optimize(&c).unwrap();
        let b = report["solution"]["B"].as_f64().unwrap();
        let lambda = report["solution"]["lambda"].as_f64().unwrap();
        assert!((lambda - 1.0).abs() < 1e-6, "lambda(Ba) = alpha");
        assert!(b > 0.0);
        assert!(report["thresholds"]["Bminus"].as_f64().unwrap() > 0.0);
        // B >= Bbar gives lambda = 0
        c.budget = Some(1e9);
        let report = cmd_optimize(&c).unwrap();
        assert_eq!(report["solution"]["lambda"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn sweep_is_reproducible() {
        let mut c = base_config("cycle:n=64", Some("logdensity:alpha=1.0"));
        c.budgets = Some(vec![2.0, 4.0]);
        let (csv1, plot) = cmd_sweep(&c).unwrap();
        let (csv2, _) = cmd_sweep(&c).unwrap();
        assert_eq!(csv1, csv2);
        let lines: Vec<&str> = csv1.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2); // header + budgets x seeds
        assert!(lines[0].starts_with("config_hash,"));
        for line in &lines[1..] {
            assert!(line.ends_with(",ok"), "row failed: {line}");
        }
        // plot references only existing columns
        let ncols = lines[0].split(',').count();
        for cap in ["using 7:11", "using 7:($16/"] {
            assert!(plot.contains(cap));
        }
        assert!(ncols >= 16);
    }

    #[test]
    fn sandwich_check_small() {
        // means large enough that a doubled-q shift exceeds the dispersion band
        let mut c = base_config("cycle:n=64", Some("logdensity:alpha=1.0"));
        c.samples = 400;
        let (report, pass) = cmd_sandwich_check(&c, 5).unwrap();
        assert!(pass, "report: {report}");
        c.negative_control = true;
        let (_, pass) = cmd_sandwich_check(&c, 5).unwrap();
        assert!(!pass, "doubled probabilities must be detected");
        c.samples = 0;
        assert!(cmd_sandwich_check(&c, 5).is_err());
    }

    #[test]
    fn success_degrades_below_the_window() {
        // with the step budget pinned below the diameter, starving the edge
        // budget pushes routing back toward substrate-only behavior
        let mut c = base_config("cycle:n=1024", Some("logdensity:alpha=1.0"));
        c.pairs = 400;
        c.seeds = vec![1];
        c.budget_steps = Some(60);
        let model_cg = build_cost_geometry(
            parse_geometry_spec(&c.geometry).unwrap(),
            &c.cost_spec().unwrap(),
        )
        .unwrap();
        let ba = thresholds(model_cg.model(), 1.0).unwrap().b_a.unwrap();
        c.budgets = Some(vec![0.02 * ba, ba]);
        let (csv, _) = cmd_sweep(&c).unwrap();
        let success = |line: &str| -> f64 { line.split(',').nth(10).unwrap().parse().unwrap() };
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        let (low, high) = (success(rows[0]), success(rows[1]));
        assert!(high >= 0.99, "at Ba: {high}");
        assert!(low < high, "starved budget {low} vs window {high}");
    }

    #[test]
    fn exponent_sweep_family_guard() {
        let c = base_config("cycle:n=32", Some("indexing:alpha=1.0"));
        assert!(cmd_exponent_sweep(&c).is_err());
        let mut c = base_config("cycle:n=64", Some("logdensity:alpha=1.0"));
        c.exponents = Some(vec![0.8, 1.0]);
        let csv = cmd_exponent_sweep(&c).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2);
        // mean degree is monotone decreasing in the exponent
        let degree = |line: &str| -> f64 { line.split(',').nth(7).unwrap().parse().unwrap() };
        let d08 = degree(lines[1]);
        let d10 = degree(lines[3]);
        assert!(d08 > d10, "degree at 0.8 = {d08} vs 1.0 = {d10}");
    }

    #[test]
    fn exponent_sweep_success_ordering() {
        // past the RBA point sparse top scales cannot beat the scale-
        // invariant budget under a tight step budget
        let mut c = base_config("cycle:n=1024", Some("logdensity:alpha=1.0"));
        c.exponents = Some(vec![1.0, 1.6]);
        c.pairs = 400;
        c.seeds = vec![2];
        c.budget_steps = Some(60);
        let csv = cmd_exponent_sweep(&c).unwrap();
        let success = |line: &str| -> f64 { line.split(',').nth(9).unwrap().parse().unwrap() };
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert!(
            success(rows[1]) <= success(rows[0]),
            "success at 1.6 = {} vs 1.0 = {}",
            success(rows[1]),
            success(rows[0])
        );
    }

    #[test]
    fn ks_statistic_sanity() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(ks_statistic(&a, &a) < 1e-12);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert!((ks_statistic(&a, &b) - 1.0).abs() < 1e-12);
    }
}
