//! The constrained entropy maximization over edge profiles, its budget
//! inverse, and every derived threshold parameter.
//!
//! Bookkeeping convention, used consistently throughout: the budget
//! constraint is `sum_k c_k m_k <= B * n`; per-vertex quantities are
//! `a_k = m_k / n` and `p_k = P_k / n`; the unconstrained optimum is
//! `m_k = P_k / 2`, giving `Bbar = (1/2) sum_k c_k p_k`. Logs are natural.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{NavError, Result};
use crate::geometry::{Geometry, VertexId};

/// Reference tolerances: budget inversion solves `g(lambda) = B` to 1e-12
/// relative on `g`; KKT residuals are asserted at 1e-9.
pub const INVERSION_TOL: f64 = 1e-12;
pub const KKT_TOL: f64 = 1e-9;

/// Per-scale edge counts `m = (m_1, ..., m_K)` of an edge set.
pub type EdgeProfile = Vec<u64>;

/// How per-scale costs are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostSpec {
    /// One positive cost per scale, in scale order.
    Explicit(Vec<f64>),
    /// `c_k = k / alpha`: the bit cost of addressing a scale-k neighbor.
    Indexing { alpha: f64 },
    /// `c_k = ln(p_k) / alpha`: same idea expressed through class densities.
    LogDensity { alpha: f64 },
}

impl CostSpec {
    /// Parses `indexing:alpha=1.0`, `logdensity:alpha=1.0`, or
    /// `explicit:1,2,3`.
    pub fn parse(spec: &str) -> Result<CostSpec> {
        let (head, rest) = spec
            .split_once(':')
            .ok_or_else(|| NavError::Parse(format!("cost spec '{spec}' missing ':'")))?;
        match head.trim() {
            "explicit" => {
                let costs: std::result::Result<Vec<f64>, _> =
                    rest.split(',').map(|s| s.trim().parse::<f64>()).collect();
                Ok(CostSpec::Explicit(costs.map_err(|e| {
                    NavError::Parse(format!("bad explicit costs '{rest}': {e}"))
                })?))
            }
            "indexing" | "logdensity" => {
                let alpha_str = rest
                    .strip_prefix("alpha=")
                    .ok_or_else(|| NavError::Parse(format!("cost spec '{spec}' needs alpha=")))?;
                let alpha: f64 = alpha_str
                    .trim()
                    .parse()
                    .map_err(|e| NavError::Parse(format!("bad alpha '{alpha_str}': {e}")))?;
                if !(alpha > 0.0) {
                    return Err(NavError::InvalidArg(format!(
                        "alpha must be > 0, got {alpha}"
                    )));
                }
                Ok(if head.trim() == "indexing" {
                    CostSpec::Indexing { alpha }
                } else {
                    CostSpec::LogDensity { alpha }
                })
            }
            other => Err(NavError::Parse(format!("unknown cost family '{other}'"))),
        }
    }

    /// The alpha parameter when this family has one.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            CostSpec::Explicit(_) => None,
            CostSpec::Indexing { alpha } | CostSpec::LogDensity { alpha } => Some(*alpha),
        }
    }
}

impl fmt::Display for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSpec::Explicit(costs) => {
                let parts: Vec<String> = costs.iter().map(|c| c.to_string()).collect();
                write!(f, "explicit:{}", parts.join(","))
            }
            CostSpec::Indexing { alpha } => write!(f, "indexing:alpha={alpha}"),
            CostSpec::LogDensity { alpha } => write!(f, "logdensity:alpha={alpha}"),
        }
    }
}

/// The numeric data the optimizer needs: class sizes and costs per scale.
///
/// Scales are trimmed to the populated prefix: a lattice whose diameter sits
/// below `gamma^K` has empty top classes, which carry no edges and no cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostModel {
    n: usize,
    gamma: f64,
    costs: Vec<f64>,
    class_sizes: Vec<u64>,
    densities: Vec<f64>,
    alpha_growth: f64,
    family: CostSpec,
}

impl CostModel {
    pub fn new(
        n: usize,
        gamma: f64,
        class_sizes: Vec<u64>,
        costs: Vec<f64>,
        alpha_growth: f64,
        family: CostSpec,
    ) -> Result<CostModel> {
        if costs.len() != class_sizes.len() || costs.is_empty() {
            return Err(NavError::InvalidArg(format!(
                "scale count mismatch: {} costs vs {} classes",
                costs.len(),
                class_sizes.len()
            )));
        }
        if let Some(bad) = costs.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(NavError::InvalidArg(format!("non-positive cost {bad}")));
        }
        if class_sizes.iter().any(|&p| p == 0) {
            return Err(NavError::InvalidArg("empty interior scale class".into()));
        }
        let densities = class_sizes.iter().map(|&p| p as f64 / n as f64).collect();
        Ok(CostModel {
            n,
            gamma,
            costs,
            class_sizes,
            densities,
            alpha_growth,
            family,
        })
    }

    /// A model detached from any concrete geometry, for synthetic ensembles.
    pub fn synthetic(n: usize, class_sizes: Vec<u64>, costs: Vec<f64>) -> Result<CostModel> {
        CostModel::new(
            n,
            2.0,
            class_sizes,
            costs.clone(),
            1.0,
            CostSpec::Explicit(costs),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of (populated) scale classes.
    pub fn scale_count(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn class_sizes(&self) -> &[u64] {
        &self.class_sizes
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn alpha_growth(&self) -> f64 {
        self.alpha_growth
    }

    pub fn family(&self) -> &CostSpec {
        &self.family
    }

    /// Budget of the unconstrained entropy maximum: `(1/2) sum c_k p_k`.
    pub fn b_bar(&self) -> f64 {
        0.5 * self
            .costs
            .iter()
            .zip(&self.densities)
            .map(|(c, p)| c * p)
            .sum::<f64>()
    }
}

/// Geometry plus a consistent per-scale cost assignment.
#[derive(Debug, Clone)]
pub struct CostGeometry {
    geometry: Arc<Geometry>,
    model: CostModel,
}

impl CostGeometry {
    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }
}

/// Computes exact per-scale pair counts and attaches costs from `spec`.
///
/// Class sizes come from one shell histogram for vertex-transitive kinds and
/// from a full pair enumeration otherwise. Trailing empty scales (beyond the
/// diameter) are trimmed; an empty scale below a populated one is an error.
pub fn build_cost_geometry(geometry: Arc<Geometry>, spec: &CostSpec) -> Result<CostGeometry> {
    let n = geometry.vertex_count();
    let k_geom = geometry.scale_count();
    let interior: Vec<usize> = geometry.interior_scales();

    let (totals, min_ratio) = if geometry.is_vertex_transitive() {
        let shells = geometry.shell_counts_of(VertexId(0));
        let totals: Vec<u64> = shells.iter().map(|&s| (s * n / 2) as u64).collect();
        let min_ratio = interior
            .iter()
            .map(|&k| shells[k - 1] as f64 / geometry.scale_upper(k))
            .fold(f64::INFINITY, f64::min);
        (totals, min_ratio)
    } else {
        let (sums, min_ratio) = (0..n)
            .into_par_iter()
            .map(|v| {
                let shells = geometry.shell_counts_of(VertexId(v as u32));
                let ratio = interior
                    .iter()
                    .map(|&k| shells[k - 1] as f64 / geometry.scale_upper(k))
                    .fold(f64::INFINITY, f64::min);
                (shells, ratio)
            })
            .reduce(
                || (vec![0usize; k_geom], f64::INFINITY),
                |(mut acc, r1), (shells, r2)| {
                    for (a, s) in acc.iter_mut().zip(&shells) {
                        *a += s;
                    }
                    (acc, r1.min(r2))
                },
            );
        (sums.iter().map(|&s| (s / 2) as u64).collect(), min_ratio)
    };

    let k_eff = totals
        .iter()
        .rposition(|&p| p > 0)
        .map(|i| i + 1)
        .ok_or_else(|| NavError::InvalidArg("geometry has no pairs".into()))?;
    let class_sizes: Vec<u64> = totals[..k_eff].to_vec();
    debug_assert_eq!(
        class_sizes.iter().sum::<u64>(),
        (n as u64) * (n as u64 - 1) / 2
    );

    let densities: Vec<f64> = class_sizes.iter().map(|&p| p as f64 / n as f64).collect();
    let costs = match spec {
        CostSpec::Explicit(costs) => {
            if costs.len() != k_eff {
                return Err(NavError::InvalidArg(format!(
                    "explicit cost list has {} entries but the geometry has {k_eff} populated scales",
                    costs.len()
                )));
            }
            costs.clone()
        }
        CostSpec::Indexing { alpha } => (1..=k_eff).map(|k| k as f64 / alpha).collect(),
        CostSpec::LogDensity { alpha } => {
            let costs: Vec<f64> = densities.iter().map(|p| p.ln() / alpha).collect();
            if let Some(k) = costs.iter().position(|c| !(*c > 0.0)) {
                return Err(NavError::InvalidArg(format!(
                    "log-density cost is non-positive at scale {} (p_k = {} <= 1)",
                    k + 1,
                    densities[k]
                )));
            }
            costs
        }
    };

    let model = CostModel::new(
        n,
        geometry.gamma(),
        class_sizes,
        costs,
        min_ratio,
        spec.clone(),
    )?;
    Ok(CostGeometry { geometry, model })
}

/// `ln C(n, k)` via log-gamma.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Entropy of an integer edge profile: `sum_k ln C(P_k, m_k)`.
pub fn profile_entropy(model: &CostModel, profile: &[u64]) -> Result<f64> {
    if profile.len() != model.scale_count() {
        return Err(NavError::InvalidArg(format!(
            "profile has {} entries, model has {} scales",
            profile.len(),
            model.scale_count()
        )));
    }
    let mut total = 0.0;
    for (k, (&m, &p)) in profile.iter().zip(model.class_sizes()).enumerate() {
        if m > p {
            return Err(NavError::InvalidArg(format!(
                "profile entry {m} exceeds class size {p} at scale {}",
                k + 1
            )));
        }
        total += ln_binomial(p, m);
    }
    Ok(total)
}

/// The profile entropy's log-gamma interpolation at a real-valued profile
/// `m` (equals [`profile_entropy`] at integer points).
pub fn profile_entropy_real(model: &CostModel, m: &[f64]) -> f64 {
    m.iter()
        .zip(model.class_sizes())
        .map(|(&mk, &pk)| {
            let p = pk as f64;
            ln_gamma(p + 1.0) - ln_gamma(mk + 1.0) - ln_gamma(p - mk + 1.0)
        })
        .sum()
}

/// Continuous relaxation of the profile entropy at densities `a`:
/// `sum_k P_k * H2(a_k / p_k)`, an upper bound on any integer profile's
/// entropy within the same box.
pub fn continuous_entropy(model: &CostModel, a: &[f64]) -> f64 {
    let h2 = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
        }
    };
    model
        .class_sizes()
        .iter()
        .zip(a.iter().zip(model.densities()))
        .map(|(&pk, (&ak, &dk))| pk as f64 * h2(ak / dk))
        .sum()
}

/// Expected budget of the entropic optimum at multiplier `lambda`:
/// `g(lambda) = sum_k c_k p_k / (1 + exp(lambda c_k))`, strictly decreasing
/// with `g(0) = Bbar`. Defined here for all real `lambda`; the public
/// contract is `lambda >= 0`.
pub fn g_of_lambda(model: &CostModel, lambda: f64) -> f64 {
    model
        .costs()
        .iter()
        .zip(model.densities())
        .map(|(&c, &p)| c * p / (1.0 + (lambda * c).exp()))
        .sum()
}

/// The unique `lambda >= 0` with `g(lambda) = B`, by bracketing bisection.
/// Returns 0 for `B >= Bbar` and `+inf` for `B = 0` (the empty graph).
pub fn invert_budget(model: &CostModel, budget: f64) -> Result<f64> {
    if budget < 0.0 || !budget.is_finite() {
        return Err(NavError::InvalidArg(format!(
            "budget must be >= 0, got {budget}"
        )));
    }
    let b_bar = model.b_bar();
    if budget >= b_bar {
        return Ok(0.0);
    }
    if budget == 0.0 {
        return Ok(f64::INFINITY);
    }
    let tol = INVERSION_TOL * budget.max(1.0);
    let mut hi = 1.0f64;
    while g_of_lambda(model, hi) >= budget {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(NavError::Numeric(format!(
                "no bracket for budget {budget}: g({hi}) = {}",
                g_of_lambda(model, hi)
            )));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    if g_of_lambda(model, lo) < budget {
        lo = 0.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let val = g_of_lambda(model, mid);
        // g flattens exponentially at large lambda, so the g-residual test
        // alone cannot pin lambda; require a tight bracket as well.
        if (val - budget).abs() <= tol && (hi - lo) <= 1e-11 * (1.0 + mid) {
            return Ok(mid);
        }
        if val > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// The closed-form solution of the constrained entropy maximization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropicSolution {
    #[serde(rename = "B")]
    pub budget: f64,
    pub lambda: f64,
    #[serde(rename = "aStar")]
    pub a_star: Vec<f64>,
    #[serde(rename = "mStar")]
    pub m_star: Vec<f64>,
    #[serde(rename = "qStar")]
    pub q_star: Vec<f64>,
    #[serde(rename = "Bbar")]
    pub b_bar: f64,
}

/// Solves the profile optimization at budget `B`:
/// `a*_k = p_k / (1 + exp(lambda(B) c_k))`, with per-edge probabilities
/// `q*_k = 1 / (1 + exp(lambda c_k))`.
pub fn solve_profile(model: &CostModel, budget: f64) -> Result<EntropicSolution> {
    let lambda = invert_budget(model, budget)?;
    let b_bar = model.b_bar();
    let k = model.scale_count();
    let (a_star, q_star): (Vec<f64>, Vec<f64>) = if lambda.is_infinite() {
        // B = 0: the empty graph is the only feasible point.
        (vec![0.0; k], vec![0.0; k])
    } else {
        model
            .costs()
            .iter()
            .zip(model.densities())
            .map(|(&c, &p)| {
                let q = 1.0 / (1.0 + (lambda * c).exp());
                (p * q, q)
            })
            .unzip()
    };
    let m_star = a_star.iter().map(|a| a * model.n() as f64).collect();
    let solution = EntropicSolution {
        budget,
        lambda,
        a_star,
        m_star,
        q_star,
        b_bar,
    };
    if budget > 0.0 {
        let spent: f64 = solution
            .a_star
            .iter()
            .zip(model.costs())
            .map(|(a, c)| a * c)
            .sum();
        let target = budget.min(b_bar);
        if (spent - target).abs() > KKT_TOL * budget.max(1.0) {
            return Err(NavError::Numeric(format!(
                "budget saturation residual {} at B={budget}",
                (spent - target).abs()
            )));
        }
    }
    Ok(solution)
}

/// Concentration parameters of the uniform measure around the entropic mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichParams {
    /// Thickness: `min_k min(m*_k, P_k - m*_k)`.
    pub mu: f64,
    /// Condition number: `5 K ln(n) / mu`.
    pub tau: f64,
    /// `sqrt(24 / ln n)`.
    pub epsilon: f64,
    /// Coupling failure bound `2 exp[-mu (eps^2/12 - tau)]`, clamped to the
    /// vacuous bound 1 when the exponent is positive.
    pub delta: f64,
    /// The asymptotic form `2 n^(-5K)`.
    #[serde(rename = "deltaAsymptotic")]
    pub delta_asymptotic: f64,
    /// Whether `epsilon^2 > 12 tau`, i.e. the coupling bound is non-vacuous.
    pub valid: bool,
    /// Whether `tau <= 1 / ln n` (the budget is above the B0 threshold).
    #[serde(rename = "b0Satisfied")]
    pub b0_satisfied: bool,
}

/// Thickness, condition number, and the sandwich `(epsilon, delta)` pair for
/// a solved budget.
pub fn sandwich_params(model: &CostModel, solution: &EntropicSolution) -> Result<SandwichParams> {
    let mu = solution
        .m_star
        .iter()
        .zip(model.class_sizes())
        .map(|(&m, &p)| m.min(p as f64 - m))
        .fold(f64::INFINITY, f64::min);
    if !(mu > 0.0) {
        return Err(NavError::DegenerateBudget(format!(
            "thickness is 0 at B={} (some class pinned to its boundary)",
            solution.budget
        )));
    }
    let n = model.n() as f64;
    let k = model.scale_count() as f64;
    let tau = 5.0 * k * n.ln() / mu;
    let epsilon = (24.0 / n.ln()).sqrt();
    let exponent = mu * (epsilon * epsilon / 12.0 - tau);
    let delta = (2.0 * (-exponent).exp()).min(1.0);
    let delta_asymptotic = 2.0 * (-5.0 * k * n.ln()).exp();
    Ok(SandwichParams {
        mu,
        tau,
        epsilon,
        delta,
        delta_asymptotic,
        valid: epsilon * epsilon > 12.0 * tau,
        b0_satisfied: tau <= 1.0 / n.ln(),
    })
}

/// Budget thresholds for navigability (richness) and sparsity at exponent
/// slack `theta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta: f64,
    #[serde(rename = "kTheta")]
    pub k_theta: f64,
    pub lambda0: f64,
    #[serde(rename = "B0")]
    pub b0: f64,
    #[serde(rename = "lambdaTheta")]
    pub lambda_theta: f64,
    #[serde(rename = "LambdaTheta")]
    pub big_lambda_theta: f64,
    #[serde(rename = "Bminus")]
    pub b_minus: f64,
    #[serde(rename = "Bplus")]
    pub b_plus: f64,
    #[serde(rename = "Ba")]
    pub b_a: Option<f64>,
    #[serde(skip)]
    pub skipped_scales: Vec<usize>,
}

/// Computes `k_theta`, the multiplier thresholds `lambda_theta` (richness)
/// and `Lambda_theta` (sparsity), the condition-number threshold `lambda0`,
/// and the corresponding budgets. Scales with `p_k <= 1` are excluded (their
/// log-density exponent is undefined) and reported in `skipped_scales`.
pub fn thresholds(model: &CostModel, theta: f64) -> Result<Thresholds> {
    if theta < 0.0 {
        return Err(NavError::InvalidArg(format!(
            "theta must be >= 0, got {theta}"
        )));
    }
    let n = model.n() as f64;
    let k_max = model.scale_count();
    let loglog = n.ln().ln();
    let k_theta = (theta * loglog - model.alpha_growth().ln()) / model.gamma().ln();
    let k_lo = (k_theta.ceil().max(1.0)) as usize;
    if k_lo > k_max {
        return Err(NavError::InvalidArg(format!(
            "all scales lie below k_theta = {k_theta:.2} (geometry too small for theta = {theta})"
        )));
    }

    let mut skipped = Vec::new();
    let mut lambda_theta = f64::INFINITY;
    let mut big_lambda_theta = f64::NEG_INFINITY;
    for k in k_lo..=k_max {
        let p = model.densities()[k - 1];
        if p <= 1.0 {
            skipped.push(k);
            continue;
        }
        let base = p.ln() / model.costs()[k - 1];
        lambda_theta = lambda_theta.min(base * (1.0 + theta * loglog / p.ln()));
        big_lambda_theta = big_lambda_theta.max(base * (1.0 - theta * loglog / p.ln()));
    }
    if !lambda_theta.is_finite() {
        return Err(NavError::InvalidArg(
            "no scale at or above k_theta has density p_k > 1".into(),
        ));
    }

    // lambda0: the largest multiplier at which every class keeps at least
    // 5 K ln^2(n) expected edges, from mu ~ n p_k exp(-lambda c_k).
    let mut lambda0 = f64::INFINITY;
    for k in 1..=k_max {
        let p = model.densities()[k - 1];
        if p <= 1.0 {
            if !skipped.contains(&k) {
                skipped.push(k);
            }
            continue;
        }
        let beta_k = p.ln() / model.costs()[k - 1];
        let arg = n * p / (5.0 * k_max as f64 * n.ln() * n.ln());
        lambda0 = lambda0.min(arg.ln() * beta_k / p.ln());
    }
    skipped.sort_unstable();

    let b0 = g_of_lambda(model, lambda0);
    let b_minus = b0.max(g_of_lambda(model, lambda_theta));
    let b_plus = g_of_lambda(model, big_lambda_theta);
    let b_a = model
        .family()
        .alpha()
        .map(|alpha| g_of_lambda(model, alpha));

    Ok(Thresholds {
        theta,
        k_theta,
        lambda0,
        b0,
        lambda_theta,
        big_lambda_theta,
        b_minus,
        b_plus,
        b_a,
        skipped_scales: skipped,
    })
}

/// Exhaustive integer maximizer of the profile entropy within the budget.
/// Independent of the closed form; restricted to oracle scale
/// (`K <= 4`, `P_k <= 64`).
pub fn brute_force_profile(model: &CostModel, budget: f64) -> Result<Vec<u64>> {
    let k = model.scale_count();
    if k > 4 || model.class_sizes().iter().any(|&p| p > 64) {
        return Err(NavError::OracleScale(format!(
            "brute force needs K <= 4 and P_k <= 64, got K = {k}, P = {:?}",
            model.class_sizes()
        )));
    }
    let cap = budget * model.n() as f64;
    let slack = 1e-9 * cap.max(1.0);
    // per-scale ln-binomial rows
    let tables: Vec<Vec<f64>> = model
        .class_sizes()
        .iter()
        .map(|&p| (0..=p).map(|m| ln_binomial(p, m)).collect())
        .collect();
    let mut best: Option<(f64, Vec<u64>)> = None;
    let mut current = vec![0u64; k];
    fn recurse(
        depth: usize,
        spent: f64,
        entropy: f64,
        cap: f64,
        slack: f64,
        model: &CostModel,
        tables: &[Vec<f64>],
        current: &mut Vec<u64>,
        best: &mut Option<(f64, Vec<u64>)>,
    ) {
        if depth == current.len() {
            if best.as_ref().map_or(true, |(b, _)| entropy > *b) {
                *best = Some((entropy, current.clone()));
            }
            return;
        }
        let c = model.costs()[depth];
        let p = model.class_sizes()[depth];
        for m in 0..=p {
            let cost = spent + c * m as f64;
            if cost > cap + slack {
                break;
            }
            current[depth] = m;
            recurse(
                depth + 1,
                cost,
                entropy + tables[depth][m as usize],
                cap,
                slack,
                model,
                tables,
                current,
                best,
            );
        }
        current[depth] = 0;
    }
    recurse(
        0,
        0.0,
        0.0,
        cap,
        slack,
        model,
        &tables,
        &mut current,
        &mut best,
    );
    Ok(best.expect("the zero profile is always feasible").1)
}
