//! Kleinberg-style set systems, the induced semi-metric `d_sigma`, and
//! checkers for the axioms that make such systems coherent geometries.
//!
//! A `(lambda, beta)`-set system over ground set `V` satisfies:
//!   (K1) `V` itself is one of the sets;
//!   (K2) every set `S` with `|S| > 1` has, for each `t` in `S`, a proper
//!        subset containing `t` of size at least `min(lambda|S|, |S|-1)`;
//!   (K3) the union of sets containing `v` of size at most `L` has at most
//!        `beta * L` elements, for every `L >= 2`.
//!
//! The induced distance between two vertices is the size of the smallest set
//! containing both, minus 1 (so singletons give `d(u,u) = 0`).

use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geometry::{Geometry, VertexId};

const MAX_SCALE_INTERVALS: usize = 64;

/// A collection of subsets of `[0, n)` with its declared parameters.
#[derive(Debug, Clone)]
pub struct SetSystem {
    n: usize,
    /// Each set sorted ascending; ordered by (size, content).
    sets: Vec<Vec<u32>>,
    lambda: f64,
    beta: f64,
    metric: OnceLock<Arc<SigmaMetric>>,
}

impl SetSystem {
    /// Builds a set system from raw sets, measuring the tightest `lambda`
    /// and `beta` the collection supports.
    pub fn from_sets(n: usize, mut sets: Vec<Vec<u32>>) -> Result<SetSystem> {
        if n == 0 {
            return Err(NavError::InvalidArg("set system needs n >= 1".into()));
        }
        for s in sets.iter_mut() {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(NavError::InvalidArg("empty set in collection".into()));
            }
            if s.last().map_or(false, |&v| v as usize >= n) {
                return Err(NavError::InvalidArg(format!(
                    "set element {} out of range for n={n}",
                    s.last().unwrap()
                )));
            }
        }
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        sets.dedup();
        let mut ss = SetSystem {
            n,
            sets,
            lambda: 0.5,
            beta: 1.0,
            metric: OnceLock::new(),
        };
        // declare the tightest measured lambda; collections that cannot
        // satisfy K2 at any lambda (or only trivially, by shrinking one
        // element at a time) keep the 0.5 default and fail in check_axioms
        let lambda_witness = ss.k2_witness_lambda();
        if lambda_witness > 0.0 && lambda_witness < 1.0 {
            ss.lambda = lambda_witness;
        }
        ss.beta = ss.k3_witness_beta();
        Ok(ss)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[Vec<u32>] {
        &self.sets
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The distance oracle for this system (built lazily, then shared).
    pub fn metric(&self) -> &Arc<SigmaMetric> {
        self.metric
            .get_or_init(|| Arc::new(SigmaMetric::new(self.n, &self.sets)))
    }

    /// Sets containing `t`, as (size, set index) pairs sorted ascending.
    fn sets_containing(&self) -> Vec<Vec<(u32, u32)>> {
        let mut member: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.n];
        for (i, s) in self.sets.iter().enumerate() {
            for &v in s {
                member[v as usize].push((s.len() as u32, i as u32));
            }
        }
        member
    }

    /// Largest feasible K2 lambda: the infimum over (S, t) of the best
    /// shrink ratio. Returns 0 when K2 is unsatisfiable, 1 when every set
    /// shrinks by a single element.
    fn k2_witness_lambda(&self) -> f64 {
        let member = self.sets_containing();
        let mut witness = 1.0f64;
        for s in &self.sets {
            if s.len() <= 1 {
                continue;
            }
            for &t in s {
                match self.best_shrink(s, t, &member) {
                    None => return 0.0,
                    Some(best) => {
                        if best + 1 < s.len() {
                            witness = witness.min(best as f64 / s.len() as f64);
                        }
                    }
                }
            }
        }
        witness
    }

    /// Size of the largest proper subset of `s` containing `t`, if any.
    fn best_shrink(&self, s: &[u32], t: u32, member: &[Vec<(u32, u32)>]) -> Option<usize> {
        for &(size, idx) in member[t as usize].iter().rev() {
            if size as usize >= s.len() {
                continue;
            }
            if is_subset(&self.sets[idx as usize], s) {
                return Some(size as usize);
            }
        }
        None
    }

    /// Exact supremum of `|S_L(v)| / L` over all vertices and `L in [2, n]`.
    /// The ratio is piecewise `f/L` with jumps only at realized set sizes,
    /// so evaluating at those breakpoints (and at L = 2) covers every L.
    fn k3_witness_beta(&self) -> f64 {
        let member = self.sets_containing();
        let mut marks = vec![u32::MAX; self.n];
        let mut sup = 0.0f64;
        for (v, lists) in member.iter().enumerate() {
            let mut union = 0usize;
            let mut i = 0;
            let mut eval_at_2 = false;
            while i < lists.len() {
                let size = lists[i].0;
                while i < lists.len() && lists[i].0 == size {
                    for &u in &self.sets[lists[i].1 as usize] {
                        if marks[u as usize] != v as u32 {
                            marks[u as usize] = v as u32;
                            union += 1;
                        }
                    }
                    i += 1;
                }
                let at = (size as usize).max(2);
                if at == 2 {
                    eval_at_2 = true;
                }
                if at <= self.n {
                    sup = sup.max(union as f64 / at as f64);
                }
            }
            if !eval_at_2 {
                let below: usize = lists
                    .iter()
                    .take_while(|&&(size, _)| size <= 2)
                    .map(|&(_, idx)| self.sets[idx as usize].len())
                    .sum::<usize>()
                    .min(self.n);
                sup = sup.max(below as f64 / 2.0);
            }
        }
        sup
    }

    /// Checks (K1)-(K3) against the declared parameters. Failures are
    /// reported, not thrown; witnessed tightest parameters are included.
    pub fn check_axioms(&self) -> AxiomReport {
        let member = self.sets_containing();
        let k1 = self.sets.iter().any(|s| s.len() == self.n);

        let mut k2_violations: Vec<(usize, u32)> = Vec::new();
        for (i, s) in self.sets.iter().enumerate() {
            if s.len() <= 1 {
                continue;
            }
            for &t in s {
                let need = (self.lambda * s.len() as f64).min(s.len() as f64 - 1.0);
                let ok = match self.best_shrink(s, t, &member) {
                    Some(best) => best as f64 >= need - 1e-9,
                    None => false,
                };
                if !ok {
                    k2_violations.push((i, t));
                }
            }
        }
        k2_violations.sort_unstable();

        let beta_witness = self.k3_witness_beta();
        let mut k3_violations: Vec<(u32, usize)> = Vec::new();
        if beta_witness > self.beta + 1e-9 {
            // locate offending (v, L) breakpoints for the report
            let mut marks = vec![u32::MAX; self.n];
            for (v, lists) in member.iter().enumerate() {
                let mut union = 0usize;
                let mut i = 0;
                while i < lists.len() {
                    let size = lists[i].0;
                    while i < lists.len() && lists[i].0 == size {
                        for &u in &self.sets[lists[i].1 as usize] {
                            if marks[u as usize] != v as u32 {
                                marks[u as usize] = v as u32;
                                union += 1;
                            }
                        }
                        i += 1;
                    }
                    let at = (size as usize).max(2);
                    if at <= self.n && union as f64 > self.beta * at as f64 + 1e-9 {
                        k3_violations.push((v as u32, at));
                    }
                }
            }
            k3_violations.sort_unstable();
        }

        AxiomReport {
            k1,
            k2: k2_violations.is_empty(),
            k3: k3_violations.is_empty(),
            lambda_declared: self.lambda,
            beta_declared: self.beta,
            lambda_witness: self.k2_witness_lambda(),
            beta_witness,
            k2_violations,
            k3_violations,
        }
    }

    /// Verifies the shrinkage property: every set of size at least
    /// `1/(lambda - lambda^2)` has, for each member `t`, some `t`-bound set
    /// in the collection with size in `[lambda^2 |S|, lambda |S|]`.
    pub fn check_shrinkage(&self) -> ShrinkageReport {
        let member = self.sets_containing();
        let threshold = 1.0 / (self.lambda - self.lambda * self.lambda);
        let mut checked = 0usize;
        let mut violations: Vec<(usize, u32)> = Vec::new();
        for (i, s) in self.sets.iter().enumerate() {
            if (s.len() as f64) < threshold - 1e-9 {
                continue;
            }
            let lo = self.lambda * self.lambda * s.len() as f64 - 1e-9;
            let hi = self.lambda * s.len() as f64 + 1e-9;
            for &t in s {
                checked += 1;
                let ok = member[t as usize]
                    .iter()
                    .any(|&(size, _)| size as f64 >= lo && size as f64 <= hi);
                if !ok {
                    violations.push((i, t));
                }
            }
        }
        violations.sort_unstable();
        ShrinkageReport {
            threshold,
            checked,
            violations,
        }
    }

    /// Verifies that every vertex has a containing set in every size interval
    /// `I_k = (lambda^{-2(k-1)}, lambda^{-2k}]`, `k = 1..=M`.
    pub fn check_scale_sets(&self) -> Result<ScaleSetReport> {
        let intervals = self.scale_partition()?;
        let member = self.sets_containing();
        let mut missing: Vec<(u32, usize)> = Vec::new();
        for v in 0..self.n as u32 {
            for (k, &(lo, hi)) in intervals.iter().enumerate() {
                let ok = member[v as usize].iter().any(|&(size, _)| {
                    size as f64 > lo + 1e-9 && size as f64 <= hi * (1.0 + 1e-12) + 1e-9
                });
                if !ok {
                    missing.push((v, k + 1));
                }
            }
        }
        missing.sort_unstable();
        Ok(ScaleSetReport {
            m: intervals.len(),
            missing,
        })
    }

    /// Size intervals `I_k` for `k = 1..=M`, where `M` is the smallest
    /// integer with `lambda^{-2M} >= n`. `M` is capped at 64.
    pub fn scale_partition(&self) -> Result<Vec<(f64, f64)>> {
        let step = 1.0 / (self.lambda * self.lambda);
        let mut intervals = Vec::new();
        let mut lo = 1.0f64;
        while lo * (1.0 + 1e-12) < self.n as f64 {
            let hi = lo * step;
            intervals.push((lo, hi));
            lo = hi;
            if intervals.len() > MAX_SCALE_INTERVALS {
                return Err(NavError::SizeOverflow(format!(
                    "scale partition exceeds {MAX_SCALE_INTERVALS} intervals (lambda too close to 1)"
                )));
            }
        }
        if intervals.is_empty() {
            intervals.push((1.0, step));
        }
        Ok(intervals)
    }

    /// Coherence constants implied by `(lambda, beta)`: the scale base
    /// `gamma = lambda^{-2r}` for the smallest integer `r >= 2` with
    /// `lambda^{-2(r-1)} > beta`, and the growth bounds
    /// `alpha = lambda^2 - beta/gamma`, `A = beta - lambda^2/gamma`.
    pub fn coherence_constants(&self) -> Result<CoherenceConstants> {
        let step = 1.0 / (self.lambda * self.lambda);
        let mut r = 2usize;
        let mut pow = step; // lambda^{-2(r-1)} at r = 2
        while pow <= self.beta * (1.0 + 1e-12) {
            r += 1;
            pow *= step;
            if r > MAX_SCALE_INTERVALS {
                return Err(NavError::SizeOverflow("no admissible r <= 64".into()));
            }
        }
        let gamma = pow * step; // lambda^{-2r}
        let l2 = self.lambda * self.lambda;
        let alpha = l2 - self.beta / gamma;
        let a_growth = self.beta - l2 / gamma;
        debug_assert!(alpha > 0.0 && gamma > self.beta);
        Ok(CoherenceConstants {
            r,
            gamma,
            alpha_growth: alpha,
            a_growth,
        })
    }
}

/// Distance between two vertices: size of the smallest set containing both,
/// minus 1.
pub fn distance_sigma(ss: &SetSystem, u: VertexId, v: VertexId) -> usize {
    ss.metric().distance_idx(u.index(), v.index())
}

/// All aligned blocks of sizes `branch^j`, `j = 0..=depth`, over
/// `branch^depth` vertices. The canonical coherent instance.
pub fn build_hierarchy(branch: usize, depth: usize) -> Result<SetSystem> {
    if branch < 2 || depth < 1 {
        return Err(NavError::InvalidArg(format!(
            "hierarchy needs branch >= 2 and depth >= 1, got branch={branch}, depth={depth}"
        )));
    }
    let n = branch
        .checked_pow(depth as u32)
        .filter(|&n| n <= 1_000_000)
        .ok_or_else(|| {
            NavError::SizeOverflow(format!("branch={branch}^depth={depth} exceeds 10^6"))
        })?;
    let mut sets = Vec::new();
    let mut block = 1usize;
    for _ in 0..=depth {
        for start in (0..n).step_by(block) {
            sets.push((start as u32..(start + block) as u32).collect());
        }
        block *= branch;
    }
    let mut ss = SetSystem::from_sets(n, sets)?;
    ss.lambda = 1.0 / branch as f64;
    Ok(ss)
}

/// Wraps a set system passing all axioms as a geometry over `d_sigma`, with
/// the scale base from its coherence constants.
pub fn as_geometry(ss: &SetSystem) -> Result<Arc<Geometry>> {
    let report = ss.check_axioms();
    if !report.pass() {
        return Err(NavError::AxiomFailure(format!(
            "axioms failed: K1={} K2={} K3={}",
            report.k1, report.k2, report.k3
        )));
    }
    let constants = ss.coherence_constants()?;
    Ok(Arc::new(Geometry::sigma(
        Arc::clone(ss.metric()),
        constants.gamma,
    )?))
}

/// Loads a set system from the line-oriented text format: first line
/// `n <count>`, then one whitespace-separated vertex list per line.
pub fn load_set_system(path: &Path) -> Result<SetSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_set_system(&text)
}

pub fn parse_set_system(text: &str) -> Result<SetSystem> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| NavError::Parse("empty set-system file".into()))?;
    let mut parts = header.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some("n"), Some(count), None) => {
            let n: usize = count
                .parse()
                .map_err(|e| NavError::Parse(format!("bad vertex count '{count}': {e}")))?;
            let mut sets = Vec::new();
            for line in lines {
                let set: std::result::Result<Vec<u32>, _> =
                    line.split_whitespace().map(str::parse).collect();
                sets.push(set.map_err(|e| NavError::Parse(format!("bad set line '{line}': {e}")))?);
            }
            SetSystem::from_sets(n, sets)
        }
        _ => Err(NavError::Parse(format!("bad set-system header '{header}'"))),
    }
}

pub fn write_set_system(ss: &SetSystem) -> String {
    let mut out = format!("n {}\n", ss.n);
    for s in &ss.sets {
        let line: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// `a` is a subset of `b`; both sorted ascending.
fn is_subset(a: &[u32], b: &[u32]) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

/// Per-axiom result with the tightest parameters the collection supports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomReport {
    pub k1: bool,
    pub k2: bool,
    pub k3: bool,
    #[serde(rename = "lambdaDeclared")]
    pub lambda_declared: f64,
    #[serde(rename = "betaDeclared")]
    pub beta_declared: f64,
    #[serde(rename = "lambdaWitness")]
    pub lambda_witness: f64,
    #[serde(rename = "betaWitness")]
    pub beta_witness: f64,
    #[serde(rename = "k2Violations")]
    pub k2_violations: Vec<(usize, u32)>,
    #[serde(rename = "k3Violations")]
    pub k3_violations: Vec<(u32, usize)>,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.k1 && self.k2 && self.k3
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkageReport {
    pub threshold: f64,
    pub checked: usize,
    pub violations: Vec<(usize, u32)>,
}

impl ShrinkageReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleSetReport {
    /// Number of size intervals in the partition.
    pub m: usize,
    /// (vertex, interval index) cells with no witnessing set.
    pub missing: Vec<(u32, usize)>,
}

impl ScaleSetReport {
    pub fn pass(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Constants under which a set system is a coherent geometry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherenceConstants {
    pub r: usize,
    pub gamma: f64,
    #[serde(rename = "alphaGrowth")]
    pub alpha_growth: f64,
    #[serde(rename = "AGrowth")]
    pub a_growth: f64,
}

/// Smallest-common-set distance oracle, backed by a per-vertex index of the
/// sets containing each vertex, ordered by size.
#[derive(Debug)]
pub struct SigmaMetric {
    n: usize,
    /// For each vertex, (set size, set id) sorted ascending.
    membership: Vec<Vec<(u32, u32)>>,
    max_distance: OnceLock<f64>,
}

impl SigmaMetric {
    fn new(n: usize, sets: &[Vec<u32>]) -> SigmaMetric {
        let mut membership: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        for (i, s) in sets.iter().enumerate() {
            for &v in s {
                membership[v as usize].push((s.len() as u32, i as u32));
            }
        }
        for m in membership.iter_mut() {
            m.sort_unstable();
        }
        SigmaMetric {
            n,
            membership,
            max_distance: OnceLock::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Smallest common set size minus 1; `n` if no set contains both
    /// (only possible when K1 fails).
    pub fn distance_idx(&self, u: usize, v: usize) -> usize {
        if u == v {
            return 0;
        }
        let (a, b) = (&self.membership[u], &self.membership[v]);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return a[i].0 as usize - 1,
            }
        }
        self.n
    }

    pub fn max_distance(&self) -> f64 {
        *self.max_distance.get_or_init(|| {
            (0..self.n)
                .into_par_iter()
                .map(|u| {
                    (u + 1..self.n)
                        .map(|v| self.distance_idx(u, v))
                        .max()
                        .unwrap_or(0)
                })
                .max()
                .unwrap_or(0) as f64
        })
    }
}
