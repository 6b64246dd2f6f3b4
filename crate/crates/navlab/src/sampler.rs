//! Long-range edge samplers: product measure, rank-based augmentation, and
//! exact uniform bounded-cost, sharing one seeded-RNG contract.
//!
//! RNG streams: all samplers use ChaCha8 keyed by the caller's seed, with the
//! stream id set per independent unit of work (stream = scale index for
//! product and exact pair selection, vertex index for RBA, draw index for
//! exact profile selection). Output is therefore identical regardless of
//! execution schedule.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{NavError, Result};
use crate::geometry::{Geometry, VertexId};
use crate::measure::{solve_profile, CostGeometry, CostModel, EdgeProfile};

/// Largest profile-lattice box enumerated by the exact sampler before it
/// switches to tilted rejection.
const ENUMERATION_LIMIT: f64 = 1e7;
/// Proposal cap per accepted draw on the rejection path.
const MAX_REJECTION_ATTEMPTS: u64 = 50_000_000;

/// Sampled long-range edges, grouped by scale class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSet {
    /// Unordered pairs, normalized `u < v`, sorted.
    pub edges: Vec<(u32, u32)>,
    /// Realized edge profile `m(E)`.
    #[serde(rename = "byScale")]
    pub by_scale: Vec<u64>,
    pub seed: u64,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` distinct values from `[0, universe)`, by Floyd's algorithm.
fn floyd_sample(rng: &mut ChaCha8Rng, universe: u64, count: u64) -> Vec<u64> {
    debug_assert!(count <= universe);
    let mut chosen: HashSet<u64> = HashSet::with_capacity(count as usize);
    for j in (universe - count)..universe {
        let r = rng.gen_range(0..=j);
        if !chosen.insert(r) {
            chosen.insert(j);
        }
    }
    let mut out: Vec<u64> = chosen.into_iter().collect();
    out.sort_unstable();
    out
}

enum ScaleClass {
    /// Displacement blocks for cycle/torus: each block is a canonical
    /// displacement with its pair count (`n`, or `n/2` when self-inverse).
    Displacement {
        blocks: Vec<(u32, u64)>,
        cum: Vec<u64>,
    },
    /// Precomputed pair list (set-system geometries).
    Explicit(Vec<(u32, u32)>),
}

/// Exact bijection between `[0, P_k)` and the unordered pairs at scale `k`.
pub struct ClassEnumerator {
    n: usize,
    side_dims: Option<(usize, usize)>, // None = cycle
    classes: Vec<ScaleClass>,
}

impl ClassEnumerator {
    pub fn new(cg: &CostGeometry) -> ClassEnumerator {
        let g = cg.geometry();
        let k_eff = cg.model().scale_count();
        let n = g.vertex_count();
        let classes = if g.is_vertex_transitive() {
            let mut blocks: Vec<Vec<(u32, u64)>> = vec![Vec::new(); k_eff];
            for delta in 1..n {
                let neg = g.group_neg(delta);
                if delta > neg {
                    continue;
                }
                let count = if delta == neg {
                    (n / 2) as u64
                } else {
                    n as u64
                };
                let k = g.scale_of_distance(g.dist_idx(0, delta));
                blocks[k - 1].push((delta as u32, count));
            }
            blocks
                .into_iter()
                .map(|blocks| {
                    let mut cum = Vec::with_capacity(blocks.len());
                    let mut total = 0u64;
                    for &(_, c) in &blocks {
                        total += c;
                        cum.push(total);
                    }
                    ScaleClass::Displacement { blocks, cum }
                })
                .collect()
        } else {
            let mut lists: Vec<Vec<(u32, u32)>> = vec![Vec::new(); k_eff];
            for u in 0..n as u32 {
                for v in (u + 1)..n as u32 {
                    let k = g.scale_of_distance(g.dist_idx(u as usize, v as usize));
                    lists[k - 1].push((u, v));
                }
            }
            lists.into_iter().map(ScaleClass::Explicit).collect()
        };
        let enumerator = ClassEnumerator {
            n,
            side_dims: g.torus_params(),
            classes,
        };
        debug_assert!(enumerator
            .class_sizes()
            .iter()
            .zip(cg.model().class_sizes())
            .all(|(a, b)| a == b));
        enumerator
    }

    pub fn class_sizes(&self) -> Vec<u64> {
        self.classes
            .iter()
            .map(|c| match c {
                ScaleClass::Displacement { cum, .. } => cum.last().copied().unwrap_or(0),
                ScaleClass::Explicit(pairs) => pairs.len() as u64,
            })
            .collect()
    }

    /// The `index`-th pair of scale class `k` (1-based scale).
    pub fn pair(&self, k: usize, index: u64) -> (u32, u32) {
        match &self.classes[k - 1] {
            ScaleClass::Explicit(pairs) => pairs[index as usize],
            ScaleClass::Displacement { blocks, cum } => {
                let b = cum.partition_point(|&c| c <= index);
                let offset = index - if b == 0 { 0 } else { cum[b - 1] };
                let (delta, count) = blocks[b];
                let v = if count == self.n as u64 {
                    offset as usize
                } else {
                    self.half_orbit_vertex(delta as usize, offset)
                };
                let u = self.group_add(v, delta as usize);
                if (v as u32) < (u as u32) {
                    (v as u32, u as u32)
                } else {
                    (u as u32, v as u32)
                }
            }
        }
    }

    fn group_add(&self, v: usize, delta: usize) -> usize {
        match self.side_dims {
            None => (v + delta) % self.n,
            Some((side, dims)) => {
                let (mut a, mut d, mut out, mut stride) = (v, delta, 0usize, 1usize);
                for _ in 0..dims {
                    out += ((a % side + d % side) % side) * stride;
                    a /= side;
                    d /= side;
                    stride *= side;
                }
                out
            }
        }
    }

    /// For a self-inverse displacement, the `i`-th vertex that is the smaller
    /// endpoint of its pair: the one whose dominant axis coordinate is below
    /// `side/2`.
    fn half_orbit_vertex(&self, delta: usize, i: u64) -> usize {
        match self.side_dims {
            None => i as usize, // cycle: delta = n/2, smaller endpoints are [0, n/2)
            Some((side, dims)) => {
                let mut stride = 1usize;
                let mut d = delta;
                let mut top_stride = 1usize;
                for _ in 0..dims {
                    if d % side != 0 {
                        top_stride = stride;
                    }
                    d /= side;
                    stride *= side;
                }
                let i = i as usize;
                let low = i % top_stride;
                let rest = i / top_stride;
                let mid = rest % (side / 2);
                let high = rest / (side / 2);
                low + mid * top_stride + high * top_stride * side
            }
        }
    }
}

/// Draws an edge set from the product measure with per-scale probabilities
/// `q_star`: per scale, a binomial count of edges, then that many distinct
/// pairs chosen uniformly. Exchangeability within a class makes this equal
/// in distribution to independent per-edge inclusion.
pub fn sample_product(cg: &CostGeometry, q_star: &[f64], seed: u64) -> Result<EdgeSet> {
    let enumerator = ClassEnumerator::new(cg);
    sample_product_with(&enumerator, cg.model(), q_star, seed)
}

pub fn sample_product_with(
    enumerator: &ClassEnumerator,
    model: &CostModel,
    q_star: &[f64],
    seed: u64,
) -> Result<EdgeSet> {
    if q_star.len() != model.scale_count() {
        return Err(NavError::InvalidArg(format!(
            "q has {} entries, model has {} scales",
            q_star.len(),
            model.scale_count()
        )));
    }
    if q_star.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(NavError::InvalidArg(
            "edge probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut edges = Vec::new();
    let mut by_scale = Vec::with_capacity(model.scale_count());
    for (k, (&q, &pk)) in q_star.iter().zip(model.class_sizes()).enumerate() {
        let mut rng = stream_rng(seed, k as u64 + 1);
        let count = Binomial::new(pk, q)
            .map_err(|e| NavError::InvalidArg(format!("binomial({pk}, {q}): {e}")))?
            .sample(&mut rng);
        for idx in floyd_sample(&mut rng, pk, count) {
            edges.push(enumerator.pair(k + 1, idx));
        }
        by_scale.push(count);
    }
    edges.sort_unstable();
    Ok(EdgeSet {
        edges,
        by_scale,
        seed,
    })
}

/// Rank-based augmentation weights out of `v`: `w(u) = 1 / N_u(d(v, u))`,
/// where `N_u` is `u`'s ball count. Returns the weight vector (0 at `v`) and
/// the normalizer `Z`.
pub fn rba_weights(g: &Geometry, v: VertexId) -> (Vec<f64>, f64) {
    let n = g.vertex_count();
    let vi = v.index();
    let mut weights = vec![0.0; n];
    let mut z = 0.0;
    for u in 0..n {
        if u == vi {
            continue;
        }
        let d = g.dist_idx(vi, u);
        let w = 1.0 / g.ball_count(VertexId(u as u32), d) as f64;
        weights[u] = w;
        z += w;
    }
    (weights, z)
}

/// Augments every vertex independently with `edges_per_vertex` draws from its
/// RBA distribution (with replacement; duplicate undirected pairs collapse).
pub fn sample_rba(g: &Geometry, edges_per_vertex: usize, seed: u64) -> Result<EdgeSet> {
    if edges_per_vertex == 0 {
        return Err(NavError::InvalidArg("edges_per_vertex must be >= 1".into()));
    }
    let n = g.vertex_count();
    if n < 2 {
        return Err(NavError::InvalidArg("RBA needs n >= 2".into()));
    }
    let mut edges: Vec<(u32, u32)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|v| {
            let (weights, z) = rba_weights(g, VertexId(v as u32));
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &w in &weights {
                acc += w;
                cdf.push(acc);
            }
            let mut rng = stream_rng(seed, v as u64);
            (0..edges_per_vertex)
                .map(|_| {
                    let x = rng.gen_range(0.0..z);
                    let u = cdf.partition_point(|&c| c <= x).min(n - 1);
                    let (a, b) = (v.min(u) as u32, v.max(u) as u32);
                    (a, b)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let by_scale = profile_of_edges(g, &edges)?;
    Ok(EdgeSet {
        edges,
        by_scale,
        seed,
    })
}

fn profile_of_edges(g: &Geometry, edges: &[(u32, u32)]) -> Result<Vec<u64>> {
    let n = g.vertex_count();
    let mut by_scale = vec![0u64; g.scale_count()];
    for &(u, v) in edges {
        if u as usize >= n || v as usize >= n {
            return Err(NavError::InvalidArg(format!(
                "edge ({u}, {v}) out of range for n={n}"
            )));
        }
        if u == v {
            return Err(NavError::InvalidArg(format!("self-loop at {u}")));
        }
        let k = g.scale_of_distance(g.dist_idx(u as usize, v as usize));
        by_scale[k - 1] += 1;
    }
    Ok(by_scale)
}

/// Recounts an edge set's per-scale profile against the cost geometry's
/// scale classes.
pub fn edge_profile_of(cg: &CostGeometry, set: &EdgeSet) -> Result<EdgeProfile> {
    let full = profile_of_edges(cg.geometry(), &set.edges)?;
    let k_eff = cg.model().scale_count();
    if full[k_eff..].iter().any(|&c| c > 0) {
        return Err(NavError::InvalidArg(
            "edge set uses scales beyond the cost model".into(),
        ));
    }
    Ok(full[..k_eff].to_vec())
}

/// Draws integer profiles from the exact uniform bounded-cost law
/// `P(m) ~ exp(Ent(m))` on `{m : sum c_k m_k <= B n, 0 <= m_k <= P_k}`.
///
/// Small instances are enumerated (two streaming passes, log-sum-exp
/// weights). Above the enumeration limit the draw is exact rejection from
/// the entropic product proposal at `lambda(B)`: propose per-scale binomial
/// counts, accept feasible proposals with probability
/// `exp(lambda (cost - B n))`, which equals the uniform law after
/// conditioning.
pub fn sample_bounded_cost_profiles(
    model: &CostModel,
    budget: f64,
    seed: u64,
    draws: usize,
) -> Result<Vec<EdgeProfile>> {
    if budget < 0.0 {
        return Err(NavError::InvalidArg(format!(
            "budget must be >= 0, got {budget}"
        )));
    }
    if draws == 0 {
        return Ok(Vec::new());
    }
    let cap = budget * model.n() as f64;
    let slack = 1e-9 * cap.max(1.0);
    if budget == 0.0 {
        return Ok(vec![vec![0u64; model.scale_count()]; draws]);
    }

    let box_size: f64 = model
        .class_sizes()
        .iter()
        .zip(model.costs())
        .map(|(&p, &c)| (p as f64).min((cap + slack) / c).floor() + 1.0)
        .product();
    if box_size <= ENUMERATION_LIMIT {
        profiles_by_enumeration(model, cap, slack, seed, draws)
    } else {
        profiles_by_rejection(model, budget, cap, slack, seed, draws)
    }
}

fn for_each_feasible(model: &CostModel, cap: f64, slack: f64, mut visit: impl FnMut(&[u64], f64)) {
    let k = model.scale_count();
    let mut current = vec![0u64; k];
    // iterative odometer over the feasible box
    fn walk(
        depth: usize,
        spent: f64,
        entropy: f64,
        model: &CostModel,
        cap: f64,
        slack: f64,
        current: &mut Vec<u64>,
        visit: &mut impl FnMut(&[u64], f64),
    ) {
        if depth == current.len() {
            visit(current, entropy);
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
            let e = entropy + crate::measure::ln_binomial(p, m);
            walk(depth + 1, cost, e, model, cap, slack, current, visit);
        }
        current[depth] = 0;
    }
    walk(0, 0.0, 0.0, model, cap, slack, &mut current, &mut visit);
}

fn profiles_by_enumeration(
    model: &CostModel,
    cap: f64,
    slack: f64,
    seed: u64,
    draws: usize,
) -> Result<Vec<Vec<u64>>> {
    // pass 1: log-sum-exp of profile entropies
    let mut max_ent = f64::NEG_INFINITY;
    for_each_feasible(model, cap, slack, |_, e| max_ent = max_ent.max(e));
    if max_ent.is_infinite() {
        return Err(NavError::Numeric("no feasible profile".into()));
    }
    let mut total = 0.0f64;
    for_each_feasible(model, cap, slack, |_, e| total += (e - max_ent).exp());

    // sorted uniform targets, assigned in one more pass
    let mut rng = stream_rng(seed, 0);
    let mut targets: Vec<(f64, usize)> =
        (0..draws).map(|i| (rng.gen_range(0.0..total), i)).collect();
    targets.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut out: Vec<Vec<u64>> = vec![Vec::new(); draws];
    let mut acc = 0.0f64;
    let mut next = 0usize;
    for_each_feasible(model, cap, slack, |profile, e| {
        acc += (e - max_ent).exp();
        while next < targets.len() && targets[next].0 < acc {
            out[targets[next].1] = profile.to_vec();
            next += 1;
        }
    });
    // float roundoff can leave the last targets unassigned; give them the mode
    if next < targets.len() {
        let mut mode: (f64, Vec<u64>) = (f64::NEG_INFINITY, Vec::new());
        for_each_feasible(model, cap, slack, |profile, e| {
            if e > mode.0 {
                mode = (e, profile.to_vec());
            }
        });
        for t in &targets[next..] {
            out[t.1] = mode.1.clone();
        }
    }
    Ok(out)
}

fn profiles_by_rejection(
    model: &CostModel,
    budget: f64,
    cap: f64,
    slack: f64,
    seed: u64,
    draws: usize,
) -> Result<Vec<Vec<u64>>> {
    let solution = solve_profile(model, budget)?;
    let lambda = solution.lambda;
    let proposals: Vec<Binomial> = model
        .class_sizes()
        .iter()
        .zip(&solution.q_star)
        .map(|(&p, &q)| Binomial::new(p, q).expect("q in [0,1]"))
        .collect();
    (0..draws as u64)
        .into_par_iter()
        .map(|draw| {
            let mut rng = stream_rng(seed, draw);
            for _ in 0..MAX_REJECTION_ATTEMPTS {
                let profile: Vec<u64> = proposals.iter().map(|b| b.sample(&mut rng)).collect();
                let cost: f64 = profile
                    .iter()
                    .zip(model.costs())
                    .map(|(&m, &c)| m as f64 * c)
                    .sum();
                if cost > cap + slack {
                    continue;
                }
                // accept w.p. exp(lambda (cost - cap)), removing the proposal tilt
                let ln_u: f64 = rng.gen_range(0.0f64..1.0).ln();
                if ln_u <= lambda * (cost - cap) {
                    return Ok(profile);
                }
            }
            Err(NavError::Numeric(format!(
                "rejection sampler exceeded {MAX_REJECTION_ATTEMPTS} proposals at B={budget}"
            )))
        })
        .collect()
}

/// One exact uniform bounded-cost edge set: draw a profile from the exact
/// law, then uniform distinct pairs within each class.
pub fn sample_bounded_cost_exact(cg: &CostGeometry, budget: f64, seed: u64) -> Result<EdgeSet> {
    let enumerator = ClassEnumerator::new(cg);
    sample_bounded_cost_exact_with(&enumerator, cg.model(), budget, seed)
}

pub fn sample_bounded_cost_exact_with(
    enumerator: &ClassEnumerator,
    model: &CostModel,
    budget: f64,
    seed: u64,
) -> Result<EdgeSet> {
    let profile = sample_bounded_cost_profiles(model, budget, seed, 1)?
        .pop()
        .expect("one draw requested");
    let mut edges = Vec::new();
    for (k, (&m, &pk)) in profile.iter().zip(model.class_sizes()).enumerate() {
        let mut rng = stream_rng(seed, 1_000_000 + k as u64);
        for idx in floyd_sample(&mut rng, pk, m) {
            edges.push(enumerator.pair(k + 1, idx));
        }
    }
    edges.sort_unstable();
    Ok(EdgeSet {
        edges,
        by_scale: profile,
        seed,
    })
}

/// Writes the line-oriented edge-set format: a header
/// `n <count> gamma <gamma> seed <seed>`, then one `u v` pair per line,
/// sorted.
pub fn write_edge_set(g: &Geometry, set: &EdgeSet) -> String {
    let mut out = format!(
        "n {} gamma {} seed {}\n",
        g.vertex_count(),
        g.gamma(),
        set.seed
    );
    for &(u, v) in &set.edges {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

/// Parses the edge-set format; returns `(n, gamma, seed, pairs)`.
pub fn read_edge_set(text: &str) -> Result<(usize, f64, u64, Vec<(u32, u32)>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| NavError::Parse("empty edge-set file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (n, gamma, seed) = match parts.as_slice() {
        ["n", n, "gamma", g, "seed", s] => (
            n.parse::<usize>()
                .map_err(|e| NavError::Parse(format!("bad n: {e}")))?,
            g.parse::<f64>()
                .map_err(|e| NavError::Parse(format!("bad gamma: {e}")))?,
            s.parse::<u64>()
                .map_err(|e| NavError::Parse(format!("bad seed: {e}")))?,
        ),
        _ => return Err(NavError::Parse(format!("bad edge-set header '{header}'"))),
    };
    let mut pairs = Vec::new();
    for line in lines {
        let mut it = line.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(u), Some(v), None) => pairs.push((
                u.parse()
                    .map_err(|e| NavError::Parse(format!("bad pair '{line}': {e}")))?,
                v.parse()
                    .map_err(|e| NavError::Parse(format!("bad pair '{line}': {e}")))?,
            )),
            _ => return Err(NavError::Parse(format!("bad pair line '{line}'"))),
        }
    }
    Ok((n, gamma, seed, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use crate::measure::{build_cost_geometry, CostSpec};
    use std::sync::Arc;

    fn cycle_cg(n: usize) -> CostGeometry {
        let g = Arc::new(Geometry::cycle(n, 2.0).unwrap());
        build_cost_geometry(g, &CostSpec::Indexing { alpha: 1.0 }).unwrap()
    }

    #[test]
    fn enumerator_is_exact_bijection() {
        for cg in [
            cycle_cg(9),
            cycle_cg(16),
            {
                let g = Arc::new(Geometry::torus(4, 2, 2.0).unwrap());
                build_cost_geometry(g, &CostSpec::Indexing { alpha: 1.0 }).unwrap()
            },
            {
                let g = Arc::new(Geometry::torus(5, 3, 2.0).unwrap());
                build_cost_geometry(g, &CostSpec::Indexing { alpha: 1.0 }).unwrap()
            },
            {
                let ss = crate::setsystem::build_hierarchy(2, 5).unwrap();
                let g = crate::setsystem::as_geometry(&ss).unwrap();
                build_cost_geometry(g, &CostSpec::Indexing { alpha: 1.0 }).unwrap()
            },
        ] {
            let g = cg.geometry();
            let enumerator = ClassEnumerator::new(&cg);
            let mut seen = std::collections::HashSet::new();
            for (k, &pk) in cg.model().class_sizes().iter().enumerate() {
                for idx in 0..pk {
                    let (u, v) = enumerator.pair(k + 1, idx);
                    assert!(u < v, "normalized pair");
                    assert!(seen.insert((u, v)), "duplicate pair ({u},{v})");
                    let scale = g
                        .scale_index(crate::geometry::VertexId(u), crate::geometry::VertexId(v))
                        .unwrap();
                    assert_eq!(scale, k + 1, "pair ({u},{v}) in wrong class");
                }
            }
            let n = g.vertex_count();
            assert_eq!(seen.len(), n * (n - 1) / 2);
        }
    }

    #[test]
    fn product_extremes() {
        let cg = cycle_cg(16);
        let k = cg.model().scale_count();
        let all = sample_product(&cg, &vec![1.0; k], 3).unwrap();
        assert_eq!(all.len(), 16 * 15 / 2);
        let none = sample_product(&cg, &vec![0.0; k], 3).unwrap();
        assert!(none.is_empty());
        assert!(sample_product(&cg, &vec![1.5; k], 3).is_err());
        assert!(sample_product(&cg, &vec![0.5; k + 1], 3).is_err());
    }

    #[test]
    fn product_determinism_and_profile() {
        let cg = cycle_cg(64);
        let q: Vec<f64> = cg
            .model()
            .densities()
            .iter()
            .map(|p| (1.0 / p).min(1.0))
            .collect();
        let a = sample_product(&cg, &q, 42).unwrap();
        let b = sample_product(&cg, &q, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_product(&cg, &q, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(edge_profile_of(&cg, &a).unwrap(), a.by_scale);
        let total: u64 = a.by_scale.iter().sum();
        assert_eq!(total as usize, a.edges.len());
    }

    #[test]
    fn product_binomial_means() {
        // q_k = 1/p_k capped: per-scale mean count = min(P_k, n) within 3 SE
        let cg = cycle_cg(64);
        let model = cg.model();
        let q: Vec<f64> = model
            .densities()
            .iter()
            .map(|p| (1.0 / p).min(1.0))
            .collect();
        let enumerator = ClassEnumerator::new(&cg);
        let reps = 10_000;
        let mut sums = vec![0f64; model.scale_count()];
        let mut sumsq = vec![0f64; model.scale_count()];
        for seed in 0..reps {
            let s = sample_product_with(&enumerator, model, &q, seed).unwrap();
            for (k, &c) in s.by_scale.iter().enumerate() {
                sums[k] += c as f64;
                sumsq[k] += (c as f64) * (c as f64);
            }
        }
        for (k, (&pk, &qk)) in model.class_sizes().iter().zip(&q).enumerate() {
            let mean = sums[k] / reps as f64;
            let expect = pk as f64 * qk;
            let var_binom = pk as f64 * qk * (1.0 - qk);
            let se = (var_binom / reps as f64).sqrt();
            assert!(
                (mean - expect).abs() <= 3.0 * se.max(1e-9),
                "scale {}: mean {mean} vs {expect} (se {se})",
                k + 1
            );
            if expect >= 10.0 && qk < 1.0 {
                let var = sumsq[k] / reps as f64 - mean * mean;
                assert!(
                    (var - var_binom).abs() <= 0.1 * var_binom,
                    "scale {}: var {var} vs binomial {var_binom}",
                    k + 1
                );
            }
        }
    }

    #[test]
    fn rba_weights_cycle9() {
        let g = Geometry::cycle(9, 2.0).unwrap();
        let (w, z) = rba_weights(&g, VertexId(0));
        // N_u(j) = 2j on a cycle: Z = 2 (1/2 + 1/4 + 1/6 + 1/8) = 25/12
        approx::assert_relative_eq!(z, 25.0 / 12.0, epsilon = 1e-12);
        approx::assert_relative_eq!(w[1], 0.5, epsilon = 1e-12);
        approx::assert_relative_eq!(w[4], 1.0 / 8.0, epsilon = 1e-12);
        assert_eq!(w[0], 0.0);
        // vertex transitivity
        for v in 1..9 {
            let (_, zv) = rba_weights(&g, VertexId(v));
            approx::assert_relative_eq!(zv, z, epsilon = 1e-12);
        }
    }

    #[test]
    fn rba_normalizer_log_bound() {
        // Z <= (A/alpha)(1 + gamma log_gamma n) on coherent geometries
        for g in [
            Geometry::cycle(256, 2.0).unwrap(),
            Geometry::torus(16, 2, 2.0).unwrap(),
        ] {
            let rep = g.verify_coherence(0.5, 1000, 1).unwrap();
            let (_, z) = rba_weights(&g, VertexId(0));
            let n = g.vertex_count() as f64;
            let bound =
                (rep.a_growth / rep.alpha_growth) * (1.0 + g.gamma() * n.ln() / g.gamma().ln());
            assert!(z <= bound, "Z = {z} > bound {bound}");
        }
    }

    #[test]
    fn rba_two_vertices() {
        let g = Geometry::cycle(2, 2.0).unwrap();
        let s = sample_rba(&g, 1, 9).unwrap();
        assert_eq!(s.edges, vec![(0, 1)]);
    }

    #[test]
    fn rba_single_draw_law() {
        // frequencies of single draws from v = 0 match the weights;
        // chi-square GoF with 7 dof at p > 0.001 (critical value 24.322)
        let g = Geometry::cycle(9, 2.0).unwrap();
        let (w, z) = rba_weights(&g, VertexId(0));
        let draws = 100_000usize;
        let mut cdf = Vec::with_capacity(9);
        let mut acc = 0.0;
        for &x in &w {
            acc += x;
            cdf.push(acc);
        }
        let mut counts = vec![0u64; 9];
        let mut rng = stream_rng(7, 0);
        for _ in 0..draws {
            let x = rng.gen_range(0.0..z);
            let u = cdf.partition_point(|&c| c <= x).min(8);
            counts[u] += 1;
        }
        let mut chi2 = 0.0;
        for u in 1..9 {
            let expect = draws as f64 * w[u] / z;
            chi2 += (counts[u] as f64 - expect).powi(2) / expect;
        }
        assert!(chi2 < 24.322, "chi2 = {chi2}");
        // distance-1 targets: 2 (1/2) / Z
        let p1 = (counts[1] + counts[8]) as f64 / draws as f64;
        let expect = 1.0 / z;
        let se = (expect * (1.0 - expect) / draws as f64).sqrt();
        assert!((p1 - expect).abs() <= 3.0 * se, "p1 = {p1} vs {expect}");
    }

    #[test]
    fn rba_scale_marginals_flat() {
        // the exact per-scale draw masses stay within a constant band of 1/K
        let g = Geometry::cycle(1024, 2.0).unwrap();
        let (w, z) = rba_weights(&g, VertexId(0));
        let k_count = g.scale_count();
        let mut mass = vec![0.0f64; k_count];
        for u in 1..1024 {
            let k = g.scale_of_distance(g.dist_idx(0, u));
            mass[k - 1] += w[u] / z;
        }
        for (k, &m) in mass.iter().enumerate() {
            if g.scale_upper(k + 1) <= g.max_distance() {
                assert!(
                    m >= 0.25 / k_count as f64 && m <= 4.0 / k_count as f64,
                    "scale {} mass {m}",
                    k + 1
                );
            }
        }
    }

    #[test]
    fn rba_determinism() {
        let g = Geometry::torus(8, 2, 2.0).unwrap();
        let a = sample_rba(&g, 2, 5).unwrap();
        let b = sample_rba(&g, 2, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_tiny_instance_law() {
        // K=1, P=3, c=1, n=3, B=2/3: weights C(3,m) for m in {0,1,2}
        let model = CostModel::synthetic(3, vec![3], vec![1.0]).unwrap();
        let draws = 100_000;
        let profiles = sample_bounded_cost_profiles(&model, 2.0 / 3.0, 11, draws).unwrap();
        let mut counts = [0u64; 4];
        for p in &profiles {
            let cost: f64 = p[0] as f64;
            assert!(cost <= 2.0 + 1e-9, "budget violated: {p:?}");
            counts[p[0] as usize] += 1;
        }
        assert_eq!(counts[3], 0);
        for (m, expect) in [(0usize, 1.0 / 7.0), (1, 3.0 / 7.0), (2, 3.0 / 7.0)] {
            let freq = counts[m] as f64 / draws as f64;
            let se = (expect * (1.0 - expect) / draws as f64).sqrt();
            assert!(
                (freq - expect).abs() <= 3.0 * se,
                "m={m}: freq {freq} vs {expect}"
            );
        }
    }

    #[test]
    fn exact_edge_cases() {
        let cg = cycle_cg(8);
        let zero = sample_bounded_cost_exact(&cg, 0.0, 1).unwrap();
        assert!(zero.is_empty());
        // budget covering every pair: uniform over all graphs
        let total_cost: f64 = cg
            .model()
            .class_sizes()
            .iter()
            .zip(cg.model().costs())
            .map(|(&p, &c)| p as f64 * c)
            .sum();
        let full = sample_bounded_cost_exact(&cg, total_cost / 8.0, 2).unwrap();
        let m: u64 = full.by_scale.iter().sum();
        assert!(m > 0 && (m as usize) < 8 * 7 / 2);
        for &(u, v) in &full.edges {
            assert!(u < v && v < 8);
        }
    }

    #[test]
    fn rejection_matches_enumeration() {
        // a mid-size instance where both paths run: compare mean profiles
        let model = CostModel::synthetic(10, vec![40, 60], vec![1.0, 1.7]).unwrap();
        let budget = 0.55 * model.b_bar();
        let draws = 20_000;
        let enumerated =
            profiles_by_enumeration(&model, budget * 10.0, 1e-9 * (budget * 10.0), 21, draws)
                .unwrap();
        let rejected = profiles_by_rejection(
            &model,
            budget,
            budget * 10.0,
            1e-9 * (budget * 10.0),
            22,
            draws,
        )
        .unwrap();
        for k in 0..2 {
            let mean_e: f64 = enumerated.iter().map(|p| p[k] as f64).sum::<f64>() / draws as f64;
            let mean_r: f64 = rejected.iter().map(|p| p[k] as f64).sum::<f64>() / draws as f64;
            let var_e: f64 = enumerated
                .iter()
                .map(|p| (p[k] as f64 - mean_e).powi(2))
                .sum::<f64>()
                / draws as f64;
            let var_r: f64 = rejected
                .iter()
                .map(|p| (p[k] as f64 - mean_r).powi(2))
                .sum::<f64>()
                / draws as f64;
            let se = ((var_e + var_r) / draws as f64).sqrt();
            assert!(
                (mean_e - mean_r).abs() <= 3.0 * se.max(1e-6),
                "scale {k}: {mean_e} vs {mean_r} (se {se})"
            );
        }
    }

    #[test]
    fn exact_determinism() {
        let cg = cycle_cg(16);
        let b = 0.4 * cg.model().b_bar();
        let a = sample_bounded_cost_exact(&cg, b, 77).unwrap();
        let c = sample_bounded_cost_exact(&cg, b, 77).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn profile_recount() {
        let cg = cycle_cg(32);
        let k = cg.model().scale_count();
        let empty = EdgeSet {
            edges: vec![],
            by_scale: vec![0; k],
            seed: 0,
        };
        assert_eq!(edge_profile_of(&cg, &empty).unwrap(), vec![0u64; k]);
        let all = sample_product(&cg, &vec![1.0; k], 0).unwrap();
        assert_eq!(
            edge_profile_of(&cg, &all).unwrap(),
            cg.model().class_sizes().to_vec()
        );
        let bad = EdgeSet {
            edges: vec![(0, 99)],
            by_scale: vec![0; k],
            seed: 0,
        };
        assert!(edge_profile_of(&cg, &bad).is_err());
    }

    #[test]
    fn edge_set_file_roundtrip() {
        let cg = cycle_cg(16);
        let q: Vec<f64> = vec![0.3; cg.model().scale_count()];
        let set = sample_product(&cg, &q, 5).unwrap();
        let text = write_edge_set(cg.geometry(), &set);
        let (n, gamma, seed, pairs) = read_edge_set(&text).unwrap();
        assert_eq!(n, 16);
        assert_eq!(gamma, 2.0);
        assert_eq!(seed, 5);
        assert_eq!(pairs, set.edges);
        assert!(read_edge_set("").is_err());
        assert!(read_edge_set("n x gamma 2 seed 0").is_err());
    }
}
