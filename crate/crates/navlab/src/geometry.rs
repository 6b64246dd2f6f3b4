//! Vertex sets with semi-metrics, distance-scale machinery, substrates, and
//! brute-force coherence verification.
//!
//! A geometry is a vertex set `[0, n)` plus a semi-metric `d` (symmetric,
//! zero iff equal; the triangle inequality is *not* assumed). Distances are
//! partitioned into scales: scale `k` holds pairs with `d` in
//! `(gamma^(k-1), gamma^k]`, with distances in `(0, 1]` folded into scale 1
//! so every pair has a scale.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::setsystem::SigmaMetric;

/// Index of a vertex, in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for VertexId {
    fn from(v: u32) -> Self {
        VertexId(v)
    }
}

/// Seed used for sampled substrate verification above the exhaustive cutoff.
const SUBSTRATE_CHECK_SEED: u64 = 0x5eed_0001;
/// Exhaustive substrate/coherence pair scans are used up to this vertex count.
const EXHAUSTIVE_PAIR_LIMIT: usize = 512;

/// Fuzzy `d <= bound` for comparing integer-valued distances against
/// floating-point scale boundaries.
#[inline]
pub(crate) fn le_fuzzy(d: f64, bound: f64) -> bool {
    d <= bound * (1.0 + 1e-12) + 1e-12
}

#[derive(Debug, Clone)]
enum GeomKind {
    Cycle,
    Torus { side: usize, dims: usize },
    Sigma(Arc<SigmaMetric>),
}

/// A finite semi-metric space with its scale decomposition.
#[derive(Debug, Clone)]
pub struct Geometry {
    kind: GeomKind,
    n: usize,
    gamma: f64,
    /// `gamma^k` for `k = 1..=K`, by repeated multiplication.
    scale_uppers: Vec<f64>,
    /// Cumulative ball sizes by integer radius, for vertex-transitive kinds.
    radius_balls: OnceLock<Vec<usize>>,
}

impl Geometry {
    pub fn cycle(n: usize, gamma: f64) -> Result<Geometry> {
        if n < 2 {
            return Err(NavError::InvalidArg(format!("cycle needs n >= 2, got {n}")));
        }
        Self::build(GeomKind::Cycle, n, gamma)
    }

    pub fn torus(side: usize, dims: usize, gamma: f64) -> Result<Geometry> {
        if side < 2 || dims < 1 {
            return Err(NavError::InvalidArg(format!(
                "torus needs side >= 2 and dims >= 1, got side={side}, dims={dims}"
            )));
        }
        let n = side
            .checked_pow(dims as u32)
            .filter(|&n| n <= 100_000_000)
            .ok_or_else(|| NavError::SizeOverflow(format!("torus side={side}^dims={dims}")))?;
        Self::build(GeomKind::Torus { side, dims }, n, gamma)
    }

    pub(crate) fn sigma(metric: Arc<SigmaMetric>, gamma: f64) -> Result<Geometry> {
        let n = metric.vertex_count();
        Self::build(GeomKind::Sigma(metric), n, gamma)
    }

    fn build(kind: GeomKind, n: usize, gamma: f64) -> Result<Geometry> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(NavError::InvalidArg(format!(
                "gamma must be > 1, got {gamma}"
            )));
        }
        // K = ceil(log_gamma n), at least 1, via repeated multiplication so
        // exact powers stay exact.
        let mut scale_uppers = vec![gamma];
        while *scale_uppers.last().unwrap() * (1.0 + 1e-12) < n as f64 {
            let next = scale_uppers.last().unwrap() * gamma;
            scale_uppers.push(next);
            if scale_uppers.len() > 4096 {
                return Err(NavError::Numeric("scale count exceeds 4096".into()));
            }
        }
        Ok(Geometry {
            kind,
            n,
            gamma,
            scale_uppers,
            radius_balls: OnceLock::new(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of distance scales, `K = max(1, ceil(log_gamma n))`.
    pub fn scale_count(&self) -> usize {
        self.scale_uppers.len()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            GeomKind::Cycle => "cycle",
            GeomKind::Torus { .. } => "torus",
            GeomKind::Sigma(_) => "setsystem",
        }
    }

    pub fn is_set_system(&self) -> bool {
        matches!(self.kind, GeomKind::Sigma(_))
    }

    /// Vertex-transitive geometries have ball sizes independent of the center.
    pub fn is_vertex_transitive(&self) -> bool {
        !self.is_set_system()
    }

    /// `(side, dims)` for torus geometries.
    pub(crate) fn torus_params(&self) -> Option<(usize, usize)> {
        match self.kind {
            GeomKind::Torus { side, dims } => Some((side, dims)),
            _ => None,
        }
    }

    /// Group negation of a displacement, for the lattice kinds (a vertex
    /// index read as an offset from 0).
    pub(crate) fn group_neg(&self, delta: usize) -> usize {
        match self.kind {
            GeomKind::Cycle => (self.n - delta) % self.n,
            GeomKind::Torus { side, dims } => {
                let (mut d, mut out, mut stride) = (delta, 0usize, 1usize);
                for _ in 0..dims {
                    out += ((side - d % side) % side) * stride;
                    d /= side;
                    stride *= side;
                }
                out
            }
            GeomKind::Sigma(_) => unreachable!("no group structure on set systems"),
        }
    }

    /// Upper boundary `gamma^k` of scale `k` (1-based).
    pub fn scale_upper(&self, k: usize) -> f64 {
        self.scale_uppers[k - 1]
    }

    /// Largest distance realized between any two vertices.
    pub fn max_distance(&self) -> f64 {
        match &self.kind {
            GeomKind::Cycle => (self.n / 2) as f64,
            GeomKind::Torus { side, dims } => (dims * (side / 2)) as f64,
            GeomKind::Sigma(m) => m.max_distance(),
        }
    }

    #[inline]
    pub(crate) fn dist_idx(&self, u: usize, v: usize) -> f64 {
        match &self.kind {
            GeomKind::Cycle => {
                let diff = u.abs_diff(v);
                diff.min(self.n - diff) as f64
            }
            GeomKind::Torus { side, dims } => {
                let (mut a, mut b, mut total) = (u, v, 0usize);
                for _ in 0..*dims {
                    let diff = (a % side).abs_diff(b % side);
                    total += diff.min(side - diff);
                    a /= side;
                    b /= side;
                }
                total as f64
            }
            GeomKind::Sigma(m) => m.distance_idx(u, v) as f64,
        }
    }

    /// Semi-metric distance between two vertices.
    pub fn distance(&self, u: VertexId, v: VertexId) -> f64 {
        debug_assert!(u.index() < self.n && v.index() < self.n);
        self.dist_idx(u.index(), v.index())
    }

    /// Scale of a positive distance: `max(1, ceil(log_gamma d))`.
    pub fn scale_of_distance(&self, d: f64) -> usize {
        debug_assert!(d > 0.0);
        match self
            .scale_uppers
            .iter()
            .position(|&upper| le_fuzzy(d, upper))
        {
            Some(i) => i + 1,
            None => self.scale_uppers.len(),
        }
    }

    /// Scale index of the pair `(u, v)`; errors when `u == v`.
    pub fn scale_index(&self, u: VertexId, v: VertexId) -> Result<usize> {
        if u == v {
            return Err(NavError::ZeroDistanceScale);
        }
        Ok(self.scale_of_distance(self.distance(u, v)))
    }

    fn radius_balls(&self) -> &[usize] {
        self.radius_balls.get_or_init(|| {
            // Cumulative counts (excluding the center) by integer radius,
            // from one displacement pass; valid for vertex-transitive kinds.
            let dmax = self.max_distance() as usize;
            let mut shells = vec![0usize; dmax + 1];
            for v in 1..self.n {
                shells[self.dist_idx(0, v) as usize] += 1;
            }
            let mut cum = 0usize;
            for s in shells.iter_mut() {
                cum += *s;
                *s = cum;
            }
            shells
        })
    }

    /// Number of vertices `t != u` with `d(u, t) <= l` (the center is excluded).
    pub fn ball_count(&self, u: VertexId, l: f64) -> usize {
        if l < 0.0 {
            return 0;
        }
        match &self.kind {
            GeomKind::Sigma(_) => {
                let ui = u.index();
                (0..self.n)
                    .filter(|&t| t != ui && le_fuzzy(self.dist_idx(ui, t), l))
                    .count()
            }
            _ => {
                let balls = self.radius_balls();
                let r = ((l * (1.0 + 1e-12) + 1e-12).floor() as usize).min(balls.len() - 1);
                balls[r]
            }
        }
    }

    /// Number of vertices whose distance from `v` falls in scale `k`.
    ///
    /// Equals `ball_count(v, gamma^k) - ball_count(v, gamma^(k-1))` for
    /// `k >= 2`; scale 1 also absorbs distances in `(0, 1]`.
    pub fn shell_count(&self, v: VertexId, k: usize) -> Result<usize> {
        let kmax = self.scale_count();
        if k < 1 || k > kmax {
            return Err(NavError::ScaleOutOfRange { k, max: kmax });
        }
        let outer = self.ball_count(v, self.scale_uppers[k - 1]);
        Ok(if k == 1 {
            outer
        } else {
            outer - self.ball_count(v, self.scale_uppers[k - 2])
        })
    }

    /// Per-scale shell counts for one vertex, in one pass over the others.
    pub fn shell_counts_of(&self, v: VertexId) -> Vec<usize> {
        let mut counts = vec![0usize; self.scale_count()];
        let vi = v.index();
        for t in 0..self.n {
            if t != vi {
                counts[self.scale_of_distance(self.dist_idx(vi, t)) - 1] += 1;
            }
        }
        counts
    }

    /// Number of vertices that are `rho`-helpful for routing from `s` to `t`:
    /// within `gamma^k(s,t)` of `s` and within `rho * d(s,t)` of `t`. The
    /// target itself qualifies.
    pub fn helpful_count(&self, s: VertexId, t: VertexId, rho: f64) -> Result<usize> {
        if s == t {
            return Err(NavError::InvalidArg("helpful_count needs s != t".into()));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(NavError::InvalidArg(format!(
                "rho must be in (0,1), got {rho}"
            )));
        }
        let (si, ti) = (s.index(), t.index());
        let dst = self.dist_idx(si, ti);
        let reach = self.scale_uppers[self.scale_of_distance(dst) - 1];
        let target = rho * dst;
        Ok((0..self.n)
            .filter(|&v| {
                le_fuzzy(self.dist_idx(si, v), reach) && le_fuzzy(self.dist_idx(v, ti), target)
            })
            .count())
    }

    /// Scales whose upper boundary stays within the realized distance range.
    /// Finite geometries necessarily violate `Theta(gamma^k)` growth at the
    /// diameter, so pass/fail flags are evaluated on these scales only.
    pub fn interior_scales(&self) -> Vec<usize> {
        let dmax = self.max_distance();
        let interior: Vec<usize> = (1..=self.scale_count())
            .filter(|&k| le_fuzzy(self.scale_uppers[k - 1], dmax))
            .collect();
        if interior.is_empty() {
            vec![1]
        } else {
            interior
        }
    }

    /// Empirical check of bounded growth (H1) and isotropy (H2).
    ///
    /// H1 scans all `(v, k)` exactly. H2 scans all ordered pairs when
    /// `n^2 <= 10^6`, otherwise `sample_pairs` seeded random pairs. The
    /// report is deterministic for a given seed regardless of thread count.
    pub fn verify_coherence(
        &self,
        rho: f64,
        sample_pairs: usize,
        seed: u64,
    ) -> Result<CoherenceReport> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(NavError::InvalidArg(format!(
                "rho must be in (0,1), got {rho}"
            )));
        }
        if sample_pairs == 0 {
            return Err(NavError::InvalidArg("sample_pairs must be >= 1".into()));
        }
        let interior = self.interior_scales();

        let (alpha, big_a) = (0..self.n)
            .into_par_iter()
            .map(|v| {
                let counts = self.shell_counts_of(VertexId(v as u32));
                let mut lo = f64::INFINITY;
                let mut hi = 0.0f64;
                for &k in &interior {
                    let ratio = counts[k - 1] as f64 / self.scale_uppers[k - 1];
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
                (lo, hi)
            })
            .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));

        let pairs: Vec<(u32, u32)> = if self.n * self.n <= 1_000_000 {
            (0..self.n as u32)
                .flat_map(|s| {
                    (0..self.n as u32)
                        .filter(move |&t| t != s)
                        .map(move |t| (s, t))
                })
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..sample_pairs)
                .map(|_| loop {
                    let s = rng.gen_range(0..self.n as u32);
                    let t = rng.gen_range(0..self.n as u32);
                    if s != t {
                        break (s, t);
                    }
                })
                .collect()
        };

        let top_interior = *interior.last().unwrap();
        let phi = pairs
            .par_iter()
            .filter_map(|&(s, t)| {
                let k = self.scale_of_distance(self.dist_idx(s as usize, t as usize));
                if k > top_interior {
                    return None;
                }
                let helpful = self
                    .helpful_count(VertexId(s), VertexId(t), rho)
                    .expect("pair vertices distinct");
                Some(helpful as f64 / self.scale_uppers[k - 1])
            })
            .reduce(|| f64::INFINITY, f64::min);
        let phi = if phi.is_finite() { phi } else { 0.0 };

        Ok(CoherenceReport {
            kind: self.kind_name().to_string(),
            n: self.n,
            gamma: self.gamma,
            scale_count: self.scale_count(),
            alpha_growth: alpha,
            a_growth: big_a,
            phi,
            rho,
            pass_h1: alpha > 0.0,
            pass_h2: phi > 0.0,
        })
    }
}

/// Empirical coherence constants and pass flags for a geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub kind: String,
    pub n: usize,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub scale_count: usize,
    #[serde(rename = "alphaGrowth")]
    pub alpha_growth: f64,
    #[serde(rename = "AGrowth")]
    pub a_growth: f64,
    pub phi: f64,
    pub rho: f64,
    #[serde(rename = "passH1")]
    pub pass_h1: bool,
    #[serde(rename = "passH2")]
    pub pass_h2: bool,
}

impl CoherenceReport {
    pub fn pass(&self) -> bool {
        self.pass_h1 && self.pass_h2
    }
}

/// Base edge set of unit-distance pairs, with the local-connection resolver.
///
/// For every ordered pair `(s, t)` the resolver returns a neighbor `v` of `s`
/// with `d(v, t) <= d(s, t) - 1`; ties break toward the smallest index.
#[derive(Debug, Clone)]
pub struct Substrate {
    geom: Arc<Geometry>,
}

/// Builds the unit-distance substrate and verifies the substrate axiom
/// (exhaustively up to 512 vertices, on a seeded sample above that).
pub fn build_substrate(geom: Arc<Geometry>) -> Result<Substrate> {
    if geom.is_set_system() {
        return Err(NavError::Unsupported(
            "no substrate construction for set-system geometries".into(),
        ));
    }
    let sub = Substrate { geom };
    let n = sub.geom.vertex_count();
    if n <= EXHAUSTIVE_PAIR_LIMIT {
        for s in 0..n as u32 {
            for t in 0..n as u32 {
                if s != t {
                    sub.local_connection(VertexId(s), VertexId(t))?;
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSTRATE_CHECK_SEED);
        for _ in 0..10_000 {
            let s = rng.gen_range(0..n as u32);
            let t = rng.gen_range(0..n as u32);
            if s != t {
                sub.local_connection(VertexId(s), VertexId(t))?;
            }
        }
    }
    Ok(sub)
}

impl Substrate {
    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geom
    }

    /// Substrate neighbors of `v` (unit-distance vertices), ascending.
    pub fn neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let n = self.geom.n;
        let vi = v.index();
        let mut out = match self.geom.kind {
            GeomKind::Cycle => {
                vec![
                    VertexId(((vi + 1) % n) as u32),
                    VertexId(((vi + n - 1) % n) as u32),
                ]
            }
            GeomKind::Torus { side, dims } => {
                let mut out = Vec::with_capacity(2 * dims);
                let mut stride = 1usize;
                for _ in 0..dims {
                    let coord = (vi / stride) % side;
                    let up = vi - coord * stride + ((coord + 1) % side) * stride;
                    let down = vi - coord * stride + ((coord + side - 1) % side) * stride;
                    out.push(VertexId(up as u32));
                    out.push(VertexId(down as u32));
                    stride *= side;
                }
                out
            }
            GeomKind::Sigma(_) => unreachable!("substrate never built for set systems"),
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The local `t`-connection of `s`: the neighbor closest to `t`, ties
    /// broken by smallest index. Errors if the substrate axiom fails.
    pub fn local_connection(&self, s: VertexId, t: VertexId) -> Result<VertexId> {
        debug_assert_ne!(s, t);
        let ti = t.index();
        let mut best: Option<(f64, VertexId)> = None;
        for u in self.neighbors(s) {
            let d = self.geom.dist_idx(u.index(), ti);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, u));
            }
        }
        let (bd, bu) = best.expect("every vertex has substrate neighbors");
        if bd <= self.geom.dist_idx(s.index(), ti) - 1.0 + 1e-9 {
            Ok(bu)
        } else {
            Err(NavError::SubstrateAxiom { s: s.0, t: t.0 })
        }
    }

    /// Iterates the local `t`-connection from `s`; every step decreases the
    /// distance to `t` by at least 1, so the walk terminates. Truncated after
    /// `max_len` steps.
    pub fn local_path(&self, s: VertexId, t: VertexId, max_len: usize) -> Vec<VertexId> {
        let mut path = vec![s];
        let mut cur = s;
        while cur != t && path.len() <= max_len {
            match self.local_connection(cur, t) {
                Ok(next) => {
                    path.push(next);
                    cur = next;
                }
                Err(_) => break,
            }
        }
        path
    }
}

/// Parses a geometry spec string: `cycle:n=1024`, `torus:side=64,dims=2`,
/// `setsystem:branch=2,depth=10`, or `setsystem:file=PATH`. An optional
/// `gamma=` entry overrides the default scale base of 2 for lattices.
pub fn parse_geometry_spec(spec: &str) -> Result<Arc<Geometry>> {
    let (head, rest) = spec
        .split_once(':')
        .ok_or_else(|| NavError::Parse(format!("geometry spec '{spec}' missing ':'")))?;
    let mut fields = std::collections::BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| NavError::Parse(format!("bad geometry field '{part}'")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get_usize =
        |fields: &std::collections::BTreeMap<String, String>, key: &str| -> Result<usize> {
            fields
                .get(key)
                .ok_or_else(|| NavError::Parse(format!("geometry spec '{spec}' missing '{key}='")))?
                .parse::<usize>()
                .map_err(|e| NavError::Parse(format!("bad '{key}' in '{spec}': {e}")))
        };
    let gamma = match fields.get("gamma") {
        Some(g) => g
            .parse::<f64>()
            .map_err(|e| NavError::Parse(format!("bad gamma in '{spec}': {e}")))?,
        None => 2.0,
    };
    match head.trim() {
        "cycle" => Ok(Arc::new(Geometry::cycle(get_usize(&fields, "n")?, gamma)?)),
        "torus" => {
            let side = get_usize(&fields, "side")?;
            let dims = if fields.contains_key("dims") {
                get_usize(&fields, "dims")?
            } else {
                2
            };
            Ok(Arc::new(Geometry::torus(side, dims, gamma)?))
        }
        "setsystem" => {
            let ss = if let Some(path) = fields.get("file") {
                crate::setsystem::load_set_system(std::path::Path::new(path))?
            } else {
                crate::setsystem::build_hierarchy(
                    get_usize(&fields, "branch")?,
                    get_usize(&fields, "depth")?,
                )?
            };
            crate::setsystem::as_geometry(&ss)
        }
        other => Err(NavError::Parse(format!("unknown geometry kind '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyc(n: usize) -> Geometry {
        Geometry::cycle(n, 2.0).unwrap()
    }

    #[test]
    fn cycle_distances() {
        let g = cyc(8);
        assert_eq!(g.distance(VertexId(0), VertexId(0)), 0.0);
        // min(5, 8-5) checked against stepping around the ring
        assert_eq!(g.distance(VertexId(0), VertexId(5)), 3.0);
        let brute = (0..8)
            .filter(|&steps| steps % 8 == 5)
            .map(|steps| steps.min(8 - steps))
            .next()
            .unwrap();
        assert_eq!(brute as f64, 3.0);
    }

    #[test]
    fn torus_distance() {
        let g = Geometry::torus(4, 2, 2.0).unwrap();
        // (0,0) -> (2,3): vertex ids 0 and 2 + 3*4 = 14; wraps: min(2,2)+min(3,1)
        assert_eq!(g.distance(VertexId(0), VertexId(14)), 3.0);
    }

    #[test]
    fn semi_metric_axioms_exhaustive() {
        for g in [
            cyc(9),
            cyc(16),
            Geometry::torus(4, 2, 2.0).unwrap(),
            Geometry::torus(3, 3, 1.5).unwrap(),
        ] {
            let n = g.vertex_count();
            for u in 0..n as u32 {
                for v in 0..n as u32 {
                    let d = g.distance(VertexId(u), VertexId(v));
                    assert!(d >= 0.0);
                    assert_eq!(d == 0.0, u == v);
                    assert_eq!(d, g.distance(VertexId(v), VertexId(u)));
                }
            }
        }
    }

    #[test]
    fn scale_index_boundaries() {
        let g = cyc(64);
        // gamma = 2: d in (0,2] -> 1, (2,4] -> 2
        assert_eq!(g.scale_of_distance(1.0), 1);
        assert_eq!(g.scale_of_distance(2.0), 1);
        assert_eq!(g.scale_of_distance(3.0), 2);
        assert_eq!(g.scale_of_distance(4.0), 2);
        assert_eq!(g.scale_of_distance(5.0), 3);
        assert!(matches!(
            g.scale_index(VertexId(3), VertexId(3)),
            Err(NavError::ZeroDistanceScale)
        ));
    }

    #[test]
    fn scale_count_is_ceil_log() {
        assert_eq!(cyc(1024).scale_count(), 10);
        assert_eq!(cyc(1000).scale_count(), 10);
        assert_eq!(cyc(2).scale_count(), 1);
        assert_eq!(Geometry::torus(64, 2, 2.0).unwrap().scale_count(), 12);
    }

    #[test]
    fn ball_counts() {
        let g = cyc(8);
        assert_eq!(g.ball_count(VertexId(0), 2.0), 4); // {1,2,6,7}
        assert_eq!(g.ball_count(VertexId(0), 0.0), 0);
        assert_eq!(g.ball_count(VertexId(0), 100.0), 7);
        // closed form against enumeration for assorted radii and parities
        for n in [5, 6, 8, 9] {
            let g = cyc(n);
            for l in 0..=n {
                let brute = (1..n).filter(|&t| g.dist_idx(0, t) <= l as f64).count();
                assert_eq!(g.ball_count(VertexId(0), l as f64), brute, "n={n} l={l}");
            }
        }
    }

    #[test]
    fn shell_counts() {
        let g = cyc(64);
        assert_eq!(g.shell_count(VertexId(0), 3).unwrap(), 8); // d in (4,8]
        assert_eq!(g.shell_count(VertexId(0), 1).unwrap(), 4); // d in (0,2]
        let total: usize = (1..=g.scale_count())
            .map(|k| g.shell_count(VertexId(0), k).unwrap())
            .sum();
        assert_eq!(total, 63);
        assert!(g.shell_count(VertexId(0), 0).is_err());
        assert!(g.shell_count(VertexId(0), 99).is_err());
    }

    #[test]
    fn shell_decomposition_matches_scale_buckets() {
        for g in [cyc(37), Geometry::torus(6, 2, 2.0).unwrap()] {
            for v in 0..g.vertex_count() as u32 {
                let bulk = g.shell_counts_of(VertexId(v));
                for k in 1..=g.scale_count() {
                    assert_eq!(bulk[k - 1], g.shell_count(VertexId(v), k).unwrap());
                }
                assert_eq!(bulk.iter().sum::<usize>(), g.vertex_count() - 1);
            }
        }
    }

    #[test]
    fn helpful_counts() {
        let g = cyc(64);
        let (s, t) = (VertexId(0), VertexId(16));
        let expected = (0..64)
            .filter(|&v| g.dist_idx(0, v) <= 16.0 && g.dist_idx(v, 16) <= 8.0)
            .count();
        assert_eq!(g.helpful_count(s, t, 0.5).unwrap(), expected);
        // adjacent pair: only the target qualifies
        assert_eq!(g.helpful_count(VertexId(0), VertexId(1), 0.5).unwrap(), 1);
        let k = g.scale_index(s, t).unwrap();
        assert!(g.helpful_count(s, t, 0.5).unwrap() <= g.ball_count(s, g.scale_upper(k)) + 1);
        assert!(g.helpful_count(s, s, 0.5).is_err());
    }

    #[test]
    fn coherence_cycle_1024() {
        let g = cyc(1024);
        let rep = g.verify_coherence(0.5, 1000, 7).unwrap();
        assert!(rep.pass_h1 && rep.pass_h2);
        assert!(rep.alpha_growth >= 0.5, "alpha={}", rep.alpha_growth);
        assert!(rep.a_growth <= 2.5, "A={}", rep.a_growth);
        assert!(rep.phi > 0.0);
    }

    #[test]
    fn coherence_degenerate_two_vertices() {
        let g = cyc(2);
        assert_eq!(g.scale_count(), 1);
        assert_eq!(g.shell_count(VertexId(0), 1).unwrap(), 1);
        let rep = g.verify_coherence(0.5, 10, 0).unwrap();
        assert_eq!(rep.scale_count, 1);
    }

    #[test]
    fn coherence_torus_32() {
        let g = Geometry::torus(32, 2, 2.0).unwrap();
        let rep = g.verify_coherence(0.5, 2000, 11).unwrap();
        assert!(rep.pass_h1, "alpha={}", rep.alpha_growth);
        assert!(rep.pass_h2, "phi={}", rep.phi);
    }

    #[test]
    fn coherence_deterministic() {
        let g = Geometry::torus(64, 2, 2.0).unwrap(); // n^2 > 1e6 forces sampling
        let a = g.verify_coherence(0.5, 500, 42).unwrap();
        let b = g.verify_coherence(0.5, 500, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn report_json_keys() {
        let rep = cyc(16).verify_coherence(0.5, 10, 0).unwrap();
        let val: serde_json::Value = serde_json::to_value(&rep).unwrap();
        for key in [
            "kind",
            "n",
            "gamma",
            "K",
            "alphaGrowth",
            "AGrowth",
            "phi",
            "rho",
            "passH1",
            "passH2",
        ] {
            assert!(val.get(key).is_some(), "missing key {key}");
        }
    }

    #[test]
    fn substrate_local_connections() {
        let g = Arc::new(cyc(8));
        let sub = build_substrate(g).unwrap();
        // d(1,4) = 3 = d(7,4); tie broken by smallest index
        assert_eq!(
            sub.local_connection(VertexId(0), VertexId(4)).unwrap(),
            VertexId(1)
        );
        assert_eq!(
            sub.local_connection(VertexId(3), VertexId(4)).unwrap(),
            VertexId(4)
        );
    }

    #[test]
    fn substrate_axiom_exhaustive() {
        for g in [
            Arc::new(cyc(17)),
            Arc::new(Geometry::torus(5, 2, 2.0).unwrap()),
        ] {
            let sub = build_substrate(Arc::clone(&g)).unwrap();
            for s in 0..g.vertex_count() as u32 {
                for t in 0..g.vertex_count() as u32 {
                    if s == t {
                        continue;
                    }
                    let v = sub.local_connection(VertexId(s), VertexId(t)).unwrap();
                    assert_eq!(g.dist_idx(s as usize, v.index()), 1.0);
                    assert!(
                        g.dist_idx(v.index(), t as usize)
                            <= g.dist_idx(s as usize, t as usize) - 1.0
                    );
                }
            }
        }
    }

    #[test]
    fn torus_substrate_degree() {
        let g = Arc::new(Geometry::torus(4, 3, 2.0).unwrap());
        let sub = build_substrate(g).unwrap();
        assert_eq!(sub.neighbors(VertexId(0)).len(), 6);
    }

    #[test]
    fn local_paths() {
        let g = Arc::new(cyc(8));
        let sub = build_substrate(g.clone()).unwrap();
        let path = sub.local_path(VertexId(0), VertexId(3), 100);
        assert_eq!(
            path,
            vec![VertexId(0), VertexId(1), VertexId(2), VertexId(3)]
        );
        assert_eq!(
            sub.local_path(VertexId(2), VertexId(3), 100),
            vec![VertexId(2), VertexId(3)]
        );
        for s in 0..8u32 {
            for t in 0..8u32 {
                if s == t {
                    continue;
                }
                let p = sub.local_path(VertexId(s), VertexId(t), 100);
                assert!(p.len() as f64 - 1.0 <= g.distance(VertexId(s), VertexId(t)));
                assert_eq!(*p.last().unwrap(), VertexId(t));
            }
        }
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            parse_geometry_spec("cycle:n=16").unwrap().vertex_count(),
            16
        );
        let t = parse_geometry_spec("torus:side=4,dims=2").unwrap();
        assert_eq!(t.vertex_count(), 16);
        assert!(parse_geometry_spec("blob:n=4").is_err());
        assert!(parse_geometry_spec("cycle").is_err());
        assert!(parse_geometry_spec("cycle:n=bad").is_err());
    }
}
