//! The gate graph, conversions between matchings and k-partitionings, and the
//! lift of a bichromatic ℓ₁ matching instance into an n-SPI instance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CostModel, Instance, KspInstance, KspiInstance, MatchingInstance, Point};
use crate::weight::Weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeRule {
    /// a_i → b_j iff j > i; server gates reach every b.
    Sequence,
    /// Complete bipartite graph (randomly-colored matching mode).
    AllPairs,
}

/// Implicit bipartite graph. A-gates: request exit gates `0..n_requests`, then
/// server gates. B-gates: request entry gates. Every gate carries a rank and
/// the edge (a, b) exists iff `rank(a) < rank(b)`.
#[derive(Clone, Debug)]
pub struct GateGraph {
    pub d: usize,
    pub model: CostModel,
    pub n_requests: usize,
    pub n_servers: usize,
    pub rule: EdgeRule,
    a_xy: Vec<f64>,
    b_xy: Vec<f64>,
    a_rank: Vec<i64>,
    b_rank: Vec<i64>,
}

fn flatten(pts: &[Point]) -> Vec<f64> {
    pts.iter().flat_map(|p| p.iter().copied()).collect()
}

impl GateGraph {
    pub fn ksp(inst: &KspInstance) -> Self {
        let n = inst.n();
        GateGraph {
            d: inst.d,
            model: inst.model,
            n_requests: n,
            n_servers: 0,
            rule: EdgeRule::Sequence,
            a_xy: flatten(&inst.requests),
            b_xy: flatten(&inst.requests),
            a_rank: (0..n as i64).collect(),
            b_rank: (0..n as i64).collect(),
        }
    }

    pub fn kspi(inst: &KspiInstance) -> Self {
        let mut g = GateGraph::ksp(&inst.base);
        g.n_servers = inst.servers.len();
        g.a_xy.extend(flatten(&inst.servers));
        g.a_rank.extend(std::iter::repeat(-1).take(inst.servers.len()));
        g
    }

    pub fn build(inst: &Instance) -> Self {
        match inst {
            Instance::Ksp(i) => GateGraph::ksp(i),
            Instance::Kspi(i) => GateGraph::kspi(i),
        }
    }

    pub fn complete(inst: &MatchingInstance) -> Self {
        GateGraph {
            d: inst.d,
            model: inst.model(),
            n_requests: inst.b.len(),
            n_servers: 0,
            rule: EdgeRule::AllPairs,
            a_xy: flatten(&inst.a),
            b_xy: flatten(&inst.b),
            a_rank: vec![-1; inst.a.len()],
            b_rank: vec![0; inst.b.len()],
        }
    }

    /// Same topology, new coordinates (used after normalization).
    pub fn with_points(&self, a: &[Point], b: &[Point]) -> Self {
        let mut g = self.clone();
        g.a_xy = flatten(a);
        g.b_xy = flatten(b);
        g
    }

    pub fn n_a(&self) -> usize {
        self.a_rank.len()
    }
    pub fn n_b(&self) -> usize {
        self.b_rank.len()
    }
    #[inline]
    pub fn a_point(&self, a: usize) -> &[f64] {
        &self.a_xy[a * self.d..(a + 1) * self.d]
    }
    #[inline]
    pub fn b_point(&self, b: usize) -> &[f64] {
        &self.b_xy[b * self.d..(b + 1) * self.d]
    }
    #[inline]
    pub fn a_rank(&self, a: usize) -> i64 {
        self.a_rank[a]
    }
    #[inline]
    pub fn b_rank(&self, b: usize) -> i64 {
        self.b_rank[b]
    }
    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.a_rank[a] < self.b_rank[b]
    }
    pub fn is_server(&self, a: usize) -> bool {
        self.rule == EdgeRule::Sequence && a >= self.n_requests
    }
    #[inline]
    pub fn cost<W: Weight>(&self, a: usize, b: usize) -> W {
        W::edge_cost(&self.model, self.a_point(a), self.b_point(b))
    }
    #[inline]
    pub fn cost_f64(&self, a: usize, b: usize) -> f64 {
        self.model.distance(self.a_point(a), self.b_point(b))
    }

    pub fn edge_count(&self) -> u64 {
        let n = self.n_requests as u64;
        match self.rule {
            EdgeRule::Sequence => n * n.saturating_sub(1) / 2 + self.n_servers as u64 * n,
            EdgeRule::AllPairs => self.n_a() as u64 * self.n_b() as u64,
        }
    }

    pub fn a_points(&self) -> Vec<Point> {
        self.a_xy.chunks(self.d).map(|c| c.to_vec()).collect()
    }
    pub fn b_points(&self) -> Vec<Point> {
        self.b_xy.chunks(self.d).map(|c| c.to_vec()).collect()
    }

    /// True when integer arithmetic reproduces every cost exactly.
    pub fn is_exact_integral(&self) -> bool {
        self.model.p == 1.0
            && self.model.q == 1.0
            && self.a_xy.iter().chain(&self.b_xy).all(|x| x.fract() == 0.0 && x.abs() < 2f64.powi(40))
    }

    pub fn require_exact(&self) -> Result<()> {
        if self.is_exact_integral() {
            Ok(())
        } else {
            Err(Error::Input("exact mode needs integer coordinates below 2^40, p = 1 and q = 1".into()))
        }
    }

    /// Upper bound on any edge cost (bounding-box diagonal).
    pub fn max_cost_bound(&self) -> f64 {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for c in self.a_xy.chunks(self.d).chain(self.b_xy.chunks(self.d)) {
            for t in 0..self.d {
                lo[t] = lo[t].min(c[t]);
                hi[t] = hi[t].max(c[t]);
            }
        }
        if lo[0].is_finite() {
            self.model.distance(&lo, &hi)
        } else {
            0.0
        }
    }
}

/// Partner arrays with `None` as the free sentinel.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Matching {
    pub mate_a: Vec<Option<usize>>,
    pub mate_b: Vec<Option<usize>>,
}

impl Matching {
    pub fn empty(n_a: usize, n_b: usize) -> Self {
        Matching { mate_a: vec![None; n_a], mate_b: vec![None; n_b] }
    }

    pub fn for_graph(g: &GateGraph) -> Self {
        Matching::empty(g.n_a(), g.n_b())
    }

    pub fn from_pairs(g: &GateGraph, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut m = Matching::for_graph(g);
        for &(a, b) in pairs {
            if a >= g.n_a() || b >= g.n_b() {
                return Err(Error::Input(format!("pair ({a}, {b}) out of range")));
            }
            if !g.has_edge(a, b) {
                return Err(Error::Input(format!("pair ({a}, {b}) is not an edge of the gate graph")));
            }
            if m.mate_a[a].is_some() || m.mate_b[b].is_some() {
                return Err(Error::Input(format!("pair ({a}, {b}) reuses a matched gate")));
            }
            m.link(a, b);
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.mate_a.iter().filter(|m| m.is_some()).count()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn link(&mut self, a: usize, b: usize) {
        self.mate_a[a] = Some(b);
        self.mate_b[b] = Some(a);
    }

    pub fn unlink(&mut self, a: usize, b: usize) {
        debug_assert_eq!(self.mate_a[a], Some(b));
        self.mate_a[a] = None;
        self.mate_b[b] = None;
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.mate_a.iter().enumerate().filter_map(|(a, m)| m.map(|b| (a, b))).collect()
    }

    pub fn cost<W: Weight>(&self, g: &GateGraph) -> W {
        let mut s = W::ZERO;
        for (a, b) in self.pairs() {
            s += g.cost::<W>(a, b);
        }
        s
    }

    pub fn cost_f64(&self, g: &GateGraph) -> f64 {
        self.cost::<f64>(g)
    }

    /// Partner arrays consistent, every pair an edge.
    pub fn validate(&self, g: &GateGraph) -> Result<()> {
        if self.mate_a.len() != g.n_a() || self.mate_b.len() != g.n_b() {
            return Err(Error::Contract("matching sized for a different graph".into()));
        }
        for (a, m) in self.mate_a.iter().enumerate() {
            if let Some(b) = *m {
                if self.mate_b[b] != Some(a) {
                    return Err(Error::Contract(format!("partner arrays disagree at a{a}")));
                }
                if !g.has_edge(a, b) {
                    return Err(Error::Contract(format!("({a}, {b}) is not an edge")));
                }
            }
        }
        for (b, m) in self.mate_b.iter().enumerate() {
            if let Some(a) = *m {
                if self.mate_a[a] != Some(b) {
                    return Err(Error::Contract(format!("partner arrays disagree at b{b}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self, cost: f64) -> MatchingFile {
        MatchingFile { pairs: self.pairs().into_iter().map(|(a, b)| [a, b]).collect(), cost }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingFile {
    pub pairs: Vec<[usize; 2]>,
    pub cost: f64,
}

/// Request-index chains (0-based). For k-SPI, `servers[j] = Some(j)` heads
/// chain j, which may be empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    pub subsequences: Vec<Vec<usize>>,
    pub servers: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitioningFile {
    pub subsequences: Vec<Vec<usize>>,
    pub servers: Vec<Option<usize>>,
    pub cost: f64,
}

impl Partitioning {
    pub fn to_file(&self, cost: f64) -> PartitioningFile {
        PartitioningFile { subsequences: self.subsequences.clone(), servers: self.servers.clone(), cost }
    }

    pub fn from_file(f: &PartitioningFile) -> Self {
        Partitioning { subsequences: f.subsequences.clone(), servers: f.servers.clone() }
    }

    /// Structural validity against n requests, k chains and the server rule.
    pub fn validate(&self, n: usize, k: usize, with_servers: bool) -> Result<()> {
        if self.subsequences.len() != k || self.servers.len() != k {
            return Err(Error::Input(format!(
                "expected {k} subsequences, got {} (servers field {})",
                self.subsequences.len(),
                self.servers.len()
            )));
        }
        let mut seen = vec![false; n];
        for (j, s) in self.subsequences.iter().enumerate() {
            match (with_servers, self.servers[j]) {
                (true, Some(l)) if l == j => {}
                (false, None) => {}
                (_, srv) => return Err(Error::Input(format!("subsequence {j} has server field {srv:?}"))),
            }
            if !with_servers && s.is_empty() {
                return Err(Error::Input(format!("subsequence {j} is empty")));
            }
            for w in s.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Input(format!("subsequence {j} is not increasing")));
                }
            }
            for &r in s {
                if r >= n || seen[r] {
                    return Err(Error::Input(format!("request {r} out of range or repeated")));
                }
                seen[r] = true;
            }
        }
        if let Some(r) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("request {r} is not covered")));
        }
        Ok(())
    }
}

/// Walks matching chains. k-SP: |M| must be n − k, chains start at free entry
/// gates. k-SPI: every entry gate must be matched, chains start at servers.
pub fn matching_to_partitioning(g: &GateGraph, m: &Matching, k: usize) -> Result<Partitioning> {
    if g.rule != EdgeRule::Sequence {
        return Err(Error::Contract("matching_to_partitioning needs a sequence gate graph".into()));
    }
    m.validate(g)?;
    let n = g.n_requests;
    let follow = |start: Option<usize>, out: &mut Vec<usize>| {
        let mut cur = start;
        while let Some(r) = cur {
            out.push(r);
            if out.len() > n {
                break;
            }
            cur = m.mate_a[r];
        }
    };
    let mut subsequences = Vec::with_capacity(k);
    let servers;
    if g.n_servers == 0 {
        if k > n || m.len() != n - k {
            return Err(Error::Contract(format!("k-SP with k = {k} needs a matching of size {}, got {}", n.saturating_sub(k), m.len())));
        }
        for b in 0..n {
            if m.mate_b[b].is_none() {
                let mut chain = Vec::new();
                follow(Some(b), &mut chain);
                subsequences.push(chain);
            }
        }
        servers = vec![None; k];
    } else {
        if k != g.n_servers || m.mate_b.iter().any(|x| x.is_none()) {
            return Err(Error::Contract("k-SPI needs every entry gate matched and k = number of servers".into()));
        }
        for l in 0..g.n_servers {
            let mut chain = Vec::new();
            follow(m.mate_a[n + l], &mut chain);
            subsequences.push(chain);
        }
        servers = (0..k).map(Some).collect();
    }
    let p = Partitioning { subsequences, servers };
    p.validate(n, k, g.n_servers > 0).map_err(|e| Error::Contract(format!("chain walk failed: {e}")))?;
    Ok(p)
}

pub fn partitioning_to_matching(g: &GateGraph, p: &Partitioning) -> Result<Matching> {
    let mut m = Matching::for_graph(g);
    for (j, s) in p.subsequences.iter().enumerate() {
        if let (Some(l), Some(&first)) = (p.servers.get(j).copied().flatten(), s.first()) {
            if l >= g.n_servers || first >= g.n_requests {
                return Err(Error::Input(format!("server {l} or request {first} out of range")));
            }
            m.link(g.n_requests + l, first);
        }
        for w in s.windows(2) {
            if w[0] >= w[1] || w[1] >= g.n_requests {
                return Err(Error::Input(format!("subsequence {j} is not an increasing index list")));
            }
            if m.mate_a[w[0]].is_some() || m.mate_b[w[1]].is_some() {
                return Err(Error::Input(format!("request repeated in subsequence {j}")));
            }
            m.link(w[0], w[1]);
        }
    }
    Ok(m)
}

pub fn partitioning_cost_w<W: Weight>(p: &Partitioning, inst: &Instance) -> W {
    let b = inst.base();
    let mut total = W::ZERO;
    for (j, s) in p.subsequences.iter().enumerate() {
        if let (Some(l), Some(&first), Some(servers)) = (p.servers.get(j).copied().flatten(), s.first(), inst.servers()) {
            total += W::edge_cost(&b.model, &servers[l], &b.requests[first]);
        }
        for w in s.windows(2) {
            total += W::edge_cost(&b.model, &b.requests[w[0]], &b.requests[w[1]]);
        }
    }
    total
}

pub fn partitioning_cost(p: &Partitioning, inst: &Instance) -> f64 {
    partitioning_cost_w::<f64>(p, inst)
}

/// The lifted n-SPI instance for a bichromatic ℓ₁ matching instance.
#[derive(Clone, Debug)]
pub struct NspiReduction {
    pub instance: KspiInstance,
    /// ℓ₁ diameter of the raw A ∪ B.
    pub diameter: f64,
    /// Lift of request i: 3^{n−i}·D for 0-based i.
    pub lifts: Vec<f64>,
}

impl NspiReduction {
    pub fn lift_total(&self) -> f64 {
        self.lifts.iter().sum()
    }

    /// Server j's chain must hold exactly one request i; yields pairs (a_i, b_j).
    pub fn recover_matching(&self, p: &Partitioning) -> Result<Vec<(usize, usize)>> {
        let mut pairs = Vec::with_capacity(p.subsequences.len());
        for (j, s) in p.subsequences.iter().enumerate() {
            if s.len() != 1 {
                return Err(Error::Invariant(format!("server {j} serves {} lifted requests, expected exactly one", s.len())));
            }
            pairs.push((s[0], j));
        }
        pairs.sort_unstable();
        Ok(pairs)
    }

    /// w(Σ_M) − Σ lifts − w(M); zero when the recovered matching is read correctly.
    pub fn identity_residual(&self, partition_cost: f64, matching_cost: f64) -> f64 {
        partition_cost - self.lift_total() - matching_cost
    }
}

pub fn matching_to_nspi_instance(a: &[Point], b: &[Point], model: &CostModel) -> Result<NspiReduction> {
    let n = a.len();
    if n != b.len() || n == 0 {
        return Err(Error::Input(format!("reduction needs |A| = |B| >= 1, got {} and {}", a.len(), b.len())));
    }
    if model.p != 1.0 {
        return Err(Error::Input("the n-SPI reduction is defined for p = 1".into()));
    }
    if model.q != 1.0 {
        log::warn!("n-SPI reduction with q = {} is experimental: no optimality guarantee", model.q);
    }
    if n > 30 {
        return Err(Error::Overflow(format!("3^{} lift is not representable exactly in floating point; use n <= 30", n + 1)));
    }
    let d = a[0].len();
    let all: Vec<&Point> = a.iter().chain(b).collect();
    if all.iter().any(|p| p.len() != d) {
        return Err(Error::Input("points of mixed dimension".into()));
    }
    let l1 = CostModel::l1();
    let mut diameter = 0.0f64;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            diameter = diameter.max(l1.distance(all[i], all[j]));
        }
    }
    let lifts: Vec<f64> = (0..n).map(|i| 3f64.powi((n - i) as i32) * diameter).collect();
    let lift = |p: &Point, h: f64| {
        let mut q = p.clone();
        q.push(h);
        q
    };
    let requests = a.iter().zip(&lifts).map(|(p, &h)| lift(p, h)).collect();
    let servers = b.iter().map(|p| lift(p, 0.0)).collect();
    let instance = KspiInstance {
        base: KspInstance { d: d + 1, model: CostModel { p: 1.0, q: model.q }, requests, k: n },
        servers,
    };
    Ok(NspiReduction { instance, diameter, lifts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn line(xs: &[f64], k: usize) -> KspInstance {
        KspInstance { d: 1, model: CostModel::l1(), requests: xs.iter().map(|&x| vec![x]).collect(), k }
    }

    #[test]
    fn edge_counts() {
        let g = GateGraph::ksp(&line(&[0., 1., 2., 3., 4., 5.], 1));
        assert_eq!(g.edge_count(), 15);
        let brute = (0..6).flat_map(|a| (0..6).map(move |b| (a, b))).filter(|&(a, b)| g.has_edge(a, b)).count();
        assert_eq!(brute, 15);
        assert_eq!(GateGraph::ksp(&line(&[0.], 1)).edge_count(), 0);
        let kspi = KspiInstance { base: line(&[0., 1., 2.], 2), servers: vec![vec![0.], vec![1.]] };
        let g = GateGraph::kspi(&kspi);
        assert_eq!(g.edge_count(), 9);
        let brute = (0..5).flat_map(|a| (0..3).map(move |b| (a, b))).filter(|&(a, b)| g.has_edge(a, b)).count();
        assert_eq!(brute, 9);
    }

    #[test]
    fn conversion_examples() {
        let g = GateGraph::ksp(&line(&[0., 1., 2.], 3));
        let p = matching_to_partitioning(&g, &Matching::for_graph(&g), 3).unwrap();
        assert_eq!(p.subsequences, vec![vec![0], vec![1], vec![2]]);
        let inst = Instance::Ksp(line(&[0., 1., 2.], 1));
        let g = GateGraph::build(&inst);
        let m = Matching::from_pairs(&g, &[(0, 1), (1, 2)]).unwrap();
        let p = matching_to_partitioning(&g, &m, 1).unwrap();
        assert_eq!(p.subsequences, vec![vec![0, 1, 2]]);
        assert_eq!(partitioning_cost(&p, &inst), 2.0);
        assert_eq!(m.cost::<i64>(&g), 2);
        assert!(matching_to_partitioning(&g, &m, 2).is_err());

        let g4 = GateGraph::ksp(&line(&[0., 1., 2., 3.], 2));
        let p = Partitioning { subsequences: vec![vec![0, 1, 3], vec![2]], servers: vec![None, None] };
        assert_eq!(partitioning_to_matching(&g4, &p).unwrap().pairs(), vec![(0, 1), (1, 3)]);
    }

    #[test]
    fn kspi_chain_cost() {
        let inst = Instance::Kspi(KspiInstance { base: line(&[0., 1.], 1), servers: vec![vec![5.]] });
        let p = Partitioning { subsequences: vec![vec![0, 1]], servers: vec![Some(0)] };
        assert_eq!(partitioning_cost(&p, &inst), 6.0);
        let g = GateGraph::build(&inst);
        let m = partitioning_to_matching(&g, &p).unwrap();
        assert_eq!(m.pairs(), vec![(0, 1), (2, 0)]);
        assert_eq!(matching_to_partitioning(&g, &m, 1).unwrap(), p);
    }

    #[test]
    fn nspi_lift_single_pair() {
        let r = matching_to_nspi_instance(&[vec![0.0, 0.0]], &[vec![1.0, 2.0]], &CostModel::l1()).unwrap();
        assert_eq!(r.diameter, 3.0);
        assert_eq!(r.instance.servers[0], vec![1.0, 2.0, 0.0]);
        assert_eq!(r.instance.base.requests[0], vec![0.0, 0.0, 9.0]);
        let p = Partitioning { subsequences: vec![vec![0]], servers: vec![Some(0)] };
        assert_eq!(r.recover_matching(&p).unwrap(), vec![(0, 0)]);
        let w = partitioning_cost(&p, &Instance::Kspi(r.instance.clone()));
        assert_eq!(r.identity_residual(w, 3.0), 0.0);
        let big: Vec<Point> = (0..31).map(|i| vec![i as f64]).collect();
        assert!(matches!(matching_to_nspi_instance(&big, &big, &CostModel::l1()), Err(Error::Overflow(_))));
    }

    fn random_partitioning(rng: &mut impl Rng, n: usize, k: usize) -> Partitioning {
        // every chain non-empty: seed chains with a random k-subset, then assign the rest
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let mut subsequences = vec![Vec::new(); k];
        for (r, &l) in labels.iter().enumerate() {
            subsequences[l].push(r);
        }
        Partitioning { subsequences, servers: vec![None; k] }
    }

    #[test]
    fn random_partitionings_cost_both_ways() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for t in 0..100 {
            let n = rng.gen_range(1..20);
            let k = rng.gen_range(1..=n);
            let inst = Instance::Ksp(crate::geometry::generate(crate::geometry::GenKind::Uniform, n, 2, k, t));
            let g = GateGraph::build(&inst);
            let p = random_partitioning(&mut rng, n, k);
            let m = partitioning_to_matching(&g, &p).unwrap();
            assert_eq!(m.len(), n - k);
            let direct: f64 = p
                .subsequences
                .iter()
                .flat_map(|s| s.windows(2).map(|w| inst.base().model.distance(&inst.base().requests[w[0]], &inst.base().requests[w[1]])))
                .sum();
            assert!((partitioning_cost(&p, &inst) - direct).abs() <= 1e-9 * direct.max(1.0));
            assert!((m.cost_f64(&g) - direct).abs() <= 1e-9 * direct.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn round_trip_matching(n in 1usize..15, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..=n);
            let inst = Instance::Ksp(crate::geometry::generate(crate::geometry::GenKind::Uniform, n, 2, k, seed));
            let g = GateGraph::build(&inst);
            let p = random_partitioning(&mut rng, n, k);
            let m = partitioning_to_matching(&g, &p).unwrap();
            let p2 = matching_to_partitioning(&g, &m, k).unwrap();
            for s in &p2.subsequences {
                prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            }
            prop_assert_eq!(partitioning_to_matching(&g, &p2).unwrap(), m.clone());
            prop_assert!((partitioning_cost(&p2, &inst) - m.cost_f64(&g)).abs() <= 1e-9 * m.cost_f64(&g).max(1.0));
        }
    }
}
