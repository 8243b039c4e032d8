//! O(nk) reverse-Hungarian solver: start from the dual-optimal single-chain
//! matching and peel off one edge per reverse search. The k-SPI variant
//! inserts servers one at a time and re-routes along an alternating path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Instance, KspInstance, KspiInstance, Normalization};
use crate::matching_state::{audit_free_b_max, audit_plain, xor_path, AuditMode, AuditReport, StateFile};
use crate::reduction::{matching_to_partitioning, GateGraph, Matching, Partitioning};
use crate::search::{Direction, Gate, ResidualView, SearchEngine, SearchSpec};
use crate::weight::Weight;

#[derive(Clone, Debug)]
pub struct PlainDualState<W> {
    pub matching: Matching,
    pub y_a: Vec<W>,
    pub y_b: Vec<W>,
    /// Exit gates currently in the graph (k-SPI inserts servers one by one).
    pub active_a: Vec<bool>,
}

impl<W: Weight> PlainDualState<W> {
    pub fn y_max(&self) -> W {
        self.y_b.iter().copied().fold(W::ZERO, |x, y| x.wmax(y))
    }

    pub fn free_b(&self) -> usize {
        self.matching.mate_b.iter().filter(|x| x.is_none()).count()
    }

    /// Σ_B y − Σ_A y − |B_F|·y_max; equals w(M) for dual-optimal states.
    pub fn dual_value(&self) -> W {
        let mut v = W::ZERO;
        for &y in &self.y_b {
            v += y;
        }
        for (a, &y) in self.y_a.iter().enumerate() {
            if self.active_a[a] {
                v -= y;
            }
        }
        let ymax = self.y_max();
        for _ in 0..self.free_b() {
            v -= ymax;
        }
        v
    }

    /// Feasibility plus free entry gates at y_max.
    pub fn audit(&self, g: &GateGraph, eps: W) -> AuditReport {
        let mut r = audit_plain(g, &self.matching, &self.y_a, &self.y_b, Some(&self.active_a), eps);
        r.absorb(audit_free_b_max(&self.matching, &self.y_b, eps));
        r
    }

    pub fn to_file(&self, norm: &Normalization) -> StateFile {
        StateFile {
            mode: AuditMode::Plain,
            pairs: self.matching.pairs().into_iter().map(|(a, b)| [a, b]).collect(),
            y_a: self.y_a.iter().map(|y| y.to_f64()).collect(),
            y_b: self.y_b.iter().map(|y| y.to_f64()).collect(),
            boundary: Vec::new(),
            cells: Vec::new(),
            cell_of_a: Vec::new(),
            cell_of_b: Vec::new(),
            phi: None,
            scale: norm.scale,
            offset: norm.offset.clone(),
            active_a: self.active_a.iter().any(|x| !x).then(|| self.active_a.clone()),
        }
    }
}

/// Single-chain matching {(a_i, b_{i+1})} with the backward dual recurrence.
/// Server gates (if any) stay inactive.
pub fn init_one_server<W: Weight>(g: &GateGraph) -> PlainDualState<W> {
    let n = g.n_requests;
    let mut s = PlainDualState {
        matching: Matching::for_graph(g),
        y_a: vec![W::ZERO; g.n_a()],
        y_b: vec![W::ZERO; g.n_b()],
        active_a: (0..g.n_a()).map(|a| a < n).collect(),
    };
    for i in (0..n.saturating_sub(1)).rev() {
        let mut y = W::ZERO;
        for j in i + 2..n {
            y = y.wmax(s.y_b[j] - g.cost::<W>(i, j));
        }
        s.y_a[i] = y;
        s.y_b[i + 1] = g.cost::<W>(i, i + 1) + y;
        s.matching.link(i, i + 1);
    }
    if n > 0 {
        s.y_b[0] = (1..n).map(|i| s.y_b[i]).fold(W::ZERO, |x, y| x.wmax(y));
    }
    s
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NkTrace {
    pub iterations: usize,
    pub dijkstra_runs: usize,
    pub settled: usize,
    pub nn_queries: usize,
    pub arcs_scanned: usize,
    /// Matching cost after init and after each iteration.
    pub cost_profile: Vec<f64>,
    /// |Σ_B y − Σ_A y − |B_F| y_max − w(M)| per audited step.
    pub identity_residuals: Vec<f64>,
    pub audits: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct NkOptions {
    pub engine: SearchEngine,
    pub audit: bool,
    pub eps: Option<f64>,
}

impl Default for NkOptions {
    fn default() -> Self {
        NkOptions { engine: SearchEngine::default(), audit: cfg!(debug_assertions), eps: None }
    }
}

fn eps_for<W: Weight>(g: &GateGraph, o: &NkOptions) -> W {
    if W::EXACT {
        W::ZERO
    } else {
        W::floor_f64(o.eps.unwrap_or(1e-9 * g.max_cost_bound().max(1.0)))
    }
}

fn active_ids(g: &GateGraph, active: &[bool]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..g.n_a()).filter(|&a| active[a]).collect();
    ids.sort_unstable_by_key(|&a| (g.a_rank(a), a));
    ids
}

fn check_step<W: Weight>(g: &GateGraph, s: &PlainDualState<W>, eps: W, trace: &mut NkTrace, what: &str) -> Result<()> {
    trace.audits += 1;
    s.audit(g, eps).into_result(what)?;
    let w = s.matching.cost::<W>(g);
    let gap = (s.dual_value() - w).to_f64().abs();
    trace.identity_residuals.push(gap);
    let tol = if W::EXACT { 0.0 } else { eps.to_f64() * (g.n_a() + g.n_b()) as f64 };
    if gap > tol {
        return Err(Error::Invariant(format!("{what}: dual value differs from matching cost by {gap:e}")));
    }
    Ok(())
}

/// One reverse search from the given seeds: updates duals and returns the
/// shortest path (global gates, source side first) to the minimizing exit gate.
fn reverse_search<W: Weight>(
    g: &GateGraph,
    s: &mut PlainDualState<W>,
    seeds: Vec<(Gate, W)>,
    engine: &SearchEngine,
    eps: W,
    trace: &mut NkTrace,
) -> Result<Vec<Gate>> {
    let a_ids = active_ids(g, &s.active_a);
    let b_ids: Vec<usize> = {
        let mut v: Vec<usize> = (0..g.n_b()).collect();
        v.sort_unstable_by_key(|&b| (g.b_rank(b), b));
        v
    };
    let res = {
        let view = ResidualView {
            graph: g,
            a_ids: &a_ids,
            b_ids: &b_ids,
            direction: Direction::Reversed,
            y_a: &s.y_a,
            y_b: &s.y_b,
            matching: &s.matching,
            eps,
        };
        let y_a = &s.y_a;
        let mut obj = |gate: Gate, label: W| match gate {
            Gate::A(a) => Some((label + y_a[a], 0u8)),
            Gate::B(_) => None,
        };
        let spec = SearchSpec { seeds, early: true, bound: None };
        engine.run(&view, &spec, &mut obj)?
    };
    trace.dijkstra_runs += 1;
    trace.settled += res.settled;
    trace.nn_queries += res.nn_queries;
    trace.arcs_scanned += res.arcs_scanned;
    let best = res.best.ok_or_else(|| Error::Invariant("reverse search reached no exit gate".into()))?;
    let kappa = best.value;
    for (i, &a) in a_ids.iter().enumerate() {
        let l = res.a_label[i];
        if l.total_cmp(&kappa).is_lt() {
            s.y_a[a] = s.y_a[a] - kappa + l;
        }
    }
    for (j, &b) in b_ids.iter().enumerate() {
        let l = res.b_label[j];
        if l.total_cmp(&kappa).is_lt() {
            s.y_b[b] = s.y_b[b] - kappa + l;
        }
    }
    let Gate::A(a_end) = best.gate else { unreachable!() };
    let local = Gate::A(a_ids.iter().position(|&x| x == a_end).unwrap());
    let path: Vec<Gate> = res
        .path_to(local)
        .into_iter()
        .map(|l| match l {
            Gate::A(i) => Gate::A(a_ids[i]),
            Gate::B(j) => Gate::B(b_ids[j]),
        })
        .collect();
    // the minimizer's dual is exactly zero after the update
    if W::EXACT || s.y_a[a_end].to_f64().abs() <= eps.to_f64() {
        s.y_a[a_end] = W::ZERO;
    }
    Ok(path)
}

/// Reverse Hungarian search from every entry gate (source weight y_max − y(b))
/// followed by M ← M ⊕ P, which removes one matching edge.
pub fn reverse_hungarian_search<W: Weight>(
    g: &GateGraph,
    s: &mut PlainDualState<W>,
    engine: &SearchEngine,
    eps: W,
    trace: &mut NkTrace,
) -> Result<Vec<Gate>> {
    if s.matching.is_empty() {
        return Err(Error::Contract("reverse search on an empty matching".into()));
    }
    let ymax = s.y_max();
    let seeds: Vec<(Gate, W)> = (0..g.n_b()).map(|b| (Gate::B(b), ymax - s.y_b[b])).collect();
    let path = reverse_search(g, s, seeds, engine, eps, trace)?;
    if !matches!(path.first(), Some(Gate::B(_))) || path.len() < 2 {
        return Err(Error::Invariant(format!("reverse path {path:?} does not start with a matching edge")));
    }
    let before = s.matching.len();
    xor_path(g, &mut s.matching, &path)?;
    if s.matching.len() + 1 != before {
        return Err(Error::Invariant("reverse reduction did not remove exactly one edge".into()));
    }
    Ok(path)
}

/// k − 1 reductions of the single-chain matching on a k-SP gate graph.
pub fn solve_nk_graph<W: Weight>(g: &GateGraph, k: usize, o: &NkOptions) -> Result<(PlainDualState<W>, NkTrace)> {
    let n = g.n_requests;
    if k == 0 || k > n.max(1) {
        return Err(Error::Input(format!("k = {k} must lie in 1..={n}")));
    }
    let eps = eps_for::<W>(g, o);
    let mut s = init_one_server::<W>(g);
    let mut trace = NkTrace::default();
    trace.cost_profile.push(s.matching.cost::<W>(g).to_f64());
    if o.audit {
        check_step(g, &s, eps, &mut trace, "after init")?;
    }
    while s.matching.len() + k > n {
        reverse_hungarian_search(g, &mut s, &o.engine, eps, &mut trace)?;
        trace.iterations += 1;
        trace.cost_profile.push(s.matching.cost::<W>(g).to_f64());
        if o.audit {
            let what = format!("after reduction {}", trace.iterations);
            check_step(g, &s, eps, &mut trace, &what)?;
        }
    }
    Ok((s, trace))
}

/// Servers inserted one at a time on a k-SPI gate graph.
pub fn solve_nk_kspi_graph<W: Weight>(g: &GateGraph, o: &NkOptions) -> Result<(PlainDualState<W>, NkTrace)> {
    let (n, k) = (g.n_requests, g.n_servers);
    if k == 0 {
        return Err(Error::Input("k-SPI needs at least one server".into()));
    }
    let eps = eps_for::<W>(g, o);
    let mut s = init_one_server::<W>(g);
    let mut trace = NkTrace::default();
    let first = n;
    s.active_a[first] = true;
    if n > 0 {
        let mut y = W::ZERO;
        for i in 1..n {
            y = y.wmax(s.y_b[i] - g.cost::<W>(first, i));
        }
        s.y_a[first] = y;
        s.y_b[0] = g.cost::<W>(first, 0) + y;
        s.matching.link(first, 0);
    }
    trace.cost_profile.push(s.matching.cost::<W>(g).to_f64());
    if o.audit {
        check_step(g, &s, eps, &mut trace, "after init")?;
    }
    for t in 1..k {
        let a_new = n + t;
        s.active_a[a_new] = true;
        let mut y = W::ZERO;
        for b in 0..n {
            y = y.wmax(s.y_b[b] - g.cost::<W>(a_new, b));
        }
        s.y_a[a_new] = y;
        if n > 0 {
            let path = reverse_search(g, &mut s, vec![(Gate::A(a_new), W::ZERO)], &o.engine, eps, &mut trace)?;
            if path.len() > 1 {
                let before = s.matching.len();
                xor_path(g, &mut s.matching, &path)?;
                if s.matching.len() != before {
                    return Err(Error::Invariant("server insertion changed the matching size".into()));
                }
            }
        }
        trace.iterations += 1;
        trace.cost_profile.push(s.matching.cost::<W>(g).to_f64());
        if o.audit {
            check_step(g, &s, eps, &mut trace, &format!("after inserting server {t}"))?;
        }
    }
    Ok((s, trace))
}

#[derive(Clone, Debug)]
pub struct NkSolution {
    pub partitioning: Partitioning,
    pub matching: Matching,
    pub cost: f64,
    pub state: StateFile,
    pub trace: NkTrace,
}

fn finish<W: Weight>(g: &GateGraph, k: usize, s: PlainDualState<W>, trace: NkTrace) -> Result<NkSolution> {
    let partitioning = matching_to_partitioning(g, &s.matching, k)?;
    Ok(NkSolution {
        partitioning,
        cost: s.matching.cost::<W>(g).to_f64(),
        state: s.to_file(&Normalization::identity(g.d)),
        matching: s.matching,
        trace,
    })
}

pub fn solve_nk_w<W: Weight>(inst: &KspInstance, o: &NkOptions) -> Result<NkSolution> {
    inst.validate()?;
    let g = GateGraph::ksp(inst);
    if W::EXACT {
        g.require_exact()?;
    }
    let (s, trace) = solve_nk_graph::<W>(&g, inst.k, o)?;
    finish(&g, inst.k, s, trace)
}

pub fn solve_nk_kspi_w<W: Weight>(inst: &KspiInstance, o: &NkOptions) -> Result<NkSolution> {
    inst.validate()?;
    let g = GateGraph::kspi(inst);
    if W::EXACT {
        g.require_exact()?;
    }
    let (s, trace) = solve_nk_kspi_graph::<W>(&g, o)?;
    finish(&g, inst.servers.len(), s, trace)
}

pub fn solve_nk(inst: &KspInstance, o: &NkOptions) -> Result<NkSolution> {
    solve_nk_w::<f64>(inst, o)
}

pub fn solve_nk_kspi(inst: &KspiInstance, o: &NkOptions) -> Result<NkSolution> {
    solve_nk_kspi_w::<f64>(inst, o)
}

/// Dispatch on the instance kind; `exact` selects integer arithmetic.
pub fn solve_instance(inst: &Instance, o: &NkOptions, exact: bool) -> Result<NkSolution> {
    match (inst, exact) {
        (Instance::Ksp(i), false) => solve_nk_w::<f64>(i, o),
        (Instance::Ksp(i), true) => solve_nk_w::<i64>(i, o),
        (Instance::Kspi(i), false) => solve_nk_kspi_w::<f64>(i, o),
        (Instance::Kspi(i), true) => solve_nk_kspi_w::<i64>(i, o),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CostModel;
    use crate::search::{EngineKind, NnBackend};

    fn line(xs: &[f64], k: usize) -> KspInstance {
        KspInstance { d: 2, model: CostModel::l1(), requests: xs.iter().map(|&x| vec![x, 0.0]).collect(), k }
    }

    fn audited() -> NkOptions {
        NkOptions { audit: true, ..Default::default() }
    }

    #[test]
    fn init_examples() {
        let g = GateGraph::ksp(&line(&[4.0], 1));
        let s = init_one_server::<i64>(&g);
        assert!(s.matching.is_empty());
        assert_eq!((s.y_a[0], s.y_b[0]), (0, 0));

        let g = GateGraph::ksp(&line(&[0.0, 1.0, 2.0], 1));
        let s = init_one_server::<i64>(&g);
        assert_eq!(s.y_a, vec![0, 0, 0]);
        assert_eq!(s.y_b, vec![1, 1, 1]);
        assert_eq!(g.cost::<i64>(0, 2) - s.y_b[2] + s.y_a[0], 1);
        assert!(s.audit(&g, 0).ok());
        assert_eq!(s.dual_value(), 2);
    }

    #[test]
    fn small_lines() {
        let r = solve_nk_w::<i64>(&line(&[0.0, 1.0], 2), &audited()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.matching.is_empty());
        let r = solve_nk_w::<i64>(&line(&[0.0, 1.0, 2.0], 2), &audited()).unwrap();
        assert_eq!(r.cost, 1.0);
        let r = solve_nk_w::<i64>(&line(&[0.0, 1.0, 10.0, 11.0], 2), &audited()).unwrap();
        assert_eq!(r.cost, 2.0);
        assert_eq!(r.matching.pairs(), vec![(0, 1), (2, 3)]);
        let r = solve_nk_w::<i64>(&line(&[0.0, 1.0, 10.0, 11.0], 1), &audited()).unwrap();
        assert_eq!(r.trace.iterations, 0);
        assert_eq!(r.partitioning.subsequences, vec![vec![0, 1, 2, 3]]);
        let r = solve_nk_w::<i64>(&line(&[0.0, 1.0, 10.0, 11.0], 4), &audited()).unwrap();
        assert_eq!((r.trace.iterations, r.cost), (3, 0.0));
        assert_eq!(r.trace.cost_profile, vec![11.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn kspi_clusters() {
        let base = line(&[0.0, 100.0, 1.0, 101.0], 2);
        let inst = KspiInstance { base, servers: vec![vec![0.5, 0.0], vec![100.5, 0.0]] };
        let r = solve_nk_kspi_w::<f64>(&inst, &audited()).unwrap();
        assert_eq!(r.partitioning.subsequences, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(r.cost, 3.0);
        let one = KspiInstance { base: line(&[0.0, 1.0], 1), servers: vec![vec![5.0, 0.0]] };
        let r = solve_nk_kspi_w::<i64>(&one, &audited()).unwrap();
        assert_eq!((r.cost, r.trace.iterations), (6.0, 0));
    }

    #[test]
    fn engines_agree() {
        let inst = crate::geometry::generate(crate::geometry::GenKind::Uniform, 40, 2, 9, 3);
        let mut costs = Vec::new();
        for kind in [EngineKind::Explicit, EngineKind::Bcp] {
            for nn in [NnBackend::Linear, NnBackend::KdTree] {
                let o = NkOptions { engine: SearchEngine::new(kind, nn), audit: true, eps: None };
                costs.push(solve_nk(&inst, &o).unwrap().cost);
            }
        }
        for c in &costs {
            assert!((c - costs[0]).abs() < 1e-9, "{costs:?}");
        }
    }

    #[test]
    fn matches_brute_force() {
        use crate::geometry::{generate_with, GenKind, GenOptions};
        for seed in 0..60u64 {
            let n = 2 + (seed % 7) as usize;
            let k = 1 + (seed as usize / 7) % n.min(4);
            let kind = [GenKind::Uniform, GenKind::Clustered, GenKind::Collinear][seed as usize % 3];
            let mut go = GenOptions::new(kind, n, 1 + (seed % 3) as usize, k, seed);
            go.integer_grid = Some(12);
            go.model = CostModel::l1();
            go.servers = seed % 2 == 1;
            let inst = generate_with(&go).unwrap();
            let want = crate::oracle::brute_force(&inst).unwrap().cost;
            let o = NkOptions { audit: true, ..Default::default() };
            let exact = solve_instance(&inst, &o, true).unwrap();
            let float = solve_instance(&inst, &o, false).unwrap();
            assert!((exact.cost - want).abs() < 1e-9, "seed {seed}: {} vs {want}", exact.cost);
            assert!((float.cost - want).abs() < 1e-9 * want.max(1.0), "seed {seed}");
            exact.partitioning.validate(inst.base().n(), inst.base().k, matches!(inst, Instance::Kspi(_))).unwrap();
        }
    }
}
