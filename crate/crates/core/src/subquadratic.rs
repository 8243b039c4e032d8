//! Sub-quadratic solver over a hierarchical partition. Extended matchings let
//! entry gates match to the boundary of their live cell; a priority queue of
//! cells keyed by their cheapest augmenting path drives the search, and
//! sibling cells are merged smallest-perimeter first until only the root is
//! left.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{jitter_duplicates, Instance, KspInstance, KspiInstance, MatchingInstance, Normalization, Point};
use crate::hierarchy::{default_lambda, default_lambda_raw, Hierarchy, LambdaMode};
use crate::matching_state::{AuditMode, ExtendedMatchingState, PathKind, PathRecord, StateFile};
use crate::reduction::{matching_to_partitioning, GateGraph, Matching, Partitioning};
use crate::search::{Candidate, DijkstraResult, Direction, Gate, ResidualView, SearchEngine, SearchSpec};
use crate::weight::Ordered;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ksp,
    Kspi,
    Grs,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ksp" => Ok(Mode::Ksp),
            "kspi" => Ok(Mode::Kspi),
            "grs" => Ok(Mode::Grs),
            _ => Err(Error::Input(format!("unknown mode {s:?}"))),
        }
    }
}

pub enum Problem<'a> {
    Ksp(&'a KspInstance),
    Kspi(&'a KspiInstance),
    Grs(&'a MatchingInstance),
}

impl<'a> Problem<'a> {
    pub fn from_instance(inst: &'a Instance) -> Self {
        match inst {
            Instance::Ksp(i) => Problem::Ksp(i),
            Instance::Kspi(i) => Problem::Kspi(i),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Problem::Ksp(_) => Mode::Ksp,
            Problem::Kspi(_) => Mode::Kspi,
            Problem::Grs(_) => Mode::Grs,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub engine: SearchEngine,
    pub audit: bool,
    /// Admissibility tolerance on normalized costs; default 1e-9 · max(1, cost bound).
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    /// Displace coincident points instead of rejecting them.
    pub jitter: bool,
    /// Keep a JSON dump of the hierarchy in the output.
    pub dump_tree: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { engine: SearchEngine::default(), audit: false, eps: None, lambda: None, jitter: false, dump_tree: false }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct CellTrace {
    pub cell: usize,
    pub depth: usize,
    pub n_gates: usize,
    pub longest_side: f64,
    /// Searches with φ ≤ ℓ·n^(−e) and above it.
    pub searches_low: usize,
    pub searches_high: usize,
    pub merge_iterations: usize,
    /// Boundary-matched gates freed when this cell became live.
    pub freed: usize,
    pub dijkstra_runs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MergeRecord {
    pub cell: usize,
    pub depth: usize,
    pub children: usize,
    pub n_b: usize,
    pub freed: usize,
    pub iterations: usize,
    pub phi: f64,
    /// Highest cell whose divider splits the point set.
    pub top_level: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolverTrace {
    pub mode: Option<Mode>,
    pub n: usize,
    pub d: usize,
    pub engine: String,
    pub lambda: f64,
    pub lambda_clamped: bool,
    /// Exponent e of the low/high split threshold ℓ_□ · n^(−e).
    pub threshold_exponent: f64,
    pub cells_total: usize,
    pub height: usize,
    pub searches: usize,
    pub merges: usize,
    pub merge_iterations: usize,
    pub dijkstra_runs: usize,
    pub settled: usize,
    pub nn_queries: usize,
    pub arcs_scanned: usize,
    pub phi_history: Vec<f64>,
    pub phi_final: f64,
    /// Cells with at least one Dijkstra run.
    pub cells: Vec<CellTrace>,
    pub merge_records: Vec<MergeRecord>,
    pub audits: usize,
    pub audit_violations: usize,
    /// Merge loops that ran more iterations than gates freed.
    pub merge_bound_exceeded: usize,
    pub jittered: usize,
}

impl SolverTrace {
    pub fn max_dijkstra_per_cell(&self) -> usize {
        self.cells.iter().map(|c| c.dijkstra_runs).max().unwrap_or(0)
    }

    /// |B^C_□| / n_B(□) at the top-level merge, if any.
    pub fn top_level_fraction(&self) -> Option<f64> {
        self.merge_records.iter().find(|r| r.top_level).map(|r| r.freed as f64 / r.n_b.max(1) as f64)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    /// Matching on the original (unnormalized) gate graph.
    pub matching: Matching,
    pub partitioning: Option<Partitioning>,
    pub cost: f64,
    /// Cost in integer arithmetic when the instance allows it.
    pub cost_exact: Option<i64>,
    /// Final primal-dual state in normalized coordinates.
    pub state: StateFile,
    pub trace: SolverTrace,
    pub tree: Option<serde_json::Value>,
}

struct CellSearch {
    res: DijkstraResult<f64>,
    best: Candidate<f64>,
}

struct Solver<'g> {
    st: ExtendedMatchingState<'g>,
    engine: SearchEngine,
    audit: bool,
    eps: f64,
    k_target: usize,
    free_b: usize,
    pq: BTreeSet<(Ordered<f64>, usize)>,
    key: Vec<Option<f64>>,
    cache: Vec<Option<CellSearch>>,
    merge_pq: BTreeSet<(Ordered<f64>, usize)>,
    cell_trace: Vec<CellTrace>,
    top_cell: Option<usize>,
    n_scale: f64,
    trace: SolverTrace,
}

impl<'g> Solver<'g> {
    fn new(g: &'g GateGraph, h: &'g Hierarchy, o: &SolverOptions, eps: f64, k_target: usize, exponent: f64) -> Result<Self> {
        let st = ExtendedMatchingState::new(g, h, eps)?;
        let nc = h.cells.len();
        let cell_trace = h
            .cells
            .iter()
            .map(|c| CellTrace {
                cell: c.id,
                depth: c.depth,
                n_gates: c.n_gates(),
                longest_side: c.longest_side(),
                ..Default::default()
            })
            .collect();
        // first cell on the root chain with two children
        let mut top = h.root;
        while h.cells[top].children.len() == 1 {
            top = h.cells[top].children[0];
        }
        let top_cell = (h.cells[top].children.len() == 2).then_some(top);
        let free_b = g.n_b();
        let mut s = Solver {
            st,
            engine: o.engine,
            audit: o.audit,
            eps,
            k_target,
            free_b,
            pq: BTreeSet::new(),
            key: vec![None; nc],
            cache: (0..nc).map(|_| None).collect(),
            merge_pq: BTreeSet::new(),
            cell_trace,
            top_cell,
            n_scale: (g.n_a().max(g.n_b()).max(1) as f64).powf(-exponent),
            trace: SolverTrace { threshold_exponent: exponent, cells_total: nc, height: h.height(), ..Default::default() },
        };
        for c in &h.cells {
            if !c.children.is_empty() && c.children.iter().all(|&x| h.cells[x].is_leaf()) {
                s.push_merge_candidate(c.id);
            }
        }
        Ok(s)
    }

    fn push_merge_candidate(&mut self, parent: usize) {
        let h = self.st.hierarchy;
        let p = h.cells[parent].children.iter().map(|&c| h.cells[c].perimeter()).fold(f64::INFINITY, f64::min);
        self.merge_pq.insert((Ordered(p), parent));
    }

    fn is_free_b(&self, b: usize) -> bool {
        self.st.is_free_b(b)
    }

    /// Dijkstra on the cell's forward residual view from its free entry gates.
    /// With `phi`, the functional gets the third (alternating) term.
    fn run_cell(&mut self, cell: usize, phi: Option<f64>) -> Result<Option<CellSearch>> {
        let h = self.st.hierarchy;
        let c = &h.cells[cell];
        let seeds: Vec<(Gate, f64)> =
            c.b_ids.iter().filter(|&&b| self.is_free_b(b)).map(|&b| (Gate::B(b), self.st.y_b[b])).collect();
        if seeds.is_empty() {
            return Ok(None);
        }
        let st = &self.st;
        let view = ResidualView {
            graph: st.graph,
            a_ids: &c.a_ids,
            b_ids: &c.b_ids,
            direction: Direction::Forward,
            y_a: &st.y_a,
            y_b: &st.y_b,
            matching: &st.matching,
            eps: self.eps,
        };
        let mut obj = |gate: Gate, label: f64| match gate {
            Gate::A(a) => st.matching.mate_a[a].is_none().then_some((label, 0u8)),
            Gate::B(b) => {
                let boundary = label + st.bd[b] - st.y_b[b];
                match phi {
                    Some(phi) => {
                        let alt = label + phi - st.y_b[b];
                        Some(if alt <= boundary { (alt, 2u8) } else { (boundary, 1u8) })
                    }
                    None => Some((boundary, 1u8)),
                }
            }
        };
        let spec = SearchSpec { seeds, early: true, bound: None };
        let res = self.engine.run(&view, &spec, &mut obj)?;
        self.trace.dijkstra_runs += 1;
        self.trace.settled += res.settled;
        self.trace.nn_queries += res.nn_queries;
        self.trace.arcs_scanned += res.arcs_scanned;
        self.cell_trace[cell].dijkstra_runs += 1;
        let best = res.best.ok_or_else(|| Error::Invariant(format!("no augmenting path in cell {cell}")))?;
        Ok(Some(CellSearch { res, best }))
    }

    /// y(v) += κ − κ_v for settled gates of the cell with κ_v < κ.
    fn raise_duals(&mut self, cell: usize, res: &DijkstraResult<f64>, kappa: f64) {
        let c = &self.st.hierarchy.cells[cell];
        for (i, &a) in c.a_ids.iter().enumerate() {
            let l = res.a_label[i];
            if l < kappa {
                self.st.y_a[a] += kappa - l;
            }
        }
        for (j, &b) in c.b_ids.iter().enumerate() {
            let l = res.b_label[j];
            if l < kappa {
                self.st.y_b[b] += kappa - l;
            }
        }
    }

    fn path_of(&self, cell: usize, res: &DijkstraResult<f64>, gate: Gate) -> Vec<Gate> {
        let c = &self.st.hierarchy.cells[cell];
        let local = match gate {
            Gate::A(a) => Gate::A(c.a_ids.iter().position(|&x| x == a).expect("gate in cell")),
            Gate::B(b) => Gate::B(c.b_ids.iter().position(|&x| x == b).expect("gate in cell")),
        };
        res.path_to(local)
            .into_iter()
            .map(|l| match l {
                Gate::A(i) => Gate::A(c.a_ids[i]),
                Gate::B(j) => Gate::B(c.b_ids[j]),
            })
            .collect()
    }

    /// Free b of the cell pinned to `value` when within ε of it.
    fn snap_free(&mut self, cell: usize, value: f64) {
        for &b in &self.st.hierarchy.cells[cell].b_ids {
            if self.st.is_free_b(b) && (self.st.y_b[b] - value).abs() <= self.eps {
                self.st.y_b[b] = value;
            }
        }
    }

    fn tol(&self, x: f64) -> f64 {
        1e-9 * x.abs().max(1.0).max(self.eps * 1e9)
    }

    /// Locality, slack identity and expected net cost of a path about to be applied.
    fn audit_path(&mut self, p: &PathRecord, expected: f64) -> Result<()> {
        self.trace.audits += 1;
        if !self.st.path_is_local(p) {
            self.trace.audit_violations += 1;
            return Err(Error::Invariant(format!("path {:?} leaves its cell", p.gates)));
        }
        let raw = self.st.net_cost(p)?;
        let by_slack = self.st.net_cost_by_slack(p)?;
        // each clamped slack on the path may hide up to ε
        let tol = self.tol(raw) + self.eps * (p.gates.len() + 1) as f64;
        if (raw - by_slack).abs() > tol || (raw - expected).abs() > tol {
            self.trace.audit_violations += 1;
            return Err(Error::Invariant(format!(
                "net cost {raw} vs slack form {by_slack} vs search value {expected} for {:?}",
                p.gates
            )));
        }
        Ok(())
    }

    /// Feasibility, plus the per-cell cap and free-dual rule unless a merge is
    /// still raising freed gates.
    fn audit_state(&mut self, what: &str, cells: bool) -> Result<()> {
        if !self.audit {
            return Ok(());
        }
        self.trace.audits += 1;
        let mut r = self.st.check_feasibility(AuditMode::Extended, self.eps);
        if cells {
            r.absorb(self.st.check_cell_invariants(self.eps));
        }
        self.trace.audit_violations += r.total;
        r.into_result(what)
    }

    fn set_key(&mut self, cell: usize, search: Option<CellSearch>) -> Result<()> {
        if let Some(k) = self.key[cell].take() {
            self.pq.remove(&(Ordered(k), cell));
        }
        self.cache[cell] = None;
        if let Some(s) = search {
            let k = s.best.value;
            if self.audit && k < self.st.phi - self.tol(k) {
                self.trace.audit_violations += 1;
                return Err(Error::Invariant(format!("key {k} of cell {cell} below phi {}", self.st.phi)));
            }
            self.key[cell] = Some(k);
            self.pq.insert((Ordered(k), cell));
            self.cache[cell] = Some(s);
        }
        Ok(())
    }

    fn update_key(&mut self, cell: usize) -> Result<()> {
        let s = self.run_cell(cell, None)?;
        self.set_key(cell, s)
    }

    fn search_step(&mut self) -> Result<()> {
        let &(Ordered(kappa), cell) = self.pq.first().ok_or_else(|| Error::Invariant("free entry gates but empty queue".into()))?;
        self.pq.remove(&(Ordered(kappa), cell));
        self.key[cell] = None;
        if self.audit && kappa < self.st.phi - self.tol(kappa) {
            self.trace.audit_violations += 1;
            return Err(Error::Invariant(format!("extracted key {kappa} below previous {}", self.st.phi)));
        }
        self.st.phi = self.st.phi.max(kappa);
        self.trace.phi_history.push(self.st.phi);
        self.trace.searches += 1;
        let ct = &mut self.cell_trace[cell];
        if kappa <= ct.longest_side * self.n_scale {
            ct.searches_low += 1;
        } else {
            ct.searches_high += 1;
        }
        let s = match self.cache[cell].take() {
            Some(s) => s,
            None => self.run_cell(cell, None)?.ok_or_else(|| Error::Invariant(format!("cell {cell} has no free gate")))?,
        };
        self.raise_duals(cell, &s.res, kappa);
        self.snap_free(cell, kappa);
        let gates = self.path_of(cell, &s.res, s.best.gate);
        let kind = if s.best.term == 0 { PathKind::AugmentToFreeA } else { PathKind::AugmentToBoundary };
        if let (PathKind::AugmentToBoundary, Gate::B(b)) = (kind, s.best.gate) {
            // tight by construction; remove rounding so the boundary match is exact
            if (self.st.y_b[b] - self.st.bd[b]).abs() <= self.eps {
                self.st.y_b[b] = self.st.bd[b];
            }
        }
        let p = PathRecord { gates, kind };
        if self.audit {
            self.audit_path(&p, kappa)?;
        }
        self.st.apply_path(&p)?;
        self.free_b -= 1;
        self.update_key(cell)?;
        self.audit_state("after search step", true)
    }

    fn merge_step(&mut self, parent: usize) -> Result<()> {
        let h = self.st.hierarchy;
        let phi = self.st.phi;
        let children = h.cells[parent].children.clone();
        // fresh duals: every child's free gates rise to φ
        for &c in &children {
            if let Some(s) = self.cache[c].take() {
                self.raise_duals(c, &s.res, phi);
                self.snap_free(c, phi);
            }
            self.set_key(c, None)?;
        }
        let freed = self.st.merge(parent)?;
        self.free_b += freed.len();
        self.cell_trace[parent].freed = freed.len();
        self.audit_state("after fresh duals", false)?;

        let mut iterations = 0;
        loop {
            let lagging = h.cells[parent].b_ids.iter().any(|&b| self.is_free_b(b) && self.st.y_b[b] < phi - self.eps);
            if !lagging {
                break;
            }
            iterations += 1;
            let s = self.run_cell(parent, Some(phi))?.expect("lagging gate is free");
            let kappa = s.best.value;
            self.raise_duals(parent, &s.res, kappa);
            let gates = self.path_of(parent, &s.res, s.best.gate);
            let (kind, expected) = match s.best.term {
                0 => (PathKind::AugmentToFreeA, kappa),
                1 => (PathKind::AugmentToBoundary, kappa),
                _ => (PathKind::AlternatingToB, kappa - phi),
            };
            if let Gate::B(u) = s.best.gate {
                let target = if kind == PathKind::AugmentToBoundary { self.st.bd[u] } else { phi };
                if (self.st.y_b[u] - target).abs() <= self.eps {
                    self.st.y_b[u] = target;
                }
            }
            if kind == PathKind::AlternatingToB && gates.len() == 1 {
                // u was already free: only its dual moved up to φ
            } else {
                let p = PathRecord { gates, kind };
                if self.audit {
                    self.audit_path(&p, expected)?;
                }
                self.st.apply_path(&p)?;
                if kind != PathKind::AlternatingToB {
                    self.free_b -= 1;
                }
            }
            self.snap_free(parent, phi);
            self.audit_state("after merge iteration", false)?;
        }
        self.cell_trace[parent].merge_iterations += iterations;
        self.trace.merge_iterations += iterations;
        self.trace.merges += 1;
        if iterations > freed.len() {
            self.trace.merge_bound_exceeded += 1;
        }
        self.trace.merge_records.push(MergeRecord {
            cell: parent,
            depth: h.cells[parent].depth,
            children: children.len(),
            n_b: h.cells[parent].b_ids.len(),
            freed: freed.len(),
            iterations,
            phi,
            top_level: self.top_cell == Some(parent),
        });
        self.update_key(parent)?;
        if let Some(q) = h.cells[parent].parent {
            if h.cells[q].children.iter().all(|&c| self.st.live[c]) {
                self.push_merge_candidate(q);
            }
        }
        self.audit_state("after merge step", true)
    }

    fn run(&mut self) -> Result<()> {
        let h = self.st.hierarchy;
        for c in h.leaves().map(|c| c.id).collect::<Vec<_>>() {
            self.update_key(c)?;
        }
        self.audit_state("after init", true)?;
        loop {
            while self.free_b > self.k_target {
                self.search_step()?;
            }
            if self.st.live[h.root] {
                break;
            }
            let &(p, parent) = self.merge_pq.first().ok_or_else(|| Error::Invariant("no mergeable cell left".into()))?;
            self.merge_pq.remove(&(p, parent));
            self.merge_step(parent)?;
        }
        if self.st.boundary_count() != 0 {
            return Err(Error::Invariant(format!("{} gates still matched to the root boundary", self.st.boundary_count())));
        }
        if self.free_b != self.k_target || self.st.free_b_count() != self.k_target {
            return Err(Error::Invariant(format!("finished with {} free entry gates, expected {}", self.free_b, self.k_target)));
        }
        self.trace.phi_final = self.st.phi;
        self.trace.cells = self.cell_trace.iter().filter(|c| c.dijkstra_runs > 0 || c.freed > 0).cloned().collect();
        Ok(())
    }
}

fn eps_for(g: &GateGraph, o: &SolverOptions) -> f64 {
    o.eps.unwrap_or(1e-9 * g.max_cost_bound().max(1.0))
}

/// Normalized gate graph plus the map back to the original coordinates.
fn normalized(g: &GateGraph, jitter: bool) -> (GateGraph, Normalization, usize) {
    let mut a = g.a_points();
    let mut b = g.b_points();
    let mut moved = 0;
    if jitter {
        // request gates share coordinates by construction; jitter the entry side and mirror it
        moved += jitter_duplicates(&mut b);
        for i in 0..g.n_requests.min(a.len()) {
            if g.rule == crate::reduction::EdgeRule::Sequence {
                a[i] = b[i].clone();
            }
        }
        if g.rule == crate::reduction::EdgeRule::AllPairs {
            let mut all: Vec<Point> = a.iter().chain(b.iter()).cloned().collect();
            moved += jitter_duplicates(&mut all);
            let (x, y) = all.split_at(a.len());
            a = x.to_vec();
            b = y.to_vec();
        }
    }
    let norm = Normalization::fit(g.d, a.iter().chain(b.iter()));
    let na: Vec<Point> = a.iter().map(|p| norm.apply(p)).collect();
    let nb: Vec<Point> = b.iter().map(|p| norm.apply(p)).collect();
    (g.with_points(&na, &nb), norm, moved)
}

pub fn solve(problem: Problem, o: &SolverOptions) -> Result<SolveOutput> {
    let (g_orig, k_target, k_parts, lambda_mode) = match problem {
        Problem::Ksp(i) => {
            i.validate()?;
            (GateGraph::ksp(i), i.k, i.k, LambdaMode::Ksp)
        }
        Problem::Kspi(i) => {
            i.validate()?;
            (GateGraph::kspi(i), 0, i.servers.len(), LambdaMode::Ksp)
        }
        Problem::Grs(i) => {
            i.validate()?;
            (GateGraph::complete(i), 0, 0, LambdaMode::Grs)
        }
    };
    let mode = problem.mode();
    let n = g_orig.n_b();
    if mode == Mode::Ksp && (k_target == 0 || k_target > n) {
        return Err(Error::Input(format!("k = {k_target} must lie in 1..={n}")));
    }
    let (g, norm, moved) = normalized(&g_orig, o.jitter);
    let d = g.d;
    let lambda = o.lambda.unwrap_or_else(|| default_lambda(n, d, lambda_mode));
    let h = Hierarchy::for_graph(&g, lambda)?;
    let eps = eps_for(&g, o);
    let exponent = match lambda_mode {
        LambdaMode::Ksp => 1.0 / (2.0 * d as f64 + 1.0),
        LambdaMode::Grs => 1.0 / (d as f64 + 2.0),
    };
    let mut s = Solver::new(&g, &h, o, eps, k_target, exponent)?;
    s.trace.mode = Some(mode);
    s.trace.n = n;
    s.trace.d = d;
    s.trace.engine = format!("{:?}/{:?}", o.engine.kind, o.engine.nn).to_lowercase();
    s.trace.lambda = lambda;
    s.trace.lambda_clamped = o.lambda.is_none() && default_lambda_raw(n, d, lambda_mode) > lambda;
    s.trace.jittered = moved;
    s.run()?;

    let matching = Matching::from_pairs(&g_orig, &s.st.matching.pairs())?;
    let cost = matching.cost_f64(&g_orig);
    let cost_exact = g_orig.is_exact_integral().then(|| matching.cost::<i64>(&g_orig));
    let partitioning = match mode {
        Mode::Grs => None,
        _ => Some(matching_to_partitioning(&g_orig, &matching, k_parts)?),
    };
    let state = s.st.to_file(&norm);
    let tree = o.dump_tree.then(|| h.dump());
    Ok(SolveOutput { matching, partitioning, cost, cost_exact, state, trace: s.trace, tree })
}

/// The normalized gate graph a solver state refers to.
pub fn normalized_graph(g: &GateGraph, norm: &Normalization) -> GateGraph {
    let a: Vec<Point> = g.a_points().iter().map(|p| norm.apply(p)).collect();
    let b: Vec<Point> = g.b_points().iter().map(|p| norm.apply(p)).collect();
    g.with_points(&a, &b)
}

pub fn solve_instance(inst: &Instance, o: &SolverOptions) -> Result<SolveOutput> {
    solve(Problem::from_instance(inst), o)
}
