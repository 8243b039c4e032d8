//! Primal-dual state of an extended matching: duals per gate, the set of
//! boundary-matched entry gates, the live partition, feasibility audits and
//! path application.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Normalization;
use crate::hierarchy::{boundary_distance, Hierarchy};
use crate::reduction::{GateGraph, Matching};
use crate::search::Gate;
use crate::weight::Weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Extended,
    Plain,
}

impl std::str::FromStr for AuditMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extended" => Ok(AuditMode::Extended),
            "plain" => Ok(AuditMode::Plain),
            _ => Err(Error::Input(format!("unknown audit mode {s:?}"))),
        }
    }
}

/// Named feasibility conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// y(b) − y(a) ≤ d(a,b) on every edge.
    EdgeSlack,
    /// y(b) − y(a) = d(a,b) on matching edges.
    MatchedTight,
    /// y(b) ≤ d(b, C).
    BoundaryCap,
    /// y(b) = d(b, C) for boundary-matched b.
    BoundaryTight,
    /// y(a) = 0 for free a.
    FreeAZero,
    Nonnegative,
    /// A matching edge joins two different live cells.
    NoCross,
    /// Inconsistent bookkeeping (matched and boundary-matched, stale d(b, C), ...).
    Structure,
    /// Some dual of a live cell exceeds φ.
    CellCap,
    /// A free b is below the maximum B-dual (of its cell, or globally in plain mode).
    FreeBMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub magnitude: f64,
}

const KEEP: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub edges_checked: u64,
    /// Total violations found; only the first few are kept in `violations`.
    pub total: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.total == 0
    }

    pub fn push(&mut self, condition: Condition, a: Option<usize>, b: Option<usize>, magnitude: f64) {
        self.total += 1;
        if self.violations.len() < KEEP {
            self.violations.push(Violation { condition, a, b, magnitude });
        }
    }

    pub fn absorb(&mut self, o: AuditReport) {
        self.edges_checked += o.edges_checked;
        self.total += o.total;
        for v in o.violations {
            if self.violations.len() < KEEP {
                self.violations.push(v);
            }
        }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        let mut c: Vec<Condition> = self.violations.iter().map(|v| v.condition).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Error summarizing the first violation, for solvers running with audits on.
    pub fn into_result(self, context: &str) -> Result<()> {
        if self.ok() {
            return Ok(());
        }
        let v = &self.violations[0];
        Err(Error::Invariant(format!(
            "{context}: {} violation(s), first {:?} at a={:?} b={:?} by {:e}",
            self.total, v.condition, v.a, v.b, v.magnitude
        )))
    }
}

fn over<W: Weight>(x: W, eps: W) -> bool {
    x.total_cmp(&eps).is_gt()
}

fn abs<W: Weight>(x: W) -> W {
    if x.total_cmp(&W::ZERO).is_lt() {
        -x
    } else {
        x
    }
}

/// Conditions shared by both modes: edge slack, tight matching edges, free
/// exit gates at zero and nonnegativity. Exit gates with `active_a[a] == false`
/// are treated as absent from the graph.
pub fn audit_plain<W: Weight>(
    g: &GateGraph,
    m: &Matching,
    y_a: &[W],
    y_b: &[W],
    active_a: Option<&[bool]>,
    eps: W,
) -> AuditReport {
    let mut r = AuditReport::default();
    let active = |a: usize| active_a.map_or(true, |v| v[a]);
    for a in 0..g.n_a() {
        if !active(a) {
            if m.mate_a[a].is_some() {
                r.push(Condition::Structure, Some(a), m.mate_a[a], 0.0);
            }
            continue;
        }
        if over(-y_a[a], eps) {
            r.push(Condition::Nonnegative, Some(a), None, y_a[a].to_f64());
        }
        if m.mate_a[a].is_none() && over(abs(y_a[a]), eps) {
            r.push(Condition::FreeAZero, Some(a), None, y_a[a].to_f64());
        }
    }
    for b in 0..g.n_b() {
        if over(-y_b[b], eps) {
            r.push(Condition::Nonnegative, None, Some(b), y_b[b].to_f64());
        }
        for a in 0..g.n_a() {
            if !active(a) || !g.has_edge(a, b) {
                continue;
            }
            r.edges_checked += 1;
            let s = g.cost::<W>(a, b) - y_b[b] + y_a[a];
            if over(-s, eps) {
                r.push(Condition::EdgeSlack, Some(a), Some(b), s.to_f64());
            }
            if m.mate_b[b] == Some(a) && over(abs(s), eps) {
                r.push(Condition::MatchedTight, Some(a), Some(b), s.to_f64());
            }
        }
        if let Some(a) = m.mate_b[b] {
            if !g.has_edge(a, b) || m.mate_a[a] != Some(b) {
                r.push(Condition::Structure, Some(a), Some(b), 0.0);
            }
        }
    }
    r
}

/// Every free b carries the maximum B-dual.
pub fn audit_free_b_max<W: Weight>(m: &Matching, y_b: &[W], eps: W) -> AuditReport {
    let mut r = AuditReport::default();
    let Some(ymax) = y_b.iter().copied().reduce(|x, y| x.wmax(y)) else { return r };
    for b in 0..y_b.len() {
        if m.mate_b[b].is_none() && over(ymax - y_b[b], eps) {
            r.push(Condition::FreeBMax, None, Some(b), (ymax - y_b[b]).to_f64());
        }
    }
    r
}

/// Borrowed pieces of an extended state, so audits also run on states read
/// back from files.
pub struct ExtendedParts<'a> {
    pub graph: &'a GateGraph,
    pub matching: &'a Matching,
    pub boundary: &'a [bool],
    pub y_a: &'a [f64],
    pub y_b: &'a [f64],
    /// d(b, cell of b).
    pub bd: &'a [f64],
    pub cell_of_a: &'a [usize],
    pub cell_of_b: &'a [usize],
}

pub fn audit_extended(p: &ExtendedParts, eps: f64) -> AuditReport {
    let mut r = audit_plain(p.graph, p.matching, p.y_a, p.y_b, None, eps);
    for b in 0..p.graph.n_b() {
        let s = p.bd[b] - p.y_b[b];
        if s < -eps {
            r.push(Condition::BoundaryCap, None, Some(b), s);
        }
        if p.boundary[b] {
            if s.abs() > eps {
                r.push(Condition::BoundaryTight, None, Some(b), s);
            }
            if p.matching.mate_b[b].is_some() {
                r.push(Condition::Structure, p.matching.mate_b[b], Some(b), 0.0);
            }
        }
        if let Some(a) = p.matching.mate_b[b] {
            if p.cell_of_a[a] != p.cell_of_b[b] {
                r.push(Condition::NoCross, Some(a), Some(b), 0.0);
            }
        }
    }
    r
}

/// Per live cell: all duals ≤ φ and free b at the cell's maximum B-dual.
pub fn audit_cells(
    cells: &[(Vec<usize>, Vec<usize>)],
    matching: &Matching,
    boundary: &[bool],
    y_a: &[f64],
    y_b: &[f64],
    phi: Option<f64>,
    eps: f64,
) -> AuditReport {
    let mut r = AuditReport::default();
    for (a_ids, b_ids) in cells {
        if let Some(phi) = phi {
            for &a in a_ids {
                if y_a[a] > phi + eps {
                    r.push(Condition::CellCap, Some(a), None, y_a[a] - phi);
                }
            }
            for &b in b_ids {
                if y_b[b] > phi + eps {
                    r.push(Condition::CellCap, None, Some(b), y_b[b] - phi);
                }
            }
        }
        let ymax = b_ids.iter().map(|&b| y_b[b]).fold(f64::NEG_INFINITY, f64::max);
        for &b in b_ids {
            if matching.mate_b[b].is_none() && !boundary[b] && y_b[b] < ymax - eps {
                r.push(Condition::FreeBMax, None, Some(b), ymax - y_b[b]);
            }
        }
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// Free b … free a; |M| grows by one.
    AugmentToFreeA,
    /// Free b … b′, and b′ becomes boundary-matched (b′ may be the start).
    AugmentToBoundary,
    /// Free b … matched b′, and b′ becomes free; sizes unchanged.
    AlternatingToB,
}

/// Forward path in global gates: b₀, a₁, b₁, a₂, … where (bᵢ, aᵢ₊₁) are
/// non-matching and (aᵢ, bᵢ) are matching edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub gates: Vec<Gate>,
    pub kind: PathKind,
}

/// M ← M ⊕ P for any alternating gate sequence. Consecutive matched pairs are
/// removed, the others added; the result must again be a matching.
pub fn xor_path(g: &GateGraph, m: &mut Matching, gates: &[Gate]) -> Result<()> {
    let mut remove = Vec::new();
    let mut add = Vec::new();
    for w in gates.windows(2) {
        let (a, b) = match (w[0], w[1]) {
            (Gate::A(a), Gate::B(b)) | (Gate::B(b), Gate::A(a)) => (a, b),
            _ => return Err(Error::Contract(format!("path does not alternate sides at {:?}", w))),
        };
        if m.mate_a[a] == Some(b) {
            remove.push((a, b));
        } else if g.has_edge(a, b) {
            add.push((a, b));
        } else {
            return Err(Error::Contract(format!("path uses non-edge (a{a}, b{b})")));
        }
    }
    let mut seen_a = std::collections::HashSet::new();
    let mut seen_b = std::collections::HashSet::new();
    for g in gates {
        let fresh = match *g {
            Gate::A(a) => seen_a.insert(a),
            Gate::B(b) => seen_b.insert(b),
        };
        if !fresh {
            return Err(Error::Contract(format!("path repeats gate {g:?}")));
        }
    }
    for &(a, b) in &add {
        let ok_a = m.mate_a[a].map_or(true, |x| remove.contains(&(a, x)));
        let ok_b = m.mate_b[b].map_or(true, |x| remove.contains(&(x, b)));
        if !ok_a || !ok_b {
            return Err(Error::Contract(format!("adding (a{a}, b{b}) would not leave a matching")));
        }
    }
    for &(a, b) in &remove {
        m.unlink(a, b);
    }
    for &(a, b) in &add {
        m.link(a, b);
    }
    Ok(())
}

pub struct ExtendedMatchingState<'g> {
    pub graph: &'g GateGraph,
    pub hierarchy: &'g Hierarchy,
    pub matching: Matching,
    pub boundary: Vec<bool>,
    pub y_a: Vec<f64>,
    pub y_b: Vec<f64>,
    /// Live flag per hierarchy cell.
    pub live: Vec<bool>,
    pub cell_of_a: Vec<usize>,
    pub cell_of_b: Vec<usize>,
    /// d(b, C) for the live cell of b.
    pub bd: Vec<f64>,
    pub phi: f64,
    pub eps: f64,
}

impl<'g> ExtendedMatchingState<'g> {
    /// Empty matching, zero duals, partition = leaves.
    pub fn new(graph: &'g GateGraph, hierarchy: &'g Hierarchy, eps: f64) -> Result<Self> {
        let mut live = vec![false; hierarchy.cells.len()];
        for c in hierarchy.leaves() {
            live[c.id] = true;
        }
        let mut bd = vec![0.0; graph.n_b()];
        for b in 0..graph.n_b() {
            let c = &hierarchy.cells[hierarchy.leaf_of_b[b]];
            bd[b] = boundary_distance(graph.b_point(b), &c.bounds, &graph.model)?;
        }
        Ok(ExtendedMatchingState {
            graph,
            hierarchy,
            matching: Matching::for_graph(graph),
            boundary: vec![false; graph.n_b()],
            y_a: vec![0.0; graph.n_a()],
            y_b: vec![0.0; graph.n_b()],
            live,
            cell_of_a: hierarchy.leaf_of_a.clone(),
            cell_of_b: hierarchy.leaf_of_b.clone(),
            bd,
            phi: 0.0,
            eps,
        })
    }

    pub fn slack_edge(&self, a: usize, b: usize) -> Result<f64> {
        if !self.graph.has_edge(a, b) {
            return Err(Error::Contract(format!("(a{a}, b{b}) is not an edge")));
        }
        Ok(self.graph.cost_f64(a, b) - self.y_b[b] + self.y_a[a])
    }

    pub fn slack_point(&self, b: usize) -> f64 {
        self.bd[b] - self.y_b[b]
    }

    pub fn is_free_a(&self, a: usize) -> bool {
        self.matching.mate_a[a].is_none()
    }

    pub fn is_free_b(&self, b: usize) -> bool {
        self.matching.mate_b[b].is_none() && !self.boundary[b]
    }

    pub fn free_b_count(&self) -> usize {
        (0..self.graph.n_b()).filter(|&b| self.is_free_b(b)).count()
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&x| x).count()
    }

    /// |M| + |B^C|.
    pub fn extended_size(&self) -> usize {
        self.matching.len() + self.boundary_count()
    }

    pub fn extended_cost(&self) -> f64 {
        self.matching.cost_f64(self.graph)
            + (0..self.graph.n_b()).filter(|&b| self.boundary[b]).map(|b| self.bd[b]).sum::<f64>()
    }

    pub fn live_cells(&self) -> Vec<usize> {
        (0..self.live.len()).filter(|&c| self.live[c]).collect()
    }

    /// Checks a forward path against the current matching.
    pub fn validate_path(&self, p: &PathRecord) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        let Some(&Gate::B(b0)) = p.gates.first() else {
            return bad("path must start at an entry gate".into());
        };
        if !self.is_free_b(b0) {
            return bad(format!("path start b{b0} is not free"));
        }
        for (i, w) in p.gates.windows(2).enumerate() {
            match (i % 2, w[0], w[1]) {
                (0, Gate::B(b), Gate::A(a)) => {
                    if !self.graph.has_edge(a, b) || self.matching.mate_a[a] == Some(b) {
                        return bad(format!("(b{b}, a{a}) is not a non-matching edge"));
                    }
                }
                (1, Gate::A(a), Gate::B(b)) => {
                    if self.matching.mate_a[a] != Some(b) {
                        return bad(format!("(a{a}, b{b}) is not a matching edge"));
                    }
                }
                _ => return bad(format!("path does not alternate at position {i}")),
            }
        }
        let last = *p.gates.last().unwrap();
        match (p.kind, last) {
            (PathKind::AugmentToFreeA, Gate::A(a)) if self.is_free_a(a) => Ok(()),
            (PathKind::AugmentToBoundary, Gate::B(_)) => Ok(()),
            (PathKind::AlternatingToB, Gate::B(_)) if p.gates.len() > 1 => Ok(()),
            _ => bad(format!("path end {last:?} does not fit kind {:?}", p.kind)),
        }
    }

    /// φ(P) from raw edge costs: non-matching minus matching, plus d(b′, C)
    /// when the end becomes boundary-matched.
    pub fn net_cost(&self, p: &PathRecord) -> Result<f64> {
        self.validate_path(p)?;
        let mut phi = 0.0;
        for (i, w) in p.gates.windows(2).enumerate() {
            let (a, b) = match (w[0], w[1]) {
                (Gate::A(a), Gate::B(b)) | (Gate::B(b), Gate::A(a)) => (a, b),
                _ => unreachable!(),
            };
            let d = self.graph.cost_f64(a, b);
            phi += if i % 2 == 0 { d } else { -d };
        }
        if let (PathKind::AugmentToBoundary, Some(Gate::B(b))) = (p.kind, p.gates.last()) {
            phi += self.bd[*b];
        }
        Ok(phi)
    }

    /// φ(P) as y(b₀) + Σ slacks (+ s(b′)); for alternating paths − y(b′).
    pub fn net_cost_by_slack(&self, p: &PathRecord) -> Result<f64> {
        self.validate_path(p)?;
        let Gate::B(b0) = p.gates[0] else { unreachable!() };
        let mut phi = self.y_b[b0];
        for w in p.gates.windows(2) {
            let (a, b) = match (w[0], w[1]) {
                (Gate::A(a), Gate::B(b)) | (Gate::B(b), Gate::A(a)) => (a, b),
                _ => unreachable!(),
            };
            phi += self.slack_edge(a, b)?;
        }
        match (p.kind, *p.gates.last().unwrap()) {
            (PathKind::AugmentToBoundary, Gate::B(b)) => phi += self.slack_point(b),
            (PathKind::AlternatingToB, Gate::B(b)) => phi -= self.y_b[b],
            _ => {}
        }
        Ok(phi)
    }

    /// True when every gate of the path lies in one live cell.
    pub fn path_is_local(&self, p: &PathRecord) -> bool {
        let cell = |g: &Gate| match *g {
            Gate::A(a) => self.cell_of_a[a],
            Gate::B(b) => self.cell_of_b[b],
        };
        let c0 = cell(&p.gates[0]);
        p.gates.iter().all(|g| cell(g) == c0)
    }

    pub fn apply_path(&mut self, p: &PathRecord) -> Result<()> {
        self.validate_path(p)?;
        if p.gates.len() > 1 {
            xor_path(self.graph, &mut self.matching, &p.gates)?;
        }
        if p.kind == PathKind::AugmentToBoundary {
            let Some(&Gate::B(b)) = p.gates.last() else { unreachable!() };
            self.boundary[b] = true;
        }
        Ok(())
    }

    /// Replaces the children of `parent` by `parent` in the partition and frees
    /// every boundary-matched b whose nearest face was the erased divider.
    /// Returns the freed gates.
    pub fn merge(&mut self, parent: usize) -> Result<Vec<usize>> {
        let h = self.hierarchy;
        let cell = &h.cells[parent];
        for &c in &cell.children {
            if !self.live[c] {
                return Err(Error::Contract(format!("child {c} of cell {parent} is not live")));
            }
        }
        for &c in &cell.children {
            self.live[c] = false;
        }
        self.live[parent] = true;
        for &a in &cell.a_ids {
            self.cell_of_a[a] = parent;
        }
        let mut freed = Vec::new();
        for &b in &cell.b_ids {
            self.cell_of_b[b] = parent;
            let nb = boundary_distance(self.graph.b_point(b), &cell.bounds, &self.graph.model)?;
            if self.boundary[b] && nb > self.bd[b] {
                self.boundary[b] = false;
                freed.push(b);
            }
            self.bd[b] = nb;
        }
        Ok(freed)
    }

    pub fn parts(&self) -> ExtendedParts<'_> {
        ExtendedParts {
            graph: self.graph,
            matching: &self.matching,
            boundary: &self.boundary,
            y_a: &self.y_a,
            y_b: &self.y_b,
            bd: &self.bd,
            cell_of_a: &self.cell_of_a,
            cell_of_b: &self.cell_of_b,
        }
    }

    pub fn check_feasibility(&self, mode: AuditMode, eps: f64) -> AuditReport {
        match mode {
            AuditMode::Plain => {
                let mut r = audit_plain(self.graph, &self.matching, &self.y_a, &self.y_b, None, eps);
                for b in (0..self.graph.n_b()).filter(|&b| self.boundary[b]) {
                    r.push(Condition::Structure, None, Some(b), 0.0);
                }
                r
            }
            AuditMode::Extended => {
                let mut r = audit_extended(&self.parts(), eps);
                for b in 0..self.graph.n_b() {
                    let c = &self.hierarchy.cells[self.cell_of_b[b]];
                    let fresh = boundary_distance(self.graph.b_point(b), &c.bounds, &self.graph.model);
                    if !self.live[c.id] || fresh.map_or(true, |x| x != self.bd[b]) {
                        r.push(Condition::Structure, None, Some(b), 0.0);
                    }
                }
                for a in 0..self.graph.n_a() {
                    if !self.live[self.cell_of_a[a]] {
                        r.push(Condition::Structure, Some(a), None, 0.0);
                    }
                }
                r
            }
        }
    }

    /// Per-cell dual cap y ≤ φ and the free-b maximum rule.
    pub fn check_cell_invariants(&self, eps: f64) -> AuditReport {
        let cells: Vec<(Vec<usize>, Vec<usize>)> = self
            .live_cells()
            .into_iter()
            .map(|c| (self.hierarchy.cells[c].a_ids.clone(), self.hierarchy.cells[c].b_ids.clone()))
            .collect();
        audit_cells(&cells, &self.matching, &self.boundary, &self.y_a, &self.y_b, Some(self.phi), eps)
    }

    pub fn to_file(&self, norm: &Normalization) -> StateFile {
        let live = self.live_cells();
        let index = |c: usize| live.binary_search(&c).unwrap_or(usize::MAX);
        StateFile {
            mode: AuditMode::Extended,
            pairs: self.matching.pairs().into_iter().map(|(a, b)| [a, b]).collect(),
            y_a: self.y_a.clone(),
            y_b: self.y_b.clone(),
            boundary: (0..self.graph.n_b()).filter(|&b| self.boundary[b]).collect(),
            cells: live.iter().map(|&c| self.hierarchy.cells[c].bounds.clone()).collect(),
            cell_of_a: self.cell_of_a.iter().map(|&c| index(c)).collect(),
            cell_of_b: self.cell_of_b.iter().map(|&c| index(c)).collect(),
            phi: Some(self.phi),
            scale: norm.scale,
            offset: norm.offset.clone(),
            active_a: None,
        }
    }
}

/// Serialized primal-dual state, consumed by certificate verification.
/// Duals live in the coordinates obtained by applying (scale, offset) to the
/// instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub mode: AuditMode,
    pub pairs: Vec<[usize; 2]>,
    pub y_a: Vec<f64>,
    pub y_b: Vec<f64>,
    #[serde(default)]
    pub boundary: Vec<usize>,
    /// Bounds of the live cells (extended mode).
    #[serde(default)]
    pub cells: Vec<Vec<(f64, f64)>>,
    #[serde(default)]
    pub cell_of_a: Vec<usize>,
    #[serde(default)]
    pub cell_of_b: Vec<usize>,
    #[serde(default)]
    pub phi: Option<f64>,
    pub scale: f64,
    pub offset: Vec<f64>,
    /// Exit gates present in the graph (servers not yet inserted are absent).
    #[serde(default)]
    pub active_a: Option<Vec<bool>>,
}

impl StateFile {
    pub fn normalization(&self) -> Normalization {
        Normalization { scale: self.scale, offset: self.offset.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CostModel, KspInstance};
    use crate::hierarchy::Hierarchy;

    fn line(xs: &[f64]) -> GateGraph {
        GateGraph::ksp(&KspInstance {
            d: 2,
            model: CostModel::l1(),
            requests: xs.iter().map(|&x| vec![x, 0.0]).collect(),
            k: 1,
        })
    }

    #[test]
    fn empty_state_is_feasible() {
        let g = line(&[0.1, 0.5, 0.9]);
        let h = Hierarchy::for_graph(&g, 1.0 / 3.0).unwrap();
        let s = ExtendedMatchingState::new(&g, &h, 1e-9).unwrap();
        assert!(s.check_feasibility(AuditMode::Extended, 1e-9).ok());
        assert!(s.check_feasibility(AuditMode::Plain, 1e-9).ok());
        assert_eq!(s.extended_cost(), 0.0);
        assert_eq!(s.slack_edge(0, 2).unwrap(), 0.8);
        assert!(s.slack_edge(2, 0).is_err());
    }

    #[test]
    fn nk_init_duals_slack() {
        // σ = ⟨0,1,2⟩ with init duals y(a)=0, y(b) = (1, 1, 1)
        let g = line(&[0.0, 1.0, 2.0]);
        let m = Matching::from_pairs(&g, &[(0, 1), (1, 2)]).unwrap();
        let (y_a, y_b) = (vec![0i64, 0, 0], vec![1i64, 1, 1]);
        let r = audit_plain(&g, &m, &y_a, &y_b, None, 0);
        assert!(r.ok(), "{r:?}");
        assert_eq!(g.cost::<i64>(0, 2) - y_b[2] + y_a[0], 1);
        assert!(audit_free_b_max(&m, &y_b, 0).ok());
    }

    #[test]
    fn injected_fault_flags_only_matched_tightness() {
        let g = line(&[0.0, 1.0, 2.0]);
        let m = Matching::from_pairs(&g, &[(0, 1), (1, 2)]).unwrap();
        let (y_a, mut y_b) = (vec![0i64, 0, 0], vec![1i64, 1, 1]);
        y_b[1] -= 1;
        let r = audit_plain(&g, &m, &y_a, &y_b, None, 0);
        assert_eq!(r.conditions(), vec![Condition::MatchedTight]);
        assert_eq!(r.total, 1);
        assert_eq!((r.violations[0].a, r.violations[0].b), (Some(0), Some(1)));
    }

    #[test]
    fn leaf_boundary_path_and_slack_point() {
        let g = line(&[0.25, 0.75]);
        let h = Hierarchy::for_graph(&g, 1.0 / 3.0).unwrap();
        let mut s = ExtendedMatchingState::new(&g, &h, 1e-9).unwrap();
        let b = 0;
        let bd = s.bd[b];
        assert_eq!(s.slack_point(b), bd);
        let p = PathRecord { gates: vec![Gate::B(b)], kind: PathKind::AugmentToBoundary };
        assert_eq!(s.net_cost(&p).unwrap(), bd);
        s.y_b[b] = bd;
        assert_eq!(s.net_cost_by_slack(&p).unwrap(), bd);
        s.apply_path(&p).unwrap();
        assert!(s.boundary[b]);
        assert_eq!(s.extended_size(), 1);
        assert_eq!(s.slack_point(b), 0.0);
        assert!(s.check_feasibility(AuditMode::Extended, 1e-9).ok());
        assert_eq!(s.extended_cost(), bd);
    }

    #[test]
    fn augment_then_reverse_restores() {
        let g = line(&[0.0, 1.0, 2.0, 3.0]);
        let mut m = Matching::from_pairs(&g, &[(0, 1)]).unwrap();
        let orig = m.clone();
        assert!(xor_path(&g, &mut m.clone(), &[Gate::B(1), Gate::A(2)]).is_err(), "not an edge");
        assert!(xor_path(&g, &mut m.clone(), &[Gate::B(2), Gate::A(0), Gate::B(2)]).is_err(), "repeat");
        assert!(xor_path(&g, &mut m.clone(), &[Gate::B(2), Gate::A(0)]).is_err(), "a0 stays matched");
        let path = [Gate::B(2), Gate::A(0), Gate::B(1)];
        xor_path(&g, &mut m, &path).unwrap();
        assert_eq!(m.pairs(), vec![(0, 2)]);
        let back: Vec<Gate> = path.iter().rev().copied().collect();
        xor_path(&g, &mut m, &back).unwrap();
        assert_eq!(m, orig);
        xor_path(&g, &mut m, &[Gate::B(3), Gate::A(2)]).unwrap();
        assert_eq!(m.pairs(), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn single_edge_augment_and_net_cost() {
        let g = line(&[0.2, 0.6]);
        let h = Hierarchy::for_graph(&g, 1.0 / 3.0).unwrap();
        let mut s = ExtendedMatchingState::new(&g, &h, 1e-9).unwrap();
        // merge everything up to the root so the edge is inside one cell
        let mut order: Vec<usize> = (0..h.cells.len()).filter(|&c| !h.cells[c].is_leaf()).collect();
        order.sort_by_key(|&c| std::cmp::Reverse(h.cells[c].depth));
        for c in order {
            assert!(s.merge(c).unwrap().is_empty());
        }
        let p = PathRecord { gates: vec![Gate::B(1), Gate::A(0)], kind: PathKind::AugmentToFreeA };
        assert!((s.net_cost(&p).unwrap() - 0.4).abs() < 1e-12);
        assert!((s.net_cost_by_slack(&p).unwrap() - 0.4).abs() < 1e-12);
        assert!(s.path_is_local(&p));
        s.y_b[1] = 0.4;
        s.apply_path(&p).unwrap();
        assert_eq!(s.matching.pairs(), vec![(0, 1)]);
        assert!(s.check_feasibility(AuditMode::Extended, 1e-9).ok());
        assert!(s.apply_path(&p).is_err());
    }

    #[test]
    fn merge_frees_divider_matched() {
        let g = line(&[0.25, 0.75]);
        let h = Hierarchy::for_graph(&g, 1.0 / 3.0).unwrap();
        let mut s = ExtendedMatchingState::new(&g, &h, 1e-9).unwrap();
        for b in 0..2 {
            s.y_b[b] = s.bd[b];
            s.apply_path(&PathRecord { gates: vec![Gate::B(b)], kind: PathKind::AugmentToBoundary }).unwrap();
        }
        let split = h.cells.iter().find(|c| c.children.len() == 2).unwrap().id;
        let before = s.bd.clone();
        let freed = s.merge(split).unwrap();
        for &b in &freed {
            assert!(s.slack_point(b) > 0.0 && s.bd[b] > before[b]);
            assert!(s.is_free_b(b));
        }
        for b in 0..2 {
            assert_eq!(freed.contains(&b), s.bd[b] > before[b]);
            assert_eq!(s.boundary[b], !freed.contains(&b));
        }
        assert!(s.check_feasibility(AuditMode::Extended, 1e-9).ok());
    }
}
