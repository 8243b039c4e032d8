//! Dijkstra over residual views. Two engines share one contract: an explicit
//! engine that scans every implicit arc, and a clique-decomposition engine
//! that finds cheapest cut arcs with weighted nearest-neighbor queries.

pub mod bcp;
pub mod explicit;
pub mod nn;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::{GateGraph, Matching};
use crate::weight::Weight;

pub use nn::NnBackend;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gate {
    A(usize),
    B(usize),
}

/// Forward: source → free b (weight y(b)), b → a on non-matching edges,
/// a → mate(a). Reversed: source → chosen gates, a → b on non-matching edges,
/// b → mate(b). Arc weights are edge slacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Explicit,
    #[default]
    Bcp,
}

impl std::str::FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(EngineKind::Explicit),
            "bcp" => Ok(EngineKind::Bcp),
            _ => Err(Error::Input(format!("unknown engine {s:?}"))),
        }
    }
}

/// Gates of one cell (or the whole graph). `a_ids`/`b_ids` must be sorted by
/// (rank, index); all duals and the matching are indexed globally.
pub struct ResidualView<'a, W> {
    pub graph: &'a GateGraph,
    pub a_ids: &'a [usize],
    pub b_ids: &'a [usize],
    pub direction: Direction,
    pub y_a: &'a [W],
    pub y_b: &'a [W],
    pub matching: &'a Matching,
    pub eps: W,
}

impl<'a, W: Weight> ResidualView<'a, W> {
    pub fn local_a(&self, a: usize) -> Option<usize> {
        let g = self.graph;
        let key = (g.a_rank(a), a);
        let i = self.a_ids.partition_point(|&x| (g.a_rank(x), x) < key);
        (i < self.a_ids.len() && self.a_ids[i] == a).then_some(i)
    }

    pub fn local_b(&self, b: usize) -> Option<usize> {
        let g = self.graph;
        let key = (g.b_rank(b), b);
        let i = self.b_ids.partition_point(|&x| (g.b_rank(x), x) < key);
        (i < self.b_ids.len() && self.b_ids[i] == b).then_some(i)
    }

    pub fn local(&self, g: Gate) -> Option<Gate> {
        match g {
            Gate::A(a) => self.local_a(a).map(Gate::A),
            Gate::B(b) => self.local_b(b).map(Gate::B),
        }
    }

    pub fn global(&self, g: Gate) -> Gate {
        match g {
            Gate::A(i) => Gate::A(self.a_ids[i]),
            Gate::B(j) => Gate::B(self.b_ids[j]),
        }
    }

    /// Raw slack d(a,b) − y(b) + y(a) of global gates.
    #[inline]
    pub fn slack(&self, a: usize, b: usize) -> W {
        self.graph.cost::<W>(a, b) - self.y_b[b] + self.y_a[a]
    }

    /// Weight of a matching arc: tight edges (|slack| ≤ ε) count as exactly
    /// zero so that both endpoints always receive the same label.
    #[inline]
    pub fn matched_arc_weight(&self, a: usize, b: usize) -> Result<W> {
        let s = self.slack(a, b);
        if s.total_cmp(&self.eps).is_le() && s.total_cmp(&-self.eps).is_ge() {
            Ok(W::ZERO)
        } else {
            clamp_slack(s, self.eps, a, b)
        }
    }

    /// Slack clamped at zero; below −ε is an infeasible state.
    #[inline]
    pub fn arc_weight(&self, a: usize, b: usize) -> Result<W> {
        clamp_slack(self.slack(a, b), self.eps, a, b)
    }
}

#[inline]
pub(crate) fn clamp_slack<W: Weight>(s: W, eps: W, a: usize, b: usize) -> Result<W> {
    if s.total_cmp(&W::ZERO) != Ordering::Less {
        Ok(s)
    } else if s.total_cmp(&-eps) == Ordering::Less {
        Err(Error::NegativeArc { value: s.to_f64(), context: format!("slack of (a{a}, b{b})") })
    } else {
        Ok(W::ZERO)
    }
}

/// Value offered by a settled gate to the caller's stopping functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate<W> {
    /// Global gate.
    pub gate: Gate,
    pub value: W,
    /// Which term of the functional realized the value.
    pub term: u8,
}

impl<W: Weight> Candidate<W> {
    /// Lexicographic (value, gate, term) order.
    pub fn better_than(&self, other: &Candidate<W>) -> bool {
        self.value
            .total_cmp(&other.value)
            .then(self.gate.cmp(&other.gate))
            .then(self.term.cmp(&other.term))
            == Ordering::Less
    }
}

pub trait Objective<W> {
    /// Called once per settled gate (global id) with its final label.
    fn offer(&mut self, gate: Gate, label: W) -> Option<(W, u8)>;
}

/// Objective that offers nothing: plain shortest paths.
pub struct NoObjective;

impl<W> Objective<W> for NoObjective {
    fn offer(&mut self, _: Gate, _: W) -> Option<(W, u8)> {
        None
    }
}

impl<W, F: FnMut(Gate, W) -> Option<(W, u8)>> Objective<W> for F {
    fn offer(&mut self, gate: Gate, label: W) -> Option<(W, u8)> {
        self(gate, label)
    }
}

#[derive(Clone, Debug)]
pub struct SearchSpec<W> {
    /// Source arcs: (global gate, weight).
    pub seeds: Vec<(Gate, W)>,
    /// Stop once the next label exceeds the best candidate (or `bound`).
    pub early: bool,
    pub bound: Option<W>,
}

impl<W> SearchSpec<W> {
    pub fn exhaustive(seeds: Vec<(Gate, W)>) -> Self {
        SearchSpec { seeds, early: false, bound: None }
    }
}

pub const NO_PRED: u32 = u32::MAX;
pub const SOURCE: u32 = u32::MAX - 1;

/// Labels and predecessors indexed by local position in the view. Unsettled
/// gates have label `W::INF`. A predecessor is the local index on the
/// opposite side, or `SOURCE`.
#[derive(Clone, Debug)]
pub struct DijkstraResult<W> {
    pub a_label: Vec<W>,
    pub b_label: Vec<W>,
    pub a_pred: Vec<u32>,
    pub b_pred: Vec<u32>,
    pub best: Option<Candidate<W>>,
    pub settled: usize,
    pub nn_queries: usize,
    pub arcs_scanned: usize,
}

impl<W: Weight> DijkstraResult<W> {
    pub(crate) fn new(na: usize, nb: usize) -> Self {
        DijkstraResult {
            a_label: vec![W::INF; na],
            b_label: vec![W::INF; nb],
            a_pred: vec![NO_PRED; na],
            b_pred: vec![NO_PRED; nb],
            best: None,
            settled: 0,
            nn_queries: 0,
            arcs_scanned: 0,
        }
    }

    pub fn label(&self, local: Gate) -> W {
        match local {
            Gate::A(i) => self.a_label[i],
            Gate::B(j) => self.b_label[j],
        }
    }

    /// Local gates from the source-adjacent gate to `local`, inclusive.
    pub fn path_to(&self, local: Gate) -> Vec<Gate> {
        let mut path = vec![local];
        let mut cur = local;
        loop {
            let (p, next) = match cur {
                Gate::A(i) => (self.a_pred[i], Gate::B as fn(usize) -> Gate),
                Gate::B(j) => (self.b_pred[j], Gate::A as fn(usize) -> Gate),
            };
            if p == SOURCE || p == NO_PRED {
                break;
            }
            cur = next(p as usize);
            path.push(cur);
        }
        path.reverse();
        path
    }

    pub(crate) fn offer<O: Objective<W> + ?Sized>(&mut self, obj: &mut O, gate: Gate, label: W) {
        if let Some((value, term)) = obj.offer(gate, label) {
            let c = Candidate { gate, value, term };
            if self.best.as_ref().map_or(true, |b| c.better_than(b)) {
                self.best = Some(c);
            }
        }
    }

    pub(crate) fn limit(&self, bound: Option<W>) -> Option<W> {
        match (self.best.map(|b| b.value), bound) {
            (Some(x), Some(y)) => Some(x.wmin(y)),
            (x, y) => x.or(y),
        }
    }
}

/// Engine selector plus NN backend; one instance per solver run.
#[derive(Clone, Copy, Debug)]
pub struct SearchEngine {
    pub kind: EngineKind,
    pub nn: NnBackend,
}

impl Default for SearchEngine {
    fn default() -> Self {
        SearchEngine { kind: EngineKind::Bcp, nn: NnBackend::Linear }
    }
}

impl SearchEngine {
    pub fn new(kind: EngineKind, nn: NnBackend) -> Self {
        SearchEngine { kind, nn }
    }

    pub fn run<W: Weight, O: Objective<W> + ?Sized>(
        &self,
        view: &ResidualView<W>,
        spec: &SearchSpec<W>,
        obj: &mut O,
    ) -> Result<DijkstraResult<W>> {
        match self.kind {
            EngineKind::Explicit => explicit::dijkstra_explicit(view, spec, obj),
            EngineKind::Bcp => bcp::dijkstra_bcp(view, spec, obj, self.nn),
        }
    }
}
