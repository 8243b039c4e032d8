//! Dynamic weighted nearest neighbor: `query(q)` returns the live entry
//! minimizing `w + cost(point, q)`, ties broken by smaller id.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CostModel;
use crate::weight::Weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NnBackend {
    Linear,
    #[default]
    KdTree,
}

impl std::str::FromStr for NnBackend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(NnBackend::Linear),
            "kdtree" => Ok(NnBackend::KdTree),
            _ => Err(Error::Input(format!("unknown nn backend {s:?}"))),
        }
    }
}

pub trait WeightedNnIndex<W: Weight> {
    fn insert(&mut self, id: u32, point: &[f64], w: W);
    fn remove(&mut self, id: u32) -> bool;
    fn query(&self, q: &[f64]) -> Option<(u32, W)>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[inline]
fn better<W: Weight>(v: W, id: u32, best: &Option<(u32, W)>) -> bool {
    match best {
        None => true,
        Some((bid, bv)) => v.total_cmp(bv).then(id.cmp(bid)).is_lt(),
    }
}

/// Reference backend.
pub struct LinearIndex<W> {
    d: usize,
    model: CostModel,
    coords: Vec<f64>,
    weights: Vec<W>,
    ids: Vec<u32>,
    slot_of: std::collections::HashMap<u32, usize>,
}

impl<W: Weight> LinearIndex<W> {
    pub fn new(d: usize, model: CostModel) -> Self {
        LinearIndex { d, model, coords: Vec::new(), weights: Vec::new(), ids: Vec::new(), slot_of: Default::default() }
    }
}

impl<W: Weight> WeightedNnIndex<W> for LinearIndex<W> {
    fn insert(&mut self, id: u32, point: &[f64], w: W) {
        if self.slot_of.contains_key(&id) {
            self.remove(id);
        }
        self.slot_of.insert(id, self.ids.len());
        self.coords.extend_from_slice(point);
        self.weights.push(w);
        self.ids.push(id);
    }

    fn remove(&mut self, id: u32) -> bool {
        let Some(s) = self.slot_of.remove(&id) else { return false };
        let last = self.ids.len() - 1;
        if s != last {
            let moved = self.ids[last];
            self.ids.swap(s, last);
            self.weights.swap(s, last);
            for t in 0..self.d {
                self.coords.swap(s * self.d + t, last * self.d + t);
            }
            self.slot_of.insert(moved, s);
        }
        self.ids.pop();
        self.weights.pop();
        self.coords.truncate(last * self.d);
        true
    }

    fn query(&self, q: &[f64]) -> Option<(u32, W)> {
        let mut best = None;
        for s in 0..self.ids.len() {
            let v = self.weights[s] + W::edge_cost(&self.model, &self.coords[s * self.d..(s + 1) * self.d], q);
            if better(v, self.ids[s], &best) {
                best = Some((self.ids[s], v));
            }
        }
        best
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

const LEAF: usize = 8;

struct KdNode<W> {
    lo: usize,
    hi: usize,
    children: Option<(usize, usize)>,
    parent: usize,
    min_w: W,
    bbox: Vec<(f64, f64)>,
}

/// Static kd-tree over the initial entries with per-subtree minimum live
/// weight; removals update the minimum along the leaf-to-root path. Inserted
/// entries go to a side buffer that is merged by rebuilding once it grows.
pub struct KdTree<W> {
    d: usize,
    model: CostModel,
    coords: Vec<f64>,
    weights: Vec<W>,
    ids: Vec<u32>,
    live: Vec<bool>,
    leaf_of: Vec<usize>,
    pos_of: std::collections::HashMap<u32, usize>,
    nodes: Vec<KdNode<W>>,
    buffer: LinearIndex<W>,
    n_live: usize,
}

impl<W: Weight> KdTree<W> {
    pub fn new(d: usize, model: CostModel) -> Self {
        KdTree::build(d, model, Vec::new())
    }

    pub fn build(d: usize, model: CostModel, entries: Vec<(u32, Vec<f64>, W)>) -> Self {
        let n = entries.len();
        let mut t = KdTree {
            d,
            model,
            coords: Vec::with_capacity(n * d),
            weights: Vec::with_capacity(n),
            ids: Vec::with_capacity(n),
            live: vec![true; n],
            leaf_of: vec![0; n],
            pos_of: Default::default(),
            nodes: Vec::new(),
            buffer: LinearIndex::new(d, model),
            n_live: n,
        };
        let mut order: Vec<usize> = (0..n).collect();
        if n > 0 {
            t.split(&entries, &mut order, 0, n, usize::MAX);
        }
        for (pos, &e) in order.iter().enumerate() {
            t.coords.extend_from_slice(&entries[e].1);
            t.weights.push(entries[e].2);
            t.ids.push(entries[e].0);
            t.pos_of.insert(entries[e].0, pos);
        }
        for k in (0..t.nodes.len()).rev() {
            let (lo, hi) = (t.nodes[k].lo, t.nodes[k].hi);
            let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
            for p in lo..hi {
                for (s, bb) in bbox.iter_mut().enumerate() {
                    let x = t.coords[p * d + s];
                    bb.0 = bb.0.min(x);
                    bb.1 = bb.1.max(x);
                }
            }
            t.nodes[k].bbox = bbox;
            if t.nodes[k].children.is_none() {
                for p in lo..hi {
                    t.leaf_of[p] = k;
                }
            }
            t.refresh(k);
        }
        t
    }

    fn split(&mut self, entries: &[(u32, Vec<f64>, W)], order: &mut [usize], lo: usize, hi: usize, parent: usize) -> usize {
        let k = self.nodes.len();
        self.nodes.push(KdNode { lo, hi, children: None, parent, min_w: W::INF, bbox: Vec::new() });
        if hi - lo > LEAF {
            let slice = &mut order[lo..hi];
            let mut axis = 0;
            let mut spread = f64::NEG_INFINITY;
            for s in 0..self.d {
                let (mn, mx) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &e| {
                    (mn.min(entries[e].1[s]), mx.max(entries[e].1[s]))
                });
                if mx - mn > spread {
                    spread = mx - mn;
                    axis = s;
                }
            }
            let mid = (hi - lo) / 2;
            slice.select_nth_unstable_by(mid, |&x, &y| entries[x].1[axis].total_cmp(&entries[y].1[axis]).then(x.cmp(&y)));
            let l = self.split(entries, order, lo, lo + mid, k);
            let r = self.split(entries, order, lo + mid, hi, k);
            self.nodes[k].children = Some((l, r));
        }
        k
    }

    fn refresh(&mut self, k: usize) {
        let m = match self.nodes[k].children {
            Some((l, r)) => self.nodes[l].min_w.wmin(self.nodes[r].min_w),
            None => (self.nodes[k].lo..self.nodes[k].hi)
                .filter(|&p| self.live[p])
                .map(|p| self.weights[p])
                .fold(W::INF, |acc, w| acc.wmin(w)),
        };
        self.nodes[k].min_w = m;
    }

    #[inline]
    fn bbox_lower_bound(&self, k: usize, q: &[f64]) -> W {
        W::floor_f64(self.model.distance_to_box(q, &self.nodes[k].bbox))
    }
}

impl<W: Weight> WeightedNnIndex<W> for KdTree<W> {
    fn insert(&mut self, id: u32, point: &[f64], w: W) {
        self.remove(id);
        self.buffer.insert(id, point, w);
        self.n_live += 1;
        if self.buffer.len() > 32 && self.buffer.len() * self.buffer.len() > self.ids.len() {
            let mut entries: Vec<(u32, Vec<f64>, W)> = Vec::with_capacity(self.n_live);
            for p in 0..self.ids.len() {
                if self.live[p] {
                    entries.push((self.ids[p], self.coords[p * self.d..(p + 1) * self.d].to_vec(), self.weights[p]));
                }
            }
            for s in 0..self.buffer.ids.len() {
                entries.push((self.buffer.ids[s], self.buffer.coords[s * self.d..(s + 1) * self.d].to_vec(), self.buffer.weights[s]));
            }
            *self = KdTree::build(self.d, self.model, entries);
        }
    }

    fn remove(&mut self, id: u32) -> bool {
        if self.buffer.remove(id) {
            self.n_live -= 1;
            return true;
        }
        let Some(&p) = self.pos_of.get(&id) else { return false };
        if !self.live[p] {
            return false;
        }
        self.live[p] = false;
        self.n_live -= 1;
        let mut k = self.leaf_of[p];
        loop {
            let before = self.nodes[k].min_w;
            self.refresh(k);
            if self.nodes[k].min_w == before && self.nodes[k].children.is_some() {
                break;
            }
            if self.nodes[k].parent == usize::MAX {
                break;
            }
            k = self.nodes[k].parent;
        }
        true
    }

    fn query(&self, q: &[f64]) -> Option<(u32, W)> {
        let mut best = self.buffer.query(q);
        if self.nodes.is_empty() || self.nodes[0].min_w.is_inf() {
            return best;
        }
        let mut stack: Vec<(W, usize)> = vec![(self.nodes[0].min_w + self.bbox_lower_bound(0, q), 0)];
        while let Some((lb, k)) = stack.pop() {
            if let Some((_, bv)) = best {
                if lb.total_cmp(&bv).is_gt() {
                    continue;
                }
            }
            let node = &self.nodes[k];
            match node.children {
                None => {
                    for p in node.lo..node.hi {
                        if !self.live[p] {
                            continue;
                        }
                        let v = self.weights[p] + W::edge_cost(&self.model, &self.coords[p * self.d..(p + 1) * self.d], q);
                        if better(v, self.ids[p], &best) {
                            best = Some((self.ids[p], v));
                        }
                    }
                }
                Some((l, r)) => {
                    let mut kids = Vec::with_capacity(2);
                    for c in [l, r] {
                        if !self.nodes[c].min_w.is_inf() {
                            kids.push((self.nodes[c].min_w + self.bbox_lower_bound(c, q), c));
                        }
                    }
                    // push the farther child first so the nearer one is explored first
                    kids.sort_by(|x, y| y.0.total_cmp(&x.0));
                    stack.extend(kids);
                }
            }
        }
        best
    }

    fn len(&self) -> usize {
        self.n_live
    }
}

/// Backend-erased index used by the clique engine.
pub enum NnIndex<W> {
    Linear(LinearIndex<W>),
    Kd(KdTree<W>),
}

impl<W: Weight> NnIndex<W> {
    pub fn build(backend: NnBackend, d: usize, model: CostModel, entries: Vec<(u32, Vec<f64>, W)>) -> Self {
        match backend {
            NnBackend::Linear => {
                let mut l = LinearIndex::new(d, model);
                for (id, p, w) in entries {
                    l.insert(id, &p, w);
                }
                NnIndex::Linear(l)
            }
            NnBackend::KdTree => NnIndex::Kd(KdTree::build(d, model, entries)),
        }
    }
}

impl<W: Weight> WeightedNnIndex<W> for NnIndex<W> {
    fn insert(&mut self, id: u32, point: &[f64], w: W) {
        match self {
            NnIndex::Linear(x) => x.insert(id, point, w),
            NnIndex::Kd(x) => x.insert(id, point, w),
        }
    }
    fn remove(&mut self, id: u32) -> bool {
        match self {
            NnIndex::Linear(x) => x.remove(id),
            NnIndex::Kd(x) => x.remove(id),
        }
    }
    fn query(&self, q: &[f64]) -> Option<(u32, W)> {
        match self {
            NnIndex::Linear(x) => x.query(q),
            NnIndex::Kd(x) => x.query(q),
        }
    }
    fn len(&self) -> usize {
        match self {
            NnIndex::Linear(x) => x.len(),
            NnIndex::Kd(x) => x.len(),
        }
    }
}
