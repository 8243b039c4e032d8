//! Clique-decomposition engine. A balanced tree over the distinct gate ranks
//! of the view splits the edge set into bicliques: node v pairs the A-gates
//! ranked in its left half with the B-gates ranked in its right half, and
//! every edge lands in exactly one node. For each node, the side that can
//! still be reached (A in the forward view, B in the reversed one) lives in a
//! weighted NN index built on first use; settled gates on the other side query
//! it for their cheapest cut arc. One lazy heap holds the current best cut
//! arc per (settled gate, node); an entry whose target was settled meanwhile
//! is re-queried.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::nn::{NnBackend, NnIndex, WeightedNnIndex};
use super::{DijkstraResult, Direction, Gate, Objective, ResidualView, SearchSpec, SOURCE};
use crate::error::Result;
use crate::weight::{Ordered, Weight};

struct Node {
    lo: usize,
    mid: usize,
    hi: usize,
    left: usize,
    right: usize,
}

const NONE: usize = usize::MAX;

/// Balanced tree over rank positions `0..m`.
pub struct CliqueTree {
    nodes: Vec<Node>,
    /// Local A range [a_lo, a_mid) and local B range [b_mid, b_hi) per node.
    a_range: Vec<(usize, usize)>,
    b_range: Vec<(usize, usize)>,
    a_pos: Vec<usize>,
    b_pos: Vec<usize>,
}

impl CliqueTree {
    pub fn new(a_rank: &[i64], b_rank: &[i64]) -> Self {
        let mut ranks: Vec<i64> = a_rank.iter().chain(b_rank).copied().collect();
        ranks.sort_unstable();
        ranks.dedup();
        let pos = |r: i64| ranks.partition_point(|&x| x < r);
        let a_pos: Vec<usize> = a_rank.iter().map(|&r| pos(r)).collect();
        let b_pos: Vec<usize> = b_rank.iter().map(|&r| pos(r)).collect();
        let mut t = CliqueTree { nodes: Vec::new(), a_range: Vec::new(), b_range: Vec::new(), a_pos, b_pos };
        if ranks.len() >= 2 {
            t.build(0, ranks.len());
        }
        t
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let k = self.nodes.len();
        let mid = (lo + hi) / 2;
        self.nodes.push(Node { lo, mid, hi, left: NONE, right: NONE });
        let a = (self.a_pos.partition_point(|&p| p < lo), self.a_pos.partition_point(|&p| p < mid));
        let b = (self.b_pos.partition_point(|&p| p < mid), self.b_pos.partition_point(|&p| p < hi));
        self.a_range.push(a);
        self.b_range.push(b);
        if mid - lo >= 2 {
            let l = self.build(lo, mid);
            self.nodes[k].left = l;
        }
        if hi - mid >= 2 {
            let r = self.build(mid, hi);
            self.nodes[k].right = r;
        }
        k
    }

    /// Nodes whose clique contains the gate (A-side for A-gates, B-side for B-gates).
    pub fn memberships(&self, g: Gate, out: &mut Vec<usize>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let (p, is_a) = match g {
            Gate::A(i) => (self.a_pos[i], true),
            Gate::B(j) => (self.b_pos[j], false),
        };
        let mut k = 0;
        while k != NONE {
            let n = &self.nodes[k];
            debug_assert!(p >= n.lo && p < n.hi);
            if p < n.mid {
                if is_a {
                    out.push(k);
                }
                k = n.left;
            } else {
                if !is_a {
                    out.push(k);
                }
                k = n.right;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of (A, B) pairs over all cliques; equals the view's edge count.
    pub fn pair_count(&self) -> usize {
        (0..self.nodes.len())
            .map(|k| (self.a_range[k].1 - self.a_range[k].0) * (self.b_range[k].1 - self.b_range[k].0))
            .sum()
    }
}

pub fn dijkstra_bcp<W: Weight, O: Objective<W> + ?Sized>(
    view: &ResidualView<W>,
    spec: &SearchSpec<W>,
    obj: &mut O,
    backend: NnBackend,
) -> Result<DijkstraResult<W>> {
    let g = view.graph;
    let (na, nb) = (view.a_ids.len(), view.b_ids.len());
    let a_rank: Vec<i64> = view.a_ids.iter().map(|&a| g.a_rank(a)).collect();
    let b_rank: Vec<i64> = view.b_ids.iter().map(|&b| g.b_rank(b)).collect();
    let tree = CliqueTree::new(&a_rank, &b_rank);
    let forward = view.direction == Direction::Forward;

    let mut res = DijkstraResult::<W>::new(na, nb);
    let mut tent_a = vec![W::INF; na];
    let mut tent_b = vec![W::INF; nb];
    let mut done_a = vec![false; na];
    let mut done_b = vec![false; nb];
    let mut sparse: BinaryHeap<Reverse<(Ordered<W>, Gate)>> = BinaryHeap::new();
    // (value, target, settle order of source, source, node): equal-valued arcs
    // into one target resolve to the earliest-settled source, as in the explicit engine
    let mut cut: BinaryHeap<Reverse<(Ordered<W>, Gate, usize, Gate, usize)>> = BinaryHeap::new();
    let mut order_a = vec![0usize; na];
    let mut order_b = vec![0usize; nb];
    let order = |s: Gate, oa: &[usize], ob: &[usize]| match s {
        Gate::A(i) => oa[i],
        Gate::B(j) => ob[j],
    };
    let mut index: Vec<Option<NnIndex<W>>> = (0..tree.len()).map(|_| None).collect();
    let mut members = Vec::new();

    for &(gate, w) in &spec.seeds {
        let Some(l) = view.local(gate) else { continue };
        let slot = match l {
            Gate::A(i) => (&mut tent_a[i], &mut res.a_pred[i]),
            Gate::B(j) => (&mut tent_b[j], &mut res.b_pred[j]),
        };
        if w.total_cmp(slot.0).is_lt() {
            *slot.0 = w;
            *slot.1 = SOURCE;
            sparse.push(Reverse((Ordered(w), l)));
        }
    }

    let is_done = |l: Gate, da: &[bool], db: &[bool]| match l {
        Gate::A(i) => da[i],
        Gate::B(j) => db[j],
    };
    // cut arcs leave S-side gates (B forward, A reversed) toward T-side gates
    let is_source_side = |l: Gate| matches!((forward, l), (true, Gate::B(_)) | (false, Gate::A(_)));

    loop {
        while let Some(Reverse((Ordered(lab), l))) = sparse.peek().copied() {
            let tent = match l {
                Gate::A(i) => tent_a[i],
                Gate::B(j) => tent_b[j],
            };
            if is_done(l, &done_a, &done_b) || lab.total_cmp(&tent).is_gt() {
                sparse.pop();
            } else {
                break;
            }
        }
        // re-query stale cut entries whose target is already settled
        while let Some(Reverse((_, t, o, s, k))) = cut.peek().copied() {
            if !is_done(t, &done_a, &done_b) {
                break;
            }
            cut.pop();
            if let Some((v, t, s, k)) = query_node(view, &tree, &mut index, backend, k, s, &res, &done_a, &done_b, forward)? {
                res.nn_queries += 1;
                cut.push(Reverse((v, t, o, s, k)));
            }
        }
        let sp = sparse.peek().map(|Reverse((Ordered(v), l))| (*v, *l));
        let cp = cut.peek().map(|Reverse((Ordered(v), t, _, s, _))| (*v, *t, *s));
        let (lab, l, pred) = match (sp, cp) {
            (None, None) => break,
            (Some((v, l)), None) => (v, l, None),
            (None, Some((v, t, s))) => (v, t, Some(s)),
            (Some((v1, l1)), Some((v2, t, s))) => {
                if v2.total_cmp(&v1).then(t.cmp(&l1)).is_lt() {
                    (v2, t, Some(s))
                } else {
                    (v1, l1, None)
                }
            }
        };
        if spec.early {
            if let Some(lim) = res.limit(spec.bound) {
                if lab.total_cmp(&lim).is_gt() {
                    break;
                }
            }
        }
        let mut requery = None;
        match pred {
            None => {
                sparse.pop();
            }
            Some(s) => {
                if let Some(Reverse((_, _, o, _, k))) = cut.pop() {
                    requery = Some((o, s, k));
                }
                match (l, s) {
                    (Gate::A(i), Gate::B(j)) => res.a_pred[i] = j as u32,
                    (Gate::B(j), Gate::A(i)) => res.b_pred[j] = i as u32,
                    _ => unreachable!("cut arcs join opposite sides"),
                }
            }
        }
        res.settled += 1;
        match l {
            Gate::A(i) => {
                done_a[i] = true;
                res.a_label[i] = lab;
                order_a[i] = res.settled;
            }
            Gate::B(j) => {
                done_b[j] = true;
                res.b_label[j] = lab;
                order_b[j] = res.settled;
            }
        }
        res.offer(obj, view.global(l), lab);

        tree.memberships(l, &mut members);
        if is_source_side(l) {
            for &k in &members {
                if let Some((v, t, s, k)) = query_node(view, &tree, &mut index, backend, k, l, &res, &done_a, &done_b, forward)? {
                    res.nn_queries += 1;
                    cut.push(Reverse((v, t, order(s, &order_a, &order_b), s, k)));
                }
            }
        } else {
            for &k in &members {
                if let Some(ix) = index[k].as_mut() {
                    let slot = match l {
                        Gate::A(i) => i - tree.a_range[k].0,
                        Gate::B(j) => j - tree.b_range[k].0,
                    };
                    ix.remove(slot as u32);
                }
            }
            // the single matching arc out of a target-side gate
            match l {
                Gate::A(i) if forward => {
                    let a = view.a_ids[i];
                    if let Some(j) = view.matching.mate_a[a].and_then(|b| view.local_b(b)) {
                        res.arcs_scanned += 1;
                        let v = lab + view.matched_arc_weight(a, view.b_ids[j])?;
                        if !done_b[j] && v.total_cmp(&tent_b[j]).is_lt() {
                            tent_b[j] = v;
                            res.b_pred[j] = i as u32;
                            sparse.push(Reverse((Ordered(v), Gate::B(j))));
                        }
                    }
                }
                Gate::B(j) if !forward => {
                    let b = view.b_ids[j];
                    if let Some(i) = view.matching.mate_b[b].and_then(|a| view.local_a(a)) {
                        res.arcs_scanned += 1;
                        let v = lab + view.matched_arc_weight(view.a_ids[i], b)?;
                        if !done_a[i] && v.total_cmp(&tent_a[i]).is_lt() {
                            tent_a[i] = v;
                            res.a_pred[i] = j as u32;
                            sparse.push(Reverse((Ordered(v), Gate::A(i))));
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        // the source of a consumed cut arc moves on to its next target in that node
        if let Some((o, s, k)) = requery {
            if let Some((v, t, s, k)) = query_node(view, &tree, &mut index, backend, k, s, &res, &done_a, &done_b, forward)? {
                res.nn_queries += 1;
                cut.push(Reverse((v, t, o, s, k)));
            }
        }
    }
    Ok(res)
}

/// Cheapest cut arc from settled gate `s` into node k's unsettled target side.
#[allow(clippy::too_many_arguments)]
fn query_node<W: Weight>(
    view: &ResidualView<W>,
    tree: &CliqueTree,
    index: &mut [Option<NnIndex<W>>],
    backend: NnBackend,
    k: usize,
    s: Gate,
    res: &DijkstraResult<W>,
    done_a: &[bool],
    done_b: &[bool],
    forward: bool,
) -> Result<Option<(Ordered<W>, Gate, Gate, usize)>> {
    let g = view.graph;
    let ix = index[k].get_or_insert_with(|| {
        let entries: Vec<(u32, Vec<f64>, W)> = if forward {
            let (lo, hi) = tree.a_range[k];
            (lo..hi)
                .filter(|&i| !done_a[i])
                .map(|i| {
                    let a = view.a_ids[i];
                    ((i - lo) as u32, g.a_point(a).to_vec(), view.y_a[a])
                })
                .collect()
        } else {
            let (lo, hi) = tree.b_range[k];
            (lo..hi)
                .filter(|&j| !done_b[j])
                .map(|j| {
                    let b = view.b_ids[j];
                    ((j - lo) as u32, g.b_point(b).to_vec(), -view.y_b[b])
                })
                .collect()
        };
        NnIndex::build(backend, g.d, g.model, entries)
    });
    let (q, lab) = match s {
        Gate::A(i) => (g.a_point(view.a_ids[i]), res.a_label[i]),
        Gate::B(j) => (g.b_point(view.b_ids[j]), res.b_label[j]),
    };
    // the matching edge at s is not a residual arc in this direction
    let mate = match s {
        Gate::B(j) => view.matching.mate_b[view.b_ids[j]].and_then(|a| view.local_a(a)).and_then(|i| {
            let (lo, hi) = tree.a_range[k];
            (i >= lo && i < hi && !done_a[i]).then(|| (i - lo, g.a_point(view.a_ids[i]), view.y_a[view.a_ids[i]]))
        }),
        Gate::A(i) => view.matching.mate_a[view.a_ids[i]].and_then(|b| view.local_b(b)).and_then(|j| {
            let (lo, hi) = tree.b_range[k];
            (j >= lo && j < hi && !done_b[j]).then(|| (j - lo, g.b_point(view.b_ids[j]), -view.y_b[view.b_ids[j]]))
        }),
    };
    let hidden = mate.filter(|&(slot, _, _)| ix.remove(slot as u32));
    let found = ix.query(q);
    if let Some((slot, p, w)) = hidden {
        ix.insert(slot as u32, p, w);
    }
    let Some((slot, _)) = found else { return Ok(None) };
    let (a, b, t) = match s {
        Gate::B(j) => {
            let i = tree.a_range[k].0 + slot as usize;
            (view.a_ids[i], view.b_ids[j], Gate::A(i))
        }
        Gate::A(i) => {
            let j = tree.b_range[k].0 + slot as usize;
            (view.a_ids[i], view.b_ids[j], Gate::B(j))
        }
    };
    let v = lab + view.arc_weight(a, b)?;
    Ok(Some((Ordered(v), t, s, k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cliques_partition_edges() {
        for (ar, br) in [
            (vec![0i64, 1, 2, 3, 4, 5], vec![0i64, 1, 2, 3, 4, 5]),
            (vec![-1, -1, 0, 2, 5], vec![0, 1, 2, 3, 5, 7]),
            (vec![-1, -1, -1], vec![0, 0, 0, 0]),
            (vec![3], vec![3]),
        ] {
            let t = CliqueTree::new(&ar, &br);
            let edges = ar.iter().map(|&x| br.iter().filter(|&&y| x < y).count()).sum::<usize>();
            assert_eq!(t.pair_count(), edges);
            let mut mem = Vec::new();
            let depth = (((ar.len() + br.len()) as f64).log2().ceil() as usize) + 1;
            for i in 0..ar.len() {
                t.memberships(Gate::A(i), &mut mem);
                assert!(mem.len() <= depth);
                for &k in &mem {
                    assert!(i >= t.a_range[k].0 && i < t.a_range[k].1);
                }
            }
            for j in 0..br.len() {
                t.memberships(Gate::B(j), &mut mem);
                for &k in &mem {
                    assert!(j >= t.b_range[k].0 && j < t.b_range[k].1);
                }
            }
        }
    }

    #[test]
    fn matches_explicit_with_matched_seeds() {
        use crate::geometry::{generate, GenKind, KspInstance};
        use crate::reduction::GateGraph;
        use crate::search::{explicit::dijkstra_explicit, NoObjective, ResidualView, SearchSpec};
        for seed in 0..150u64 {
            let n = 3 + (seed % 9) as usize;
            let inst = generate(GenKind::Uniform, n, 2, 1, seed);
            let inst = KspInstance {
                requests: inst.requests.iter().map(|p| p.iter().map(|x| (x * 10.0).round()).collect()).collect(),
                ..inst
            };
            let g = GateGraph::ksp(&inst);
            let (m, ya, yb) = crate::oracle::random_feasible_state::<i64>(&g, seed, 20.0);
            let a_ids: Vec<usize> = (0..g.n_a()).collect();
            let b_ids: Vec<usize> = (0..g.n_b()).collect();
            for direction in [Direction::Forward, Direction::Reversed] {
                let view = ResidualView { graph: &g, a_ids: &a_ids, b_ids: &b_ids, direction, y_a: &ya, y_b: &yb, matching: &m, eps: 0 };
                let mut seeds: Vec<(Gate, i64)> = (0..g.n_b()).map(|b| (Gate::B(b), (b as i64 * 7 + seed as i64) % 5)).collect();
                if direction == Direction::Reversed {
                    seeds.extend((0..g.n_a()).step_by(3).map(|a| (Gate::A(a), 3)));
                }
                let spec = SearchSpec::exhaustive(seeds);
                let e = dijkstra_explicit(&view, &spec, &mut NoObjective).unwrap();
                for nn in [NnBackend::Linear, NnBackend::KdTree] {
                    let b = dijkstra_bcp(&view, &spec, &mut NoObjective, nn).unwrap();
                    assert_eq!((&e.a_label, &e.b_label), (&b.a_label, &b.b_label), "seed {seed} {direction:?}");
                    assert_eq!((&e.a_pred, &e.b_pred), (&b.a_pred, &b.b_pred), "pred seed {seed} {direction:?}");
                }
            }
        }
    }
}
