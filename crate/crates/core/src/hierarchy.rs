//! Hierarchical partitioning into axis-parallel cells. Each non-leaf cell is
//! split along its longest side at the middle-third coordinate whose λ-strip
//! holds the fewest gates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CostModel;
use crate::reduction::{EdgeRule, GateGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Ksp,
    Grs,
}

/// Default strip parameter before the clamp to 1/3.
pub fn default_lambda_raw(n: usize, d: usize, mode: LambdaMode) -> f64 {
    let n = n.max(1) as f64;
    let e = match mode {
        LambdaMode::Ksp => 1.0 / (2.0 * d as f64 + 1.0),
        LambdaMode::Grs => 1.0 / (d as f64 + 2.0),
    };
    9.0 * n.powf(-e)
}

pub fn default_lambda(n: usize, d: usize, mode: LambdaMode) -> f64 {
    default_lambda_raw(n, d, mode).min(1.0 / 3.0)
}

/// Co-located gates that always travel together.
#[derive(Clone, Debug)]
pub struct Site {
    pub loc: Vec<f64>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl Site {
    fn gates(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub id: usize,
    pub bounds: Vec<(f64, f64)>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub divider: Option<(usize, f64)>,
    pub depth: usize,
    /// Gates inside, sorted by (rank, index).
    #[serde(skip)]
    pub a_ids: Vec<usize>,
    #[serde(skip)]
    pub b_ids: Vec<usize>,
    pub sites: usize,
    /// |Λ(x*)| counted in gates, for non-leaf cells.
    pub strip_gates: usize,
}

impl Cell {
    pub fn n_gates(&self) -> usize {
        self.a_ids.len() + self.b_ids.len()
    }
    pub fn side(&self, t: usize) -> f64 {
        self.bounds[t].1 - self.bounds[t].0
    }
    pub fn longest_side(&self) -> f64 {
        (0..self.bounds.len()).map(|t| self.side(t)).fold(0.0, f64::max)
    }
    pub fn shortest_side(&self) -> f64 {
        (0..self.bounds.len()).map(|t| self.side(t)).fold(f64::INFINITY, f64::min)
    }
    pub fn perimeter(&self) -> f64 {
        (0..self.bounds.len()).map(|t| self.side(t)).sum()
    }
    pub fn aspect_ratio(&self) -> f64 {
        self.longest_side() / self.shortest_side()
    }
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.bounds).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

/// Nearest-face gap raised to q; independent of p for axis-parallel cells.
pub fn boundary_distance(u: &[f64], bounds: &[(f64, f64)], model: &CostModel) -> Result<f64> {
    if u.len() != bounds.len() {
        return Err(Error::Contract("point and cell dimensions differ".into()));
    }
    let mut gap = f64::INFINITY;
    for (x, (lo, hi)) in u.iter().zip(bounds) {
        if x < lo || x > hi {
            return Err(Error::Contract(format!("point coordinate {x} outside cell side [{lo}, {hi}]")));
        }
        gap = gap.min(x - lo).min(hi - x);
    }
    Ok(model.raise(gap))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct HierarchyAudit {
    pub cells: usize,
    pub height: usize,
    pub max_aspect_ratio: f64,
    pub aspect_violations: usize,
    pub margin_violations: usize,
    /// max over non-leaf cells of |Λ(x*)| / (9λ n_□).
    pub max_margin_ratio: f64,
    pub partition_violations: usize,
}

impl HierarchyAudit {
    pub fn ok(&self) -> bool {
        self.aspect_violations == 0 && self.margin_violations == 0 && self.partition_violations == 0
    }
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub cells: Vec<Cell>,
    pub root: usize,
    pub lambda: f64,
    pub d: usize,
    pub leaf_of_a: Vec<usize>,
    pub leaf_of_b: Vec<usize>,
    /// Site coordinates per gate, used by audits.
    a_coord: Vec<Vec<f64>>,
    b_coord: Vec<Vec<f64>>,
}

const MAX_DEPTH: usize = 4000;

impl Hierarchy {
    /// Root half-width for points in [0,1]^d: large enough that no boundary
    /// match can be cheaper than any in-graph path at the root.
    pub fn root_half_width(n_a: usize, n_b: usize, d: usize) -> f64 {
        3.0 * (n_a.max(n_b).max(1) * d) as f64 + 1.0
    }

    /// Sites from a gate graph: gates at identical coordinates are grouped;
    /// two entry gates (or two request exit gates) at one location are rejected.
    pub fn sites_for_graph(g: &GateGraph) -> Result<Vec<Site>> {
        let mut gates: Vec<(Vec<f64>, bool, usize)> = Vec::with_capacity(g.n_a() + g.n_b());
        for a in 0..g.n_a() {
            gates.push((g.a_point(a).to_vec(), true, a));
        }
        for b in 0..g.n_b() {
            gates.push((g.b_point(b).to_vec(), false, b));
        }
        let lex = |x: &[f64], y: &[f64]| {
            x.iter().zip(y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        };
        gates.sort_by(|x, y| lex(&x.0, &y.0).then(y.1.cmp(&x.1)).then(x.2.cmp(&y.2)));
        let mut sites: Vec<Site> = Vec::new();
        let mut i = 0;
        while i < gates.len() {
            let mut site = Site { loc: gates[i].0.clone(), a: Vec::new(), b: Vec::new() };
            let mut j = i;
            while j < gates.len() && lex(&gates[j].0, &site.loc).is_eq() {
                if gates[j].1 {
                    site.a.push(gates[j].2);
                } else {
                    site.b.push(gates[j].2);
                }
                j += 1;
            }
            let req_a: Vec<usize> = site.a.iter().copied().filter(|&a| !g.is_server(a)).collect();
            if site.b.len() > 1 {
                return Err(Error::DuplicateLocation(site.b[0], site.b[1]));
            }
            if req_a.len() > 1 {
                return Err(Error::DuplicateLocation(req_a[0], req_a[1]));
            }
            if g.rule == EdgeRule::Sequence && req_a.len() == 1 && site.b.len() == 1 && req_a[0] != site.b[0] {
                return Err(Error::DuplicateLocation(req_a[0], site.b[0]));
            }
            sites.push(site);
            i = j;
        }
        Ok(sites)
    }

    pub fn for_graph(g: &GateGraph, lambda: f64) -> Result<Self> {
        let sites = Hierarchy::sites_for_graph(g)?;
        let r = Hierarchy::root_half_width(g.n_a(), g.n_b(), g.d);
        let root = vec![(-r, r); g.d];
        Hierarchy::build(g, &sites, root, lambda)
    }

    /// Builds the tree over `sites` inside `root_bounds`.
    pub fn build(g: &GateGraph, sites: &[Site], root_bounds: Vec<(f64, f64)>, lambda: f64) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Input("hierarchy needs at least one point".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::Input(format!("lambda must be positive, got {lambda}")));
        }
        let d = root_bounds.len();
        let mut h = Hierarchy {
            cells: Vec::new(),
            root: 0,
            lambda,
            d,
            leaf_of_a: vec![usize::MAX; g.n_a()],
            leaf_of_b: vec![usize::MAX; g.n_b()],
            a_coord: vec![Vec::new(); g.n_a()],
            b_coord: vec![Vec::new(); g.n_b()],
        };
        for s in sites {
            for &a in &s.a {
                h.a_coord[a] = s.loc.clone();
            }
            for &b in &s.b {
                h.b_coord[b] = s.loc.clone();
            }
        }
        let all: Vec<usize> = (0..sites.len()).collect();
        if let Some(i) = all.iter().find(|&&i| !sites[i].loc.iter().zip(&root_bounds).all(|(x, (lo, hi))| x >= lo && x <= hi)) {
            return Err(Error::Contract(format!("site {i} outside the root cell")));
        }
        let mut stack = vec![(h.push_cell(g, sites, &all, root_bounds, None, 0), all)];
        while let Some((id, members)) = stack.pop() {
            if members.len() <= 1 {
                continue;
            }
            if h.cells[id].depth >= MAX_DEPTH {
                return Err(Error::Input("hierarchy depth limit reached: sites are too close together".into()));
            }
            let (axis, x, strip) = choose_divider_sites(&h.cells[id].bounds, sites, &members, lambda);
            h.cells[id].divider = Some((axis, x));
            h.cells[id].strip_gates = strip;
            let (lower, upper): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&s| sites[s].loc[axis] <= x);
            let depth = h.cells[id].depth + 1;
            let mut lb = h.cells[id].bounds.clone();
            let mut ub = lb.clone();
            lb[axis].1 = x;
            ub[axis].0 = x;
            for (part, bounds) in [(lower, lb), (upper, ub)] {
                if part.is_empty() {
                    continue;
                }
                let c = h.push_cell(g, sites, &part, bounds, Some(id), depth);
                h.cells[id].children.push(c);
                stack.push((c, part));
            }
        }
        for c in &h.cells {
            if c.is_leaf() {
                for &a in &c.a_ids {
                    h.leaf_of_a[a] = c.id;
                }
                for &b in &c.b_ids {
                    h.leaf_of_b[b] = c.id;
                }
            }
        }
        Ok(h)
    }

    fn push_cell(
        &mut self,
        g: &GateGraph,
        sites: &[Site],
        members: &[usize],
        bounds: Vec<(f64, f64)>,
        parent: Option<usize>,
        depth: usize,
    ) -> usize {
        let mut a_ids: Vec<usize> = members.iter().flat_map(|&s| sites[s].a.iter().copied()).collect();
        let mut b_ids: Vec<usize> = members.iter().flat_map(|&s| sites[s].b.iter().copied()).collect();
        a_ids.sort_unstable_by_key(|&a| (g.a_rank(a), a));
        b_ids.sort_unstable_by_key(|&b| (g.b_rank(b), b));
        let id = self.cells.len();
        self.cells.push(Cell {
            id,
            bounds,
            parent,
            children: Vec::new(),
            divider: None,
            depth,
            a_ids,
            b_ids,
            sites: members.len(),
            strip_gates: 0,
        });
        id
    }

    pub fn height(&self) -> usize {
        self.cells.iter().map(|c| c.depth).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.is_leaf())
    }

    /// Gates within ℓ_□λ of the divider, recounted from coordinates.
    pub fn strip_count(&self, cell: &Cell) -> Option<usize> {
        let (axis, x) = cell.divider?;
        let h = cell.longest_side() * self.lambda;
        let near = |c: &Vec<f64>| (c[axis] - x).abs() <= h;
        Some(
            cell.a_ids.iter().filter(|&&a| near(&self.a_coord[a])).count()
                + cell.b_ids.iter().filter(|&&b| near(&self.b_coord[b])).count(),
        )
    }

    pub fn audit(&self) -> HierarchyAudit {
        let mut r = HierarchyAudit { cells: self.cells.len(), height: self.height(), ..Default::default() };
        for c in &self.cells {
            let ar = c.aspect_ratio();
            r.max_aspect_ratio = r.max_aspect_ratio.max(ar);
            if ar > 3.0 * (1.0 + 1e-12) {
                r.aspect_violations += 1;
            }
            if let Some(strip) = self.strip_count(c) {
                let bound = 9.0 * self.lambda * c.n_gates() as f64;
                r.max_margin_ratio = r.max_margin_ratio.max(strip as f64 / bound);
                if strip as f64 > bound {
                    r.margin_violations += 1;
                }
                let (axis, x) = c.divider.unwrap();
                let mut a_union: Vec<usize> = Vec::new();
                let mut b_union: Vec<usize> = Vec::new();
                for &ch in &c.children {
                    let child = &self.cells[ch];
                    a_union.extend(&child.a_ids);
                    b_union.extend(&child.b_ids);
                    for t in 0..self.d {
                        let (lo, hi) = child.bounds[t];
                        let (plo, phi) = c.bounds[t];
                        let ok = if t == axis {
                            (lo == plo && hi == x) || (lo == x && hi == phi)
                        } else {
                            lo == plo && hi == phi
                        };
                        if !ok {
                            r.partition_violations += 1;
                        }
                    }
                    if !child.a_ids.iter().all(|&a| child.contains(&self.a_coord[a]))
                        || !child.b_ids.iter().all(|&b| child.contains(&self.b_coord[b]))
                    {
                        r.partition_violations += 1;
                    }
                }
                a_union.sort_unstable();
                b_union.sort_unstable();
                let mut a_own = c.a_ids.clone();
                let mut b_own = c.b_ids.clone();
                a_own.sort_unstable();
                b_own.sort_unstable();
                if a_union != a_own || b_union != b_own {
                    r.partition_violations += 1;
                }
            }
        }
        r
    }

    /// JSON debug dump: bounds, divider and counts per cell.
    pub fn dump(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda": self.lambda,
            "root": self.root,
            "height": self.height(),
            "cells": self.cells.iter().map(|c| serde_json::json!({
                "id": c.id,
                "parent": c.parent,
                "children": c.children,
                "bounds": c.bounds,
                "divider": c.divider,
                "n_a": c.a_ids.len(),
                "n_b": c.b_ids.len(),
                "strip_gates": c.strip_gates,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Divider of a cell holding `members`: (axis, x*, |Λ(x*)| in gates).
pub fn choose_divider_sites(bounds: &[(f64, f64)], sites: &[Site], members: &[usize], lambda: f64) -> (usize, f64, usize) {
    let mut axis = 0;
    for t in 1..bounds.len() {
        if bounds[t].1 - bounds[t].0 > bounds[axis].1 - bounds[axis].0 {
            axis = t;
        }
    }
    let (lo, hi) = bounds[axis];
    let len = hi - lo;
    let (from, to) = (lo + len / 3.0, lo + 2.0 * len / 3.0);
    let h = len * lambda;
    let mut pts: Vec<(f64, usize)> = members.iter().map(|&s| (sites[s].loc[axis], sites[s].gates())).collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let coords: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut prefix = vec![0usize; pts.len() + 1];
    for (i, p) in pts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + p.1;
    }
    let count = |x: f64| {
        let l = coords.partition_point(|&u| u < x - h);
        let r = coords.partition_point(|&u| u <= x + h);
        prefix[r] - prefix[l]
    };
    let mut cand = vec![from, to];
    for &u in &coords {
        for e in [u - h, u + h] {
            if e > from && e < to {
                cand.push(e);
            }
        }
    }
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    let mids: Vec<f64> = cand.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    cand.extend(mids);
    cand.sort_by(f64::total_cmp);
    let mut best = (usize::MAX, f64::INFINITY);
    for &x in &cand {
        let c = count(x);
        if c < best.0 {
            best = (c, x);
        }
    }
    let x = best.1;
    let exact = pts.iter().filter(|p| (p.0 - x).abs() <= h).map(|p| p.1).sum();
    (axis, x, exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, GenKind, KspInstance};

    fn graph(pts: Vec<Vec<f64>>) -> GateGraph {
        GateGraph::ksp(&KspInstance { d: pts[0].len(), model: CostModel::l2(), requests: pts, k: 1 })
    }

    #[test]
    fn lambda_examples() {
        assert!((default_lambda_raw(1024, 2, LambdaMode::Ksp) - 2.25).abs() < 1e-12);
        assert_eq!(default_lambda(1024, 2, LambdaMode::Ksp), 1.0 / 3.0);
        assert!((default_lambda(10usize.pow(10), 2, LambdaMode::Ksp) - 0.09).abs() < 1e-12);
        assert!((default_lambda_raw(256, 2, LambdaMode::Grs) - 2.25).abs() < 1e-12);
        assert_eq!(default_lambda(256, 2, LambdaMode::Grs), 1.0 / 3.0);
    }

    #[test]
    fn boundary_distance_examples() {
        let unit = vec![(0.0, 1.0), (0.0, 1.0)];
        assert_eq!(boundary_distance(&[0.5, 0.5], &unit, &CostModel::l1()).unwrap(), 0.5);
        assert_eq!(boundary_distance(&[0.0, 0.3], &unit, &CostModel::l1()).unwrap(), 0.0);
        let v = boundary_distance(&[0.1, 0.4], &unit, &CostModel::l2_pow(2.0)).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        assert!(boundary_distance(&[1.5, 0.4], &unit, &CostModel::l1()).is_err());
    }

    #[test]
    fn single_request_is_leaf() {
        let g = graph(vec![vec![0.3, 0.3]]);
        let h = Hierarchy::for_graph(&g, 1.0 / 3.0).unwrap();
        assert_eq!(h.cells.len(), 1);
        assert!(h.cells[0].is_leaf());
        assert_eq!(h.cells[0].n_gates(), 2);
    }

    #[test]
    fn two_requests_separate() {
        let g = graph(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        let h = Hierarchy::for_graph(&g, 1.0 / 3.0).unwrap();
        let leaves: Vec<&Cell> = h.leaves().collect();
        assert_eq!(leaves.len(), 2);
        for l in leaves {
            assert_eq!(l.a_ids.len(), 1);
            assert_eq!(l.a_ids, l.b_ids);
        }
        // the split separating them is the only two-child cell
        assert_eq!(h.cells.iter().filter(|c| c.children.len() == 2).count(), 1);
        assert!(h.audit().ok());
    }

    #[test]
    fn duplicate_requests_rejected() {
        let g = graph(vec![vec![0.2, 0.2], vec![0.5, 0.5], vec![0.2, 0.2]]);
        assert!(matches!(Hierarchy::for_graph(&g, 0.3), Err(Error::DuplicateLocation(0, 2))));
    }

    #[test]
    fn empty_middle_strip_gives_zero() {
        let pts = vec![vec![0.01, 0.5], vec![0.02, 0.5], vec![0.98, 0.5], vec![0.99, 0.5]];
        let sites: Vec<Site> = pts.iter().enumerate().map(|(i, p)| Site { loc: p.clone(), a: vec![i], b: vec![i] }).collect();
        let (axis, x, strip) = choose_divider_sites(&[(0.0, 3.0), (0.0, 1.0)], &sites, &[0, 1, 2, 3], 0.1);
        assert_eq!((axis, strip), (0, 0));
        // strip around x must clear 0.99 + 0.3
        assert!(x > 1.29 && x <= 2.0);
        let (axis, _, _) = choose_divider_sites(&[(0.0, 1.0), (0.0, 1.0)], &sites, &[0, 1, 2, 3], 0.1);
        assert_eq!(axis, 0);
    }

    #[test]
    fn divider_is_minimal_over_events() {
        let inst = generate(GenKind::Uniform, 200, 2, 1, 9);
        let sites: Vec<Site> = inst.requests.iter().enumerate().map(|(i, p)| Site { loc: p.clone(), a: vec![i], b: vec![i] }).collect();
        let members: Vec<usize> = (0..200).collect();
        let bounds = vec![(0.0, 1.0), (0.0, 1.0)];
        for lambda in [0.01, 0.05, 1.0 / 3.0] {
            let (axis, x, strip) = choose_divider_sites(&bounds, &sites, &members, lambda);
            let h = lambda;
            let count = |y: f64| inst.requests.iter().filter(|p| (p[axis] - y).abs() <= h).count() * 2;
            assert_eq!(count(x), strip);
            let mut probes: Vec<f64> = inst.requests.iter().flat_map(|p| [p[axis] - h, p[axis] + h]).collect();
            probes.extend((0..=1000).map(|i| i as f64 / 1000.0));
            for y in probes.into_iter().filter(|y| (1.0 / 3.0..=2.0 / 3.0).contains(y)) {
                assert!(strip <= count(y), "lambda {lambda}: {strip} > {} at {y}", count(y));
            }
            assert!(strip as f64 <= 9.0 * lambda * 400.0);
        }
    }

    #[test]
    fn random_tree_audit() {
        for seed in 0..5 {
            let inst = generate(GenKind::Uniform, 64, 2, 1, seed);
            let g = GateGraph::ksp(&inst);
            for lambda in [default_lambda(64, 2, LambdaMode::Ksp), 0.05] {
                let h = Hierarchy::for_graph(&g, lambda).unwrap();
                let a = h.audit();
                assert!(a.ok(), "{a:?}");
                assert!(h.leaves().all(|c| c.sites == 1));
            }
        }
    }

    #[test]
    fn deterministic_build() {
        let g = GateGraph::ksp(&generate(GenKind::Clustered, 100, 3, 1, 4));
        let h1 = Hierarchy::for_graph(&g, 0.2).unwrap();
        let h2 = Hierarchy::for_graph(&g, 0.2).unwrap();
        assert_eq!(h1.dump(), h2.dump());
    }
}
