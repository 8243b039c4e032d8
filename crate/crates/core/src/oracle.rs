//! Ground truth at desk scale: exhaustive partition enumeration, an
//! explicit-edge successive-shortest-path matcher, exhaustive matching
//! enumeration, Bellman–Ford labels and dual certificate checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Instance, KspInstance, KspiInstance};
use crate::hierarchy::boundary_distance;
use crate::matching_state::{
    audit_cells, audit_extended, audit_free_b_max, audit_plain, AuditMode, AuditReport, ExtendedParts, StateFile,
};
use crate::reduction::{partitioning_to_matching, GateGraph, Matching, Partitioning};
use crate::search::{Direction, Gate, ResidualView};
use crate::weight::Weight;

pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Enumeration,
    ExplicitHungarian,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub cost: f64,
    pub method: OracleMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partitioning: Option<Partitioning>,
    pub pairs: Vec<[usize; 2]>,
}

/// Σ_{j ≤ k} S(n, j): the number of ways to split n ordered requests into at
/// most k nonempty chains.
pub fn chain_assignment_count(n: usize, k: usize) -> f64 {
    let mut row = vec![0.0f64; k + 1];
    row[0] = 1.0;
    for _ in 0..n {
        for j in (1..=k).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[1..].iter().sum()
}

/// Exhaustive k-SP: requests are assigned in order to chains in
/// restricted-growth form (chain labels are interchangeable), exactly k chains
/// nonempty, with branch and bound on the running cost.
pub fn brute_force_ksp(inst: &KspInstance) -> Result<OracleResult> {
    inst.validate()?;
    let (n, k) = (inst.n(), inst.k);
    let count = chain_assignment_count(n, k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::Guard(format!("{count:.3e} chain assignments exceed the enumeration limit")));
    }
    let d: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| inst.model.distance(&inst.requests[i], &inst.requests[j])).collect()).collect();
    struct Ctx<'a> {
        d: &'a [Vec<f64>],
        n: usize,
        k: usize,
        last: Vec<usize>,
        label: Vec<usize>,
        best: f64,
        best_label: Vec<usize>,
    }
    fn go(c: &mut Ctx, i: usize, used: usize, cost: f64) {
        if cost >= c.best {
            return;
        }
        if i == c.n {
            if used == c.k {
                c.best = cost;
                c.best_label = c.label.clone();
            }
            return;
        }
        if c.n - i < c.k - used {
            return;
        }
        for ch in 0..used {
            let prev = c.last[ch];
            c.last[ch] = i;
            c.label[i] = ch;
            go(c, i + 1, used, cost + c.d[prev][i]);
            c.last[ch] = prev;
        }
        if used < c.k {
            c.last[used] = i;
            c.label[i] = used;
            go(c, i + 1, used + 1, cost);
        }
    }
    let mut c = Ctx { d: &d, n, k, last: vec![0; k], label: vec![0; n], best: f64::INFINITY, best_label: Vec::new() };
    go(&mut c, 0, 0, 0.0);
    let mut subsequences = vec![Vec::new(); k];
    for (i, &ch) in c.best_label.iter().enumerate() {
        subsequences[ch].push(i);
    }
    let p = Partitioning { subsequences, servers: vec![None; k] };
    let g = GateGraph::ksp(inst);
    let m = partitioning_to_matching(&g, &p)?;
    Ok(OracleResult {
        cost: c.best,
        method: OracleMethod::Enumeration,
        pairs: m.pairs().into_iter().map(|(a, b)| [a, b]).collect(),
        partitioning: Some(p),
    })
}

/// Exhaustive k-SPI over labeled servers (chains may stay empty).
pub fn brute_force_kspi(inst: &KspiInstance) -> Result<OracleResult> {
    inst.validate()?;
    let b = &inst.base;
    let (n, k) = (b.n(), inst.servers.len());
    let count = (k as f64).powi(n as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::Guard(format!("{count:.3e} server assignments exceed the enumeration limit")));
    }
    // points 0..n requests, n..n+k servers
    let pts: Vec<&Vec<f64>> = b.requests.iter().chain(inst.servers.iter()).collect();
    let d: Vec<Vec<f64>> = (0..n + k).map(|i| (0..n).map(|j| b.model.distance(pts[i], pts[j])).collect()).collect();
    struct Ctx<'a> {
        d: &'a [Vec<f64>],
        n: usize,
        last: Vec<usize>,
        label: Vec<usize>,
        best: f64,
        best_label: Vec<usize>,
    }
    fn go(c: &mut Ctx, i: usize, cost: f64) {
        if cost >= c.best {
            return;
        }
        if i == c.n {
            c.best = cost;
            c.best_label = c.label.clone();
            return;
        }
        for s in 0..c.last.len() {
            let prev = c.last[s];
            c.last[s] = i;
            c.label[i] = s;
            go(c, i + 1, cost + c.d[prev][i]);
            c.last[s] = prev;
        }
    }
    let mut c = Ctx { d: &d, n, last: (n..n + k).collect(), label: vec![0; n], best: f64::INFINITY, best_label: Vec::new() };
    go(&mut c, 0, 0.0);
    let mut subsequences = vec![Vec::new(); k];
    for (i, &s) in c.best_label.iter().enumerate() {
        subsequences[s].push(i);
    }
    let p = Partitioning { subsequences, servers: (0..k).map(Some).collect() };
    let g = GateGraph::kspi(inst);
    let m = partitioning_to_matching(&g, &p)?;
    Ok(OracleResult {
        cost: c.best,
        method: OracleMethod::Enumeration,
        pairs: m.pairs().into_iter().map(|(a, b)| [a, b]).collect(),
        partitioning: Some(p),
    })
}

pub fn brute_force(inst: &Instance) -> Result<OracleResult> {
    match inst {
        Instance::Ksp(i) => brute_force_ksp(i),
        Instance::Kspi(i) => brute_force_kspi(i),
    }
}

/// Minimum-cost t-matching by successive shortest paths with potentials over
/// the materialized edge list. Node layout: B gates, A gates, then the sink.
pub fn hungarian_explicit<W: Weight>(g: &GateGraph, t: usize) -> Result<(W, Matching)> {
    let (na, nb) = (g.n_a(), g.n_b());
    if t > na.min(nb) {
        return Err(Error::Infeasible(format!("no {t}-matching with {na} exit and {nb} entry gates")));
    }
    let edges_of_b: Vec<Vec<(usize, W)>> =
        (0..nb).map(|b| (0..na).filter(|&a| g.has_edge(a, b)).map(|a| (a, g.cost::<W>(a, b))).collect()).collect();
    let mut m = Matching::for_graph(g);
    let sink = nb + na;
    let v = sink + 1;
    let mut pot = vec![W::ZERO; v];
    for _ in 0..t {
        let mut dist = vec![W::INF; v];
        let mut pred = vec![usize::MAX; v];
        let mut done = vec![false; v];
        for b in 0..nb {
            if m.mate_b[b].is_none() {
                dist[b] = -pot[b];
            }
        }
        loop {
            let mut u = usize::MAX;
            for x in 0..v {
                if !done[x] && !dist[x].is_inf() && (u == usize::MAX || dist[x].total_cmp(&dist[u]).is_lt()) {
                    u = x;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            let relax = |x: usize, c: W, dist: &mut Vec<W>, pred: &mut Vec<usize>| {
                let r = c + pot[u] - pot[x];
                let nd = dist[u] + r.wmax(W::ZERO);
                if !done[x] && nd.total_cmp(&dist[x]).is_lt() {
                    dist[x] = nd;
                    pred[x] = u;
                }
            };
            if u < nb {
                for &(a, c) in &edges_of_b[u] {
                    if m.mate_b[u] != Some(a) {
                        relax(nb + a, c, &mut dist, &mut pred);
                    }
                }
            } else {
                let a = u - nb;
                match m.mate_a[a] {
                    Some(b) => relax(b, -g.cost::<W>(a, b), &mut dist, &mut pred),
                    None => relax(sink, W::ZERO, &mut dist, &mut pred),
                }
            }
        }
        if dist[sink].is_inf() {
            return Err(Error::Infeasible(format!("no augmenting path after {} edges", m.len())));
        }
        let cap = dist[sink];
        for x in 0..v {
            let dx = if dist[x].is_inf() { cap } else { dist[x].wmin(cap) };
            pot[x] += dx;
        }
        let mut x = pred[sink];
        while x != usize::MAX {
            let a = x - nb;
            let b = pred[x];
            if let Some(old) = m.mate_b[b] {
                m.unlink(old, b);
            }
            m.link(a, b);
            x = pred[b];
        }
    }
    Ok((m.cost::<W>(g), m))
}

pub fn hungarian_result(g: &GateGraph, t: usize) -> Result<OracleResult> {
    let (cost, m) = hungarian_explicit::<f64>(g, t)?;
    Ok(OracleResult {
        cost,
        method: OracleMethod::ExplicitHungarian,
        partitioning: None,
        pairs: m.pairs().into_iter().map(|(a, b)| [a, b]).collect(),
    })
}

/// Minimum cost over all t-subsets of edges forming a matching.
pub fn enumerate_min_t_matching(g: &GateGraph, t: usize) -> Result<(f64, Vec<(usize, usize)>)> {
    let count: f64 = (0..g.n_b()).map(|_| (g.n_a() + 1) as f64).product();
    if count > ENUMERATION_LIMIT {
        return Err(Error::Guard("matching enumeration too large".into()));
    }
    fn go(g: &GateGraph, b: usize, t: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, cost: f64, best: &mut (f64, Vec<(usize, usize)>)) {
        if cur.len() == t {
            if cost < best.0 {
                *best = (cost, cur.clone());
            }
            return;
        }
        if b == g.n_b() || g.n_b() - b < t - cur.len() {
            return;
        }
        go(g, b + 1, t, used, cur, cost, best);
        for a in 0..g.n_a() {
            if !used[a] && g.has_edge(a, b) {
                used[a] = true;
                cur.push((a, b));
                go(g, b + 1, t, used, cur, cost + g.cost_f64(a, b), best);
                cur.pop();
                used[a] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    go(g, 0, t, &mut vec![false; g.n_a()], &mut Vec::new(), 0.0, &mut best);
    if best.0.is_infinite() {
        return Err(Error::Infeasible(format!("no {t}-matching exists")));
    }
    Ok(best)
}

/// Shortest-path labels over a residual view by Bellman–Ford relaxation
/// (local indexing, INF when unreachable).
pub fn bellman_ford<W: Weight>(view: &ResidualView<W>, seeds: &[(Gate, W)]) -> Result<(Vec<W>, Vec<W>)> {
    let (na, nb) = (view.a_ids.len(), view.b_ids.len());
    let mut la = vec![W::INF; na];
    let mut lb = vec![W::INF; nb];
    for &(gate, w) in seeds {
        match view.local(gate) {
            Some(Gate::A(i)) => la[i] = la[i].wmin(w),
            Some(Gate::B(j)) => lb[j] = lb[j].wmin(w),
            None => {}
        }
    }
    let mut arcs: Vec<(Gate, Gate, W)> = Vec::new();
    for (i, &a) in view.a_ids.iter().enumerate() {
        for (j, &b) in view.b_ids.iter().enumerate() {
            if !view.graph.has_edge(a, b) {
                continue;
            }
            let w = view.arc_weight(a, b)?;
            let matched = view.matching.mate_a[a] == Some(b);
            let forward_ba = matched == (view.direction == Direction::Reversed);
            if forward_ba {
                arcs.push((Gate::B(j), Gate::A(i), w));
            } else {
                arcs.push((Gate::A(i), Gate::B(j), w));
            }
        }
    }
    for _ in 0..=na + nb {
        let mut changed = false;
        for &(u, x, w) in &arcs {
            let lu = match u {
                Gate::A(i) => la[i],
                Gate::B(j) => lb[j],
            };
            if lu.is_inf() {
                continue;
            }
            let slot = match x {
                Gate::A(i) => &mut la[i],
                Gate::B(j) => &mut lb[j],
            };
            if (lu + w).total_cmp(slot).is_lt() {
                *slot = lu + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok((la, lb))
}

/// Random plain-feasible primal-dual state: random exit duals, entry duals at
/// their tightest admissible value, a greedy matching over tight edges, then
/// repair until free exit gates sit at zero.
pub fn random_feasible_state<W: Weight>(g: &GateGraph, seed: u64, max_dual: f64) -> (Matching, Vec<W>, Vec<W>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (na, nb) = (g.n_a(), g.n_b());
    let mut y_a: Vec<W> = (0..na).map(|_| W::floor_f64(rng.gen_range(0.0..=max_dual))).collect();
    let tight = |y_a: &[W], b: usize| -> Option<W> {
        (0..na).filter(|&a| g.has_edge(a, b)).map(|a| g.cost::<W>(a, b) + y_a[a]).reduce(|x, y| x.wmin(y))
    };
    let mut y_b: Vec<W> = (0..nb).map(|b| tight(&y_a, b).unwrap_or(W::floor_f64(rng.gen_range(0.0..=max_dual)))).collect();
    let mut m = Matching::for_graph(g);
    let mut order: Vec<usize> = (0..nb).collect();
    for i in (1..nb).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    for &b in &order {
        if rng.gen_bool(0.15) {
            continue;
        }
        let cand: Vec<usize> = (0..na)
            .filter(|&a| g.has_edge(a, b) && m.mate_a[a].is_none() && (g.cost::<W>(a, b) + y_a[a] - y_b[b]) == W::ZERO)
            .collect();
        if !cand.is_empty() {
            let a = cand[rng.gen_range(0..cand.len())];
            m.link(a, b);
        }
    }
    loop {
        let mut changed = false;
        for a in 0..na {
            if m.mate_a[a].is_none() && y_a[a] != W::ZERO {
                y_a[a] = W::ZERO;
                changed = true;
            }
        }
        for b in 0..nb {
            if let Some(t) = tight(&y_a, b) {
                if t.total_cmp(&y_b[b]).is_lt() {
                    y_b[b] = t.wmax(W::ZERO);
                    if let Some(a) = m.mate_b[b] {
                        if g.cost::<W>(a, b) + y_a[a] - y_b[b] != W::ZERO {
                            m.unlink(a, b);
                        }
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (m, y_a, y_b)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub valid: bool,
    pub mode: AuditMode,
    pub matching_size: usize,
    pub free_b: usize,
    /// w(M) recomputed from geometry (in the state's coordinates).
    pub matching_cost: f64,
    /// Σ_B y − Σ_A y − |B_F|·y_max.
    pub dual_value: f64,
    pub audit: AuditReport,
}

/// Dual-optimality certificate of a state against graph `g` (already in the
/// state's coordinates). Valid certificates prove M optimal at its size.
pub fn verify_certificate(g: &GateGraph, s: &StateFile, eps: f64) -> Result<CertificateReport> {
    if s.y_a.len() != g.n_a() || s.y_b.len() != g.n_b() {
        return Err(Error::Input("state duals do not fit the instance".into()));
    }
    let pairs: Vec<(usize, usize)> = s.pairs.iter().map(|p| (p[0], p[1])).collect();
    let m = Matching::from_pairs(g, &pairs)?;
    let active = s.active_a.as_deref();
    let mut audit = match s.mode {
        AuditMode::Plain => audit_plain(g, &m, &s.y_a, &s.y_b, active, eps),
        AuditMode::Extended => {
            let mut boundary = vec![false; g.n_b()];
            for &b in &s.boundary {
                *boundary.get_mut(b).ok_or_else(|| Error::Input(format!("boundary gate {b} out of range")))? = true;
            }
            if s.cell_of_a.len() != g.n_a() || s.cell_of_b.len() != g.n_b() {
                return Err(Error::Input("extended state needs a cell for every gate".into()));
            }
            let mut bd = vec![0.0; g.n_b()];
            for b in 0..g.n_b() {
                let c = s.cells.get(s.cell_of_b[b]).ok_or_else(|| Error::Input(format!("cell of b{b} missing")))?;
                bd[b] = boundary_distance(g.b_point(b), c, &g.model)?;
            }
            let parts = ExtendedParts {
                graph: g,
                matching: &m,
                boundary: &boundary,
                y_a: &s.y_a,
                y_b: &s.y_b,
                bd: &bd,
                cell_of_a: &s.cell_of_a,
                cell_of_b: &s.cell_of_b,
            };
            let mut r = audit_extended(&parts, eps);
            let mut cells = vec![(Vec::new(), Vec::new()); s.cells.len()];
            for (a, &c) in s.cell_of_a.iter().enumerate() {
                cells.get_mut(c).ok_or_else(|| Error::Input(format!("cell of a{a} missing")))?.0.push(a);
            }
            for (b, &c) in s.cell_of_b.iter().enumerate() {
                cells[c].1.push(b);
            }
            r.absorb(audit_cells(&cells, &m, &boundary, &s.y_a, &s.y_b, s.phi, eps));
            if !s.boundary.is_empty() {
                // boundary-matched gates make M an extended matching, not a certificate
                for &b in &s.boundary {
                    r.push(crate::matching_state::Condition::Structure, None, Some(b), 0.0);
                }
            }
            r
        }
    };
    audit.absorb(audit_free_b_max(&m, &s.y_b, eps));
    let ymax = s.y_b.iter().copied().fold(0.0, f64::max);
    let free_b = m.mate_b.iter().filter(|x| x.is_none()).count();
    let sum_a: f64 = (0..g.n_a()).filter(|&a| active.map_or(true, |v| v[a])).map(|a| s.y_a[a]).sum();
    let dual_value = s.y_b.iter().sum::<f64>() - sum_a - free_b as f64 * ymax;
    let matching_cost = m.cost_f64(g);
    Ok(CertificateReport {
        valid: audit.ok(),
        mode: s.mode,
        matching_size: m.len(),
        free_b,
        matching_cost,
        dual_value,
        audit,
    })
}

/// Free-standing check used by the CLI: state duals must also reproduce the
/// matching cost through the dual identity.
pub fn certificate_cost_gap(r: &CertificateReport) -> f64 {
    (r.matching_cost - r.dual_value).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_with, CostModel, GenKind, GenOptions, MatchingInstance};

    fn line(xs: &[f64], k: usize) -> KspInstance {
        KspInstance { d: 2, model: CostModel::l1(), requests: xs.iter().map(|&x| vec![x, 0.0]).collect(), k }
    }

    #[test]
    fn ksp_examples() {
        assert_eq!(brute_force_ksp(&line(&[3.0], 1)).unwrap().cost, 0.0);
        let r = brute_force_ksp(&line(&[0.0, 1.0, 2.0], 2)).unwrap();
        assert_eq!(r.cost, 1.0);
        assert_eq!(brute_force_ksp(&line(&[0.0, 1.0, 2.0], 1)).unwrap().cost, 2.0);
        assert_eq!(brute_force_ksp(&line(&[0.0, 1.0, 10.0, 11.0], 2)).unwrap().cost, 2.0);
    }

    #[test]
    fn chain_counts() {
        assert_eq!(chain_assignment_count(3, 2), 4.0);
        assert_eq!(chain_assignment_count(12, 12), 4213597.0);
        assert!(brute_force_ksp(&line(&(0..14).map(|i| i as f64).collect::<Vec<_>>(), 14)).is_err());
    }

    #[test]
    fn kspi_examples() {
        let base = line(&[0.0, 1.0], 2);
        let inst = KspiInstance { base: base.clone(), servers: vec![vec![0.0, 0.0], vec![1.0, 0.0]] };
        assert_eq!(brute_force_kspi(&inst).unwrap().cost, 0.0);
        let inst = KspiInstance { base: line(&[0.0, 1.0], 1), servers: vec![vec![5.0, 0.0]] };
        assert_eq!(brute_force_kspi(&inst).unwrap().cost, 6.0);
    }

    #[test]
    fn hungarian_examples() {
        let inst = MatchingInstance {
            d: 1,
            p: 1.0,
            q: 1.0,
            a: vec![vec![0.0], vec![3.0]],
            b: vec![vec![1.0], vec![2.0]],
        };
        let g = GateGraph::complete(&inst);
        assert_eq!(hungarian_explicit::<i64>(&g, 0).unwrap().0, 0);
        // costs [[1,2],[2,1]]
        assert_eq!(hungarian_explicit::<i64>(&g, 2).unwrap().0, 2);
        assert!(hungarian_explicit::<i64>(&g, 3).is_err());
    }

    #[test]
    fn hungarian_matches_enumeration() {
        for seed in 0..40 {
            let n = 2 + (seed as usize % 5);
            let mut o = GenOptions::new(GenKind::Uniform, n, 2, 1, seed);
            o.integer_grid = Some(16);
            o.model = CostModel::l1();
            let inst = generate_with(&o).unwrap();
            let g = GateGraph::build(&inst);
            for t in 0..n {
                let (c, m) = hungarian_explicit::<i64>(&g, t).unwrap();
                assert_eq!(m.len(), t);
                m.validate(&g).unwrap();
                let (e, _) = enumerate_min_t_matching(&g, t).unwrap();
                assert_eq!(c as f64, e, "seed {seed} t {t}");
            }
        }
    }

    #[test]
    fn brute_force_agrees_with_hungarian() {
        for seed in 0..60 {
            let n = 1 + (seed as usize % 9);
            let k = 1 + (seed as usize * 7) % n;
            let mut o = GenOptions::new(GenKind::Uniform, n, 2, k, seed);
            o.integer_grid = Some(16);
            o.model = CostModel::l1();
            let inst = generate_with(&o).unwrap();
            let g = GateGraph::build(&inst);
            let bf = brute_force(&inst).unwrap();
            let (h, _) = hungarian_explicit::<i64>(&g, n - k).unwrap();
            assert_eq!(bf.cost, h as f64, "seed {seed}");
        }
    }

    #[test]
    fn kspi_brute_force_agrees_with_hungarian() {
        for seed in 0..40 {
            let n = 1 + (seed as usize % 7);
            let k = 1 + (seed as usize) % n.min(3);
            let mut o = GenOptions::new(GenKind::Uniform, n, 2, k, seed);
            o.servers = true;
            let inst = generate_with(&o).unwrap();
            let g = GateGraph::build(&inst);
            let bf = brute_force(&inst).unwrap();
            let (h, _) = hungarian_explicit::<f64>(&g, n).unwrap();
            assert!((bf.cost - h).abs() <= 1e-9 * (1.0 + h), "seed {seed}");
        }
    }

    #[test]
    fn random_states_are_feasible() {
        for seed in 0..30 {
            let mut o = GenOptions::new(GenKind::Uniform, 12, 2, 1, seed);
            o.integer_grid = Some(16);
            o.model = CostModel::l1();
            let g = GateGraph::build(&generate_with(&o).unwrap());
            let (m, y_a, y_b) = random_feasible_state::<i64>(&g, seed, 20.0);
            let r = audit_plain(&g, &m, &y_a, &y_b, None, 0);
            assert!(r.ok(), "{r:?}");
        }
    }
}
