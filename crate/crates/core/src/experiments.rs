//! Randomly colored point sets, the grid witness matching, scaling sweeps and
//! CSV/JSON metric reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::error::{Error, Result};
use crate::geometry::{generate, CostModel, GenKind, MatchingInstance, Point};
use crate::oracle::hungarian_explicit;
use crate::reduction::{GateGraph, Matching};
use crate::subquadratic::{solve, Problem, SolverOptions, SolverTrace};

/// Uniform n-subset of `u` as A (seeded Fisher–Yates prefix), the rest as B.
pub fn random_color_split(u: &[Point], seed: u64) -> Result<(Vec<Point>, Vec<Point>)> {
    if u.len() % 2 != 0 {
        return Err(Error::Input(format!("color split needs an even number of points, got {}", u.len())));
    }
    let n = u.len() / 2;
    let mut idx: Vec<usize> = (0..u.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let a = idx[..n].iter().map(|&i| u[i].clone()).collect();
    let b = idx[n..].iter().map(|&i| u[i].clone()).collect();
    Ok((a, b))
}

pub fn uniform_points(m: usize, d: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrsMerge {
    pub cell: usize,
    pub depth: usize,
    pub n_b: usize,
    pub freed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrsRun {
    pub n: usize,
    pub d: usize,
    pub q: f64,
    pub seed: u64,
    /// Merges that freed at least one boundary-matched gate.
    pub merges: Vec<GrsMerge>,
    /// |B^C_□| / n_B(□) at the top-level merge.
    pub top_level_ratios: Vec<f64>,
    pub cost: f64,
    pub oracle_cost: Option<f64>,
    /// q < 2 lies outside the headline claim.
    pub outside_claim: bool,
    pub perfect: bool,
    pub dijkstra_runs: usize,
    pub searches: usize,
}

impl GrsRun {
    pub fn top_level_fraction(&self) -> Option<f64> {
        self.top_level_ratios.first().copied()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GrsOptions {
    pub solver: SolverOptions,
    /// Check against the explicit Hungarian oracle up to this n.
    pub oracle_limit: usize,
}

impl Default for GrsOptions {
    fn default() -> Self {
        GrsOptions { solver: SolverOptions::default(), oracle_limit: 64 }
    }
}

pub fn grs_instance(n: usize, d: usize, q: f64, seed: u64) -> Result<MatchingInstance> {
    if n == 0 || d == 0 {
        return Err(Error::Input("grs needs n >= 1 and d >= 1".into()));
    }
    let u = uniform_points(2 * n, d, seed);
    let (a, b) = random_color_split(&u, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let inst = MatchingInstance { d, p: 2.0, q, a, b };
    inst.validate()?;
    Ok(inst)
}

pub fn run_grs(n: usize, d: usize, q: f64, seed: u64, o: &GrsOptions) -> Result<GrsRun> {
    let inst = grs_instance(n, d, q, seed)?;
    let out = solve(Problem::Grs(&inst), &o.solver)?;
    let oracle_cost = if n <= o.oracle_limit {
        let g = GateGraph::complete(&inst);
        Some(hungarian_explicit::<f64>(&g, n)?.0)
    } else {
        None
    };
    let t = &out.trace;
    Ok(GrsRun {
        n,
        d,
        q,
        seed,
        merges: t
            .merge_records
            .iter()
            .filter(|r| r.freed > 0)
            .map(|r| GrsMerge { cell: r.cell, depth: r.depth, n_b: r.n_b, freed: r.freed })
            .collect(),
        top_level_ratios: t.merge_records.iter().filter(|r| r.top_level).map(|r| r.freed as f64 / r.n_b.max(1) as f64).collect(),
        cost: out.cost,
        oracle_cost,
        outside_claim: q < 2.0,
        perfect: out.matching.len() == n,
        dijkstra_runs: t.dijkstra_runs,
        searches: t.searches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessStats {
    pub grid_side: f64,
    pub squares: usize,
    pub unmatched: usize,
    pub matched_pairs: usize,
    pub cost: f64,
    pub bound: f64,
}

impl WitnessStats {
    pub fn ok(&self) -> bool {
        self.unmatched <= self.squares && self.cost <= self.bound * (1.0 + 1e-12)
    }
}

/// Grid witness: squares of side ℓ·n^(−e); requests inside one square are
/// chained in sequence order, leaving one unmatched entry gate per square.
/// `requests` are (sequence index, point) pairs; the matching is on gates
/// indexed by position in `requests`.
pub fn witness_matching(
    requests: &[(usize, Point)],
    origin: &[f64],
    side: f64,
    grid_exponent: f64,
    model: &CostModel,
) -> (Vec<(usize, usize)>, WitnessStats) {
    let n = requests.len().max(1);
    let h = side * (n as f64).powf(-grid_exponent);
    let mut squares: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (i, (_, p)) in requests.iter().enumerate() {
        let key = p.iter().zip(origin).map(|(x, o)| (((x - o) / h).floor() as i64).max(0)).collect();
        squares.entry(key).or_default().push(i);
    }
    let mut pairs = Vec::new();
    let mut cost = 0.0;
    for members in squares.values_mut() {
        members.sort_by_key(|&i| requests[i].0);
        for w in members.windows(2) {
            pairs.push((w[0], w[1]));
            cost += model.distance(&requests[w[0]].1, &requests[w[1]].1);
        }
    }
    let d = origin.len();
    let diagonal = model.distance(&vec![0.0; d], &vec![h; d]);
    let stats = WitnessStats {
        grid_side: h,
        squares: squares.len(),
        unmatched: requests.len() - pairs.len(),
        matched_pairs: pairs.len(),
        cost,
        bound: 2.0 * diagonal * pairs.len() as f64,
    };
    (pairs, stats)
}

/// Witness pairs as a matching on the k-SP gate graph of the same requests
/// (gate i = position i, ranks = sequence indices).
pub fn witness_as_matching(g: &GateGraph, pairs: &[(usize, usize)]) -> Result<Matching> {
    Matching::from_pairs(g, pairs)
}

/// Least-squares slope of log y against log x.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Input("slope fit needs at least two (x, y) pairs".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Input("slope fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("slope fit needs two distinct x values".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub mode: String,
    pub engine: String,
    pub searches: usize,
    pub merges: usize,
    pub merge_iterations: usize,
    pub dijkstra_runs: usize,
    pub max_dijkstra_per_cell: usize,
    pub max_searches_per_cell: usize,
    pub settled: usize,
    pub nn_queries: usize,
    pub phi_final: f64,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl ReportRow {
    pub fn from_trace(t: &SolverTrace, k: usize, seed: u64, cost: f64, wall_ms: Option<f64>) -> Self {
        ReportRow {
            n: t.n,
            d: t.d,
            k,
            seed,
            mode: t.mode.map(|m| format!("{m:?}").to_lowercase()).unwrap_or_default(),
            engine: t.engine.clone(),
            searches: t.searches,
            merges: t.merges,
            merge_iterations: t.merge_iterations,
            dijkstra_runs: t.dijkstra_runs,
            max_dijkstra_per_cell: t.max_dijkstra_per_cell(),
            max_searches_per_cell: t.cells.iter().map(|c| c.searches_low + c.searches_high).max().unwrap_or(0),
            settled: t.settled,
            nn_queries: t.nn_queries,
            phi_final: t.phi_final,
            cost,
            wall_ms,
        }
    }
}

const COLUMNS: [&str; 16] = [
    "n",
    "d",
    "k",
    "seed",
    "mode",
    "engine",
    "searches",
    "merges",
    "merge_iterations",
    "dijkstra_runs",
    "max_dijkstra_per_cell",
    "max_searches_per_cell",
    "settled",
    "nn_queries",
    "phi_final",
    "cost",
];

/// CSV with a fixed header; the wall_ms column appears only with `timing`.
pub fn write_csv<W: Write>(rows: &[ReportRow], out: W, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if timing {
        header.push("wall_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            r.d.to_string(),
            r.k.to_string(),
            r.seed.to_string(),
            r.mode.clone(),
            r.engine.clone(),
            r.searches.to_string(),
            r.merges.to_string(),
            r.merge_iterations.to_string(),
            r.dijkstra_runs.to_string(),
            r.max_dijkstra_per_cell.to_string(),
            r.max_searches_per_cell.to_string(),
            r.settled.to_string(),
            r.nn_queries.to_string(),
            format!("{:e}", r.phi_final),
            format!("{:e}", r.cost),
        ];
        if timing {
            rec.push(r.wall_ms.map(|x| format!("{x:.3}")).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let expected: Vec<&str> = header.iter().collect();
    if expected.len() < COLUMNS.len() || expected[..COLUMNS.len()] != COLUMNS[..] {
        return Err(Error::Input(format!("unexpected report header {expected:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        let mut row: ReportRow = rec?;
        if row.wall_ms.is_some_and(|x| x.is_nan()) {
            row.wall_ms = None;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes `<stem>.csv` and `<stem>.json` (rows plus full traces).
pub fn emit_report(rows: &[ReportRow], traces: &[SolverTrace], stem: &Path, timing: bool) -> Result<()> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    let f = std::fs::File::create(&csv_path)?;
    write_csv(rows, std::io::BufWriter::new(f), timing)?;
    let detail = serde_json::json!({ "rows": rows, "traces": traces });
    std::fs::write(&json_path, serde_json::to_string_pretty(&detail)?)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ScalingOptions {
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    pub d: usize,
    /// k = max(1, n / k_divisor).
    pub k_divisor: usize,
    pub solver: SolverOptions,
    pub timing: bool,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            ns: vec![256, 512, 1024, 2048],
            seeds: (0..5).collect(),
            d: 2,
            k_divisor: 4,
            solver: SolverOptions::default(),
            timing: false,
        }
    }
}

/// Uniform k-SP runs over the (n, seed) grid, fanned out by the batch layer.
pub fn scaling_sweep(o: &ScalingOptions) -> Result<(Vec<ReportRow>, Vec<SolverTrace>)> {
    let jobs: Vec<(usize, u64)> = o.ns.iter().flat_map(|&n| o.seeds.iter().map(move |&s| (n, s))).collect();
    let results = batch::map(&jobs, |&(n, seed)| -> Result<(ReportRow, SolverTrace)> {
        let k = (n / o.k_divisor.max(1)).max(1);
        let inst = generate(GenKind::Uniform, n, o.d, k, seed);
        let t0 = Instant::now();
        let out = solve(Problem::Ksp(&inst), &o.solver)?;
        let wall = o.timing.then(|| t0.elapsed().as_secs_f64() * 1e3);
        Ok((ReportRow::from_trace(&out.trace, k, seed, out.cost, wall), out.trace))
    });
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (row, t) = r?;
        rows.push(row);
        traces.push(t);
    }
    Ok((rows, traces))
}

/// Per-n mean of `f(row)`, in ascending n.
pub fn mean_by_n(rows: &[ReportRow], f: impl Fn(&ReportRow) -> f64) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.n).or_insert((0.0, 0));
        e.0 += f(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(n, (s, c))| (n, s / c as f64)).collect()
}
