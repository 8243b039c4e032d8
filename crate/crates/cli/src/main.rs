use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kserver_match::experiments::{self, fit_loglog_slope, mean_by_n, GrsOptions, ScalingOptions};
use kserver_match::geometry::{generate_with, GenKind, GenOptions};
use kserver_match::nk::{self, NkOptions};
use kserver_match::oracle::{self, OracleResult};
use kserver_match::reduction::{
    matching_to_nspi_instance, partitioning_cost, partitioning_to_matching, MatchingFile, Partitioning, PartitioningFile,
};
use kserver_match::search::{EngineKind, NnBackend, SearchEngine};
use kserver_match::subquadratic::{self, normalized_graph, Mode, Problem, SolverOptions};
use kserver_match::{batch, matching_state::StateFile, CostModel, Error, GateGraph, Instance, Matching, MatchingInstance};

#[derive(Parser)]
#[command(name = "kserver-match", version, about = "Offline k-server and sequence partitioning solvers")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded random instance.
    Gen(GenArgs),
    /// Solve an instance with the nk or the sub-quadratic solver.
    Solve(SolveArgs),
    /// Check a solution against its instance (and optionally a dual certificate).
    Verify(VerifyArgs),
    /// Exact reference answer by enumeration or explicit Hungarian.
    Oracle(OracleArgs),
    /// Lift a bichromatic l1 matching instance to n-SPI and read the matching back.
    Reduce(ReduceArgs),
    /// Seeded scaling sweep written as CSV plus JSON detail.
    Bench(BenchArgs),
    /// Randomly colored point experiment.
    Grs(GrsArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum Algo {
    Nk,
    Subq,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum ModeArg {
    Ksp,
    Kspi,
    Grs,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum EngineArg {
    Explicit,
    Bcp,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum NnArg {
    Linear,
    Kdtree,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum KindArg {
    Uniform,
    Clustered,
    Collinear,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum MethodArg {
    Brute,
    Hungarian,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
enum Suite {
    Scaling,
}

fn parse_p(s: &str) -> Result<f64, String> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().map_err(|e| e.to_string()),
    }
}

#[derive(Args)]
struct EngineFlags {
    #[arg(long, value_enum, default_value = "bcp")]
    engine: EngineArg,
    #[arg(long, value_enum, default_value = "linear")]
    nn: NnArg,
}

impl EngineFlags {
    fn engine(&self) -> SearchEngine {
        let kind = match self.engine {
            EngineArg::Explicit => EngineKind::Explicit,
            EngineArg::Bcp => EngineKind::Bcp,
        };
        let nn = match self.nn {
            NnArg::Linear => NnBackend::Linear,
            NnArg::Kdtree => NnBackend::KdTree,
        };
        SearchEngine::new(kind, nn)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also draw k server locations (k-SPI).
    #[arg(long)]
    servers: bool,
    /// Emit a bichromatic instance (n points per color) instead of a request sequence.
    #[arg(long, conflicts_with = "servers")]
    bichromatic: bool,
    /// Round coordinates to integers in 0..=GRID.
    #[arg(long)]
    grid: Option<u32>,
    #[arg(long, default_value = "2", value_parser = parse_p)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "subq")]
    algo: Algo,
    /// Defaults to the instance kind.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    engine: EngineFlags,
    /// Feasibility audits after every step; violations exit with code 3.
    #[arg(long)]
    audit: bool,
    /// Integer arithmetic; requires integer coordinates under l1.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Displace coincident points instead of rejecting them.
    #[arg(long)]
    jitter: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Final primal-dual state, for `verify --certificate`.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long)]
    dump_trace: Option<PathBuf>,
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    /// Solution JSON from `solve`; `-` reads stdin.
    solution: PathBuf,
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// Compare against the exact oracle (guarded sizes only).
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    /// Defaults to enumeration when within its guard, else Hungarian.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    /// Bichromatic instance `{d, p, q, a, b}` with p = 1.
    instance: PathBuf,
    /// Where to write the lifted n-SPI instance.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "scaling")]
    suite: Suite,
    #[arg(long, short, default_value = "metrics.csv")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![256usize, 512, 1024, 2048])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// k = n / K_DIVISOR.
    #[arg(long, default_value_t = 4)]
    k_divisor: usize,
    /// Add a wall-clock column (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(Args)]
struct GrsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
}

/// Verification failure: exit code 1.
#[derive(Debug)]
struct Mismatch;

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed")
    }
}

impl std::error::Error for Mismatch {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Mismatch>().is_some() {
        return 1;
    }
    for cause in e.chain() {
        if let Some(x) = cause.downcast_ref::<Error>() {
            return x.exit_code() as u8;
        }
    }
    2
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(Error::from)?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).map_err(Error::from).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(v).map_err(Error::from)? + "\n"))
}

enum Loaded {
    Seq(Instance),
    Pairs(MatchingInstance),
}

fn load_instance(path: &Path) -> anyhow::Result<Loaded> {
    let text = read_text(path)?;
    let v: Value = serde_json::from_str(&text).map_err(Error::from).with_context(|| format!("parsing {}", path.display()))?;
    let ctx = || format!("reading instance {}", path.display());
    if v.get("requests").is_some() {
        Ok(Loaded::Seq(Instance::from_json(&text).with_context(ctx)?))
    } else if v.get("a").is_some() && v.get("b").is_some() {
        Ok(Loaded::Pairs(MatchingInstance::from_json(&text).with_context(ctx)?))
    } else {
        Err(Error::Input("instance needs either `requests` or both `a` and `b`".into())).with_context(ctx)
    }
}

fn emit(json_mode: bool, v: &Value, human: impl FnOnce() -> String) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
    } else {
        println!("{}", human());
    }
}

fn cmd_gen(a: &GenArgs, json_mode: bool) -> anyhow::Result<()> {
    let model = CostModel::new(a.p, a.q)?;
    let text = if a.bichromatic {
        let mut o = GenOptions::new(kind(a.kind), 2 * a.n, a.d, 1, a.seed);
        o.integer_grid = a.grid;
        o.model = model;
        let pts = generate_with(&o)?.base().requests.clone();
        let (pa, pb) = experiments::random_color_split(&pts, a.seed)?;
        serde_json::to_string_pretty(&MatchingInstance { d: a.d, p: a.p, q: a.q, a: pa, b: pb }).map_err(Error::from)?
    } else {
        let mut o = GenOptions::new(kind(a.kind), a.n, a.d, a.k, a.seed);
        o.integer_grid = a.grid;
        o.servers = a.servers;
        o.model = model;
        generate_with(&o)?.to_json()
    };
    match &a.out {
        Some(p) => {
            write_text(p, &(text + "\n"))?;
            emit(json_mode, &json!({ "written": p }), || format!("wrote {}", p.display()));
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn kind(k: KindArg) -> GenKind {
    match k {
        KindArg::Uniform => GenKind::Uniform,
        KindArg::Clustered => GenKind::Clustered,
        KindArg::Collinear => GenKind::Collinear,
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Ksp => "ksp",
        Mode::Kspi => "kspi",
        Mode::Grs => "grs",
    }
}

fn cmd_solve(a: &SolveArgs, json_mode: bool) -> anyhow::Result<()> {
    if a.algo == Algo::Nk {
        if a.mode == Some(ModeArg::Grs) {
            bail!(Error::Input("--algo nk handles ksp and kspi only".into()));
        }
        if a.lambda.is_some() || a.dump_tree.is_some() || a.jitter {
            bail!(Error::Input("--lambda, --dump-tree and --jitter apply to --algo subq only".into()));
        }
    }
    if a.eps.is_some_and(|e| !(e >= 0.0)) {
        bail!(Error::Input("--eps must be a nonnegative number".into()));
    }
    let loaded = load_instance(&a.instance)?;
    let mode = match (&loaded, a.mode) {
        (Loaded::Seq(Instance::Ksp(_)), None | Some(ModeArg::Ksp)) => Mode::Ksp,
        (Loaded::Seq(Instance::Kspi(_)), None | Some(ModeArg::Kspi)) => Mode::Kspi,
        (Loaded::Pairs(_), None | Some(ModeArg::Grs)) => Mode::Grs,
        (_, Some(m)) => bail!(Error::Input(format!("--mode {m:?} does not fit the instance file").to_lowercase())),
    };
    if a.algo == Algo::Nk && mode == Mode::Grs {
        bail!(Error::Input("--algo nk handles ksp and kspi only".into()));
    }
    let engine = a.engine.engine();
    let (solution, trace, state, tree) = match (&loaded, a.algo) {
        (Loaded::Seq(inst), Algo::Nk) => {
            let o = NkOptions { engine, audit: a.audit, eps: a.eps };
            let r = nk::solve_instance(inst, &o, a.exact)?;
            let exact = a.exact.then(|| r.cost as i64);
            let sol = solution_json("nk", mode, r.cost, exact, Some(&r.partitioning), &r.matching);
            (sol, serde_json::to_value(&r.trace).map_err(Error::from)?, r.state, None)
        }
        (_, _) => {
            let problem = match &loaded {
                Loaded::Seq(inst) => Problem::from_instance(inst),
                Loaded::Pairs(m) => Problem::Grs(m),
            };
            if a.exact {
                let g = match &loaded {
                    Loaded::Seq(inst) => GateGraph::build(inst),
                    Loaded::Pairs(m) => GateGraph::complete(m),
                };
                g.require_exact()?;
            }
            let o = SolverOptions {
                engine,
                audit: a.audit,
                eps: a.eps,
                lambda: a.lambda,
                jitter: a.jitter,
                dump_tree: a.dump_tree.is_some(),
            };
            let r = subquadratic::solve(problem, &o)?;
            let sol = solution_json("subq", mode, r.cost, r.cost_exact, r.partitioning.as_ref(), &r.matching);
            (sol, serde_json::to_value(&r.trace).map_err(Error::from)?, r.state, r.tree)
        }
    };
    if let Some(p) = &a.out {
        write_json(p, &solution)?;
    }
    if let Some(p) = &a.state {
        write_json(p, &state)?;
    }
    if let Some(p) = &a.dump_trace {
        write_json(p, &trace)?;
    }
    if let (Some(p), Some(t)) = (&a.dump_tree, &tree) {
        write_json(p, t)?;
    }
    emit(json_mode, &solution, || {
        format!(
            "{} {}: cost {} ({} matched pairs)",
            solution["algo"].as_str().unwrap_or_default(),
            solution["mode"].as_str().unwrap_or_default(),
            solution["cost"],
            solution["matching"]["pairs"].as_array().map_or(0, |p| p.len())
        )
    });
    Ok(())
}

fn solution_json(algo: &str, mode: Mode, cost: f64, exact: Option<i64>, p: Option<&Partitioning>, m: &Matching) -> Value {
    json!({
        "algo": algo,
        "mode": mode_name(mode),
        "cost": cost,
        "cost_exact": exact,
        "partitioning": p.map(|p| p.to_file(cost)),
        "matching": m.to_file(cost),
    })
}

struct Checks(Vec<Value>);

impl Checks {
    fn add(&mut self, name: &str, ok: bool, detail: impl Into<String>) -> bool {
        self.0.push(json!({ "check": name, "ok": ok, "detail": detail.into() }));
        ok
    }
    fn ok(&self) -> bool {
        self.0.iter().all(|c| c["ok"] == true)
    }
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
}

fn cmd_verify(a: &VerifyArgs, json_mode: bool) -> anyhow::Result<()> {
    let loaded = load_instance(&a.instance)?;
    let text = read_text(&a.solution)?;
    let sol: Value = serde_json::from_str(&text).map_err(Error::from).context("parsing solution")?;
    let mf: MatchingFile = serde_json::from_value(sol.get("matching").cloned().unwrap_or(Value::Null))
        .map_err(Error::from)
        .context("solution needs a `matching` object")?;
    let pf: Option<PartitioningFile> = match sol.get("partitioning") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(Error::from).context("malformed `partitioning`")?),
    };
    let claimed = sol.get("cost").and_then(Value::as_f64).unwrap_or(mf.cost);
    let (g, n, k, servers) = match &loaded {
        Loaded::Seq(inst) => {
            let b = inst.base();
            let k = inst.servers().map_or(b.k, |s| s.len());
            (GateGraph::build(inst), b.n(), k, inst.servers().is_some())
        }
        Loaded::Pairs(m) => (GateGraph::complete(m), m.n(), 0, false),
    };
    let exact = g.is_exact_integral();
    let tol = a.eps.unwrap_or(if exact { 0.0 } else { 1e-9 });
    let target = match &loaded {
        Loaded::Seq(Instance::Ksp(_)) => n - k.min(n),
        _ => n,
    };
    let mut c = Checks(Vec::new());

    let pairs: Vec<(usize, usize)> = mf.pairs.iter().map(|p| (p[0], p[1])).collect();
    let matching = match Matching::from_pairs(&g, &pairs) {
        Ok(m) => {
            c.add("matching structure", true, format!("{} pairs on the gate graph", m.len()));
            Some(m)
        }
        Err(e) => {
            c.add("matching structure", false, e.to_string());
            None
        }
    };
    if let Some(m) = &matching {
        c.add("matching size", m.len() == target, format!("{} pairs, expected {target}", m.len()));
        let w = m.cost_f64(&g);
        c.add("matching cost", close(w, claimed, tol), format!("recomputed {w}, claimed {claimed}"));
    }
    if let (Some(pf), Loaded::Seq(inst)) = (&pf, &loaded) {
        let p = Partitioning::from_file(pf);
        match p.validate(n, k, servers) {
            Err(e) => {
                c.add("partitioning structure", false, e.to_string());
            }
            Ok(()) => {
                c.add("partitioning structure", true, format!("{k} subsequences over {n} requests"));
                let w = partitioning_cost(&p, inst);
                c.add("partitioning cost", close(w, claimed, tol), format!("recomputed {w}, claimed {claimed}"));
                if let (Ok(pm), Some(m)) = (partitioning_to_matching(&g, &p), &matching) {
                    c.add("partitioning matches pairs", pm.pairs() == m.pairs(), "chains and pairs describe the same solution");
                }
            }
        }
    }
    if let Some(path) = &a.certificate {
        let state: StateFile = serde_json::from_str(&read_text(path)?).map_err(Error::from).context("parsing certificate state")?;
        let gn = normalized_graph(&g, &state.normalization());
        let eps = a.eps.unwrap_or(1e-9 * gn.max_cost_bound().max(1.0));
        let r = oracle::verify_certificate(&gn, &state, eps)?;
        let detail = if r.valid { "dual certificate holds".to_string() } else { format!("{:?}", r.audit.violations) };
        c.add("certificate", r.valid, detail);
        let same = state.pairs == mf.pairs;
        c.add("certificate pairs", same, "state pairs equal solution pairs");
    }
    if a.oracle {
        let want = match &loaded {
            Loaded::Seq(inst) => match oracle::brute_force(inst) {
                Ok(r) => r.cost,
                Err(Error::Guard(_)) => oracle::hungarian_explicit::<f64>(&g, target)?.0,
                Err(e) => return Err(e.into()),
            },
            Loaded::Pairs(_) => oracle::hungarian_explicit::<f64>(&g, target)?.0,
        };
        let tol = if exact { 0.0 } else { a.eps.unwrap_or(1e-6) };
        c.add("oracle cost", close(claimed, want, tol), format!("oracle {want}, claimed {claimed}"));
    }
    let report = json!({ "ok": c.ok(), "checks": c.0 });
    emit(json_mode, &report, || {
        c.0.iter()
            .map(|x| format!("{} {}: {}", if x["ok"] == true { "ok  " } else { "FAIL" }, x["check"].as_str().unwrap(), x["detail"].as_str().unwrap()))
            .collect::<Vec<_>>()
            .join("\n")
    });
    if !c.ok() {
        if !json_mode {
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("json value serializes"));
        }
        return Err(Mismatch.into());
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs, json_mode: bool) -> anyhow::Result<()> {
    let loaded = load_instance(&a.instance)?;
    let r: OracleResult = match (&loaded, a.method) {
        (Loaded::Seq(inst), Some(MethodArg::Brute)) => oracle::brute_force(inst)?,
        (Loaded::Seq(inst), None) => match oracle::brute_force(inst) {
            Err(Error::Guard(_)) => {
                let b = inst.base();
                let t = if inst.servers().is_some() { b.n() } else { b.n() - b.k };
                oracle::hungarian_result(&GateGraph::build(inst), t)?
            }
            other => other?,
        },
        (Loaded::Seq(inst), Some(MethodArg::Hungarian)) => {
            let b = inst.base();
            let t = if inst.servers().is_some() { b.n() } else { b.n() - b.k };
            oracle::hungarian_result(&GateGraph::build(inst), t)?
        }
        (Loaded::Pairs(_), Some(MethodArg::Brute)) => bail!(Error::Input("enumeration needs a request sequence".into())),
        (Loaded::Pairs(m), _) => oracle::hungarian_result(&GateGraph::complete(m), m.n())?,
    };
    if let Some(p) = &a.out {
        write_json(p, &r)?;
    }
    let v = serde_json::to_value(&r).map_err(Error::from)?;
    emit(json_mode, &v, || format!("oracle ({:?}): cost {}", r.method, r.cost).to_lowercase());
    Ok(())
}

fn cmd_reduce(a: &ReduceArgs, json_mode: bool) -> anyhow::Result<()> {
    let Loaded::Pairs(mi) = load_instance(&a.instance)? else {
        bail!(Error::Input("reduce reads a bichromatic instance with `a` and `b`".into()));
    };
    let model = CostModel::new(mi.p, mi.q)?;
    let red = matching_to_nspi_instance(&mi.a, &mi.b, &model)?;
    let lifted = Instance::Kspi(red.instance.clone());
    if let Some(p) = &a.out {
        write_text(p, &(lifted.to_json() + "\n"))?;
    }
    let gl = GateGraph::build(&lifted);
    let (partition, partition_cost, solver) = match oracle::brute_force(&lifted) {
        Ok(r) => (r.partitioning.expect("enumeration returns chains"), r.cost, "enumeration"),
        Err(Error::Guard(_)) => {
            let exact = gl.is_exact_integral();
            let r = nk::solve_instance(&lifted, &NkOptions { audit: false, ..Default::default() }, exact)?;
            (r.partitioning, r.cost, "nk")
        }
        Err(e) => return Err(e.into()),
    };
    let pairs = red.recover_matching(&partition)?;
    let matching_cost: f64 = pairs.iter().map(|&(i, j)| model.distance(&mi.a[i], &mi.b[j])).sum();
    let residual = red.identity_residual(partition_cost, matching_cost);
    let (direct, _) = oracle::hungarian_explicit::<f64>(&GateGraph::complete(&mi), mi.n())?;
    let report = json!({
        "n": mi.n(),
        "solver": solver,
        "diameter": red.diameter,
        "lift_total": red.lift_total(),
        "partition_cost": partition_cost,
        "pairs": pairs,
        "matching_cost": matching_cost,
        "direct_optimum": direct,
        "residual": residual,
    });
    emit(json_mode, &report, || {
        format!("recovered matching cost {matching_cost} (direct optimum {direct}), identity residual {residual}")
    });
    if !close(matching_cost, direct, 1e-9) {
        return Err(Mismatch.into());
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs, json_mode: bool) -> anyhow::Result<()> {
    let Suite::Scaling = a.suite;
    if a.ns.is_empty() || a.seeds == 0 {
        bail!(Error::Input("bench needs at least one n and one seed".into()));
    }
    let mut ns = a.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let o = ScalingOptions {
        ns,
        seeds: (a.seed..a.seed + a.seeds).collect(),
        d: a.d,
        k_divisor: a.k_divisor,
        solver: SolverOptions { engine: a.engine.engine(), ..Default::default() },
        timing: a.timing,
    };
    let (rows, traces) = experiments::scaling_sweep(&o)?;
    let stem = a.out.with_extension("");
    experiments::emit_report(&rows, &traces, &stem, a.timing)?;
    let means = mean_by_n(&rows, |r| r.max_dijkstra_per_cell as f64);
    let slope = (means.len() >= 2)
        .then(|| fit_loglog_slope(&means.iter().map(|m| m.0 as f64).collect::<Vec<_>>(), &means.iter().map(|m| m.1).collect::<Vec<_>>()).ok())
        .flatten();
    let v = json!({
        "csv": stem.with_extension("csv"),
        "json": stem.with_extension("json"),
        "rows": rows.len(),
        "threads": batch::threads(),
        "mean_max_dijkstra_per_cell": means,
        "loglog_slope": slope,
    });
    emit(json_mode, &v, || {
        let s = slope.map_or("n/a".into(), |s| format!("{s:.3}"));
        format!("{} rows to {}; max Dijkstra runs per cell grows like n^{s}", rows.len(), stem.with_extension("csv").display())
    });
    Ok(())
}

fn cmd_grs(a: &GrsArgs, json_mode: bool) -> anyhow::Result<()> {
    if a.n == 0 || a.seeds == 0 {
        bail!(Error::Input("grs needs n >= 1 and at least one seed".into()));
    }
    if !(a.q >= 1.0) {
        bail!(Error::Input("q must be at least 1".into()));
    }
    let o = GrsOptions { solver: SolverOptions { engine: a.engine.engine(), ..Default::default() }, ..Default::default() };
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let runs = batch::map(&seeds, |&s| experiments::run_grs(a.n, a.d, a.q, s, &o)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let fr: Vec<f64> = runs.iter().filter_map(|r| r.top_level_fraction()).collect();
    let mean = fr.iter().sum::<f64>() / fr.len().max(1) as f64;
    let stderr = if fr.len() > 1 {
        (fr.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (fr.len() - 1) as f64 / fr.len() as f64).sqrt()
    } else {
        0.0
    };
    let oracle_ok = runs.iter().all(|r| r.oracle_cost.map_or(true, |w| close(r.cost, w, 1e-6)));
    let summary = json!({
        "n": a.n,
        "d": a.d,
        "q": a.q,
        "seeds": seeds.len(),
        "outside_claim": a.q < 2.0,
        "top_level_fraction_mean": mean,
        "top_level_fraction_stderr": stderr,
        "mean_cost": runs.iter().map(|r| r.cost).sum::<f64>() / runs.len() as f64,
        "oracle_checked": runs.iter().filter(|r| r.oracle_cost.is_some()).count(),
        "oracle_agrees": oracle_ok,
        "all_perfect": runs.iter().all(|r| r.perfect),
    });
    if let Some(p) = &a.out {
        write_json(p, &json!({ "summary": summary, "runs": runs }))?;
    }
    emit(json_mode, &summary, || {
        let mut s = format!("n={} q={}: top-level boundary fraction {mean:.4} ± {stderr:.4} over {} seeds", a.n, a.q, seeds.len());
        if a.q < 2.0 {
            s.push_str(" (q < 2: outside the headline claim)");
        }
        s
    });
    if !oracle_ok {
        return Err(Mismatch.into());
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a, cli.json),
        Cmd::Solve(a) => cmd_solve(a, cli.json),
        Cmd::Verify(a) => cmd_verify(a, cli.json),
        Cmd::Oracle(a) => cmd_oracle(a, cli.json),
        Cmd::Reduce(a) => cmd_reduce(a, cli.json),
        Cmd::Bench(a) => cmd_bench(a, cli.json),
        Cmd::Grs(a) => cmd_grs(a, cli.json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if code != 1 {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
