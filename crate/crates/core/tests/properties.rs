use kserver_match::geometry::{generate_with, GenKind, GenOptions};
use kserver_match::matching_state::AuditMode;
use kserver_match::nk::{solve_instance as nk_solve, NkOptions};
use kserver_match::oracle::{brute_force, hungarian_explicit, verify_certificate};
use kserver_match::reduction::{matching_to_partitioning, partitioning_cost_w};
use kserver_match::search::{EngineKind, NnBackend, SearchEngine};
use kserver_match::subquadratic::{normalized_graph, solve, Problem, SolverOptions};
use kserver_match::{CostModel, GateGraph, Instance, MatchingInstance};
use proptest::prelude::*;

fn instance(n: usize, k: usize, seed: u64, servers: bool, exact: bool) -> Instance {
    let mut o = GenOptions::new(if seed % 4 == 0 { GenKind::Clustered } else { GenKind::Uniform }, n, 2, k, seed);
    o.servers = servers;
    if exact {
        o.model = CostModel::l1();
        o.integer_grid = Some(20);
    }
    generate_with(&o).unwrap()
}

fn engines() -> [SearchEngine; 3] {
    [
        SearchEngine::new(EngineKind::Explicit, NnBackend::Linear),
        SearchEngine::new(EngineKind::Bcp, NnBackend::Linear),
        SearchEngine::new(EngineKind::Bcp, NnBackend::KdTree),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solvers_agree_and_certify(n in 1usize..40, kk in 0usize..40, seed in 0u64..10_000, servers: bool, exact: bool) {
        let k = 1 + kk % n;
        let inst = instance(n, k, seed, servers, exact);
        let o = SolverOptions { audit: true, ..Default::default() };
        let sq = solve(Problem::from_instance(&inst), &o).unwrap();
        let nk = nk_solve(&inst, &NkOptions { audit: true, ..Default::default() }, exact).unwrap();
        if exact {
            prop_assert_eq!(sq.cost_exact.map(|c| c as f64), Some(nk.cost));
        } else {
            prop_assert!((sq.cost - nk.cost).abs() <= 1e-9 * nk.cost.max(1.0));
        }
        prop_assert_eq!(sq.trace.audit_violations, 0);

        // terminal certificate, in the solver's normalized coordinates
        let g = GateGraph::build(&inst);
        let gn = normalized_graph(&g, &sq.state.normalization());
        prop_assert_eq!(sq.state.mode, AuditMode::Extended);
        let cert = verify_certificate(&gn, &sq.state, 1e-9).unwrap();
        prop_assert!(cert.valid, "{:?}", cert.audit.violations);
        let cert = verify_certificate(&g, &nk.state, 1e-9 * g.max_cost_bound().max(1.0)).unwrap();
        prop_assert!(cert.valid, "{:?}", cert.audit.violations);

        // partitioning reproduces the matching cost and keeps order inside chains
        let p = sq.partitioning.clone().unwrap();
        p.validate(n, k, servers).unwrap();
        for s in &p.subsequences {
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        let pc: f64 = partitioning_cost_w(&p, &inst);
        prop_assert!((pc - sq.cost).abs() <= 1e-9 * sq.cost.max(1.0));
    }

    #[test]
    fn engine_choice_does_not_change_the_answer(n in 2usize..30, seed in 0u64..10_000, servers: bool) {
        let k = 1 + (seed as usize) % n.min(5);
        let inst = instance(n, k, seed, servers, true);
        let mut costs = Vec::new();
        let mut pairs = Vec::new();
        for engine in engines() {
            let sq = solve(Problem::from_instance(&inst), &SolverOptions { engine, ..Default::default() }).unwrap();
            costs.push(sq.cost_exact.unwrap());
            pairs.push(sq.matching.pairs());
            let nk = nk_solve(&inst, &NkOptions { engine, audit: false, eps: None }, true).unwrap();
            costs.push(nk.cost as i64);
        }
        prop_assert!(costs.windows(2).all(|w| w[0] == w[1]), "{:?}", costs);
        prop_assert!(pairs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn nk_cost_profile_is_convex_and_decreasing(n in 2usize..30, seed in 0u64..10_000) {
        let inst = instance(n, n, seed, false, true);
        let nk = nk_solve(&inst, &NkOptions::default(), true).unwrap();
        let c = &nk.trace.cost_profile;
        prop_assert_eq!(c.len(), n);
        prop_assert_eq!(*c.last().unwrap(), 0.0);
        prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
        // successive savings shrink: optimal t-matching cost is convex in t
        prop_assert!(c.windows(3).all(|w| w[0] - w[1] >= w[1] - w[2]));
        // every prefix value is itself an optimum
        let g = GateGraph::build(&inst);
        let j = (seed as usize) % n;
        let (want, m) = hungarian_explicit::<i64>(&g, n - 1 - j).unwrap();
        prop_assert_eq!(c[j], want as f64);
        let part = matching_to_partitioning(&g, &m, j + 1).unwrap();
        prop_assert_eq!(partitioning_cost_w::<i64>(&part, &inst), want);
    }

    #[test]
    fn brute_force_matches_hungarian(n in 1usize..9, kk in 0usize..9, seed in 0u64..10_000, servers: bool) {
        let k = 1 + kk % n.min(if servers { 4 } else { 9 });
        let inst = instance(n, k, seed, servers, true);
        let g = GateGraph::build(&inst);
        let t = if servers { n } else { n - k };
        let (h, _) = hungarian_explicit::<i64>(&g, t).unwrap();
        prop_assert_eq!(brute_force(&inst).unwrap().cost, h as f64);
    }

    #[test]
    fn grs_is_perfect_and_optimal(m in 1usize..25, seed in 0u64..10_000, q in prop::sample::select(vec![1.0, 2.0, 3.0])) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pts = || (0..m).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect::<Vec<_>>();
        let mi = MatchingInstance { d: 2, p: 2.0, q, a: pts(), b: pts() };
        let out = solve(Problem::Grs(&mi), &SolverOptions { audit: true, ..Default::default() }).unwrap();
        prop_assert_eq!(out.matching.len(), m);
        let (want, _) = hungarian_explicit::<f64>(&GateGraph::complete(&mi), m).unwrap();
        prop_assert!((out.cost - want).abs() <= 1e-9 * want.max(1.0));
    }
}
