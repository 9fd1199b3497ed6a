//! End-to-end acceptance checks, one line of output per criterion.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

mod common;

use common::{random_input, random_program};
use gdlog_core::analysis::{build_dependency_graph, check_graph, verify_witness, Acyclicity, EdgeKind};
use gdlog_core::chase::{
    run_chase, ChaseState, Choice, CompiledProgram, Schedule, Termination,
    DEFAULT_STEP_BUDGET,
};
use gdlog_core::dist::{Registry, RngStream};
use gdlog_core::enumerate::{enumerate_outcomes, marginal, EnumerationPolicy};
use gdlog_core::model::{Constant, Fact, Instance, Program, Schema};
use gdlog_core::parser::{parse_facts, parse_program};
use gdlog_core::ppdl::{estimate_posterior, exact_posterior};
use gdlog_core::translate::{to_existential, RuleKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 0.01·0.99·0.03·0.97·0.03·0.99·0.9·0.1·0.6·0.6·0.4, multiplied out exactly.
const SAMPLE_OUTCOME_PROBABILITY: f64 = 693058113.0 / 6250000000000000.0;

/// P(Earthquake(Napa,1) | Alarm(NP1)) as an exact fraction.
const POSTERIOR_EARTHQUAKE: f64 = 1018.0 / 5473.0;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(corpus(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn registry() -> Registry {
    Registry::with_test_distributions()
}

fn load(name: &str) -> (Program, CompiledProgram, Instance) {
    let reg = registry();
    let program = parse_program(&read(&format!("{name}.gdl")), &reg).unwrap();
    let mut schema: Schema = program.edb_schema.clone();
    schema.extend(program.idb_schema.clone());
    let facts_name = if name == "visits_implied" { "visits" } else { name };
    let input = parse_facts(&read(&format!("{facts_name}.facts")), &schema).unwrap();
    let compiled = CompiledProgram::new(&program, &reg).unwrap();
    (program, compiled, input)
}

fn s(x: &str) -> Constant {
    Constant::sym(x)
}

fn n(x: f64) -> Constant {
    Constant::num(x)
}

fn fact(rel: &str, args: Vec<Constant>) -> Fact {
    Fact::new(rel, args)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn criterion_1() {
    let reg = registry();
    let program = parse_program(&read("burglar.gdl"), &reg).unwrap();
    let ghat = to_existential(&program, &reg).unwrap();
    assert_eq!(ghat.rules.len(), 10);
    let kinds: Vec<RuleKind> = ghat.rules.iter().map(|r| r.kind).collect();
    use RuleKind::*;
    assert_eq!(
        kinds,
        vec![Existential, Copied, Copied, Existential, Existential, Existential, Copied, Projection, Projection, Projection]
    );
    let printed: Vec<String> = ghat.rules.iter().map(ToString::to_string).collect();
    let expected = [
        "exists y: Earthquake__Flip__2(c, y, 0.01) :- City(c, r).",
        "Unit(h, c) :- House(h, c).",
        "Unit(b, c) :- Business(b, c).",
        "exists y: Burglary__Flip__3(x, c, y, r) :- Unit(x, c), City(c, r).",
        "exists y: Trig__Flip__2(x, y, 0.6) :- Unit(x, c), Earthquake(c, 1).",
        "exists y: Trig__Flip__2(x, y, 0.9) :- Burglary(x, c, 1).",
        "Alarm(x) :- Trig(x, 1).",
        "Earthquake(x1, x2) :- Earthquake__Flip__2(x1, x2, p1).",
        "Burglary(x1, x2, x3) :- Burglary__Flip__3(x1, x2, x3, p1).",
        "Trig(x1, x2) :- Trig__Flip__2(x1, x2, p1).",
    ];
    assert_eq!(printed, expected);
    let fds: Vec<String> = ghat.fds.iter().map(ToString::to_string).collect();
    assert_eq!(
        fds,
        vec![
            "Earthquake__Flip__2: 1,3 -> 2",
            "Burglary__Flip__3: 1,2,4 -> 3",
            "Trig__Flip__2: 1,3 -> 2",
        ]
    );
}

fn sample_outcome_facts(input: &Instance) -> Instance {
    let mut j = input.clone();
    for (u, c) in [("NP1", "Napa"), ("NP2", "Napa"), ("NP3", "Napa"), ("YU1", "Yucaipa")] {
        j.insert(fact("Unit", vec![s(u), s(c)]));
    }
    for (c, d) in [("Napa", 1.0), ("Yucaipa", 0.0)] {
        j.insert(fact("Earthquake__Flip__2", vec![s(c), n(d), n(0.01)]));
        j.insert(fact("Earthquake", vec![s(c), n(d)]));
    }
    for (u, c, d, r) in [
        ("NP1", "Napa", 1.0, 0.03),
        ("NP2", "Napa", 0.0, 0.03),
        ("NP3", "Napa", 1.0, 0.03),
        ("YU1", "Yucaipa", 0.0, 0.01),
    ] {
        j.insert(fact("Burglary__Flip__3", vec![s(u), s(c), n(d), n(r)]));
        j.insert(fact("Burglary", vec![s(u), s(c), n(d)]));
    }
    for (u, d, p) in [
        ("NP1", 1.0, 0.9),
        ("NP3", 0.0, 0.9),
        ("NP1", 1.0, 0.6),
        ("NP2", 1.0, 0.6),
        ("NP3", 0.0, 0.6),
    ] {
        j.insert(fact("Trig__Flip__2", vec![s(u), n(d), n(p)]));
        j.insert(fact("Trig", vec![s(u), n(d)]));
    }
    j.insert(fact("Alarm", vec![s("NP1")]));
    j.insert(fact("Alarm", vec![s("NP2")]));
    j
}

fn criterion_2() {
    let (_, prog, input) = load("burglar");
    let d = enumerate_outcomes(&prog, &input, &EnumerationPolicy::default()).unwrap();
    assert!(close(d.explored_mass, 1.0, 1e-9), "explored {}", d.explored_mass);
    let j = sample_outcome_facts(&input);
    let p = d.probability_of(&j).expect("reference outcome enumerated");
    let rel = (p - SAMPLE_OUTCOME_PROBABILITY).abs() / SAMPLE_OUTCOME_PROBABILITY;
    assert!(rel <= 1e-12, "p = {p:e}, relative error {rel:e}");
    let m = marginal(&d, &fact("Earthquake", vec![s("Napa"), n(1.0)]));
    assert!(close(m.lower, 0.01, 1e-9));
}

fn criterion_3() {
    let (burglar, _, _) = load("burglar");
    assert!(check_graph(&build_dependency_graph(&burglar)).is_weakly_acyclic());
    let (doubling, _, _) = load("doubling");
    let g = build_dependency_graph(&doubling);
    match check_graph(&g) {
        Acyclicity::WeaklyAcyclic => panic!("doubling program accepted"),
        Acyclicity::Cyclic { witness } => {
            assert!(witness.iter().any(|e| e.kind == EdgeKind::Special));
            assert!(verify_witness(&g, &witness));
        }
    }
}

fn criterion_4() {
    let policy = EnumerationPolicy {
        node_budget: 1000,
        ..Default::default()
    };
    let (_, prog, input) = load("doubling_escape");
    let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
    assert_eq!(d.entries.len(), 1);
    assert!(close(d.entries[0].probability, 0.5, 1e-9));
    assert!(close(d.residual_mass, 0.5, 1e-9));

    let (_, prog, input) = load("branching_escape");
    let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
    assert_eq!(d.entries.len(), 1);
    assert!(close(d.entries[0].probability, 0.25, 1e-9));

    let (_, prog, input) = load("branching");
    let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
    assert!(d.entries.is_empty() && d.explored_mass == 0.0);
}

fn criterion_5() {
    let programs = [
        "burglar",
        "burglar_ppdl",
        "tuple_pdb",
        "disjunctive",
        "visits",
        "visits_implied",
        "doubling_escape",
        "branching_escape",
    ];
    let mut compared = 0;
    for name in programs {
        let (_, prog, input) = load(name);
        let base = EnumerationPolicy {
            support_mass_target: 1.0,
            node_budget: 100_000,
            step_budget: 1000,
            ..Default::default()
        };
        let fifo = enumerate_outcomes(&prog, &input, &base).unwrap();
        if !close(fifo.explored_mass, 1.0, 1e-9) {
            continue;
        }
        let fifo = fifo.to_map();
        for schedule in [Schedule::ReversedRules, Schedule::Shuffled(17), Schedule::Shuffled(4242)] {
            let other = enumerate_outcomes(&prog, &input, &EnumerationPolicy { schedule, ..base })
                .unwrap()
                .to_map();
            assert_eq!(other.len(), fifo.len(), "{name} {schedule:?}");
            for (facts, p) in &fifo {
                let q = other.get(facts).unwrap_or_else(|| panic!("{name} {schedule:?}: outcome missing"));
                assert!((p - q).abs() < 1e-9, "{name} {schedule:?}: {p} vs {q}");
            }
        }
        compared += 1;
    }
    assert_eq!(compared, 6, "programs with full explored mass");
}

fn criterion_6() {
    let (_, prog, input) = load("burglar");
    let d = enumerate_outcomes(&prog, &input, &EnumerationPolicy::default()).unwrap();
    let samples = 100_000u64;
    let mut counts: HashMap<Instance, u64> = HashMap::new();
    let outcomes: Vec<Instance> = {
        use rayon::prelude::*;
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::new(2024, i);
                let out = run_chase(&prog, &input, &mut rng, DEFAULT_STEP_BUDGET, Schedule::Fifo).unwrap();
                assert_eq!(out.terminated, Termination::Leaf);
                out.facts
            })
            .collect()
    };
    for o in outcomes {
        *counts.entry(o).or_default() += 1;
    }
    let mut checked = 0;
    for e in d.entries.iter().filter(|e| e.probability >= 1e-3) {
        let k = counts.get(&e.facts).copied().unwrap_or(0) as f64;
        let mean = samples as f64 * e.probability;
        let sd = (samples as f64 * e.probability * (1.0 - e.probability)).sqrt();
        assert!((k - mean).abs() <= 4.0 * sd, "count {k} vs expected {mean} ± {sd}");
        checked += 1;
    }
    assert!(checked > 0);
    assert!(counts.keys().all(|k| d.probability_of(k).is_some()));
}

/// P(Alarm(NP1)) and P(Alarm(NP1) ∧ Earthquake(Napa,1)) by enumerating all
/// 2^14 independent coins of the burglar network.
fn brute_force_posterior() -> f64 {
    let (pe, pb, t6, t9) = (0.01, [0.03, 0.03, 0.03, 0.01], 0.6, 0.9);
    let city_of_unit = [0, 0, 0, 1];
    let (mut joint, mut evidence) = (0.0, 0.0);
    for mask in 0u32..(1 << 14) {
        let bit = |i: u32| mask >> i & 1 == 1;
        let w = |b: bool, p: f64| if b { p } else { 1.0 - p };
        let eq = [bit(0), bit(1)];
        let burg = [bit(2), bit(3), bit(4), bit(5)];
        let trig6 = [bit(6), bit(7), bit(8), bit(9)];
        let trig9 = [bit(10), bit(11), bit(12), bit(13)];
        let mut weight = w(eq[0], pe) * w(eq[1], pe);
        for u in 0..4 {
            weight *= w(burg[u], pb[u]) * w(trig6[u], t6) * w(trig9[u], t9);
        }
        let alarm_np1 = (eq[city_of_unit[0]] && trig6[0]) || (burg[0] && trig9[0]);
        if alarm_np1 {
            evidence += weight;
            if eq[0] {
                joint += weight;
            }
        }
    }
    joint / evidence
}

fn criterion_7() {
    let oracle = brute_force_posterior();
    assert!(close(oracle, POSTERIOR_EARTHQUAKE, 1e-12), "brute force {oracle}");
    let (_, prog, input) = load("burglar_ppdl");
    let query = fact("Earthquake", vec![s("Napa"), n(1.0)]);
    let post = exact_posterior(&prog, &input, &EnumerationPolicy::default()).unwrap();
    let exact = marginal(&post, &query).lower;
    assert!(close(exact, POSTERIOR_EARTHQUAKE, 1e-9), "exact posterior {exact}");
    let est = estimate_posterior(&prog, &input, &query, 100_000, 7, DEFAULT_STEP_BUDGET).unwrap();
    let point = est.point.expect("accepted samples");
    let se = est.std_error.unwrap();
    assert!(
        (point - POSTERIOR_EARTHQUAKE).abs() <= 3.0 * se,
        "estimate {point} ± {se} vs {POSTERIOR_EARTHQUAKE}"
    );
}

fn criterion_8() {
    let (_, prog, input) = load("tuple_pdb");
    let d = enumerate_outcomes(&prog, &input, &EnumerationPolicy::default()).unwrap();
    assert_eq!(d.entries.len(), 4);
    let world = |a: bool, b: bool| {
        let mut j = input.clone();
        for (x, p, on) in [("a", 0.3, a), ("b", 0.6, b)] {
            let v = if on { 1.0 } else { 0.0 };
            j.insert(fact("S__Flip__2", vec![s(x), n(v), n(p)]));
            j.insert(fact("S", vec![s(x), n(v)]));
            if on {
                j.insert(fact("Rp", vec![s(x)]));
            }
        }
        j
    };
    for (a, b, p) in [(true, true, 0.18), (true, false, 0.12), (false, true, 0.42), (false, false, 0.28)] {
        let q = d.probability_of(&world(a, b)).expect("world enumerated");
        assert!(close(q, p, 1e-12), "world ({a}, {b}): {q} vs {p}");
    }
    assert!(close(marginal(&d, &fact("Rp", vec![s("a")])).lower, 0.3, 1e-12));

    let (_, visits, input) = load("visits");
    let (_, implied, _) = load("visits_implied");
    let policy = EnumerationPolicy::default();
    let a = enumerate_outcomes(&visits, &input, &policy).unwrap();
    let b = enumerate_outcomes(&implied, &input, &policy).unwrap();
    assert_eq!(a.entries.len(), b.entries.len());
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.facts, y.facts);
        assert_eq!(x.probability.to_bits(), y.probability.to_bits());
    }
    assert_eq!(a.explored_mass.to_bits(), b.explored_mass.to_bits());
}

/// Random program over E0/1, E1/2 and up to four IDB relations, Flip and Geo
/// only, constant parameters.
fn criterion_9() {
    let reg = Registry::standard();
    let mut gen = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut programs = 0;
    let mut steps_checked = 0u64;
    while programs < 1000 {
        let src = random_program(&mut gen);
        let program = parse_program(&src, &reg).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let prog = CompiledProgram::new(&program, &reg).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let input = parse_facts(&random_input(&mut gen), &program.edb_schema).unwrap();
        let fd_position: HashMap<String, usize> = prog
            .existential()
            .dist_relations
            .iter()
            .map(|d| (d.name.to_string(), d.position - 1))
            .collect();
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, programs);
            let mut state = ChaseState::new(&prog, &input, Schedule::Fifo).unwrap();
            let mut keys: HashMap<(String, Vec<Constant>), Constant> = HashMap::new();
            while state.steps() < 500 {
                let Some(firing) = state.pop_applicable(&prog) else { break };
                let before = state.len();
                let step = state.chase_step(&prog, &firing, Choice::Rng(&mut rng)).unwrap();
                assert_eq!(state.len(), before + 1, "strict growth\n{src}");
                if let Some(&pos) = fd_position.get(&*step.fact.relation) {
                    let mut key = step.fact.args.clone();
                    let value = key.remove(pos);
                    let prev = keys.insert((step.fact.relation.to_string(), key), value);
                    assert!(prev.is_none(), "FD violated by {}\n{src}", step.fact);
                }
                steps_checked += 1;
            }
            assert!(state.check_fds(&prog), "FD check\n{src}");
        }
        programs += 1;
    }
    assert!(steps_checked > 10_000);
}

fn main() {
    let criteria: [(&str, fn(), Duration); 9] = [
        ("translation fidelity", criterion_1, Duration::from_secs(1)),
        ("burglar exact semantics", criterion_2, Duration::from_secs(10)),
        ("weak acyclicity", criterion_3, Duration::from_secs(1)),
        ("finite-mass bound", criterion_4, Duration::from_secs(5)),
        ("chase-order independence", criterion_5, Duration::from_secs(60)),
        ("sampling/enumeration agreement", criterion_6, Duration::from_secs(60)),
        ("posterior correctness", criterion_7, Duration::from_secs(120)),
        ("encoding sanity", criterion_8, Duration::from_secs(5)),
        ("property suites", criterion_9, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let verdict = match &result {
            Ok(()) if elapsed <= *limit => "PASS".to_string(),
            Ok(()) => format!("FAIL (over time limit {limit:?})"),
            Err(_) => "FAIL".to_string(),
        };
        if !verdict.starts_with("PASS") {
            failed += 1;
        }
        println!("criterion {} ({name}): {verdict} in {:.2}s", i + 1, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
