//! Exit criteria. Runs every criterion, prints one PASS/FAIL line each and
//! fails the target if any criterion fails.

mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{random_env, scenario, RandomPolicy, Shape};
use greenran::agents::{q_update, sarsa_update, LearningParams, QTable};
use greenran::domain::{validate_split_chain, SplitPoint};
use greenran::env::{Dispatch, Environment, JointAction, NodeAction, StepRecord};
use greenran::harness::{
    cmd_evaluate, cmd_oracle, cmd_sweep, cmd_train, evaluate_seed, train_seed,
};
use greenran::oracle::{solve_oracle, OracleDispatch, OracleLimits};
use greenran::policy::{run_policy, Policy, PolicyKind, ReplayPolicy, StaticPolicy};
use greenran::scenario::{ScenarioConfig, SweepAxis};
use greenran::stats::{median, NeumaierSum};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("constraint suite", constraint_suite),
        ("energy conservation", conservation),
        ("oracle equals brute force", oracle_equivalence),
        ("q-learning reaches the optimum", rl_convergence),
        ("learned policies beat static baselines", beats_baselines),
        ("panel and battery monotonicity", sweep_monotonicity),
        ("update rules", update_rules),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({}; {:.1}s)",
            i + 1,
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

// 1 ---------------------------------------------------------------------

const STEPS_PER_CASE: usize = 100;
const CASES: u32 = 100;

/// A random action, occasionally malformed: a pinned type moved off the DU
/// or a dispatch level that does not exist.
fn random_action(env: &Environment, rng: &mut ChaCha8Rng) -> (JointAction, bool) {
    let cfg = env.config();
    let levels = cfg.dispatch_levels.len();
    let chain = cfg.chain;
    let mut valid = true;
    let mut dispatch = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.01) {
            valid = false;
            Dispatch::Level(levels)
        } else {
            Dispatch::Level(rng.random_range(0..levels))
        }
    };
    let cu = NodeAction::cu(dispatch(rng));
    let mut du = Vec::with_capacity(cfg.du_count);
    for _ in 0..cfg.du_count {
        let d = dispatch(rng);
        let splits = cfg
            .traffic_types
            .iter()
            .map(|tt| {
                if tt.pinned_to_du {
                    chain.full()
                } else {
                    SplitPoint::new(rng.random_range(0..=chain.len()), chain).unwrap()
                }
            })
            .collect();
        du.push(NodeAction {
            splits,
            dispatch: d,
        });
    }
    if rng.random_bool(0.01) && !chain.is_empty() {
        du[0].splits[0] = SplitPoint::new(0, chain).unwrap();
        valid = false;
    }
    (JointAction { cu, du }, valid)
}

fn batteries(env: &Environment) -> Vec<f64> {
    env.config()
        .nodes()
        .map(|n| env.battery(n).unwrap().stored)
        .collect()
}

fn check_step(
    env: &Environment,
    action: &JointAction,
    before: &[f64],
    rec: &StepRecord,
) -> Result<(), TestCaseError> {
    let cfg = env.config();
    for a in &action.du {
        for (s, tt) in a.splits.iter().zip(&cfg.traffic_types) {
            prop_assert!(validate_split_chain(&s.assignment(cfg.chain)));
            if tt.pinned_to_du {
                prop_assert_eq!(s.get(), cfg.chain.len());
            }
        }
    }
    for (n, node) in cfg.nodes().enumerate() {
        let step = &rec.nodes[n];
        let cap = cfg.node_config(node).battery_capacity;
        prop_assert!(step.stored_after >= 0.0 && step.stored_after <= cap);
        prop_assert!(step.dispatch >= 0.0);
        prop_assert!(step.dispatch <= step.energy, "{node}: p > E");
        prop_assert!(
            step.dispatch <= before[n] + step.generation,
            "{node}: p exceeds stored plus harvest"
        );
    }
    Ok(())
}

fn constraint_suite() -> Verdict {
    let steps = Cell::new(0usize);
    let rejected = Cell::new(0usize);
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        rng_algorithm: proptest::test_runner::RngAlgorithm::ChaCha,
        ..Config::default()
    });
    let strategy = (1usize..=3, 1usize..=5, any::<u64>());
    let (result, elapsed) = timed(|| {
        runner.run(&strategy, |(du_count, chain_len, seed)| {
            let mut env = random_env(
                Shape {
                    du_count,
                    chain_len,
                    horizon: STEPS_PER_CASE,
                },
                seed,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            while !env.is_done() {
                let before = batteries(&env);
                let (action, valid) = random_action(&env, &mut rng);
                match env.step(&action) {
                    Ok(rec) => {
                        prop_assert!(valid, "malformed action accepted");
                        check_step(&env, &action, &before, &rec)?;
                        steps.set(steps.get() + 1);
                    }
                    Err(_) => {
                        prop_assert!(!valid, "valid action rejected");
                        prop_assert_eq!(batteries(&env), before);
                        rejected.set(rejected.get() + 1);
                    }
                }
            }
            Ok(())
        })
    });
    let detail = format!(
        "{} steps, {} malformed actions rejected",
        steps.get(),
        rejected.get()
    );
    match result {
        Ok(()) => Verdict::new(
            steps.get() >= 10_000 && elapsed < Duration::from_secs(10),
            detail,
        ),
        Err(e) => Verdict::new(false, format!("{detail}; {e}")),
    }
}

// 2 ---------------------------------------------------------------------

/// Largest per-node imbalance `|sum G - (sum p + delta b + sum unstored)|`.
fn conservation_gap(env: &Environment, records: &[StepRecord]) -> f64 {
    let cfg = env.config();
    cfg.nodes()
        .enumerate()
        .map(|(n, node)| {
            let initial = cfg.node_config(node).battery_capacity * cfg.initial_battery_fraction;
            let last = records.last().map_or(initial, |r| r.nodes[n].stored_after);
            let generated: NeumaierSum = records.iter().map(|r| r.nodes[n].generation).collect();
            let mut used: NeumaierSum = records
                .iter()
                .flat_map(|r| [r.nodes[n].dispatch, r.nodes[n].unstored])
                .collect();
            used.add(last);
            used.add(-initial);
            (generated.value() - used.value()).abs()
        })
        .fold(0.0, f64::max)
}

fn conservation() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    let mut check = |env: &mut Environment, policy: &mut dyn Policy| {
        let records = run_policy(env, policy).unwrap();
        let g = conservation_gap(env, &records);
        worst = worst.max(g);
        runs += 1;
    };

    let reference = ScenarioConfig::default();
    for policy in [StaticPolicy::Dran, StaticPolicy::Cran] {
        let mut env = reference.build_env(1, false).unwrap();
        let mut policy = policy;
        check(&mut env, &mut policy);
    }
    let five = scenario("five_du_year.toml");
    for seed in 1..=3 {
        let mut env = five.build_env(seed, false).unwrap();
        check(&mut env, &mut RandomPolicy::new(seed));
    }
    for seed in 0..20 {
        let shape = Shape {
            du_count: 1 + seed as usize % 3,
            chain_len: 1 + seed as usize % 4,
            horizon: 500,
        };
        let mut env = random_env(shape, seed);
        check(&mut env, &mut RandomPolicy::new(seed));
    }
    Verdict::new(
        worst <= 1e-9,
        format!("{runs} runs, worst gap {worst:.2e} kWh"),
    )
}

// 3 ---------------------------------------------------------------------

/// Every joint action for one DU: the splittable type's split point, the DU
/// dispatch level and the CU dispatch level.
fn joint_actions(env: &Environment) -> Vec<JointAction> {
    let cfg = env.config();
    let levels = cfg.dispatch_levels.len();
    let mut out = Vec::new();
    for k in 0..=cfg.chain.len() {
        for du_level in 0..levels {
            for cu_level in 0..levels {
                let splits = cfg
                    .traffic_types
                    .iter()
                    .map(|tt| {
                        if tt.pinned_to_du {
                            cfg.chain.full()
                        } else {
                            SplitPoint::new(k, cfg.chain).unwrap()
                        }
                    })
                    .collect();
                out.push(JointAction {
                    cu: NodeAction::cu(Dispatch::Level(cu_level)),
                    du: vec![NodeAction {
                        splits,
                        dispatch: Dispatch::Level(du_level),
                    }],
                });
            }
        }
    }
    out
}

/// Minimum total cost over all action sequences, by stepping clones of the
/// environment. Costs accumulate in time order from zero.
fn brute_force(env: &Environment, actions: &[JointAction], so_far: f64) -> f64 {
    if env.is_done() {
        return so_far;
    }
    actions
        .iter()
        .map(|a| {
            let mut next = env.clone();
            let rec = next.step(a).unwrap();
            brute_force(&next, actions, so_far + rec.opex)
        })
        .fold(f64::INFINITY, f64::min)
}

fn oracle_equivalence() -> Verdict {
    let mut mismatches = Vec::new();
    let mut instances = 0;
    let (_, elapsed) = timed(|| {
        for horizon in 1..=4 {
            for seed in 0..3 {
                let env = random_env(
                    Shape {
                        du_count: 1,
                        chain_len: 2,
                        horizon,
                    },
                    100 * horizon as u64 + seed,
                );
                let actions = joint_actions(&env);
                assert_eq!(actions.len(), 27);
                let exhaustive = brute_force(&env, &actions, 0.0);
                let sol =
                    solve_oracle(&env, OracleDispatch::Levels, &OracleLimits::default()).unwrap();
                let mut replay = env.clone();
                let replayed: f64 = run_policy(&mut replay, &mut ReplayPolicy::new(sol.actions))
                    .unwrap()
                    .iter()
                    .fold(0.0, |acc, r| acc + r.opex);
                if exhaustive.to_bits() != sol.total_opex.to_bits()
                    || replayed.to_bits() != sol.total_opex.to_bits()
                {
                    mismatches.push(format!(
                        "T={horizon} seed {seed}: brute {exhaustive} oracle {} replay {replayed}",
                        sol.total_opex
                    ));
                }
                instances += 1;
            }
        }
    });
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(60);
    let mut detail = format!("{instances} instances, T in 1..=4, 27 joint actions per step");
    if !mismatches.is_empty() {
        detail += &format!("; {}", mismatches.join("; "));
    }
    Verdict::new(pass, detail)
}

// 4 ---------------------------------------------------------------------

fn rl_convergence() -> Verdict {
    let cfg = scenario("miniature.toml");
    assert!(cfg.policy.learning.episodes <= 2000);
    let (ratios, elapsed) = timed(|| {
        cfg.run
            .seeds
            .iter()
            .map(|&seed| {
                let env = cfg.build_env(seed, false).unwrap();
                let optimum = solve_oracle(&env, cfg.oracle.dispatch(), &cfg.oracle.limits())
                    .unwrap()
                    .total_opex;
                let agents = train_seed(&cfg, PolicyKind::RldfsQl, seed).unwrap().agents;
                let learned = evaluate_seed(&cfg, PolicyKind::RldfsQl, seed, None, Some(agents))
                    .unwrap()
                    .summary
                    .total_opex;
                learned / optimum
            })
            .collect::<Vec<f64>>()
    });
    let close = ratios.iter().filter(|r| **r <= 1.05).count();
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    Verdict::new(
        close >= 4 && elapsed < Duration::from_secs(300),
        format!(
            "{close}/{} seeds within 5% of the optimum, ratios [{}]",
            ratios.len(),
            shown.join(", ")
        ),
    )
}

// 5 ---------------------------------------------------------------------

fn median_cost(cfg: &ScenarioConfig, kind: PolicyKind) -> f64 {
    let costs: Vec<f64> = cfg
        .run
        .seeds
        .iter()
        .map(|&seed| {
            let agents = kind
                .is_learned()
                .then(|| train_seed(cfg, kind, seed).unwrap().agents);
            evaluate_seed(cfg, kind, seed, None, agents)
                .unwrap()
                .summary
                .total_opex
        })
        .collect();
    median(&costs).unwrap()
}

fn beats_baselines() -> Verdict {
    let base = scenario("five_du_year.toml");
    assert_eq!(base.run.seeds.len(), 5);
    let mut pass = true;
    let mut parts = Vec::new();
    let (_, elapsed) = timed(|| {
        for scale in [0.5, 1.0, 1.5] {
            let mut cfg = base.clone();
            cfg.traffic.intensity = scale;
            let best = median_cost(&cfg, PolicyKind::Dran).min(median_cost(&cfg, PolicyKind::Cran));
            let mut line = format!("x{scale}:");
            for kind in [PolicyKind::RldfsQl, PolicyKind::RldfsSarsa] {
                let cost = median_cost(&cfg, kind);
                pass &= cost <= 0.98 * best;
                line += &format!(" {kind} {:+.1}%", 100.0 * (cost / best - 1.0));
            }
            parts.push(line);
        }
    });
    Verdict::new(
        pass && elapsed < Duration::from_secs(1800),
        format!("median vs best baseline, {}", parts.join(", ")),
    )
}

// 6 ---------------------------------------------------------------------

fn sweep_monotonicity() -> Verdict {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = scenario("sweep_single_du.toml");
    cfg.run.out = out.path().to_path_buf();
    let values = [50.0, 100.0, 200.0];
    let mut pass = true;
    let mut parts = Vec::new();
    for axis in [SweepAxis::Panel, SweepAxis::Battery] {
        let rows = cmd_sweep(&cfg, axis, &values).unwrap();
        for &kind in &cfg.sweep.policies {
            let costs: Vec<f64> = rows
                .iter()
                .filter(|r| r.policy == kind.name())
                .map(|r| r.total_opex)
                .collect();
            assert_eq!(costs.len(), values.len());
            let slack = if kind == PolicyKind::Oracle {
                1.0
            } else {
                1.01
            };
            let ok = costs.windows(2).all(|w| w[1] <= w[0] * slack);
            pass &= ok;
            let shown: Vec<String> = costs.iter().map(|c| format!("{c:.3}")).collect();
            parts.push(format!(
                "{} {kind} [{}]{}",
                axis.name(),
                shown.join(" "),
                if ok { "" } else { " not monotone" }
            ));
        }
    }
    Verdict::new(pass, parts.join(", "))
}

// 7 ---------------------------------------------------------------------

fn update_rules() -> Verdict {
    let p = LearningParams::default();
    assert_eq!((p.learning_rate, p.discount), (0.05, 0.9));
    let mut failures = Vec::new();
    let mut expect = |what: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{what}: {got} != {want}"));
        }
    };

    let mut q = QTable::new(2, 3);
    expect("q first", q_update(&mut q, 0, 1, -1.0, Some(1), &p), -0.05);
    expect(
        "q second",
        q_update(&mut q, 0, 1, -1.0, Some(1), &p),
        -0.0975,
    );
    let mut q = QTable::new(2, 3);
    expect(
        "q zero reward",
        q_update(&mut q, 0, 0, 0.0, Some(1), &p),
        0.0,
    );
    let mut q = QTable::new(2, 3);
    expect(
        "sarsa first",
        sarsa_update(&mut q, 0, 0, -1.0, Some((1, 2)), &p),
        -0.05,
    );

    let myopic = LearningParams { discount: 0.0, ..p };
    let mut q = QTable::new(2, 3);
    q.set(0, 0, 0.4);
    q.set(1, 2, 7.0);
    let mut s = q.clone();
    expect(
        "q myopic",
        q_update(&mut q, 0, 0, -1.0, Some(1), &myopic),
        0.4 + 0.05 * (-1.0 - 0.4),
    );
    expect(
        "sarsa myopic",
        sarsa_update(&mut s, 0, 0, -1.0, Some((1, 1)), &myopic),
        0.4 + 0.05 * (-1.0 - 0.4),
    );

    // greedy next action: the two rules coincide bit for bit
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut differ = 0;
    for _ in 0..1000 {
        let mut a = QTable::new(4, 5);
        for st in 0..4 {
            for ac in 0..5 {
                a.set(st, ac, rng.random_range(-2.0..2.0));
            }
        }
        let mut b = a.clone();
        let (st, ac, next) = (
            rng.random_range(0..4),
            rng.random_range(0..5),
            rng.random_range(0..4),
        );
        let r = rng.random_range(-1.0..0.0);
        let greedy = a.argmax(next);
        let x = q_update(&mut a, st, ac, r, Some(next), &p);
        let y = sarsa_update(&mut b, st, ac, r, Some((next, greedy)), &p);
        if x.to_bits() != y.to_bits() {
            differ += 1;
        }
    }
    if differ > 0 {
        failures.push(format!("{differ} greedy-next cases differ"));
    }
    Verdict::new(
        failures.is_empty(),
        if failures.is_empty() {
            "hand sequences to 1e-12, greedy SARSA equals Q-learning".to_string()
        } else {
            failures.join("; ")
        },
    )
}

// 8 ---------------------------------------------------------------------

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Every command once, writing under `out`.
fn run_all_commands(out: &Path) {
    let mut mini = scenario("miniature.toml");
    mini.run.out = out.join("train");
    let trained = mini.run.out.clone();
    cmd_train(&mini).unwrap();
    for kind in [PolicyKind::RldfsQl, PolicyKind::Dran, PolicyKind::Cran] {
        mini.policy.kind = kind;
        mini.run.out = out.join("evaluate");
        cmd_evaluate(&mini, Some(&trained)).unwrap();
    }
    mini.run.out = out.join("oracle");
    cmd_oracle(&mini).unwrap();
    let mut sweep = scenario("sweep_single_du.toml");
    sweep.run.out = out.join("sweep");
    sweep.run.seeds = vec![1, 2];
    cmd_sweep(&sweep, SweepAxis::Battery, &[50.0, 200.0]).unwrap();
    let mut five = scenario("five_du_year.toml");
    five.run.out = out.join("five");
    five.run.seeds = vec![3];
    five.policy.learning.episodes = 200;
    five.policy.kind = PolicyKind::RldfsSarsa;
    cmd_train(&five).unwrap();
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all_commands(a.path());
    run_all_commands(b.path());
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let csvs = fa
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .count();
    let same = fa == fb;
    let differing: Vec<String> = fa
        .iter()
        .filter(|(p, body)| fb.get(*p) != Some(*body))
        .map(|(p, _)| p.display().to_string())
        .collect();
    Verdict::new(
        same && csvs > 0,
        if same {
            format!("{csvs} CSV files byte-identical across reruns")
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}
