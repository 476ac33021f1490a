//! Property suite: every structural and cross-module invariant of the
//! library as a named check with a pass/fail result.

use std::time::Instant;

use rayon::prelude::*;

use crate::mdp::{
    discounted_value_iteration, monotonicity_violations, solve, solve_model, AgeMdp, BufferedAgeMdp,
    BufferedStateSpace, PolicyTable, SolveOptions, TruncatedMdp, TruncatedStateSpace,
};
use crate::network::{age_step, immediate_cost, ArrivalModel, Decision, NetworkState, RandomSource};
use crate::oracle::{
    brute_force_optimal, check_switch_structure, evaluate_policy_exact, simulate_truncated, stationary_distribution,
    threshold_chain,
};
use crate::schedulers::{
    baseline_decide, index_decide, index_online_decide, mdp_online_decide_and_learn, BaselineKind, BaselineScheduler,
    BufferedMdpScheduler, IndexScheduler, Observation, OnlineValueStore, Outcome, PostActionState, RateEstimator,
    SchedulerPolicy, StepSchedule, StructuralMdpScheduler, ThresholdScheduler,
};
use crate::sim::{run, SimConfig};
use crate::whittle::{
    optimal_threshold, threshold_average_cost, threshold_cost_real, threshold_steady_state, whittle_index,
    ThresholdPolicy,
};

/// Index formula under test, `(age, arrived, p) -> index`.
pub type IndexFn = fn(u64, bool, f64) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub index: IndexFn,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            index: whittle_index,
            seed: 20_240_601,
        }
    }
}

type CheckFn = fn(&VerifyOptions) -> Result<String, String>;

#[derive(Clone, Copy)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    run: CheckFn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn id(&self) -> String {
        format!("{}/{}", self.module, self.name)
    }
}

pub fn checks() -> Vec<Check> {
    macro_rules! c {
        ($m:literal, $n:literal, $f:expr) => {
            Check {
                module: $m,
                name: $n,
                run: $f,
            }
        };
    }
    vec![
        c!("network", "cost_at_least_user_count", network_cost_lower_bound),
        c!("network", "idle_steps_compose", network_idle_composition),
        c!("network", "cost_matches_dynamics", network_cost_dynamics),
        c!("mdp", "value_monotone_in_age", mdp_monotonicity),
        c!("mdp", "switch_structure", mdp_switch_structure),
        c!("mdp", "oracle_equivalence", mdp_oracle_equivalence),
        c!("mdp", "truncation_convergence", mdp_truncation),
        c!("mdp", "structural_matches_plain", mdp_structural_vs_plain),
        c!("whittle", "threshold_cost_vs_simulation", whittle_cost_vs_sim),
        c!("whittle", "steady_state_vs_linear_solve", whittle_steady_state),
        c!("whittle", "index_tie_identity", whittle_tie_identity),
        c!("whittle", "index_monotone", whittle_index_monotone),
        c!("whittle", "cost_strictly_convex", whittle_convexity),
        c!("whittle", "indexability", whittle_indexability),
        c!("schedulers", "equal_rates_serve_oldest", sched_equal_rates),
        c!("schedulers", "online_index_with_true_rates", sched_online_index),
        c!("schedulers", "online_mdp_update_rule", sched_online_mdp),
        c!("schedulers", "offline_policies_stateless", sched_stateless),
        c!("sim", "cost_accounting", sim_cost_accounting),
        c!("sim", "index_beats_random", sim_index_vs_random),
        c!("sim", "buffer_never_hurts", sim_buffer),
        c!("sim", "reproducible", sim_reproducible),
        c!("oracle", "power_iteration_agrees", oracle_self_consistency),
        c!("oracle", "optimum_certified", oracle_certified),
        c!("oracle", "simulation_matches_exact", oracle_sim_vs_exact),
    ]
}

pub fn run_check(check: &Check, opts: &VerifyOptions) -> CheckResult {
    let start = Instant::now();
    let outcome = (check.run)(opts);
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        module: check.module,
        name: check.name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every check in parallel; results keep the order of [`checks`].
pub fn run_all(opts: &VerifyOptions) -> Vec<CheckResult> {
    checks().par_iter().map(|c| run_check(c, opts)).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn model(p: &[f64]) -> ArrivalModel {
    ArrivalModel::new(p.to_vec()).expect("valid probabilities")
}

fn age_mdp(p: &[f64], m: usize) -> AgeMdp {
    AgeMdp::new(TruncatedStateSpace::new(p.len(), m).expect("m > N"), model(p)).expect("sizes match")
}

fn random_state(rng: &mut RandomSource, users: usize, max_age: usize) -> NetworkState {
    let ages = (0..users).map(|_| 1 + rng.below(max_age) as u64).collect();
    let arrivals = (0..users).map(|_| rng.bernoulli(0.5)).collect();
    NetworkState::new(ages, arrivals).expect("ages are positive")
}

fn fig5_grid() -> Vec<ArrivalModel> {
    (1..=9).map(|k| model(&[0.6, k as f64 / 10.0])).collect()
}

fn network_cost_lower_bound(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed);
    for _ in 0..20_000 {
        let n = 1 + rng.below(6);
        let s = random_state(&mut rng, n, 100);
        for t in 0..=n {
            let c = immediate_cost(&s, Decision::new(t));
            ensure(c >= n as u64, || format!("cost {c} < {n} at {s:?}, decision {t}"))?;
        }
    }
    Ok("20000 random states".into())
}

fn network_idle_composition(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed ^ 1);
    for _ in 0..2_000 {
        let n = 1 + rng.below(5);
        let start = random_state(&mut rng, n, 50);
        let steps = 1 + rng.below(200) as u64;
        let mut s = start.clone();
        for _ in 0..steps {
            let arr: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
            s = age_step(&s, Decision::IDLE, &arr).map_err(|e| e.to_string())?;
        }
        let want: Vec<u64> = start.ages().iter().map(|a| a + steps).collect();
        ensure(s.ages() == want.as_slice(), || {
            format!("{start:?} after {steps} idle slots gave {:?}", s.ages())
        })?;
    }
    Ok("2000 random walks".into())
}

fn network_cost_dynamics(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed ^ 2);
    for _ in 0..20_000 {
        let n = 1 + rng.below(6);
        let s = random_state(&mut rng, n, 100);
        let arr: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        for t in 0..=n {
            let d = Decision::new(t);
            let next = age_step(&s, d, &arr).map_err(|e| e.to_string())?;
            ensure(immediate_cost(&s, d) == next.total_age(), || {
                format!("{s:?} decision {t}")
            })?;
        }
    }
    Ok("20000 random states".into())
}

fn mdp_monotonicity(_: &VerifyOptions) -> Result<String, String> {
    let mut tables = 0;
    for p in [[0.9, 0.9], [0.9, 0.5], [0.6, 0.5], [0.3, 0.7]] {
        let mdp = age_mdp(&p, 10);
        for discount in [0.5, 0.9, 0.99] {
            for iters in [1, 5, 50] {
                let v = discounted_value_iteration(&mdp, discount, iters).map_err(|e| e.to_string())?;
                let bad = monotonicity_violations(&mdp, &v, 1e-9);
                ensure(bad.is_empty(), || {
                    format!("p={p:?} discount {discount} after {iters}: {:?}", &bad[..1])
                })?;
                tables += 1;
            }
        }
        let sol = solve_model(&mdp, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let bad = monotonicity_violations(&mdp, &sol.values, 1e-7);
        ensure(bad.is_empty(), || format!("p={p:?} converged table: {:?}", &bad[..1]))?;
        tables += 1;
    }
    Ok(format!("{tables} value tables"))
}

fn mdp_switch_structure(_: &VerifyOptions) -> Result<String, String> {
    let cases: [(&[f64], usize); 5] = [
        (&[0.9, 0.9], 10),
        (&[0.9, 0.5], 10),
        (&[0.6, 0.2], 20),
        (&[0.3, 0.8], 15),
        (&[0.8, 0.5, 0.3], 6),
    ];
    for (p, m) in cases {
        let sol = solve(&model(p), m, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let space = TruncatedStateSpace::new(p.len(), m).map_err(|e| e.to_string())?;
        let bad = check_switch_structure(&sol.policy, &space);
        ensure(bad.is_empty(), || {
            let (a, b) = bad[0];
            format!(
                "p={p:?} m={m}: serves at {:?} but not at {:?}",
                space.decode(a),
                space.decode(b)
            )
        })?;
    }
    Ok("5 configurations".into())
}

fn mdp_oracle_equivalence(_: &VerifyOptions) -> Result<String, String> {
    let grid = [0.3, 0.7, 1.0];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for m in [3, 4] {
        let mut instances: Vec<Vec<f64>> = grid.iter().map(|&a| vec![a]).collect();
        instances.extend(grid.iter().flat_map(|&a| grid.iter().map(move |&b| vec![a, b])));
        for p in instances {
            let mdp = age_mdp(&p, m);
            let bf = brute_force_optimal(&mdp, 1 << 16).map_err(|e| format!("p={p:?} m={m}: {e}"))?;
            let sol = solve_model(&mdp, &SolveOptions::default()).map_err(|e| e.to_string())?;
            let gap = (bf.average_cost - sol.average_cost).abs();
            worst = worst.max(gap);
            count += 1;
            ensure(gap < 1e-6, || {
                format!(
                    "p={p:?} m={m}: solver {} vs oracle {}",
                    sol.average_cost, bf.average_cost
                )
            })?;
        }
    }
    Ok(format!("{count} instances, largest gap {worst:.1e}"))
}

fn mdp_truncation(_: &VerifyOptions) -> Result<String, String> {
    let costs: Vec<f64> = [10, 20, 30]
        .iter()
        .map(|&m| solve(&model(&[0.6, 0.5]), m, &SolveOptions::default()).map(|s| s.average_cost))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (near, far) = ((costs[1] - costs[2]).abs(), (costs[0] - costs[2]).abs());
    ensure(near < far, || format!("costs {costs:?}"))?;
    Ok(format!(
        "m=10,20,30 give {:.6}, {:.6}, {:.6}",
        costs[0], costs[1], costs[2]
    ))
}

fn mdp_structural_vs_plain(_: &VerifyOptions) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for p in [[0.9, 0.9], [0.9, 0.5], [0.3, 0.7], [0.6, 0.1]] {
        let mdp = age_mdp(&p, 10);
        let fast = solve_model(&mdp, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let plain = solve_model(
            &mdp,
            &SolveOptions {
                structural: false,
                ..SolveOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let diff = fast.values.max_abs_diff(&plain.values);
        worst = worst.max(diff);
        ensure(fast.policy == plain.policy, || format!("p={p:?}: policies differ"))?;
        ensure(diff < 1e-9, || format!("p={p:?}: values differ by {diff:e}"))?;
    }
    Ok(format!("4 configurations, largest value gap {worst:.1e}"))
}

fn whittle_cost_vs_sim(o: &VerifyOptions) -> Result<String, String> {
    let cases: Vec<(u64, f64, f64)> = [1u64, 2, 5]
        .iter()
        .flat_map(|&x| {
            [0.2, 0.5, 0.9]
                .into_iter()
                .flat_map(move |p| [0.0, 1.0, 5.0].map(|c| (x, p, c)))
        })
        .collect();
    let errors: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|&(x, p, c)| {
            let cfg = SimConfig::new(model(&[p]), 1_000_000, o.seed ^ x ^ (p.to_bits() >> 3) ^ c.to_bits());
            let mut policy = ThresholdScheduler(ThresholdPolicy::new(x).map_err(|e| e.to_string())?);
            let m = run(&mut policy, &cfg).map_err(|e| e.to_string())?;
            let sim = m.avg_total_age + c * m.update_counts[0] as f64 / cfg.horizon as f64;
            let exact = threshold_average_cost(x, p, c).map_err(|e| e.to_string())?;
            let rel = (sim - exact).abs() / exact;
            ensure(rel < 0.01, || format!("X={x} p={p} c={c}: simulated {sim} vs {exact}"))?;
            Ok(rel)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for e in errors {
        worst = worst.max(e?);
    }
    Ok(format!("27 cases, largest relative error {:.3}%", 100.0 * worst))
}

fn whittle_steady_state(_: &VerifyOptions) -> Result<String, String> {
    let k = 200;
    for x in [1u64, 2, 5, 10] {
        for p in [0.1, 0.5, 0.9, 1.0] {
            let pi = stationary_distribution(&threshold_chain(x, p, k).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let ss = threshold_steady_state(x, p, k).map_err(|e| e.to_string())?;
            for (i, (&got, &prob)) in pi.iter().zip(&ss.probs).enumerate() {
                let closed = prob + if i == k - 1 { ss.tail } else { 0.0 };
                ensure((got - closed).abs() < 1e-9, || {
                    format!("X={x} p={p} age {}: {got} vs {closed}", i + 1)
                })?;
            }
        }
    }
    Ok("16 chains with 200 states".into())
}

fn whittle_tie_identity(o: &VerifyOptions) -> Result<String, String> {
    for k in 1..=10 {
        let p = k as f64 / 10.0;
        for x in 1..=50u64 {
            let c = (o.index)(x, true, p);
            let a = threshold_cost_real(x as f64, p, c);
            let b = threshold_cost_real(x as f64 + 1.0, p, c);
            ensure((a - b).abs() <= 1e-9 * a.abs().max(1.0), || {
                format!(
                    "at update cost c = index({x}, p={p}) = {c} the average costs of thresholds {x} and {} differ: {a} vs {b}",
                    x + 1
                )
            })?;
        }
    }
    Ok("x in 1..50, 10 arrival rates".into())
}

fn whittle_index_monotone(_: &VerifyOptions) -> Result<String, String> {
    let ps: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
    for &p in &ps {
        for x in 1..200u64 {
            ensure(whittle_index(x + 1, true, p) > whittle_index(x, true, p), || {
                format!("x={x} p={p}")
            })?;
        }
    }
    for x in 1..200u64 {
        for w in ps.windows(2) {
            ensure(whittle_index(x, true, w[1]) < whittle_index(x, true, w[0]), || {
                format!("x={x} p={} -> {}", w[0], w[1])
            })?;
        }
    }
    Ok("x in 1..200, 20 arrival rates".into())
}

fn whittle_convexity(_: &VerifyOptions) -> Result<String, String> {
    let mut cases = 0;
    for k in 1..=10 {
        let p = k as f64 / 10.0;
        for c in [0.0, 0.5, 1.0, 5.0, 40.0] {
            if p == 1.0 && c == 0.0 {
                // cost (x + 1) / 2 is linear there
                continue;
            }
            for x in 2..200u64 {
                let g = |t: u64| threshold_cost_real(t as f64, p, c);
                let second = g(x + 1) - 2.0 * g(x) + g(x - 1);
                ensure(second > 0.0, || {
                    format!("x={x} p={p} c={c}: second difference {second:e}")
                })?;
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} (p, c) pairs, x in 2..200"))
}

fn whittle_indexability(_: &VerifyOptions) -> Result<String, String> {
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.5).collect();
    for k in 1..=10 {
        let p = k as f64 / 10.0;
        let mut prev = 0;
        for &c in &grid {
            let x = optimal_threshold(p, c).map_err(|e| e.to_string())?;
            ensure(x >= prev, || {
                format!("p={p}: threshold drops from {prev} to {x} at c={c}")
            })?;
            prev = x;
            // brute-force argmin over thresholds, idling on ties
            let mut best = (1u64, f64::INFINITY);
            for t in 1..=200u64 {
                let v = threshold_cost_real(t as f64, p, c);
                if v <= best.1 + 1e-12 * v.abs().max(1.0) {
                    best = (t, v.min(best.1));
                }
            }
            ensure(best.0 == x, || {
                format!("p={p} c={c}: scan gives {} but interval rule gives {x}", best.0)
            })?;
        }
    }
    Ok("101 costs, 10 arrival rates".into())
}

fn sched_equal_rates(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed ^ 3);
    let mut cursor = 0;
    for _ in 0..50_000 {
        let n = 1 + rng.below(8);
        let s = random_state(&mut rng, n, 60);
        let p = 0.01 + 0.99 * rng.below(1000) as f64 / 999.0;
        let a = index_decide(&s, &vec![p; n]);
        let b = baseline_decide(BaselineKind::MaxAgeArrival, &s, &mut rng, &mut cursor);
        ensure(a == b, || format!("{s:?} p={p}: index {a}, oldest {b}"))?;
    }
    Ok("50000 observations".into())
}

fn sched_online_index(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed ^ 4);
    for _ in 0..20_000 {
        let n = 1 + rng.below(6);
        let slots = 1 + rng.below(5000) as u64;
        let mut est = RateEstimator::new(n);
        for _ in 0..slots {
            let arr: Vec<bool> = (0..n).map(|i| rng.bernoulli(0.1 + 0.15 * i as f64)).collect();
            est.observe(&arr);
        }
        let s = random_state(&mut rng, n, 80);
        let probs = est.estimates();
        // a present packet forces a positive estimate in real runs
        if s.arrivals().iter().zip(&probs).any(|(&a, &p)| a && p == 0.0) {
            continue;
        }
        let a = index_online_decide(&est, &s);
        let b = index_decide(&s, &probs);
        ensure(a == b, || format!("{s:?} rates {probs:?}: {a} vs {b}"))?;
    }
    Ok("20000 observations".into())
}

fn sched_online_mdp(o: &VerifyOptions) -> Result<String, String> {
    let probs = [0.6, 0.5];
    let space = TruncatedStateSpace::new(2, 10).map_err(|e| e.to_string())?;
    let mut store = OnlineValueStore::new(space.clone(), StepSchedule::new(0.01));
    let mut post = PostActionState::reference(2);
    let mut rng = RandomSource::new(o.seed ^ 5);
    let reference = space.reference();
    for slot in 0..1_000_000u64 {
        let arr: Vec<bool> = probs.iter().map(|&p| rng.bernoulli(p)).collect();
        let before = store.values().to_vec();
        let entering = space.ordinal(&post.ages, &post.arrivals).expect("in range");
        let old_post = post.clone();
        let d = mdp_online_decide_and_learn(&mut store, &mut post, &arr, slot).map_err(|e| e.to_string())?;
        if slot < 10_000 {
            let cost = old_post.ages.iter().map(|x| x + 1).sum::<u64>()
                - d.user_index().filter(|&i| arr[i]).map_or(0, |i| old_post.ages[i]);
            let next = space.ordinal(&post.ages, &arr).expect("in range");
            let gamma = StepSchedule::new(0.01).at(slot);
            let target = cost as f64 + before[next] - before[reference];
            let want = (1.0 - gamma) * before[entering] + gamma * target;
            ensure(
                (store.values()[entering] - want).abs() <= 1e-12 * want.abs().max(1.0),
                || {
                    format!(
                        "slot {slot}: updated value {} expected {want}",
                        store.values()[entering]
                    )
                },
            )?;
            let changed = store.values().iter().zip(&before).filter(|(a, b)| a != b).count();
            ensure(changed <= 1, || format!("slot {slot}: {changed} entries changed"))?;
        }
    }
    ensure(store.values().iter().all(|v| v.is_finite()), || {
        "non-finite value".into()
    })?;
    Ok("1e6 slots, update rule replayed for the first 1e4".into())
}

/// Records the decision sequence and the independently computed cost.
struct Recorder<P> {
    inner: P,
    decisions: Vec<Decision>,
    cost: u128,
}

impl<P> Recorder<P> {
    fn new(inner: P) -> Self {
        Self {
            inner,
            decisions: Vec::new(),
            cost: 0,
        }
    }
}

impl<P: SchedulerPolicy> SchedulerPolicy for Recorder<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn user_count(&self) -> usize {
        self.inner.user_count()
    }

    fn decide(&mut self, obs: &Observation<'_>, slot: u64) -> Decision {
        let d = self.inner.decide(obs, slot);
        self.decisions.push(d);
        self.cost += immediate_cost(obs.state, d) as u128;
        d
    }

    fn observe_outcome(&mut self, outcome: &Outcome<'_>) {
        self.inner.observe_outcome(outcome)
    }

    fn reset(&mut self) {
        self.inner.reset();
        self.decisions.clear();
        self.cost = 0;
    }
}

fn offline_policies(p: &[f64], seed: u64) -> Result<Vec<Box<dyn SchedulerPolicy>>, String> {
    let sol = solve(&model(p), 10, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let space = TruncatedStateSpace::new(p.len(), 10).map_err(|e| e.to_string())?;
    Ok(vec![
        Box::new(StructuralMdpScheduler::new(space, sol.policy).map_err(|e| e.to_string())?),
        Box::new(IndexScheduler::new(p.to_vec())),
        Box::new(BaselineScheduler::new(BaselineKind::MaxAgeArrival, p.len(), seed)),
        Box::new(BaselineScheduler::new(BaselineKind::RandomArrival, p.len(), seed)),
        Box::new(BaselineScheduler::new(BaselineKind::RoundRobin, p.len(), seed)),
    ])
}

fn sched_stateless(o: &VerifyOptions) -> Result<String, String> {
    let p = [0.6, 0.3];
    let cfg = SimConfig::new(model(&p), 20_000, o.seed);
    for policy in offline_policies(&p, o.seed)? {
        let mut r = Recorder::new(policy);
        run(&mut r, &cfg).map_err(|e| e.to_string())?;
        let first = std::mem::take(&mut r.decisions);
        run(&mut r, &cfg).map_err(|e| e.to_string())?;
        ensure(first == r.decisions, || format!("{} changed its decisions", r.name()))?;
    }
    Ok("5 policies, 20000 slots".into())
}

fn sim_cost_accounting(o: &VerifyOptions) -> Result<String, String> {
    let p = [0.6, 0.3];
    let cfg = SimConfig::new(model(&p), 50_000, o.seed ^ 6);
    for policy in offline_policies(&p, o.seed)? {
        let mut r = Recorder::new(policy);
        let m = run(&mut r, &cfg).map_err(|e| e.to_string())?;
        let per_user: f64 = m.per_user_avg_age.iter().sum::<f64>() * cfg.horizon as f64;
        let total = m.avg_total_age * cfg.horizon as f64;
        ensure(
            total == r.cost as f64 && (per_user - total).abs() < 1e-6 * total,
            || format!("{}: simulator {total} vs summed costs {}", r.name(), r.cost),
        )?;
    }
    Ok("5 policies, 50000 slots".into())
}

fn sim_index_vs_random(o: &VerifyOptions) -> Result<String, String> {
    for (k, m) in fig5_grid().into_iter().enumerate() {
        let cfg = SimConfig::new(m.clone(), 100_000, o.seed + k as u64);
        let idx = run(&mut IndexScheduler::new(m.probs().to_vec()), &cfg).map_err(|e| e.to_string())?;
        let rnd = run(
            &mut BaselineScheduler::new(BaselineKind::RandomArrival, 2, o.seed),
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        ensure(idx.avg_total_age <= rnd.avg_total_age * 1.01, || {
            format!(
                "p={:?}: index {} vs random {}",
                m.probs(),
                idx.avg_total_age,
                rnd.avg_total_age
            )
        })?;
    }
    Ok("9 grid points, 1e5 slots".into())
}

fn sim_buffer(o: &VerifyOptions) -> Result<String, String> {
    let ps = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
    let results: Vec<Result<f64, String>> = ps
        .par_iter()
        .map(|&p| {
            let m = model(&[p, p]);
            let bound = 10;
            let plain = solve(&m, bound, &SolveOptions::default()).map_err(|e| e.to_string())?;
            let bspace = BufferedStateSpace::new(2, bound).map_err(|e| e.to_string())?;
            let bmdp = BufferedAgeMdp::new(bspace.clone(), m.clone()).map_err(|e| e.to_string())?;
            let buffered = solve_model(&bmdp, &SolveOptions::default()).map_err(|e| e.to_string())?;
            ensure(buffered.average_cost <= plain.average_cost + 1e-9, || {
                format!(
                    "p={p}: exact buffered {} vs {}",
                    buffered.average_cost, plain.average_cost
                )
            })?;
            let mut cfg = SimConfig::new(m.clone(), 100_000, o.seed ^ 7);
            let space = TruncatedStateSpace::new(2, bound).map_err(|e| e.to_string())?;
            let a = run(
                &mut StructuralMdpScheduler::new(space, plain.policy).map_err(|e| e.to_string())?,
                &cfg,
            )
            .map_err(|e| e.to_string())?;
            cfg.buffered = true;
            let b = run(
                &mut BufferedMdpScheduler::new(bspace, buffered.policy).map_err(|e| e.to_string())?,
                &cfg,
            )
            .map_err(|e| e.to_string())?;
            ensure(b.avg_total_age <= a.avg_total_age * 1.01, || {
                format!("p={p}: simulated buffered {} vs {}", b.avg_total_age, a.avg_total_age)
            })?;
            Ok((a.avg_total_age - b.avg_total_age) / a.avg_total_age)
        })
        .collect();
    let mut gains = Vec::new();
    for r in results {
        gains.push(format!("{:.1}%", 100.0 * r?));
    }
    Ok(format!("reductions {}", gains.join(", ")))
}

fn sim_reproducible(o: &VerifyOptions) -> Result<String, String> {
    let p = [0.6, 0.3];
    for buffered in [false, true] {
        let mut cfg = SimConfig::new(model(&p), 20_000, o.seed ^ 8);
        cfg.buffered = buffered;
        cfg.trajectory_stride = 100;
        for (a, b) in offline_policies(&p, o.seed)?
            .into_iter()
            .zip(offline_policies(&p, o.seed)?)
        {
            let (mut a, mut b) = (a, b);
            let ma = run(&mut a, &cfg).map_err(|e| e.to_string())?;
            let mb = run(&mut b, &cfg).map_err(|e| e.to_string())?;
            ensure(format!("{ma:?}") == format!("{mb:?}"), || {
                format!("{} differs", ma.policy)
            })?;
        }
    }
    Ok("5 policies, both network variants".into())
}

fn random_policy(mdp: &AgeMdp, rng: &mut RandomSource) -> PolicyTable {
    let n = mdp.user_count();
    PolicyTable::from_fn(mdp.state_count(), |_| Decision::new(rng.below(n + 1)))
}

fn oracle_self_consistency(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed ^ 9);
    let mut solved = 0;
    for x in [1u64, 3, 7] {
        for p in [0.1, 0.4, 0.95] {
            stationary_distribution(&threshold_chain(x, p, 60).map_err(|e| e.to_string())?)
                .map_err(|e| format!("threshold {x} p={p}: {e}"))?;
            solved += 1;
        }
    }
    for p in [[0.3, 0.7], [0.5, 0.5], [0.9, 0.2]] {
        for m in [3, 4, 6] {
            let mdp = age_mdp(&p, m);
            for _ in 0..5 {
                evaluate_policy_exact(&mdp, &random_policy(&mdp, &mut rng))
                    .map_err(|e| format!("p={p:?} m={m}: {e}"))?;
                solved += 1;
            }
        }
    }
    Ok(format!("{solved} chains"))
}

fn oracle_certified(o: &VerifyOptions) -> Result<String, String> {
    let mut rng = RandomSource::new(o.seed ^ 10);
    let mut compared = 0;
    for p in [vec![0.3], vec![0.8], vec![0.3, 0.7], vec![0.5, 0.9]] {
        for m in [3, 4] {
            let mdp = age_mdp(&p, m);
            let best = brute_force_optimal(&mdp, 1 << 16).map_err(|e| e.to_string())?;
            ensure(best.certificate_gap < 1e-9, || {
                format!("p={p:?} m={m}: gap {}", best.certificate_gap)
            })?;
            let exact = evaluate_policy_exact(&mdp, &best.policy).map_err(|e| e.to_string())?;
            for _ in 0..200 {
                let other = evaluate_policy_exact(&mdp, &random_policy(&mdp, &mut rng)).map_err(|e| e.to_string())?;
                ensure(exact.average_cost <= other.average_cost + 1e-9, || {
                    format!(
                        "p={p:?} m={m}: {} beats the optimum {}",
                        other.average_cost, exact.average_cost
                    )
                })?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} random policies"))
}

fn oracle_sim_vs_exact(o: &VerifyOptions) -> Result<String, String> {
    let mut cases = Vec::new();
    let mut rng = RandomSource::new(o.seed ^ 11);
    for p in [vec![0.3], vec![0.7], vec![0.3, 0.7], vec![0.7, 0.7]] {
        for m in [3, 4] {
            let mdp = age_mdp(&p, m);
            let best = brute_force_optimal(&mdp, 1 << 16).map_err(|e| e.to_string())?.policy;
            cases.push((mdp.clone(), best));
            cases.push((mdp.clone(), random_policy(&mdp, &mut rng)));
        }
    }
    let results: Vec<Result<f64, String>> = cases
        .par_iter()
        .enumerate()
        .map(|(k, (mdp, policy))| {
            let exact = evaluate_policy_exact(mdp, policy)
                .map_err(|e| e.to_string())?
                .average_cost;
            let sim = simulate_truncated(mdp, policy, 1_000_000, o.seed + k as u64);
            let rel = (sim - exact).abs() / exact;
            ensure(rel < 0.01, || format!("case {k}: simulated {sim} vs exact {exact}"))?;
            Ok(rel)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in results {
        worst = worst.max(r?);
    }
    Ok(format!(
        "{} policies, largest relative error {:.3}%",
        cases.len(),
        100.0 * worst
    ))
}
