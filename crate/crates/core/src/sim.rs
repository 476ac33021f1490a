//! Monte-Carlo engine for the untruncated age dynamics.
//!
//! Each slot: the policy sees ages and current arrivals, the decision is
//! applied, the next slot's arrivals are drawn, and the resulting total age
//! `sum_i X_i(t+1)` is accumulated. Arrivals come from stream 0 of the
//! configured seed, so every policy run with the same seed sees the same
//! arrival sequence.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{sample_arrivals_into, ArrivalModel, Decision, ModelError, NetworkState, RandomSource};
use crate::schedulers::{Observation, Outcome, SchedulerPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ArrivalModel,
    pub horizon: u64,
    pub seed: u64,
    /// Leading slots left out of every average.
    pub warmup: u64,
    /// Base station keeps the latest packet of each user.
    pub buffered: bool,
    /// Ages at slot 0; `(1, .., N)` when absent.
    pub initial_ages: Option<Vec<u64>>,
    /// Record the total age every this many slots; 0 disables.
    pub trajectory_stride: u64,
}

impl SimConfig {
    pub fn new(model: ArrivalModel, horizon: u64, seed: u64) -> Self {
        Self {
            model,
            horizon,
            seed,
            warmup: 0,
            buffered: false,
            initial_ages: None,
            trajectory_stride: 0,
        }
    }

    pub fn with_model(&self, model: ArrivalModel) -> Self {
        Self {
            model,
            initial_ages: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::ZeroHorizon);
        }
        if self.warmup >= self.horizon {
            return Err(SimError::WarmupTooLong {
                warmup: self.warmup,
                horizon: self.horizon,
            });
        }
        if let Some(a) = &self.initial_ages {
            NetworkState::new(a.clone(), vec![false; a.len()])?;
            if a.len() != self.model.user_count() {
                return Err(ModelError::LengthMismatch {
                    ages: a.len(),
                    arrivals: self.model.user_count(),
                }
                .into());
            }
        }
        Ok(())
    }

    fn initial_state(&self) -> NetworkState {
        let n = self.model.user_count();
        let ages = self.initial_ages.clone().unwrap_or_else(|| (1..=n as u64).collect());
        NetworkState::new(ages, vec![false; n]).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub policy: String,
    pub probs: Vec<f64>,
    pub horizon: u64,
    pub seed: u64,
    pub warmup: u64,
    pub buffered: bool,
    pub avg_total_age: f64,
    pub per_user_avg_age: Vec<f64>,
    /// Slots in which each user actually received a packet.
    pub update_counts: Vec<u64>,
    /// `(slot, total age entering slot + 1)` samples.
    pub trajectory: Vec<(u64, u64)>,
}

impl SimMetrics {
    pub fn users(&self) -> usize {
        self.probs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("horizon must be at least one slot")]
    ZeroHorizon,
    #[error("warmup of {warmup} slots leaves nothing of a {horizon}-slot horizon")]
    WarmupTooLong { warmup: u64, horizon: u64 },
    #[error("policy serves {policy} users, network has {network}")]
    UserMismatch { policy: usize, network: usize },
    #[error("slot {slot}: policy chose {decision} with only {users} users")]
    InvalidDecision {
        slot: u64,
        decision: Decision,
        users: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("policy construction failed: {0}")]
    Policy(String),
}

struct Accumulator {
    warmup: u64,
    stride: u64,
    per_user: Vec<u128>,
    updates: Vec<u64>,
    trajectory: Vec<(u64, u64)>,
}

impl Accumulator {
    fn new(cfg: &SimConfig) -> Self {
        let n = cfg.model.user_count();
        Self {
            warmup: cfg.warmup,
            stride: cfg.trajectory_stride,
            per_user: vec![0; n],
            updates: vec![0; n],
            trajectory: Vec::new(),
        }
    }

    fn record(&mut self, slot: u64, next_ages: &[u64], updated: Option<usize>) {
        if self.stride > 0 && slot.is_multiple_of(self.stride) {
            self.trajectory.push((slot, next_ages.iter().sum()));
        }
        if slot < self.warmup {
            return;
        }
        for (acc, &a) in self.per_user.iter_mut().zip(next_ages) {
            *acc += a as u128;
        }
        if let Some(i) = updated {
            self.updates[i] += 1;
        }
    }

    fn finish(self, policy: String, cfg: &SimConfig) -> SimMetrics {
        let slots = (cfg.horizon - cfg.warmup) as f64;
        let per_user_avg_age: Vec<f64> = self.per_user.iter().map(|&s| s as f64 / slots).collect();
        let total: u128 = self.per_user.iter().sum();
        SimMetrics {
            policy,
            probs: cfg.model.probs().to_vec(),
            horizon: cfg.horizon,
            seed: cfg.seed,
            warmup: cfg.warmup,
            buffered: cfg.buffered,
            avg_total_age: total as f64 / slots,
            per_user_avg_age,
            update_counts: self.updates,
            trajectory: self.trajectory,
        }
    }
}

fn check_policy<P: SchedulerPolicy + ?Sized>(policy: &P, cfg: &SimConfig) -> Result<(), SimError> {
    cfg.validate()?;
    let n = cfg.model.user_count();
    if policy.user_count() != n {
        return Err(SimError::UserMismatch {
            policy: policy.user_count(),
            network: n,
        });
    }
    Ok(())
}

/// Runs `policy` for `cfg.horizon` slots, using buffered dynamics when
/// `cfg.buffered` is set.
pub fn run<P: SchedulerPolicy + ?Sized>(policy: &mut P, cfg: &SimConfig) -> Result<SimMetrics, SimError> {
    if cfg.buffered {
        return run_buffered(policy, cfg);
    }
    check_policy(policy, cfg)?;
    policy.reset();
    let n = cfg.model.user_count();
    let mut rng = RandomSource::new(cfg.seed).fork(0);
    let mut state = cfg.initial_state();
    let mut arrivals = vec![false; n];
    sample_arrivals_into(&cfg.model, &mut rng, &mut arrivals);
    state.set_arrivals(&arrivals);
    let mut acc = Accumulator::new(cfg);
    for slot in 0..cfg.horizon {
        let decision = policy.decide(&Observation::new(&state), slot);
        if decision.validate(n).is_err() {
            return Err(SimError::InvalidDecision {
                slot,
                decision,
                users: n,
            });
        }
        let current = arrivals.clone();
        let updated = decision.user_index().filter(|&i| current[i]);
        sample_arrivals_into(&cfg.model, &mut rng, &mut arrivals);
        state.advance(decision, &arrivals);
        acc.record(slot, state.ages(), updated);
        policy.observe_outcome(&Outcome {
            decision,
            arrivals: &current,
            next_ages: state.ages(),
        });
    }
    Ok(acc.finish(policy.name(), cfg))
}

/// Buffered dynamics. The buffer of user `i` holds the age `Y_i` of the
/// latest packet: 0 in its arrival slot, one more every slot after. Serving
/// `d` sets `X_d(t+1) = Y_d(t) + 1`; serving a user whose buffer has never
/// been filled changes nothing.
pub fn run_buffered<P: SchedulerPolicy + ?Sized>(policy: &mut P, cfg: &SimConfig) -> Result<SimMetrics, SimError> {
    check_policy(policy, cfg)?;
    policy.reset();
    let n = cfg.model.user_count();
    let mut rng = RandomSource::new(cfg.seed).fork(0);
    let mut state = cfg.initial_state();
    let mut arrivals = vec![false; n];
    let mut buffers: Vec<Option<u64>> = vec![None; n];
    sample_arrivals_into(&cfg.model, &mut rng, &mut arrivals);
    state.set_arrivals(&arrivals);
    refill(&mut buffers, &arrivals);
    let mut acc = Accumulator::new(cfg);
    for slot in 0..cfg.horizon {
        let decision = policy.decide(
            &Observation {
                state: &state,
                buffers: Some(&buffers),
            },
            slot,
        );
        if decision.validate(n).is_err() {
            return Err(SimError::InvalidDecision {
                slot,
                decision,
                users: n,
            });
        }
        let current = arrivals.clone();
        let served = decision.user_index().and_then(|i| buffers[i].map(|y| (i, y)));
        for (i, age) in state.ages_mut().iter_mut().enumerate() {
            *age = match served {
                Some((d, y)) if d == i => y + 1,
                _ => *age + 1,
            };
        }
        for b in buffers.iter_mut().flatten() {
            *b = b.saturating_add(1).min(u64::MAX / 2);
        }
        sample_arrivals_into(&cfg.model, &mut rng, &mut arrivals);
        refill(&mut buffers, &arrivals);
        state.set_arrivals(&arrivals);
        acc.record(slot, state.ages(), served.map(|(i, _)| i));
        policy.observe_outcome(&Outcome {
            decision,
            arrivals: &current,
            next_ages: state.ages(),
        });
    }
    Ok(acc.finish(policy.name(), cfg))
}

fn refill(buffers: &mut [Option<u64>], arrivals: &[bool]) {
    for (b, &a) in buffers.iter_mut().zip(arrivals) {
        if a {
            *b = Some(0);
        }
    }
}

/// Builds a policy for one grid point. The seed is the cell's derived seed
/// and may feed a policy's own randomness.
pub type PolicyFactory<'a> = dyn Fn(&ArrivalModel, u64) -> Result<Box<dyn SchedulerPolicy>, String> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub policy_index: usize,
    pub grid_index: usize,
    pub seed: u64,
    pub result: Result<SimMetrics, SimError>,
}

/// Seed for grid point `index`; every policy at that point shares it.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs every policy on every grid point in parallel. Cells come back in
/// `(grid, policy)` order; failing cells carry their error and do not stop
/// the others.
pub fn sweep(factories: &[&PolicyFactory<'_>], grid: &[ArrivalModel], template: &SimConfig) -> Vec<SweepCell> {
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..factories.len()).map(move |p| (g, p)))
        .collect();
    jobs.into_par_iter()
        .map(|(g, p)| {
            let seed = derive_seed(template.seed, g as u64);
            let cfg = SimConfig {
                seed,
                ..template.with_model(grid[g].clone())
            };
            let result = factories[p](&grid[g], seed)
                .map_err(SimError::Policy)
                .and_then(|mut policy| run(&mut policy, &cfg));
            SweepCell {
                policy_index: p,
                grid_index: g,
                seed,
                result,
            }
        })
        .collect()
}

/// Writes metrics as CSV. Rows with fewer users than the widest row leave
/// the missing per-user columns empty.
pub fn write_metrics_csv<W: Write>(rows: &[SimMetrics], out: W) -> csv::Result<()> {
    let width = rows.iter().map(SimMetrics::users).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["policy".to_string(), "N".into()];
    header.extend((1..=width).map(|i| format!("p_{i}")));
    header.extend(["horizon", "seed", "warmup", "buffered", "avg_total_age"].map(String::from));
    header.extend((1..=width).map(|i| format!("avg_age_{i}")));
    header.extend((1..=width).map(|i| format!("updates_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let pad = |v: Vec<String>| {
            let mut v = v;
            v.resize(width, String::new());
            v
        };
        let mut rec = vec![r.policy.clone(), r.users().to_string()];
        rec.extend(pad(r.probs.iter().map(f64::to_string).collect()));
        rec.extend([
            r.horizon.to_string(),
            r.seed.to_string(),
            r.warmup.to_string(),
            r.buffered.to_string(),
            r.avg_total_age.to_string(),
        ]);
        rec.extend(pad(r.per_user_avg_age.iter().map(f64::to_string).collect()));
        rec.extend(pad(r.update_counts.iter().map(u64::to_string).collect()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::immediate_cost;
    use crate::schedulers::{BaselineKind, BaselineScheduler, IndexScheduler};

    struct Fixed(usize, Decision);

    impl SchedulerPolicy for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn user_count(&self) -> usize {
            self.0
        }
        fn decide(&mut self, _obs: &Observation<'_>, _slot: u64) -> Decision {
            self.1
        }
    }

    fn model(p: &[f64]) -> ArrivalModel {
        ArrivalModel::new(p.to_vec()).unwrap()
    }

    #[test]
    fn always_idle_is_an_arithmetic_series() {
        for t in [1u64, 2, 10, 1001] {
            let cfg = SimConfig::new(model(&[0.5]), t, 4);
            let m = run(&mut Fixed(1, Decision::IDLE), &cfg).unwrap();
            assert_eq!(m.avg_total_age, (t as f64 + 3.0) / 2.0);
            assert_eq!(m.update_counts, vec![0]);
        }
    }

    #[test]
    fn certain_arrivals_alternate() {
        let cfg = SimConfig::new(model(&[1.0, 1.0]), 100_000, 1);
        let m = run(&mut BaselineScheduler::new(BaselineKind::MaxAgeArrival, 2, 0), &cfg).unwrap();
        assert!((m.avg_total_age - 3.0).abs() < 0.01);
        assert_eq!(m.update_counts.iter().sum::<u64>(), 100_000);
    }

    #[test]
    fn index_single_user_average_age() {
        let cfg = SimConfig::new(model(&[0.5]), 1_000_000, 2024);
        let m = run(&mut IndexScheduler::new(vec![0.5]), &cfg).unwrap();
        assert!((m.avg_total_age - 2.0).abs() < 0.02, "{}", m.avg_total_age);
    }

    #[test]
    fn invalid_decision_reports_slot() {
        let cfg = SimConfig::new(model(&[0.5, 0.5]), 10, 1);
        let err = run(&mut Fixed(2, Decision::new(3)), &cfg).unwrap_err();
        assert!(matches!(err, SimError::InvalidDecision { slot: 0, .. }));
        assert!(matches!(
            run(&mut Fixed(3, Decision::IDLE), &cfg),
            Err(SimError::UserMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(model(&[0.5]), 0, 1);
        assert_eq!(cfg.validate(), Err(SimError::ZeroHorizon));
        cfg.horizon = 5;
        cfg.warmup = 5;
        assert!(matches!(cfg.validate(), Err(SimError::WarmupTooLong { .. })));
    }

    #[test]
    fn warmup_excludes_leading_slots() {
        let mut cfg = SimConfig::new(model(&[0.0]), 10, 1);
        cfg.warmup = 4;
        let m = run(&mut Fixed(1, Decision::IDLE), &cfg).unwrap();
        // ages 6..=11
        assert_eq!(m.avg_total_age, 8.5);
    }

    #[test]
    fn accumulated_cost_matches_immediate_cost() {
        struct Recorder {
            inner: BaselineScheduler,
            cost: u64,
        }
        impl SchedulerPolicy for Recorder {
            fn name(&self) -> String {
                "rec".into()
            }
            fn user_count(&self) -> usize {
                3
            }
            fn decide(&mut self, obs: &Observation<'_>, slot: u64) -> Decision {
                let d = self.inner.decide(obs, slot);
                self.cost += immediate_cost(obs.state, d);
                d
            }
        }
        let cfg = SimConfig::new(model(&[0.3, 0.6, 0.9]), 20_000, 8);
        let mut r = Recorder {
            inner: BaselineScheduler::new(BaselineKind::RandomArrival, 3, 1),
            cost: 0,
        };
        let m = run(&mut r, &cfg).unwrap();
        assert_eq!(m.avg_total_age * 20_000.0, r.cost as f64);
    }

    #[test]
    fn buffered_with_certain_arrivals_matches_plain() {
        let mut cfg = SimConfig::new(model(&[1.0, 1.0]), 10_000, 3);
        let plain = run(&mut IndexScheduler::new(vec![1.0, 1.0]), &cfg).unwrap();
        cfg.buffered = true;
        let buf = run(&mut IndexScheduler::new(vec![1.0, 1.0]), &cfg).unwrap();
        assert_eq!(plain.avg_total_age, buf.avg_total_age);
        assert_eq!(plain.update_counts, buf.update_counts);
    }

    #[test]
    fn empty_buffer_serve_is_idle() {
        let mut cfg = SimConfig::new(model(&[0.0]), 7, 3);
        cfg.buffered = true;
        let served = run(&mut Fixed(1, Decision::new(1)), &cfg).unwrap();
        let idle = run(&mut Fixed(1, Decision::IDLE), &cfg).unwrap();
        assert_eq!(served.avg_total_age, idle.avg_total_age);
        assert_eq!(served.update_counts, vec![0]);
    }

    #[test]
    fn buffered_serve_delivers_buffered_age() {
        // one arrival at slot 0, then always serve: age becomes y + 1 = t + 1
        struct Once(bool);
        impl SchedulerPolicy for Once {
            fn name(&self) -> String {
                "once".into()
            }
            fn user_count(&self) -> usize {
                1
            }
            fn decide(&mut self, _obs: &Observation<'_>, slot: u64) -> Decision {
                if slot == 3 && self.0 {
                    Decision::new(1)
                } else {
                    Decision::IDLE
                }
            }
        }
        let mut cfg = SimConfig::new(model(&[1.0]), 5, 3);
        cfg.buffered = true;
        cfg.trajectory_stride = 1;
        let m = run(&mut Once(true), &cfg).unwrap();
        // every slot has a fresh packet, so serving at slot 3 gives age 1
        assert_eq!(m.trajectory[3], (3, 1));
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = SimConfig::new(model(&[0.3, 0.8]), 5_000, 77);
        let mut p = BaselineScheduler::new(BaselineKind::RandomArrival, 2, 5);
        let a = run(&mut p, &cfg).unwrap();
        let b = run(&mut p, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn sweep_cells_match_single_runs() {
        let idx: &PolicyFactory = &|m: &ArrivalModel, _| Ok(Box::new(IndexScheduler::new(m.probs().to_vec())) as _);
        let bad: &PolicyFactory = &|_: &ArrivalModel, _| Err("nope".into());
        let grid: Vec<ArrivalModel> = (1..=9).map(|k| model(&[0.6, k as f64 / 10.0])).collect();
        let template = SimConfig::new(grid[0].clone(), 2_000, 11);
        let cells = sweep(&[idx, bad], &grid, &template);
        assert_eq!(cells.len(), 18);
        for c in &cells {
            if c.policy_index == 1 {
                assert_eq!(c.result, Err(SimError::Policy("nope".into())));
                continue;
            }
            let cfg = SimConfig {
                seed: derive_seed(11, c.grid_index as u64),
                ..template.with_model(grid[c.grid_index].clone())
            };
            let single = run(&mut IndexScheduler::new(grid[c.grid_index].probs().to_vec()), &cfg).unwrap();
            assert_eq!(c.result.as_ref().unwrap(), &single);
        }
    }

    #[test]
    fn csv_pads_narrow_rows() {
        let a = run(&mut Fixed(1, Decision::IDLE), &SimConfig::new(model(&[0.5]), 3, 1)).unwrap();
        let b = run(&mut Fixed(2, Decision::IDLE), &SimConfig::new(model(&[0.5, 0.5]), 3, 1)).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&[a, b], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "policy,N,p_1,p_2,horizon,seed,warmup,buffered,avg_total_age,avg_age_1,avg_age_2,updates_1,updates_2"
        );
        assert_eq!(lines[1], "fixed,1,0.5,,3,1,0,false,3,3,,0,");
    }
}
