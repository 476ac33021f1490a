//! Truncated age MDPs and (structural) relative value iteration.
//!
//! Virtual ages are capped at a bound `m > N`, which turns the countable
//! scheduling MDP into a finite one. States are stored in dense tables
//! indexed by a mixed-radix ordinal; see [`TruncatedStateSpace`] for the
//! layout. The solver works on any [`TruncatedMdp`], so the buffered
//! variant in [`buffered`] reuses it unchanged.

pub mod buffered;
mod space;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ArrivalModel, Decision, ModelError};

pub use buffered::{BufferedAgeMdp, BufferedStateSpace};
pub use space::{enumerate_states, truncated_step, TruncatedStateSpace};

/// Upper limit on dense table sizes.
pub const MAX_STATES: usize = 1 << 27;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("truncation m = {bound} must be greater than the number of users N = {users}")]
    BoundTooSmall { users: usize, bound: usize },
    #[error("{users} users truncated at m = {bound} exceed the dense table limit")]
    TooLarge { users: usize, bound: usize },
    #[error("arrival model has {model} users, state space has {space}")]
    UserMismatch { model: usize, space: usize },
    #[error("value table has {got} entries, state space has {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("non-finite value at state ordinal {state}")]
    NonFinite { state: usize },
    #[error("discount factor {0} must lie in (0, 1)")]
    InvalidDiscount(f64),
    #[error("relative value iteration stopped after {iterations} sweeps without converging (span {span:e})")]
    NotConverged { iterations: usize, span: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A finite MDP over truncated ages with actions `0..=N`.
pub trait TruncatedMdp: Sync {
    fn user_count(&self) -> usize;

    fn state_count(&self) -> usize;

    /// Ordinal of the reference state used to pin relative values.
    fn reference(&self) -> usize;

    fn cost(&self, state: usize, decision: Decision) -> f64;

    /// Calls `visit(next, prob)` for every successor with positive
    /// probability.
    fn for_each_successor(&self, state: usize, decision: Decision, visit: &mut dyn FnMut(usize, f64));

    /// Ordinal of the state whose age for `user` (0-based) is one smaller,
    /// all other coordinates equal.
    fn age_predecessor(&self, state: usize, user: usize) -> Option<usize>;

    fn expected_value(&self, values: &[f64], state: usize, decision: Decision) -> f64 {
        let mut acc = 0.0;
        self.for_each_successor(state, decision, &mut |next, prob| acc += prob * values[next]);
        acc
    }

    fn q_value(&self, values: &[f64], state: usize, decision: Decision) -> f64 {
        self.cost(state, decision) + self.expected_value(values, state, decision)
    }
}

/// Relative values, one per state ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
    reference: usize,
}

impl ValueTable {
    pub fn zeros<M: TruncatedMdp + ?Sized>(mdp: &M) -> Self {
        Self {
            values: vec![0.0; mdp.state_count()],
            reference: mdp.reference(),
        }
    }

    pub fn from_values(values: Vec<f64>, reference: usize) -> Self {
        assert!(reference < values.len(), "reference ordinal out of range");
        Self { values, reference }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn reference_value(&self) -> f64 {
        self.values[self.reference]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic stationary policy, one decision per state ordinal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyTable {
    actions: Vec<Decision>,
}

impl PolicyTable {
    pub fn new(actions: Vec<Decision>) -> Self {
        Self { actions }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> Decision) -> Self {
        Self {
            actions: (0..len).map(f).collect(),
        }
    }

    pub fn action(&self, state: usize) -> Decision {
        self.actions[state]
    }

    pub fn actions(&self) -> &[Decision] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Ordinals where the two policies disagree.
    pub fn differences(&self, other: &PolicyTable) -> Vec<usize> {
        self.actions
            .iter()
            .zip(&other.actions)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(s, _)| s)
            .collect()
    }
}

fn tie_tolerance(x: f64) -> f64 {
    1e-12 * x.abs().max(1.0)
}

/// Minimizing action; ties go to the smallest action index.
pub fn best_action<M: TruncatedMdp + ?Sized>(mdp: &M, values: &[f64], state: usize) -> (Decision, f64) {
    let mut best = (Decision::IDLE, mdp.q_value(values, state, Decision::IDLE));
    for target in 1..=mdp.user_count() {
        let d = Decision::new(target);
        let q = mdp.q_value(values, state, d);
        if q < best.1 - tie_tolerance(best.1) {
            best = (d, q);
        }
    }
    best
}

fn check_size<M: TruncatedMdp + ?Sized>(mdp: &M, values: &ValueTable) -> Result<(), MdpError> {
    if values.len() != mdp.state_count() {
        return Err(MdpError::SizeMismatch {
            got: values.len(),
            expected: mdp.state_count(),
        });
    }
    Ok(())
}

fn finish_sweep(
    raw: Vec<(Decision, f64)>,
    offset: f64,
    reference: usize,
) -> Result<(ValueTable, PolicyTable), MdpError> {
    let mut values = Vec::with_capacity(raw.len());
    let mut actions = Vec::with_capacity(raw.len());
    for (state, (d, q)) in raw.into_iter().enumerate() {
        let v = q - offset;
        if !v.is_finite() {
            return Err(MdpError::NonFinite { state });
        }
        values.push(v);
        actions.push(d);
    }
    Ok((ValueTable::from_values(values, reference), PolicyTable::new(actions)))
}

/// One synchronous relative value iteration sweep:
/// `V'(s) = min_d C(s,d) + E V(s') - V(ref)`, every expectation taken over
/// the previous table.
pub fn rvia_sweep<M: TruncatedMdp + ?Sized>(
    values: &ValueTable,
    mdp: &M,
) -> Result<(ValueTable, PolicyTable), MdpError> {
    check_size(mdp, values)?;
    let v = values.values();
    let raw: Vec<(Decision, f64)> = (0..mdp.state_count())
        .into_par_iter()
        .map(|s| best_action(mdp, v, s))
        .collect();
    finish_sweep(raw, values.reference_value(), values.reference())
}

/// Sweep that exploits the switch structure.
///
/// States are visited in increasing ordinal, so every state with a smaller
/// age for some user (other coordinates fixed) has already been decided in
/// this sweep. If such a state chose to serve user `i`, `i` is assigned
/// without scanning the actions; when several users qualify the smallest
/// wins. Values are written to a fresh table, as in [`rvia_sweep`].
pub fn structural_rvia_sweep<M: TruncatedMdp + ?Sized>(
    values: &ValueTable,
    mdp: &M,
) -> Result<(ValueTable, PolicyTable), MdpError> {
    check_size(mdp, values)?;
    let v = values.values();
    let users = mdp.user_count();
    let n = mdp.state_count();
    let mut raw: Vec<(Decision, f64)> = Vec::with_capacity(n);
    // Bit i: some smaller age of user i in this slice was served as i.
    let mut served_below: Vec<u32> = Vec::with_capacity(n);
    for s in 0..n {
        let mut mask = 0u32;
        for i in 0..users {
            if let Some(pred) = mdp.age_predecessor(s, i) {
                debug_assert!(pred < s, "sweep order must visit smaller ages first");
                if served_below[pred] & (1 << i) != 0 || raw[pred].0 == Decision::user(i) {
                    mask |= 1 << i;
                }
            }
        }
        served_below.push(mask);
        let choice = if mask != 0 {
            let d = Decision::user(mask.trailing_zeros() as usize);
            (d, mdp.q_value(v, s, d))
        } else {
            best_action(mdp, v, s)
        };
        raw.push(choice);
    }
    finish_sweep(raw, values.reference_value(), values.reference())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop once `max - min` of `V_{n+1} - V_n` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Use [`structural_rvia_sweep`] instead of [`rvia_sweep`].
    pub structural: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 100_000,
            structural: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub policy: PolicyTable,
    pub values: ValueTable,
    /// Long-run average cost of the truncated MDP, taken from the span
    /// bounds of the last sweep.
    pub average_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Span of the last value difference.
    pub span: f64,
}

impl Solution {
    pub fn into_converged(self) -> Result<Self, MdpError> {
        if self.converged {
            Ok(self)
        } else {
            Err(MdpError::NotConverged {
                iterations: self.iterations,
                span: self.span,
            })
        }
    }
}

/// Runs relative value iteration from the zero table until the span of
/// successive differences falls under the tolerance.
///
/// At the stopping sweep, `T V - V` lies within
/// `V(ref) + [min, max](V' - V)`, which brackets the optimal average cost;
/// the midpoint is reported.
pub fn solve_model<M: TruncatedMdp + ?Sized>(mdp: &M, opts: &SolveOptions) -> Result<Solution, MdpError> {
    let mut values = ValueTable::zeros(mdp);
    let mut policy = PolicyTable::new(vec![Decision::IDLE; mdp.state_count()]);
    let mut span = f64::INFINITY;
    let mut gain = f64::NAN;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let (next, next_policy) = if opts.structural {
            structural_rvia_sweep(&values, mdp)?
        } else {
            rvia_sweep(&values, mdp)?
        };
        iterations += 1;
        let (lo, hi) = next
            .values()
            .iter()
            .zip(values.values())
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        span = hi - lo;
        gain = values.reference_value() + 0.5 * (lo + hi);
        values = next;
        policy = next_policy;
        if span < opts.tolerance {
            return Ok(Solution {
                policy,
                values,
                average_cost: gain,
                iterations,
                converged: true,
                span,
            });
        }
    }
    Ok(Solution {
        policy,
        values,
        average_cost: gain,
        iterations,
        converged: false,
        span,
    })
}

/// Solves the no-buffer truncated MDP for `model` at truncation `bound`.
pub fn solve(model: &ArrivalModel, bound: usize, opts: &SolveOptions) -> Result<Solution, MdpError> {
    let space = TruncatedStateSpace::new(model.user_count(), bound)?;
    let mdp = AgeMdp::new(space, model.clone())?;
    solve_model(&mdp, opts)
}

/// `n` steps of discounted value iteration from the zero table.
pub fn discounted_value_iteration<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    discount: f64,
    iterations: usize,
) -> Result<ValueTable, MdpError> {
    if !(discount > 0.0 && discount < 1.0) {
        return Err(MdpError::InvalidDiscount(discount));
    }
    let mut values = vec![0.0; mdp.state_count()];
    for _ in 0..iterations {
        let prev = &values;
        values = (0..mdp.state_count())
            .into_par_iter()
            .map(|s| {
                (0..=mdp.user_count())
                    .map(|t| {
                        let d = Decision::new(t);
                        mdp.cost(s, d) + discount * mdp.expected_value(prev, s, d)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        if let Some(state) = values.iter().position(|v| !v.is_finite()) {
            return Err(MdpError::NonFinite { state });
        }
    }
    Ok(ValueTable::from_values(values, mdp.reference()))
}

/// Pairs `(lower, upper)` of states one age apart where the value drops
/// by more than `tol` as the age grows.
pub fn monotonicity_violations<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    values: &ValueTable,
    tol: f64,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in 0..mdp.state_count() {
        for i in 0..mdp.user_count() {
            if let Some(pred) = mdp.age_predecessor(s, i) {
                if values.get(pred) > values.get(s) + tol {
                    out.push((pred, s));
                }
            }
        }
    }
    out
}

/// The no-buffer truncated MDP: state `(x, λ)` with `x_i ∈ 1..=m`.
#[derive(Debug, Clone)]
pub struct AgeMdp {
    space: TruncatedStateSpace,
    model: ArrivalModel,
    pattern_probs: Vec<f64>,
}

impl AgeMdp {
    pub fn new(space: TruncatedStateSpace, model: ArrivalModel) -> Result<Self, MdpError> {
        if model.user_count() != space.users() {
            return Err(MdpError::UserMismatch {
                model: model.user_count(),
                space: space.users(),
            });
        }
        let pattern_probs = (0..space.pattern_count())
            .map(|mask| model.pattern_probability(&space::mask_to_flags(mask, space.users())))
            .collect();
        Ok(Self {
            space,
            model,
            pattern_probs,
        })
    }

    pub fn space(&self) -> &TruncatedStateSpace {
        &self.space
    }

    pub fn model(&self) -> &ArrivalModel {
        &self.model
    }

    /// Age ordinal reached from `state` under `decision`.
    pub fn next_age_ordinal(&self, state: usize, decision: Decision) -> usize {
        let sp = &self.space;
        let served = decision.user_index();
        let mut ord = 0;
        for i in 0..sp.users() {
            let x = sp.age(state, i);
            let next = if served == Some(i) && sp.arrived(state, i) {
                1
            } else {
                (x + 1).min(sp.bound())
            };
            ord += (next - 1) * sp.stride(i);
        }
        ord
    }

    /// Expected value of the successor of `(ages, arrivals)` under `decision`.
    pub fn expected_next_value(&self, values: &ValueTable, ages: &[u64], arrivals: &[bool], decision: Decision) -> f64 {
        let s = self
            .space
            .ordinal(ages, arrivals)
            .expect("ages must lie within the truncated space");
        self.expected_value(values.values(), s, decision)
    }
}

impl TruncatedMdp for AgeMdp {
    fn user_count(&self) -> usize {
        self.space.users()
    }

    fn state_count(&self) -> usize {
        self.space.len()
    }

    fn reference(&self) -> usize {
        self.space.reference()
    }

    fn cost(&self, state: usize, decision: Decision) -> f64 {
        let sp = &self.space;
        let mut total = 0;
        for i in 0..sp.users() {
            total += sp.age(state, i) + 1;
        }
        if let Some(i) = decision.user_index() {
            if i < sp.users() && sp.arrived(state, i) {
                total -= sp.age(state, i);
            }
        }
        total as f64
    }

    fn for_each_successor(&self, state: usize, decision: Decision, visit: &mut dyn FnMut(usize, f64)) {
        let base = self.next_age_ordinal(state, decision) << self.space.users();
        for (mask, &p) in self.pattern_probs.iter().enumerate() {
            if p > 0.0 {
                visit(base | mask, p);
            }
        }
    }

    fn expected_value(&self, values: &[f64], state: usize, decision: Decision) -> f64 {
        let base = self.next_age_ordinal(state, decision) << self.space.users();
        let block = &values[base..base + self.pattern_probs.len()];
        self.pattern_probs.iter().zip(block).map(|(p, v)| p * v).sum()
    }

    fn age_predecessor(&self, state: usize, user: usize) -> Option<usize> {
        if self.space.age(state, user) > 1 {
            Some(state - (self.space.stride(user) << self.space.users()))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mdp(probs: &[f64], bound: usize) -> AgeMdp {
        let model = ArrivalModel::new(probs.to_vec()).unwrap();
        AgeMdp::new(TruncatedStateSpace::new(probs.len(), bound).unwrap(), model).unwrap()
    }

    fn ord(m: &AgeMdp, ages: &[u64], arrivals: &[bool]) -> usize {
        m.space().ordinal(ages, arrivals).unwrap()
    }

    #[test]
    fn expected_next_value_single_outcome() {
        let m = mdp(&[1.0], 4);
        let values: Vec<f64> = (0..m.state_count()).map(|s| s as f64 * 1.5).collect();
        let vt = ValueTable::from_values(values.clone(), m.reference());
        // (x=3, λ=1) served → (1, λ'=1); idle → (4, 1)
        let served = m.expected_next_value(&vt, &[3], &[true], Decision::new(1));
        assert_eq!(served, values[ord(&m, &[1], &[true])]);
        let idle = m.expected_next_value(&vt, &[3], &[true], Decision::IDLE);
        assert_eq!(idle, values[ord(&m, &[4], &[true])]);
        // saturates at m
        let sat = m.expected_next_value(&vt, &[4], &[false], Decision::new(1));
        assert_eq!(sat, values[ord(&m, &[4], &[true])]);
    }

    #[test]
    fn expected_next_value_zero_table() {
        let m = mdp(&[0.5], 5);
        let vt = ValueTable::zeros(&m);
        assert_eq!(m.expected_next_value(&vt, &[2], &[true], Decision::new(1)), 0.0);
    }

    #[test]
    fn expected_next_value_four_outcomes() {
        let m = mdp(&[0.3, 0.7], 4);
        let values: Vec<f64> = (0..m.state_count()).map(|s| s as f64).collect();
        let vt = ValueTable::from_values(values.clone(), m.reference());
        // ages (2,3), arrivals (1,1), serve user 2 -> next ages (3,1)
        let got = m.expected_next_value(&vt, &[2, 3], &[true, true], Decision::new(2));
        let mut want = 0.0;
        for (l1, p1) in [(false, 0.7), (true, 0.3)] {
            for (l2, p2) in [(false, 0.3), (true, 0.7)] {
                want += p1 * p2 * values[ord(&m, &[3, 1], &[l1, l2])];
            }
        }
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn first_sweep_is_myopic_cost_minus_reference() {
        let m = mdp(&[0.5], 2);
        let (vt, policy) = rvia_sweep(&ValueTable::zeros(&m), &m).unwrap();
        // previous reference value is 0, so V_1 = min_d C(s, d)
        for s in 0..m.state_count() {
            let best = (0..=1)
                .map(|d| m.cost(s, Decision::new(d)))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(vt.get(s), best);
        }
        let (vt2, _) = rvia_sweep(&vt, &m).unwrap();
        let ref1 = vt.reference_value();
        for s in 0..m.state_count() {
            let best = (0..=1)
                .map(|d| m.q_value(vt.values(), s, Decision::new(d)))
                .fold(f64::INFINITY, f64::min);
            assert!((vt2.get(s) - (best - ref1)).abs() < 1e-12);
        }
        // λ=1 states are served, λ=0 idle (tie goes to idle)
        for s in 0..m.state_count() {
            let want = if m.space().arrived(s, 0) {
                Decision::new(1)
            } else {
                Decision::IDLE
            };
            assert_eq!(policy.action(s), want);
        }
    }

    #[test]
    fn certain_arrivals_single_user() {
        let sol = solve(&ArrivalModel::new(vec![1.0]).unwrap(), 3, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.average_cost - 1.0).abs() < 1e-9);
        let sol = solve(&ArrivalModel::new(vec![1.0]).unwrap(), 5, &SolveOptions::default()).unwrap();
        assert!((sol.average_cost - 1.0).abs() < 1e-9);
    }

    #[test]
    fn certain_arrivals_two_users_round_robin() {
        let sol = solve(&ArrivalModel::new(vec![1.0, 1.0]).unwrap(), 5, &SolveOptions::default()).unwrap();
        assert!(sol.converged, "span {}", sol.span);
        assert!((sol.average_cost - 3.0).abs() < 1e-9, "{}", sol.average_cost);
    }

    #[test]
    fn single_user_half_rate() {
        let sol = solve(&ArrivalModel::new(vec![0.5]).unwrap(), 30, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.average_cost - 2.0).abs() < 0.02, "{}", sol.average_cost);
    }

    #[test]
    fn single_user_always_updates_on_arrival() {
        for p in [0.2, 0.5, 0.9] {
            let m = mdp(&[p], 12);
            let sol = solve_model(&m, &SolveOptions::default()).unwrap();
            for s in 0..m.state_count() {
                let want = if m.space().arrived(s, 0) {
                    Decision::new(1)
                } else {
                    Decision::IDLE
                };
                assert_eq!(sol.policy.action(s), want);
            }
        }
    }

    #[test]
    fn fixed_point_is_stable() {
        let m = mdp(&[0.6, 0.4], 8);
        let sol = solve_model(&m, &SolveOptions::default()).unwrap();
        let (again, _) = rvia_sweep(&sol.values, &m).unwrap();
        assert!(again.max_abs_diff(&sol.values) < 1e-8);
    }

    #[test]
    fn structural_matches_plain() {
        for probs in [[0.9, 0.9], [0.9, 0.5], [0.3, 0.7], [0.6, 0.1]] {
            let m = mdp(&probs, 10);
            let a = solve_model(&m, &SolveOptions::default()).unwrap();
            let b = solve_model(
                &m,
                &SolveOptions {
                    structural: false,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(a.converged && b.converged);
            assert!((a.average_cost - b.average_cost).abs() < 1e-9);
            assert!(a.values.max_abs_diff(&b.values) < 1e-6);
            assert_eq!(a.policy.differences(&b.policy), Vec::<usize>::new(), "{probs:?}");
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = mdp(&[0.3, 0.6], 10);
        let sol = solve_model(
            &m,
            &SolveOptions {
                max_iterations: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert!(matches!(
            sol.into_converged(),
            Err(MdpError::NotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn discounted_iteration_edges() {
        let m = mdp(&[0.5, 0.5], 4);
        let v0 = discounted_value_iteration(&m, 0.9, 0).unwrap();
        assert!(v0.values().iter().all(|&v| v == 0.0));
        let v1 = discounted_value_iteration(&m, 0.9, 1).unwrap();
        for s in 0..m.state_count() {
            let best = (0..=2)
                .map(|d| m.cost(s, Decision::new(d)))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(v1.get(s), best);
        }
        assert_eq!(
            discounted_value_iteration(&m, 1.0, 3),
            Err(MdpError::InvalidDiscount(1.0))
        );
    }

    #[test]
    fn discounted_values_are_monotone() {
        let m = mdp(&[0.5], 4);
        let v = discounted_value_iteration(&m, 0.9, 200).unwrap();
        assert!(monotonicity_violations(&m, &v, 1e-9).is_empty());
        let m = mdp(&[0.7, 0.4], 6);
        for n in [1, 5, 50] {
            let v = discounted_value_iteration(&m, 0.95, n).unwrap();
            assert!(monotonicity_violations(&m, &v, 1e-9).is_empty(), "n = {n}");
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let m = mdp(&[0.5], 4);
        let wrong = ValueTable::from_values(vec![0.0; 3], 0);
        assert!(matches!(rvia_sweep(&wrong, &m), Err(MdpError::SizeMismatch { .. })));
    }

    #[test]
    fn user_mismatch_rejected() {
        let space = TruncatedStateSpace::new(2, 4).unwrap();
        let model = ArrivalModel::new(vec![0.5]).unwrap();
        assert!(matches!(AgeMdp::new(space, model), Err(MdpError::UserMismatch { .. })));
    }
}
