//! Exact reference engines for small truncated instances: stationary
//! distributions of explicit chains, exact policy evaluation, and an
//! optimal-policy search that certifies its answer.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::mdp::{PolicyTable, TruncatedMdp, TruncatedStateSpace};
use crate::network::{Decision, RandomSource};
use crate::whittle::WhittleError;

/// Largest chain solved with dense linear algebra.
pub const MAX_DENSE_STATES: usize = 6000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("negative or non-finite entry at ({row}, {col})")]
    BadEntry { row: usize, col: usize },
    #[error("matrix has {rows} rows and {cols} columns")]
    NotSquare { rows: usize, cols: usize },
    #[error("{0} states exceed the dense solver limit")]
    TooLarge(usize),
    #[error("chain has several closed classes, e.g. {first:?} and {second:?}")]
    MultipleClasses { first: Vec<usize>, second: Vec<usize> },
    #[error("linear system is singular")]
    Singular,
    #[error("stationary residual {0:e} too large")]
    Residual(f64),
    #[error("power iteration disagrees with the linear solve by {0:e}")]
    CrossCheck(f64),
    #[error("policy iteration did not stabilise in {0} rounds")]
    NoConvergence(usize),
    #[error("policy table has {got} entries, model has {expected} states")]
    SizeMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Whittle(#[from] WhittleError),
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(OracleError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::from_entries(n, entries)
    }

    /// Row-major entries.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self, OracleError> {
        if entries.len() != n * n {
            return Err(OracleError::NotSquare {
                rows: n,
                cols: entries.len() / n.max(1),
            });
        }
        for r in 0..n {
            let row = &entries[r * n..(r + 1) * n];
            if let Some(c) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(OracleError::BadEntry { row: r, col: c });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(OracleError::NotStochastic { row: r, sum });
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.n..(row + 1) * self.n]
    }

    /// Closed communicating classes, each sorted, ordered by smallest state.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.n, 0);
        let nodes: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for r in 0..self.n {
            for (c, &v) in self.row(r).iter().enumerate() {
                if v > 0.0 {
                    g.add_edge(nodes[r], nodes[c], ());
                }
            }
        }
        let mut class_of = vec![0; self.n];
        let sccs = tarjan_scc(&g);
        for (k, scc) in sccs.iter().enumerate() {
            for v in scc {
                class_of[v.index()] = k;
            }
        }
        let mut closed: Vec<Vec<usize>> = sccs
            .iter()
            .enumerate()
            .filter(|(k, scc)| {
                scc.iter().all(|v| {
                    self.row(v.index())
                        .iter()
                        .enumerate()
                        .all(|(c, &p)| p == 0.0 || class_of[c] == *k)
                })
            })
            .map(|(_, scc)| {
                let mut s: Vec<usize> = scc.iter().map(|v| v.index()).collect();
                s.sort_unstable();
                s
            })
            .collect();
        closed.sort();
        closed
    }

    fn vec_mul(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(r)) {
                *o += w * p;
            }
        }
    }
}

/// Stationary distribution of a chain with one closed class.
///
/// Solves `π (P - I) = 0` with one equation replaced by `Σπ = 1`, checks
/// the residual, and cross-checks against power iteration on the lazy
/// chain `(P + I) / 2`.
pub fn stationary_distribution(p: &StochasticMatrix) -> Result<Vec<f64>, OracleError> {
    let n = p.len();
    if n > MAX_DENSE_STATES {
        return Err(OracleError::TooLarge(n));
    }
    let classes = p.closed_classes();
    if classes.len() > 1 {
        return Err(OracleError::MultipleClasses {
            first: classes[0].clone(),
            second: classes[1].clone(),
        });
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            // row c of the system is column c of P - I
            a[(c, r)] = p.get(r, c) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(OracleError::Singular)?;
    let pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let mut next = vec![0.0; n];
    p.vec_mul(&pi, &mut next);
    let residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual > 1e-12 {
        return Err(OracleError::Residual(residual));
    }
    let power = lazy_power_iteration(p, 1_000_000);
    let gap = pi.iter().zip(&power).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > 1e-9 {
        return Err(OracleError::CrossCheck(gap));
    }
    Ok(pi)
}

fn lazy_power_iteration(p: &StochasticMatrix, max_rounds: usize) -> Vec<f64> {
    let n = p.len();
    let sparse: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|r| {
            p.row(r)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(c, &v)| (c, v))
                .collect()
        })
        .collect();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_rounds {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (r, row) in sparse.iter().enumerate() {
            for &(c, v) in row {
                next[c] += pi[r] * v;
            }
        }
        let mut change: f64 = 0.0;
        for (x, y) in pi.iter_mut().zip(&next) {
            let v = 0.5 * (*x + y);
            change = change.max((v - *x).abs());
            *x = v;
        }
        // round-off floor, well below the cross-check tolerance
        if change < 1e-15 {
            break;
        }
    }
    pi
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactEvaluation {
    pub average_cost: f64,
    pub stationary: Vec<f64>,
    /// Membership in the single closed class.
    pub recurrent: Vec<bool>,
}

/// Transition matrix induced by a deterministic stationary policy.
pub fn policy_chain<M: TruncatedMdp + ?Sized>(mdp: &M, policy: &PolicyTable) -> Result<StochasticMatrix, OracleError> {
    let n = mdp.state_count();
    if policy.len() != n {
        return Err(OracleError::SizeMismatch {
            got: policy.len(),
            expected: n,
        });
    }
    if n > MAX_DENSE_STATES {
        return Err(OracleError::TooLarge(n));
    }
    let mut entries = vec![0.0; n * n];
    for s in 0..n {
        mdp.for_each_successor(s, policy.action(s), &mut |t, q| entries[s * n + t] += q);
    }
    StochasticMatrix::from_entries(n, entries)
}

/// Exact long-run average cost of `policy` on the truncated model.
pub fn evaluate_policy_exact<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    policy: &PolicyTable,
) -> Result<ExactEvaluation, OracleError> {
    let chain = policy_chain(mdp, policy)?;
    let stationary = stationary_distribution(&chain)?;
    let mut recurrent = vec![false; chain.len()];
    for s in &chain.closed_classes()[0] {
        recurrent[*s] = true;
    }
    let average_cost = stationary
        .iter()
        .enumerate()
        .map(|(s, w)| w * mdp.cost(s, policy.action(s)))
        .sum();
    Ok(ExactEvaluation {
        average_cost,
        stationary,
        recurrent,
    })
}

/// Average cost of every closed class of the policy's chain, with the
/// class members. A unichain policy yields one entry.
pub fn class_gains<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    policy: &PolicyTable,
) -> Result<Vec<(Vec<usize>, f64)>, OracleError> {
    let chain = policy_chain(mdp, policy)?;
    chain
        .closed_classes()
        .into_iter()
        .map(|class| {
            let k = class.len();
            let mut entries = vec![0.0; k * k];
            for (a, &s) in class.iter().enumerate() {
                for (b, &t) in class.iter().enumerate() {
                    entries[a * k + b] = chain.get(s, t);
                }
            }
            let sub = StochasticMatrix::from_entries(k, entries)?;
            let pi = stationary_distribution(&sub)?;
            let gain = class
                .iter()
                .zip(&pi)
                .map(|(&s, w)| w * mdp.cost(s, policy.action(s)))
                .sum();
            Ok((class, gain))
        })
        .collect()
}

/// Explicit age chain of a single user under a threshold policy, with
/// ages `K` and above lumped into state `K`. State `i` is age `i + 1`.
pub fn threshold_chain(threshold: u64, p: f64, truncate_at: usize) -> Result<StochasticMatrix, OracleError> {
    crate::whittle::ThresholdPolicy::new(threshold)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(WhittleError::InvalidProbability(p).into());
    }
    if (truncate_at as u64) < threshold {
        return Err(WhittleError::TruncationBelowThreshold { threshold, truncate_at }.into());
    }
    let k = truncate_at;
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        let up = (i + 1).min(k - 1);
        if (i as u64 + 1) >= threshold {
            entries[i * k] += p;
            entries[i * k + up] += 1.0 - p;
        } else {
            entries[i * k + up] += 1.0;
        }
    }
    StochasticMatrix::from_entries(k, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Enumeration,
    PolicyIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPolicy {
    pub policy: PolicyTable,
    pub average_cost: f64,
    pub method: SearchMethod,
    /// Policies evaluated by enumeration, or improvement rounds.
    pub work: usize,
    /// Largest violation of `g + h(s) <= C(s, d) + E h(s')` over all states
    /// and actions; at most round-off for an optimal policy.
    pub certificate_gap: f64,
}

/// Actions that differ in cost or successor law, smallest representative
/// of each class.
pub fn effective_actions<M: TruncatedMdp + ?Sized>(mdp: &M, state: usize) -> Vec<Decision> {
    let mut seen: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut out = Vec::new();
    for target in 0..=mdp.user_count() {
        let d = Decision::new(target);
        let mut succ = Vec::new();
        mdp.for_each_successor(state, d, &mut |t, q| succ.push((t, q)));
        succ.sort_by_key(|a| a.0);
        let key = (mdp.cost(state, d), succ);
        if !seen.contains(&key) {
            seen.push(key);
            out.push(d);
        }
    }
    out
}

/// Relative values of a policy: solves `g + h(s) = C(s) + E h(s')` with
/// `h(reference) = 0`.
pub fn relative_values<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    policy: &PolicyTable,
) -> Result<(f64, Vec<f64>), OracleError> {
    let n = mdp.state_count();
    if n + 1 > MAX_DENSE_STATES {
        return Err(OracleError::TooLarge(n));
    }
    let r = mdp.reference();
    // unknowns: h(0..n), g at index n
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        let d = policy.action(s);
        a[(s, s)] += 1.0;
        a[(s, n)] = 1.0;
        mdp.for_each_successor(s, d, &mut |t, q| a[(s, t)] -= q);
        b[s] = mdp.cost(s, d);
    }
    a[(n, r)] = 1.0;
    let x = a.lu().solve(&b).ok_or(OracleError::Singular)?;
    Ok((x[n], x.iter().take(n).copied().collect()))
}

fn certificate_gap<M: TruncatedMdp + ?Sized>(mdp: &M, gain: f64, h: &[f64]) -> f64 {
    (0..mdp.state_count())
        .map(|s| {
            let best = (0..=mdp.user_count())
                .map(|t| mdp.q_value(h, s, Decision::new(t)))
                .fold(f64::INFINITY, f64::min);
            (gain + h[s] - best).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Optimal deterministic stationary policy of a small truncated model.
///
/// When the number of distinct policies is at most `budget` every one of
/// them is evaluated exactly, scoring a policy with several closed classes
/// by its worst class; otherwise policy iteration runs from the always-idle
/// policy. Either way the result carries an optimality
/// certificate from its own relative values.
pub fn brute_force_optimal<M: TruncatedMdp + ?Sized>(mdp: &M, budget: usize) -> Result<OptimalPolicy, OracleError> {
    let n = mdp.state_count();
    let choices: Vec<Vec<Decision>> = (0..n).map(|s| effective_actions(mdp, s)).collect();
    let mut count: usize = 1;
    for c in &choices {
        count = count.saturating_mul(c.len());
    }
    let mut best = if count <= budget {
        // polishing makes actions in transient states greedy as well, so
        // the certificate covers every state
        let found = enumerate_policies(mdp, &choices)?;
        let polished = policy_iteration(mdp, &choices, found.policy.clone())?;
        OptimalPolicy {
            policy: polished.policy,
            ..found
        }
    } else {
        let idle = PolicyTable::from_fn(n, |_| Decision::IDLE);
        policy_iteration(mdp, &choices, idle)?
    };
    let (gain, h) = relative_values(mdp, &best.policy)?;
    best.certificate_gap = certificate_gap(mdp, gain, &h);
    Ok(best)
}

fn enumerate_policies<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    choices: &[Vec<Decision>],
) -> Result<OptimalPolicy, OracleError> {
    let n = choices.len();
    let mut digits = vec![0usize; n];
    // (worst class gain, unichain, policy)
    let mut best: Option<(f64, bool, PolicyTable)> = None;
    let mut work = 0;
    loop {
        let policy = PolicyTable::from_fn(n, |s| choices[s][digits[s]]);
        // the optimal gain is the same from every start, so a policy is only
        // as good as its worst closed class
        let classes = class_gains(mdp, &policy)?;
        let cost = classes.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let unichain = classes.len() == 1;
        work += 1;
        let better = match &best {
            None => true,
            Some((b, uni, _)) => {
                let tol = 1e-12 * b.abs().max(1.0);
                cost < b - tol || (cost <= b + tol && unichain && !uni)
            }
        };
        if better {
            best = Some((cost, unichain, policy));
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == n {
                let (average_cost, _, policy) = best.expect("at least one policy");
                return Ok(OptimalPolicy {
                    policy,
                    average_cost,
                    method: SearchMethod::Enumeration,
                    work,
                    certificate_gap: 0.0,
                });
            }
            digits[k] += 1;
            if digits[k] < choices[k].len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

fn policy_iteration<M: TruncatedMdp + ?Sized>(
    mdp: &M,
    choices: &[Vec<Decision>],
    start: PolicyTable,
) -> Result<OptimalPolicy, OracleError> {
    const MAX_ROUNDS: usize = 1000;
    let n = choices.len();
    let mut policy = start;
    for round in 1..=MAX_ROUNDS {
        let (_, h) = relative_values(mdp, &policy)?;
        let mut changed = false;
        let next = PolicyTable::from_fn(n, |s| {
            let current = policy.action(s);
            let keep = mdp.q_value(&h, s, current);
            let mut pick = (current, keep);
            for &d in &choices[s] {
                let q = mdp.q_value(&h, s, d);
                if q < pick.1 - 1e-10 * q.abs().max(1.0) {
                    pick = (d, q);
                }
            }
            changed |= pick.0 != current;
            pick.0
        });
        policy = next;
        if !changed {
            let average_cost = evaluate_policy_exact(mdp, &policy)?.average_cost;
            return Ok(OptimalPolicy {
                policy,
                average_cost,
                method: SearchMethod::PolicyIteration,
                work: round,
                certificate_gap: 0.0,
            });
        }
    }
    Err(OracleError::NoConvergence(MAX_ROUNDS))
}

/// Pairs `(s, s')` where `s'` is `s` with one user's age raised by one, the
/// policy serves that user in `s` but not in `s'`. Empty iff every serve
/// region is upward-closed in the served user's own age.
pub fn check_switch_structure(policy: &PolicyTable, space: &TruncatedStateSpace) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in 0..space.len().min(policy.len()) {
        let Some(i) = policy.action(s).user_index() else {
            continue;
        };
        if space.age(s, i) < space.bound() {
            let up = s + (space.stride(i) << space.users());
            if policy.action(up) != policy.action(s) {
                out.push((s, up));
            }
        }
    }
    out
}

/// Monte-Carlo average cost of `policy` on the truncated chain itself.
pub fn simulate_truncated<M: TruncatedMdp + ?Sized>(mdp: &M, policy: &PolicyTable, slots: u64, seed: u64) -> f64 {
    let mut rng = RandomSource::new(seed);
    let mut s = mdp.reference();
    let mut total = 0.0;
    let mut succ: Vec<(usize, f64)> = Vec::new();
    for _ in 0..slots {
        let d = policy.action(s);
        total += mdp.cost(s, d);
        succ.clear();
        mdp.for_each_successor(s, d, &mut |t, q| succ.push((t, q)));
        let u: f64 = rand::Rng::gen(&mut rng);
        let mut acc = 0.0;
        let mut next = succ.last().expect("successor").0;
        for &(t, q) in &succ {
            acc += q;
            if u < acc {
                next = t;
                break;
            }
        }
        s = next;
    }
    total / slots as f64
}
