//! Truncated MDP for a base station that buffers the latest packet per user.
//!
//! The state is `(x, y)`: `x_i ∈ 1..=m` is the virtual age at user `i` and
//! `y_i ∈ 0..m` the age of the packet waiting in its buffer, which is 0 in
//! an arrival slot and grows by one otherwise. Serving `d` hands user `d`
//! the buffered packet, so its next age is `y_d + 1`; the slot cost is
//! `sum_i (x_i + 1) - (x_d - y_d)`.

use crate::network::{ArrivalModel, Decision};

use super::space::mask_to_flags;
use super::{MdpError, TruncatedMdp, MAX_STATES};

/// Grid `{1..m}^N x {0..m-1}^N`.
///
/// Ordinal layout: `age_ordinal * m^N + buffer_ordinal` with both parts
/// mixed-radix in `m`, user 0 least significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferedStateSpace {
    users: usize,
    bound: usize,
    strides: Vec<usize>,
    block: usize,
}

impl BufferedStateSpace {
    pub fn new(users: usize, bound: usize) -> Result<Self, MdpError> {
        if users == 0 {
            return Err(crate::network::ModelError::NoUsers.into());
        }
        if bound <= users {
            return Err(MdpError::BoundTooSmall { users, bound });
        }
        let mut strides = Vec::with_capacity(users);
        let mut block: usize = 1;
        for _ in 0..users {
            strides.push(block);
            block = block
                .checked_mul(bound)
                .filter(|&b| b.saturating_mul(b) <= MAX_STATES)
                .ok_or(MdpError::TooLarge { users, bound })?;
        }
        Ok(Self {
            users,
            bound,
            strides,
            block,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.block * self.block
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn age(&self, state: usize, user: usize) -> usize {
        (state / self.block / self.strides[user]) % self.bound + 1
    }

    pub fn buffer_age(&self, state: usize, user: usize) -> usize {
        (state % self.block / self.strides[user]) % self.bound
    }

    pub fn ordinal(&self, ages: &[u64], buffers: &[u64]) -> Option<usize> {
        if ages.len() != self.users || buffers.len() != self.users {
            return None;
        }
        let (mut xo, mut yo) = (0, 0);
        for i in 0..self.users {
            let (x, y) = (ages[i] as usize, buffers[i] as usize);
            if x == 0 || x > self.bound || y >= self.bound {
                return None;
            }
            xo += (x - 1) * self.strides[i];
            yo += y * self.strides[i];
        }
        Some(xo * self.block + yo)
    }

    /// Ordinal for real ages and buffer contents. Ages clamp to `m`, buffer
    /// ages to `m - 1`; an empty buffer maps to `m - 1`.
    pub fn virtual_ordinal(&self, ages: &[u64], buffers: &[Option<u64>]) -> usize {
        let m = self.bound as u64;
        let x: Vec<u64> = ages.iter().map(|&a| a.clamp(1, m)).collect();
        let y: Vec<u64> = buffers.iter().map(|b| b.unwrap_or(m - 1).min(m - 1)).collect();
        self.ordinal(&x, &y).expect("clamped state is in range")
    }

    pub fn decode(&self, state: usize) -> (Vec<u64>, Vec<u64>) {
        let x = (0..self.users).map(|i| self.age(state, i) as u64).collect();
        let y = (0..self.users).map(|i| self.buffer_age(state, i) as u64).collect();
        (x, y)
    }

    /// Ages `(1, .., N)` with fresh packets in every buffer.
    pub fn reference(&self) -> usize {
        let x: Vec<u64> = (1..=self.users as u64).collect();
        self.ordinal(&x, &vec![0; self.users]).expect("m > N")
    }
}

#[derive(Debug, Clone)]
pub struct BufferedAgeMdp {
    space: BufferedStateSpace,
    model: ArrivalModel,
    pattern_probs: Vec<f64>,
    // buffer ordinal reached from each (buffer ordinal, arrival pattern)
    buffer_next: Vec<u32>,
}

impl BufferedAgeMdp {
    pub fn new(space: BufferedStateSpace, model: ArrivalModel) -> Result<Self, MdpError> {
        if model.user_count() != space.users() {
            return Err(MdpError::UserMismatch {
                model: model.user_count(),
                space: space.users(),
            });
        }
        let users = space.users();
        let patterns = 1usize << users;
        let pattern_probs: Vec<f64> = (0..patterns)
            .map(|mask| model.pattern_probability(&mask_to_flags(mask, users)))
            .collect();
        let mut buffer_next = Vec::with_capacity(space.block * patterns);
        for yo in 0..space.block {
            for mask in 0..patterns {
                let mut next = 0;
                for i in 0..users {
                    let y = (yo / space.strides[i]) % space.bound;
                    let y2 = if mask & (1 << i) != 0 {
                        0
                    } else {
                        (y + 1).min(space.bound - 1)
                    };
                    next += y2 * space.strides[i];
                }
                buffer_next.push(next as u32);
            }
        }
        Ok(Self {
            space,
            model,
            pattern_probs,
            buffer_next,
        })
    }

    pub fn space(&self) -> &BufferedStateSpace {
        &self.space
    }

    pub fn model(&self) -> &ArrivalModel {
        &self.model
    }

    fn next_age_ordinal(&self, state: usize, decision: Decision) -> usize {
        let sp = &self.space;
        let served = decision.user_index();
        let mut ord = 0;
        for i in 0..sp.users {
            let next = if served == Some(i) {
                sp.buffer_age(state, i) + 1
            } else {
                (sp.age(state, i) + 1).min(sp.bound)
            };
            ord += (next - 1) * sp.strides[i];
        }
        ord
    }
}

impl TruncatedMdp for BufferedAgeMdp {
    fn user_count(&self) -> usize {
        self.space.users
    }

    fn state_count(&self) -> usize {
        self.space.len()
    }

    fn reference(&self) -> usize {
        self.space.reference()
    }

    fn cost(&self, state: usize, decision: Decision) -> f64 {
        let sp = &self.space;
        let mut total: i64 = (0..sp.users).map(|i| sp.age(state, i) as i64 + 1).sum();
        if let Some(d) = decision.user_index() {
            total -= sp.age(state, d) as i64 - sp.buffer_age(state, d) as i64;
        }
        total as f64
    }

    fn for_each_successor(&self, state: usize, decision: Decision, visit: &mut dyn FnMut(usize, f64)) {
        let base = self.next_age_ordinal(state, decision) * self.space.block;
        let row = (state % self.space.block) * self.pattern_probs.len();
        for (mask, &p) in self.pattern_probs.iter().enumerate() {
            if p > 0.0 {
                visit(base + self.buffer_next[row + mask] as usize, p);
            }
        }
    }

    fn expected_value(&self, values: &[f64], state: usize, decision: Decision) -> f64 {
        let base = self.next_age_ordinal(state, decision) * self.space.block;
        let row = (state % self.space.block) * self.pattern_probs.len();
        let next = &self.buffer_next[row..row + self.pattern_probs.len()];
        self.pattern_probs
            .iter()
            .zip(next)
            .map(|(p, &y)| p * values[base + y as usize])
            .sum()
    }

    fn age_predecessor(&self, state: usize, user: usize) -> Option<usize> {
        if self.space.age(state, user) > 1 {
            Some(state - self.space.strides[user] * self.space.block)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{solve, solve_model, SolveOptions};

    fn mdp(probs: &[f64], bound: usize) -> BufferedAgeMdp {
        BufferedAgeMdp::new(
            BufferedStateSpace::new(probs.len(), bound).unwrap(),
            ArrivalModel::new(probs.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn layout_round_trips() {
        let sp = BufferedStateSpace::new(2, 4).unwrap();
        assert_eq!(sp.len(), 256);
        for s in 0..sp.len() {
            let (x, y) = sp.decode(s);
            assert_eq!(sp.ordinal(&x, &y), Some(s));
        }
        let (x, y) = sp.decode(sp.reference());
        assert_eq!((x, y), (vec![1, 2], vec![0, 0]));
        assert_eq!(
            sp.virtual_ordinal(&[9, 1], &[None, Some(0)]),
            sp.ordinal(&[4, 1], &[3, 0]).unwrap()
        );
    }

    #[test]
    fn serving_hands_over_buffered_packet() {
        let m = mdp(&[1.0, 0.0], 6);
        let s = m.space().ordinal(&[5, 4], &[0, 2]).unwrap();
        assert_eq!(m.cost(s, Decision::IDLE), 11.0);
        assert_eq!(m.cost(s, Decision::new(2)), 11.0 - 2.0);
        let mut next = Vec::new();
        m.for_each_successor(s, Decision::new(2), &mut |n, p| next.push((n, p)));
        // user 1 always gets a fresh packet, user 2 never does
        assert_eq!(next, vec![(m.space().ordinal(&[6, 3], &[0, 3]).unwrap(), 1.0)]);
    }

    #[test]
    fn certain_arrivals_match_no_buffer() {
        let probs = [1.0, 1.0];
        let with = solve_model(&mdp(&probs, 5), &SolveOptions::default()).unwrap();
        let without = solve(&ArrivalModel::new(probs.to_vec()).unwrap(), 5, &SolveOptions::default()).unwrap();
        assert!((with.average_cost - without.average_cost).abs() < 1e-9);
        assert!((with.average_cost - 3.0).abs() < 1e-9);
    }

    #[test]
    fn buffering_never_hurts() {
        for p in [0.4, 0.7] {
            let with = solve_model(&mdp(&[p, p], 8), &SolveOptions::default()).unwrap();
            let without = solve(&ArrivalModel::new(vec![p, p]).unwrap(), 8, &SolveOptions::default()).unwrap();
            assert!(with.converged && without.converged);
            assert!(with.average_cost <= without.average_cost + 1e-9, "p = {p}");
        }
    }
}
