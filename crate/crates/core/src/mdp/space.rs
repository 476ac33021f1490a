use crate::network::Decision;

use super::{MdpError, MAX_STATES};

/// The grid `{1..m}^N x {0,1}^N` of truncated ages and arrival flags.
///
/// Ordinal layout: `age_ordinal << N | arrival_mask`, where bit `i` of the
/// mask is user `i`'s arrival flag and
/// `age_ordinal = sum_i (x_i - 1) * m^i`. Lowering any single age lowers
/// the ordinal, which the structural sweep relies on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedStateSpace {
    users: usize,
    bound: usize,
    strides: Vec<usize>,
    age_states: usize,
}

impl TruncatedStateSpace {
    pub fn new(users: usize, bound: usize) -> Result<Self, MdpError> {
        if users == 0 {
            return Err(crate::network::ModelError::NoUsers.into());
        }
        if bound <= users {
            return Err(MdpError::BoundTooSmall { users, bound });
        }
        let mut strides = Vec::with_capacity(users);
        let mut age_states: usize = 1;
        for _ in 0..users {
            strides.push(age_states);
            age_states = age_states
                .checked_mul(bound)
                .filter(|&n| n.saturating_mul(1 << users.min(20)) <= MAX_STATES)
                .ok_or(MdpError::TooLarge { users, bound })?;
        }
        Ok(Self {
            users,
            bound,
            strides,
            age_states,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// The truncation `m`.
    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.age_states << self.users
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn age_state_count(&self) -> usize {
        self.age_states
    }

    pub fn pattern_count(&self) -> usize {
        1 << self.users
    }

    pub(crate) fn stride(&self, user: usize) -> usize {
        self.strides[user]
    }

    /// Virtual age of `user` (0-based) in `state`.
    pub fn age(&self, state: usize, user: usize) -> usize {
        ((state >> self.users) / self.strides[user]) % self.bound + 1
    }

    pub fn arrived(&self, state: usize, user: usize) -> bool {
        state & (1 << user) != 0
    }

    pub fn ordinal(&self, ages: &[u64], arrivals: &[bool]) -> Option<usize> {
        if ages.len() != self.users || arrivals.len() != self.users {
            return None;
        }
        let mut ord = 0;
        for (i, &x) in ages.iter().enumerate() {
            if x == 0 || x as usize > self.bound {
                return None;
            }
            ord += (x as usize - 1) * self.strides[i];
        }
        Some(ord << self.users | flags_to_mask(arrivals))
    }

    /// Ordinal after clamping real ages to the truncation.
    pub fn virtual_ordinal(&self, ages: &[u64], arrivals: &[bool]) -> usize {
        let clamped: Vec<u64> = ages.iter().map(|&a| a.clamp(1, self.bound as u64)).collect();
        self.ordinal(&clamped, arrivals).expect("clamped ages are in range")
    }

    pub fn decode(&self, state: usize) -> (Vec<u64>, Vec<bool>) {
        let ages = (0..self.users).map(|i| self.age(state, i) as u64).collect();
        (ages, mask_to_flags(state & ((1 << self.users) - 1), self.users))
    }

    /// The reference state: ages `(1, .., N)`, every arrival flag set.
    pub fn reference(&self) -> usize {
        let ages: Vec<u64> = (1..=self.users as u64).collect();
        self.ordinal(&ages, &vec![true; self.users])
            .expect("m > N keeps the reference in range")
    }

    pub fn states(&self) -> impl Iterator<Item = (Vec<u64>, Vec<bool>)> + '_ {
        (0..self.len()).map(|s| self.decode(s))
    }
}

pub(crate) fn flags_to_mask(flags: &[bool]) -> usize {
    flags
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &f)| if f { acc | 1 << i } else { acc })
}

pub(crate) fn mask_to_flags(mask: usize, users: usize) -> Vec<bool> {
    (0..users).map(|i| mask & (1 << i) != 0).collect()
}

/// Builds the truncated state space for `users` users at truncation `bound`.
pub fn enumerate_states(users: usize, bound: usize) -> Result<TruncatedStateSpace, MdpError> {
    TruncatedStateSpace::new(users, bound)
}

/// Virtual age dynamics: a served user with an arrival resets to 1, every
/// other age grows by one and saturates at `bound`.
pub fn truncated_step(ages: &[u64], decision: Decision, arrivals: &[bool], bound: u64) -> Vec<u64> {
    let served = decision.user_index();
    ages.iter()
        .zip(arrivals)
        .enumerate()
        .map(|(i, (&x, &a))| if served == Some(i) && a { 1 } else { (x + 1).min(bound) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(enumerate_states(1, 2).unwrap().len(), 4);
        assert_eq!(enumerate_states(2, 3).unwrap().len(), 36);
        assert_eq!(enumerate_states(2, 30).unwrap().len(), 30 * 30 * 4);
    }

    #[test]
    fn bound_must_exceed_users() {
        assert_eq!(
            enumerate_states(2, 2),
            Err(MdpError::BoundTooSmall { users: 2, bound: 2 })
        );
        assert!(enumerate_states(1, 1).is_err());
        assert!(enumerate_states(0, 5).is_err());
        assert!(matches!(enumerate_states(8, 200), Err(MdpError::TooLarge { .. })));
    }

    #[test]
    fn ordinal_is_a_bijection() {
        let sp = enumerate_states(3, 4).unwrap();
        let mut seen = vec![false; sp.len()];
        for s in 0..sp.len() {
            let (ages, arrivals) = sp.decode(s);
            let back = sp.ordinal(&ages, &arrivals).unwrap();
            assert_eq!(back, s);
            assert!(!seen[back]);
            seen[back] = true;
        }
        assert!(seen.iter().all(|&b| b));
        assert_eq!(sp.states().count(), 4 * 4 * 4 * 8);
    }

    #[test]
    fn reference_state() {
        let sp = enumerate_states(3, 5).unwrap();
        let (ages, arrivals) = sp.decode(sp.reference());
        assert_eq!(ages, vec![1, 2, 3]);
        assert_eq!(arrivals, vec![true; 3]);
    }

    #[test]
    fn out_of_range_and_virtual() {
        let sp = enumerate_states(2, 30).unwrap();
        assert_eq!(sp.ordinal(&[31, 1], &[true, false]), None);
        assert_eq!(sp.ordinal(&[0, 1], &[true, false]), None);
        assert_eq!(
            sp.virtual_ordinal(&[40, 2], &[true, false]),
            sp.ordinal(&[30, 2], &[true, false]).unwrap()
        );
    }

    #[test]
    fn truncated_step_examples() {
        assert_eq!(
            truncated_step(&[30, 30], Decision::IDLE, &[true, true], 30),
            vec![30, 30]
        );
        assert_eq!(
            truncated_step(&[29, 5], Decision::new(2), &[false, true], 30),
            vec![30, 1]
        );
        assert_eq!(truncated_step(&[1], Decision::new(1), &[true], 5), vec![1]);
        assert_eq!(truncated_step(&[3], Decision::new(1), &[false], 5), vec![4]);
    }
}
