//! Broadcast network model: Bernoulli arrivals, per-user ages, scheduling
//! decisions and the per-slot cost.
//!
//! Users are addressed two ways. A [`Decision`] carries the 1-based target
//! (`0` is idle); every vector in this crate is indexed 0-based.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("a network needs at least one user")]
    NoUsers,
    #[error("arrival probability {prob} of user {user} is outside [0, 1]")]
    InvalidProbability { user: usize, prob: f64 },
    #[error("decision {decision} is out of range for {users} users")]
    DecisionOutOfRange { decision: usize, users: usize },
    #[error("state has {ages} ages but {arrivals} arrival flags")]
    LengthMismatch { ages: usize, arrivals: usize },
    #[error("age of user {user} is zero; ages start at 1")]
    ZeroAge { user: usize },
}

/// Independent Bernoulli arrival process, one probability per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    probs: Vec<f64>,
}

impl ArrivalModel {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::NoUsers);
        }
        for (user, &prob) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&prob) {
                return Err(ModelError::InvalidProbability { user: user + 1, prob });
            }
        }
        Ok(Self { probs })
    }

    /// Every user arrives with the same probability.
    pub fn uniform(users: usize, prob: f64) -> Result<Self, ModelError> {
        Self::new(vec![prob; users])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn user_count(&self) -> usize {
        self.probs.len()
    }

    /// Probability of one joint arrival pattern.
    pub fn pattern_probability(&self, arrivals: &[bool]) -> f64 {
        self.probs
            .iter()
            .zip(arrivals)
            .map(|(&p, &a)| if a { p } else { 1.0 - p })
            .product()
    }
}

/// Scheduling decision: `0` idles, `i` in `1..=N` transmits to user `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Decision(usize);

impl Decision {
    pub const IDLE: Decision = Decision(0);

    pub const fn new(target: usize) -> Self {
        Decision(target)
    }

    /// Decision serving the user at 0-based `index`.
    pub const fn user(index: usize) -> Self {
        Decision(index + 1)
    }

    pub const fn target(self) -> usize {
        self.0
    }

    pub const fn is_idle(self) -> bool {
        self.0 == 0
    }

    /// 0-based index of the served user, `None` when idle.
    pub const fn user_index(self) -> Option<usize> {
        match self.0 {
            0 => None,
            t => Some(t - 1),
        }
    }

    pub fn validate(self, users: usize) -> Result<Self, ModelError> {
        if self.0 > users {
            Err(ModelError::DecisionOutOfRange {
                decision: self.0,
                users,
            })
        } else {
            Ok(self)
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => write!(f, "idle"),
            t => write!(f, "u{t}"),
        }
    }
}

/// Ages at the users and arrival flags at the base station for one slot,
/// observed before the scheduling decision.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    ages: Vec<u64>,
    arrivals: Vec<bool>,
}

impl NetworkState {
    pub fn new(ages: Vec<u64>, arrivals: Vec<bool>) -> Result<Self, ModelError> {
        if ages.is_empty() {
            return Err(ModelError::NoUsers);
        }
        if ages.len() != arrivals.len() {
            return Err(ModelError::LengthMismatch {
                ages: ages.len(),
                arrivals: arrivals.len(),
            });
        }
        if let Some(user) = ages.iter().position(|&a| a == 0) {
            return Err(ModelError::ZeroAge { user: user + 1 });
        }
        Ok(Self { ages, arrivals })
    }

    /// Ages `(1, 2, .., N)` with every arrival flag set.
    pub fn reference(users: usize) -> Self {
        Self {
            ages: (1..=users as u64).collect(),
            arrivals: vec![true; users],
        }
    }

    pub fn user_count(&self) -> usize {
        self.ages.len()
    }

    pub fn ages(&self) -> &[u64] {
        &self.ages
    }

    pub fn arrivals(&self) -> &[bool] {
        &self.arrivals
    }

    pub fn total_age(&self) -> u64 {
        self.ages.iter().sum()
    }

    pub fn set_arrivals(&mut self, arrivals: &[bool]) {
        assert_eq!(arrivals.len(), self.arrivals.len(), "arrival vector length");
        self.arrivals.copy_from_slice(arrivals);
    }

    pub(crate) fn ages_mut(&mut self) -> &mut [u64] {
        &mut self.ages
    }

    /// In-place form of [`age_step`]. The decision must already be validated.
    pub fn advance(&mut self, decision: Decision, next_arrivals: &[bool]) {
        let served = decision.user_index();
        for (i, age) in self.ages.iter_mut().enumerate() {
            if served == Some(i) && self.arrivals[i] {
                *age = 1;
            } else {
                *age += 1;
            }
        }
        self.set_arrivals(next_arrivals);
    }
}

/// Seeded, splittable pseudo-random stream.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// sequences for the same seed.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh stream `stream` under the same seed, independent of `self`'s
    /// position.
    pub fn fork(&self, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        Self { seed: self.seed, rng }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        // gen::<f64>() lies in [0, 1) so p = 1 always fires and p = 0 never does.
        self.rng.gen::<f64>() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Draws one slot of arrivals.
pub fn sample_arrivals(model: &ArrivalModel, rng: &mut RandomSource) -> Vec<bool> {
    let mut out = vec![false; model.user_count()];
    sample_arrivals_into(model, rng, &mut out);
    out
}

pub fn sample_arrivals_into(model: &ArrivalModel, rng: &mut RandomSource, out: &mut [bool]) {
    for (slot, &p) in out.iter_mut().zip(model.probs()) {
        *slot = rng.bernoulli(p);
    }
}

/// Age dynamics: a served user with a fresh packet drops to age 1, everyone
/// else ages by one slot. `next_arrivals` become the arrivals of the
/// returned state.
pub fn age_step(state: &NetworkState, decision: Decision, next_arrivals: &[bool]) -> Result<NetworkState, ModelError> {
    decision.validate(state.user_count())?;
    if next_arrivals.len() != state.user_count() {
        return Err(ModelError::LengthMismatch {
            ages: state.user_count(),
            arrivals: next_arrivals.len(),
        });
    }
    let mut next = state.clone();
    next.advance(decision, next_arrivals);
    Ok(next)
}

/// Total age in the next slot: `sum_i (X_i + 1) - X_d * L_d`.
pub fn immediate_cost(state: &NetworkState, decision: Decision) -> u64 {
    let base: u64 = state.ages.iter().map(|a| a + 1).sum();
    match decision.user_index() {
        Some(i) if i < state.user_count() && state.arrivals[i] => base - state.ages[i],
        _ => base,
    }
}
