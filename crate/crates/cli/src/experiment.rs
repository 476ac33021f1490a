//! Experiment specifications: a grid of arrival models, a list of
//! schedulers and the simulation settings shared by every cell.

use aoi_core::network::ArrivalModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_TABLE_BOUND: usize = 30;
pub const DEFAULT_ONLINE_BOUND: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_SEED: u64 = 1;

/// Largest value table an online MDP scheduler may allocate. Larger bounds
/// are lowered to fit, which only matters for four or more users.
pub const ONLINE_STATE_CAP: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub horizon: u64,
    #[serde(default)]
    pub warmup: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Independent repetitions; repetition `r` uses master seed `seed + r`.
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub trajectory_stride: u64,
    pub grid: Grid,
    #[serde(rename = "scheduler")]
    pub schedulers: Vec<SchedulerSpec>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_replications() -> u64 {
    1
}

/// Arrival-rate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    /// One arrival vector per cell.
    Explicit { probs: Vec<Vec<f64>> },
    /// Leading rates held fixed, the last user's rate swept.
    SweepLast { fixed: Vec<f64>, values: Vec<f64> },
    /// Every user shares the rate; one cell per `(users, value)` pair.
    Equal { users: Vec<usize>, values: Vec<f64> },
    /// `N` users each at rate `1/N`.
    InverseUsers { users: Vec<usize> },
}

impl Grid {
    pub fn models(&self) -> Result<Vec<ArrivalModel>, CliError> {
        let vectors: Vec<Vec<f64>> = match self {
            Grid::Explicit { probs } => probs.clone(),
            Grid::SweepLast { fixed, values } => values
                .iter()
                .map(|&v| fixed.iter().copied().chain([v]).collect())
                .collect(),
            Grid::Equal { users, values } => users
                .iter()
                .flat_map(|&n| values.iter().map(move |&v| vec![v; n]))
                .collect(),
            Grid::InverseUsers { users } => users.iter().map(|&n| vec![1.0 / n as f64; n]).collect(),
        };
        if vectors.is_empty() {
            return Err(CliError::Usage("the grid has no cells".into()));
        }
        vectors
            .into_iter()
            .map(|p| ArrivalModel::new(p).map_err(|e| CliError::Usage(format!("invalid grid cell: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    StructuralMdp,
    BufferedMdp,
    Index,
    IndexOnline,
    MdpOnline,
    MaxAgeArrival,
    RandomArrival,
    RoundRobin,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 8] = [
        SchedulerKind::StructuralMdp,
        SchedulerKind::BufferedMdp,
        SchedulerKind::Index,
        SchedulerKind::IndexOnline,
        SchedulerKind::MdpOnline,
        SchedulerKind::MaxAgeArrival,
        SchedulerKind::RandomArrival,
        SchedulerKind::RoundRobin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::StructuralMdp => "structural_mdp",
            SchedulerKind::BufferedMdp => "buffered_mdp",
            SchedulerKind::Index => "index",
            SchedulerKind::IndexOnline => "index_online",
            SchedulerKind::MdpOnline => "mdp_online",
            SchedulerKind::MaxAgeArrival => "max_age_arrival",
            SchedulerKind::RandomArrival => "random_arrival",
            SchedulerKind::RoundRobin => "round_robin",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Needs a solved policy table.
    pub fn needs_table(self) -> bool {
        matches!(self, SchedulerKind::StructuralMdp | SchedulerKind::BufferedMdp)
    }

    pub fn uses_bound(self) -> bool {
        self.needs_table() || self == SchedulerKind::MdpOnline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub kind: SchedulerKind,
    /// Truncation bound for table and online MDP schedulers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Solver tolerance for table schedulers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Step-size scale `a` in `a / t` for the online MDP scheduler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Run on the buffered network. Defaults to true only for `buffered_mdp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffered: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SchedulerSpec {
    pub fn new(kind: SchedulerKind) -> Self {
        Self {
            kind,
            m: None,
            tol: None,
            gamma: None,
            buffered: None,
            label: None,
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn bound(&self) -> usize {
        self.m.unwrap_or(match self.kind {
            SchedulerKind::MdpOnline => DEFAULT_ONLINE_BOUND,
            _ => DEFAULT_TABLE_BOUND,
        })
    }

    pub fn tolerance(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOLERANCE)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(DEFAULT_GAMMA)
    }

    pub fn buffered_network(&self) -> bool {
        self.buffered.unwrap_or(self.kind == SchedulerKind::BufferedMdp)
    }

    /// Bound actually used by an online MDP scheduler with `users` users.
    pub fn online_bound(&self, users: usize) -> usize {
        let mut m = self.bound();
        while m > users + 1 && online_states(users, m) > ONLINE_STATE_CAP {
            m -= 1;
        }
        m
    }
}

fn online_states(users: usize, m: usize) -> usize {
    m.checked_pow(users as u32)
        .and_then(|a| a.checked_mul(1 << users))
        .unwrap_or(usize::MAX)
}

/// Command-line overrides applied on top of a spec.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
    pub warmup: Option<u64>,
    pub replications: Option<u64>,
    pub m: Option<usize>,
    pub gamma: Option<f64>,
    pub tol: Option<f64>,
}

impl ExperimentSpec {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.warmup {
            self.warmup = w;
        }
        if let Some(r) = o.replications {
            self.replications = r;
        }
        for s in &mut self.schedulers {
            if let Some(m) = o.m.filter(|_| s.kind.uses_bound()) {
                s.m = Some(m);
            }
            if let Some(t) = o.tol.filter(|_| s.kind.needs_table()) {
                s.tol = Some(t);
            }
        }
        if let Some(g) = o.gamma {
            // A gamma override collapses several online MDP variants into one.
            let mut seen = false;
            self.schedulers.retain_mut(|s| {
                if s.kind != SchedulerKind::MdpOnline {
                    return true;
                }
                s.gamma = Some(g);
                s.label = None;
                !std::mem::replace(&mut seen, true)
            });
        }
    }

    /// Keeps only the schedulers whose kind is named.
    pub fn retain_kinds(&mut self, names: &[String]) -> Result<(), CliError> {
        let kinds = names
            .iter()
            .map(|n| SchedulerKind::parse(n).ok_or_else(|| unknown_policy(n)))
            .collect::<Result<Vec<_>, _>>()?;
        self.schedulers.retain(|s| kinds.contains(&s.kind));
        if self.schedulers.is_empty() {
            return Err(CliError::Usage(format!(
                "none of the requested policies ({}) appear in `{}`",
                names.join(", "),
                self.name
            )));
        }
        Ok(())
    }

    /// Rejects specs that cannot run and returns the grid.
    pub fn validate(&self) -> Result<Vec<ArrivalModel>, CliError> {
        if self.horizon == 0 {
            return Err(CliError::Usage("horizon must be at least one slot".into()));
        }
        if self.warmup >= self.horizon {
            return Err(CliError::Usage(format!(
                "warmup of {} slots leaves nothing of a {}-slot horizon",
                self.warmup, self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(CliError::Usage("replications must be at least 1".into()));
        }
        if self.schedulers.is_empty() {
            return Err(CliError::Usage("no schedulers given".into()));
        }
        let grid = self.grid.models()?;
        for s in &self.schedulers {
            if let Some(t) = s.tol {
                if !(t.is_finite() && t > 0.0) {
                    return Err(CliError::Usage(format!("tolerance must be positive, got {t}")));
                }
            }
            if let Some(g) = s.gamma {
                if !(g.is_finite() && g > 0.0) {
                    return Err(CliError::Usage(format!("gamma must be positive, got {g}")));
                }
            }
            if s.kind.uses_bound() {
                for model in &grid {
                    let n = model.user_count();
                    if s.bound() <= n {
                        return Err(CliError::Usage(format!(
                            "{}: truncation m = {} must be greater than the number of users N = {n}",
                            s.kind.name(),
                            s.bound()
                        )));
                    }
                }
            }
        }
        Ok(grid)
    }
}

pub fn unknown_policy(name: &str) -> CliError {
    let known: Vec<_> = SchedulerKind::ALL.iter().map(|k| k.name()).collect();
    CliError::Usage(format!("unknown policy `{name}`; available: {}", known.join(", ")))
}

fn tenths(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(|k| k as f64 / 10.0).collect()
}

pub const RECIPES: [&str; 6] = ["fig3_switch_map", "fig5", "fig6", "fig7", "fig8", "fig9_buffer"];

/// Built-in experiments. Recipes solve their policy tables in memory.
pub fn recipe(name: &str) -> Option<ExperimentSpec> {
    use SchedulerKind::*;
    let online_variants = || [1.0, 0.1, 0.01].map(|g| SchedulerSpec::new(MdpOnline).with_gamma(g));
    let two_user_sweep = |name: &str, fixed: f64| ExperimentSpec {
        name: name.into(),
        horizon: 100_000,
        warmup: 0,
        seed: DEFAULT_SEED,
        replications: 1,
        trajectory_stride: 0,
        grid: Grid::SweepLast {
            fixed: vec![fixed],
            values: tenths(1, 9),
        },
        schedulers: [SchedulerSpec::new(StructuralMdp).with_m(30)]
            .into_iter()
            .chain(online_variants())
            .chain([Index, IndexOnline, MaxAgeArrival, RandomArrival, RoundRobin].map(SchedulerSpec::new))
            .collect(),
    };
    let spec = match name {
        "fig3_switch_map" => ExperimentSpec {
            name: name.into(),
            horizon: 100_000,
            warmup: 0,
            seed: DEFAULT_SEED,
            replications: 1,
            trajectory_stride: 0,
            grid: Grid::Explicit {
                probs: vec![vec![0.9, 0.9], vec![0.9, 0.5]],
            },
            schedulers: vec![SchedulerSpec::new(StructuralMdp).with_m(10), SchedulerSpec::new(Index)],
        },
        "fig5" => two_user_sweep(name, 0.6),
        "fig6" => two_user_sweep(name, 0.8),
        "fig7" => ExperimentSpec {
            name: name.into(),
            horizon: 100_000,
            warmup: 0,
            seed: DEFAULT_SEED,
            replications: 1,
            trajectory_stride: 0,
            grid: Grid::Equal {
                users: vec![2, 3, 4],
                values: tenths(1, 9),
            },
            schedulers: vec![
                SchedulerSpec::new(MdpOnline).with_gamma(0.01),
                SchedulerSpec::new(Index),
                SchedulerSpec::new(IndexOnline),
            ],
        },
        "fig8" => ExperimentSpec {
            name: name.into(),
            horizon: 100_000,
            warmup: 0,
            seed: DEFAULT_SEED,
            replications: 1,
            trajectory_stride: 0,
            grid: Grid::InverseUsers {
                users: (2..=12).collect(),
            },
            schedulers: vec![SchedulerSpec::new(Index), SchedulerSpec::new(IndexOnline)],
        },
        "fig9_buffer" => ExperimentSpec {
            name: name.into(),
            horizon: 100_000,
            warmup: 0,
            seed: DEFAULT_SEED,
            replications: 1,
            trajectory_stride: 0,
            grid: Grid::Equal {
                users: vec![2],
                values: tenths(4, 9),
            },
            schedulers: vec![
                SchedulerSpec::new(StructuralMdp).with_m(30),
                SchedulerSpec::new(BufferedMdp).with_m(30),
            ],
        },
        _ => return None,
    };
    Some(spec)
}
