//! Executes an experiment spec: resolves policy tables, simulates every
//! `(replication, grid cell, scheduler)` triple and renders the outputs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use aoi_core::mdp::{BufferedStateSpace, TruncatedStateSpace};
use aoi_core::network::{ArrivalModel, Decision};
use aoi_core::schedulers::{
    BaselineKind, BaselineScheduler, BufferedMdpScheduler, IndexOnlineScheduler, IndexScheduler, MdpOnlineScheduler,
    SchedulerPolicy, StepSchedule, StructuralMdpScheduler,
};
use aoi_core::sim::{sweep, write_metrics_csv, PolicyFactory, SimConfig, SimMetrics};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentSpec, SchedulerKind, SchedulerSpec};
use crate::store::{read_table, solve_table, SolvedTable, TableRequest};
use crate::CliError;

/// Where policy tables come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    Solve { max_iterations: usize },
    Load(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct TableId {
    kind: SchedulerKind,
    m: usize,
    tol_bits: u64,
    grid: usize,
}

fn table_id(s: &SchedulerSpec, grid: usize) -> TableId {
    TableId {
        kind: s.kind,
        m: s.bound(),
        tol_bits: s.tolerance().to_bits(),
        grid,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub policy: String,
    pub probs: Vec<f64>,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<SimMetrics>,
    pub failures: Vec<CellFailure>,
    /// Solved or loaded tables in `(kind, m, tol, grid)` order.
    pub tables: Vec<Arc<SolvedTable>>,
}

/// Resolves every table the spec needs. Loading fails fast on the first
/// missing artifact; solving runs the distinct problems in parallel.
fn resolve_tables(
    spec: &ExperimentSpec,
    grid: &[ArrivalModel],
    source: &TableSource,
) -> Result<BTreeMap<TableId, Arc<SolvedTable>>, CliError> {
    let mut wanted = BTreeMap::new();
    for s in spec.schedulers.iter().filter(|s| s.kind.needs_table()) {
        for (g, model) in grid.iter().enumerate() {
            wanted.entry(table_id(s, g)).or_insert_with(|| TableRequest {
                kind: s.kind,
                model: model.clone(),
                m: s.bound(),
                tol: s.tolerance(),
                max_iterations: 0,
            });
        }
    }
    let wanted: Vec<(TableId, TableRequest)> = wanted.into_iter().collect();
    let resolved: Result<Vec<_>, CliError> = match source {
        TableSource::Solve { max_iterations } => wanted
            .into_par_iter()
            .map(|(id, mut req)| {
                req.max_iterations = *max_iterations;
                solve_table(&req).map(|t| (id, Arc::new(t)))
            })
            .collect(),
        TableSource::Load(root) => wanted
            .into_iter()
            .map(|(id, req)| read_table(root, req.kind, req.m, req.model.probs()).map(|t| (id, Arc::new(t))))
            .collect(),
    };
    Ok(resolved?.into_iter().collect())
}

fn build_policy(
    s: &SchedulerSpec,
    model: &ArrivalModel,
    seed: u64,
    table: Option<&SolvedTable>,
) -> Result<Box<dyn SchedulerPolicy>, String> {
    let n = model.user_count();
    let missing = || format!("{} has no policy table for p={:?}", s.kind.name(), model.probs());
    Ok(match s.kind {
        SchedulerKind::StructuralMdp => {
            let space = TruncatedStateSpace::new(n, s.bound()).map_err(|e| e.to_string())?;
            let table = table.ok_or_else(missing)?;
            Box::new(StructuralMdpScheduler::new(space, table.policy.clone()).map_err(|e| e.to_string())?)
        }
        SchedulerKind::BufferedMdp => {
            let space = BufferedStateSpace::new(n, s.bound()).map_err(|e| e.to_string())?;
            let table = table.ok_or_else(missing)?;
            Box::new(BufferedMdpScheduler::new(space, table.policy.clone()).map_err(|e| e.to_string())?)
        }
        SchedulerKind::Index => Box::new(IndexScheduler::new(model.probs().to_vec())),
        SchedulerKind::IndexOnline => Box::new(IndexOnlineScheduler::new(n)),
        SchedulerKind::MdpOnline => Box::new(
            MdpOnlineScheduler::new(n, s.online_bound(n), StepSchedule::new(s.gamma())).map_err(|e| e.to_string())?,
        ),
        SchedulerKind::MaxAgeArrival => Box::new(BaselineScheduler::new(BaselineKind::MaxAgeArrival, n, seed)),
        SchedulerKind::RandomArrival => Box::new(BaselineScheduler::new(BaselineKind::RandomArrival, n, seed)),
        SchedulerKind::RoundRobin => Box::new(BaselineScheduler::new(BaselineKind::RoundRobin, n, seed)),
    })
}

/// Runs the spec. Rows come back ordered by replication, grid cell and
/// scheduler; failing cells are reported instead of aborting the run.
pub fn execute(spec: &ExperimentSpec, source: &TableSource) -> Result<RunOutput, CliError> {
    let grid = spec.validate()?;
    let tables = resolve_tables(spec, &grid, source)?;

    let mut cells = Vec::new();
    for rep in 0..spec.replications {
        let per_scheduler: Vec<_> = spec
            .schedulers
            .par_iter()
            .enumerate()
            .map(|(si, s)| {
                let template = SimConfig {
                    horizon: spec.horizon,
                    warmup: spec.warmup,
                    buffered: s.buffered_network(),
                    trajectory_stride: spec.trajectory_stride,
                    ..SimConfig::new(grid[0].clone(), spec.horizon, spec.seed.wrapping_add(rep))
                };
                let factory = |model: &ArrivalModel, seed: u64| {
                    let g = grid.iter().position(|m| m.probs() == model.probs());
                    let table = g.and_then(|g| tables.get(&table_id(s, g))).map(Arc::as_ref);
                    build_policy(s, model, seed, table)
                };
                let factory: &PolicyFactory = &factory;
                (si, sweep(&[factory], &grid, &template))
            })
            .collect();
        for (si, sweep_cells) in per_scheduler {
            for cell in sweep_cells {
                cells.push((rep, cell.grid_index, si, cell));
            }
        }
    }
    cells.sort_by_key(|(rep, g, si, _)| (*rep, *g, *si));

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (_, g, si, cell) in cells {
        let s = &spec.schedulers[si];
        match cell.result {
            Ok(mut metrics) => {
                if let Some(label) = &s.label {
                    metrics.policy = label.clone();
                }
                rows.push(metrics);
            }
            Err(e) => failures.push(CellFailure {
                policy: s.label.clone().unwrap_or_else(|| s.kind.name().into()),
                probs: grid[g].probs().to_vec(),
                seed: cell.seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(RunOutput {
        rows,
        failures,
        tables: tables.into_values().collect(),
    })
}

pub fn metrics_csv(rows: &[SimMetrics]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    write_metrics_csv(rows, &mut out).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(out)
}

/// Actions of every two-user no-buffer table at `λ = (1, 1)` as CSV rows
/// `p_1,p_2,m,x_1,x_2,action`. `None` when no such table exists.
pub fn switch_map_csv(tables: &[Arc<SolvedTable>]) -> Option<String> {
    let mut out = String::from("p_1,p_2,m,x_1,x_2,action\n");
    let mut any = false;
    for t in two_user_tables(tables) {
        any = true;
        let m = t.manifest.m;
        let space = TruncatedStateSpace::new(2, m).expect("solved table has a valid space");
        for x1 in 1..=m as u64 {
            for x2 in 1..=m as u64 {
                let s = space.ordinal(&[x1, x2], &[true, true]).expect("age in range");
                let p = &t.manifest.probs;
                out.push_str(&format!(
                    "{},{},{m},{x1},{x2},{}\n",
                    p[0],
                    p[1],
                    t.policy.action(s).target()
                ));
            }
        }
    }
    any.then_some(out)
}

/// Text rendering of the same maps: `1`/`2` mark the served user, `.` idle.
/// Rows run from `x_1 = m` down to 1, columns over `x_2`.
pub fn switch_map_text(tables: &[Arc<SolvedTable>]) -> String {
    let mut out = String::new();
    for t in two_user_tables(tables) {
        let m = t.manifest.m;
        let space = TruncatedStateSpace::new(2, m).expect("solved table has a valid space");
        out.push_str(&format!(
            "switch map p=({}, {}) m={m}, rows x_1 = {m}..1, columns x_2 = 1..{m}\n",
            t.manifest.probs[0], t.manifest.probs[1]
        ));
        for x1 in (1..=m as u64).rev() {
            let line: String = (1..=m as u64)
                .map(|x2| {
                    let s = space.ordinal(&[x1, x2], &[true, true]).expect("age in range");
                    match t.policy.action(s) {
                        Decision::IDLE => '.',
                        d => char::from_digit(d.target() as u32, 10).unwrap_or('?'),
                    }
                })
                .collect();
            out.push_str(&format!("{x1:>4} {line}\n"));
        }
    }
    out
}

fn two_user_tables(tables: &[Arc<SolvedTable>]) -> impl Iterator<Item = &SolvedTable> {
    tables
        .iter()
        .map(Arc::as_ref)
        .filter(|t| t.manifest.kind == SchedulerKind::StructuralMdp && t.manifest.users == 2)
}

/// Fixed-width summary of the rows.
pub fn summary(rows: &[SimMetrics]) -> String {
    let labels: Vec<String> = rows.iter().map(|r| r.policy.clone()).collect();
    let probs: Vec<String> = rows
        .iter()
        .map(|r| {
            let p: Vec<String> = r.probs.iter().map(|p| format!("{p:.3}")).collect();
            format!("({})", p.join(", "))
        })
        .collect();
    let w0 = labels.iter().map(String::len).max().unwrap_or(0).max(6);
    let w1 = probs.iter().map(String::len).max().unwrap_or(0).max(5);
    let mut out = format!("{:<w0$}  {:<w1$}  {:>14}\n", "policy", "probs", "avg_total_age");
    for ((r, label), p) in rows.iter().zip(&labels).zip(&probs) {
        out.push_str(&format!("{label:<w0$}  {p:<w1$}  {:>14.4}\n", r.avg_total_age));
    }
    out
}
