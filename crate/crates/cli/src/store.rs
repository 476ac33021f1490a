//! Solved policy tables on disk: one directory per scheduler kind, bound and
//! arrival vector, holding `policy.csv` and `manifest.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use aoi_core::artifact::{read_policy, write_policy};
use aoi_core::mdp::{
    self, solve_model, BufferedAgeMdp, BufferedStateSpace, PolicyTable, SolveOptions, TruncatedStateSpace,
};
use aoi_core::network::ArrivalModel;
use serde::{Deserialize, Serialize};

use crate::experiment::SchedulerKind;
use crate::{code_version, CliError};

pub const POLICY_FILE: &str = "policy.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// What to solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRequest {
    pub kind: SchedulerKind,
    pub model: ArrivalModel,
    pub m: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableManifest {
    pub kind: SchedulerKind,
    #[serde(rename = "N")]
    pub users: usize,
    pub m: usize,
    pub probs: Vec<f64>,
    pub tol: f64,
    pub buffered: bool,
    pub states: usize,
    pub iterations: usize,
    pub converged: bool,
    pub span: f64,
    pub average_cost: f64,
    pub code_version: String,
}

#[derive(Debug, Clone)]
pub struct SolvedTable {
    pub policy: PolicyTable,
    pub manifest: TableManifest,
}

/// Directory name for a table, e.g. `structural_mdp_m30_p0.6-0.5`.
pub fn table_key(kind: SchedulerKind, m: usize, probs: &[f64]) -> String {
    let probs: Vec<String> = probs.iter().map(f64::to_string).collect();
    format!("{}_m{m}_p{}", kind.name(), probs.join("-"))
}

pub fn table_dir(root: &Path, kind: SchedulerKind, m: usize, probs: &[f64]) -> PathBuf {
    root.join(table_key(kind, m, probs))
}

/// Runs relative value iteration. Non-convergence is an error that carries
/// the iteration count and the final span.
pub fn solve_table(req: &TableRequest) -> Result<SolvedTable, CliError> {
    let n = req.model.user_count();
    let opts = SolveOptions {
        tolerance: req.tol,
        max_iterations: req.max_iterations,
        structural: true,
    };
    let (solution, states) = match req.kind {
        SchedulerKind::StructuralMdp => {
            let space = TruncatedStateSpace::new(n, req.m).map_err(usage_if_bound)?;
            let states = space.len();
            let mdp = mdp::AgeMdp::new(space, req.model.clone()).map_err(CliError::runtime)?;
            (solve_model(&mdp, &opts).map_err(CliError::runtime)?, states)
        }
        SchedulerKind::BufferedMdp => {
            let space = BufferedStateSpace::new(n, req.m).map_err(usage_if_bound)?;
            let states = space.len();
            let mdp = BufferedAgeMdp::new(space, req.model.clone()).map_err(CliError::runtime)?;
            (solve_model(&mdp, &opts).map_err(CliError::runtime)?, states)
        }
        other => {
            return Err(CliError::Usage(format!(
                "{} has no policy table to solve",
                other.name()
            )));
        }
    };
    let solution = solution.into_converged().map_err(CliError::runtime)?;
    Ok(SolvedTable {
        manifest: TableManifest {
            kind: req.kind,
            users: n,
            m: req.m,
            probs: req.model.probs().to_vec(),
            tol: req.tol,
            buffered: req.kind == SchedulerKind::BufferedMdp,
            states,
            iterations: solution.iterations,
            converged: solution.converged,
            span: solution.span,
            average_cost: solution.average_cost,
            code_version: code_version(),
        },
        policy: solution.policy,
    })
}

fn usage_if_bound(e: mdp::MdpError) -> CliError {
    match e {
        mdp::MdpError::BoundTooSmall { .. } | mdp::MdpError::TooLarge { .. } => CliError::Usage(e.to_string()),
        other => CliError::runtime(other),
    }
}

/// Writes the table under `root` and returns its directory.
pub fn write_table(root: &Path, table: &SolvedTable) -> Result<PathBuf, CliError> {
    let m = &table.manifest;
    let dir = table_dir(root, m.kind, m.m, &m.probs);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join(POLICY_FILE);
    let mut out = BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
    write_policy(&table.policy, &mut out).map_err(|e| CliError::io(&path, e))?;
    out.flush().map_err(|e| CliError::io(&path, e))?;
    write_json(&dir.join(MANIFEST_FILE), &table.manifest)?;
    Ok(dir)
}

/// Loads the table for `(kind, m, probs)`; a missing directory is a usage
/// error that points at `aoi solve`.
pub fn read_table(root: &Path, kind: SchedulerKind, m: usize, probs: &[f64]) -> Result<SolvedTable, CliError> {
    let dir = table_dir(root, kind, m, probs);
    let policy_path = dir.join(POLICY_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    if !policy_path.is_file() || !manifest_path.is_file() {
        let rates: Vec<String> = probs.iter().map(f64::to_string).collect();
        let buffered = if kind == SchedulerKind::BufferedMdp {
            " --buffered"
        } else {
            ""
        };
        return Err(CliError::Usage(format!(
            "no {} policy artifact at {}; create it with `aoi solve --probs {} --m {m}{buffered} --out {}` \
             or `aoi solve --config <experiment.toml>`",
            kind.name(),
            dir.display(),
            rates.join(","),
            root.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: TableManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", manifest_path.display())))?;
    if manifest.kind != kind || manifest.m != m || manifest.probs != probs {
        return Err(CliError::Runtime(format!(
            "{} describes {} m={} p={:?}, expected {} m={m} p={probs:?}",
            manifest_path.display(),
            manifest.kind.name(),
            manifest.m,
            manifest.probs,
            kind.name()
        )));
    }
    let file = File::open(&policy_path).map_err(|e| CliError::io(&policy_path, e))?;
    let policy =
        read_policy(BufReader::new(file)).map_err(|e| CliError::Runtime(format!("{}: {e}", policy_path.display())))?;
    if policy.len() != manifest.states {
        return Err(CliError::Runtime(format!(
            "{} has {} rows, manifest says {} states",
            policy_path.display(),
            policy.len(),
            manifest.states
        )));
    }
    Ok(SolvedTable { policy, manifest })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
