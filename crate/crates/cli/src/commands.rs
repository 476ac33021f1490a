//! Subcommand bodies, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aoi_core::network::ArrivalModel;
use aoi_core::verify::{self, CheckResult, VerifyOptions};
use serde::{Deserialize, Serialize};

use crate::experiment::{
    recipe, unknown_policy, ExperimentSpec, Grid, Overrides, SchedulerKind, SchedulerSpec, RECIPES,
};
use crate::runner::{execute, metrics_csv, summary, switch_map_csv, switch_map_text, CellFailure, TableSource};
use crate::store::{solve_table, write_json, write_table, TableRequest};
use crate::{code_version, CliError};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SWITCH_MAP_FILE: &str = "switch_map.csv";
pub const RUN_MANIFEST_FILE: &str = "manifest.json";

/// Reads an experiment spec from TOML, or replays the spec recorded in a
/// run manifest (`.json`).
pub fn load_spec(path: &Path) -> Result<(ExperimentSpec, Option<RunManifest>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok((manifest.spec.clone(), Some(manifest)))
    } else {
        let spec = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok((spec, None))
    }
}

pub struct SolveRequest {
    pub requests: Vec<TableRequest>,
    pub out: PathBuf,
}

impl SolveRequest {
    /// Every table the spec's table schedulers need.
    pub fn from_spec(spec: &ExperimentSpec, out: PathBuf, max_iterations: usize) -> Result<Self, CliError> {
        let grid = spec.validate()?;
        let mut requests = Vec::new();
        for s in spec.schedulers.iter().filter(|s| s.kind.needs_table()) {
            for model in &grid {
                let req = TableRequest {
                    kind: s.kind,
                    model: model.clone(),
                    m: s.bound(),
                    tol: s.tolerance(),
                    max_iterations,
                };
                if !requests.contains(&req) {
                    requests.push(req);
                }
            }
        }
        if requests.is_empty() {
            return Err(CliError::Usage(
                "the experiment has no structural_mdp or buffered_mdp scheduler to solve".into(),
            ));
        }
        Ok(Self { requests, out })
    }

    pub fn single(
        probs: Vec<f64>,
        m: usize,
        tol: f64,
        buffered: bool,
        max_iterations: usize,
        out: PathBuf,
    ) -> Result<Self, CliError> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CliError::Usage(format!("tolerance must be positive, got {tol}")));
        }
        let model = ArrivalModel::new(probs).map_err(|e| CliError::Usage(e.to_string()))?;
        if m <= model.user_count() {
            return Err(CliError::Usage(format!(
                "truncation m = {m} must be greater than the number of users N = {}",
                model.user_count()
            )));
        }
        let kind = if buffered {
            SchedulerKind::BufferedMdp
        } else {
            SchedulerKind::StructuralMdp
        };
        Ok(Self {
            requests: vec![TableRequest {
                kind,
                model,
                m,
                tol,
                max_iterations,
            }],
            out,
        })
    }
}

/// Solves and writes every requested table. Returns one report line each.
pub fn solve(req: &SolveRequest) -> Result<Vec<String>, CliError> {
    use rayon::prelude::*;
    let solved: Result<Vec<_>, CliError> = req.requests.par_iter().map(solve_table).collect();
    let mut lines = Vec::new();
    for table in solved? {
        let dir = write_table(&req.out, &table)?;
        let m = &table.manifest;
        lines.push(format!(
            "{}: {} states, {} iterations, span {:.2e}, average cost {:.6}",
            dir.display(),
            m.states,
            m.iterations,
            m.span,
            m.average_cost
        ));
    }
    Ok(lines)
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub source: String,
    pub solve_inline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<PathBuf>,
    pub spec: ExperimentSpec,
    pub code_version: String,
    pub outputs: Vec<String>,
    pub rows: usize,
    pub failures: Vec<CellFailure>,
}

pub struct RunRequest {
    pub spec: ExperimentSpec,
    pub source: String,
    pub tables: TableSource,
    pub out: PathBuf,
}

impl RunRequest {
    pub fn recipe(
        name: &str,
        overrides: &Overrides,
        max_iterations: usize,
        out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let mut spec = recipe(name)
            .ok_or_else(|| CliError::Usage(format!("unknown recipe `{name}`; available: {}", RECIPES.join(", "))))?;
        spec.apply(overrides);
        Ok(Self {
            out: out.unwrap_or_else(|| PathBuf::from("results").join(name)),
            source: format!("recipe {name}"),
            spec,
            tables: TableSource::Solve { max_iterations },
        })
    }

    pub fn adhoc(
        probs: Vec<f64>,
        policies: &[String],
        buffered: bool,
        overrides: &Overrides,
        tables: TableSource,
        out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        if policies.is_empty() {
            return Err(CliError::Usage("--probs needs at least one --policy".into()));
        }
        let schedulers = policies
            .iter()
            .map(|name| {
                let kind = SchedulerKind::parse(name).ok_or_else(|| unknown_policy(name))?;
                let mut s = SchedulerSpec::new(kind);
                if buffered {
                    s.buffered = Some(true);
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut spec = ExperimentSpec {
            name: "adhoc".into(),
            horizon: 100_000,
            warmup: 0,
            seed: crate::experiment::DEFAULT_SEED,
            replications: 1,
            trajectory_stride: 0,
            grid: Grid::Explicit { probs: vec![probs] },
            schedulers,
        };
        spec.apply(overrides);
        Ok(Self {
            out: out.unwrap_or_else(|| PathBuf::from("results").join("adhoc")),
            source: "command line".into(),
            spec,
            tables,
        })
    }
}

pub struct RunReport {
    pub manifest: RunManifest,
    pub summary: String,
}

/// Runs the experiment and writes `metrics.csv`, `manifest.json` and, when
/// two-user tables exist, `switch_map.csv` under the output directory.
pub fn run(req: &RunRequest) -> Result<RunReport, CliError> {
    let output = execute(&req.spec, &req.tables)?;
    fs::create_dir_all(&req.out).map_err(|e| CliError::io(&req.out, e))?;
    let metrics_path = req.out.join(METRICS_FILE);
    fs::write(&metrics_path, metrics_csv(&output.rows)?).map_err(|e| CliError::io(&metrics_path, e))?;
    let mut outputs = vec![METRICS_FILE.to_string()];
    let mut text = summary(&output.rows);
    if let Some(csv) = switch_map_csv(&output.tables) {
        let path = req.out.join(SWITCH_MAP_FILE);
        fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
        outputs.push(SWITCH_MAP_FILE.into());
        if output.tables.len() <= 4 {
            text.push('\n');
            text.push_str(&switch_map_text(&output.tables));
        }
    }
    outputs.push(RUN_MANIFEST_FILE.into());
    let (solve_inline, artifacts) = match &req.tables {
        TableSource::Solve { .. } => (true, None),
        TableSource::Load(root) => (false, Some(root.clone())),
    };
    let manifest = RunManifest {
        command: "run".into(),
        source: req.source.clone(),
        solve_inline,
        artifacts,
        spec: req.spec.clone(),
        code_version: code_version(),
        outputs,
        rows: output.rows.len(),
        failures: output.failures,
    };
    write_json(&req.out.join(RUN_MANIFEST_FILE), &manifest)?;
    for f in &manifest.failures {
        text.push_str(&format!(
            "FAILED {} p={:?} seed {}: {}\n",
            f.policy, f.probs, f.seed, f.error
        ));
    }
    Ok(RunReport {
        manifest,
        summary: text,
    })
}

/// Checks that exercise the command layer on top of the library suite.
type CliCheck = (&'static str, fn(u64) -> Result<String, String>);

fn cli_checks() -> Vec<CliCheck> {
    vec![
        ("manifest_determinism", manifest_determinism),
        ("recipes_data_driven", recipes_data_driven),
        ("recipes_well_formed", recipes_well_formed),
    ]
}

fn probe_spec(seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        name: "probe".into(),
        horizon: 5_000,
        warmup: 0,
        seed,
        replications: 1,
        trajectory_stride: 0,
        grid: Grid::Explicit {
            probs: vec![vec![0.7, 0.4], vec![0.5, 0.5]],
        },
        schedulers: vec![
            SchedulerSpec::new(SchedulerKind::StructuralMdp).with_m(8),
            SchedulerSpec::new(SchedulerKind::Index),
            SchedulerSpec::new(SchedulerKind::MdpOnline).with_m(10),
            SchedulerSpec::new(SchedulerKind::RandomArrival),
        ],
    }
}

fn probe_bytes(spec: &ExperimentSpec) -> Result<Vec<u8>, String> {
    let out = execute(
        spec,
        &TableSource::Solve {
            max_iterations: 100_000,
        },
    )
    .map_err(|e| e.to_string())?;
    if !out.failures.is_empty() {
        return Err(format!("{} cells failed", out.failures.len()));
    }
    metrics_csv(&out.rows).map_err(|e| e.to_string())
}

fn manifest_determinism(seed: u64) -> Result<String, String> {
    let spec = probe_spec(seed);
    let json = serde_json::to_string(&spec).map_err(|e| e.to_string())?;
    let replayed: ExperimentSpec = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let a = probe_bytes(&spec)?;
    let b = probe_bytes(&replayed)?;
    if a != b {
        return Err("two runs of the same spec wrote different metrics".into());
    }
    Ok(format!("{} bytes identical across runs", a.len()))
}

fn recipes_data_driven(seed: u64) -> Result<String, String> {
    let base = probe_bytes(&probe_spec(seed))?;
    if base == probe_bytes(&probe_spec(seed.wrapping_add(1)))? {
        return Err("changing the seed left the metrics unchanged".into());
    }
    let mut spec = probe_spec(seed);
    spec.grid = Grid::Explicit {
        probs: vec![vec![0.7, 0.3], vec![0.5, 0.5]],
    };
    if base == probe_bytes(&spec)? {
        return Err("changing the arrival rates left the metrics unchanged".into());
    }
    Ok("seed and rate changes both move the metrics".into())
}

fn recipes_well_formed(_: u64) -> Result<String, String> {
    for name in RECIPES {
        let spec = recipe(name).ok_or_else(|| format!("recipe {name} missing"))?;
        let grid = spec.validate().map_err(|e| format!("{name}: {e}"))?;
        if grid.is_empty() || spec.schedulers.is_empty() {
            return Err(format!("{name} is empty"));
        }
    }
    Ok(format!("{} recipes validate", RECIPES.len()))
}

/// Runs the library property suite plus the command-layer checks. Checks
/// whose id does not contain `filter` are skipped.
pub fn verify(seed: Option<u64>, filter: Option<&str>) -> Vec<CheckResult> {
    let mut opts = VerifyOptions::default();
    if let Some(s) = seed {
        opts.seed = s;
    }
    let keep = |id: &str| filter.is_none_or(|f| id.contains(f));
    let mut results: Vec<CheckResult> = {
        use rayon::prelude::*;
        verify::checks()
            .into_par_iter()
            .filter(|c| keep(&format!("{}/{}", c.module, c.name)))
            .map(|c| verify::run_check(&c, &opts))
            .collect()
    };
    for (name, check) in cli_checks() {
        if !keep(&format!("cli/{name}")) {
            continue;
        }
        let start = Instant::now();
        let outcome = check(opts.seed);
        results.push(CheckResult {
            module: "cli",
            name,
            passed: outcome.is_ok(),
            detail: outcome.unwrap_or_else(|e| e),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    results
}

pub fn verify_report(results: &[CheckResult]) -> (String, Result<(), CliError>) {
    let mut text = String::new();
    for r in results {
        text.push_str(&format!(
            "{} {:<40} {:>6.2}s  {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.id(),
            r.seconds,
            r.detail
        ));
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(CheckResult::id).collect();
    text.push_str(&format!("{} checks, {} failed\n", results.len(), failed.len()));
    let status = if results.is_empty() {
        Err(CliError::Usage("no checks match the filter".into()))
    } else if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    };
    (text, status)
}
