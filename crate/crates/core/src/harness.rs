//! IR matrix construction, normalization, summaries and the experiment runner.
//!
//! A matrix has one row per intervention (row 0 is the null intervention) and
//! one column per sampled state. Cells whose intervention cannot be applied to
//! the state are kept as explicit missing values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::divergence::{ir_value, DivergenceError};
use crate::envs::{apply_intervention, intervention_catalog, EnvError, GridConfig, Intervention};
use crate::pipelines::{build_agent_sets, evaluate_return, Algorithm, PipelineError, PipelineSpec, Policy, ValueInit};
use crate::sampling::{collect_trajectory, sample_states, SamplingError, StateSample};
use crate::seed;

/// Trials used for stochastic agents when none are configured.
pub const DEFAULT_STOCHASTIC_TRIALS: usize = 30;
/// Token used for missing cells in matrix CSV files.
pub const MISSING: &str = "NA";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("at least two evaluation agents are required, got {0}")]
    TooFewAgents(usize),
    #[error("the first catalog entry must be the null intervention")]
    MissingNullIntervention,
    #[error("the spotter agent (seed {0}) is among the evaluation agents")]
    SpotterInAgents(u64),
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("matrix CSV row {row}, column {column}: {reason}")]
    Csv { row: usize, column: usize, reason: String },
    #[error("state {state}, intervention {intervention}: {source}")]
    Cell {
        state: usize,
        intervention: usize,
        source: DivergenceError,
    },
    #[error("pipeline {pipeline}, checkpoint {checkpoint}: {source}")]
    At {
        pipeline: String,
        checkpoint: u64,
        source: Box<HarnessError>,
    },
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub pipeline: String,
    pub algorithm: String,
    pub checkpoint: u64,
    pub agents: usize,
    pub trials: usize,
    pub spotter_seed: u64,
    pub sampling_seed: u64,
}

/// Grid of optional values, `rows[m][k]`, with the intervention id of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGrid {
    pub intervention_ids: Vec<usize>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MatrixGrid {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn get(&self, k: usize, m: usize) -> Option<f64> {
        self.rows[m][k]
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// `intervention,s0,..,s{K-1}` header, then one line per intervention
    /// starting with its id. Values use the shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("intervention");
        for k in 0..self.column_count() {
            let _ = write!(out, ",s{k}");
        }
        out.push('\n');
        for (id, row) in self.intervention_ids.iter().zip(&self.rows) {
            let _ = write!(out, "{id}");
            for v in row {
                match v {
                    Some(x) => {
                        let _ = write!(out, ",{x}");
                    }
                    None => {
                        let _ = write!(out, ",{MISSING}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. Row and column numbers in
    /// errors are 1-based and count the header line.
    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let csv_err = |row: usize, column: usize, reason: String| HarnessError::Csv { row, column, reason };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| csv_err(1, 1, "empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"intervention") {
            return Err(csv_err(1, 1, "header must start with `intervention`".into()));
        }
        for (k, c) in cols.iter().enumerate().skip(1) {
            if *c != format!("s{}", k - 1) {
                return Err(csv_err(1, k + 1, format!("expected `s{}`, found `{c}`", k - 1)));
            }
        }
        let width = cols.len() - 1;
        if width == 0 {
            return Err(csv_err(1, 2, "no state columns".into()));
        }
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row_no = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width + 1 {
                return Err(csv_err(
                    row_no,
                    fields.len().min(width + 1),
                    format!("expected {} fields, found {}", width + 1, fields.len()),
                ));
            }
            ids.push(
                fields[0]
                    .parse::<usize>()
                    .map_err(|_| csv_err(row_no, 1, format!("bad intervention id `{}`", fields[0])))?,
            );
            let row = fields[1..]
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    if *f == MISSING {
                        return Ok(None);
                    }
                    let v: f64 = f.parse().map_err(|_| csv_err(row_no, k + 2, format!("bad value `{f}`")))?;
                    if !v.is_finite() {
                        return Err(csv_err(row_no, k + 2, format!("non-finite value `{f}`")));
                    }
                    Ok(Some(v))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(csv_err(2, 1, "no intervention rows".into()));
        }
        Ok(MatrixGrid {
            intervention_ids: ids,
            rows,
        })
    }
}

/// Raw robustness values, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrMatrix {
    pub grid: MatrixGrid,
    pub meta: MatrixMeta,
}

/// `entry(k, m) = raw(k, m) - raw(k, 0)`; row 0 is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeIrMatrix {
    pub grid: MatrixGrid,
    pub meta: MatrixMeta,
}

impl IrMatrix {
    /// Wraps a grid after checking its shape and value range.
    pub fn from_grid(grid: MatrixGrid, meta: MatrixMeta) -> Result<Self, HarnessError> {
        let k = grid.column_count();
        if grid.rows.iter().any(|r| r.len() != k) {
            return Err(HarnessError::MalformedMatrix("ragged rows".into()));
        }
        if grid.intervention_ids.len() != grid.rows.len() {
            return Err(HarnessError::MalformedMatrix("one id per row is required".into()));
        }
        if grid.intervention_ids.first() != Some(&0) {
            return Err(HarnessError::MalformedMatrix("row 0 must be the null intervention".into()));
        }
        if let Some(v) = grid.rows.iter().flatten().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(HarnessError::MalformedMatrix(format!("value {v} outside [0, 1]")));
        }
        Ok(IrMatrix { grid, meta })
    }
}

/// Per-cell seed: `mix(run_seed, pipeline, checkpoint, k, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub run_seed: u64,
    pub pipeline: u64,
    pub checkpoint: u64,
}

impl CellSeeds {
    pub fn seed(&self, k: usize, m: usize) -> u64 {
        seed::mix(&[self.run_seed, self.pipeline, self.checkpoint, k as u64, m as u64])
    }
}

/// One trial for deterministic agent sets, otherwise `stochastic_trials`.
pub fn default_trials(agents: &[Policy], stochastic_trials: usize) -> usize {
    if agents.iter().all(Policy::is_deterministic) {
        1
    } else {
        stochastic_trials
    }
}

/// Evaluates every (state, intervention) cell. Work is split across the
/// current rayon pool; since each cell has its own seed the result does not
/// depend on the partition.
pub fn ir_matrix(
    agents: &[Policy],
    sample: &StateSample,
    catalog: &[Intervention],
    trials: usize,
    seeds: CellSeeds,
    meta: MatrixMeta,
) -> Result<IrMatrix, HarnessError> {
    if agents.len() < 2 {
        return Err(HarnessError::TooFewAgents(agents.len()));
    }
    if !catalog.first().is_some_and(Intervention::is_null) {
        return Err(HarnessError::MissingNullIntervention);
    }
    if agents.iter().any(|a| a.meta().seed == sample.spotter_seed) {
        return Err(HarnessError::SpotterInAgents(sample.spotter_seed));
    }
    let k_count = sample.states.len();
    let cells: Vec<Option<f64>> = (0..catalog.len() * k_count)
        .into_par_iter()
        .map(|idx| {
            let (m, k) = (idx / k_count, idx % k_count);
            let state = match apply_intervention(&sample.states[k], &catalog[m]) {
                Ok(s) => s,
                Err(EnvError::InapplicableIntervention { .. }) => return Ok(None),
                Err(e) => {
                    return Err(HarnessError::Cell {
                        state: k,
                        intervention: m,
                        source: DivergenceError::IncompatibleState(e.to_string()),
                    })
                }
            };
            ir_value(&state, agents, trials, seeds.seed(k, m))
                .map(|v| Some(v.value))
                .map_err(|source| HarnessError::Cell {
                    state: k,
                    intervention: m,
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    let rows = cells.chunks(k_count).map(<[_]>::to_vec).collect();
    Ok(IrMatrix {
        grid: MatrixGrid {
            intervention_ids: catalog.iter().map(|i| i.id).collect(),
            rows,
        },
        meta,
    })
}

/// Subtracts each column's null-intervention value from the column.
pub fn normalize_matrix(raw: &IrMatrix) -> Result<RelativeIrMatrix, HarnessError> {
    let base = &raw.grid.rows[0];
    if let Some(k) = base.iter().position(Option::is_none) {
        return Err(HarnessError::MalformedMatrix(format!(
            "null-intervention cell for state {k} is missing"
        )));
    }
    let rows = raw
        .grid
        .rows
        .iter()
        .map(|row| row.iter().zip(base).map(|(v, b)| v.map(|v| v - b.unwrap())).collect())
        .collect();
    Ok(RelativeIrMatrix {
        grid: MatrixGrid {
            intervention_ids: raw.grid.intervention_ids.clone(),
            rows,
        },
        meta: raw.meta.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub checkpoint: u64,
    /// Mean of the null-intervention row.
    pub original: f64,
    /// Mean of the intervened rows.
    pub intervened: f64,
    /// Mean of the intervened rows after per-state normalization.
    pub normalized: f64,
    /// Cells excluded from the means.
    pub missing: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-matrix averages. Missing cells are skipped; a normalized entry
/// needs both the cell and its column's null value.
pub fn summarize(raw: &IrMatrix) -> SummaryRow {
    let g = &raw.grid;
    let base = &g.rows[0];
    let original = mean(base.iter().flatten().copied());
    let intervened = mean(g.rows[1..].iter().flatten().flatten().copied());
    let normalized = mean(
        g.rows[1..]
            .iter()
            .flat_map(|row| row.iter().zip(base))
            .filter_map(|(v, b)| Some((*v)? - (*b)?)),
    );
    SummaryRow {
        algorithm: raw.meta.algorithm.clone(),
        checkpoint: raw.meta.checkpoint,
        original,
        intervened,
        normalized,
        missing: g.missing_count(),
    }
}

pub const SUMMARY_HEADER: &str = "algorithm,checkpoint,original,intervened,normalized";

pub fn summaries_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.algorithm, r.checkpoint, r.original, r.intervened, r.normalized
        );
    }
    out
}

/// Parses summary CSV; `missing` is not stored there and reads back as 0.
pub fn summaries_from_csv(text: &str) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(HarnessError::Csv {
            row: 1,
            column: 1,
            reason: format!("expected header `{SUMMARY_HEADER}`"),
        });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |column: usize| HarnessError::Csv {
                row: i + 2,
                column,
                reason: format!("bad field in `{line}`"),
            };
            if f.len() != 5 {
                return Err(bad(f.len().min(5)));
            }
            Ok(SummaryRow {
                algorithm: f[0].to_string(),
                checkpoint: f[1].parse().map_err(|_| bad(2))?,
                original: f[2].parse().map_err(|_| bad(3))?,
                intervened: f[3].parse().map_err(|_| bad(4))?,
                normalized: f[4].parse().map_err(|_| bad(5))?,
                missing: 0,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Run config and experiment runner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub name: String,
    /// Named layout (`default`, `symmetric` or `ring`); ignored when `layout` is set.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub layout: Option<GridConfig>,
}

impl EnvironmentConfig {
    pub fn grid(&self) -> Result<GridConfig, HarnessError> {
        if self.name != "gridpatrol" {
            return Err(HarnessError::Config(format!(
                "environment.name: unknown environment `{}`",
                self.name
            )));
        }
        let grid = match (&self.layout, &self.preset) {
            (Some(layout), _) => layout.clone(),
            (None, Some(p)) => GridConfig::preset(p)
                .ok_or_else(|| HarnessError::Config(format!("environment.preset: unknown preset `{p}`")))?,
            (None, None) => GridConfig::default(),
        };
        grid.validate()
            .map_err(|e| HarnessError::Config(format!("environment.layout: {e}")))?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    /// Artifact directory name; defaults to the algorithm id.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default)]
    pub init: Option<ValueInit>,
    #[serde(default)]
    pub exploring_starts: Option<bool>,
}

impl PipelineConfig {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.algorithm.to_string())
    }

    pub fn spec(&self, env: &GridConfig) -> PipelineSpec {
        let mut spec = PipelineSpec::new(self.algorithm, env.clone());
        if let Some(v) = self.learning_rate {
            spec.learning_rate = v;
        }
        if let Some(v) = self.discount {
            spec.discount = v;
        }
        if let Some(v) = self.epsilon {
            spec.epsilon = v;
        }
        if let Some(v) = self.temperature {
            spec.temperature = v;
        }
        if let Some(v) = &self.checkpoints {
            spec.checkpoints = v.clone();
        }
        if let Some(v) = self.init {
            spec.init = v;
        }
        if let Some(v) = self.exploring_starts {
            spec.exploring_starts = v;
        }
        spec
    }
}

fn default_agents() -> usize {
    10
}
fn default_states() -> usize {
    30
}
fn default_episodes() -> usize {
    10
}

/// Declarative run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Evaluation agents N (a spotter is trained in addition).
    #[serde(default = "default_agents")]
    pub agents: usize,
    /// Sampled states K.
    #[serde(default = "default_states")]
    pub states: usize,
    /// Trials T for stochastic agent sets; deterministic sets always use 1.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default = "default_episodes")]
    pub eval_episodes: usize,
    /// Also evaluate the untrained policies as checkpoint 0.
    #[serde(default)]
    pub include_untrained: bool,
    /// Worker threads; not part of the results.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub environment: EnvironmentConfig,
    #[serde(rename = "pipeline")]
    pub pipelines: Vec<PipelineConfig>,
}

pub const DEFAULT_RUN_SEED: u64 = 20_240_501;

impl Default for RunConfig {
    /// Four pipelines on the default layout, N=10, K=30, T=30.
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_RUN_SEED,
            agents: 10,
            states: 30,
            trials: Some(DEFAULT_STOCHASTIC_TRIALS),
            eval_episodes: 10,
            include_untrained: false,
            workers: None,
            output_dir: None,
            environment: EnvironmentConfig {
                name: "gridpatrol".into(),
                preset: Some("default".into()),
                layout: None,
            },
            pipelines: Algorithm::ALL
                .into_iter()
                .map(|algorithm| PipelineConfig {
                    algorithm,
                    name: None,
                    learning_rate: None,
                    discount: None,
                    epsilon: None,
                    temperature: None,
                    checkpoints: None,
                    init: None,
                    exploring_starts: None,
                })
                .collect(),
        }
    }
}

/// Parameters fixed after validation.
#[derive(Debug, Clone)]
pub struct ValidatedRun {
    pub grid: GridConfig,
    pub pipelines: Vec<(String, PipelineSpec)>,
    pub stochastic_trials: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Checks everything that can be checked before training.
    pub fn validate(&self) -> Result<ValidatedRun, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let grid = self.environment.grid()?;
        if self.agents < 2 {
            return bad(format!("agents: need at least 2, got {}", self.agents));
        }
        if self.states == 0 {
            return bad("states: must be at least 1".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes: must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers: must be at least 1".into());
        }
        if self.pipelines.is_empty() {
            return bad("pipeline: at least one pipeline is required".into());
        }
        let stochastic_trials = self.trials.unwrap_or(DEFAULT_STOCHASTIC_TRIALS);
        let mut pipelines = Vec::new();
        for (i, p) in self.pipelines.iter().enumerate() {
            let name = p.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("pipeline[{i}].name: `{name}` must be non-empty [A-Za-z0-9_-]"));
            }
            if pipelines.iter().any(|(n, _): &(String, PipelineSpec)| *n == name) {
                return bad(format!("pipeline[{i}].name: duplicate `{name}`"));
            }
            let spec = p.spec(&grid);
            spec.validate()
                .map_err(|e| HarnessError::Config(format!("pipeline[{i}]: {e}")))?;
            if spec.algorithm == Algorithm::SoftmaxQ && stochastic_trials < 2 {
                return bad(format!("trials: stochastic pipeline[{i}] needs at least 2, got {stochastic_trials}"));
            }
            pipelines.push((name, spec));
        }
        Ok(ValidatedRun {
            grid,
            pipelines,
            stochastic_trials,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub pipeline: String,
    pub algorithm: String,
    pub checkpoint: u64,
    pub raw: String,
    pub relative: String,
    pub states: String,
    pub trials: usize,
    pub missing: usize,
    pub spotter_seed: u64,
    pub sampling_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEntry {
    pub id: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    pub seed: u64,
    pub agents: usize,
    pub states: usize,
    pub stochastic_trials: usize,
    pub eval_episodes: usize,
    pub include_untrained: bool,
    pub environment: GridConfig,
    pub pipelines: Vec<PipelineParameters>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParameters {
    pub name: String,
    pub master_seed: u64,
    pub spec: PipelineSpec,
}

pub const MANIFEST_FORMAT: &str = "ir-manifest v1";

/// Index of a run's outputs. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub performance: Option<String>,
    #[serde(default)]
    pub parameters: Option<RunParameters>,
    #[serde(default)]
    pub interventions: Vec<InterventionEntry>,
    #[serde(default)]
    pub matrices: Vec<MatrixEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(HarnessError::Config(format!("manifest: unsupported format `{}`", m.format)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub manifest_path: PathBuf,
    pub manifest_sha256: String,
    pub summaries: Vec<SummaryRow>,
    pub matrices: Vec<(IrMatrix, RelativeIrMatrix)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const SAMPLE_STREAM: u64 = 0x5341_4d50; // "SAMP"
const EVAL_STREAM: u64 = 0x4556_414c; // "EVAL"

/// Master seed of pipeline `index`: `mix(run_seed, index)`.
pub fn pipeline_master_seed(run_seed: u64, index: usize) -> u64 {
    seed::mix(&[run_seed, index as u64])
}

/// Trains, samples, measures and writes every artifact under `output_dir`.
///
/// Results depend only on the config minus `workers` and `output_dir`, so
/// the manifest hash is stable across reruns and thread counts.
pub fn run_experiment(config: &RunConfig, output_dir: &Path) -> Result<ExperimentReport, HarnessError> {
    let run = config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("workers: {e}")))?;
    pool.install(|| run_validated(config, &run, output_dir))
}

fn run_validated(config: &RunConfig, run: &ValidatedRun, out: &Path) -> Result<ExperimentReport, HarnessError> {
    let catalog = intervention_catalog(&run.grid);
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut matrix_entries = Vec::new();
    let mut summaries = Vec::new();
    let mut matrices = Vec::new();
    let mut performance = String::from("pipeline,algorithm,checkpoint,agent,mean_return\n");
    let mut pipeline_params = Vec::new();

    for (p_idx, (name, spec)) in run.pipelines.iter().enumerate() {
        let master = pipeline_master_seed(config.seed, p_idx);
        pipeline_params.push(PipelineParameters {
            name: name.clone(),
            master_seed: master,
            spec: spec.clone(),
        });
        let sets = build_agent_sets(spec, master, config.agents, config.include_untrained)?;
        for set in sets {
            let ckpt = set.checkpoint;
            let at = |source: HarnessError| HarnessError::At {
                pipeline: name.clone(),
                checkpoint: ckpt,
                source: Box::new(source),
            };
            let dir = format!("{name}/ckpt_{ckpt}");

            let trajectory = collect_trajectory(&run.grid, &set.spotter, 0).map_err(|e| at(e.into()))?;
            let sampling_seed = seed::mix(&[config.seed, p_idx as u64, ckpt, SAMPLE_STREAM]);
            let sample = sample_states(&trajectory, config.states, sampling_seed, set.spotter.meta().seed)
                .map_err(|e| at(e.into()))?;
            let trials = default_trials(&set.agents, run.stochastic_trials);
            let meta = MatrixMeta {
                pipeline: name.clone(),
                algorithm: spec.algorithm.to_string(),
                checkpoint: ckpt,
                agents: set.agents.len(),
                trials,
                spotter_seed: sample.spotter_seed,
                sampling_seed,
            };
            let seeds = CellSeeds {
                run_seed: config.seed,
                pipeline: p_idx as u64,
                checkpoint: ckpt,
            };
            let raw = ir_matrix(&set.agents, &sample, &catalog, trials, seeds, meta).map_err(at)?;
            let relative = normalize_matrix(&raw).map_err(at)?;
            let summary = summarize(&raw);

            let returns: Vec<f64> = set
                .agents
                .par_iter()
                .enumerate()
                .map(|(i, a)| {
                    let s = seed::mix(&[config.seed, p_idx as u64, ckpt, EVAL_STREAM, i as u64 + 1]);
                    evaluate_return(a, &run.grid, config.eval_episodes, s)
                })
                .collect::<Result<_, _>>()
                .map_err(|e| at(e.into()))?;
            for (i, r) in returns.iter().enumerate() {
                let _ = writeln!(performance, "{name},{},{ckpt},{},{r}", spec.algorithm, i + 1);
            }

            for (i, policy) in std::iter::once(&set.spotter).chain(&set.agents).enumerate() {
                files.push((format!("{dir}/agents/agent_{i:02}.policy"), policy.to_canonical().into_bytes()));
            }
            files.push((format!("{dir}/states.json"), sample.to_manifest().into_bytes()));
            files.push((format!("{dir}/raw.csv"), raw.grid.to_csv().into_bytes()));
            files.push((format!("{dir}/relative.csv"), relative.grid.to_csv().into_bytes()));
            matrix_entries.push(MatrixEntry {
                pipeline: name.clone(),
                algorithm: spec.algorithm.to_string(),
                checkpoint: ckpt,
                raw: format!("{dir}/raw.csv"),
                relative: format!("{dir}/relative.csv"),
                states: format!("{dir}/states.json"),
                trials,
                missing: summary.missing,
                spotter_seed: sample.spotter_seed,
                sampling_seed,
            });
            summaries.push(summary);
            matrices.push((raw, relative));
        }
    }
    files.push(("summary.csv".into(), summaries_to_csv(&summaries).into_bytes()));
    files.push(("performance.csv".into(), performance.into_bytes()));
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        summary: Some("summary.csv".into()),
        performance: Some("performance.csv".into()),
        parameters: Some(RunParameters {
            seed: config.seed,
            agents: config.agents,
            states: config.states,
            stochastic_trials: run.stochastic_trials,
            eval_episodes: config.eval_episodes,
            include_untrained: config.include_untrained,
            environment: run.grid.clone(),
            pipelines: pipeline_params,
        }),
        interventions: catalog
            .iter()
            .map(|i| InterventionEntry {
                id: i.id,
                label: i.label.clone(),
            })
            .collect(),
        matrices: matrix_entries,
        artifacts: files
            .iter()
            .map(|(path, bytes)| ArtifactEntry {
                path: path.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            })
            .collect(),
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');

    for (rel, bytes) in &files {
        let path = out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, &manifest_text).map_err(io_err(&manifest_path))?;

    Ok(ExperimentReport {
        manifest_path,
        manifest_sha256: sha256_hex(manifest_text.as_bytes()),
        summaries,
        matrices,
    })
}
