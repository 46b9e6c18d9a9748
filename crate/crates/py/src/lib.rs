//! Python bindings for `ir_core`.
//!
//! ```python
//! import irobust as ir
//! cfg = ir.GridConfig("symmetric")
//! spec = ir.PipelineSpec("expected_sarsa", cfg, checkpoints=[1000])
//! agents = [ir.train(spec, seed)[-1] for seed in range(1, 11)]
//! spotter = ir.train(spec, 0)[-1]
//! states, _ = ir.sample_states(ir.collect_trajectory(cfg, spotter), 30, seed=1)
//! m = ir.ir_matrix(agents, spotter, states, ir.intervention_catalog(cfg))
//! print(m.summary())
//! ```

use std::collections::HashMap;
use std::fmt::Display;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ir_core::divergence::{self, ActionDistribution, ActionId};
use ir_core::envs::{self, InterventionKind};
use ir_core::harness::{self, CellSeeds, MatrixGrid, MatrixMeta};
use ir_core::pipelines::{self, Algorithm, PipelineInstance, ValueInit};
use ir_core::sampling::{self, StateSample};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dist(weights: Vec<f64>) -> PyResult<ActionDistribution> {
    ActionDistribution::new(weights).map_err(value_err)
}

#[pyfunction]
pub fn shannon_entropy_bits(weights: Vec<f64>) -> PyResult<f64> {
    Ok(divergence::shannon_entropy_bits(&dist(weights)?))
}

/// Generalized Jensen-Shannon divergence of equally weighted distributions, in bits.
#[pyfunction]
pub fn js_divergence_bits(dists: Vec<Vec<f64>>) -> PyResult<f64> {
    let dists = dists.into_iter().map(dist).collect::<PyResult<Vec<_>>>()?;
    divergence::js_divergence_bits(&dists).map_err(value_err)
}

#[pyfunction]
pub fn point_mass_jsd_bits(actions: Vec<usize>, action_count: usize) -> PyResult<f64> {
    let actions: Vec<ActionId> = actions.into_iter().map(ActionId).collect();
    divergence::point_mass_jsd_bits(&actions, action_count).map_err(value_err)
}

#[pyclass(name = "GridConfig", from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyGridConfig {
    pub inner: envs::GridConfig,
}

#[pymethods]
impl PyGridConfig {
    /// Named layout: `default`, `symmetric` or `ring`.
    #[new]
    #[pyo3(signature = (preset = "default"))]
    fn new(preset: &str) -> PyResult<Self> {
        envs::GridConfig::preset(preset)
            .map(|inner| PyGridConfig { inner })
            .ok_or_else(|| value_err(format!("unknown preset `{preset}`")))
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        envs::GridConfig::from_toml(text)
            .map(|inner| PyGridConfig { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn open(n: u16) -> PyResult<Self> {
        let inner = envs::GridConfig::open(n);
        inner.validate().map_err(value_err)?;
        Ok(PyGridConfig { inner })
    }

    #[getter]
    fn width(&self) -> u16 {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> u16 {
        self.inner.height
    }

    #[getter]
    fn start(&self) -> (u16, u16) {
        (self.inner.start.row, self.inner.start.col)
    }

    #[getter]
    fn goal(&self) -> (u16, u16) {
        (self.inner.goal.row, self.inner.goal.col)
    }

    #[getter]
    fn walls(&self) -> Vec<(u16, u16)> {
        self.inner.walls.iter().map(|c| (c.row, c.col)).collect()
    }

    #[getter]
    fn hazards(&self) -> Vec<(u16, u16)> {
        self.inner.hazards.iter().map(|c| (c.row, c.col)).collect()
    }

    #[getter]
    fn step_cap(&self) -> u32 {
        self.inner.step_cap
    }

    fn __repr__(&self) -> String {
        format!("GridConfig({}x{})", self.inner.height, self.inner.width)
    }
}

#[pyclass(name = "Intervention", from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyIntervention {
    pub inner: envs::Intervention,
}

#[pymethods]
impl PyIntervention {
    #[getter]
    fn id(&self) -> usize {
        self.inner.id
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            InterventionKind::Null => "null",
            InterventionKind::RemoveWall { .. } => "remove_wall",
            InterventionKind::AddWall { .. } => "add_wall",
            InterventionKind::RemoveHazard { .. } => "remove_hazard",
            InterventionKind::MoveHazard { .. } => "move_hazard",
            InterventionKind::MoveAgent { .. } => "move_agent",
            InterventionKind::MoveGoal { .. } => "move_goal",
            InterventionKind::SetTag { .. } => "set_tag",
        }
    }

    fn __repr__(&self) -> String {
        format!("Intervention({}, {:?})", self.inner.id, self.inner.label)
    }
}

#[pyclass(name = "GridState", from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyGridState {
    pub inner: envs::GridState,
}

#[pymethods]
impl PyGridState {
    #[staticmethod]
    fn initial(config: &PyGridConfig) -> PyResult<Self> {
        envs::initial_state(&config.inner)
            .map(|inner| PyGridState { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_canonical(text: &str) -> PyResult<Self> {
        envs::GridState::from_canonical(text)
            .map(|inner| PyGridState { inner })
            .map_err(value_err)
    }

    /// Returns `(next_state, reward, terminal, truncated)`.
    fn step(&self, action: usize) -> PyResult<(PyGridState, f64, bool, bool)> {
        let out = envs::step(&self.inner, ActionId(action)).map_err(value_err)?;
        Ok((
            PyGridState { inner: out.next_state },
            out.reward,
            out.terminal,
            out.truncated,
        ))
    }

    fn apply(&self, intervention: &PyIntervention) -> PyResult<PyGridState> {
        envs::apply_intervention(&self.inner, &intervention.inner)
            .map(|inner| PyGridState { inner })
            .map_err(value_err)
    }

    #[getter]
    fn agent(&self) -> (u16, u16) {
        let c = self.inner.agent();
        (c.row, c.col)
    }

    #[getter]
    fn goal(&self) -> (u16, u16) {
        let c = self.inner.goal();
        (c.row, c.col)
    }

    #[getter]
    fn step_count(&self) -> u32 {
        self.inner.step_count()
    }

    #[getter]
    fn tag(&self) -> u8 {
        self.inner.tag()
    }

    #[getter]
    fn terminal(&self) -> bool {
        self.inner.is_terminal()
    }

    fn observation_key(&self) -> String {
        self.inner.observation_key()
    }

    fn canonical(&self) -> String {
        self.inner.canonical_string()
    }

    fn __repr__(&self) -> String {
        format!("GridState(agent={}, step={})", self.inner.agent(), self.inner.step_count())
    }
}

#[pyfunction]
pub fn intervention_catalog(config: &PyGridConfig) -> Vec<PyIntervention> {
    envs::intervention_catalog(&config.inner)
        .into_iter()
        .map(|inner| PyIntervention { inner })
        .collect()
}

#[pyclass(name = "PipelineSpec", from_py_object)]
#[derive(Clone)]
pub struct PyPipelineSpec {
    pub inner: pipelines::PipelineSpec,
}

#[pymethods]
impl PyPipelineSpec {
    /// `init_scale` switches to seed-dependent random value initialization.
    #[new]
    #[pyo3(signature = (
        algorithm, config = None, *, learning_rate = None, discount = None, epsilon = None,
        temperature = None, checkpoints = None, init_scale = None, exploring_starts = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        algorithm: &str,
        config: Option<PyGridConfig>,
        learning_rate: Option<f64>,
        discount: Option<f64>,
        epsilon: Option<f64>,
        temperature: Option<f64>,
        checkpoints: Option<Vec<u64>>,
        init_scale: Option<f64>,
        exploring_starts: Option<bool>,
    ) -> PyResult<Self> {
        let algorithm: Algorithm = algorithm.parse().map_err(value_err)?;
        let env = config.map_or_else(envs::GridConfig::default, |c| c.inner);
        let mut spec = pipelines::PipelineSpec::new(algorithm, env);
        if let Some(v) = learning_rate {
            spec.learning_rate = v;
        }
        if let Some(v) = discount {
            spec.discount = v;
        }
        if let Some(v) = epsilon {
            spec.epsilon = v;
        }
        if let Some(v) = temperature {
            spec.temperature = v;
        }
        if let Some(v) = checkpoints {
            spec.checkpoints = v;
        }
        if let Some(scale) = init_scale {
            spec.init = ValueInit::Random { scale };
        }
        if let Some(v) = exploring_starts {
            spec.exploring_starts = v;
        }
        spec.validate().map_err(value_err)?;
        Ok(PyPipelineSpec { inner: spec })
    }

    #[getter]
    fn algorithm(&self) -> String {
        self.inner.algorithm.to_string()
    }

    #[getter]
    fn checkpoints(&self) -> Vec<u64> {
        self.inner.checkpoints.clone()
    }
}

#[pyclass(name = "Policy", from_py_object)]
#[derive(Clone)]
pub struct PyPolicy {
    pub inner: pipelines::Policy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn from_canonical(text: &str) -> PyResult<Self> {
        pipelines::Policy::from_canonical(text)
            .map(|inner| PyPolicy { inner })
            .map_err(value_err)
    }

    fn to_canonical(&self) -> String {
        self.inner.to_canonical()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.meta().seed
    }

    #[getter]
    fn checkpoint(&self) -> u64 {
        self.inner.meta().checkpoint
    }

    #[getter]
    fn algorithm(&self) -> String {
        self.inner.meta().algorithm.to_string()
    }

    #[getter]
    fn deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn act(&self, state: &PyGridState, seed: u64) -> PyResult<usize> {
        self.inner.act(&state.inner, seed).map(ActionId::index).map_err(value_err)
    }

    fn greedy_action(&self, state: &PyGridState) -> usize {
        self.inner.greedy_action(&state.inner).index()
    }

    fn action_distribution(&self, state: &PyGridState) -> PyResult<Vec<f64>> {
        self.inner
            .action_distribution(&state.inner)
            .map(|d| d.weights().to_vec())
            .map_err(value_err)
    }

    #[pyo3(signature = (config, episodes = 10, seed = 0))]
    fn evaluate_return(&self, config: &PyGridConfig, episodes: usize, seed: u64) -> PyResult<f64> {
        pipelines::evaluate_return(&self.inner, &config.inner, episodes, seed).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        let m = self.inner.meta();
        format!("Policy({}, seed={}, checkpoint={})", m.algorithm, m.seed, m.checkpoint)
    }
}

/// One policy per checkpoint of the instance `(spec, seed)`.
#[pyfunction]
pub fn train(py: Python<'_>, spec: &PyPipelineSpec, seed: u64) -> PyResult<Vec<PyPolicy>> {
    let spec = spec.inner.clone();
    py.detach(move || pipelines::train(&PipelineInstance { spec: &spec, seed }))
        .map(|ps| ps.into_iter().map(|inner| PyPolicy { inner }).collect())
        .map_err(value_err)
}

#[pyfunction]
pub fn initial_policy(spec: &PyPipelineSpec, seed: u64) -> PyResult<PyPolicy> {
    pipelines::initial_policy(&PipelineInstance { spec: &spec.inner, seed })
        .map(|inner| PyPolicy { inner })
        .map_err(value_err)
}

/// Returns `(value, samples_used)`.
#[pyfunction]
#[pyo3(signature = (state, agents, trials = 30, seed = 0))]
pub fn ir_value(state: &PyGridState, agents: Vec<PyPolicy>, trials: usize, seed: u64) -> PyResult<(f64, usize)> {
    let agents: Vec<pipelines::Policy> = agents.into_iter().map(|a| a.inner).collect();
    divergence::ir_value(&state.inner, &agents, trials, seed)
        .map(|v| (v.value, v.samples_used))
        .map_err(value_err)
}

#[pyfunction]
pub fn collect_trajectory(config: &PyGridConfig, spotter: &PyPolicy) -> PyResult<Vec<PyGridState>> {
    sampling::collect_trajectory(&config.inner, &spotter.inner, 0)
        .map(|t| t.into_iter().map(|inner| PyGridState { inner }).collect())
        .map_err(value_err)
}

/// Returns `(states, indices)`, drawn with replacement.
#[pyfunction]
#[pyo3(signature = (trajectory, k, seed = 0))]
pub fn sample_states(trajectory: Vec<PyGridState>, k: usize, seed: u64) -> PyResult<(Vec<PyGridState>, Vec<usize>)> {
    let trajectory: Vec<envs::GridState> = trajectory.into_iter().map(|s| s.inner).collect();
    let sample = sampling::sample_states(&trajectory, k, seed, 0).map_err(value_err)?;
    Ok((
        sample.states.into_iter().map(|inner| PyGridState { inner }).collect(),
        sample.indices,
    ))
}

#[pyclass(name = "IrMatrix", from_py_object)]
#[derive(Clone)]
pub struct PyIrMatrix {
    pub inner: harness::IrMatrix,
}

fn fixture_meta() -> MatrixMeta {
    MatrixMeta {
        pipeline: String::new(),
        algorithm: String::new(),
        checkpoint: 0,
        agents: 0,
        trials: 0,
        spotter_seed: 0,
        sampling_seed: 0,
    }
}

#[pymethods]
impl PyIrMatrix {
    /// Rows are interventions (row 0 is the null intervention); `None` marks
    /// an intervention that does not apply to that state.
    #[new]
    fn new(rows: Vec<Vec<Option<f64>>>) -> PyResult<Self> {
        let grid = MatrixGrid {
            intervention_ids: (0..rows.len()).collect(),
            rows,
        };
        harness::IrMatrix::from_grid(grid, fixture_meta())
            .map(|inner| PyIrMatrix { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let grid = MatrixGrid::from_csv(text).map_err(value_err)?;
        harness::IrMatrix::from_grid(grid, fixture_meta())
            .map(|inner| PyIrMatrix { inner })
            .map_err(value_err)
    }

    fn to_csv(&self) -> String {
        self.inner.grid.to_csv()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<Option<f64>>> {
        self.inner.grid.rows.clone()
    }

    #[getter]
    fn intervention_ids(&self) -> Vec<usize> {
        self.inner.grid.intervention_ids.clone()
    }

    #[getter]
    fn missing(&self) -> usize {
        self.inner.grid.missing_count()
    }

    /// Each cell minus its column's null-intervention value.
    fn normalized(&self) -> PyResult<Vec<Vec<Option<f64>>>> {
        harness::normalize_matrix(&self.inner)
            .map(|r| r.grid.rows)
            .map_err(value_err)
    }

    /// `original`, `intervened`, `normalized` and `missing`.
    fn summary(&self) -> HashMap<&'static str, f64> {
        let s = harness::summarize(&self.inner);
        HashMap::from([
            ("original", s.original),
            ("intervened", s.intervened),
            ("normalized", s.normalized),
            ("missing", s.missing as f64),
        ])
    }
}

/// IR matrix of `agents` over `states` and `catalog`. `trials` defaults to 1
/// for greedy agent sets and 30 otherwise.
#[pyfunction]
#[pyo3(signature = (agents, spotter, states, catalog, trials = None, run_seed = 0, pipeline = 0, checkpoint = 0))]
#[allow(clippy::too_many_arguments)]
pub fn ir_matrix(
    py: Python<'_>,
    agents: Vec<PyPolicy>,
    spotter: &PyPolicy,
    states: Vec<PyGridState>,
    catalog: Vec<PyIntervention>,
    trials: Option<usize>,
    run_seed: u64,
    pipeline: u64,
    checkpoint: u64,
) -> PyResult<PyIrMatrix> {
    let agents: Vec<pipelines::Policy> = agents.into_iter().map(|a| a.inner).collect();
    let catalog: Vec<envs::Intervention> = catalog.into_iter().map(|i| i.inner).collect();
    let sample = StateSample {
        indices: (0..states.len()).collect(),
        trajectory_length: states.len(),
        states: states.into_iter().map(|s| s.inner).collect(),
        spotter_seed: spotter.inner.meta().seed,
        sampling_seed: 0,
    };
    let trials = trials.unwrap_or_else(|| harness::default_trials(&agents, harness::DEFAULT_STOCHASTIC_TRIALS));
    let meta = MatrixMeta {
        agents: agents.len(),
        trials,
        checkpoint,
        spotter_seed: sample.spotter_seed,
        ..fixture_meta()
    };
    let seeds = CellSeeds {
        run_seed,
        pipeline,
        checkpoint,
    };
    py.detach(|| harness::ir_matrix(&agents, &sample, &catalog, trials, seeds, meta))
        .map(|inner| PyIrMatrix { inner })
        .map_err(value_err)
}

/// Runs a TOML run config and writes its artifacts to `output_dir`. Returns
/// the manifest path, its SHA-256 and one summary dict per matrix.
#[pyfunction]
pub fn run_experiment(
    py: Python<'_>,
    config_toml: &str,
    output_dir: PathBuf,
) -> PyResult<(String, String, Vec<HashMap<String, String>>)> {
    let config = harness::RunConfig::from_toml(config_toml).map_err(value_err)?;
    let report = py
        .detach(|| harness::run_experiment(&config, &output_dir))
        .map_err(value_err)?;
    let rows = report
        .summaries
        .iter()
        .map(|s| {
            HashMap::from([
                ("algorithm".to_string(), s.algorithm.clone()),
                ("checkpoint".to_string(), s.checkpoint.to_string()),
                ("original".to_string(), s.original.to_string()),
                ("intervened".to_string(), s.intervened.to_string()),
                ("normalized".to_string(), s.normalized.to_string()),
            ])
        })
        .collect();
    Ok((report.manifest_path.display().to_string(), report.manifest_sha256, rows))
}

#[pyfunction]
pub fn default_config_toml() -> String {
    harness::RunConfig::default().to_toml()
}

#[pymodule]
fn irobust(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridConfig>()?;
    m.add_class::<PyGridState>()?;
    m.add_class::<PyIntervention>()?;
    m.add_class::<PyPipelineSpec>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyIrMatrix>()?;
    m.add_function(wrap_pyfunction!(shannon_entropy_bits, m)?)?;
    m.add_function(wrap_pyfunction!(js_divergence_bits, m)?)?;
    m.add_function(wrap_pyfunction!(point_mass_jsd_bits, m)?)?;
    m.add_function(wrap_pyfunction!(ir_value, m)?)?;
    m.add_function(wrap_pyfunction!(intervention_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(initial_policy, m)?)?;
    m.add_function(wrap_pyfunction!(collect_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(sample_states, m)?)?;
    m.add_function(wrap_pyfunction!(ir_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_config_toml, m)?)?;
    Ok(())
}
