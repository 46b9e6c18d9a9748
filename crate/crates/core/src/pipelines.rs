//! Seed-parameterized tabular training pipelines.
//!
//! A [`PipelineSpec`] fixes the algorithm, hyperparameters and layout; a
//! [`PipelineInstance`] adds a master seed. Training an instance is a pure
//! function of `(spec, seed)` and yields one [`Policy`] per checkpoint.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{unit_f64, ActionDistribution, ActionId, Agent, DivergenceError};
use crate::envs::{initial_state, step, EnvError, GridConfig, GridState, ACTION_COUNT};
use crate::seed;

pub type ValueRow = [f64; ACTION_COUNT];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid pipeline spec: {0}")]
    InvalidSpec(String),
    #[error("at least two evaluation agents are required, got {0}")]
    TooFewAgents(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("malformed policy file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
    ExpectedSarsa,
    SoftmaxQ,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::QLearning,
        Algorithm::Sarsa,
        Algorithm::ExpectedSarsa,
        Algorithm::SoftmaxQ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::QLearning => "q_learning",
            Algorithm::Sarsa => "sarsa",
            Algorithm::ExpectedSarsa => "expected_sarsa",
            Algorithm::SoftmaxQ => "softmax_q",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| PipelineError::InvalidSpec(format!("unknown algorithm `{s}`")))
    }
}

/// How value rows are initialized on first use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueInit {
    Zero,
    /// Each row is drawn uniformly from `[-scale, scale]`, derived from the
    /// agent seed and the observation key.
    Random { scale: f64 },
}

impl ValueInit {
    fn row(&self, agent_seed: u64, key: &str) -> ValueRow {
        match *self {
            ValueInit::Zero => [0.0; ACTION_COUNT],
            ValueInit::Random { scale } => {
                let base = seed::mix(&[agent_seed, fnv1a(key.as_bytes())]);
                std::array::from_fn(|a| scale * (2.0 * unit_f64(seed::splitmix64(base ^ a as u64)) - 1.0))
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub temperature: f64,
    pub checkpoints: Vec<u64>,
    pub init: ValueInit,
    /// Start each episode from a seed-chosen free cell instead of the layout start.
    pub exploring_starts: bool,
    pub env: GridConfig,
}

pub const DEFAULT_CHECKPOINTS: [u64; 4] = [100, 1_000, 10_000, 100_000];

impl PipelineSpec {
    pub fn new(algorithm: Algorithm, env: GridConfig) -> Self {
        PipelineSpec {
            algorithm,
            learning_rate: 0.5,
            discount: 0.95,
            epsilon: 0.1,
            temperature: 0.5,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            init: ValueInit::Zero,
            exploring_starts: false,
            env,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidSpec(m));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} not in (0, 1]", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} not in [0, 1]", self.discount));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} not in [0, 1]", self.epsilon));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if self.checkpoints.is_empty() {
            return bad("at least one checkpoint is required".into());
        }
        if self.checkpoints[0] == 0 {
            return bad("checkpoints must be positive".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must be strictly increasing".into());
        }
        if let ValueInit::Random { scale } = self.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                return bad(format!("init scale {scale} must be finite and non-negative"));
            }
        }
        self.env.validate()?;
        Ok(())
    }

    pub fn mode(&self) -> PolicyMode {
        match self.algorithm {
            Algorithm::SoftmaxQ => PolicyMode::Softmax {
                temperature: self.temperature,
            },
            _ => PolicyMode::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInstance<'a> {
    pub spec: &'a PipelineSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyMode {
    Greedy,
    Softmax { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMeta {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Training steps taken before the snapshot; 0 for an untrained policy.
    pub checkpoint: u64,
}

/// Snapshot of a value table with its action-selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    table: BTreeMap<String, ValueRow>,
    mode: PolicyMode,
    init: ValueInit,
    grid: (u16, u16),
    meta: PolicyMeta,
}

fn argmax_lowest(row: &ValueRow) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn softmax(row: &ValueRow, temperature: f64) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Policy {
    /// Builds a policy from explicit rows; absent keys use `init`.
    pub fn from_rows(
        rows: BTreeMap<String, ValueRow>,
        mode: PolicyMode,
        init: ValueInit,
        grid: (u16, u16),
        meta: PolicyMeta,
    ) -> Self {
        Policy {
            table: rows,
            mode,
            init,
            grid,
            meta,
        }
    }

    pub fn meta(&self) -> &PolicyMeta {
        &self.meta
    }

    pub fn mode(&self) -> PolicyMode {
        self.mode
    }

    pub fn table(&self) -> &BTreeMap<String, ValueRow> {
        &self.table
    }

    pub fn is_deterministic(&self) -> bool {
        self.mode == PolicyMode::Greedy
    }

    fn check_state(&self, state: &GridState) -> Result<(), DivergenceError> {
        if (state.height(), state.width()) != self.grid {
            return Err(DivergenceError::IncompatibleState(format!(
                "policy trained on a {}x{} grid, state is {}x{}",
                self.grid.0,
                self.grid.1,
                state.height(),
                state.width()
            )));
        }
        Ok(())
    }

    pub fn row(&self, state: &GridState) -> ValueRow {
        let key = state.observation_key();
        self.table
            .get(&key)
            .copied()
            .unwrap_or_else(|| self.init.row(self.meta.seed, &key))
    }

    /// Exact distribution `act` samples from.
    pub fn action_distribution(&self, state: &GridState) -> Result<ActionDistribution, DivergenceError> {
        self.check_state(state)?;
        let row = self.row(state);
        match self.mode {
            PolicyMode::Greedy => ActionDistribution::point_mass(ActionId(argmax_lowest(&row)), ACTION_COUNT),
            PolicyMode::Softmax { temperature } => {
                let mut p = softmax(&row, temperature);
                // absorb rounding so the sum check cannot fail on long rows
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= s);
                ActionDistribution::new(p)
            }
        }
    }

    pub fn act_with(&self, state: &GridState, rng: &mut dyn RngCore) -> Result<ActionId, DivergenceError> {
        self.check_state(state)?;
        match self.mode {
            PolicyMode::Greedy => Ok(ActionId(argmax_lowest(&self.row(state)))),
            PolicyMode::Softmax { .. } => Ok(self.action_distribution(state)?.sample(rng)),
        }
    }

    /// Greedy: argmax with ties to the lowest index. Softmax: one draw from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn act(&self, state: &GridState, seed: u64) -> Result<ActionId, DivergenceError> {
        self.act_with(state, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn greedy_action(&self, state: &GridState) -> ActionId {
        ActionId(argmax_lowest(&self.row(state)))
    }

    /// Versioned text checkpoint with sorted keys and values at 15 significant digits.
    ///
    /// ```text
    /// ir-policy v1
    /// algorithm <id>
    /// seed <u64>
    /// checkpoint <steps>
    /// mode greedy | mode softmax <temperature>
    /// init zero | init random <scale>
    /// grid <height> <width>
    /// rows <n>
    /// <key> <v0> <v1> <v2> <v3> <v4>
    /// ```
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        out.push_str("ir-policy v1\n");
        out.push_str(&format!("algorithm {}\n", self.meta.algorithm));
        out.push_str(&format!("seed {}\n", self.meta.seed));
        out.push_str(&format!("checkpoint {}\n", self.meta.checkpoint));
        match self.mode {
            PolicyMode::Greedy => out.push_str("mode greedy\n"),
            PolicyMode::Softmax { temperature } => out.push_str(&format!("mode softmax {temperature:?}\n")),
        }
        match self.init {
            ValueInit::Zero => out.push_str("init zero\n"),
            ValueInit::Random { scale } => out.push_str(&format!("init random {scale:?}\n")),
        }
        out.push_str(&format!("grid {} {}\n", self.grid.0, self.grid.1));
        out.push_str(&format!("rows {}\n", self.table.len()));
        for (key, row) in &self.table {
            out.push_str(key);
            for v in row {
                // normalize -0.0 so the text is sign-stable
                let v = if *v == 0.0 { 0.0 } else { *v };
                out.push_str(&format!(" {v:.14e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_canonical(text: &str) -> Result<Self, PipelineError> {
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        let err = |line: usize, reason: &str| PipelineError::Parse {
            line,
            reason: reason.to_string(),
        };
        let field = |i: usize, key: &str| -> Result<Vec<&str>, PipelineError> {
            let line = lines.get(i).ok_or_else(|| err(i + 1, &format!("missing `{key}`")))?;
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(err(i + 1, &format!("expected `{key}`")));
            }
            Ok(parts.collect())
        };
        let one = |i: usize, key: &str| -> Result<String, PipelineError> {
            match field(i, key)?.as_slice() {
                [v] => Ok(v.to_string()),
                _ => Err(err(i + 1, "expected one value")),
            }
        };
        let num = |i: usize, s: &str| -> Result<u64, PipelineError> { s.parse().map_err(|_| err(i + 1, "bad integer")) };
        let real = |i: usize, s: &str| -> Result<f64, PipelineError> { s.parse().map_err(|_| err(i + 1, "bad number")) };

        if lines.first() != Some(&"ir-policy v1") {
            return Err(err(1, "expected `ir-policy v1` header"));
        }
        let algorithm: Algorithm = one(1, "algorithm")?.parse()?;
        let seed = num(2, &one(2, "seed")?)?;
        let checkpoint = num(3, &one(3, "checkpoint")?)?;
        let mode = match field(4, "mode")?.as_slice() {
            ["greedy"] => PolicyMode::Greedy,
            ["softmax", t] => PolicyMode::Softmax { temperature: real(4, t)? },
            _ => return Err(err(5, "bad mode")),
        };
        let init = match field(5, "init")?.as_slice() {
            ["zero"] => ValueInit::Zero,
            ["random", s] => ValueInit::Random { scale: real(5, s)? },
            _ => return Err(err(6, "bad init")),
        };
        let grid = match field(6, "grid")?.as_slice() {
            [h, w] => (
                h.parse().map_err(|_| err(7, "bad grid"))?,
                w.parse().map_err(|_| err(7, "bad grid"))?,
            ),
            _ => return Err(err(7, "bad grid")),
        };
        let n = num(7, &one(7, "rows")?)? as usize;
        if lines.len() != 8 + n {
            return Err(err(lines.len(), &format!("expected {n} rows")));
        }
        let mut table = BTreeMap::new();
        for (i, line) in lines.iter().enumerate().skip(8) {
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 1 + ACTION_COUNT {
                return Err(err(i + 1, "wrong number of values"));
            }
            let mut row = [0.0; ACTION_COUNT];
            for (slot, s) in row.iter_mut().zip(&parts[1..]) {
                *slot = real(i, s)?;
            }
            table.insert(parts[0].to_string(), row);
        }
        Ok(Policy {
            table,
            mode,
            init,
            grid,
            meta: PolicyMeta {
                algorithm,
                seed,
                checkpoint,
            },
        })
    }
}

impl Agent<GridState> for Policy {
    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn is_deterministic(&self) -> bool {
        Policy::is_deterministic(self)
    }

    fn sample_action(&self, state: &GridState, rng: &mut dyn RngCore) -> Result<ActionId, DivergenceError> {
        self.act_with(state, rng)
    }
}

struct Learner<'a> {
    spec: &'a PipelineSpec,
    seed: u64,
    table: HashMap<String, ValueRow>,
    rng: ChaCha8Rng,
}

impl<'a> Learner<'a> {
    fn row(&mut self, key: &str) -> &mut ValueRow {
        if !self.table.contains_key(key) {
            let init = self.spec.init.row(self.seed, key);
            self.table.insert(key.to_string(), init);
        }
        self.table.get_mut(key).expect("row inserted above")
    }

    fn uniform_action(&mut self) -> usize {
        seed::uniform_below(&mut self.rng, ACTION_COUNT as u64) as usize
    }

    /// Greedy with uniformly random tie-breaking.
    fn greedy_random_tie(&mut self, row: &ValueRow) -> usize {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..ACTION_COUNT).filter(|a| row[*a] == max).collect();
        ties[seed::uniform_below(&mut self.rng, ties.len() as u64) as usize]
    }

    fn behave(&mut self, key: &str) -> usize {
        let row = *self.row(key);
        match self.spec.algorithm {
            Algorithm::SoftmaxQ => {
                let p = softmax(&row, self.spec.temperature);
                let u = unit_f64(self.rng.next_u64());
                let mut acc = 0.0;
                for (a, w) in p.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return a;
                    }
                }
                ACTION_COUNT - 1
            }
            _ => {
                if unit_f64(self.rng.next_u64()) < self.spec.epsilon {
                    self.uniform_action()
                } else {
                    self.greedy_random_tie(&row)
                }
            }
        }
    }

    /// Expected value of `row` under the ε-greedy behaviour, with the greedy
    /// mass shared among tied maxima.
    fn epsilon_greedy_expectation(&self, row: &ValueRow) -> f64 {
        let eps = self.spec.epsilon;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = row.iter().filter(|v| **v == max).count() as f64;
        row.iter()
            .map(|v| {
                let greedy = if *v == max { (1.0 - eps) / ties } else { 0.0 };
                (greedy + eps / ACTION_COUNT as f64) * v
            })
            .sum()
    }

    fn start_state(&mut self, base: &GridState) -> GridState {
        if !self.spec.exploring_starts {
            return base.clone();
        }
        let free: Vec<_> = (0..base.height())
            .flat_map(|r| (0..base.width()).map(move |c| crate::envs::Cell::new(r, c)))
            .filter(|c| !base.walls().contains(c) && !base.hazards().contains(c) && *c != base.goal())
            .collect();
        let mut s = base.clone();
        s.agent = free[seed::uniform_below(&mut self.rng, free.len() as u64) as usize];
        s
    }

    fn snapshot(&self, checkpoint: u64) -> Policy {
        Policy {
            table: self.table.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            mode: self.spec.mode(),
            init: self.spec.init,
            grid: (self.spec.env.height, self.spec.env.width),
            meta: PolicyMeta {
                algorithm: self.spec.algorithm,
                seed: self.seed,
                checkpoint,
            },
        }
    }
}

/// Policy before any training step: every row is the initial row.
pub fn initial_policy(instance: &PipelineInstance<'_>) -> Result<Policy, PipelineError> {
    instance.spec.validate()?;
    let learner = Learner {
        spec: instance.spec,
        seed: instance.seed,
        table: HashMap::new(),
        rng: ChaCha8Rng::seed_from_u64(instance.seed),
    };
    Ok(learner.snapshot(0))
}

/// Runs tabular TD training for the largest checkpoint's number of steps and
/// returns a policy snapshot at each checkpoint, in order.
///
/// Exploration, tie-breaking and exploring starts all draw from one ChaCha8
/// stream seeded with the instance seed. Bootstrapping is cut only at goal
/// and hazard terminals; step-cap truncation still bootstraps.
pub fn train(instance: &PipelineInstance<'_>) -> Result<Vec<Policy>, PipelineError> {
    let spec = instance.spec;
    spec.validate()?;
    let base = initial_state(&spec.env)?;
    let mut learner = Learner {
        spec,
        seed: instance.seed,
        table: HashMap::new(),
        rng: ChaCha8Rng::seed_from_u64(instance.seed),
    };
    let (alpha, gamma) = (spec.learning_rate, spec.discount);
    let total = *spec.checkpoints.last().expect("validated non-empty");
    let mut snapshots = Vec::with_capacity(spec.checkpoints.len());
    let mut next_checkpoint = 0;

    let mut state = learner.start_state(&base);
    let mut key = state.observation_key();
    let mut action = learner.behave(&key);
    for t in 1..=total {
        let out = step(&state, ActionId(action))?;
        let next_key = out.next_state.observation_key();
        let absorbed = out.terminal && !out.truncated;
        let next_action = if out.terminal { None } else { Some(learner.behave(&next_key)) };

        let bootstrap = if absorbed {
            0.0
        } else {
            let next_row = *learner.row(&next_key);
            match spec.algorithm {
                Algorithm::QLearning | Algorithm::SoftmaxQ => next_row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Algorithm::Sarsa => match next_action {
                    Some(a) => next_row[a],
                    // truncated: bootstrap on the greedy value
                    None => next_row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                },
                Algorithm::ExpectedSarsa => learner.epsilon_greedy_expectation(&next_row),
            }
        };
        let row = learner.row(&key);
        row[action] += alpha * (out.reward + gamma * bootstrap - row[action]);

        if t == spec.checkpoints[next_checkpoint] {
            snapshots.push(learner.snapshot(t));
            next_checkpoint += 1;
        }

        if out.terminal {
            state = learner.start_state(&base);
            key = state.observation_key();
            action = learner.behave(&key);
        } else {
            state = out.next_state;
            key = next_key;
            action = next_action.expect("non-terminal step has a next action");
        }
    }
    Ok(snapshots)
}

/// Mean undiscounted return over `episodes` rollouts from the layout start.
/// Stochastic policies draw episode `e` from a stream seeded with `mix(seed, e)`.
pub fn evaluate_return(policy: &Policy, env: &GridConfig, episodes: usize, seed: u64) -> Result<f64, PipelineError> {
    if episodes == 0 {
        return Err(PipelineError::InvalidSpec("episodes must be positive".into()));
    }
    let start = initial_state(env)?;
    let mut total = 0.0;
    for e in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[seed, e as u64]));
        let mut state = start.clone();
        loop {
            let a = policy
                .act_with(&state, &mut rng)
                .map_err(|e| PipelineError::InvalidSpec(e.to_string()))?;
            let out = step(&state, a)?;
            total += out.reward;
            if out.terminal {
                break;
            }
            state = out.next_state;
        }
    }
    Ok(total / episodes as f64)
}

/// Spotter `G_0` plus evaluation agents `G_1..G_N` at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSet {
    pub checkpoint: u64,
    pub spotter: Policy,
    pub agents: Vec<Policy>,
}

impl AgentSet {
    pub fn new(checkpoint: u64, spotter: Policy, agents: Vec<Policy>) -> Result<Self, PipelineError> {
        if agents.len() < 2 {
            return Err(PipelineError::TooFewAgents(agents.len()));
        }
        if agents.iter().any(|a| a.meta == spotter.meta) {
            return Err(PipelineError::InvalidSpec("the spotter agent appears among the evaluation agents".into()));
        }
        Ok(AgentSet {
            checkpoint,
            spotter,
            agents,
        })
    }
}

/// Trains `n + 1` instances with seeds `agent_seed(master, i)` (index 0 is the
/// spotter) and regroups the snapshots into one [`AgentSet`] per checkpoint.
/// With `include_untrained`, an extra leading set holds the untrained policies.
pub fn build_agent_sets(
    spec: &PipelineSpec,
    master_seed: u64,
    n: usize,
    include_untrained: bool,
) -> Result<Vec<AgentSet>, PipelineError> {
    if n < 2 {
        return Err(PipelineError::TooFewAgents(n));
    }
    spec.validate()?;
    let trained: Vec<Vec<Policy>> = (0..=n as u64)
        .into_par_iter()
        .map(|i| {
            let instance = PipelineInstance {
                spec,
                seed: seed::agent_seed(master_seed, i),
            };
            let mut policies = train(&instance)?;
            if include_untrained {
                policies.insert(0, initial_policy(&instance)?);
            }
            Ok(policies)
        })
        .collect::<Result<_, PipelineError>>()?;

    let checkpoints = trained[0].len();
    (0..checkpoints)
        .map(|c| {
            let mut at: Vec<Policy> = trained.iter().map(|p| p[c].clone()).collect();
            let spotter = at.remove(0);
            AgentSet::new(spotter.meta.checkpoint, spotter, at)
        })
        .collect()
}

/// Same as [`build_agent_sets`] without the untrained set.
pub fn build_agent_set(spec: &PipelineSpec, master_seed: u64, n: usize) -> Result<Vec<AgentSet>, PipelineError> {
    build_agent_sets(spec, master_seed, n, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Cell, GridConfig};

    fn meta() -> PolicyMeta {
        PolicyMeta {
            algorithm: Algorithm::QLearning,
            seed: 1,
            checkpoint: 1,
        }
    }

    fn single_row_policy(row: ValueRow, mode: PolicyMode) -> (Policy, GridState) {
        let state = initial_state(&GridConfig::default()).unwrap();
        let rows = BTreeMap::from([(state.observation_key(), row)]);
        (Policy::from_rows(rows, mode, ValueInit::Zero, (8, 8), meta()), state)
    }

    #[test]
    fn greedy_ties_pick_lowest_index() {
        let (p, s) = single_row_policy([0.0, 3.0, 3.0, 0.0, 0.0], PolicyMode::Greedy);
        assert_eq!(p.act(&s, 0).unwrap(), ActionId(1));
    }

    #[test]
    fn unseen_state_defaults_to_first_action() {
        let (p, mut s) = single_row_policy([0.0, 3.0, 3.0, 0.0, 0.0], PolicyMode::Greedy);
        s.agent = Cell::new(6, 6);
        assert_eq!(p.act(&s, 0).unwrap(), ActionId(0));
    }

    #[test]
    fn distributions_match_closed_form() {
        let (p, s) = single_row_policy([1.0, 0.0, 0.0, 0.0, 0.0], PolicyMode::Greedy);
        assert_eq!(p.action_distribution(&s).unwrap().weights(), &[1.0, 0.0, 0.0, 0.0, 0.0]);

        let (p, s) = single_row_policy([0.0; 5], PolicyMode::Softmax { temperature: 1.0 });
        for w in p.action_distribution(&s).unwrap().weights() {
            assert!((w - 0.2).abs() < 1e-15);
        }

        let (p, s) = single_row_policy([1.0, 0.0, 0.0, 0.0, 0.0], PolicyMode::Softmax { temperature: 1.0 });
        let d = p.action_distribution(&s).unwrap();
        let e = std::f64::consts::E;
        assert!((d.weights()[0] - e / (e + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn low_temperature_softmax_is_nearly_greedy() {
        let (p, s) = single_row_policy([0.0, 5.0, 0.0, 0.0, 0.0], PolicyMode::Softmax { temperature: 0.01 });
        let hits = (0..10_000u64).filter(|i| p.act(&s, *i).unwrap() == ActionId(1)).count();
        assert!(hits as f64 / 10_000.0 >= 0.99);
    }

    #[test]
    fn incompatible_grid_rejected() {
        let (p, _) = single_row_policy([0.0; 5], PolicyMode::Greedy);
        let other = initial_state(&GridConfig::symmetric()).unwrap();
        assert!(matches!(p.act(&other, 0), Err(DivergenceError::IncompatibleState(_))));
    }

    #[test]
    fn pipeline_spec_validation() {
        let mut spec = PipelineSpec::new(Algorithm::QLearning, GridConfig::default());
        spec.checkpoints = vec![0, 10];
        assert!(matches!(train(&PipelineInstance { spec: &spec, seed: 1 }), Err(PipelineError::InvalidSpec(_))));
        spec.checkpoints = vec![10, 10];
        assert!(spec.validate().is_err());
        spec.checkpoints = vec![10];
        spec.learning_rate = 0.0;
        assert!(spec.validate().is_err());
        spec.learning_rate = 1.0;
        spec.temperature = 0.0;
        assert!(spec.validate().is_err());
        spec.temperature = 1.0;
        spec.discount = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn policy_file_round_trip() {
        let mut spec = PipelineSpec::new(Algorithm::SoftmaxQ, GridConfig::default());
        spec.checkpoints = vec![500];
        spec.init = ValueInit::Random { scale: 0.01 };
        let p = &train(&PipelineInstance { spec: &spec, seed: 3 }).unwrap()[0];
        let text = p.to_canonical();
        let back = Policy::from_canonical(&text).unwrap();
        assert_eq!(back.to_canonical(), text);
        assert_eq!(back.meta(), p.meta());
        assert!(Policy::from_canonical("ir-policy v2\n").is_err());
    }

    #[test]
    fn random_init_differs_by_seed_but_not_by_call() {
        let init = ValueInit::Random { scale: 1.0 };
        assert_eq!(init.row(1, "0,0:...."), init.row(1, "0,0:...."));
        assert_ne!(init.row(1, "0,0:...."), init.row(2, "0,0:...."));
        assert!(init.row(5, "k").iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn agent_set_requires_two_agents() {
        let spec = PipelineSpec::new(Algorithm::QLearning, GridConfig::default());
        assert_eq!(build_agent_set(&spec, 1, 1), Err(PipelineError::TooFewAgents(1)));
    }
}
