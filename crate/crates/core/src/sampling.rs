//! Evaluation-state sampling from a spotter agent's trajectory.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{initial_state, step, EnvError, GridConfig, GridState};
use crate::pipelines::Policy;
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("cannot sample from an empty trajectory")]
    EmptyTrajectory,
    #[error("K must be at least 1")]
    ZeroSamples,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("malformed state sample: {0}")]
    Parse(String),
}

/// K states drawn with replacement from one spotter trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub states: Vec<GridState>,
    /// Trajectory positions of `states`, in draw order.
    pub indices: Vec<usize>,
    pub trajectory_length: usize,
    pub spotter_seed: u64,
    pub sampling_seed: u64,
}

/// Greedy rollout of `g0` from the layout start until a terminal transition
/// or the step cap. Returns every visited non-terminal state in order.
///
/// The rollout always uses the greedy readout of `g0`, so `_seed` has no
/// effect on the result; it is accepted for interface symmetry.
pub fn collect_trajectory(env: &GridConfig, g0: &Policy, _seed: u64) -> Result<Vec<GridState>, SamplingError> {
    let mut state = initial_state(env)?;
    let mut trajectory = Vec::new();
    loop {
        let out = step(&state, g0.greedy_action(&state))?;
        trajectory.push(state);
        if out.terminal {
            return Ok(trajectory);
        }
        state = out.next_state;
    }
}

/// Draws `k` trajectory positions uniformly with replacement using
/// [`seed::uniform_below`] over a ChaCha8 stream seeded with `seed`.
pub fn sample_indices(trajectory_len: usize, k: usize, seed: u64) -> Result<Vec<usize>, SamplingError> {
    if trajectory_len == 0 {
        return Err(SamplingError::EmptyTrajectory);
    }
    if k == 0 {
        return Err(SamplingError::ZeroSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k)
        .map(|_| seed::uniform_below(&mut rng, trajectory_len as u64) as usize)
        .collect())
}

pub fn sample_states(
    trajectory: &[GridState],
    k: usize,
    seed: u64,
    spotter_seed: u64,
) -> Result<StateSample, SamplingError> {
    let indices = sample_indices(trajectory.len(), k, seed)?;
    Ok(StateSample {
        states: indices.iter().map(|&i| trajectory[i].clone()).collect(),
        indices,
        trajectory_length: trajectory.len(),
        spotter_seed,
        sampling_seed: seed,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleManifest {
    version: u32,
    spotter_seed: u64,
    sampling_seed: u64,
    trajectory_length: usize,
    indices: Vec<usize>,
    states: Vec<String>,
}

impl StateSample {
    /// JSON manifest holding the seeds and canonical state serializations.
    pub fn to_manifest(&self) -> String {
        let m = SampleManifest {
            version: 1,
            spotter_seed: self.spotter_seed,
            sampling_seed: self.sampling_seed,
            trajectory_length: self.trajectory_length,
            indices: self.indices.clone(),
            states: self.states.iter().map(GridState::canonical_string).collect(),
        };
        let mut s = serde_json::to_string_pretty(&m).expect("sample manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_manifest(text: &str) -> Result<Self, SamplingError> {
        let m: SampleManifest = serde_json::from_str(text).map_err(|e| SamplingError::Parse(e.to_string()))?;
        if m.version != 1 {
            return Err(SamplingError::Parse(format!("unsupported version {}", m.version)));
        }
        if m.indices.len() != m.states.len() {
            return Err(SamplingError::Parse("indices and states differ in length".into()));
        }
        let states = m
            .states
            .iter()
            .map(|s| GridState::from_canonical(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StateSample {
            states,
            indices: m.indices,
            trajectory_length: m.trajectory_length,
            spotter_seed: m.spotter_seed,
            sampling_seed: m.sampling_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipelines::{initial_policy, Algorithm, PipelineInstance, PipelineSpec};

    fn no_op_policy() -> Policy {
        let spec = PipelineSpec::new(Algorithm::QLearning, GridConfig::default());
        initial_policy(&PipelineInstance { spec: &spec, seed: 1 }).unwrap()
    }

    #[test]
    fn no_op_spotter_runs_to_the_cap() {
        let cfg = GridConfig::default();
        let traj = collect_trajectory(&cfg, &no_op_policy(), 0).unwrap();
        assert_eq!(traj.len(), cfg.step_cap as usize);
        assert!(traj.iter().all(|s| !s.is_terminal()));
        assert_eq!(traj, collect_trajectory(&cfg, &no_op_policy(), 5).unwrap());
    }

    #[test]
    fn single_state_trajectory() {
        let s = initial_state(&GridConfig::default()).unwrap();
        let sample = sample_states(&[s.clone()], 5, 9, 1).unwrap();
        assert_eq!(sample.states, vec![s; 5]);
    }

    #[test]
    fn errors() {
        assert_eq!(sample_states(&[], 3, 0, 0), Err(SamplingError::EmptyTrajectory));
        let s = initial_state(&GridConfig::default()).unwrap();
        assert_eq!(sample_states(&[s], 0, 0, 0), Err(SamplingError::ZeroSamples));
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = GridConfig::default();
        let traj = collect_trajectory(&cfg, &no_op_policy(), 0).unwrap();
        let sample = sample_states(&traj, 30, 4, 77).unwrap();
        assert_eq!(sample.states.len(), 30);
        let back = StateSample::from_manifest(&sample.to_manifest()).unwrap();
        assert_eq!(back, sample);
    }
}
