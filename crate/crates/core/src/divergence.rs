//! Entropy, N-way Jensen–Shannon divergence and the per-state robustness value.
//!
//! All logarithms are base 2. The robustness value of a state is computed by
//! sampling one action from each agent, taking the Jensen–Shannon divergence of
//! the resulting point masses, dividing by `log2(N)` and reporting `1 - d`,
//! averaged over a number of trials.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Absolute tolerance on the sum of an action distribution's weights.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("at least two agents are required, got {0}")]
    TooFewAgents(usize),
    #[error("action count mismatch: expected {expected}, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("action {action} out of range for {action_count} actions")]
    ActionOutOfRange { action: usize, action_count: usize },
    #[error("trial count {trials} is not allowed: {reason}")]
    InvalidTrials { trials: usize, reason: &'static str },
    #[error("policy rejected state: {0}")]
    IncompatibleState(String),
}

/// Index into an environment's discrete action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Probability weights over a finite discrete action set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    weights: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, DivergenceError> {
        if weights.len() < 2 {
            return Err(DivergenceError::InvalidDistribution(format!(
                "need at least 2 actions, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(DivergenceError::InvalidDistribution(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DivergenceError::InvalidDistribution(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn point_mass(action: ActionId, action_count: usize) -> Result<Self, DivergenceError> {
        if action.0 >= action_count {
            return Err(DivergenceError::ActionOutOfRange {
                action: action.0,
                action_count,
            });
        }
        let mut weights = vec![0.0; action_count];
        weights[action.0] = 1.0;
        Self::new(weights)
    }

    pub fn uniform(action_count: usize) -> Result<Self, DivergenceError> {
        Self::new(vec![1.0 / action_count as f64; action_count])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn action_count(&self) -> usize {
        self.weights.len()
    }

    /// Draws an action by inverse-CDF lookup of one uniform `u ∈ [0,1)` built
    /// from the top 53 bits of `rng.next_u64()`.
    pub fn sample(&self, rng: &mut dyn RngCore) -> ActionId {
        let u = unit_f64(rng.next_u64());
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                last_positive = i;
                acc += w;
                if u < acc {
                    return ActionId(i);
                }
            }
        }
        // u fell in the rounding gap above the accumulated mass
        ActionId(last_positive)
    }
}

pub(crate) fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn entropy_of(weights: &[f64]) -> f64 {
    let h: f64 = weights
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// Shannon entropy in bits, with `0·log2(0) = 0`.
pub fn shannon_entropy_bits(dist: &ActionDistribution) -> f64 {
    entropy_of(&dist.weights)
}

/// Generalized Jensen–Shannon divergence with equal weights:
/// `H(mean of dists) - mean of H(dist_i)`, in bits.
pub fn js_divergence_bits(dists: &[ActionDistribution]) -> Result<f64, DivergenceError> {
    let n = dists.len();
    if n < 2 {
        return Err(DivergenceError::TooFewAgents(n));
    }
    let action_count = dists[0].action_count();
    if let Some(d) = dists.iter().find(|d| d.action_count() != action_count) {
        return Err(DivergenceError::Shape {
            expected: action_count,
            found: d.action_count(),
        });
    }
    // exact zero for identical inputs; the general formula leaves rounding residue
    if dists.iter().all(|d| d.weights == dists[0].weights) {
        return Ok(0.0);
    }
    let mut mixture = vec![0.0; action_count];
    for d in dists {
        for (m, w) in mixture.iter_mut().zip(&d.weights) {
            *m += w;
        }
    }
    mixture.iter_mut().for_each(|m| *m /= n as f64);
    let mean_entropy = dists.iter().map(shannon_entropy_bits).sum::<f64>() / n as f64;
    let jsd = entropy_of(&mixture) - mean_entropy;
    Ok(jsd.clamp(0.0, (n as f64).log2()))
}

/// Jensen–Shannon divergence of the point masses at `actions`, which reduces to
/// the entropy of the empirical action histogram.
pub fn point_mass_jsd_bits(actions: &[ActionId], action_count: usize) -> Result<f64, DivergenceError> {
    let n = actions.len();
    if n < 2 {
        return Err(DivergenceError::TooFewAgents(n));
    }
    let mut counts = vec![0usize; action_count];
    for a in actions {
        *counts.get_mut(a.0).ok_or(DivergenceError::ActionOutOfRange {
            action: a.0,
            action_count,
        })? += 1;
    }
    let h: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

/// An agent whose action choice in a state can be sampled.
pub trait Agent<S: ?Sized> {
    fn action_count(&self) -> usize;

    /// True when the agent always picks the same action in a given state.
    fn is_deterministic(&self) -> bool;

    fn sample_action(&self, state: &S, rng: &mut dyn RngCore) -> Result<ActionId, DivergenceError>;
}

/// Robustness of a set of agents in one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrValue {
    pub value: f64,
    pub samples_used: usize,
}

/// Robustness value of `agents` in `state`.
///
/// Each trial samples one action per agent, computes
/// `d = point_mass_jsd_bits / log2(N)` and records `1 - d`; the mean over
/// trials is returned. When every agent is deterministic a single trial is
/// run regardless of `trials`. Sampling uses a ChaCha8 stream seeded with
/// `seed` and shared by the agents in index order.
pub fn ir_value<S, A>(state: &S, agents: &[A], trials: usize, seed: u64) -> Result<IrValue, DivergenceError>
where
    S: ?Sized,
    A: Agent<S>,
{
    let n = agents.len();
    if n < 2 {
        return Err(DivergenceError::TooFewAgents(n));
    }
    let action_count = agents[0].action_count();
    if let Some(a) = agents.iter().find(|a| a.action_count() != action_count) {
        return Err(DivergenceError::Shape {
            expected: action_count,
            found: a.action_count(),
        });
    }
    let deterministic = agents.iter().all(|a| a.is_deterministic());
    let trials = match (trials, deterministic) {
        (0, _) => {
            return Err(DivergenceError::InvalidTrials {
                trials,
                reason: "at least one trial is required",
            })
        }
        (_, true) => 1,
        (1, false) => {
            return Err(DivergenceError::InvalidTrials {
                trials,
                reason: "a single trial is only valid for deterministic agents",
            })
        }
        (t, false) => t,
    };

    let norm = (n as f64).log2();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actions = Vec::with_capacity(n);
    let mut total = 0.0;
    for _ in 0..trials {
        actions.clear();
        for agent in agents {
            actions.push(agent.sample_action(state, &mut rng)?);
        }
        let d = point_mass_jsd_bits(&actions, action_count)? / norm;
        total += 1.0 - d;
    }
    let value = (total / trials as f64).clamp(0.0, 1.0);
    Ok(IrValue {
        value,
        samples_used: trials,
    })
}
