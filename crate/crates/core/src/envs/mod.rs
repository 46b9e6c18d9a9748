//! Intervenable environments.
//!
//! The built-in environment is GridPatrol, a deterministic gridworld with five
//! actions. Interventions are state transforms: walls, hazards and the goal
//! live inside [`GridState`], so an intervened feature persists for the rest
//! of the episode.

mod grid;
mod intervention;

pub use grid::{
    initial_state, step, Action, Cell, GridConfig, GridState, StepOutcome, ACTION_COUNT,
    DEFAULT_STEP_CAP, GOAL_REWARD, HAZARD_REWARD, STEP_REWARD,
};
pub use intervention::{apply_intervention, intervention_catalog, Intervention, InterventionKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("episode finished; reset before stepping")]
    EpisodeFinished,
    #[error("action {0} out of range")]
    InvalidAction(usize),
    #[error("intervention {id} ({label}) is inapplicable: {reason}")]
    InapplicableIntervention { id: usize, label: String, reason: String },
    #[error("malformed state serialization at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
