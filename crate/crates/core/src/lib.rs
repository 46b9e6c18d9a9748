//! Interventional robustness of reinforcement-learning training pipelines.
//!
//! Populations of agents are trained from seed-varied instances of one
//! pipeline, evaluated on states sampled from a spotter agent's trajectory
//! under a catalog of interventions, and compared through a normalized
//! Jensen–Shannon measure of action agreement.
//!
//! * [`divergence`]: entropy, JSD and the per-state robustness value
//! * [`envs`]: the GridPatrol environment and its interventions
//! * [`pipelines`]: tabular learners, policies and agent sets
//! * [`sampling`]: evaluation-state sampling
//! * [`harness`]: IR matrices, summaries and the experiment runner
//! * [`render`] / [`cli`]: images and the `ir` command

pub mod cli;
pub mod divergence;
pub mod envs;
pub mod harness;
pub mod pipelines;
pub mod render;
pub mod sampling;
pub mod seed;

pub use divergence::{
    ir_value, js_divergence_bits, point_mass_jsd_bits, shannon_entropy_bits, ActionDistribution, ActionId, Agent,
    DivergenceError, IrValue,
};
pub use envs::{apply_intervention, initial_state, intervention_catalog, step, GridConfig, GridState, Intervention};
pub use harness::{ir_matrix, normalize_matrix, run_experiment, summarize, IrMatrix, RelativeIrMatrix, RunConfig, SummaryRow};
pub use pipelines::{build_agent_set, train, AgentSet, Algorithm, PipelineInstance, PipelineSpec, Policy};
pub use sampling::{collect_trajectory, sample_states, StateSample};
