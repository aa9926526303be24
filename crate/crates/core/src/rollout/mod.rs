//! Rollout bookkeeping around a pluggable policy.
//!
//! A policy generates `m` raw outputs per document; these are parsed,
//! reconstructed and scored into a [`CandidateGroup`] sorted by reward. The
//! medium candidate of each group may be swapped for its best perturbation
//! (selective replacement, at most `k` per batch), and advantages are the
//! rewards minus the group mean.

mod group;
mod policy;
mod simulate;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::OutputPattern;
use crate::metrics::MetricError;
use crate::perturb::PerturbError;

pub use group::{
    apply_selective_replacement, build_group, compute_advantages, run_batch, select_medium,
    BatchDoc, CandidateGroup, GroupDiagnostic, Replacement, TrainingBatch,
};
pub use policy::{
    Feedback, GenerationRequest, NoisyOraclePolicy, Policy, ReplayPolicy, StaticPolicy,
};
pub use simulate::{simulate, DocReward, SimulationReport, StepRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("invalid rollout config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("document `{id}`: {reason}")]
    InvalidGold { id: String, reason: String },
    #[error("policy returned {got} outputs, expected {expected}")]
    PolicyContract { expected: usize, got: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

/// Which group member is considered for replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediumMode {
    #[default]
    Medium,
    /// Uniform over the group, drawn from the seed stream.
    Random,
}

impl std::str::FromStr for MediumMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "medium" => Ok(MediumMode::Medium),
            "random" => Ok(MediumMode::Random),
            other => Err(format!("unknown medium mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Group size.
    pub m: usize,
    pub temperature: f64,
    /// Maximum replacements per batch.
    pub k: usize,
    /// Documents per batch.
    pub batch_size: usize,
    pub enable_intermediate: bool,
    /// 1 or 2.
    pub perturb_steps: usize,
    pub medium_mode: MediumMode,
    /// Raw outputs are cut at the first occurrence of this text.
    pub end_marker: String,
    pub pattern: OutputPattern,
    pub seed: u64,
    /// Build groups and perturbation pools on the rayon pool.
    pub parallel: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            m: 4,
            temperature: 1.2,
            k: 2,
            batch_size: 6,
            enable_intermediate: true,
            perturb_steps: 1,
            medium_mode: MediumMode::Medium,
            end_marker: "<|end|>".to_string(),
            pattern: OutputPattern::Start,
            seed: 0,
            parallel: false,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.m < 2 {
            return Err(RolloutError::InvalidConfig(format!("m must be >= 2, got {}", self.m)));
        }
        if self.batch_size < 1 {
            return Err(RolloutError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(1..=2).contains(&self.perturb_steps) {
            return Err(RolloutError::InvalidConfig(format!(
                "perturb_steps must be 1 or 2, got {}",
                self.perturb_steps
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(RolloutError::InvalidConfig("temperature must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// `true` when every positive-gain group is replaced (no top-k filter).
    pub fn without_selection(&self) -> bool {
        self.k >= self.batch_size
    }
}

/// Purposes of the per-document random substreams.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Generate = 0,
    Medium = 1,
}

/// An independent random stream for `(seed, step, doc, purpose)`, so that
/// results do not depend on evaluation order.
pub(crate) fn substream(seed: u64, step: usize, doc: usize, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((step as u64) << 34) ^ ((doc as u64) << 2) ^ purpose as u64;
    rng.set_stream(id);
    rng
}
