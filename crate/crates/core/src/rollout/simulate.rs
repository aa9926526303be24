//! A desk-scale rollout loop: generate, group, replace, compute advantages,
//! feed the best generated candidates back to the policy.

use serde::Serialize;

use super::group::{run_batch, BatchDoc, Replacement};
use super::policy::{Feedback, GenerationRequest, Policy};
use super::{substream, RolloutConfig, RolloutError, Stream};
use crate::segmentation::{validate_segmentation, LabelSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocReward {
    pub id: String,
    pub reward: f64,
}

/// One line of the simulation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Mean reward over all candidates of the batch, after replacement.
    pub mean_reward: f64,
    /// Mean over groups of the within-group population standard deviation.
    pub reward_std: f64,
    pub replacements: usize,
    pub replacement_log: Vec<Replacement>,
    /// Best reward per batch document at this step.
    pub best_rewards: Vec<DocReward>,
    /// Mean over the whole dataset of the best reward seen so far.
    pub best_so_far_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimulationReport {
    pub steps: Vec<StepRecord>,
}

impl SimulationReport {
    pub fn final_best_mean(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.best_so_far_mean)
    }

    pub fn total_replacements(&self) -> usize {
        self.steps.iter().map(|s| s.replacements).sum()
    }

    pub fn reward_std_trajectory(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward_std).collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()).sqrt()
}

/// Runs `iterations` batch steps. Batches walk the dataset cyclically,
/// `min(batch_size, len)` documents at a time. The result depends only on
/// the dataset, the policy state, the config and its seed.
pub fn simulate(
    dataset: &[BatchDoc<'_>],
    policy: &mut dyn Policy,
    labels: &LabelSet,
    config: &RolloutConfig,
    iterations: usize,
) -> Result<SimulationReport, RolloutError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(RolloutError::EmptyDataset);
    }
    for d in dataset {
        let report = validate_segmentation(d.doc, d.gold);
        if !report.ok() || !report.lossless {
            let reason = report
                .violations
                .first()
                .map_or_else(|| "segmentation is not lossless".to_string(), ToString::to_string);
            return Err(RolloutError::InvalidGold {
                id: d.doc.id().to_string(),
                reason,
            });
        }
    }

    let n = dataset.len();
    let per = config.batch_size.min(n);
    let mut best_so_far = vec![0.0f64; n];
    let mut report = SimulationReport::default();

    for step in 0..iterations {
        let indices: Vec<usize> = (0..per).map(|j| (step * per + j) % n).collect();
        let docs: Vec<BatchDoc<'_>> = indices.iter().map(|&i| dataset[i]).collect();

        let mut raws = Vec::with_capacity(per);
        for &i in &indices {
            let req = GenerationRequest {
                doc_index: i,
                doc: dataset[i].doc,
                gold: dataset[i].gold,
                m: config.m,
                temperature: config.temperature,
                step,
            };
            let mut rng = substream(config.seed, step, i, Stream::Generate);
            let outputs = policy.generate(&req, &mut rng);
            if outputs.len() != config.m {
                return Err(RolloutError::PolicyContract {
                    expected: config.m,
                    got: outputs.len(),
                });
            }
            raws.push(outputs);
        }

        let batch = run_batch(&docs, &raws, labels, config, step)?;

        let feedback: Vec<Feedback<'_>> = indices
            .iter()
            .zip(&batch.generated_best)
            .map(|(&i, best)| Feedback {
                doc_index: i,
                doc: dataset[i].doc,
                best,
            })
            .collect();
        policy.update(&feedback);

        let all: Vec<f64> = batch.groups.iter().flat_map(|g| g.rewards()).collect();
        let stds: Vec<f64> = batch.groups.iter().map(|g| population_std(&g.rewards())).collect();
        let mut best_rewards = Vec::with_capacity(per);
        for (&i, g) in indices.iter().zip(&batch.groups) {
            let r = g.best_reward();
            best_so_far[i] = best_so_far[i].max(r);
            best_rewards.push(DocReward {
                id: g.doc_id.clone(),
                reward: r,
            });
        }
        report.steps.push(StepRecord {
            step,
            mean_reward: mean(&all),
            reward_std: mean(&stds),
            replacements: batch.replacements.len(),
            replacement_log: batch.replacements,
            best_rewards,
            best_so_far_mean: mean(&best_so_far),
        });
    }
    Ok(report)
}
