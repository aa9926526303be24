//! Candidate groups, medium selection, selective replacement, advantages.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{substream, MediumMode, RolloutConfig, RolloutError, Stream};
use crate::boundary::{parse_with, truncate_at_end_marker, ParseMode};
use crate::metrics::MetricError;
use crate::perturb::{best_intermediate, Candidate, Intermediate, PerturbError, Perturbation};
use crate::segmentation::{Document, LabelSet, Segmentation};

/// A document of the current batch with its gold segmentation.
#[derive(Debug, Clone, Copy)]
pub struct BatchDoc<'a> {
    pub doc: &'a Document,
    pub gold: &'a Segmentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupDiagnostic {
    /// Index of the raw output in generation order.
    pub rollout: usize,
    pub message: String,
}

/// Candidates for one document, sorted by non-increasing reward.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateGroup {
    pub doc_id: String,
    pub candidates: Vec<Candidate>,
    /// Generation index of each candidate.
    pub origins: Vec<usize>,
    pub diagnostics: Vec<GroupDiagnostic>,
}

impl CandidateGroup {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.candidates.iter().map(Candidate::reward).collect()
    }

    pub fn best_reward(&self) -> f64 {
        self.candidates.first().map_or(0.0, Candidate::reward)
    }

    /// Stable sort by descending reward.
    fn sort(&mut self) {
        let mut pairs: Vec<(Candidate, usize)> = self
            .candidates
            .drain(..)
            .zip(self.origins.drain(..))
            .collect();
        pairs.sort_by(|a, b| b.0.reward().total_cmp(&a.0.reward()));
        (self.candidates, self.origins) = pairs.into_iter().unzip();
    }
}

/// Parses, reconstructs and scores raw outputs into a sorted group.
/// Unparseable outputs become reward-0 placeholders.
pub fn build_group(
    doc: &Document,
    gold: &Segmentation,
    raw_outputs: &[String],
    labels: &LabelSet,
    config: &RolloutConfig,
) -> Result<CandidateGroup, MetricError> {
    let mut candidates = Vec::with_capacity(raw_outputs.len());
    let mut diagnostics = Vec::new();
    for (rollout, raw) in raw_outputs.iter().enumerate() {
        let text = truncate_at_end_marker(raw, &config.end_marker);
        match parse_with(text, labels, config.pattern, ParseMode::Lenient) {
            Ok(parsed) => {
                diagnostics.extend(parsed.diagnostics.into_iter().map(|d| GroupDiagnostic {
                    rollout,
                    message: format!("line {}: {}", d.line, d.error),
                }));
                candidates.push(Candidate::score(doc, gold, parsed.output)?);
            }
            Err(e) => {
                diagnostics.push(GroupDiagnostic {
                    rollout,
                    message: e.to_string(),
                });
                candidates.push(Candidate::placeholder());
            }
        }
    }
    let mut group = CandidateGroup {
        doc_id: doc.id().to_string(),
        origins: (0..candidates.len()).collect(),
        candidates,
        diagnostics,
    };
    group.sort();
    Ok(group)
}

/// Index of the candidate considered for replacement. `Medium` picks the
/// 1-based position `ceil(len / 2)` of the sorted group.
pub fn select_medium<R: Rng + ?Sized>(group: &CandidateGroup, mode: MediumMode, rng: &mut R) -> usize {
    let n = group.len().max(1);
    match mode {
        MediumMode::Medium => n.div_ceil(2) - 1,
        MediumMode::Random => rng.random_range(0..n),
    }
}

/// One medium candidate swapped for its intermediate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replacement {
    /// Position of the group in the batch.
    pub group: usize,
    pub doc_id: String,
    /// Position of the replaced candidate before re-sorting.
    pub medium_index: usize,
    pub before: f64,
    pub after: f64,
    pub gain: f64,
    pub perturbations: Vec<Perturbation>,
}

/// Replaces the medium candidate of at most `k` groups (those with the
/// largest positive gains) by its best intermediate, then re-sorts them.
pub fn apply_selective_replacement(
    docs: &[BatchDoc<'_>],
    groups: &mut [CandidateGroup],
    labels: &LabelSet,
    config: &RolloutConfig,
    step: usize,
) -> Result<Vec<Replacement>, RolloutError> {
    if !config.enable_intermediate || config.k == 0 {
        return Ok(Vec::new());
    }
    let mediums: Vec<usize> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| select_medium(g, config.medium_mode, &mut substream(config.seed, step, i, Stream::Medium)))
        .collect();

    let intermediate = |i: usize| -> Result<Option<Intermediate>, RolloutError> {
        let Some(cand) = groups[i].candidates.get(mediums[i]) else {
            return Ok(None);
        };
        match best_intermediate(docs[i].doc, cand, docs[i].gold, labels, config.perturb_steps) {
            Ok(inter) => Ok(Some(inter)),
            Err(PerturbError::NoPerturbations) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    let results: Vec<Option<Intermediate>> = if config.parallel {
        (0..groups.len()).into_par_iter().map(intermediate).collect::<Result<_, _>>()?
    } else {
        (0..groups.len()).map(intermediate).collect::<Result<_, _>>()?
    };

    let mut eligible: Vec<(usize, Intermediate)> = results
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.filter(|inter| inter.gain > 0.0).map(|inter| (i, inter)))
        .collect();
    eligible.sort_by(|(i, a), (j, b)| {
        b.gain
            .total_cmp(&a.gain)
            .then_with(|| groups[*i].doc_id.cmp(&groups[*j].doc_id))
            .then(i.cmp(j))
    });
    eligible.truncate(config.k);
    eligible.sort_by_key(|(i, _)| *i);

    let mut log = Vec::with_capacity(eligible.len());
    for (i, inter) in eligible {
        let mi = mediums[i];
        let group = &mut groups[i];
        let before = group.candidates[mi].reward();
        group.candidates[mi] = inter.candidate;
        let after = group.candidates[mi].reward();
        group.sort();
        log.push(Replacement {
            group: i,
            doc_id: group.doc_id.clone(),
            medium_index: mi,
            before,
            after,
            gain: inter.gain,
            perturbations: inter.steps,
        });
    }
    Ok(log)
}

/// `reward - mean(rewards)`, without scaling by the standard deviation.
pub fn compute_advantages(group: &CandidateGroup) -> Vec<f64> {
    let rewards = group.rewards();
    if rewards.is_empty() {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards.into_iter().map(|r| r - mean).collect()
}

/// Groups, advantages and replacement log of one batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingBatch {
    pub groups: Vec<CandidateGroup>,
    pub advantages: Vec<Vec<f64>>,
    pub replacements: Vec<Replacement>,
    /// Best generated candidate per group, before replacement.
    pub generated_best: Vec<Candidate>,
}

/// Builds all groups of a batch, applies selective replacement and computes
/// advantages. `raw_outputs[i]` are the generations for `docs[i]`.
pub fn run_batch(
    docs: &[BatchDoc<'_>],
    raw_outputs: &[Vec<String>],
    labels: &LabelSet,
    config: &RolloutConfig,
    step: usize,
) -> Result<TrainingBatch, RolloutError> {
    let build = |i: usize| build_group(docs[i].doc, docs[i].gold, &raw_outputs[i], labels, config);
    let mut groups: Vec<CandidateGroup> = if config.parallel {
        (0..docs.len()).into_par_iter().map(build).collect::<Result<_, _>>()?
    } else {
        (0..docs.len()).map(build).collect::<Result<_, _>>()?
    };
    let generated_best = groups
        .iter()
        .map(|g| g.candidates.first().cloned().unwrap_or_else(Candidate::placeholder))
        .collect();
    let replacements = apply_selective_replacement(docs, &mut groups, labels, config, step)?;
    let advantages = groups.iter().map(compute_advantages).collect();
    Ok(TrainingBatch {
        groups,
        advantages,
        replacements,
        generated_best,
    })
}
