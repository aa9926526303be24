//! The policy contract and bundled stand-in policies.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::boundary::{make_targets, serialize, BoundaryOutput, OutputPattern};
use crate::perturb::{sample_perturbation, Candidate};
use crate::segmentation::{Document, LabelSet, Segmentation};

/// Everything a policy may look at when generating for one document.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub doc_index: usize,
    pub doc: &'a Document,
    /// Only the oracle surrogate reads this.
    pub gold: &'a Segmentation,
    pub m: usize,
    pub temperature: f64,
    pub step: usize,
}

/// Best generated candidate of one group.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub doc_index: usize,
    pub doc: &'a Document,
    pub best: &'a Candidate,
}

/// A generator of raw boundary outputs. Implementations must return exactly
/// `req.m` texts and be deterministic given the supplied random stream.
pub trait Policy {
    fn generate(&mut self, req: &GenerationRequest<'_>, rng: &mut ChaCha8Rng) -> Vec<String>;

    fn update(&mut self, _feedback: &[Feedback<'_>]) {}
}

#[derive(Debug, Clone)]
struct Memory {
    output: Option<BoundaryOutput>,
    reward: Option<f64>,
}

/// A hill-climbing surrogate: starts near the gold targets and samples
/// random perturbations around the best candidate seen so far.
#[derive(Debug, Clone)]
pub struct NoisyOraclePolicy {
    noise: f64,
    labels: LabelSet,
    pattern: OutputPattern,
    memory: HashMap<String, Memory>,
}

impl NoisyOraclePolicy {
    /// `noise` scales the number of random perturbations: the initial memory
    /// carries `round(3 * noise)` of them and every candidate adds
    /// `Poisson(noise * temperature)` more.
    pub fn new(noise: f64, labels: LabelSet, pattern: OutputPattern) -> Self {
        Self {
            noise: noise.max(0.0),
            labels,
            pattern,
            memory: HashMap::new(),
        }
    }

    fn perturb_n(&self, doc: &Document, mut out: BoundaryOutput, n: usize, rng: &mut ChaCha8Rng) -> BoundaryOutput {
        for _ in 0..n {
            match sample_perturbation(doc, &out, &self.labels, rng) {
                Some((_, next)) => out = next,
                None => break,
            }
        }
        out
    }

    fn init_memory(&self, req: &GenerationRequest<'_>, rng: &mut ChaCha8Rng) -> Memory {
        let output = make_targets(req.doc, req.gold, self.pattern, rng)
            .ok()
            .map(|t| self.perturb_n(req.doc, t, (3.0 * self.noise).round() as usize, rng));
        Memory { output, reward: None }
    }
}

impl Policy for NoisyOraclePolicy {
    fn generate(&mut self, req: &GenerationRequest<'_>, rng: &mut ChaCha8Rng) -> Vec<String> {
        if !self.memory.contains_key(req.doc.id()) {
            let mem = self.init_memory(req, rng);
            self.memory.insert(req.doc.id().to_string(), mem);
        }
        let Some(base) = self.memory[req.doc.id()].output.clone() else {
            return vec![String::new(); req.m];
        };
        let lambda = self.noise * req.temperature;
        let poisson = Poisson::new(lambda).ok();
        (0..req.m)
            .map(|_| {
                let n = poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
                serialize(&self.perturb_n(req.doc, base.clone(), n, rng))
            })
            .collect()
    }

    fn update(&mut self, feedback: &[Feedback<'_>]) {
        for fb in feedback {
            let Some(output) = &fb.best.output else { continue };
            let reward = fb.best.reward();
            let mem = self.memory.entry(fb.doc.id().to_string()).or_insert(Memory {
                output: None,
                reward: None,
            });
            if mem.reward.is_none_or(|r| reward > r) {
                mem.output = Some(output.clone());
                mem.reward = Some(reward);
            }
        }
    }
}

/// Replays recorded raw outputs. Each document id maps to a list of
/// entries; step `s` uses entry `s mod len`, cycling its outputs to fill `m`.
#[derive(Debug, Clone, Default)]
pub struct ReplayPolicy {
    entries: HashMap<String, Vec<Vec<String>>>,
}

impl ReplayPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, outputs: Vec<String>) {
        self.entries.entry(id.into()).or_default().push(outputs);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn cycle(outputs: &[String], m: usize) -> Vec<String> {
    if outputs.is_empty() {
        return vec![String::new(); m];
    }
    (0..m).map(|j| outputs[j % outputs.len()].clone()).collect()
}

impl Policy for ReplayPolicy {
    fn generate(&mut self, req: &GenerationRequest<'_>, _rng: &mut ChaCha8Rng) -> Vec<String> {
        match self.entries.get(req.doc.id()) {
            Some(list) if !list.is_empty() => cycle(&list[req.step % list.len()], req.m),
            _ => vec![String::new(); req.m],
        }
    }
}

/// Emits the same outputs for every document and step.
#[derive(Debug, Clone)]
pub struct StaticPolicy {
    outputs: Vec<String>,
}

impl StaticPolicy {
    pub fn new(outputs: Vec<String>) -> Self {
        Self { outputs }
    }
}

impl Policy for StaticPolicy {
    fn generate(&mut self, req: &GenerationRequest<'_>, _rng: &mut ChaCha8Rng) -> Vec<String> {
        cycle(&self.outputs, req.m)
    }
}
