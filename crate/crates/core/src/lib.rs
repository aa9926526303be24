//! Boundary-generation structured text segmentation.
//!
//! A model emits, per segment, a label and a short starting (or ending)
//! token sequence; the full segments are reconstructed by locating those
//! sequences in the input. This crate provides:
//!
//! * [`segmentation`]: documents, labels, spans and segmentation checks.
//! * [`boundary`]: output patterns, reconstruction, target synthesis and
//!   the line wire format.
//! * [`metrics`]: reconstruction ratio, exact-match F1, character F1,
//!   P_k, label F1 and the combined verifiable reward.
//! * [`perturb`]: single-edit perturbations of candidates and the search
//!   for the best intermediate candidate.
//! * [`rollout`]: rollout groups, medium-candidate selection, selective
//!   replacement, advantages and a small simulation loop.

pub mod boundary;
pub mod metrics;
pub mod perturb;
pub mod rollout;
pub mod segmentation;

pub use boundary::{BoundaryItem, BoundaryOutput, OutputPattern, ReconstructionResult};
pub use metrics::{EvalReport, RewardBreakdown};
pub use perturb::{Candidate, Perturbation, PerturbationKind};
pub use segmentation::{Document, LabelSet, Segment, Segmentation, Span};
