//! Batch extraction of Review of Systems (ROS) entities from plain-text
//! clinical notes, plus the evaluation harness that scores detections
//! against gold annotations.
//!
//! The pipeline runs three stages per note: section segmentation via a
//! header lexicon, few-shot entity recognition through a chat-completion
//! backend, and body-system classification with a valid-system filter.
//! The eval module classifies detections into exact/relaxed/under/over
//! matches and derives span and label error counts from them.

pub mod backend;
pub mod domain;
pub mod eval;
pub mod pipeline;
pub mod segmenter;
pub mod text;

pub use backend::{Backend, BackendError, ChatRequest, GenerationConfig};
pub use domain::{
    canonicalize_system, Annotation, BodySystem, CategoryResolution, ClinicalNote, Corpus,
    CorpusEntry, Detection, Span, Status,
};
pub use eval::{CorpusEvaluation, MetricCounts, ModelCounts};
pub use pipeline::PipelineOutput;
pub use segmenter::{HeaderLexicon, RosSegment};
