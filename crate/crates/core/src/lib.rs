//! Core model and pure logic for cross-cultural interpretation of
//! traditional Chinese paintings.
//!
//! The crate is `no_std` and only needs an allocator. It covers:
//!
//! * [`norm`]: the cultural-norm data model and its validation rules,
//! * [`dataset`]: an in-memory dataset with detection import and manual
//!   annotation editing,
//! * [`analytics`]: element frequency, co-occurrence and per-painting stats,
//! * [`prompt`]: deterministic prompt assembly from embedded templates,
//! * [`response`]: tolerant parsing of structured model replies.
//!
//! File IO, the model gateway, persistence and the HTTP service live in the
//! `cultiverse` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod dataset;
pub mod digest;
pub mod ids;
pub mod norm;
pub mod prompt;
pub mod response;
pub mod template;

pub use analytics::{AnalyticsError, CoOccurrenceEdge, ElementStats, Occurrence};
pub use dataset::{
    AnnotationError, AuditEntry, Dataset, DetectionRecord, ImportSummary, LabelMap, Manifest, ValidationReport,
};
pub use ids::{AnnotationId, ElementId, NormId, PaintingId};
pub use norm::{
    Annotation, BoundingBox, CulturalNorm, Element, ElementCategory, ElementIndex, ElementRecord, NormRecord,
    EmotionPolarity, ImageSize, Painting, Provenance, RhetoricType, Rule, Violation,
};
pub use prompt::{
    BackgroundError, Facet, FacetSet, Message, PromptEnvelope, PromptError, QaQuestion, Role, SourceNorm,
    TranslationRequest, UserBackground,
};
pub use template::TemplateError;
pub use response::{InferenceItem, Judgment, ParseError, TargetNorm, Verdict};
