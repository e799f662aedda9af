//! Dual-stream privacy guard for math tutoring messages.
//!
//! A strict sanitization stream masks every detected or ambiguous entity;
//! a parallel reconstruction stream extracts a schema-constrained math
//! context from the raw input; fusion joins both into one safe message.
//! The crate also ships the synthetic corpus generator, PII injector,
//! baselines, and the attack/utility evaluation harness around them.

pub mod corpus;
pub mod detector;
pub mod eval;
pub mod guard;
pub mod llm;
pub mod model;
pub mod numeric;
pub mod reconstructor;
pub mod sanitizer;
pub mod text;
pub mod units;

pub use corpus::{
    generate_synthetic, ingest_mathdial, inject_pii, load_corpus, save_corpus, DialogueItem,
    InjectedItem, InjectionBank, InjectionStyle, PiiProfile, PiiRecord, TemplateBank,
};
pub use detector::{
    classify_ambiguous_numeric, detect_pii, load_gazetteer, DetectionPolicy, Gazetteer,
    NumericVerdict, PiiDetector,
};
pub use eval::{
    attack, composite_score, compute_asr, evaluate_corpus, evaluate_outputs, exact_match_rate,
    hard_solvability, key_param_recall, AttackResult, GuardRecord, MetricsReport, ReportEnvelope,
    Weights,
};
pub use guard::{
    baseline_epe, baseline_naive, baseline_none, fuse, EpeRole, GuardConfig, GuardError,
    GuardPipeline, ReconstructFrom, ReconstructionBackend,
};
pub use llm::{
    complete, mock_backend, BackendConfig, CompletionBackend, CompletionRequest, HttpBackend,
    LlmError, MockBackend, MockMode,
};
pub use model::{
    canonical_serialize, canonicalize_pii, contexts_equal, parse_canonical, GuardMethod,
    GuardOutput, MathContext, PiiKind, PiiSpan, Quantity, Relation, RelationKind,
};
pub use reconstructor::{
    parse_supplement, validate_schema, ContextSchema, PromptConfig, Reconstructor, SchemaError,
};
pub use sanitizer::{strict_mask, text_is_leak_free, verify_no_leak, MaskedText};
pub use units::UnitLexicon;
