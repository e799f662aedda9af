//! The dual-stream guard: strict masking in parallel with context
//! reconstruction, fused into one safe message, plus the comparison
//! baselines behind the same interface.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PiiRecord;
use crate::detector::PiiDetector;
use crate::llm::{CompletionBackend, CompletionRequest, LlmError};
use crate::model::{supplement_items, GuardMethod, GuardOutput, MaskOrigin, MathContext};
use crate::reconstructor::{PromptConfig, Reconstructor, SUPPLEMENT_HEADER};
use crate::sanitizer::{mask_intervals, strict_mask, text_is_leak_free, MaskedText};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum GuardError {
    #[error("guard integrity violated: {0}")]
    Integrity(String),
    #[error("guard backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("guard configuration: {0}")]
    Config(String),
    #[error("input text is empty")]
    EmptyInput,
}

/// Deterministic fusion: masked text, newline, the supplement header, then
/// the braced comma-separated canonical context items.
pub fn fuse(masked_text: &str, ctx: &MathContext) -> String {
    let items = supplement_items(ctx).join(", ");
    format!("{masked_text}\n{SUPPLEMENT_HEADER}{{{items}}}")
}

/// Which reconstruction backend the pipeline uses.
pub enum ReconstructionBackend {
    Deterministic,
    Llm { backend: Arc<dyn CompletionBackend>, prompt: PromptConfig },
}

impl std::fmt::Debug for ReconstructionBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReconstructionBackend::Deterministic => f.write_str("Deterministic"),
            ReconstructionBackend::Llm { .. } => f.write_str("Llm"),
        }
    }
}

/// Which text the reconstruction stream reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructFrom {
    /// Raw input (the paper's formulation); safety comes from the schema
    /// restriction and the leak filter, never from trusting the model.
    #[default]
    Raw,
    /// Sanitized text only, for deployments where the backend is remote and
    /// must not see raw input.
    Safe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuardConfig {
    /// Replace the masked text with a one-line summary in the fused output.
    /// Requires an LLM backend; the default stays deterministic.
    pub summarize_prefix: bool,
    pub reconstruct_from: ReconstructFrom,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self { summarize_prefix: false, reconstruct_from: ReconstructFrom::Raw }
    }
}

/// Role description for the EPE baseline: which structured fields may pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpeRole {
    pub allowed_fields: Vec<String>,
}

impl Default for EpeRole {
    fn default() -> Self {
        Self {
            allowed_fields: ["problem", "question", "topic", "subject"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Immutable guard pipeline serving all five methods.
pub struct GuardPipeline {
    detector: PiiDetector,
    reconstructor: Reconstructor,
    backend: ReconstructionBackend,
    config: GuardConfig,
    epe_role: EpeRole,
}

impl GuardPipeline {
    pub fn new(
        detector: PiiDetector,
        reconstructor: Reconstructor,
        backend: ReconstructionBackend,
        config: GuardConfig,
    ) -> Self {
        Self { detector, reconstructor, backend, config, epe_role: EpeRole::default() }
    }

    /// Fully deterministic pipeline over the bundled gazetteer.
    pub fn bundled_deterministic() -> Self {
        let detector = PiiDetector::bundled(crate::detector::DetectionPolicy::strict());
        let reconstructor = Reconstructor::bundled();
        Self::new(detector, reconstructor, ReconstructionBackend::Deterministic, GuardConfig::default())
    }

    pub fn with_epe_role(mut self, role: EpeRole) -> Self {
        self.epe_role = role;
        self
    }

    pub fn detector(&self) -> &PiiDetector {
        &self.detector
    }

    pub fn backend_label(&self) -> &'static str {
        match self.backend {
            ReconstructionBackend::Deterministic => "deterministic",
            ReconstructionBackend::Llm { .. } => "llm",
        }
    }

    /// Guard one message with the requested method.
    pub fn guard(&self, method: GuardMethod, text: &str) -> Result<GuardOutput, GuardError> {
        if text.trim().is_empty() {
            return Err(GuardError::EmptyInput);
        }
        match method {
            GuardMethod::None => Ok(baseline_none(text)),
            GuardMethod::Naive => Ok(baseline_naive(text)),
            GuardMethod::Epe => self.baseline_epe(text),
            GuardMethod::PureLlm => self.baseline_pure_llm(text),
            GuardMethod::Srpg => self.srpg_guard(text),
        }
    }

    /// The dual-stream method. Both streams are pure functions of the
    /// input, so their results are independent of execution order.
    pub fn srpg_guard(&self, text: &str) -> Result<GuardOutput, GuardError> {
        let masked = strict_mask(text, &self.detector);

        let reconstruction_input = match self.config.reconstruct_from {
            ReconstructFrom::Raw => text.to_string(),
            ReconstructFrom::Safe => masked.text.clone(),
        };
        let (context, degraded) = match &self.backend {
            ReconstructionBackend::Deterministic => {
                let ctx = self.reconstructor.reconstruct_deterministic(&reconstruction_input);
                (self.reconstructor.leak_filter(&ctx), false)
            }
            ReconstructionBackend::Llm { backend, prompt } => {
                let outcome =
                    self.reconstructor.reconstruct_llm(&reconstruction_input, backend.as_ref(), prompt);
                (outcome.context, outcome.degraded)
            }
        };

        let prefix = if self.config.summarize_prefix {
            self.summarized_prefix(&masked)?
        } else {
            masked.text.clone()
        };
        let fused_text = fuse(&prefix, &context);

        // fail closed: emit nothing rather than a leaking output
        let raw_hits = detector_records(&self.detector, text);
        if !text_is_leak_free(&fused_text, &raw_hits) {
            return Err(GuardError::Integrity(
                "fused output still matches a detected entity from the raw input".into(),
            ));
        }

        Ok(GuardOutput {
            method: GuardMethod::Srpg,
            masked_text: masked.text,
            context: Some(context),
            fused_text,
            audit: masked.audit,
            degraded,
        })
    }

    fn summarized_prefix(&self, masked: &MaskedText) -> Result<String, GuardError> {
        let ReconstructionBackend::Llm { backend, .. } = &self.backend else {
            return Err(GuardError::Config(
                "summarize_prefix requires an LLM backend".into(),
            ));
        };
        let prompt = format!(
            "Summarize the following message in one short sentence. Keep every [MASK] token \
             as-is and add no new facts.\n{}{}",
            crate::llm::INPUT_MARKER,
            masked.text
        );
        let summary = backend.complete(&CompletionRequest::summary(&prompt))?;
        let summary = summary.trim();
        if summary.is_empty() {
            return Err(GuardError::Backend(LlmError::MalformedResponse(
                "empty summary".into(),
            )));
        }
        Ok(summary.to_string())
    }

    /// Pure LLM sanitizer baseline: one removal prompt, output used
    /// verbatim. Transport failure is surfaced, never silently bypassed.
    pub fn baseline_pure_llm(&self, text: &str) -> Result<GuardOutput, GuardError> {
        let ReconstructionBackend::Llm { backend, .. } = &self.backend else {
            return Err(GuardError::Config(
                "method purellm requires an LLM backend (mock or http)".into(),
            ));
        };
        let prompt = format!(
            "Remove privacy information from the following message. Reply with the cleaned \
             message only.\n{}{}",
            crate::llm::INPUT_MARKER,
            text
        );
        let response = backend.complete(&CompletionRequest::removal(&prompt))?;
        if response.trim().is_empty() {
            return Err(GuardError::Backend(LlmError::MalformedResponse(
                "empty sanitizer response".into(),
            )));
        }
        Ok(GuardOutput {
            method: GuardMethod::PureLlm,
            masked_text: response.clone(),
            context: None,
            fused_text: response,
            audit: Vec::new(),
            degraded: false,
        })
    }

    /// EPE-style role filtering: drops disallowed `key: value` fields, and
    /// deliberately passes free text through unchanged (the failure mode
    /// the comparison exists to show).
    pub fn baseline_epe(&self, text: &str) -> Result<GuardOutput, GuardError> {
        Ok(baseline_epe(text, &self.epe_role))
    }
}

fn detector_records(detector: &PiiDetector, text: &str) -> Vec<PiiRecord> {
    detector
        .detect(text)
        .into_iter()
        .map(|span| PiiRecord {
            kind: span.kind,
            canonical: span.canonical.clone(),
            aliases: vec![span.surface.clone()],
            start: span.start,
            end: span.end,
            surface: span.surface,
        })
        .collect()
}

/// Raw transmission.
pub fn baseline_none(text: &str) -> GuardOutput {
    GuardOutput {
        method: GuardMethod::None,
        masked_text: text.to_string(),
        context: None,
        fused_text: text.to_string(),
        audit: Vec::new(),
        degraded: false,
    }
}

/// Regex-style masking of every digit run and every capitalized word,
/// sentence-initial words included. No context supplement.
pub fn baseline_naive(text: &str) -> GuardOutput {
    let chars: Vec<char> = text.chars().collect();
    let mut intervals: Vec<(usize, usize, MaskOrigin)> = Vec::new();

    for token in tokenize(text) {
        if token.is_word() && token.text.chars().next().is_some_and(char::is_uppercase) {
            intervals.push((token.start, token.end, MaskOrigin::NaiveCapitalized));
        }
    }
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() && !intervals.iter().any(|(s, e, _)| *s <= i && i < *e) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            intervals.push((start, i, MaskOrigin::NaiveDigit));
        } else {
            i += 1;
        }
    }
    intervals.sort_by_key(|(s, _, _)| *s);

    let masked = mask_intervals(text, &intervals);
    GuardOutput {
        method: GuardMethod::Naive,
        masked_text: masked.text.clone(),
        context: None,
        fused_text: masked.text,
        audit: masked.audit,
        degraded: false,
    }
}

/// Role-filtering baseline over explicit `key: value` lines.
pub fn baseline_epe(text: &str, role: &EpeRole) -> GuardOutput {
    let lines: Vec<&str> = text.lines().collect();
    let has_markers = lines.iter().any(|l| field_key(l).is_some());
    if !has_markers {
        return GuardOutput {
            method: GuardMethod::Epe,
            masked_text: text.to_string(),
            context: None,
            fused_text: text.to_string(),
            audit: Vec::new(),
            degraded: false,
        };
    }
    let kept: Vec<&str> = lines
        .into_iter()
        .filter(|l| match field_key(l) {
            Some(key) => role.allowed_fields.iter().any(|allowed| allowed == &key),
            None => false,
        })
        .collect();
    let fused = kept.join("\n");
    GuardOutput {
        method: GuardMethod::Epe,
        masked_text: fused.clone(),
        context: None,
        fused_text: fused,
        audit: Vec::new(),
        degraded: false,
    }
}

fn field_key(line: &str) -> Option<String> {
    let (key, _) = line.split_once(':')?;
    let key = key.trim();
    if key.is_empty()
        || key.len() > 24
        || !key.chars().all(|c| c.is_ascii_alphabetic() || c == '_' || c == ' ')
    {
        return None;
    }
    Some(key.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_serialize, Quantity, Relation, RelationKind};

    fn pipeline() -> GuardPipeline {
        GuardPipeline::bundled_deterministic()
    }

    #[test]
    fn fuse_renders_geometry_shape() {
        let ctx = MathContext::new(
            vec!["Triangle ABC".into()],
            vec![
                Quantity::with_label("5", "Side AB").unwrap(),
                Quantity::with_label("90", "Angle C").unwrap(),
            ],
            vec![
                Relation::new(RelationKind::Equation, "AB = 5").unwrap(),
                Relation::new(RelationKind::Equation, "C = 90").unwrap(),
            ],
            Some("find the area".into()),
        );
        let fused = fuse("User [MASK] asks a geometry problem.", &ctx);
        assert_eq!(
            fused,
            "User [MASK] asks a geometry problem.\nContext Supplement: \
             {Triangle ABC, Side AB=5, Angle C=90, AB = 5, C = 90, target: find the area}"
        );
    }

    #[test]
    fn fuse_with_empty_context() {
        assert_eq!(fuse("hello", &MathContext::default()), "hello\nContext Supplement: {}");
    }

    #[test]
    fn srpg_repairs_masked_numbers() {
        let out = pipeline().guard(GuardMethod::Srpg, "A student has 5 apples and buys 3 more apples. How many apples are there in total?").unwrap();
        // masking broke the numbers...
        assert!(out.masked_text.contains("[MASK] apples"));
        // ...and the supplement repaired them
        assert!(out.fused_text.contains("total = 5 + 3"));
        let ctx = out.context.unwrap();
        let values: Vec<&str> = ctx.quantities.iter().map(|q| q.value.as_str()).collect();
        assert_eq!(values, vec!["3", "5"]);
    }

    #[test]
    fn srpg_clean_input_keeps_text_and_appends_supplement() {
        let out = pipeline().guard(GuardMethod::Srpg, "solve 2y = 8").unwrap();
        assert!(out.fused_text.starts_with("solve 2y = 8\nContext Supplement: {"));
        assert!(out.audit.is_empty());
    }

    #[test]
    fn srpg_breakage_repair_example() {
        let out = pipeline()
            .guard(GuardMethod::Srpg, "x + 50 = 10 in Room 50, solve for x")
            .unwrap();
        assert!(out.masked_text.contains("x + 50 = 10"));
        assert!(out.masked_text.contains("Room [MASK]"));
        assert!(out.fused_text.contains("x + 50 = 10"));
        let ctx = out.context.unwrap();
        assert!(ctx.quantities.iter().any(|q| q.value == "50"));
    }

    #[test]
    fn stream_order_does_not_matter() {
        let text = "My name is Alice Chen. x + 5 = 10, solve for x.";
        let p = pipeline();
        // reconstruct-then-mask
        let ctx_first = p.reconstructor.reconstruct_deterministic(text);
        let a = p.guard(GuardMethod::Srpg, text).unwrap();
        // mask-then-reconstruct (the guard masks first internally; compare
        // against an explicit pre-pass)
        let _masked = strict_mask(text, p.detector());
        let b = p.guard(GuardMethod::Srpg, text).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            canonical_serialize(&p.reconstructor.leak_filter(&ctx_first)),
            canonical_serialize(a.context.as_ref().unwrap())
        );
    }

    #[test]
    fn concurrent_guarding_is_deterministic() {
        let p = std::sync::Arc::new(pipeline());
        let text = "My name is Alice Chen. A student has 5 apples and buys 3 more apples. How many apples are there in total?";
        let baseline = p.guard(GuardMethod::Srpg, text).unwrap();
        let mut handles = Vec::new();
        for _ in 0..8 {
            let p = p.clone();
            let text = text.to_string();
            handles.push(std::thread::spawn(move || p.guard(GuardMethod::Srpg, &text).unwrap()));
        }
        for h in handles {
            assert_eq!(h.join().unwrap(), baseline);
        }
    }

    #[test]
    fn none_is_identity() {
        for text in ["x + 5 = 10", "My name is Alice Chen.", "problem: 2 + 2"] {
            let out = baseline_none(text);
            assert_eq!(out.fused_text, text);
            assert_eq!(out.masked_text, text);
            assert!(out.audit.is_empty());
            assert!(out.context.is_none());
        }
    }

    #[test]
    fn naive_masks_digits_and_capitalized_words() {
        let out = baseline_naive("x + 50 = 10");
        assert_eq!(out.fused_text, "x + [MASK] = [MASK]");
        let out = baseline_naive("Calculate the distance from Haidian District to Chaoyang District");
        assert_eq!(
            out.fused_text,
            "[MASK] the distance from [MASK] [MASK] to [MASK] [MASK]"
        );
        let out = baseline_naive("all lowercase text stays put");
        assert_eq!(out.fused_text, "all lowercase text stays put");
    }

    #[test]
    fn epe_keeps_allowed_fields_only() {
        let out = baseline_epe("name: Alice Chen\nproblem: x+5=10", &EpeRole::default());
        assert_eq!(out.fused_text, "problem: x+5=10");
    }

    #[test]
    fn epe_passes_free_text_through() {
        let text = "I'm Alice Chen, solve x+5=10";
        let out = baseline_epe(text, &EpeRole::default());
        assert_eq!(out.fused_text, text);
    }

    #[test]
    fn epe_empty_text_stays_empty() {
        let out = baseline_epe("", &EpeRole::default());
        assert_eq!(out.fused_text, "");
    }

    #[test]
    fn purellm_requires_llm_backend() {
        let err = pipeline().guard(GuardMethod::PureLlm, "hello 5").unwrap_err();
        assert!(matches!(err, GuardError::Config(_)));
    }

    #[test]
    fn empty_input_is_rejected() {
        let err = pipeline().guard(GuardMethod::Srpg, "  ").unwrap_err();
        assert!(matches!(err, GuardError::EmptyInput));
    }

    fn llm_pipeline(mode: crate::llm::MockMode) -> GuardPipeline {
        let detector = PiiDetector::bundled(crate::detector::DetectionPolicy::strict());
        let reconstructor = crate::reconstructor::Reconstructor::new(
            detector.clone(),
            Default::default(),
        );
        GuardPipeline::new(
            detector,
            reconstructor,
            ReconstructionBackend::Llm {
                backend: Arc::new(crate::llm::MockBackend::new(mode)),
                prompt: crate::reconstructor::PromptConfig::bundled(),
            },
            GuardConfig::default(),
        )
    }

    #[test]
    fn purellm_faithful_mock_removes_gazetteer_hits() {
        let out = llm_pipeline(crate::llm::MockMode::Faithful)
            .guard(GuardMethod::PureLlm, "My name is Alice Chen. x + 5 = 10")
            .unwrap();
        assert!(!out.fused_text.contains("Alice"));
        assert!(out.fused_text.contains("[MASK]"));
        assert!(out.context.is_none());
    }

    #[test]
    fn purellm_leaky_mock_fails_the_leak_check() {
        let out = llm_pipeline(crate::llm::MockMode::Leaky)
            .guard(GuardMethod::PureLlm, "solve x + 5 = 10")
            .unwrap();
        let gold = vec![crate::corpus::PiiRecord {
            kind: crate::model::PiiKind::PersonName,
            canonical: "Alice Chen".into(),
            aliases: vec!["Alice Chen".into()],
            start: 0,
            end: 0,
            surface: "Alice Chen".into(),
        }];
        assert!(!crate::sanitizer::text_is_leak_free(&out.fused_text, &gold));
    }

    #[test]
    fn purellm_malformed_mock_is_a_guard_error() {
        let err = llm_pipeline(crate::llm::MockMode::Malformed)
            .guard(GuardMethod::PureLlm, "solve x + 5 = 10")
            .unwrap_err();
        assert!(matches!(err, GuardError::Backend(_)));
    }

    #[test]
    fn srpg_with_failing_backend_degrades_but_stays_safe() {
        let out = llm_pipeline(crate::llm::MockMode::Slow)
            .guard(GuardMethod::Srpg, "My name is Alice Chen. x + 5 = 10, solve for x")
            .unwrap();
        assert!(out.degraded, "slow backend falls back to the deterministic parser");
        assert!(out.fused_text.contains("x + 5 = 10"));
        assert!(!out.fused_text.contains("Alice"));
    }

    #[test]
    fn summarize_prefix_needs_llm_backend() {
        let detector = PiiDetector::bundled(crate::detector::DetectionPolicy::strict());
        let reconstructor =
            crate::reconstructor::Reconstructor::new(detector.clone(), Default::default());
        let p = GuardPipeline::new(
            detector,
            reconstructor,
            ReconstructionBackend::Deterministic,
            GuardConfig { summarize_prefix: true, ..GuardConfig::default() },
        );
        let err = p.guard(GuardMethod::Srpg, "x + 5 = 10").unwrap_err();
        assert!(matches!(err, GuardError::Config(_)));
    }

    #[test]
    fn summarize_prefix_uses_backend_summary() {
        let detector = PiiDetector::bundled(crate::detector::DetectionPolicy::strict());
        let reconstructor =
            crate::reconstructor::Reconstructor::new(detector.clone(), Default::default());
        let p = GuardPipeline::new(
            detector,
            reconstructor,
            ReconstructionBackend::Llm {
                backend: Arc::new(crate::llm::MockBackend::new(crate::llm::MockMode::Faithful)),
                prompt: crate::reconstructor::PromptConfig::bundled(),
            },
            GuardConfig { summarize_prefix: true, ..GuardConfig::default() },
        );
        let out = p.guard(GuardMethod::Srpg, "My name is Alice Chen. x + 5 = 10").unwrap();
        assert!(out.fused_text.starts_with("User [MASK] asks a math problem."));
    }

    #[test]
    fn fuse_is_injective_on_masked_and_serialized_context() {
        // decode-based argument, exercised over a fixed grid here and by the
        // property test in tests/properties.rs
        let contexts = [
            MathContext::default(),
            MathContext::new(vec!["x".into()], vec![], vec![], None),
            MathContext::new(vec![], vec![Quantity::new("5").unwrap()], vec![], None),
            MathContext::new(
                vec![],
                vec![Quantity::with_label("5", "Side AB").unwrap()],
                vec![Relation::new(RelationKind::Equation, "AB = 5").unwrap()],
                Some("find the area".into()),
            ),
        ];
        let masks = ["a", "b", "a\nContext Supplement: {x}"];
        let mut seen = std::collections::BTreeMap::new();
        for m in &masks {
            for c in &contexts {
                let fused = fuse(m, c);
                let key = (m.to_string(), canonical_serialize(c));
                if let Some(prev) = seen.insert(fused.clone(), key.clone()) {
                    assert_eq!(prev, key, "collision on {fused}");
                }
            }
        }
    }
}
