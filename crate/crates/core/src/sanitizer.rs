//! The strict sanitization stream: mask every detected or ambiguous entity
//! under a zero-trust policy, and verify leak-freedom against ground truth.

use serde::{Deserialize, Serialize};

use crate::corpus::PiiRecord;
use crate::detector::{NumericVerdict, PiiDetector};
use crate::model::{canonicalize_pii, AuditRecord, MaskOrigin, PiiKind};
use crate::text::{tokenize, Token};

pub const MASK_PLACEHOLDER: &str = "[MASK]";

/// One masked region, in original-text coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub start: usize,
    pub end: usize,
    pub placeholder: String,
    pub origin: MaskOrigin,
}

/// Sanitized text plus its replacement audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedText {
    pub text: String,
    /// Replacements in original-text coordinates, left to right.
    pub replacements: Vec<Replacement>,
    /// The same replacements as placeholder spans in `text` coordinates.
    pub audit: Vec<AuditRecord>,
}

impl MaskedText {
    pub fn unchanged(text: &str) -> Self {
        Self { text: text.to_string(), replacements: Vec::new(), audit: Vec::new() }
    }
}

/// Mask every detected PII span and every ambiguous number.
///
/// The detector is expected to run a strict policy here; the masking itself
/// is policy-agnostic and replaces each flagged span, whitespace included,
/// with a single untyped placeholder.
pub fn strict_mask(text: &str, detector: &PiiDetector) -> MaskedText {
    let spans = detector.detect(text);
    let tokens = tokenize(text);

    let mut intervals: Vec<(usize, usize, MaskOrigin)> =
        spans.iter().map(|s| (s.start, s.end, MaskOrigin::Pii(s.kind))).collect();

    for (idx, token) in tokens.iter().enumerate() {
        if !token.is_number() {
            continue;
        }
        if spans.iter().any(|s| s.start < token.end && token.start < s.end) {
            continue;
        }
        if detector.classify_numeric_token(&tokens, idx) == NumericVerdict::PossiblePii {
            intervals.push((token.start, token.end, MaskOrigin::AmbiguousNumber));
        }
    }
    intervals.sort_by_key(|(s, _, _)| *s);

    mask_intervals(text, &intervals)
}

/// Replace sorted, non-overlapping intervals with the placeholder.
pub(crate) fn mask_intervals(text: &str, intervals: &[(usize, usize, MaskOrigin)]) -> MaskedText {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut out_len = 0usize;
    let mut replacements = Vec::new();
    let mut audit = Vec::new();
    let mut cursor = 0usize;
    let placeholder_len = MASK_PLACEHOLDER.chars().count();

    for (start, end, origin) in intervals {
        if *start < cursor {
            continue; // defensively skip anything overlapping a prior mask
        }
        let prefix: String = chars[cursor..*start].iter().collect();
        out_len += prefix.chars().count();
        out.push_str(&prefix);
        replacements.push(Replacement {
            start: *start,
            end: *end,
            placeholder: MASK_PLACEHOLDER.to_string(),
            origin: *origin,
        });
        audit.push(AuditRecord {
            start: out_len,
            end: out_len + placeholder_len,
            placeholder: MASK_PLACEHOLDER.to_string(),
            origin: *origin,
        });
        out.push_str(MASK_PLACEHOLDER);
        out_len += placeholder_len;
        cursor = *end;
    }
    let tail: String = chars[cursor..].iter().collect();
    out.push_str(&tail);

    MaskedText { text: out, replacements, audit }
}

/// True when no gold alias survives in the text under kind-specific
/// canonical matching. This is both a test oracle and a runtime assertion
/// in the guard pipeline.
pub fn verify_no_leak(masked: &MaskedText, gold: &[PiiRecord]) -> bool {
    text_is_leak_free(&masked.text, gold)
}

/// Alias-occurrence check usable on any output text (fused output, gateway
/// responses, evaluation).
pub fn text_is_leak_free(text: &str, gold: &[PiiRecord]) -> bool {
    !gold.iter().any(|record| record_leaks(text, record))
}

pub(crate) fn record_leaks(text: &str, record: &PiiRecord) -> bool {
    leaked_alias(text, record).is_some()
}

/// The first gold alias whose canonical form occurs in the text, if any.
pub fn leaked_alias(text: &str, record: &PiiRecord) -> Option<String> {
    let tokens = tokenize(text);
    let word_stems: Vec<String> = tokens
        .iter()
        .filter(|t| t.kind != crate::text::TokenKind::Symbol)
        .map(Token::lower_stem)
        .collect();
    let digit_runs = joined_digit_runs(text, &tokens);

    for alias in &record.aliases {
        match record.kind {
            PiiKind::PhoneNumber | PiiKind::IdNumber => {
                let gold_digits = canonicalize_pii(record.kind, alias);
                if gold_digits.len() >= 7
                    && digit_runs.iter().any(|run| shares_digit_substring(run, &gold_digits, 7))
                {
                    return Some(alias.clone());
                }
            }
            _ => {
                let canonical = canonicalize_pii(record.kind, alias);
                let alias_tokens: Vec<&str> = canonical.split(' ').collect();
                if alias_tokens.is_empty() || canonical.is_empty() {
                    continue;
                }
                let found = word_stems
                    .windows(alias_tokens.len())
                    .any(|w| w.iter().map(String::as_str).eq(alias_tokens.iter().copied()));
                if found {
                    return Some(alias.clone());
                }
            }
        }
    }
    None
}

/// Digit runs joined across phone-style separators, so re-spaced numbers
/// ("138 0013 8000") still compare as one run.
fn joined_digit_runs(text: &str, tokens: &[Token]) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let digit_tokens: Vec<&Token> = tokens
        .iter()
        .filter(|t| t.is_number() && t.text.chars().all(|c| c.is_ascii_digit()))
        .collect();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < digit_tokens.len() {
        let mut run = digit_tokens[i].text.clone();
        let mut j = i;
        while j + 1 < digit_tokens.len() {
            let gap = &chars[digit_tokens[j].end..digit_tokens[j + 1].start];
            if gap.iter().all(|c| c.is_whitespace() || matches!(c, '-' | '(' | ')' | '.' | '/')) {
                run.push_str(&digit_tokens[j + 1].text);
                j += 1;
            } else {
                break;
            }
        }
        runs.push(run);
        i = j + 1;
    }
    runs
}

fn shares_digit_substring(run: &str, gold: &str, min_len: usize) -> bool {
    if run.len() < min_len || gold.len() < min_len {
        return false;
    }
    for start in 0..=(gold.len() - min_len) {
        let needle = &gold[start..start + min_len];
        if run.contains(needle) {
            return true;
        }
    }
    false
}
