//! Rule-based PII detection: gazetteer lookup, pattern grammars, and the
//! contextual rule that separates math quantities from identifier-like
//! numbers. This is the shared engine behind the sanitizer, the leak filter,
//! the baselines and the evaluation attacker.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{canonicalize_pii, PiiKind, PiiSpan};
use crate::text::{char_slice, gap_is_space, is_titlecase, tokenize, Token, TokenKind};
use crate::units::UnitLexicon;

/// Proper-noun tokens that never start or join a masked capitalized run:
/// geometry vocabulary and message-structure words.
const PROPER_NOUN_WHITELIST: &[&str] = &[
    "triangle", "angle", "side", "square", "circle", "rectangle", "user", "student", "teacher",
    "context", "supplement", "room", "mask",
];

const ADDRESS_CUES: &[&str] =
    &["district", "street", "road", "avenue", "lane", "block", "city", "town", "village"];

const SCHOOL_CUES: &[&str] =
    &["school", "university", "academy", "college", "kindergarten", "institute"];

const HONORIFICS: &[&str] = &["mr", "mrs", "ms", "miss", "dr", "prof"];

/// Context words that mark a number as identifier-like rather than
/// mathematical ("Room 50", "Class 3", "call 138...").
const NUMERIC_ID_CUES: &[&str] =
    &["room", "no", "id", "class", "grade", "phone", "tel", "call", "zip", "code"];

const MATH_VERBS: &[&str] = &["equals", "plus", "minus", "times", "divided"];

const PHONE_SEPARATORS: &[char] = &['-', '(', ')', '.', '/'];

static EMAIL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").expect("email regex")
});

static HANDLE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)(@[A-Za-z0-9_]{3,})").expect("handle regex"));

/// How eagerly ambiguous entities are treated as PII.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggressiveness {
    Standard,
    Strict,
}

/// Detection configuration; `Strict` is the zero-trust sanitization setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionPolicy {
    pub aggressiveness: Aggressiveness,
    /// Token window used when classifying ambiguous numbers.
    pub numeric_context_window: usize,
    pub enabled_kinds: BTreeSet<PiiKind>,
}

impl DetectionPolicy {
    pub fn standard() -> Self {
        Self {
            aggressiveness: Aggressiveness::Standard,
            numeric_context_window: 3,
            enabled_kinds: PiiKind::ALL.into_iter().collect(),
        }
    }

    pub fn strict() -> Self {
        Self { aggressiveness: Aggressiveness::Strict, ..Self::standard() }
    }

    pub fn is_strict(&self) -> bool {
        self.aggressiveness == Aggressiveness::Strict
    }
}

impl Default for DetectionPolicy {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("failed to read gazetteer {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gazetteer is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown PII kind in gazetteer: {0}")]
    UnknownKind(String),
    #[error("gazetteer entry {canonical:?} under {kind} has no aliases")]
    EmptyAliases { kind: PiiKind, canonical: String },
    #[error("duplicate canonical value {value:?} under {kind}")]
    DuplicateCanonical { kind: PiiKind, value: String },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct GazetteerEntry {
    pub canonical: String,
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone)]
struct CompiledAlias {
    tokens: Vec<String>,
    kind: PiiKind,
}

/// Curated entity surface forms per kind, compiled for case-insensitive
/// token-sequence lookup.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: HashMap<PiiKind, Vec<GazetteerEntry>>,
    by_first_token: HashMap<String, Vec<CompiledAlias>>,
}

impl Gazetteer {
    pub fn from_entries(
        entries: HashMap<PiiKind, Vec<GazetteerEntry>>,
    ) -> Result<Self, GazetteerError> {
        let mut by_first_token: HashMap<String, Vec<CompiledAlias>> = HashMap::new();
        for (kind, list) in &entries {
            let mut seen = BTreeSet::new();
            for entry in list {
                if entry.canonical.trim().is_empty() || entry.aliases.iter().any(|a| a.trim().is_empty())
                {
                    return Err(GazetteerError::EmptyAliases {
                        kind: *kind,
                        canonical: entry.canonical.clone(),
                    });
                }
                if entry.aliases.is_empty() {
                    return Err(GazetteerError::EmptyAliases {
                        kind: *kind,
                        canonical: entry.canonical.clone(),
                    });
                }
                if !seen.insert(entry.canonical.to_lowercase()) {
                    return Err(GazetteerError::DuplicateCanonical {
                        kind: *kind,
                        value: entry.canonical.clone(),
                    });
                }
                for alias in &entry.aliases {
                    let tokens: Vec<String> =
                        tokenize(alias).iter().map(Token::lower_stem).collect();
                    if tokens.is_empty() {
                        return Err(GazetteerError::EmptyAliases {
                            kind: *kind,
                            canonical: entry.canonical.clone(),
                        });
                    }
                    by_first_token
                        .entry(tokens[0].clone())
                        .or_default()
                        .push(CompiledAlias { tokens, kind: *kind });
                }
            }
        }
        // longer aliases first so the longest surface wins at each anchor
        for aliases in by_first_token.values_mut() {
            aliases.sort_by(|a, b| {
                b.tokens.len().cmp(&a.tokens.len()).then(a.kind.priority().cmp(&b.kind.priority()))
            });
        }
        Ok(Self { entries, by_first_token })
    }

    pub fn from_json(json: &str) -> Result<Self, GazetteerError> {
        let raw: HashMap<String, Vec<GazetteerEntry>> = serde_json::from_str(json)?;
        let mut entries = HashMap::new();
        for (key, list) in raw {
            let kind: PiiKind = serde_json::from_value(serde_json::Value::String(key.clone()))
                .map_err(|_| GazetteerError::UnknownKind(key))?;
            entries.insert(kind, list);
        }
        Self::from_entries(entries)
    }

    pub fn entries(&self, kind: PiiKind) -> &[GazetteerEntry] {
        self.entries.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entry_count(&self, kind: PiiKind) -> usize {
        self.entries(kind).len()
    }
}

/// Load a gazetteer from a JSON file mapping kind names to entry lists.
pub fn load_gazetteer(path: &Path) -> Result<Gazetteer, GazetteerError> {
    let json = std::fs::read_to_string(path)
        .map_err(|source| GazetteerError::Io { path: path.display().to_string(), source })?;
    Gazetteer::from_json(&json)
}

/// The gazetteer shipped with the crate; synthetic entities only.
pub fn bundled_gazetteer() -> Gazetteer {
    static JSON: &str = include_str!("../data/gazetteer.json");
    Gazetteer::from_json(JSON).expect("bundled gazetteer is valid")
}

/// Verdict for a numeric token in context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericVerdict {
    MathQuantity,
    PossiblePii,
}

/// Immutable detector: gazetteer + policy + unit lexicon.
#[derive(Debug, Clone)]
pub struct PiiDetector {
    gazetteer: Gazetteer,
    policy: DetectionPolicy,
    units: UnitLexicon,
}

impl PiiDetector {
    pub fn new(gazetteer: Gazetteer, policy: DetectionPolicy) -> Self {
        Self { gazetteer, policy, units: UnitLexicon::default() }
    }

    pub fn with_units(mut self, units: UnitLexicon) -> Self {
        self.units = units;
        self
    }

    pub fn bundled(policy: DetectionPolicy) -> Self {
        Self::new(bundled_gazetteer(), policy)
    }

    pub fn policy(&self) -> &DetectionPolicy {
        &self.policy
    }

    pub fn units(&self) -> &UnitLexicon {
        &self.units
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    /// Locate PII spans: non-overlapping, sorted by start.
    pub fn detect(&self, text: &str) -> Vec<PiiSpan> {
        self.detect_with_extra(text, &[])
    }

    /// Detection with additional candidate spans merged in (for example
    /// from an external NER pre-pass). Extra spans can only add coverage,
    /// never remove it.
    pub fn detect_with_extra(&self, text: &str, extra: &[PiiSpan]) -> Vec<PiiSpan> {
        let chars: Vec<char> = text.chars().collect();
        let tokens = tokenize(text);
        let mut candidates = Vec::new();

        self.gazetteer_hits(text, &tokens, &mut candidates);
        self.phone_runs(text, &tokens, &mut candidates);
        self.regex_hits(text, &mut candidates);
        self.honorific_names(text, &chars, &tokens, &mut candidates);
        self.cue_spans(text, &chars, &tokens, &mut candidates);
        self.id_patterns(text, &tokens, &mut candidates);
        if self.policy.is_strict() {
            self.titlecase_runs(text, &chars, &tokens, &mut candidates);
        }
        candidates.extend(extra.iter().cloned());

        candidates.retain(|c| self.policy.enabled_kinds.contains(&c.kind) && !c.is_empty());
        resolve_overlaps(candidates)
    }

    /// Decide whether a numeric token is math or identifier-like.
    ///
    /// Operator, equality, unit or math-verb adjacency always wins; an
    /// identifier cue inside the context window marks the number as possible
    /// PII; with neither signal the strict policy stays conservative.
    pub fn classify_numeric(&self, text: &str, span: (usize, usize)) -> NumericVerdict {
        let tokens = tokenize(text);
        let Some(idx) = tokens.iter().position(|t| t.start == span.0 && t.end == span.1) else {
            return NumericVerdict::PossiblePii;
        };
        self.classify_numeric_token(&tokens, idx)
    }

    pub(crate) fn classify_numeric_token(&self, tokens: &[Token], idx: usize) -> NumericVerdict {
        if self.has_math_adjacency(tokens, idx) {
            return NumericVerdict::MathQuantity;
        }
        if self.has_id_cue(tokens, idx) {
            return NumericVerdict::PossiblePii;
        }
        if self.policy.is_strict() {
            NumericVerdict::PossiblePii
        } else {
            NumericVerdict::MathQuantity
        }
    }

    fn has_math_adjacency(&self, tokens: &[Token], idx: usize) -> bool {
        let neighbors = [idx.checked_sub(1), Some(idx + 1)];
        for n in neighbors.into_iter().flatten() {
            let Some(tok) = tokens.get(n) else { continue };
            match tok.kind {
                TokenKind::Symbol => {
                    let c = tok.text.chars().next().unwrap_or(' ');
                    if matches!(c, '+' | '-' | '*' | '/' | '=' | '<' | '>') {
                        return true;
                    }
                }
                TokenKind::Word => {
                    let lower = tok.lower();
                    if self.units.is_unit(&lower)
                        || self.units.is_unit(&tok.text)
                        || MATH_VERBS.contains(&lower.as_str())
                    {
                        return true;
                    }
                }
                TokenKind::Number => {}
            }
        }
        // a unit symbol such as "$" or "%" adjacent through the raw text
        if let Some(tok) = tokens.get(idx + 1) {
            if tok.kind == TokenKind::Symbol && self.units.is_unit(&tok.text) {
                return true;
            }
        }
        false
    }

    fn has_id_cue(&self, tokens: &[Token], idx: usize) -> bool {
        let window = self.policy.numeric_context_window.max(1);
        let significant: Vec<(usize, &Token)> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind != TokenKind::Symbol)
            .collect();
        let Some(pos) = significant.iter().position(|(i, _)| *i == idx) else {
            return false;
        };
        let lo = pos.saturating_sub(window);
        let hi = (pos + window).min(significant.len().saturating_sub(1));
        significant[lo..=hi]
            .iter()
            .any(|(_, t)| t.is_word() && NUMERIC_ID_CUES.contains(&t.lower_stem().as_str()))
    }

    fn gazetteer_hits(&self, text: &str, tokens: &[Token], out: &mut Vec<PiiSpan>) {
        let significant: Vec<&Token> =
            tokens.iter().filter(|t| t.kind != TokenKind::Symbol).collect();
        for (pos, tok) in significant.iter().enumerate() {
            let Some(aliases) = self.by_first_token().get(&tok.lower_stem()) else { continue };
            for alias in aliases {
                let end_pos = pos + alias.tokens.len();
                if end_pos > significant.len() {
                    continue;
                }
                let matches = significant[pos..end_pos]
                    .iter()
                    .zip(&alias.tokens)
                    .all(|(t, a)| t.lower_stem() == *a);
                if matches {
                    let start = significant[pos].start;
                    let end = significant[end_pos - 1].end;
                    out.push(make_span(text, start, end, alias.kind));
                }
            }
        }
    }

    fn by_first_token(&self) -> &HashMap<String, Vec<CompiledAlias>> {
        &self.gazetteer.by_first_token
    }

    /// Digit runs of seven or more, allowing common phone separators
    /// between groups.
    fn phone_runs(&self, text: &str, tokens: &[Token], out: &mut Vec<PiiSpan>) {
        let chars: Vec<char> = text.chars().collect();
        let digit_tokens: Vec<&Token> = tokens
            .iter()
            .filter(|t| t.is_number() && t.text.chars().all(|c| c.is_ascii_digit()))
            .collect();
        let mut i = 0;
        while i < digit_tokens.len() {
            let mut j = i;
            while j + 1 < digit_tokens.len() {
                let gap_start = digit_tokens[j].end;
                let gap_end = digit_tokens[j + 1].start;
                let joinable = chars[gap_start..gap_end]
                    .iter()
                    .all(|c| c.is_whitespace() || PHONE_SEPARATORS.contains(c));
                if joinable {
                    j += 1;
                } else {
                    break;
                }
            }
            let group: Vec<&&Token> = digit_tokens[i..=j].iter().collect();
            let digit_count: usize = group.iter().map(|t| t.text.len()).sum();
            let is_phone = if group.len() == 1 {
                digit_count >= 7
            } else {
                (7..=16).contains(&digit_count)
                    && group.iter().all(|t| (2..=6).contains(&t.text.len()))
            };
            if is_phone {
                out.push(make_span(text, group[0].start, group.last().unwrap().end, PiiKind::PhoneNumber));
            }
            i = j + 1;
        }
    }

    fn regex_hits(&self, text: &str, out: &mut Vec<PiiSpan>) {
        let byte_to_char = byte_to_char_index(text);
        for m in EMAIL_RE.find_iter(text) {
            out.push(make_span(text, byte_to_char[&m.start()], byte_to_char[&m.end()], PiiKind::ContactOther));
        }
        for caps in HANDLE_RE.captures_iter(text) {
            if let Some(m) = caps.get(1) {
                out.push(make_span(text, byte_to_char[&m.start()], byte_to_char[&m.end()], PiiKind::ContactOther));
            }
        }
    }

    fn honorific_names(&self, text: &str, chars: &[char], tokens: &[Token], out: &mut Vec<PiiSpan>) {
        for (i, tok) in tokens.iter().enumerate() {
            if !tok.is_word() || !HONORIFICS.contains(&tok.lower().trim_end_matches('.')) {
                continue;
            }
            // skip an optional "." after the honorific
            let mut next = i + 1;
            if tokens.get(next).is_some_and(|t| t.is_symbol('.')) {
                next += 1;
            }
            let mut last_name: Option<usize> = None;
            let mut prev_end = tokens[i].end;
            #[allow(clippy::needless_range_loop)]
            for j in next..tokens.len().min(next + 2) {
                let t = &tokens[j];
                if t.is_word()
                    && is_titlecase(&t.text)
                    && chars[prev_end..t.start].iter().all(|c| c.is_whitespace() || *c == '.')
                {
                    last_name = Some(j);
                    prev_end = t.end;
                } else {
                    break;
                }
            }
            if let Some(j) = last_name {
                out.push(make_span(text, tok.start, tokens[j].end, PiiKind::PersonName));
            }
        }
    }

    /// "<Titlecase>+ <cue>" → location or school, e.g. "Haidian District".
    fn cue_spans(&self, text: &str, chars: &[char], tokens: &[Token], out: &mut Vec<PiiSpan>) {
        for (i, tok) in tokens.iter().enumerate() {
            if !tok.is_word() {
                continue;
            }
            let stem = tok.lower_stem();
            let kind = if ADDRESS_CUES.contains(&stem.as_str()) {
                PiiKind::Location
            } else if SCHOOL_CUES.contains(&stem.as_str()) {
                PiiKind::SchoolName
            } else {
                continue;
            };
            let mut first = i;
            let mut cursor = i;
            while cursor > 0 {
                let prev = &tokens[cursor - 1];
                if prev.is_word()
                    && is_titlecase(&prev.text)
                    && gap_is_space(chars, prev.end, tokens[cursor].start)
                {
                    first = cursor - 1;
                    cursor -= 1;
                } else {
                    break;
                }
            }
            if first < i {
                out.push(make_span(text, tokens[first].start, tok.end, kind));
            }
        }
    }

    /// Uppercase short code + dash + digits, e.g. "SID-2024001".
    fn id_patterns(&self, text: &str, tokens: &[Token], out: &mut Vec<PiiSpan>) {
        for i in 0..tokens.len() {
            let Some(word) = tokens.get(i) else { continue };
            let is_code = word.is_word()
                && (2..=4).contains(&word.text.len())
                && word.text.chars().all(|c| c.is_ascii_uppercase());
            if !is_code {
                continue;
            }
            if tokens.get(i + 1).is_some_and(|t| t.is_symbol('-'))
                && tokens.get(i + 2).is_some_and(|t| t.is_number() && t.text.len() >= 4)
            {
                out.push(make_span(text, word.start, tokens[i + 2].end, PiiKind::IdNumber));
            }
        }
    }

    /// Strict policy: any run of two or more non-whitelisted titlecase
    /// tokens is a proper-noun candidate.
    fn titlecase_runs(&self, text: &str, chars: &[char], tokens: &[Token], out: &mut Vec<PiiSpan>) {
        let mut i = 0;
        while i < tokens.len() {
            let eligible = |t: &Token| {
                t.is_word()
                    && is_titlecase(&t.text)
                    && !PROPER_NOUN_WHITELIST.contains(&t.lower_stem().as_str())
            };
            if !eligible(&tokens[i]) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < tokens.len()
                && eligible(&tokens[j + 1])
                && gap_is_space(chars, tokens[j].end, tokens[j + 1].start)
            {
                j += 1;
            }
            if j > i {
                let run = &tokens[i..=j];
                let kind = if run.iter().any(|t| SCHOOL_CUES.contains(&t.lower_stem().as_str())) {
                    PiiKind::SchoolName
                } else if run.iter().any(|t| ADDRESS_CUES.contains(&t.lower_stem().as_str())) {
                    PiiKind::Location
                } else {
                    PiiKind::PersonName
                };
                out.push(make_span(text, tokens[i].start, tokens[j].end, kind));
            }
            i = j + 1;
        }
    }
}

fn make_span(text: &str, start: usize, end: usize, kind: PiiKind) -> PiiSpan {
    let surface = char_slice(text, start, end);
    let canonical = canonicalize_pii(kind, &surface);
    PiiSpan { start, end, kind, surface, canonical }
}

/// Longest span wins; equal lengths go leftmost, then by kind priority.
fn resolve_overlaps(mut candidates: Vec<PiiSpan>) -> Vec<PiiSpan> {
    candidates.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(a.start.cmp(&b.start))
            .then(a.kind.priority().cmp(&b.kind.priority()))
    });
    let mut accepted: Vec<PiiSpan> = Vec::new();
    for c in candidates {
        if !accepted.iter().any(|a| a.overlaps(&c)) {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|s| s.start);
    accepted.dedup_by(|a, b| a.start == b.start && a.end == b.end);
    accepted
}

/// Free-function form of [`PiiDetector::detect`] matching the module
/// contract.
pub fn detect_pii(text: &str, gazetteer: &Gazetteer, policy: &DetectionPolicy) -> Vec<PiiSpan> {
    PiiDetector::new(gazetteer.clone(), policy.clone()).detect(text)
}

/// Free-function form of [`PiiDetector::classify_numeric`].
pub fn classify_ambiguous_numeric(
    text: &str,
    span: (usize, usize),
    gazetteer: &Gazetteer,
    policy: &DetectionPolicy,
) -> NumericVerdict {
    PiiDetector::new(gazetteer.clone(), policy.clone()).classify_numeric(text, span)
}

fn byte_to_char_index(text: &str) -> HashMap<usize, usize> {
    let mut map = HashMap::new();
    for (char_idx, (byte_idx, _)) in text.char_indices().enumerate() {
        map.insert(byte_idx, char_idx);
    }
    map.insert(text.len(), text.chars().count());
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn detector(policy: DetectionPolicy) -> PiiDetector {
        PiiDetector::bundled(policy)
    }

    #[test]
    fn detects_location_cue() {
        let spans = detector(DetectionPolicy::standard()).detect("I live in Haidian District");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "Haidian District");
        assert_eq!(spans[0].kind, PiiKind::Location);
    }

    #[test]
    fn clean_equation_has_no_spans() {
        for policy in [DetectionPolicy::standard(), DetectionPolicy::strict()] {
            assert!(detector(policy).detect("x + 5 = 10").is_empty());
        }
    }

    #[test]
    fn detects_phone_run() {
        let spans = detector(DetectionPolicy::standard()).detect("call me at 13800138000");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, PiiKind::PhoneNumber);
        // oracle: the surface must contain at least 7 consecutive digits
        let digits: String = spans[0].surface.chars().filter(char::is_ascii_digit).collect();
        assert!(digits.len() >= 7, "phone rule requires 7+ digits");
    }

    #[test]
    fn detects_separated_phone() {
        let spans = detector(DetectionPolicy::standard()).detect("dial (138) 0013-8000 now");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].canonical, "13800138000");
    }

    #[test]
    fn short_numbers_are_not_phones() {
        assert!(detector(DetectionPolicy::standard()).detect("add 123 and 4567").is_empty());
    }

    #[test]
    fn detects_email_and_handle() {
        let spans = detector(DetectionPolicy::standard()).detect("mail lee@example.com or @lee_2024");
        assert_eq!(spans.len(), 2);
        assert!(spans.iter().all(|s| s.kind == PiiKind::ContactOther));
    }

    #[test]
    fn detects_honorific_name() {
        let spans = detector(DetectionPolicy::standard()).detect("ask Mr. Zhou about it");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "Mr. Zhou");
        assert_eq!(spans[0].kind, PiiKind::PersonName);
    }

    #[test]
    fn strict_masks_capitalized_run() {
        let spans = detector(DetectionPolicy::strict()).detect("met Nora Vale yesterday");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "Nora Vale");
    }

    #[test]
    fn standard_ignores_unknown_capitalized_run() {
        // not in the gazetteer, no cue words
        let spans = detector(DetectionPolicy::standard()).detect("met Zzyx Qwop yesterday");
        assert!(spans.is_empty());
    }

    #[test]
    fn whitelist_keeps_geometry_words() {
        let spans = detector(DetectionPolicy::strict()).detect("Triangle ABC with side AB=5");
        assert!(spans.is_empty(), "{spans:?}");
    }

    #[test]
    fn whitelisted_prefix_does_not_join_run() {
        let spans = detector(DetectionPolicy::strict()).detect("User Alice Chen asks a question");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "Alice Chen");
    }

    #[test]
    fn gazetteer_hits_ignore_case() {
        let spans = detector(DetectionPolicy::standard()).detect("i met alice chen today");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, PiiKind::PersonName);
    }

    #[test]
    fn detects_id_pattern() {
        let spans = detector(DetectionPolicy::standard()).detect("my id is SID-2024001");
        assert!(spans.iter().any(|s| s.kind == PiiKind::IdNumber));
    }

    #[test]
    fn spans_are_sorted_and_disjoint() {
        let spans = detector(DetectionPolicy::strict())
            .detect("My name is Alice Chen, call 13800138000, I study at Sunrise Middle School in Haidian District.");
        for w in spans.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        let kinds: Vec<PiiKind> = spans.iter().map(|s| s.kind).collect();
        assert!(kinds.contains(&PiiKind::PersonName));
        assert!(kinds.contains(&PiiKind::PhoneNumber));
        assert!(kinds.contains(&PiiKind::SchoolName));
        assert!(kinds.contains(&PiiKind::Location));
    }

    #[test]
    fn classify_room_number_strict() {
        let det = detector(DetectionPolicy::strict());
        let text = "Room 50";
        assert_eq!(det.classify_numeric(text, (5, 7)), NumericVerdict::PossiblePii);
    }

    #[test]
    fn classify_operator_adjacency_wins() {
        let det = detector(DetectionPolicy::strict());
        let text = "x + 50 = 10";
        assert_eq!(det.classify_numeric(text, (4, 6)), NumericVerdict::MathQuantity);
    }

    #[test]
    fn classify_mixed_sentence() {
        // frozen fixture: hand-applied window rule; the first 50 is cue-flagged,
        // the second is operator-adjacent
        let det = detector(DetectionPolicy::strict());
        let text = "meet in Room 50 to solve x + 50";
        let tokens: Vec<(usize, usize)> = tokenize(text)
            .into_iter()
            .filter(|t| t.is_number())
            .map(|t| (t.start, t.end))
            .collect();
        assert_eq!(det.classify_numeric(text, tokens[0]), NumericVerdict::PossiblePii);
        assert_eq!(det.classify_numeric(text, tokens[1]), NumericVerdict::MathQuantity);
    }

    #[test]
    fn classify_bare_number_depends_on_policy() {
        let text = "a student has 5 apples";
        let strict = detector(DetectionPolicy::strict());
        let standard = detector(DetectionPolicy::standard());
        assert_eq!(strict.classify_numeric(text, (14, 15)), NumericVerdict::PossiblePii);
        assert_eq!(standard.classify_numeric(text, (14, 15)), NumericVerdict::MathQuantity);
    }

    #[test]
    fn classify_unit_adjacency() {
        let det = detector(DetectionPolicy::strict());
        let text = "travels 120 km today";
        assert_eq!(det.classify_numeric(text, (8, 11)), NumericVerdict::MathQuantity);
    }

    #[test]
    fn bundled_gazetteer_is_well_formed() {
        let gaz = bundled_gazetteer();
        for kind in PiiKind::ALL {
            assert!(
                gaz.entry_count(kind) >= 50,
                "bundled gazetteer has {} entries for {kind}",
                gaz.entry_count(kind)
            );
        }
    }

    #[test]
    fn gazetteer_rejects_unknown_kind() {
        let err = Gazetteer::from_json(r#"{"favorite_color": []}"#).unwrap_err();
        assert!(matches!(err, GazetteerError::UnknownKind(_)));
    }

    #[test]
    fn gazetteer_rejects_empty_aliases() {
        let err = Gazetteer::from_json(r#"{"person_name": [{"canonical": "A B", "aliases": []}]}"#)
            .unwrap_err();
        assert!(matches!(err, GazetteerError::EmptyAliases { .. }));
    }

    #[test]
    fn gazetteer_rejects_duplicate_canonicals() {
        let json = r#"{"person_name": [
            {"canonical": "A B", "aliases": ["A B"]},
            {"canonical": "a b", "aliases": ["a b"]}
        ]}"#;
        let err = Gazetteer::from_json(json).unwrap_err();
        assert!(matches!(err, GazetteerError::DuplicateCanonical { .. }));
    }

    #[test]
    fn extra_spans_are_additive() {
        let det = detector(DetectionPolicy::standard());
        let text = "met Zzyx Qwop yesterday";
        assert!(det.detect(text).is_empty());
        let extra = PiiSpan {
            start: 4,
            end: 13,
            kind: PiiKind::PersonName,
            surface: "Zzyx Qwop".into(),
            canonical: "zzyx qwop".into(),
        };
        let spans = det.detect_with_extra(text, std::slice::from_ref(&extra));
        assert_eq!(spans.len(), 1);
    }

    #[test]
    fn determinism() {
        let det = detector(DetectionPolicy::strict());
        let text = "Alice Chen lives in Haidian District, call 13800138000.";
        assert_eq!(det.detect(text), det.detect(text));
    }
}
