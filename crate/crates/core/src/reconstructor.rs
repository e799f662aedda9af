//! The context reconstruction stream: extract a PII-free structured math
//! context from raw input, through a deterministic grammar or a prompted
//! completion backend, always post-filtered for leaks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectionPolicy, NumericVerdict, PiiDetector};
use crate::llm::{CompletionBackend, CompletionRequest, LlmError};
use crate::model::{
    parse_supplement_items, MathContext, Quantity, Relation, RelationKind,
};
use crate::text::{char_slice, split_sentences, tokenize, Token, TokenKind};
use crate::units::UnitLexicon;

pub const SUPPLEMENT_HEADER: &str = "Context Supplement: ";

/// Schema constraints for reconstructed contexts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextSchema {
    pub version: String,
    pub max_variables: usize,
    pub max_quantities: usize,
    pub max_relations: usize,
    /// Accepted unit tokens.
    pub units: Vec<String>,
}

impl Default for ContextSchema {
    fn default() -> Self {
        Self {
            version: "1".into(),
            max_variables: 32,
            max_quantities: 32,
            max_relations: 32,
            units: crate::units::DEFAULT_UNITS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ContextSchema {
    /// JSON shape description embedded into reconstruction prompts.
    pub fn describe(&self) -> String {
        format!(
            concat!(
                "{{\"variables\": [string], ",
                "\"quantities\": [{{\"value\": decimal-string, \"unit\"?: string, \"label\"?: string}}], ",
                "\"relations\": [expression-string], \"target\": string}} ",
                "with at most {} variables, {} quantities, {} relations; ",
                "relations must contain an operator (+ - * / = < >); ",
                "units limited to [{}]"
            ),
            self.max_variables,
            self.max_quantities,
            self.max_relations,
            self.units.join(", ")
        )
    }

    fn check_limits(&self, ctx: &MathContext) -> Result<(), SchemaError> {
        if ctx.variables.len() > self.max_variables {
            return Err(SchemaError::LimitExceeded {
                field: "variables",
                max: self.max_variables,
                got: ctx.variables.len(),
            });
        }
        if ctx.quantities.len() > self.max_quantities {
            return Err(SchemaError::LimitExceeded {
                field: "quantities",
                max: self.max_quantities,
                got: ctx.quantities.len(),
            });
        }
        if ctx.relations.len() > self.max_relations {
            return Err(SchemaError::LimitExceeded {
                field: "relations",
                max: self.max_relations,
                got: ctx.relations.len(),
            });
        }
        Ok(())
    }
}

/// Machine-readable schema violations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("response is not valid JSON at line {line}, column {column}")]
    Parse { line: usize, column: usize },
    #[error("response is not a JSON object")]
    NotAnObject,
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing key {0:?}")]
    MissingKey(&'static str),
    #[error("field {field}: expected {expected}")]
    InvalidField { field: &'static str, expected: &'static str },
    #[error("invalid quantity value {0:?}")]
    InvalidValue(String),
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("{field} limit exceeded: {got} > {max}")]
    LimitExceeded { field: &'static str, max: usize, got: usize },
}

/// Question-cue phrases, longest first so "how many" wins over "how".
const TARGET_CUES: &[&[&str]] = &[
    &["how", "many"],
    &["how", "much"],
    &["how", "far"],
    &["how", "long"],
    &["what", "is"],
    &["solve", "for"],
    &["solve"],
    &["find"],
    &["calculate"],
];

/// Whole-text phrase triggers, checked in order: the first trigger present
/// in clean text with exactly two free quantities emits its relation.
const PHRASE_TRIGGERS: &[(&str, &str, &str)] = &[
    ("among", "each", "/"),
    ("taken", "left", "-"),
    ("more", "total", "+"),
    ("travels", "speed", "/"),
    ("per", "total", "*"),
    ("costs", "total", "+"),
    ("each", "total", "*"),
];

/// Deterministic parser plus LLM-backed reconstruction with schema
/// validation and leak filtering.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    strict_detector: PiiDetector,
    standard_detector: PiiDetector,
    schema: ContextSchema,
}

impl Reconstructor {
    pub fn new(strict_detector: PiiDetector, schema: ContextSchema) -> Self {
        let standard_detector = PiiDetector::new(
            strict_detector.gazetteer().clone(),
            DetectionPolicy {
                aggressiveness: crate::detector::Aggressiveness::Standard,
                ..strict_detector.policy().clone()
            },
        )
        .with_units(strict_detector.units().clone());
        Self { strict_detector, standard_detector, schema }
    }

    pub fn bundled() -> Self {
        Self::new(PiiDetector::bundled(DetectionPolicy::strict()), ContextSchema::default())
    }

    pub fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    fn units(&self) -> &UnitLexicon {
        self.standard_detector.units()
    }

    /// Grammar-based extraction. Complete on the bundled synthetic corpus,
    /// best effort on free text; sentences containing detected PII
    /// contribute nothing.
    pub fn reconstruct_deterministic(&self, text: &str) -> MathContext {
        if text.is_empty() {
            return MathContext::default();
        }
        // A fused message carries its own structured section; that section
        // is the authoritative context.
        if let Some(ctx) = parse_supplement(text) {
            return self.clamp(ctx);
        }

        let spans = self.strict_detector.detect(text);
        let tokens = tokenize(text);
        let mut state = ParseState::default();

        for (s_start, s_end) in split_sentences(text) {
            let tainted =
                spans.iter().any(|sp| sp.start < s_end && s_start < sp.end);
            if tainted {
                continue;
            }
            let idx: Vec<usize> = tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.start >= s_start && t.end <= s_end)
                .map(|(i, _)| i)
                .collect();
            self.parse_sentence(text, &tokens, &idx, s_start, s_end, &mut state);
        }

        self.apply_phrase_triggers(&mut state);

        let ctx = MathContext::new(state.variables, state.quantities, state.relations, state.target);
        self.clamp(ctx)
    }

    fn clamp(&self, mut ctx: MathContext) -> MathContext {
        ctx.variables.truncate(self.schema.max_variables);
        ctx.quantities.truncate(self.schema.max_quantities);
        ctx.relations.truncate(self.schema.max_relations);
        ctx
    }

    fn parse_sentence(
        &self,
        text: &str,
        tokens: &[Token],
        idx: &[usize],
        s_start: usize,
        s_end: usize,
        state: &mut ParseState,
    ) {
        let mut claimed = vec![false; idx.len()];

        self.geometry_phrases(text, tokens, idx, &mut claimed, state);
        self.equations(tokens, idx, &mut claimed, state);
        self.unit_quantities(tokens, idx, &mut claimed, state);
        self.bare_quantities(tokens, idx, &claimed, state);
        self.ratio_phrases(tokens, idx, &mut claimed, state);
        self.sentence_target(text, tokens, idx, s_start, s_end, state);

        state.trigger_words.extend(
            idx.iter().map(|&i| &tokens[i]).filter(|t| t.is_word()).map(Token::lower_stem),
        );
    }

    fn geometry_phrases(
        &self,
        _text: &str,
        tokens: &[Token],
        idx: &[usize],
        claimed: &mut [bool],
        state: &mut ParseState,
    ) {
        let mut pos = 0;
        while pos < idx.len() {
            if claimed[pos] {
                pos += 1;
                continue;
            }
            let tok = &tokens[idx[pos]];
            let lower = tok.lower();
            if lower == "triangle" && pos + 1 < idx.len() {
                let id = &tokens[idx[pos + 1]];
                if is_geometry_id(id, 2, 4) {
                    state.variables.push(format!("Triangle {}", id.text));
                    claimed[pos] = true;
                    claimed[pos + 1] = true;
                    pos += 2;
                    continue;
                }
            }
            if (lower == "side" || lower == "angle") && pos + 2 < idx.len() {
                let id = &tokens[idx[pos + 1]];
                if is_geometry_id(id, 1, 3) {
                    // optional "=" or "is" between the identifier and value
                    let mut value_pos = pos + 2;
                    let connector = &tokens[idx[value_pos]];
                    if connector.is_symbol('=') || connector.lower() == "is" {
                        value_pos += 1;
                    }
                    if value_pos < idx.len() && tokens[idx[value_pos]].is_number() {
                        let value = &tokens[idx[value_pos]].text;
                        let cue = if lower == "side" { "Side" } else { "Angle" };
                        if let Some(q) = Quantity::with_label(value, &format!("{cue} {}", id.text)) {
                            state.quantities.push(q);
                        }
                        if let Some(rel) =
                            Relation::new(RelationKind::Equation, &format!("{} = {}", id.text, value))
                        {
                            state.relations.push(rel);
                        }
                        claimed[pos..=value_pos].fill(true);
                        pos = value_pos + 1;
                        continue;
                    }
                }
            }
            pos += 1;
        }
    }

    /// Maximal runs shaped `operand (op operand)* (=|<|>) operand (op operand)*`.
    fn equations(&self, tokens: &[Token], idx: &[usize], claimed: &mut [bool], state: &mut ParseState) {
        let mut pos = 0;
        while pos < idx.len() {
            if claimed[pos] || !is_operand(&tokens[idx[pos]]) {
                pos += 1;
                continue;
            }
            // walk the longest alternating operand/operator run
            let mut end = pos;
            let mut has_comparator = false;
            let mut cursor = pos;
            loop {
                let op_pos = cursor + 1;
                let val_pos = cursor + 2;
                if val_pos >= idx.len() || claimed[op_pos] || claimed[val_pos] {
                    break;
                }
                let op = &tokens[idx[op_pos]];
                let operand = &tokens[idx[val_pos]];
                let is_op = op.kind == TokenKind::Symbol
                    && matches!(op.text.as_str(), "+" | "-" | "*" | "/" | "=" | "<" | ">");
                if !is_op || !is_operand(operand) {
                    break;
                }
                if matches!(op.text.as_str(), "=" | "<" | ">") {
                    if has_comparator {
                        break; // one comparator per relation
                    }
                    has_comparator = true;
                }
                end = val_pos;
                cursor = val_pos;
            }
            if has_comparator && end > pos {
                let parts: Vec<String> = (pos..=end)
                    .map(|p| {
                        let t = &tokens[idx[p]];
                        if t.is_number() {
                            crate::numeric::normalize_decimal(&t.text).unwrap_or_else(|| t.text.clone())
                        } else {
                            t.text.clone()
                        }
                    })
                    .collect();
                let expression = parts.join(" ");
                let kind = if expression.contains('=') {
                    RelationKind::Equation
                } else {
                    RelationKind::Inequality
                };
                if let Some(rel) = Relation::new(kind, &expression) {
                    state.relations.push(rel);
                }
                for p in pos..=end {
                    let t = &tokens[idx[p]];
                    if t.is_number() {
                        if let Some(q) = Quantity::new(&t.text) {
                            state.equation_quantities.push(q);
                        }
                    } else if t.is_word() && is_lower_var(t) {
                        state.variables.push(t.text.clone());
                    }
                    claimed[p] = true;
                }
                pos = end + 1;
            } else {
                pos += 1;
            }
        }
    }

    fn unit_quantities(&self, tokens: &[Token], idx: &[usize], claimed: &mut [bool], state: &mut ParseState) {
        let mut pos = 0;
        while pos < idx.len() {
            if claimed[pos] || !tokens[idx[pos]].is_number() {
                pos += 1;
                continue;
            }
            let Some(next) = idx.get(pos + 1) else { break };
            if claimed[pos + 1] {
                pos += 1;
                continue;
            }
            let unit_tok = &tokens[*next];
            let unit_text = if unit_tok.is_word() { unit_tok.lower() } else { unit_tok.text.clone() };
            if self.units().is_unit(&unit_text) {
                if let Some(q) = Quantity::with_unit(&tokens[idx[pos]].text, &unit_text) {
                    state.free_quantities.push((tokens[idx[pos]].start, q));
                }
                claimed[pos] = true;
                claimed[pos + 1] = true;
                pos += 2;
            } else {
                pos += 1;
            }
        }
    }

    fn bare_quantities(&self, tokens: &[Token], idx: &[usize], claimed: &[bool], state: &mut ParseState) {
        for (p, &i) in idx.iter().enumerate() {
            if claimed[p] || !tokens[i].is_number() {
                continue;
            }
            // identifier-cue-adjacent numbers are excluded (standard policy:
            // operator adjacency wins, cue flags, neither defaults to math)
            if self.standard_detector.classify_numeric_token(tokens, i) == NumericVerdict::PossiblePii
            {
                continue;
            }
            if let Some(q) = Quantity::new(&tokens[i].text) {
                state.free_quantities.push((tokens[i].start, q));
            }
        }
    }

    /// "y is twice ... x" / "y is half of ... x" become ratio relations.
    fn ratio_phrases(&self, tokens: &[Token], idx: &[usize], claimed: &mut [bool], state: &mut ParseState) {
        for (p, &i) in idx.iter().enumerate() {
            if claimed[p] || !tokens[i].is_word() {
                continue;
            }
            let lower = tokens[i].lower();
            let factor = match lower.as_str() {
                "twice" => Some("y = 2 * x"),
                "half" => Some("y = x / 2"),
                _ => None,
            };
            let Some(_) = factor else { continue };
            let left = idx[..p]
                .iter()
                .rev()
                .map(|&j| &tokens[j])
                .find(|t| is_lower_var(t));
            let right = idx[p + 1..]
                .iter()
                .map(|&j| &tokens[j])
                .find(|t| is_lower_var(t));
            if let (Some(l), Some(r)) = (left, right) {
                let expression = if lower == "twice" {
                    format!("{} = 2 * {}", l.text, r.text)
                } else {
                    format!("{} = {} / 2", l.text, r.text)
                };
                if let Some(rel) = Relation::new(RelationKind::OperationPhrase, &expression) {
                    state.relations.push(rel);
                }
                state.variables.push(l.text.clone());
                state.variables.push(r.text.clone());
                claimed[p] = true;
            }
        }
    }

    fn sentence_target(
        &self,
        text: &str,
        tokens: &[Token],
        idx: &[usize],
        _s_start: usize,
        s_end: usize,
        state: &mut ParseState,
    ) {
        if state.target.is_some() {
            return;
        }
        let words: Vec<(usize, String)> = idx
            .iter()
            .map(|&i| &tokens[i])
            .filter(|t| t.is_word())
            .map(|t| (t.start, t.lower()))
            .collect();
        for cue in TARGET_CUES {
            for w in 0..words.len() {
                if w + cue.len() > words.len() {
                    break;
                }
                if words[w..w + cue.len()].iter().map(|(_, t)| t.as_str()).eq(cue.iter().copied()) {
                    let cue_start = words[w].0;
                    // cut at the first colon after the cue, else sentence end
                    let colon = idx
                        .iter()
                        .map(|&i| &tokens[i])
                        .find(|t| t.is_symbol(':') && t.start >= cue_start)
                        .map(|t| t.start)
                        .unwrap_or(s_end);
                    let raw = char_slice(text, cue_start, colon);
                    let trimmed = raw.trim_end_matches(['.', '?', '!', ',', ' ']).to_lowercase();
                    if !trimmed.is_empty() {
                        state.target = Some(trimmed);
                    }
                    return;
                }
            }
        }
    }

    fn apply_phrase_triggers(&self, state: &mut ParseState) {
        if state.free_quantities.len() == 2 {
            for (trigger, lhs, op) in PHRASE_TRIGGERS {
                if state.trigger_words.iter().any(|w| w == trigger) {
                    let mut ordered = state.free_quantities.clone();
                    ordered.sort_by_key(|(start, _)| *start);
                    let expression =
                        format!("{lhs} = {} {op} {}", ordered[0].1.value, ordered[1].1.value);
                    if let Some(rel) = Relation::new(RelationKind::Equation, &expression) {
                        state.relations.push(rel);
                    }
                    break;
                }
            }
        }
        state
            .quantities
            .extend(state.free_quantities.iter().map(|(_, q)| q.clone()));
        state.quantities.extend(state.equation_quantities.iter().cloned());
    }

    /// Remove detector hits from every text field of a context. Offending
    /// tokens are dropped; relations emptied by removal are dropped whole.
    pub fn leak_filter(&self, ctx: &MathContext) -> MathContext {
        let mut variables = Vec::new();
        for var in &ctx.variables {
            let cleaned = self.scrub_field(var);
            if !cleaned.is_empty() {
                variables.push(cleaned);
            }
        }
        let mut quantities = Vec::new();
        for q in &ctx.quantities {
            if self.field_has_hit(&q.value) {
                continue;
            }
            let unit = q.unit.as_deref().map(|u| self.scrub_field(u)).filter(|u| !u.is_empty());
            let label = q.label.as_deref().map(|l| self.scrub_field(l)).filter(|l| !l.is_empty());
            quantities.push(Quantity { value: q.value.clone(), unit, label });
        }
        let mut relations = Vec::new();
        for rel in &ctx.relations {
            let cleaned = self.scrub_field(&rel.expression);
            if let Some(r) = Relation::new(rel.kind, &cleaned) {
                relations.push(r);
            }
        }
        let target = ctx
            .target
            .as_deref()
            .map(|t| trim_dangling_words(&self.scrub_field(t)))
            .filter(|t| !t.is_empty());
        self.clamp(MathContext::new(variables, quantities, relations, target))
    }

    fn field_has_hit(&self, field: &str) -> bool {
        !self.strict_detector.detect(field).is_empty()
    }

    fn scrub_field(&self, field: &str) -> String {
        let mut current = field.to_string();
        for _ in 0..3 {
            let spans = self.strict_detector.detect(&current);
            if spans.is_empty() {
                break;
            }
            let chars: Vec<char> = current.chars().collect();
            let mut out = String::new();
            let mut cursor = 0;
            for span in &spans {
                out.extend(chars[cursor..span.start].iter());
                cursor = span.end;
            }
            out.extend(chars[cursor..].iter());
            current = out.split_whitespace().collect::<Vec<_>>().join(" ");
        }
        current
    }

    /// Prompted reconstruction: schema-validated, leak-filtered, with one
    /// repair retry and a deterministic fallback.
    pub fn reconstruct_llm(
        &self,
        text: &str,
        backend: &dyn CompletionBackend,
        prompt: &PromptConfig,
    ) -> LlmReconstruction {
        let rendered = prompt.render(&self.schema, text);
        match self.try_llm_once(&rendered, None, backend) {
            Ok(ctx) => self.finish_llm(ctx, false, None),
            Err(first_err) => {
                let repair = format!(
                    "{rendered}\n\nYour previous reply was invalid ({first_err}). \
                     Reply with exactly one JSON object matching the schema and nothing else."
                );
                match self.try_llm_once(&repair, Some(&rendered), backend) {
                    Ok(ctx) => self.finish_llm(ctx, false, None),
                    Err(second_err) => LlmReconstruction {
                        context: self.leak_filter(&self.reconstruct_deterministic(text)),
                        degraded: true,
                        degradation: Some(second_err.to_string()),
                    },
                }
            }
        }
    }

    fn try_llm_once(
        &self,
        prompt: &str,
        _original: Option<&str>,
        backend: &dyn CompletionBackend,
    ) -> Result<MathContext, LlmAttemptError> {
        let request = CompletionRequest::reconstruction(prompt);
        let response = backend.complete(&request).map_err(LlmAttemptError::Backend)?;
        validate_schema(&response, &self.schema).map_err(LlmAttemptError::Schema)
    }

    fn finish_llm(
        &self,
        ctx: MathContext,
        degraded: bool,
        degradation: Option<String>,
    ) -> LlmReconstruction {
        LlmReconstruction { context: self.leak_filter(&ctx), degraded, degradation }
    }
}

#[derive(Debug, Error)]
enum LlmAttemptError {
    #[error("backend error: {0}")]
    Backend(LlmError),
    #[error("schema violation: {0}")]
    Schema(SchemaError),
}

/// Outcome of the LLM reconstruction path.
#[derive(Debug, Clone)]
pub struct LlmReconstruction {
    pub context: MathContext,
    /// True when the pipeline fell back to the deterministic parser.
    pub degraded: bool,
    pub degradation: Option<String>,
}

#[derive(Debug, Default)]
struct ParseState {
    variables: Vec<String>,
    quantities: Vec<Quantity>,
    /// Quantities outside equations and labeled phrases, with text order.
    free_quantities: Vec<(usize, Quantity)>,
    equation_quantities: Vec<Quantity>,
    relations: Vec<Relation>,
    target: Option<String>,
    trigger_words: Vec<String>,
}

fn is_geometry_id(token: &Token, min: usize, max: usize) -> bool {
    token.is_word()
        && (min..=max).contains(&token.text.chars().count())
        && token.text.chars().all(|c| c.is_ascii_uppercase())
}

fn is_lower_var(token: &Token) -> bool {
    token.is_word()
        && token.text.chars().count() == 1
        && token.text.chars().all(|c| c.is_ascii_lowercase())
}

fn is_operand(token: &Token) -> bool {
    match token.kind {
        TokenKind::Number => true,
        TokenKind::Word => {
            let len = token.text.chars().count();
            let all_upper = token.text.chars().all(|c| c.is_ascii_uppercase());
            let coefficient_var = len >= 2
                && token.text.chars().rev().skip(1).all(|c| c.is_ascii_digit())
                && token.text.chars().last().is_some_and(|c| c.is_ascii_lowercase());
            is_lower_var(token) || ((2..=3).contains(&len) && all_upper) || coefficient_var
        }
        TokenKind::Symbol => false,
    }
}

fn trim_dangling_words(s: &str) -> String {
    const DANGLING: &[&str] = &["from", "to", "of", "at", "in", "for", "the", "a", "an", "and"];
    let mut words: Vec<&str> = s.split_whitespace().collect();
    while let Some(last) = words.last() {
        if DANGLING.contains(&last.to_lowercase().as_str()) {
            words.pop();
        } else {
            break;
        }
    }
    words.join(" ")
}

/// Parse the structured section out of a fused message, if present.
pub fn parse_supplement(text: &str) -> Option<MathContext> {
    let header_at = text.rfind(SUPPLEMENT_HEADER)?;
    let after = &text[header_at + SUPPLEMENT_HEADER.len()..];
    let open = after.find('{')?;
    let close = after.rfind('}')?;
    if close <= open {
        return None;
    }
    Some(parse_supplement_items(&after[open + 1..close]))
}

/// Validate a backend response against the context schema.
///
/// Accepts one JSON object with exactly the keys `variables`, `quantities`,
/// `relations`, `target`; everything else is a distinct, machine-readable
/// error.
pub fn validate_schema(response: &str, schema: &ContextSchema) -> Result<MathContext, SchemaError> {
    let value: serde_json::Value = serde_json::from_str(response.trim())
        .map_err(|e| SchemaError::Parse { line: e.line(), column: e.column() })?;
    let obj = value.as_object().ok_or(SchemaError::NotAnObject)?;

    for key in obj.keys() {
        if !matches!(key.as_str(), "variables" | "quantities" | "relations" | "target") {
            return Err(SchemaError::UnknownKey(key.clone()));
        }
    }

    let variables_v = obj.get("variables").ok_or(SchemaError::MissingKey("variables"))?;
    let quantities_v = obj.get("quantities").ok_or(SchemaError::MissingKey("quantities"))?;
    let relations_v = obj.get("relations").ok_or(SchemaError::MissingKey("relations"))?;
    let target_v = obj.get("target").ok_or(SchemaError::MissingKey("target"))?;

    let variables: Vec<String> = variables_v
        .as_array()
        .ok_or(SchemaError::InvalidField { field: "variables", expected: "array of strings" })?
        .iter()
        .map(|v| {
            v.as_str().map(str::to_string).ok_or(SchemaError::InvalidField {
                field: "variables",
                expected: "array of strings",
            })
        })
        .collect::<Result<_, _>>()?;

    let mut quantities = Vec::new();
    for q in quantities_v
        .as_array()
        .ok_or(SchemaError::InvalidField { field: "quantities", expected: "array of objects" })?
    {
        let qo = q
            .as_object()
            .ok_or(SchemaError::InvalidField { field: "quantities", expected: "array of objects" })?;
        for key in qo.keys() {
            if !matches!(key.as_str(), "value" | "unit" | "label") {
                return Err(SchemaError::UnknownKey(format!("quantities.{key}")));
            }
        }
        let raw_value = match qo.get("value") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(SchemaError::MissingKey("value")),
        };
        let value = crate::numeric::normalize_decimal(&raw_value)
            .ok_or_else(|| SchemaError::InvalidValue(raw_value.clone()))?;
        let field_str = |name: &'static str| -> Result<Option<String>, SchemaError> {
            match qo.get(name) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(SchemaError::InvalidField { field: "quantities", expected: "string fields" }),
            }
        };
        let unit = field_str("unit")?;
        if let Some(u) = &unit {
            if !schema.units.iter().any(|known| known == u) {
                return Err(SchemaError::UnknownUnit(u.clone()));
            }
        }
        quantities.push(Quantity { value, unit, label: field_str("label")? });
    }

    let relations: Vec<Relation> = relations_v
        .as_array()
        .ok_or(SchemaError::InvalidField { field: "relations", expected: "array of strings" })?
        .iter()
        .map(|v| {
            v.as_str().ok_or(SchemaError::InvalidField {
                field: "relations",
                expected: "array of strings",
            })
        })
        .collect::<Result<Vec<&str>, _>>()?
        .into_iter()
        .filter_map(Relation::infer)
        .collect();

    let target = match target_v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) if s.is_empty() => None,
        serde_json::Value::String(s) => Some(s.clone()),
        _ => return Err(SchemaError::InvalidField { field: "target", expected: "string" }),
    };

    let ctx = MathContext::new(variables, quantities, relations, target);
    schema.check_limits(&ctx)?;
    Ok(ctx)
}

/// Versioned prompt template with `{{schema}}` and `{{input}}` slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptConfig {
    pub version: String,
    pub template: String,
}

impl PromptConfig {
    pub fn bundled() -> Self {
        static TEMPLATE: &str = include_str!("../data/prompt_default.txt");
        Self { version: "1".into(), template: TEMPLATE.to_string() }
    }

    pub fn from_file(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(Self { version: format!("file:{}", path.display()), template: std::fs::read_to_string(path)? })
    }

    pub fn render(&self, schema: &ContextSchema, input: &str) -> String {
        self.template.replace("{{schema}}", &schema.describe()).replace("{{input}}", input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_serialize, contexts_equal};

    fn reconstructor() -> Reconstructor {
        Reconstructor::bundled()
    }

    #[test]
    fn geometry_paper_example() {
        let ctx = reconstructor()
            .reconstruct_deterministic("Triangle ABC with side AB=5 and angle C=90, find the area");
        let expected = MathContext::new(
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
        assert!(contexts_equal(&ctx, &expected), "got {}", canonical_serialize(&ctx));
    }

    #[test]
    fn math_free_text_gives_empty_context() {
        let ctx = reconstructor().reconstruct_deterministic("hello, nice weather");
        assert!(ctx.is_empty(), "got {}", canonical_serialize(&ctx));
    }

    #[test]
    fn equation_and_target() {
        let ctx = reconstructor().reconstruct_deterministic("x + 5 = 10, solve for x");
        assert_eq!(ctx.variables, vec!["x"]);
        assert_eq!(ctx.relations.len(), 1);
        assert_eq!(ctx.relations[0].expression, "x + 5 = 10");
        assert_eq!(ctx.target.as_deref(), Some("solve for x"));
        let values: Vec<&str> = ctx.quantities.iter().map(|q| q.value.as_str()).collect();
        assert_eq!(values, vec!["5", "10"]);
    }

    #[test]
    fn pii_sentences_contribute_nothing() {
        let clean = reconstructor().reconstruct_deterministic("A student has 5 apples and buys 3 more apples. How many apples are there in total?");
        let with_pii = reconstructor().reconstruct_deterministic(
            "My name is Alice Chen. A student has 5 apples and buys 3 more apples. \
             Also calculate the distance from Haidian District to Chaoyang District. \
             How many apples are there in total?",
        );
        assert!(contexts_equal(&clean, &with_pii), "{} vs {}",
            canonical_serialize(&clean), canonical_serialize(&with_pii));
        assert_eq!(with_pii.target.as_deref(), Some("how many apples are there in total"));
    }

    #[test]
    fn phone_numbers_never_become_quantities() {
        let ctx = reconstructor()
            .reconstruct_deterministic("phone: 13800138000\nproblem: x + 5 = 10, solve for x");
        assert!(ctx.quantities.iter().all(|q| q.value.len() < 7));
    }

    #[test]
    fn supplement_section_is_authoritative() {
        let source = "A student has 5 apples and buys 3 more apples. How many apples are there in total?";
        let ctx = reconstructor().reconstruct_deterministic(source);
        let items = crate::model::supplement_items(&ctx).join(", ");
        let fused = format!("User [MASK] asks something.\n{SUPPLEMENT_HEADER}{{{items}}}");
        let reparsed = reconstructor().reconstruct_deterministic(&fused);
        assert!(contexts_equal(&ctx, &reparsed), "{} vs {}",
            canonical_serialize(&ctx), canonical_serialize(&reparsed));
    }

    #[test]
    fn leak_filter_strips_names_from_labels() {
        // frozen fixture: hand-applied detector + token removal
        let ctx = MathContext::new(
            vec![],
            vec![Quantity { value: "4".into(), unit: None, label: Some("Alice's apples".into()) }],
            vec![],
            None,
        );
        let filtered = reconstructor().leak_filter(&ctx);
        assert_eq!(filtered.quantities[0].label.as_deref(), Some("apples"));
    }

    #[test]
    fn leak_filter_is_identity_on_clean_contexts() {
        let ctx = MathContext::new(
            vec!["Triangle ABC".into()],
            vec![Quantity::with_label("5", "Side AB").unwrap()],
            vec![Relation::new(RelationKind::Equation, "AB = 5").unwrap()],
            Some("find the area".into()),
        );
        let filtered = reconstructor().leak_filter(&ctx);
        assert!(contexts_equal(&ctx, &filtered));
    }

    #[test]
    fn leak_filter_normalizes_entangled_target() {
        let ctx = MathContext::new(
            vec![],
            vec![],
            vec![Relation::new(RelationKind::Equation, "x = 1").unwrap()],
            Some("distance from Haidian District".into()),
        );
        let filtered = reconstructor().leak_filter(&ctx);
        assert_eq!(filtered.target.as_deref(), Some("distance"));
    }

    #[test]
    fn validate_schema_minimal() {
        let ctx = validate_schema(
            r#"{"variables":[],"quantities":[{"value":"5","label":"Side AB"}],"relations":[],"target":""}"#,
            &ContextSchema::default(),
        )
        .unwrap();
        assert_eq!(ctx.quantities.len(), 1);
        assert_eq!(ctx.quantities[0].label.as_deref(), Some("Side AB"));
        assert!(ctx.target.is_none());
    }

    #[test]
    fn validate_schema_rejects_limits() {
        let quantities: Vec<String> =
            (0..33).map(|i| format!(r#"{{"value":"{i}"}}"#)).collect();
        let body = format!(
            r#"{{"variables":[],"quantities":[{}],"relations":[],"target":""}}"#,
            quantities.join(",")
        );
        let err = validate_schema(&body, &ContextSchema::default()).unwrap_err();
        assert!(matches!(err, SchemaError::LimitExceeded { field: "quantities", got: 33, .. }));
    }

    #[test]
    fn validate_schema_rejects_unknown_unit() {
        let err = validate_schema(
            r#"{"variables":[],"quantities":[{"value":"5","unit":"lightyears"}],"relations":[],"target":""}"#,
            &ContextSchema::default(),
        )
        .unwrap_err();
        assert_eq!(err, SchemaError::UnknownUnit("lightyears".into()));
    }

    #[test]
    fn faithful_mock_matches_deterministic_backend() {
        use crate::llm::{MockBackend, MockMode};
        let input = "A train travels 120 km in 3 h. What is the speed of the train?";
        let r = reconstructor();
        let outcome =
            r.reconstruct_llm(input, &MockBackend::new(MockMode::Faithful), &PromptConfig::bundled());
        assert!(!outcome.degraded);
        assert!(contexts_equal(&outcome.context, &r.reconstruct_deterministic(input)));
    }

    #[test]
    fn validate_schema_rejects_unknown_key() {
        let err = validate_schema(
            r#"{"variables":[],"quantities":[],"relations":[],"target":"","name":"Alice"}"#,
            &ContextSchema::default(),
        )
        .unwrap_err();
        assert_eq!(err, SchemaError::UnknownKey("name".into()));
    }

    #[test]
    fn validate_schema_reports_parse_position() {
        let err = validate_schema("{\"variables\":[", &ContextSchema::default()).unwrap_err();
        assert!(matches!(err, SchemaError::Parse { .. }));
    }

    #[test]
    fn denoising_shortens_corpus_items() {
        // the transmitted context (supplement section) is never longer than
        // the raw message it denoises
        use crate::corpus::{generate_synthetic, inject_pii, InjectionBank, TemplateBank};
        let bank = TemplateBank::bundled();
        let profiles = InjectionBank::bundled_profiles();
        let items = generate_synthetic(31, 50, &bank).unwrap();
        let r = reconstructor();
        for (i, item) in items.iter().enumerate() {
            let injected = inject_pii(item, &profiles[i % profiles.len()], 23, &InjectionBank::bundled());
            let ctx = r.reconstruct_deterministic(&injected.injected_text);
            let supplement =
                format!("{{{}}}", crate::model::supplement_items(&ctx).join(", "));
            assert!(
                supplement.chars().count() <= injected.injected_text.chars().count(),
                "denoising violated for {}",
                item.id
            );
        }
    }
}
