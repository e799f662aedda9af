//! Shared domain types plus the canonicalization and equality logic that
//! defines exact-match comparison of extracted math contexts.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numeric::{decimal_cmp, normalize_decimal};

/// Kinds of personally identifiable information the guard recognizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiKind {
    PersonName,
    Location,
    PhoneNumber,
    SchoolName,
    /// Email addresses and social handles.
    ContactOther,
    IdNumber,
}

impl PiiKind {
    pub const ALL: [PiiKind; 6] = [
        PiiKind::PersonName,
        PiiKind::Location,
        PiiKind::PhoneNumber,
        PiiKind::SchoolName,
        PiiKind::ContactOther,
        PiiKind::IdNumber,
    ];

    /// Tie-break priority for overlapping detections of equal length
    /// (lower wins).
    pub fn priority(self) -> u8 {
        match self {
            PiiKind::PhoneNumber => 0,
            PiiKind::PersonName => 1,
            PiiKind::Location => 2,
            PiiKind::SchoolName => 3,
            PiiKind::ContactOther => 4,
            PiiKind::IdNumber => 5,
        }
    }
}

impl fmt::Display for PiiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PiiKind::PersonName => "person_name",
            PiiKind::Location => "location",
            PiiKind::PhoneNumber => "phone_number",
            PiiKind::SchoolName => "school_name",
            PiiKind::ContactOther => "contact_other",
            PiiKind::IdNumber => "id_number",
        };
        f.write_str(s)
    }
}

/// A located, typed PII occurrence. Offsets are Unicode scalar indices into
/// the source text, half-open `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiSpan {
    pub start: usize,
    pub end: usize,
    pub kind: PiiKind,
    pub surface: String,
    pub canonical: String,
}

impl PiiSpan {
    pub fn overlaps(&self, other: &PiiSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Deterministic normal form of a PII surface, used for leak matching.
///
/// Phone and id numbers reduce to their digit string; everything else is
/// case-folded with punctuation stripped and whitespace collapsed.
pub fn canonicalize_pii(kind: PiiKind, surface: &str) -> String {
    match kind {
        PiiKind::PhoneNumber | PiiKind::IdNumber => {
            surface.chars().filter(|c| c.is_ascii_digit()).collect()
        }
        _ => {
            let lowered = surface.to_lowercase();
            let mut cleaned = String::with_capacity(lowered.len());
            let mut chars = lowered.chars().peekable();
            while let Some(c) = chars.next() {
                // drop possessive 's so "alice's" matches "alice"
                if c == '\'' && chars.peek() == Some(&'s') {
                    let mut ahead = chars.clone();
                    ahead.next();
                    if ahead.peek().is_none_or(|n| !n.is_alphanumeric()) {
                        chars.next();
                        continue;
                    }
                }
                if c.is_alphanumeric() {
                    cleaned.push(c);
                } else {
                    cleaned.push(' ');
                }
            }
            cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
        }
    }
}

/// An exact math quantity: normalized decimal value with optional unit and
/// role label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Quantity {
    pub fn new(value: &str) -> Option<Self> {
        Some(Self { value: normalize_decimal(value)?, unit: None, label: None })
    }

    pub fn with_unit(value: &str, unit: &str) -> Option<Self> {
        Some(Self {
            value: normalize_decimal(value)?,
            unit: non_empty(sanitize_field(unit)),
            label: None,
        })
    }

    pub fn with_label(value: &str, label: &str) -> Option<Self> {
        Some(Self {
            value: normalize_decimal(value)?,
            unit: None,
            label: non_empty(sanitize_field(label)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Equation,
    Inequality,
    Ratio,
    OperationPhrase,
}

/// A logical relation in canonical text form, e.g. `AB = 5` or
/// `total = 3 * 4`. Expressions are restricted to the canonical alphabet
/// (alphanumerics, space, `+ - * / = < > ( ) . _`), must contain at least
/// one operator, and carry single spaces around every operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub expression: String,
}

impl Relation {
    pub fn new(kind: RelationKind, expression: &str) -> Option<Self> {
        let expr = sanitize_expression(expression);
        if expr.is_empty() || !expr.chars().any(|c| OPERATOR_CHARS.contains(&c)) {
            None
        } else {
            Some(Self { kind, expression: expr })
        }
    }

    /// Classify an expression by its operators; used when parsing external
    /// responses that carry relations as plain strings.
    pub fn infer(expression: &str) -> Option<Self> {
        let expr = sanitize_expression(expression);
        if expr.is_empty() {
            return None;
        }
        let kind = if expr.contains('<') || expr.contains('>') {
            RelationKind::Inequality
        } else if expr.contains('=') {
            RelationKind::Equation
        } else if expr.contains('/') {
            RelationKind::Ratio
        } else {
            RelationKind::OperationPhrase
        };
        Some(Self { kind, expression: expr })
    }
}

const EXPRESSION_EXTRA: &[char] = &['+', '-', '*', '/', '=', '<', '>', '(', ')', '.', '_', ' '];
const OPERATOR_CHARS: &[char] = &['+', '-', '*', '/', '=', '<', '>'];

fn sanitize_expression(raw: &str) -> String {
    let filtered: String = raw
        .chars()
        .flat_map(|c| {
            let mapped = if c.is_ascii_alphanumeric() || EXPRESSION_EXTRA.contains(&c) {
                c
            } else {
                ' '
            };
            // spaced operators keep expressions distinguishable from
            // label=value quantity renderings
            if OPERATOR_CHARS.contains(&mapped) {
                vec![' ', mapped, ' ']
            } else {
                vec![mapped]
            }
        })
        .collect();
    filtered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text fields embedded in the canonical serialization (labels, units,
/// variables, targets) must stay clear of its structural characters and of
/// unspaced operators.
fn sanitize_field(raw: &str) -> String {
    let filtered: String = raw
        .chars()
        .map(|c| match c {
            ',' | '|' | ':' | '{' | '}' | '[' | ']' | '=' | '<' | '>' | '\n' | '\r' => ' ',
            _ => c,
        })
        .collect();
    filtered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Variables are names: no arithmetic characters, and nothing that reads as
/// a bare quantity.
fn sanitize_variable(raw: &str) -> String {
    let cleaned: String = sanitize_field(raw)
        .chars()
        .map(|c| if matches!(c, '+' | '-' | '*' | '/') { ' ' } else { c })
        .collect();
    let cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    if parse_quantity_item(&cleaned).is_some() {
        String::new()
    } else {
        cleaned
    }
}

fn non_empty(s: String) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

/// Structured extraction of the math content of a message: variables,
/// quantities, relations, and the question target. Lists are held in
/// canonical order; construct through [`MathContext::new`] so that equal
/// contexts always serialize identically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MathContext {
    pub variables: Vec<String>,
    pub quantities: Vec<Quantity>,
    pub relations: Vec<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl MathContext {
    pub fn new(
        variables: Vec<String>,
        quantities: Vec<Quantity>,
        relations: Vec<Relation>,
        target: Option<String>,
    ) -> Self {
        let mut variables: Vec<String> = variables
            .into_iter()
            .map(|v| sanitize_variable(&v))
            .filter(|v| !v.is_empty())
            .collect();
        variables.sort();
        variables.dedup();

        let mut quantities: Vec<Quantity> = quantities
            .into_iter()
            .filter_map(|q| {
                Some(Quantity {
                    value: normalize_decimal(&q.value)?,
                    unit: q.unit.and_then(|u| non_empty(sanitize_field(&u))),
                    label: q.label.and_then(|l| non_empty(sanitize_field(&l))),
                })
            })
            .collect();
        quantities.sort_by(|a, b| {
            decimal_cmp(&a.value, &b.value)
                .then_with(|| a.unit.cmp(&b.unit))
                .then_with(|| a.label.cmp(&b.label))
        });
        quantities.dedup();

        let mut relations: Vec<Relation> = relations
            .into_iter()
            .filter_map(|r| Relation::new(r.kind, &r.expression))
            .collect();
        relations.sort_by(|a, b| a.expression.cmp(&b.expression));
        relations.dedup_by(|a, b| a.expression == b.expression);

        let target = target.and_then(|t| non_empty(sanitize_field(&t)));

        Self { variables, quantities, relations, target }
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
            && self.quantities.is_empty()
            && self.relations.is_empty()
            && self.target.is_none()
    }

    /// Renormalize after field edits (leak filtering mutates text in place).
    pub fn renormalized(self) -> Self {
        Self::new(self.variables, self.quantities, self.relations, self.target)
    }
}

fn quantity_item(q: &Quantity) -> String {
    let mut s = q.value.clone();
    if let Some(unit) = &q.unit {
        s.push(' ');
        s.push_str(unit);
    }
    if let Some(label) = &q.label {
        s.push(':');
        s.push_str(label);
    }
    s
}

/// Single-line deterministic serialization: the comparand for exact match.
///
/// Grammar: `vars:[a,b]|qty:[v u:label,...]|rel:[expr,...]|target:text`
/// with each list in canonical order.
pub fn canonical_serialize(ctx: &MathContext) -> String {
    let ctx = ctx.clone().renormalized();
    let vars = ctx.variables.join(",");
    let qty = ctx.quantities.iter().map(quantity_item).collect::<Vec<_>>().join(",");
    let rel = ctx.relations.iter().map(|r| r.expression.clone()).collect::<Vec<_>>().join(",");
    let target = ctx.target.unwrap_or_default();
    format!("vars:[{vars}]|qty:[{qty}]|rel:[{rel}]|target:{target}")
}

/// Parse the output of [`canonical_serialize`] back into a context.
pub fn parse_canonical(s: &str) -> Option<MathContext> {
    let rest = s.strip_prefix("vars:[")?;
    let (vars, rest) = rest.split_once("]|qty:[")?;
    let (qty, rest) = rest.split_once("]|rel:[")?;
    let (rel, target) = rest.split_once("]|target:")?;

    let variables: Vec<String> = split_items(vars).map(str::to_string).collect();
    let quantities: Vec<Quantity> = split_items(qty).map(parse_quantity_item).collect::<Option<_>>()?;
    let relations: Vec<Relation> = split_items(rel).filter_map(Relation::infer).collect();
    let target = if target.is_empty() { None } else { Some(target.to_string()) };
    Some(MathContext::new(variables, quantities, relations, target))
}

fn split_items(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').filter(|item| !item.is_empty())
}

pub(crate) fn parse_quantity_item(item: &str) -> Option<Quantity> {
    let (value_unit, label) = match item.split_once(':') {
        Some((vu, l)) => (vu, Some(l.to_string())),
        None => (item, None),
    };
    let (value, unit) = match value_unit.split_once(' ') {
        Some((v, u)) => (v, Some(u.to_string())),
        None => (value_unit, None),
    };
    Some(Quantity { value: normalize_decimal(value)?, unit, label })
}

/// Exact match: equality of canonical serializations.
pub fn contexts_equal(a: &MathContext, b: &MathContext) -> bool {
    canonical_serialize(a) == canonical_serialize(b)
}

/// Render the context as human-readable supplement items in canonical
/// order: variables, quantities (`label=value unit` or `value unit`),
/// relations, then the target behind a `target: ` marker.
///
/// The rendering decodes uniquely back to the context (see
/// [`parse_supplement_items`]): labels carry no operator characters, so an
/// unspaced `=` always means a labeled quantity, while relations carry
/// spaced operators.
pub fn supplement_items(ctx: &MathContext) -> Vec<String> {
    let ctx = ctx.clone().renormalized();
    let mut items = Vec::new();
    items.extend(ctx.variables.iter().cloned());
    for q in &ctx.quantities {
        let mut rendered = match &q.label {
            Some(label) => format!("{label}={}", q.value),
            None => q.value.clone(),
        };
        if let Some(unit) = &q.unit {
            rendered.push(' ');
            rendered.push_str(unit);
        }
        items.push(rendered);
    }
    items.extend(ctx.relations.iter().map(|r| r.expression.clone()));
    if let Some(target) = &ctx.target {
        items.push(format!("target: {target}"));
    }
    items
}

/// Decode a comma-separated supplement item list back into a context.
pub fn parse_supplement_items(body: &str) -> MathContext {
    let mut variables = Vec::new();
    let mut quantities = Vec::new();
    let mut relations = Vec::new();
    let mut target = None;
    for raw in body.split(',') {
        let item = raw.trim();
        if item.is_empty() {
            continue;
        }
        if let Some(rest) = item.strip_prefix("target: ") {
            target = Some(rest.to_string());
            continue;
        }
        if let Some(q) = decode_labeled_quantity(item) {
            quantities.push(q);
            continue;
        }
        if item.chars().any(|c| OPERATOR_CHARS.contains(&c)) {
            if let Some(rel) = Relation::infer(item) {
                relations.push(rel);
            }
            continue;
        }
        if let Some(q) = parse_quantity_item(item) {
            quantities.push(q);
        } else {
            variables.push(item.to_string());
        }
    }
    MathContext::new(variables, quantities, relations, target)
}

fn decode_labeled_quantity(item: &str) -> Option<Quantity> {
    let (label, rest) = item.split_once('=')?;
    if label.is_empty()
        || label.ends_with(' ')
        || rest.starts_with(' ')
        || label.chars().any(|c| OPERATOR_CHARS.contains(&c))
    {
        return None;
    }
    let (value, unit) = match rest.split_once(' ') {
        Some((v, u)) => (v, Some(u.to_string())),
        None => (rest, None),
    };
    Some(Quantity {
        value: normalize_decimal(value)?,
        unit,
        label: Some(label.to_string()),
    })
}

/// Guard methods, in the order they are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardMethod {
    None,
    Naive,
    #[serde(rename = "purellm")]
    PureLlm,
    Epe,
    Srpg,
}

impl GuardMethod {
    pub const ALL: [GuardMethod; 5] = [
        GuardMethod::None,
        GuardMethod::Naive,
        GuardMethod::PureLlm,
        GuardMethod::Epe,
        GuardMethod::Srpg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GuardMethod::None => "none",
            GuardMethod::Naive => "naive",
            GuardMethod::PureLlm => "purellm",
            GuardMethod::Epe => "epe",
            GuardMethod::Srpg => "srpg",
        }
    }
}

impl fmt::Display for GuardMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuardMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(GuardMethod::None),
            "naive" => Ok(GuardMethod::Naive),
            "purellm" => Ok(GuardMethod::PureLlm),
            "epe" => Ok(GuardMethod::Epe),
            "srpg" => Ok(GuardMethod::Srpg),
            other => Err(format!("unknown guard method: {other}")),
        }
    }
}

/// Where a mask placeholder came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrigin {
    Pii(PiiKind),
    AmbiguousNumber,
    NaiveDigit,
    NaiveCapitalized,
    DroppedField,
}

/// One mask placeholder in the guarded output. Offsets are Unicode scalar
/// indices into `masked_text`; the original surface is deliberately not
/// recorded here so audit trails stay leak-free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub start: usize,
    pub end: usize,
    pub placeholder: String,
    pub origin: MaskOrigin,
}

/// Output of one guard invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardOutput {
    pub method: GuardMethod,
    pub masked_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<MathContext>,
    pub fused_text: String,
    pub audit: Vec<AuditRecord>,
    /// Set when the reconstruction stream fell back to the deterministic
    /// parser after a backend failure.
    #[serde(default)]
    pub degraded: bool,
}

/// Numeric ordering helper exposed for modules that sort quantity values.
pub fn value_cmp(a: &str, b: &str) -> Ordering {
    decimal_cmp(a, b)
}
