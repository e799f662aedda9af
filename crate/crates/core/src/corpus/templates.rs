//! Problem templates: seeded synthetic dialogue generation with gold
//! contexts and a built-in solver per template family.
//!
//! The generator declares gold contexts from template metadata, never by
//! parsing its own rendered text, so generator output can serve as an
//! independent oracle for the deterministic reconstructor.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{MathContext, Quantity, Relation, RelationKind};
use crate::numeric::Decimal;

use super::{CorpusError, DialogueItem};

/// Template families. Each family fixes the gold-context shape and the
/// solving formula; the template file supplies surface text and parameter
/// ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateFamily {
    SumCount,
    DiffCount,
    ProductCount,
    ShareCount,
    SumMoney,
    RateSpeed,
    RateTotal,
    GeometryRightTriangle,
    RatioTwice,
    RatioHalf,
    LinearAdd,
    LinearSub,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemTemplate {
    pub id: String,
    pub family: TemplateFamily,
    /// Surface text with `{a}`-style parameter slots.
    pub text: String,
    /// Gold question target, with the same slots available.
    pub target: String,
    /// Inclusive sampling ranges per parameter name.
    #[serde(default)]
    pub params: HashMap<String, (i64, i64)>,
}

impl ProblemTemplate {
    fn range(&self, name: &str) -> Result<(i64, i64), CorpusError> {
        let (lo, hi) = self.params.get(name).copied().ok_or_else(|| CorpusError::Template {
            id: self.id.clone(),
            reason: format!("missing parameter range {name:?}"),
        })?;
        if lo < 1 || hi < lo || hi > 999 {
            return Err(CorpusError::Template {
                id: self.id.clone(),
                reason: format!("parameter {name:?} range [{lo}, {hi}] out of bounds (1..=999)"),
            });
        }
        Ok((lo, hi))
    }

    /// Sample family-consistent parameter values.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Params, CorpusError> {
        let mut p = Params::default();
        match self.family {
            TemplateFamily::SumCount
            | TemplateFamily::ProductCount
            | TemplateFamily::SumMoney
            | TemplateFamily::GeometryRightTriangle => {
                let (alo, ahi) = self.range("a")?;
                let (blo, bhi) = self.range("b")?;
                p.set("a", rng.gen_range(alo..=ahi));
                p.set("b", rng.gen_range(blo..=bhi));
            }
            TemplateFamily::DiffCount => {
                let (alo, ahi) = self.range("a")?;
                let (blo, bhi) = self.range("b")?;
                let b = rng.gen_range(blo..=bhi.min(ahi - 1));
                let a = rng.gen_range((b + 1).max(alo)..=ahi);
                p.set("a", a);
                p.set("b", b);
            }
            TemplateFamily::ShareCount => {
                let (blo, bhi) = self.range("b")?;
                let (qlo, qhi) = self.range("q")?;
                let b = rng.gen_range(blo..=bhi);
                let q = rng.gen_range(qlo..=qhi);
                p.set("a", b * q);
                p.set("b", b);
            }
            TemplateFamily::RateSpeed => {
                let (vlo, vhi) = self.range("v")?;
                let (tlo, thi) = self.range("t")?;
                let v = rng.gen_range(vlo..=vhi);
                let t = rng.gen_range(tlo..=thi);
                p.set("d", v * t);
                p.set("t", t);
            }
            TemplateFamily::RateTotal => {
                let (vlo, vhi) = self.range("v")?;
                let (tlo, thi) = self.range("t")?;
                p.set("v", rng.gen_range(vlo..=vhi));
                p.set("t", rng.gen_range(tlo..=thi));
            }
            TemplateFamily::RatioTwice | TemplateFamily::RatioHalf => {
                let (alo, ahi) = self.range("a")?;
                p.set("a", rng.gen_range(alo..=ahi));
            }
            TemplateFamily::LinearAdd => {
                let (xlo, xhi) = self.range("x")?;
                let (alo, ahi) = self.range("a")?;
                let x = rng.gen_range(xlo..=xhi);
                let a = rng.gen_range(alo..=ahi);
                p.set("a", a);
                p.set("b", x + a);
            }
            TemplateFamily::LinearSub => {
                let (alo, ahi) = self.range("a")?;
                let (blo, bhi) = self.range("b")?;
                p.set("a", rng.gen_range(alo..=ahi));
                p.set("b", rng.gen_range(blo..=bhi));
            }
        }
        // derived values never exceed three digits; keeps digit runs in
        // rendered text far away from the phone-number pattern
        for (name, v) in &p.values {
            if *v > 999 {
                return Err(CorpusError::Template {
                    id: self.id.clone(),
                    reason: format!("sampled parameter {name:?} = {v} exceeds 999; tighten ranges"),
                });
            }
        }
        Ok(p)
    }

    fn render(&self, params: &Params) -> Result<String, CorpusError> {
        render_slots(&self.text, params).map_err(|slot| CorpusError::Template {
            id: self.id.clone(),
            reason: format!("text references unsampled parameter {slot:?}"),
        })
    }

    fn render_target(&self, params: &Params) -> Result<String, CorpusError> {
        render_slots(&self.target, params).map_err(|slot| CorpusError::Template {
            id: self.id.clone(),
            reason: format!("target references unsampled parameter {slot:?}"),
        })
    }

    /// Gold context declared from template metadata.
    fn gold_context(&self, params: &Params, target: &str) -> MathContext {
        let q = |v: i64| Quantity::new(&v.to_string()).expect("integer literal");
        let qu = |v: i64, unit: &str| Quantity::with_unit(&v.to_string(), unit).expect("unit literal");
        let ql = |v: i64, label: &str| Quantity::with_label(&v.to_string(), label).expect("label literal");
        let eq = |expr: String| Relation::new(RelationKind::Equation, &expr).expect("relation literal");
        let phrase =
            |expr: String| Relation::new(RelationKind::OperationPhrase, &expr).expect("relation literal");

        let a = params.get("a");
        let b = params.get("b");
        let (vars, quantities, relations): (Vec<String>, Vec<Quantity>, Vec<Relation>) =
            match self.family {
                TemplateFamily::SumCount => {
                    (vec![], vec![q(a), q(b)], vec![eq(format!("total = {a} + {b}"))])
                }
                TemplateFamily::DiffCount => {
                    (vec![], vec![q(a), q(b)], vec![eq(format!("left = {a} - {b}"))])
                }
                TemplateFamily::ProductCount => {
                    (vec![], vec![q(a), q(b)], vec![eq(format!("total = {a} * {b}"))])
                }
                TemplateFamily::ShareCount => {
                    (vec![], vec![q(a), q(b)], vec![eq(format!("each = {a} / {b}"))])
                }
                TemplateFamily::SumMoney => {
                    (vec![], vec![qu(a, "$"), qu(b, "$")], vec![eq(format!("total = {a} + {b}"))])
                }
                TemplateFamily::RateSpeed => {
                    let d = params.get("d");
                    let t = params.get("t");
                    (vec![], vec![qu(d, "km"), qu(t, "h")], vec![eq(format!("speed = {d} / {t}"))])
                }
                TemplateFamily::RateTotal => {
                    let v = params.get("v");
                    let t = params.get("t");
                    (vec![], vec![qu(v, "kg"), qu(t, "min")], vec![eq(format!("total = {v} * {t}"))])
                }
                TemplateFamily::GeometryRightTriangle => (
                    vec!["Triangle ABC".into()],
                    vec![ql(a, "Side AB"), ql(b, "Side AC"), ql(90, "Angle A")],
                    vec![
                        eq(format!("AB = {a}")),
                        eq(format!("AC = {b}")),
                        eq("A = 90".into()),
                    ],
                ),
                TemplateFamily::RatioTwice => (
                    vec!["x".into(), "y".into()],
                    vec![q(a)],
                    vec![eq(format!("x = {a}")), phrase("y = 2 * x".into())],
                ),
                TemplateFamily::RatioHalf => (
                    vec!["x".into(), "y".into()],
                    vec![q(a)],
                    vec![eq(format!("x = {a}")), phrase("y = x / 2".into())],
                ),
                TemplateFamily::LinearAdd => {
                    (vec!["x".into()], vec![q(a), q(b)], vec![eq(format!("x + {a} = {b}"))])
                }
                TemplateFamily::LinearSub => {
                    (vec!["x".into()], vec![q(a), q(b)], vec![eq(format!("x - {a} = {b}"))])
                }
            };
        MathContext::new(vars, quantities, relations, Some(target.to_string()))
    }

    /// Solve from an extracted context; the same code path computes gold
    /// answers at generation time and replays solving for hard solvability.
    pub fn solve(&self, ctx: &MathContext) -> Result<String, SolveError> {
        let answer = match self.family {
            TemplateFamily::SumCount | TemplateFamily::SumMoney => {
                let (a, b) = find_binary(ctx, "total", '+')?;
                a.add(&b)
            }
            TemplateFamily::DiffCount => {
                let (a, b) = find_binary(ctx, "left", '-')?;
                a.sub(&b)
            }
            TemplateFamily::ProductCount | TemplateFamily::RateTotal => {
                let (a, b) = find_binary(ctx, "total", '*')?;
                a.mul(&b)
            }
            TemplateFamily::ShareCount => {
                let (a, b) = find_binary(ctx, "each", '/')?;
                a.div(&b)
            }
            TemplateFamily::RateSpeed => {
                let (a, b) = find_binary(ctx, "speed", '/')?;
                a.div(&b)
            }
            TemplateFamily::GeometryRightTriangle => {
                let ab = find_assignment(ctx, "AB")?;
                let ac = find_assignment(ctx, "AC")?;
                ab.mul(&ac).and_then(|p| p.div(&Decimal::from_i64(2)))
            }
            TemplateFamily::RatioTwice => {
                let x = find_assignment(ctx, "x")?;
                x.mul(&Decimal::from_i64(2))
            }
            TemplateFamily::RatioHalf => {
                let x = find_assignment(ctx, "x")?;
                x.div(&Decimal::from_i64(2))
            }
            TemplateFamily::LinearAdd => {
                let (a, b) = find_linear(ctx, '+')?;
                b.sub(&a)
            }
            TemplateFamily::LinearSub => {
                let (a, b) = find_linear(ctx, '-')?;
                b.add(&a)
            }
        };
        answer.map(|d| d.to_normalized_string()).ok_or(SolveError::Arithmetic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("required relation not present in context")]
    MissingRelation,
    #[error("arithmetic is not exact")]
    Arithmetic,
}

#[derive(Debug, Default, Clone)]
struct Params {
    values: Vec<(String, i64)>,
}

impl Params {
    fn set(&mut self, name: &str, value: i64) {
        self.values.push((name.to_string(), value));
    }

    fn get(&self, name: &str) -> i64 {
        self.values
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .unwrap_or_default()
    }
}

fn render_slots(template: &str, params: &Params) -> Result<String, String> {
    let mut out = template.to_string();
    for (name, value) in &params.values {
        out = out.replace(&format!("{{{name}}}"), &value.to_string());
    }
    if let Some(start) = out.find('{') {
        let end = out[start..].find('}').map(|e| start + e + 1).unwrap_or(out.len());
        return Err(out[start..end].to_string());
    }
    Ok(out)
}

/// Find `lhs = A op B` among the relations and return the operands.
fn find_binary(ctx: &MathContext, lhs: &str, op: char) -> Result<(Decimal, Decimal), SolveError> {
    for rel in &ctx.relations {
        let parts: Vec<&str> = rel.expression.split_whitespace().collect();
        if parts.len() == 5 && parts[0] == lhs && parts[1] == "=" && parts[3] == op.to_string() {
            if let (Some(a), Some(b)) = (Decimal::parse(parts[2]), Decimal::parse(parts[4])) {
                return Ok((a, b));
            }
        }
    }
    Err(SolveError::MissingRelation)
}

/// Find `name = value` among the relations.
fn find_assignment(ctx: &MathContext, name: &str) -> Result<Decimal, SolveError> {
    for rel in &ctx.relations {
        let parts: Vec<&str> = rel.expression.split_whitespace().collect();
        if parts.len() == 3 && parts[0] == name && parts[1] == "=" {
            if let Some(v) = Decimal::parse(parts[2]) {
                return Ok(v);
            }
        }
    }
    Err(SolveError::MissingRelation)
}

/// Find `x op A = B` among the relations.
fn find_linear(ctx: &MathContext, op: char) -> Result<(Decimal, Decimal), SolveError> {
    for rel in &ctx.relations {
        let parts: Vec<&str> = rel.expression.split_whitespace().collect();
        if parts.len() == 5
            && parts[0] == "x"
            && parts[1] == op.to_string()
            && parts[3] == "="
        {
            if let (Some(a), Some(b)) = (Decimal::parse(parts[2]), Decimal::parse(parts[4])) {
                return Ok((a, b));
            }
        }
    }
    Err(SolveError::MissingRelation)
}

/// A parsed template file.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    templates: Vec<ProblemTemplate>,
}

impl TemplateBank {
    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let templates: Vec<ProblemTemplate> =
            serde_json::from_str(json).map_err(|e| CorpusError::Template {
                id: "<bank>".to_string(),
                reason: e.to_string(),
            })?;
        if templates.is_empty() {
            return Err(CorpusError::Template {
                id: "<bank>".to_string(),
                reason: "template file contains no templates".to_string(),
            });
        }
        // sampling must be well-defined for every template
        let mut probe = ChaCha8Rng::seed_from_u64(0);
        for t in &templates {
            let params = t.sample(&mut probe)?;
            t.render(&params)?;
            t.render_target(&params)?;
        }
        Ok(Self { templates })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path)
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&json)
    }

    pub fn bundled() -> Self {
        static JSON: &str = include_str!("../../data/templates.json");
        Self::from_json(JSON).expect("bundled templates are valid")
    }

    pub fn templates(&self) -> &[ProblemTemplate] {
        &self.templates
    }

    pub fn by_id(&self, id: &str) -> Option<&ProblemTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }
}

/// Generate `count` synthetic dialogue items, deterministic per
/// `(seed, count, bank)`.
pub fn generate_synthetic(
    seed: u64,
    count: usize,
    bank: &TemplateBank,
) -> Result<Vec<DialogueItem>, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let template = &bank.templates()[rng.gen_range(0..bank.templates().len())];
        let params = template.sample(&mut rng)?;
        let text = template.render(&params)?;
        let target = template.render_target(&params)?;
        let gold_context = template.gold_context(&params, &target);
        let gold_answer = template.solve(&gold_context).map_err(|e| CorpusError::Template {
            id: template.id.clone(),
            reason: format!("gold context does not solve: {e}"),
        })?;
        items.push(DialogueItem {
            id: format!("item-{:05}", i + 1),
            turn_text: text,
            gold_context,
            gold_answer: Some(gold_answer),
            template_id: Some(template.id.clone()),
        });
    }
    Ok(items)
}
