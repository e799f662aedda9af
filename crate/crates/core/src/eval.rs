//! Threat-model attacker and metrics: attack success rate, exact match,
//! key parameter recall, hard solvability, and the composite score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{InjectedItem, PiiRecord, TemplateBank};
use crate::guard::{GuardError, GuardPipeline};
use crate::model::{contexts_equal, GuardMethod, GuardOutput, MathContext, PiiKind};
use crate::reconstructor::Reconstructor;
use crate::sanitizer::leaked_alias;

/// Outcome of the canonical-matching adversary on one output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackResult {
    pub item_id: String,
    pub leaked: Vec<LeakedRecord>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakedRecord {
    pub kind: PiiKind,
    pub alias: String,
}

/// Deterministic adversary: canonicalize the output per kind-specific rules
/// and search for any gold alias (full alias for names, locations, schools
/// and contacts; a shared digit substring of seven or more for phones and
/// ids).
pub fn attack(output_text: &str, gold_pii: &[PiiRecord]) -> AttackResult {
    let mut leaked = Vec::new();
    for record in gold_pii {
        if let Some(alias) = leaked_alias(output_text, record) {
            leaked.push(LeakedRecord { kind: record.kind, alias });
        }
    }
    AttackResult { item_id: String::new(), success: !leaked.is_empty(), leaked }
}

/// LLM-assisted adversary hook: prompt a backend to list personal
/// information it can read in the output, then score its guesses against
/// the ground truth with the same canonical matcher. Kept outside the
/// acceptance path; the deterministic adversary is the reproducible lower
/// bound.
pub fn llm_attack(
    output_text: &str,
    gold_pii: &[PiiRecord],
    backend: &dyn crate::llm::CompletionBackend,
) -> Result<AttackResult, crate::llm::LlmError> {
    let prompt = format!(
        "List every piece of personal information (names, locations, phone numbers, school \
         names, contacts, id numbers) you can find in the following message, one item per \
         line, nothing else. Reply NONE if there is none.\n{}{}",
        crate::llm::INPUT_MARKER,
        output_text
    );
    let response = backend.complete(&crate::llm::CompletionRequest::removal(&prompt))?;
    let mut leaked = Vec::new();
    for guess in response.lines().map(str::trim).filter(|l| !l.is_empty() && *l != "NONE") {
        for record in gold_pii {
            if crate::sanitizer::leaked_alias(guess, record).is_some() {
                leaked.push(LeakedRecord { kind: record.kind, alias: guess.to_string() });
            }
        }
    }
    leaked.dedup();
    Ok(AttackResult { item_id: String::new(), success: !leaked.is_empty(), leaked })
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
    #[error("prediction/gold id mismatch; missing from predictions: [{}], unknown ids: [{}]",
        .missing.join(", "), .extra.join(", "))]
    IdMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("predictions mix methods: {0:?}")]
    MixedMethods(Vec<String>),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("guard failed on item {id}: {source}")]
    Guard {
        id: String,
        #[source]
        source: GuardError,
    },
}

/// Fraction of items where the adversary recovered any PII.
pub fn compute_asr(results: &[AttackResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// Mean exact match; items without a predicted context score zero.
pub fn exact_match_rate(pred: &[Option<&MathContext>], gold: &[&MathContext]) -> f64 {
    assert_eq!(pred.len(), gold.len());
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.is_some_and(|p| contexts_equal(p, g)))
        .count();
    hits as f64 / pred.len() as f64
}

/// Recall of gold quantities, matched on (normalized value, unit). A gold
/// context without quantities scores 1.0 by convention.
pub fn key_param_recall(pred: Option<&MathContext>, gold: &MathContext) -> f64 {
    let gold_keys: Vec<(&str, Option<&str>)> =
        gold.quantities.iter().map(|q| (q.value.as_str(), q.unit.as_deref())).collect();
    if gold_keys.is_empty() {
        return 1.0;
    }
    let Some(pred) = pred else { return 0.0 };
    let mut hit = 0usize;
    for key in &gold_keys {
        if pred
            .quantities
            .iter()
            .any(|q| (q.value.as_str(), q.unit.as_deref()) == *key)
        {
            hit += 1;
        }
    }
    hit as f64 / gold_keys.len() as f64
}

/// Can a downstream solver recover the gold answer from the guarded output
/// alone? For synthetic items the template solver replays on a context
/// re-extracted from the fused text; for items without gold answers, a
/// documented proxy (full quantity recall and matching relation count).
pub fn hard_solvability(
    output: &GuardOutput,
    gold: &InjectedItem,
    bank: &TemplateBank,
    reconstructor: &Reconstructor,
) -> bool {
    let extracted = reconstructor.reconstruct_deterministic(&output.fused_text);
    match (&gold.base.template_id, &gold.base.gold_answer) {
        (Some(template_id), Some(gold_answer)) => match bank.by_id(template_id) {
            Some(template) => {
                template.solve(&extracted).map(|answer| &answer == gold_answer).unwrap_or(false)
            }
            None => proxy_solvable(&extracted, &gold.base.gold_context),
        },
        _ => proxy_solvable(&extracted, &gold.base.gold_context),
    }
}

fn proxy_solvable(extracted: &MathContext, gold: &MathContext) -> bool {
    if gold.quantities.is_empty() && gold.relations.is_empty() {
        return true;
    }
    key_param_recall(Some(extracted), gold) == 1.0
        && extracted.relations.len() == gold.relations.len()
}

/// Composite weighting; the privacy and utility sides must each sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Weights {
    pub privacy: f64,
    pub utility: f64,
    pub exact_match: f64,
    pub key_param_recall: f64,
    pub hard_solvability: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            privacy: 0.5,
            utility: 0.5,
            exact_match: 1.0 / 3.0,
            key_param_recall: 1.0 / 3.0,
            hard_solvability: 1.0 / 3.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), EvalError> {
        let top = self.privacy + self.utility;
        let utility = self.exact_match + self.key_param_recall + self.hard_solvability;
        for (side, sum) in [("privacy+utility", top), ("utility components", utility)] {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(EvalError::Weights(format!("{side} must sum to 1, got {sum}")));
            }
        }
        if [
            self.privacy,
            self.utility,
            self.exact_match,
            self.key_param_recall,
            self.hard_solvability,
        ]
        .iter()
        .any(|w| *w < 0.0)
        {
            return Err(EvalError::Weights("weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// `privacy_weight * (1 - ASR) + utility_weight * weighted-mean(utility)`.
pub fn composite_score(
    asr: f64,
    exact_match: f64,
    recall: f64,
    solvability: f64,
    weights: &Weights,
) -> Result<f64, EvalError> {
    weights.validate()?;
    let utility = weights.exact_match * exact_match
        + weights.key_param_recall * recall
        + weights.hard_solvability * solvability;
    Ok(weights.privacy * (1.0 - asr) + weights.utility * utility)
}

/// One guard output keyed by its item, tagged with the backend that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardRecord {
    pub id: String,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(flatten)]
    pub output: GuardOutput,
}

fn default_backend() -> String {
    "deterministic".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    pub id: String,
    pub attack_success: bool,
    pub leaked: Vec<LeakedRecord>,
    pub exact_match: bool,
    pub key_param_recall: f64,
    pub hard_solvable: bool,
}

/// Aggregate report; every aggregate is the mean of its per-item column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: GuardMethod,
    pub backend: String,
    pub corpus_sha256: String,
    pub config_sha256: String,
    pub item_count: usize,
    pub asr: f64,
    pub exact_match_rate: f64,
    pub key_param_recall: f64,
    pub hard_solvability: f64,
    pub composite: f64,
    pub per_item: Vec<ItemMetrics>,
}

impl MetricsReport {
    /// Four-decimal display row, the paper's reporting precision.
    pub fn display_row(&self) -> String {
        format!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            self.method, self.asr, self.exact_match_rate, self.key_param_recall,
            self.hard_solvability, self.composite
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "method", "asr", "em", "recall", "solv", "comp"
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn corpus_hash(corpus: &[InjectedItem]) -> String {
    let mut hasher = Sha256::new();
    for item in corpus {
        hasher.update(serde_json::to_string(item).expect("serializable item"));
        hasher.update(b"\n");
    }
    format!("{:x}", hasher.finalize())
}

fn weights_hash(weights: &Weights) -> String {
    sha256_hex(serde_json::to_string(weights).expect("serializable weights").as_bytes())
}

/// Score guard outputs against their gold items. The report's backend tag
/// comes from the records themselves.
pub fn evaluate_outputs(
    gold: &[InjectedItem],
    preds: &[GuardRecord],
    bank: &TemplateBank,
    reconstructor: &Reconstructor,
    weights: &Weights,
) -> Result<MetricsReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    weights.validate()?;

    let pred_by_id: BTreeMap<&str, &GuardRecord> =
        preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let gold_ids: Vec<&str> = gold.iter().map(InjectedItem::id).collect();
    let missing: Vec<String> = gold_ids
        .iter()
        .filter(|id| !pred_by_id.contains_key(**id))
        .map(|s| s.to_string())
        .collect();
    let extra: Vec<String> = pred_by_id
        .keys()
        .filter(|id| !gold_ids.contains(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(EvalError::IdMismatch { missing, extra });
    }
    let methods: Vec<String> = preds
        .iter()
        .map(|p| p.output.method.to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if methods.len() != 1 {
        return Err(EvalError::MixedMethods(methods));
    }
    let method = preds[0].output.method;
    let backend = preds[0].backend.clone();

    let mut per_item = Vec::with_capacity(gold.len());
    for item in gold {
        let pred = pred_by_id[item.id()];
        let attack_result = attack(&pred.output.fused_text, &item.pii);
        let exact = pred
            .output
            .context
            .as_ref()
            .is_some_and(|ctx| contexts_equal(ctx, &item.base.gold_context));
        let recall = key_param_recall(pred.output.context.as_ref(), &item.base.gold_context);
        let solvable = hard_solvability(&pred.output, item, bank, reconstructor);
        per_item.push(ItemMetrics {
            id: item.id().to_string(),
            attack_success: attack_result.success,
            leaked: attack_result.leaked,
            exact_match: exact,
            key_param_recall: recall,
            hard_solvable: solvable,
        });
    }

    let n = per_item.len() as f64;
    let asr = per_item.iter().filter(|m| m.attack_success).count() as f64 / n;
    let em = per_item.iter().filter(|m| m.exact_match).count() as f64 / n;
    let recall = per_item.iter().map(|m| m.key_param_recall).sum::<f64>() / n;
    let solv = per_item.iter().filter(|m| m.hard_solvable).count() as f64 / n;
    let composite = composite_score(asr, em, recall, solv, weights)?;

    Ok(MetricsReport {
        method,
        backend,
        corpus_sha256: corpus_hash(gold),
        config_sha256: weights_hash(weights),
        item_count: per_item.len(),
        asr,
        exact_match_rate: em,
        key_param_recall: recall,
        hard_solvability: solv,
        composite,
        per_item,
    })
}

/// Run the guard on every item, then score. Guard failures abort with the
/// offending item id: the pipeline fails closed rather than scoring a leak.
pub fn evaluate_corpus(
    corpus: &[InjectedItem],
    method: GuardMethod,
    pipeline: &GuardPipeline,
    bank: &TemplateBank,
    reconstructor: &Reconstructor,
    weights: &Weights,
) -> Result<MetricsReport, EvalError> {
    let preds = guard_corpus(corpus, method, pipeline)?;
    evaluate_outputs(corpus, &preds, bank, reconstructor, weights)
}

/// Guard every item of a corpus.
pub fn guard_corpus(
    corpus: &[InjectedItem],
    method: GuardMethod,
    pipeline: &GuardPipeline,
) -> Result<Vec<GuardRecord>, EvalError> {
    corpus
        .iter()
        .map(|item| {
            pipeline
                .guard(method, &item.injected_text)
                .map(|output| GuardRecord {
                    id: item.id().to_string(),
                    backend: pipeline.backend_label().to_string(),
                    output,
                })
                .map_err(|source| EvalError::Guard { id: item.id().to_string(), source })
        })
        .collect()
}

/// Envelope written to disk: the payload is timestamp-free and hashed, so
/// reruns are byte-comparable; the timestamp lives outside it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub payload: MetricsReport,
    pub payload_sha256: String,
    pub generated_at: String,
}

impl ReportEnvelope {
    pub fn new(payload: MetricsReport) -> Self {
        let payload_sha256 =
            sha256_hex(serde_json::to_string(&payload).expect("serializable report").as_bytes());
        let generated_at = unix_timestamp();
        Self { payload, payload_sha256, generated_at }
    }
}

fn unix_timestamp() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    secs.to_string()
}
