//! Synthetic tutoring corpus: dialogue generation, MathDial-style ingestion,
//! template-based PII injection, and JSONL persistence.

pub mod inject;
pub mod templates;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MathContext, PiiKind};

pub use inject::{inject_pii, InjectionBank, InjectionStyle, PiiProfile, ProfileField};
pub use templates::{generate_synthetic, ProblemTemplate, TemplateBank};

/// One student turn with gold structured context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueItem {
    pub id: String,
    pub turn_text: String,
    pub gold_context: MathContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
}

/// A typed PII ground-truth record anchored in the injected text.
/// Offsets are Unicode scalar indices, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiRecord {
    pub kind: PiiKind,
    pub canonical: String,
    pub aliases: Vec<String>,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// A dialogue turn after synthetic PII injection, with full ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedItem {
    pub base: DialogueItem,
    pub injected_text: String,
    pub pii: Vec<PiiRecord>,
    pub noise_spans: Vec<(usize, usize)>,
    pub injection_style: InjectionStyle,
    pub injection_template_ids: Vec<String>,
}

impl InjectedItem {
    pub fn id(&self) -> &str {
        &self.base.id
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid record: {source}")]
    Line {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate item ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("template {id}: {reason}")]
    Template { id: String, reason: String },
    #[error("injection bank: {0}")]
    InjectionBank(String),
    #[error("profile file {path}: {reason}")]
    Profiles { path: String, reason: String },
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = std::fs::File::open(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|source| CorpusError::Line {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        items.push(item);
    }
    Ok(items)
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), CorpusError> {
    let mut file = std::fs::File::create(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    for item in items {
        let line = serde_json::to_string(item).expect("serializable corpus item");
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dup.insert(id.to_string());
        }
    }
    if dup.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::DuplicateIds(dup.into_iter().collect()))
    }
}

/// Load an injected corpus from JSONL, rejecting duplicate ids.
pub fn load_corpus(path: &Path) -> Result<Vec<InjectedItem>, CorpusError> {
    let items: Vec<InjectedItem> = read_jsonl(path)?;
    check_unique_ids(items.iter().map(InjectedItem::id))?;
    Ok(items)
}

/// Save an injected corpus as JSONL (one item per line, stable field order).
pub fn save_corpus(items: &[InjectedItem], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(items, path)
}

/// Load a dialogue corpus (pre-injection) from JSONL.
pub fn load_dialogues(path: &Path) -> Result<Vec<DialogueItem>, CorpusError> {
    let items: Vec<DialogueItem> = read_jsonl(path)?;
    check_unique_ids(items.iter().map(|i| i.id.as_str()))?;
    Ok(items)
}

pub fn save_dialogues(items: &[DialogueItem], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(items, path)
}

/// Raw MathDial-style record: one dialogue per line.
#[derive(Debug, Deserialize)]
struct MathDialRecord {
    id: String,
    student_turn_text: String,
    problem_text: String,
}

/// Result of ingesting an external file: items plus per-line skips.
#[derive(Debug)]
pub struct IngestOutcome {
    pub items: Vec<DialogueItem>,
    /// `(line_number, error)` for every skipped line.
    pub skipped: Vec<(usize, String)>,
    pub empty_input: bool,
}

/// Ingest MathDial-style JSONL. Lines that fail the schema are skipped and
/// reported; gold contexts are produced by the deterministic reconstructor
/// applied to the problem text (silver standard), so no gold answers are
/// attached.
pub fn ingest_mathdial(path: &Path) -> Result<IngestOutcome, CorpusError> {
    let file = std::fs::File::open(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut any_line = false;
    let reconstructor = crate::reconstructor::Reconstructor::bundled();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        any_line = true;
        match serde_json::from_str::<MathDialRecord>(&line) {
            Ok(rec) => {
                let gold_context = reconstructor.reconstruct_deterministic(&rec.problem_text);
                items.push(DialogueItem {
                    id: rec.id,
                    turn_text: rec.student_turn_text,
                    gold_context,
                    gold_answer: None,
                    template_id: None,
                });
            }
            Err(e) => skipped.push((i + 1, e.to_string())),
        }
    }
    check_unique_ids(items.iter().map(|i| i.id.as_str()))?;
    Ok(IngestOutcome { items, skipped, empty_input: !any_line })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_well_formed_lines() {
        let f = write_temp(concat!(
            r#"{"id":"d1","student_turn_text":"x + 5 = 10, solve for x","problem_text":"x + 5 = 10, solve for x"}"#, "\n",
            r#"{"id":"d2","student_turn_text":"hello","problem_text":"hello"}"#, "\n",
            r#"{"id":"d3","student_turn_text":"2 + 2","problem_text":"2 + 2"}"#, "\n",
        ));
        let outcome = ingest_mathdial(f.path()).unwrap();
        assert_eq!(outcome.items.len(), 3);
        assert!(outcome.skipped.is_empty());
        assert!(!outcome.empty_input);
        assert!(outcome.items.iter().all(|i| i.gold_answer.is_none()));
    }

    #[test]
    fn ingest_skips_malformed_lines() {
        let f = write_temp(concat!(
            r#"{"id":"d1","student_turn_text":"a","problem_text":"a"}"#, "\n",
            r#"{"id":"d2","missing":"fields"}"#, "\n",
            r#"{"id":"d3","student_turn_text":"c","problem_text":"c"}"#, "\n",
        ));
        let outcome = ingest_mathdial(f.path()).unwrap();
        assert_eq!(outcome.items.len(), 2);
        assert_eq!(outcome.skipped.len(), 1);
        assert_eq!(outcome.skipped[0].0, 2);
    }

    #[test]
    fn ingest_empty_file() {
        let f = write_temp("");
        let outcome = ingest_mathdial(f.path()).unwrap();
        assert!(outcome.items.is_empty());
        assert!(outcome.empty_input);
    }

    #[test]
    fn load_missing_file_names_path() {
        let err = load_corpus(Path::new("/nonexistent/corpus.jsonl")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus.jsonl"));
    }

    #[test]
    fn load_rejects_duplicate_ids() {
        let bank = TemplateBank::bundled();
        let items = generate_synthetic(1, 1, &bank).unwrap();
        let injected = inject_pii(
            &items[0],
            &InjectionBank::bundled_profiles()[0],
            7,
            &InjectionBank::bundled(),
        );
        let f = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&[injected.clone(), injected], f.path()).unwrap();
        let err = load_corpus(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateIds(ids) if ids == vec!["item-00001".to_string()]));
    }

    #[test]
    fn corpus_round_trip_is_lossless() {
        let bank = TemplateBank::bundled();
        let items = generate_synthetic(11, 5, &bank).unwrap();
        let profiles = InjectionBank::bundled_profiles();
        let injected: Vec<InjectedItem> = items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                inject_pii(item, &profiles[i % profiles.len()], 3, &InjectionBank::bundled())
            })
            .collect();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&injected, f.path()).unwrap();
        let loaded = load_corpus(f.path()).unwrap();
        assert_eq!(injected, loaded);

        // save(load(p)) is byte-identical to the canonical re-serialization
        let f2 = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&loaded, f2.path()).unwrap();
        assert_eq!(std::fs::read(f.path()).unwrap(), std::fs::read(f2.path()).unwrap());
    }
}
