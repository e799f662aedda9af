//! Template-based PII injection with exact ground truth.
//!
//! Free-style injection splices standalone PII sentences between the turn's
//! sentences; structured-style injection reformats the turn as labeled
//! key/value fields. Both record every injected surface with its span.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::PiiKind;
use crate::text::{char_len, split_sentences};

use super::{CorpusError, DialogueItem, InjectedItem, PiiRecord};

/// One synthetic person: canonical values with surface variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiiProfile {
    pub person_name: ProfileField,
    pub location: ProfileField,
    pub phone: ProfileField,
    pub school: ProfileField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileField {
    pub canonical: String,
    pub aliases: Vec<String>,
}

impl PiiProfile {
    fn field(&self, name: &str) -> Option<(&ProfileField, PiiKind)> {
        match name {
            "person_name" => Some((&self.person_name, PiiKind::PersonName)),
            "location" => Some((&self.location, PiiKind::Location)),
            "phone" => Some((&self.phone, PiiKind::PhoneNumber)),
            "school" => Some((&self.school, PiiKind::SchoolName)),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        for name in ["person_name", "location", "phone", "school"] {
            let (field, _) = self.field(name).expect("known field");
            if field.canonical.trim().is_empty() {
                return Err(format!("profile field {name} is empty"));
            }
            if !field.aliases.contains(&field.canonical) {
                return Err(format!("profile field {name} aliases must include the full surface form"));
            }
        }
        Ok(())
    }
}

/// How the PII was woven into the turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionStyle {
    /// Conversational sentences spliced into free text.
    Free,
    /// Key/value field lines around a `problem:` field.
    Structured,
}

/// PII constant carried by a template itself (e.g. the second location of
/// an entangled distance question).
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct TemplateConstant {
    pub placeholder: String,
    pub kind: PiiKind,
    pub canonical: String,
    pub aliases: Vec<String>,
}

/// A free-style PII sentence template.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SentenceTemplate {
    pub id: String,
    pub text: String,
    /// Profile fields referenced by `{field}` slots.
    pub fields: Vec<String>,
    #[serde(default)]
    pub constants: Vec<TemplateConstant>,
    /// PII woven into math phrasing; these defeat field-based filters.
    #[serde(default)]
    pub entangled: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct StructuredFormat {
    field_lines: Vec<(String, String)>,
    problem_line: String,
    note_line: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct BankFile {
    free_sentences: Vec<SentenceTemplate>,
    noise_sentences: Vec<String>,
    structured: StructuredFormat,
}

/// The injection-template bank: free sentences, noise filler, and the
/// structured field format.
#[derive(Debug, Clone)]
pub struct InjectionBank {
    file: BankFile,
}

impl InjectionBank {
    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let file: BankFile =
            serde_json::from_str(json).map_err(|e| CorpusError::InjectionBank(e.to_string()))?;
        if file.free_sentences.is_empty() {
            return Err(CorpusError::InjectionBank("no free sentence templates".into()));
        }
        if !file.free_sentences.iter().any(|s| s.entangled) {
            return Err(CorpusError::InjectionBank("bank must include an entangled template".into()));
        }
        if !file.free_sentences.iter().any(|s| s.fields.iter().any(|f| f == "person_name")) {
            return Err(CorpusError::InjectionBank("bank must include a person-name template".into()));
        }
        Ok(Self { file })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path)
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&json)
    }

    pub fn bundled() -> Self {
        static JSON: &str = include_str!("../../data/injection_templates.json");
        Self::from_json(JSON).expect("bundled injection bank is valid")
    }

    /// Profiles shipped with the crate, drawn from the bundled gazetteer.
    pub fn bundled_profiles() -> Vec<PiiProfile> {
        static JSON: &str = include_str!("../../data/profiles.json");
        load_profiles_json(JSON, "<bundled>").expect("bundled profiles are valid")
    }

    pub fn free_sentences(&self) -> &[SentenceTemplate] {
        &self.file.free_sentences
    }
}

/// Load a profiles file (JSON array of profiles).
pub fn load_profiles(path: &std::path::Path) -> Result<Vec<PiiProfile>, CorpusError> {
    let json = std::fs::read_to_string(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    load_profiles_json(&json, &path.display().to_string())
}

fn load_profiles_json(json: &str, path: &str) -> Result<Vec<PiiProfile>, CorpusError> {
    let profiles: Vec<PiiProfile> = serde_json::from_str(json)
        .map_err(|e| CorpusError::Profiles { path: path.to_string(), reason: e.to_string() })?;
    if profiles.is_empty() {
        return Err(CorpusError::Profiles { path: path.to_string(), reason: "no profiles".into() });
    }
    for p in &profiles {
        p.validate()
            .map_err(|reason| CorpusError::Profiles { path: path.to_string(), reason })?;
    }
    Ok(profiles)
}

/// Seed an item-local RNG from the corpus seed and the item id, so injection
/// is deterministic per item and independent of corpus order.
pub fn derive_item_seed(seed: u64, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// Text under construction with span tracking (char offsets).
struct TextBuilder {
    text: String,
    len: usize,
    pii: Vec<PiiRecord>,
    noise_spans: Vec<(usize, usize)>,
}

impl TextBuilder {
    fn new() -> Self {
        Self { text: String::new(), len: 0, pii: Vec::new(), noise_spans: Vec::new() }
    }

    fn push_separator(&mut self, sep: &str) {
        if !self.text.is_empty() {
            self.text.push_str(sep);
            self.len += char_len(sep);
        }
    }

    fn push_plain(&mut self, s: &str) {
        self.text.push_str(s);
        self.len += char_len(s);
    }

    fn push_noise(&mut self, s: &str) {
        let start = self.len;
        self.push_plain(s);
        self.noise_spans.push((start, self.len));
    }

    /// Render a template, replacing each slot with its surface and
    /// recording the span of every replacement.
    fn push_rendered(&mut self, template: &str, slots: &[(String, String, PiiKind, Vec<String>, String)]) {
        // slots: (placeholder, surface, kind, aliases, canonical)
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            let Some(close_rel) = rest[open..].find('}') else {
                self.push_plain(rest);
                return;
            };
            let close = open + close_rel;
            self.push_plain(&rest[..open]);
            let name = &rest[open + 1..close];
            if let Some((_, surface, kind, aliases, canonical)) =
                slots.iter().find(|(n, ..)| n == name)
            {
                let start = self.len;
                self.push_plain(surface);
                self.pii.push(PiiRecord {
                    kind: *kind,
                    canonical: canonical.clone(),
                    aliases: aliases.clone(),
                    start,
                    end: self.len,
                    surface: surface.clone(),
                });
            } else {
                // unknown slot: keep the literal text
                self.push_plain(&rest[open..=close]);
            }
            rest = &rest[close + 1..];
        }
        self.push_plain(rest);
    }
}

fn sentence_slots(
    template: &SentenceTemplate,
    profile: &PiiProfile,
) -> Vec<(String, String, PiiKind, Vec<String>, String)> {
    let mut slots = Vec::new();
    for field_name in &template.fields {
        if let Some((field, kind)) = profile.field(field_name) {
            slots.push((
                field_name.clone(),
                field.canonical.clone(),
                kind,
                field.aliases.clone(),
                field.canonical.clone(),
            ));
        }
    }
    for constant in &template.constants {
        slots.push((
            constant.placeholder.clone(),
            constant.canonical.clone(),
            constant.kind,
            constant.aliases.clone(),
            constant.canonical.clone(),
        ));
    }
    slots
}

/// Inject 1-3 PII records into a turn, deterministically for fixed inputs.
pub fn inject_pii(
    item: &DialogueItem,
    profile: &PiiProfile,
    seed: u64,
    bank: &InjectionBank,
) -> InjectedItem {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_item_seed(seed, &item.id));
    if rng.gen_ratio(1, 4) {
        inject_structured(item, profile, &mut rng, bank)
    } else {
        inject_free(item, profile, &mut rng, bank)
    }
}

fn inject_free(
    item: &DialogueItem,
    profile: &PiiProfile,
    rng: &mut ChaCha8Rng,
    bank: &InjectionBank,
) -> InjectedItem {
    let sentences: Vec<String> = split_sentences(&item.turn_text)
        .into_iter()
        .map(|(s, e)| crate::text::char_slice(&item.turn_text, s, e).trim().to_string())
        .collect();

    // Pick PII sentences: a name-bearing one first, then extras while the
    // total record count stays within three.
    let free = bank.free_sentences();
    let name_bearing: Vec<&SentenceTemplate> =
        free.iter().filter(|t| t.fields.iter().any(|f| f == "person_name")).collect();
    let first = name_bearing[rng.gen_range(0..name_bearing.len())];
    let mut chosen: Vec<&SentenceTemplate> = vec![first];
    let mut record_count = first.fields.len() + first.constants.len();
    let mut rest: Vec<&SentenceTemplate> =
        free.iter().filter(|t| t.id != first.id).collect();
    rest.shuffle(rng);
    let extra_target = rng.gen_range(0..=2usize);
    for t in rest {
        if chosen.len() > extra_target {
            break;
        }
        let count = t.fields.len() + t.constants.len();
        if record_count + count <= 3 {
            record_count += count;
            chosen.push(t);
        }
    }

    let noise_count = rng.gen_range(0..=2usize);
    let noise: Vec<&str> = (0..noise_count)
        .map(|_| {
            bank.file.noise_sentences[rng.gen_range(0..bank.file.noise_sentences.len())].as_str()
        })
        .collect();

    // Each insert gets a slot index in 0..=len (before sentence k / at end).
    enum Insert<'a> {
        Pii(&'a SentenceTemplate),
        Noise(&'a str),
    }
    let mut inserts: Vec<(usize, usize, Insert)> = Vec::new();
    for (ord, t) in chosen.iter().enumerate() {
        inserts.push((rng.gen_range(0..=sentences.len()), ord, Insert::Pii(t)));
    }
    for (ord, n) in noise.iter().enumerate() {
        inserts.push((rng.gen_range(0..=sentences.len()), chosen.len() + ord, Insert::Noise(n)));
    }
    inserts.sort_by_key(|(slot, ord, _)| (*slot, *ord));

    let mut builder = TextBuilder::new();
    let mut insert_iter = inserts.into_iter().peekable();
    for slot in 0..=sentences.len() {
        while insert_iter.peek().is_some_and(|(s, _, _)| *s == slot) {
            let (_, _, insert) = insert_iter.next().expect("peeked");
            builder.push_separator(" ");
            match insert {
                Insert::Pii(t) => {
                    let slots = sentence_slots(t, profile);
                    builder.push_rendered(&t.text, &slots);
                }
                Insert::Noise(n) => builder.push_noise(n),
            }
        }
        if slot < sentences.len() {
            builder.push_separator(" ");
            builder.push_plain(&sentences[slot]);
        }
    }

    let template_ids = chosen.iter().map(|t| t.id.clone()).collect();
    InjectedItem {
        base: item.clone(),
        injected_text: builder.text,
        pii: sorted_records(builder.pii),
        noise_spans: builder.noise_spans,
        injection_style: InjectionStyle::Free,
        injection_template_ids: template_ids,
    }
}

fn inject_structured(
    item: &DialogueItem,
    profile: &PiiProfile,
    rng: &mut ChaCha8Rng,
    bank: &InjectionBank,
) -> InjectedItem {
    let format = &bank.file.structured;
    // person_name always present, plus one or two more fields
    let mut extra_fields: Vec<&(String, String)> =
        format.field_lines.iter().filter(|(name, _)| name != "person_name").collect();
    extra_fields.shuffle(rng);
    let extra_count = rng.gen_range(1..=2usize);
    let mut lines: Vec<&(String, String)> = format
        .field_lines
        .iter()
        .filter(|(name, _)| name == "person_name")
        .collect();
    lines.extend(extra_fields.into_iter().take(extra_count));

    let mut builder = TextBuilder::new();
    for (field_name, line_template) in lines {
        let (field, kind) = profile.field(field_name).expect("validated field name");
        let slots = vec![(
            field_name.clone(),
            field.canonical.clone(),
            kind,
            field.aliases.clone(),
            field.canonical.clone(),
        )];
        builder.push_separator("\n");
        builder.push_rendered(line_template, &slots);
    }
    if rng.gen_ratio(1, 2) {
        let noise =
            &bank.file.noise_sentences[rng.gen_range(0..bank.file.noise_sentences.len())];
        builder.push_separator("\n");
        let prefix_end = format.note_line.find("{noise}").unwrap_or(format.note_line.len());
        builder.push_plain(&format.note_line[..prefix_end]);
        builder.push_noise(noise);
    }
    builder.push_separator("\n");
    let prefix_end = format.problem_line.find("{turn}").unwrap_or(format.problem_line.len());
    builder.push_plain(&format.problem_line[..prefix_end]);
    builder.push_plain(&item.turn_text);

    InjectedItem {
        base: item.clone(),
        injected_text: builder.text,
        pii: sorted_records(builder.pii),
        noise_spans: builder.noise_spans,
        injection_style: InjectionStyle::Structured,
        injection_template_ids: vec!["structured".to_string()],
    }
}

fn sorted_records(mut records: Vec<PiiRecord>) -> Vec<PiiRecord> {
    records.sort_by_key(|r| r.start);
    records
}
