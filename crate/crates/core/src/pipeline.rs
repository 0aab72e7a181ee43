//! The extraction pipeline: prompt construction, response parsing, span
//! localization, body-system classification, and per-note orchestration.
//!
//! Stages per note: segment the ROS section, ask the model for entities
//! (extract + status) as JSON, anchor each extract back into the note as a
//! character span, classify each extract into a body system with a second
//! prompt, then drop detections whose category is not one of the 14 valid
//! systems. Every failure mode lands in the note's output record — a bad
//! response never aborts the batch.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, ChatRequest, GenerationConfig};
use crate::domain::{
    canonicalize_system, BodySystem, CategoryResolution, ClinicalNote, Detection, Span, Status,
};
use crate::segmenter::{segment_ros, HeaderLexicon};
use crate::text;

/// System prompt for entity recognition.
pub const NER_SYSTEM_PROMPT: &str = include_str!("../resources/prompts/ner_system.txt");

/// System prompt for body-system classification.
pub const CLS_SYSTEM_PROMPT: &str = include_str!("../resources/prompts/body_system_cls.txt");

/// Instruction appended under the ROS text in the recognition user message.
pub const NER_USER_INSTRUCTION: &str =
    "Extract the ROS entities from the text above. Output in JSON format.";

/// Recognition request for one ROS section body.
pub fn build_ner_prompt(ros_text: &str) -> ChatRequest {
    ChatRequest {
        system_prompt: NER_SYSTEM_PROMPT.to_string(),
        user_message: format!("{ros_text}\n\n{NER_USER_INSTRUCTION}"),
    }
}

/// Classification request for one extracted entity.
pub fn build_cls_prompt(extract: &str) -> ChatRequest {
    ChatRequest {
        system_prompt: CLS_SYSTEM_PROMPT.to_string(),
        user_message: extract.to_string(),
    }
}

/// One entity as recognized by the model, before localization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    /// Extract text, whitespace-trimmed.
    pub extract: String,
    pub status: Status,
    /// The element's verbatim JSON fragment from the response.
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NerParseError {
    #[error("no JSON entity array found in response")]
    NoJsonFound,
    #[error("entity {index}: {reason}")]
    ElementMalformed { index: usize, reason: String },
    #[error("entity {index}: invalid status {status:?}")]
    InvalidStatus { index: usize, status: String },
}

#[derive(Deserialize)]
struct WireEntity {
    extract: String,
    status: String,
}

/// Parse a recognition response into entities.
///
/// The response may wrap the JSON array in prose or code fences; the first
/// balanced `[...]` holding JSON objects is taken (bracket noise like
/// "[1]" or "[sic]" is passed over, and a bare `[]` counts only when no
/// object array appears — an empty array is a valid "nothing found"
/// response). Every element must be an object with a non-empty `extract`
/// string and a valid `status`. Exact duplicates (same extract and status)
/// collapse to their first occurrence.
pub fn parse_entities(response: &str) -> Result<Vec<RawEntity>, NerParseError> {
    let elements = find_entity_array(response).ok_or(NerParseError::NoJsonFound)?;
    let mut entities: Vec<RawEntity> = Vec::with_capacity(elements.len());
    for (index, raw) in elements.iter().enumerate() {
        let wire: WireEntity =
            serde_json::from_str(raw.get()).map_err(|e| NerParseError::ElementMalformed {
                index,
                reason: e.to_string(),
            })?;
        let extract = wire.extract.trim().to_string();
        if extract.is_empty() {
            return Err(NerParseError::ElementMalformed {
                index,
                reason: "empty extract".to_string(),
            });
        }
        let status: Status = wire
            .status
            .parse()
            .map_err(|_| NerParseError::InvalidStatus {
                index,
                status: wire.status.clone(),
            })?;
        if entities
            .iter()
            .any(|e| e.extract == extract && e.status == status)
        {
            continue;
        }
        entities.push(RawEntity {
            extract,
            status,
            raw: raw.get().to_string(),
        });
    }
    Ok(entities)
}

/// Find the first balanced bracket group in `response` that parses as a
/// JSON array of objects, returning its elements verbatim. An empty array
/// is remembered as a fallback for responses that genuinely report nothing.
fn find_entity_array(response: &str) -> Option<Vec<&serde_json::value::RawValue>> {
    let bytes = response.as_bytes();
    let mut empty_seen = false;
    for start in 0..bytes.len() {
        if bytes[start] != b'[' {
            continue;
        }
        let Some(end) = balanced_array_end(bytes, start) else {
            continue;
        };
        let candidate = &response[start..end];
        let Ok(elements) = serde_json::from_str::<Vec<&serde_json::value::RawValue>>(candidate)
        else {
            continue;
        };
        if elements.is_empty() {
            empty_seen = true;
        } else if elements.iter().all(|e| e.get().starts_with('{')) {
            return Some(elements);
        }
    }
    empty_seen.then(Vec::new)
}

/// Byte offset one past the `]` matching the `[` at `start`, skipping
/// bracket characters inside JSON strings.
fn balanced_array_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Span localization

/// Anchor `extract` inside the ROS body, returning a note-level character
/// span. Three attempts, strictest first:
///
/// 1. case-insensitive verbatim substring;
/// 2. whitespace-normalized match (runs of whitespace on either side
///    collapse to one space);
/// 3. token match: the extract's alphanumeric tokens appearing as
///    consecutive body tokens, tolerating a singular/plural `s` on either
///    side of each token ("fever" anchors inside "fevers", the trailing
///    `s` stays outside the span).
///
/// Candidates overlapping a span in `consumed` are skipped, so repeated
/// extracts anchor to successive occurrences. Earliest candidate wins.
pub fn locate_span(
    extract: &str,
    note_text: &str,
    body_span: Span,
    consumed: &[Span],
) -> Option<Span> {
    let body: Vec<char> = text::slice_chars(note_text, body_span.start, body_span.end)?
        .chars()
        .map(text::fold_char)
        .collect();
    let needle: Vec<char> = extract.chars().map(text::fold_char).collect();

    let free = |span: &Span| !consumed.iter().any(|c| c.overlaps(span));
    let to_note = |start: usize, end: usize| Span::new(body_span.start + start, body_span.start + end);

    // Verbatim substring.
    if !needle.is_empty() {
        for start in 0..=body.len().saturating_sub(needle.len()) {
            if body[start..start + needle.len()] == needle[..] {
                let span = to_note(start, start + needle.len());
                if free(&span) {
                    return Some(span);
                }
            }
        }
    }

    // Whitespace-normalized.
    let norm_needle = normalize_ws(&needle);
    let (norm_body, positions) = normalize_ws_mapped(&body);
    if !norm_needle.is_empty() {
        for start in 0..=norm_body.len().saturating_sub(norm_needle.len()) {
            if norm_body[start..start + norm_needle.len()] == norm_needle[..] {
                let first = positions[start];
                let last = positions[start + norm_needle.len() - 1];
                let span = to_note(first, last + 1);
                if free(&span) {
                    return Some(span);
                }
            }
        }
    }

    // Token match.
    let needle_tokens = tokenize(&needle);
    let body_tokens = tokenize(&body);
    if needle_tokens.is_empty() {
        return None;
    }
    let k = needle_tokens.len();
    if body_tokens.len() < k {
        return None;
    }
    for start in 0..=body_tokens.len() - k {
        let mut end = 0usize;
        let mut all = true;
        for (offset, needle_token) in needle_tokens.iter().enumerate() {
            let body_token = &body_tokens[start + offset];
            match token_match(&body[body_token.0..body_token.1], &needle[needle_token.0..needle_token.1]) {
                Some(matched_len) => end = body_token.0 + matched_len,
                None => {
                    all = false;
                    break;
                }
            }
        }
        if all {
            let span = to_note(body_tokens[start].0, end);
            if free(&span) {
                return Some(span);
            }
        }
    }
    None
}

/// Collapse whitespace runs to single spaces and trim the ends.
fn normalize_ws(chars: &[char]) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len());
    for &c in chars {
        if c.is_whitespace() {
            if !out.is_empty() && out.last() != Some(&' ') {
                out.push(' ');
            }
        } else {
            out.push(c);
        }
    }
    if out.last() == Some(&' ') {
        out.pop();
    }
    out
}

/// Like [`normalize_ws`], also returning each normalized character's
/// original index (a collapsed space maps to its first whitespace char).
fn normalize_ws_mapped(chars: &[char]) -> (Vec<char>, Vec<usize>) {
    let mut out = Vec::with_capacity(chars.len());
    let mut positions = Vec::with_capacity(chars.len());
    for (idx, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            if !out.is_empty() && out.last() != Some(&' ') {
                out.push(' ');
                positions.push(idx);
            }
        } else {
            out.push(c);
            positions.push(idx);
        }
    }
    if out.last() == Some(&' ') {
        out.pop();
        positions.pop();
    }
    (out, positions)
}

/// Alphanumeric token ranges `(start, end)` in `chars`.
fn tokenize(chars: &[char]) -> Vec<(usize, usize)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (idx, c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            start.get_or_insert(idx);
        } else if let Some(s) = start.take() {
            tokens.push((s, idx));
        }
    }
    if let Some(s) = start {
        tokens.push((s, chars.len()));
    }
    tokens
}

/// Token comparison tolerating one trailing `s` on either side. Returns the
/// matched length of the body token (excluding a body-side trailing `s`).
fn token_match(body_token: &[char], needle_token: &[char]) -> Option<usize> {
    if body_token == needle_token {
        return Some(body_token.len());
    }
    // Body has the plural: anchor only the stem.
    if body_token.len() == needle_token.len() + 1
        && body_token.last() == Some(&'s')
        && &body_token[..needle_token.len()] == needle_token
    {
        return Some(needle_token.len());
    }
    // Extract has the plural: the whole body token is the match.
    if needle_token.len() == body_token.len() + 1
        && needle_token.last() == Some(&'s')
        && &needle_token[..body_token.len()] == body_token
    {
        return Some(body_token.len());
    }
    None
}

// ---------------------------------------------------------------------------
// Classification parsing and filtering

/// Outcome of parsing a classification response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedCategory {
    /// Text after the last `-->` arrow.
    Category(String),
    /// The model answered the literal `None`.
    NoneLiteral,
    /// No arrow pattern and not a bare `None`.
    NoPattern,
}

/// Parse a `<disease> --> <category>` response. The last arrow wins (models
/// sometimes restate the examples first); the category runs to the end of
/// that line. A response that is just `None` (with or without an arrow)
/// means "not a ROS entity".
pub fn parse_system(response: &str) -> ParsedCategory {
    match response.rfind("-->") {
        Some(idx) => {
            let rest = &response[idx + 3..];
            let line = rest.lines().next().unwrap_or("");
            let category = line.trim();
            if category.is_empty() {
                ParsedCategory::NoPattern
            } else if category.eq_ignore_ascii_case("none") {
                ParsedCategory::NoneLiteral
            } else {
                ParsedCategory::Category(category.to_string())
            }
        }
        None => {
            if response.trim().eq_ignore_ascii_case("none") {
                ParsedCategory::NoneLiteral
            } else {
                ParsedCategory::NoPattern
            }
        }
    }
}

/// Why a detection was dropped from the kept list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// Classifier answered `None`: not a disease, symptom, or body system.
    NoneCategory,
    /// Classifier named something outside the 14 systems.
    InvalidCategory,
    /// Classification response had no recognizable category at all.
    NoArrowPattern,
    /// The classification request itself failed.
    ClassificationFailed,
}

/// Filter decision for one classified detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterOutcome {
    Kept(BodySystem),
    Discarded {
        reason: DiscardReason,
        /// The offending category text, when there was one.
        category: Option<String>,
    },
}

/// Keep a detection only when its parsed category canonicalizes to one of
/// the 14 body systems.
pub fn valid_system_filter(parsed: &ParsedCategory) -> FilterOutcome {
    match parsed {
        ParsedCategory::Category(raw) => match canonicalize_system(raw) {
            CategoryResolution::System(system) => FilterOutcome::Kept(system),
            CategoryResolution::NoneLiteral => FilterOutcome::Discarded {
                reason: DiscardReason::NoneCategory,
                category: Some(raw.clone()),
            },
            CategoryResolution::Invalid => FilterOutcome::Discarded {
                reason: DiscardReason::InvalidCategory,
                category: Some(raw.clone()),
            },
        },
        ParsedCategory::NoneLiteral => FilterOutcome::Discarded {
            reason: DiscardReason::NoneCategory,
            category: None,
        },
        ParsedCategory::NoPattern => FilterOutcome::Discarded {
            reason: DiscardReason::NoArrowPattern,
            category: None,
        },
    }
}

// ---------------------------------------------------------------------------
// Per-note orchestration

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Recognition,
    Classification,
}

/// A non-fatal failure recorded on the note it affected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

/// A detection dropped by the valid-system filter (or by a failed
/// classification request), kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedDetection {
    #[serde(flatten)]
    pub detection: Detection,
    pub reason: DiscardReason,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
}

/// Everything the pipeline produced for one note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub note_id: String,
    pub ros_found: bool,
    pub detections: Vec<Detection>,
    pub discarded: Vec<DiscardedDetection>,
    pub stage_errors: Vec<StageError>,
}

impl PipelineOutput {
    fn empty(note_id: &str, ros_found: bool) -> Self {
        Self {
            note_id: note_id.to_string(),
            ros_found,
            detections: Vec::new(),
            discarded: Vec::new(),
            stage_errors: Vec::new(),
        }
    }
}

/// Run the full pipeline on one note. Failures (backend errors, unparseable
/// responses) are recorded as stage errors or discards; this function
/// always produces an output record.
pub fn run_note(
    note: &ClinicalNote,
    lexicon: &HeaderLexicon,
    backend: &dyn Backend,
    config: &GenerationConfig,
) -> PipelineOutput {
    let Some(segment) = segment_ros(&note.text, lexicon) else {
        return PipelineOutput::empty(&note.note_id, false);
    };
    let mut output = PipelineOutput::empty(&note.note_id, true);

    let body = segment.body_text(&note.text);
    if body.trim().is_empty() {
        output.stage_errors.push(StageError {
            stage: Stage::Recognition,
            message: "ROS section body is empty; recognition skipped".to_string(),
        });
        return output;
    }

    let ner_request = build_ner_prompt(body);
    let ner_response = match backend.complete(&ner_request, config) {
        Ok(response) => response,
        Err(err) => {
            output.stage_errors.push(StageError {
                stage: Stage::Recognition,
                message: err.to_string(),
            });
            return output;
        }
    };
    let entities = match parse_entities(&ner_response) {
        Ok(entities) => entities,
        Err(err) => {
            output.stage_errors.push(StageError {
                stage: Stage::Recognition,
                message: err.to_string(),
            });
            return output;
        }
    };

    // Localize in model output order so repeated extracts consume
    // occurrences left to right.
    let mut consumed: Vec<Span> = Vec::new();
    let mut located: Vec<(RawEntity, Option<Span>)> = Vec::with_capacity(entities.len());
    for entity in entities {
        let span = locate_span(&entity.extract, &note.text, segment.body_span, &consumed);
        if let Some(span) = span {
            consumed.push(span);
        }
        located.push((entity, span));
    }

    for (entity, span) in located {
        let cls_request = build_cls_prompt(&entity.extract);
        let detection = Detection {
            extract: entity.extract.clone(),
            status: entity.status,
            system: None,
            span,
            raw_ner: entity.raw.clone(),
            raw_cls: None,
        };
        match backend.complete(&cls_request, config) {
            Ok(response) => {
                let parsed = parse_system(&response);
                let detection = Detection {
                    raw_cls: Some(response),
                    ..detection
                };
                match valid_system_filter(&parsed) {
                    FilterOutcome::Kept(system) => output.detections.push(Detection {
                        system: Some(system),
                        ..detection
                    }),
                    FilterOutcome::Discarded { reason, category } => {
                        output.discarded.push(DiscardedDetection {
                            detection,
                            reason,
                            category,
                        })
                    }
                }
            }
            Err(err) => {
                output.stage_errors.push(StageError {
                    stage: Stage::Classification,
                    message: format!("extract {:?}: {err}", entity.extract),
                });
                output.discarded.push(DiscardedDetection {
                    detection,
                    reason: DiscardReason::ClassificationFailed,
                    category: None,
                });
            }
        }
    }
    output
}

/// Run the pipeline over `notes` with a pool of `workers` threads sharing
/// one backend. Results come back in input order regardless of worker
/// count, so output files are deterministic for a deterministic backend.
pub fn run_notes(
    notes: &[ClinicalNote],
    lexicon: &HeaderLexicon,
    backend: &dyn Backend,
    config: &GenerationConfig,
    workers: usize,
) -> Vec<PipelineOutput> {
    let workers = workers.max(1).min(notes.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<PipelineOutput>>> = Mutex::new(vec![None; notes.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(note) = notes.get(idx) else {
                    break;
                };
                let output = run_note(note, lexicon, backend, config);
                slots.lock().expect("output slot lock")[idx] = Some(output);
            });
        }
    });

    slots
        .into_inner()
        .expect("output slot lock")
        .into_iter()
        .map(|slot| slot.expect("every note produced an output"))
        .collect()
}

// ---------------------------------------------------------------------------
// Output files

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: invalid output record: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Serialize output records as JSON Lines, one note per line, input order.
pub fn outputs_to_jsonl(outputs: &[PipelineOutput]) -> String {
    let mut out = String::new();
    for record in outputs {
        out.push_str(&serde_json::to_string(record).expect("output record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_outputs(outputs: &[PipelineOutput], path: &std::path::Path) -> Result<(), OutputError> {
    std::fs::write(path, outputs_to_jsonl(outputs)).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_outputs(path: &std::path::Path) -> Result<Vec<PipelineOutput>, OutputError> {
    let raw = std::fs::read_to_string(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut outputs = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PipelineOutput =
            serde_json::from_str(line).map_err(|source| OutputError::Record {
                path: path.display().to_string(),
                line: idx + 1,
                source,
            })?;
        outputs.push(record);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendError;

    #[test]
    fn ner_prompt_embeds_body_and_instruction() {
        let req = build_ner_prompt("No fever. No chills.");
        assert_eq!(req.system_prompt, NER_SYSTEM_PROMPT);
        assert_eq!(
            req.user_message,
            "No fever. No chills.\n\nExtract the ROS entities from the text above. Output in JSON format."
        );
    }

    #[test]
    fn cls_prompt_user_message_is_the_extract() {
        let req = build_cls_prompt("back pain");
        assert_eq!(req.system_prompt, CLS_SYSTEM_PROMPT);
        assert_eq!(req.user_message, "back pain");
    }

    #[test]
    fn parses_plain_array() {
        let entities = parse_entities(
            r#"[{"extract": "fever", "status": "positive"}, {"extract": "cough", "status": "negative"}]"#,
        )
        .unwrap();
        assert_eq!(entities.len(), 2);
        assert_eq!(entities[0].extract, "fever");
        assert_eq!(entities[0].status, Status::Positive);
        assert_eq!(entities[0].raw, r#"{"extract": "fever", "status": "positive"}"#);
    }

    #[test]
    fn parses_array_inside_prose_and_fences() {
        let response = "Here are the entities:\n```json\n[\n  {\"extract\": \"nausea\", \"status\": \"negative\"}\n]\n```\nLet me know if you need more.";
        let entities = parse_entities(response).unwrap();
        assert_eq!(entities.len(), 1);
        assert_eq!(entities[0].extract, "nausea");
    }

    #[test]
    fn skips_non_json_brackets_before_the_array() {
        let response = r#"[sic] the findings [1] are: [{"extract": "rash", "status": "positive"}]"#;
        let entities = parse_entities(response).unwrap();
        assert_eq!(entities.len(), 1);
        assert_eq!(entities[0].extract, "rash");
    }

    #[test]
    fn brackets_inside_strings_do_not_confuse_matching() {
        let response = r#"[{"extract": "pain [severe]", "status": "positive"}]"#;
        let entities = parse_entities(response).unwrap();
        assert_eq!(entities[0].extract, "pain [severe]");
    }

    #[test]
    fn empty_array_is_no_entities() {
        assert_eq!(parse_entities("[]").unwrap(), Vec::new());
        assert_eq!(parse_entities("Nothing found: []").unwrap(), Vec::new());
    }

    #[test]
    fn missing_array_and_bad_elements_are_errors() {
        assert_eq!(parse_entities("I found no JSON here").unwrap_err(), NerParseError::NoJsonFound);
        // A bare object without the array wrapper does not count.
        assert_eq!(
            parse_entities(r#"{"extract": "fever", "status": "positive"}"#).unwrap_err(),
            NerParseError::NoJsonFound
        );
        assert!(matches!(
            parse_entities(r#"[{"status": "positive"}]"#).unwrap_err(),
            NerParseError::ElementMalformed { index: 0, .. }
        ));
        assert!(matches!(
            parse_entities(r#"[{"extract": "  ", "status": "positive"}]"#).unwrap_err(),
            NerParseError::ElementMalformed { index: 0, .. }
        ));
        assert_eq!(
            parse_entities(r#"[{"extract": "fever", "status": "present"}]"#).unwrap_err(),
            NerParseError::InvalidStatus { index: 0, status: "present".into() }
        );
    }

    #[test]
    fn exact_duplicates_collapse() {
        let entities = parse_entities(
            r#"[{"extract": "fever", "status": "positive"},
                {"extract": "fever", "status": "positive"},
                {"extract": "fever", "status": "negative"}]"#,
        )
        .unwrap();
        assert_eq!(entities.len(), 2);
    }

    #[test]
    fn ner_prompt_example_parses_to_its_four_entities() {
        // The system prompt's own JSON example must round-trip through the
        // parser: it defines the contract responses are held to.
        let entities = parse_entities(NER_SYSTEM_PROMPT).unwrap();
        let summary: Vec<(&str, Status)> = entities
            .iter()
            .map(|e| (e.extract.as_str(), e.status))
            .collect();
        assert_eq!(
            summary,
            vec![
                ("fever", Status::Positive),
                ("headache", Status::Negative),
                ("back pain", Status::Negative),
                ("GI", Status::Negative),
            ]
        );
    }

    fn body_span(note: &str) -> Span {
        Span::new(0, crate::text::char_count(note))
    }

    #[test]
    fn locates_verbatim_case_insensitive() {
        let note = "Denies Fever or chills.";
        let span = locate_span("fever", note, body_span(note), &[]).unwrap();
        assert_eq!(span, Span::new(7, 12));
    }

    #[test]
    fn repeated_extracts_consume_occurrences() {
        let note = "fever now, fever last week";
        let first = locate_span("fever", note, body_span(note), &[]).unwrap();
        assert_eq!(first, Span::new(0, 5));
        let second = locate_span("fever", note, body_span(note), &[first]).unwrap();
        assert_eq!(second, Span::new(11, 16));
        assert_eq!(locate_span("fever", note, body_span(note), &[first, second]), None);
    }

    #[test]
    fn whitespace_differences_still_anchor() {
        let note = "no\n  back   pain today";
        let span = locate_span("back pain", note, body_span(note), &[]).unwrap();
        assert_eq!(crate::text::slice_chars(note, span.start, span.end), Some("back   pain"));
    }

    #[test]
    fn plural_body_token_anchors_stem_only() {
        let note = "Reports fevers and aches.";
        let span = locate_span("fever", note, body_span(note), &[]).unwrap();
        assert_eq!(crate::text::slice_chars(note, span.start, span.end), Some("fever"));
    }

    #[test]
    fn plural_extract_matches_singular_body() {
        let note = "denies night sweat episodes";
        let span = locate_span("night sweats", note, body_span(note), &[]).unwrap();
        assert_eq!(crate::text::slice_chars(note, span.start, span.end), Some("night sweat"));
    }

    #[test]
    fn token_match_spans_punctuation() {
        let note = "no muscle/joint pain reported";
        let span = locate_span("muscle joint pain", note, body_span(note), &[]).unwrap();
        assert_eq!(
            crate::text::slice_chars(note, span.start, span.end),
            Some("muscle/joint pain")
        );
    }

    #[test]
    fn tokens_must_be_consecutive() {
        let note = "muscle weakness but no joint pain";
        // "muscle pain" would need to skip over intervening tokens.
        assert_eq!(locate_span("muscle pain", note, body_span(note), &[]), None);
    }

    #[test]
    fn localization_stays_inside_the_body_span() {
        let note = "fever mentioned early. ROS: no cough.";
        // Body covers only " no cough."
        let body = Span::new(27, crate::text::char_count(note));
        assert_eq!(locate_span("fever", note, body, &[]), None);
        let span = locate_span("cough", note, body, &[]).unwrap();
        assert_eq!(crate::text::slice_chars(note, span.start, span.end), Some("cough"));
    }

    #[test]
    fn offsets_are_character_based() {
        let note = "Temp 38.5°C. ROS: fever ≥ 39°C denied.";
        let body = Span::new(17, crate::text::char_count(note));
        let span = locate_span("fever", note, body, &[]).unwrap();
        assert_eq!(crate::text::slice_chars(note, span.start, span.end), Some("fever"));
        assert_eq!(span.start, 18);
    }

    #[test]
    fn classification_parse_takes_last_arrow() {
        assert_eq!(
            parse_system("prostate --> Genitourinary"),
            ParsedCategory::Category("Genitourinary".into())
        );
        assert_eq!(
            parse_system("Example: nausea --> Gastrointestinal\ndizziness --> Neurological"),
            ParsedCategory::Category("Neurological".into())
        );
        // Category stops at the end of the arrow's line.
        assert_eq!(
            parse_system("x --> Endocrine\nHope this helps!"),
            ParsedCategory::Category("Endocrine".into())
        );
    }

    #[test]
    fn classification_parse_none_and_no_pattern() {
        assert_eq!(parse_system("None"), ParsedCategory::NoneLiteral);
        assert_eq!(parse_system("  none \n"), ParsedCategory::NoneLiteral);
        assert_eq!(parse_system("Otherwise --> None"), ParsedCategory::NoneLiteral);
        assert_eq!(parse_system("I cannot classify this."), ParsedCategory::NoPattern);
        assert_eq!(parse_system("x --> "), ParsedCategory::NoPattern);
    }

    #[test]
    fn filter_keeps_only_valid_systems() {
        assert_eq!(
            valid_system_filter(&ParsedCategory::Category("Genitourinary".into())),
            FilterOutcome::Kept(BodySystem::Genitourinary)
        );
        assert_eq!(
            valid_system_filter(&ParsedCategory::Category("Vital Signs".into())),
            FilterOutcome::Discarded {
                reason: DiscardReason::InvalidCategory,
                category: Some("Vital Signs".into())
            }
        );
        assert_eq!(
            valid_system_filter(&ParsedCategory::NoneLiteral),
            FilterOutcome::Discarded { reason: DiscardReason::NoneCategory, category: None }
        );
        assert_eq!(
            valid_system_filter(&ParsedCategory::NoPattern),
            FilterOutcome::Discarded { reason: DiscardReason::NoArrowPattern, category: None }
        );
    }

    /// Test backend: answers recognition requests with a fixed response and
    /// classification requests from a lookup table.
    struct Scripted {
        ner: String,
        cls: Vec<(&'static str, &'static str)>,
    }

    impl Backend for Scripted {
        fn complete(
            &self,
            request: &ChatRequest,
            _config: &GenerationConfig,
        ) -> Result<String, BackendError> {
            if request.system_prompt == NER_SYSTEM_PROMPT {
                Ok(self.ner.clone())
            } else {
                self.cls
                    .iter()
                    .find(|(extract, _)| *extract == request.user_message)
                    .map(|(_, response)| response.to_string())
                    .ok_or_else(|| BackendError::Transport {
                        backend: "scripted",
                        digest: String::new(),
                        message: format!("no scripted reply for {:?}", request.user_message),
                    })
            }
        }

        fn kind(&self) -> &'static str {
            "scripted"
        }
    }

    fn note(text: &str) -> ClinicalNote {
        ClinicalNote {
            note_id: "n1".into(),
            text: text.into(),
        }
    }

    #[test]
    fn run_note_full_path() {
        let backend = Scripted {
            ner: r#"[{"extract": "fever", "status": "negative"},
                     {"extract": "prostate", "status": "positive"},
                     {"extract": "Otherwise", "status": "positive"}]"#
                .into(),
            cls: vec![
                ("fever", "fever --> Constitutional Symptoms"),
                ("prostate", "prostate --> Genitourinary"),
                ("Otherwise", "None"),
            ],
        };
        let text = "ROS: Denies fever. Prostate issues noted.\nPLAN: rest\n";
        let output = run_note(
            &note(text),
            &HeaderLexicon::default(),
            &backend,
            &GenerationConfig::new("m"),
        );
        assert!(output.ros_found);
        assert!(output.stage_errors.is_empty());
        assert_eq!(output.detections.len(), 2);
        let fever = &output.detections[0];
        assert_eq!(fever.extract, "fever");
        assert_eq!(fever.system, Some(BodySystem::Constitutional));
        let span = fever.span.unwrap();
        assert_eq!(crate::text::slice_chars(text, span.start, span.end), Some("fever"));
        assert_eq!(output.discarded.len(), 1);
        assert_eq!(output.discarded[0].reason, DiscardReason::NoneCategory);
    }

    #[test]
    fn run_note_without_ros_is_quiet() {
        let backend = Scripted { ner: "[]".into(), cls: vec![] };
        let output = run_note(
            &note("CHIEF COMPLAINT: cough\nPLAN: rest\n"),
            &HeaderLexicon::default(),
            &backend,
            &GenerationConfig::new("m"),
        );
        assert!(!output.ros_found);
        assert!(output.detections.is_empty() && output.stage_errors.is_empty());
    }

    #[test]
    fn run_note_records_recognition_failures() {
        let backend = Scripted { ner: "I will not produce JSON.".into(), cls: vec![] };
        let output = run_note(
            &note("ROS: fever\n"),
            &HeaderLexicon::default(),
            &backend,
            &GenerationConfig::new("m"),
        );
        assert!(output.ros_found);
        assert_eq!(output.stage_errors.len(), 1);
        assert_eq!(output.stage_errors[0].stage, Stage::Recognition);
        assert!(output.detections.is_empty());
    }

    #[test]
    fn run_note_empty_ros_body() {
        let backend = Scripted { ner: "[]".into(), cls: vec![] };
        let output = run_note(
            &note("ROS:\nPLAN: rest\n"),
            &HeaderLexicon::default(),
            &backend,
            &GenerationConfig::new("m"),
        );
        assert!(output.ros_found);
        assert_eq!(output.stage_errors.len(), 1);
        assert!(output.stage_errors[0].message.contains("empty"));
    }

    #[test]
    fn classification_failure_discards_only_that_entity() {
        let backend = Scripted {
            ner: r#"[{"extract": "fever", "status": "positive"},
                     {"extract": "mystery", "status": "positive"}]"#
                .into(),
            cls: vec![("fever", "fever --> Constitutional Symptoms")],
        };
        let output = run_note(
            &note("ROS: fever and mystery symptom\n"),
            &HeaderLexicon::default(),
            &backend,
            &GenerationConfig::new("m"),
        );
        assert_eq!(output.detections.len(), 1);
        assert_eq!(output.discarded.len(), 1);
        assert_eq!(output.discarded[0].reason, DiscardReason::ClassificationFailed);
        assert_eq!(output.stage_errors.len(), 1);
        assert_eq!(output.stage_errors[0].stage, Stage::Classification);
    }

    #[test]
    fn run_notes_order_is_stable_across_worker_counts() {
        let backend = Scripted {
            ner: r#"[{"extract": "fever", "status": "positive"}]"#.into(),
            cls: vec![("fever", "fever --> Constitutional Symptoms")],
        };
        let notes: Vec<ClinicalNote> = (0..7)
            .map(|i| ClinicalNote {
                note_id: format!("n{i}"),
                text: format!("ROS: fever on day {i}\n"),
            })
            .collect();
        let config = GenerationConfig::new("m");
        let lexicon = HeaderLexicon::default();
        let one = run_notes(&notes, &lexicon, &backend, &config, 1);
        let eight = run_notes(&notes, &lexicon, &backend, &config, 8);
        assert_eq!(one, eight);
        assert_eq!(one.len(), 7);
        assert!(one.iter().enumerate().all(|(i, o)| o.note_id == format!("n{i}")));
    }

    #[test]
    fn output_records_round_trip_as_jsonl() {
        let backend = Scripted {
            ner: r#"[{"extract": "fever", "status": "positive"}]"#.into(),
            cls: vec![("fever", "fever --> Constitutional Symptoms")],
        };
        let outputs = run_notes(
            &[note("ROS: fever\n")],
            &HeaderLexicon::default(),
            &backend,
            &GenerationConfig::new("m"),
            1,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_outputs(&outputs, &path).unwrap();
        let back = load_outputs(&path).unwrap();
        assert_eq!(back, outputs);
    }
}
