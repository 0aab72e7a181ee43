//! Core data model: clinical notes, character spans, status and body-system
//! labels, gold annotations, pipeline detections, and corpus loading.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text;

/// A plain-text clinical note, the unit of batch processing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalNote {
    /// Unique, stable identifier (the note file's stem).
    pub note_id: String,
    /// Full note text. All spans downstream index into this exact string.
    pub text: String,
}

/// Character interval into a note's text: `start` inclusive, `end`
/// exclusive, both Unicode scalar offsets.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Number of characters shared with `other`.
    pub fn overlap_len(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Positive/negative polarity of a ROS entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Positive,
    Negative,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Positive => "positive",
            Status::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid status '{0}': expected 'positive' or 'negative'")]
pub struct ParseStatusError(pub String);

impl FromStr for Status {
    type Err = ParseStatusError;

    /// Case-insensitive; anything but positive/negative is a parse error,
    /// never silently coerced.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Ok(Status::Positive),
            "negative" => Ok(Status::Negative),
            _ => Err(ParseStatusError(s.to_string())),
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Status {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// The 14 standard body systems a ROS entity can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BodySystem {
    Constitutional,
    Eyes,
    Ent,
    Cardiovascular,
    Respiratory,
    HematologicLymphatic,
    Gastrointestinal,
    Genitourinary,
    Musculoskeletal,
    Integumentary,
    Neurological,
    Psychiatric,
    Endocrine,
    AllergicImmunologic,
}

impl BodySystem {
    pub const ALL: [BodySystem; 14] = [
        BodySystem::Constitutional,
        BodySystem::Eyes,
        BodySystem::Ent,
        BodySystem::Cardiovascular,
        BodySystem::Respiratory,
        BodySystem::HematologicLymphatic,
        BodySystem::Gastrointestinal,
        BodySystem::Genitourinary,
        BodySystem::Musculoskeletal,
        BodySystem::Integumentary,
        BodySystem::Neurological,
        BodySystem::Psychiatric,
        BodySystem::Endocrine,
        BodySystem::AllergicImmunologic,
    ];

    /// Stable identifier used in annotation files and pipeline output.
    pub fn canonical_id(self) -> &'static str {
        match self {
            BodySystem::Constitutional => "constitutional",
            BodySystem::Eyes => "eyes",
            BodySystem::Ent => "ent",
            BodySystem::Cardiovascular => "cardiovascular",
            BodySystem::Respiratory => "respiratory",
            BodySystem::HematologicLymphatic => "hematologic_lymphatic",
            BodySystem::Gastrointestinal => "gastrointestinal",
            BodySystem::Genitourinary => "genitourinary",
            BodySystem::Musculoskeletal => "musculoskeletal",
            BodySystem::Integumentary => "integumentary",
            BodySystem::Neurological => "neurological",
            BodySystem::Psychiatric => "psychiatric",
            BodySystem::Endocrine => "endocrine",
            BodySystem::AllergicImmunologic => "allergic_immunologic",
        }
    }

    /// Name used in rendered reports.
    pub fn display_name(self) -> &'static str {
        match self {
            BodySystem::Constitutional => "Constitutional",
            BodySystem::Eyes => "Eyes",
            BodySystem::Ent => "ENT",
            BodySystem::Cardiovascular => "Cardiovascular",
            BodySystem::Respiratory => "Respiratory",
            BodySystem::HematologicLymphatic => "Hematologic/Lymphatic",
            BodySystem::Gastrointestinal => "Gastrointestinal",
            BodySystem::Genitourinary => "Genitourinary",
            BodySystem::Musculoskeletal => "Musculoskeletal",
            BodySystem::Integumentary => "Integumentary",
            BodySystem::Neurological => "Neurological",
            BodySystem::Psychiatric => "Psychiatric",
            BodySystem::Endocrine => "Endocrine",
            BodySystem::AllergicImmunologic => "Allergic/Immunologic",
        }
    }

    /// Accepted spellings, lowercase. The classification prompt and the
    /// narrative system list spell several systems differently; this table
    /// is the single point where both vocabularies resolve to one value.
    fn aliases(self) -> &'static [&'static str] {
        match self {
            BodySystem::Constitutional => &["constitutional", "constitutional symptoms"],
            BodySystem::Eyes => &["eyes"],
            BodySystem::Ent => &[
                "ent",
                "ent (ears, nose, throat)",
                "ent (ears, nose, mouth, and throat)",
            ],
            BodySystem::Cardiovascular => &["cardiovascular"],
            BodySystem::Respiratory => &["respiratory"],
            BodySystem::HematologicLymphatic => {
                &["hematologic_lymphatic", "hematologic/lymphatic"]
            }
            BodySystem::Gastrointestinal => &["gastrointestinal"],
            BodySystem::Genitourinary => &["genitourinary"],
            BodySystem::Musculoskeletal => &["musculoskeletal"],
            BodySystem::Integumentary => &["integumentary", "integumentary/breast"],
            BodySystem::Neurological => &["neurological"],
            BodySystem::Psychiatric => &["psychiatric"],
            BodySystem::Endocrine => &["endocrine"],
            BodySystem::AllergicImmunologic => {
                &["allergic_immunologic", "allergic/immunologic"]
            }
        }
    }
}

impl fmt::Display for BodySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown body system '{0}'")]
pub struct ParseSystemError(pub String);

impl FromStr for BodySystem {
    type Err = ParseSystemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match canonicalize_system(s) {
            CategoryResolution::System(sys) => Ok(sys),
            _ => Err(ParseSystemError(s.to_string())),
        }
    }
}

impl Serialize for BodySystem {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_id())
    }
}

impl<'de> Deserialize<'de> for BodySystem {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Outcome of resolving a classification category string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CategoryResolution {
    /// One of the 14 canonical systems.
    System(BodySystem),
    /// The literal "None" response: the model judged the input not to be a
    /// disease, symptom, body location, or body system.
    NoneLiteral,
    /// Any other unresolvable string.
    Invalid,
}

/// Resolve a category string through the alias table. Total function:
/// matching is case-insensitive and whitespace-trimmed, and every input
/// maps to a system, the `None` literal, or `Invalid`.
pub fn canonicalize_system(category: &str) -> CategoryResolution {
    let needle = category.trim().to_lowercase();
    if needle == "none" {
        return CategoryResolution::NoneLiteral;
    }
    for system in BodySystem::ALL {
        if system.aliases().iter().any(|alias| *alias == needle) {
            return CategoryResolution::System(system);
        }
    }
    CategoryResolution::Invalid
}

/// A gold ROS entity: character span, its surface text, and its two labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub span: Span,
    /// Must equal the note text at `span` exactly; validated on load.
    pub surface: String,
    pub status: Status,
    pub system: BodySystem,
}

/// One pipeline output entity.
///
/// `system` is present exactly for detections that passed the valid-system
/// filter; `span` is present when localization anchored the extract back
/// into the note text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub extract: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub system: Option<BodySystem>,
    #[serde(flatten, skip_serializing_if = "Option::is_none", default)]
    pub span: Option<Span>,
    /// Verbatim entity fragment from the recognition response.
    pub raw_ner: String,
    /// Verbatim classification response, when one was received.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_cls: Option<String>,
}

/// One note together with its gold annotations, sorted by span start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub note: ClinicalNote,
    pub annotations: Vec<Annotation>,
}

/// A validated corpus, sorted by note id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn get(&self, note_id: &str) -> Option<&CorpusEntry> {
        self.entries
            .binary_search_by(|e| e.note.note_id.as_str().cmp(note_id))
            .ok()
            .map(|idx| &self.entries[idx])
    }

    pub fn total_annotations(&self) -> usize {
        self.entries.iter().map(|e| e.annotations.len()).sum()
    }

    /// Each annotation carries exactly two labels (status + system).
    pub fn total_labels(&self) -> usize {
        2 * self.total_annotations()
    }
}

/// Wire form of one annotation-file line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub note_id: String,
    pub entities: Vec<AnnotationEntity>,
}

/// Wire form of one gold entity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationEntity {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub status: Status,
    pub system: BodySystem,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: invalid annotation record: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("annotation record references unknown note '{note_id}'")]
    MissingNote { note_id: String },
    #[error("duplicate annotation record for note '{note_id}'")]
    DuplicateRecord { note_id: String },
    #[error("note '{note_id}': span {span} out of range (note has {len} characters)")]
    OffsetOutOfRange {
        note_id: String,
        span: Span,
        len: usize,
    },
    #[error(
        "note '{note_id}': surface mismatch at {span}: annotation says {expected:?}, note text has {found:?}"
    )]
    SurfaceMismatch {
        note_id: String,
        span: Span,
        expected: String,
        found: String,
    },
    #[error("note '{note_id}': overlapping gold annotations {first} and {second}")]
    OverlappingAnnotations {
        note_id: String,
        first: Span,
        second: Span,
    },
    #[error("note file {path} has no usable file stem")]
    BadNoteName { path: String },
}

/// Load every `.txt` file in `notes_dir` as a note (id = file stem),
/// sorted by note id.
pub fn load_notes(notes_dir: &Path) -> Result<Vec<ClinicalNote>, CorpusError> {
    let read_err = |source| CorpusError::Io {
        path: notes_dir.display().to_string(),
        source,
    };
    let mut notes = Vec::new();
    for entry in fs::read_dir(notes_dir).map_err(read_err)? {
        let entry = entry.map_err(read_err)?;
        let path = entry.path();
        if path.extension().map_or(true, |ext| ext != "txt") {
            continue;
        }
        let note_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| CorpusError::BadNoteName {
                path: path.display().to_string(),
            })?
            .to_string();
        let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        notes.push(ClinicalNote { note_id, text });
    }
    notes.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    Ok(notes)
}

/// Load a corpus: one `.txt` file per note plus a JSON Lines annotation
/// file keyed by note id. Every annotation is validated against its note
/// (offset range, surface/offset agreement, disjoint spans) before the
/// corpus is returned.
pub fn load_corpus(notes_dir: &Path, annotations_file: &Path) -> Result<Corpus, CorpusError> {
    let notes = load_notes(notes_dir)?;
    let raw = fs::read_to_string(annotations_file).map_err(|source| CorpusError::Io {
        path: annotations_file.display().to_string(),
        source,
    })?;

    let mut by_note: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(line).map_err(|source| CorpusError::Record {
                path: annotations_file.display().to_string(),
                line: idx + 1,
                source,
            })?;
        let note = notes
            .iter()
            .find(|n| n.note_id == record.note_id)
            .ok_or_else(|| CorpusError::MissingNote {
                note_id: record.note_id.clone(),
            })?;
        if by_note.contains_key(&record.note_id) {
            return Err(CorpusError::DuplicateRecord {
                note_id: record.note_id,
            });
        }
        let mut annotations = Vec::with_capacity(record.entities.len());
        for entity in record.entities {
            annotations.push(validate_entity(note, entity)?);
        }
        annotations.sort_by_key(|a| a.span);
        for pair in annotations.windows(2) {
            if pair[0].span.overlaps(&pair[1].span) {
                return Err(CorpusError::OverlappingAnnotations {
                    note_id: note.note_id.clone(),
                    first: pair[0].span,
                    second: pair[1].span,
                });
            }
        }
        by_note.insert(record.note_id, annotations);
    }

    let entries = notes
        .into_iter()
        .map(|note| {
            let annotations = by_note.remove(&note.note_id).unwrap_or_default();
            CorpusEntry { note, annotations }
        })
        .collect();
    Ok(Corpus { entries })
}

fn validate_entity(
    note: &ClinicalNote,
    entity: AnnotationEntity,
) -> Result<Annotation, CorpusError> {
    let span = Span::new(entity.start, entity.end);
    let len = text::char_count(&note.text);
    if span.is_empty() || span.end > len {
        return Err(CorpusError::OffsetOutOfRange {
            note_id: note.note_id.clone(),
            span,
            len,
        });
    }
    let found = text::slice_chars(&note.text, span.start, span.end).unwrap_or_default();
    if found != entity.surface {
        return Err(CorpusError::SurfaceMismatch {
            note_id: note.note_id.clone(),
            span,
            expected: entity.surface,
            found: found.to_string(),
        });
    }
    Ok(Annotation {
        span,
        surface: entity.surface,
        status: entity.status,
        system: entity.system,
    })
}

/// Serialize a corpus's annotations back to the JSON Lines record format.
pub fn annotations_to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for entry in &corpus.entries {
        let record = AnnotationRecord {
            note_id: entry.note.note_id.clone(),
            entities: entry
                .annotations
                .iter()
                .map(|a| AnnotationEntity {
                    start: a.span.start,
                    end: a.span.end,
                    surface: a.surface.clone(),
                    status: a.status,
                    system: a.system,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("annotation record serializes"));
        out.push('\n');
    }
    out
}

/// Write the annotation records for `corpus` to `path`.
pub fn write_annotations(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut file = fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(annotations_to_jsonl(corpus).as_bytes())
        .map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
}
