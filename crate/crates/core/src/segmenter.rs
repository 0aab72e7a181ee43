//! Review of Systems section segmentation.
//!
//! Clinical notes are organized into sections introduced by header lines
//! ("CHIEF COMPLAINT:", "Review of Systems", ...). The segmenter finds the
//! first ROS header line and returns the character span of the section body:
//! everything up to the next recognized header line or the end of the note.
//!
//! A line counts as a header only when, after leading indentation, it begins
//! with a known header phrase followed by a colon or by the end of the line.
//! Prose mentions ("review of systems was discussed") never qualify.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::domain::Span;
use crate::text;

/// Default header lexicon compiled into the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../resources/default_lexicon.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
struct LexiconEntry {
    /// Header phrase, uppercase. Matching is case-insensitive.
    phrase: String,
    /// Whether this phrase introduces the ROS section (vs. merely ending it).
    is_ros: bool,
}

/// Section-header vocabulary: ROS synonyms plus the other headers that
/// terminate a ROS section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderLexicon {
    entries: Vec<LexiconEntry>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: empty header phrase")]
    EmptyPhrase { line: usize },
    #[error("lexicon has no ROS marker lines (prefix at least one header with '*')")]
    NoRosMarkers,
}

impl HeaderLexicon {
    /// Parse lexicon text: one header phrase per line, `#` comments, blank
    /// lines ignored, `*` prefix marking ROS synonyms.
    pub fn from_text(contents: &str) -> Result<Self, LexiconError> {
        let mut entries: Vec<LexiconEntry> = Vec::new();
        for (idx, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (is_ros, phrase) = match line.strip_prefix('*') {
                Some(rest) => (true, rest.trim()),
                None => (false, line),
            };
            if phrase.is_empty() {
                return Err(LexiconError::EmptyPhrase { line: idx + 1 });
            }
            let phrase = phrase.to_uppercase();
            if !entries.iter().any(|e| e.phrase == phrase) {
                entries.push(LexiconEntry { phrase, is_ros });
            }
        }
        if !entries.iter().any(|e| e.is_ros) {
            return Err(LexiconError::NoRosMarkers);
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        let contents = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&contents)
    }

    /// Number of header phrases, ROS synonyms included.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// ROS synonym phrases (uppercase).
    pub fn ros_phrases(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.is_ros)
            .map(|e| e.phrase.as_str())
    }
}

impl Default for HeaderLexicon {
    fn default() -> Self {
        Self::from_text(DEFAULT_LEXICON).expect("embedded lexicon parses")
    }
}

/// A located ROS section. Both spans are character offsets into the note.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RosSegment {
    /// The matched header phrase (indentation and colon excluded).
    pub header_span: Span,
    /// Section content: after the colon (or after the header line when the
    /// header stands alone) up to the next header line or end of note. May
    /// be empty for a bare header with nothing under it.
    pub body_span: Span,
}

impl RosSegment {
    pub fn header_text<'a>(&self, note_text: &'a str) -> &'a str {
        text::slice_chars(note_text, self.header_span.start, self.header_span.end)
            .expect("header span lies within the note it was segmented from")
    }

    pub fn body_text<'a>(&self, note_text: &'a str) -> &'a str {
        text::slice_chars(note_text, self.body_span.start, self.body_span.end)
            .expect("body span lies within the note it was segmented from")
    }
}

/// A qualifying header line.
struct HeaderLine {
    is_ros: bool,
    phrase_span: Span,
    /// Where section content begins: after the colon, or after the line's
    /// newline for a bare header.
    body_start: usize,
    /// Start of the line itself (used to end the previous section).
    line_start: usize,
}

/// Find the first ROS section of `note_text`, if any.
pub fn segment_ros(note_text: &str, lexicon: &HeaderLexicon) -> Option<RosSegment> {
    let chars: Vec<char> = note_text.chars().collect();
    let mut line_start = 0;
    let mut ros: Option<(Span, usize)> = None;

    while line_start <= chars.len() {
        let line_end = chars[line_start..]
            .iter()
            .position(|&c| c == '\n')
            .map(|off| line_start + off)
            .unwrap_or(chars.len());

        if let Some(header) = match_header_line(&chars, line_start, line_end, lexicon) {
            match (&ros, header.is_ros) {
                (None, true) => ros = Some((header.phrase_span, header.body_start)),
                (None, false) => {}
                (Some((phrase_span, body_start)), _) => {
                    // Any later header line ends the ROS body at the end of
                    // the previous line (newline and CR excluded).
                    let mut body_end = header.line_start.saturating_sub(1);
                    if body_end > 0 && chars[body_end - 1] == '\r' {
                        body_end -= 1;
                    }
                    let body_end = body_end.max(*body_start);
                    return Some(RosSegment {
                        header_span: *phrase_span,
                        body_span: Span::new(*body_start, body_end),
                    });
                }
            }
        }

        if line_end == chars.len() {
            break;
        }
        line_start = line_end + 1;
    }

    ros.map(|(phrase_span, body_start)| RosSegment {
        header_span: phrase_span,
        body_span: Span::new(body_start, chars.len().max(body_start)),
    })
}

/// Check whether the line `[line_start, line_end)` is a header line, and if
/// so which phrase it carries. The longest qualifying phrase wins, so
/// "ASSESSMENT AND PLAN" beats "ASSESSMENT" on the same line.
fn match_header_line(
    chars: &[char],
    line_start: usize,
    line_end: usize,
    lexicon: &HeaderLexicon,
) -> Option<HeaderLine> {
    // Trailing CR from CRLF notes is not line content.
    let content_end = if line_end > line_start && chars[line_end - 1] == '\r' {
        line_end - 1
    } else {
        line_end
    };

    let mut phrase_start = line_start;
    while phrase_start < content_end && matches!(chars[phrase_start], ' ' | '\t') {
        phrase_start += 1;
    }

    let mut best: Option<HeaderLine> = None;
    for entry in &lexicon.entries {
        let Some((phrase_end, body_start)) =
            qualify(chars, phrase_start, content_end, line_end, &entry.phrase)
        else {
            continue;
        };
        let longer = best
            .as_ref()
            .map_or(true, |b| phrase_end > b.phrase_span.end);
        if longer {
            best = Some(HeaderLine {
                is_ros: entry.is_ros,
                phrase_span: Span::new(phrase_start, phrase_end),
                body_start,
                line_start,
            });
        }
    }
    best
}

/// Try to match `phrase` at `phrase_start` with a header boundary after it:
/// optional spaces, then a colon or the end of the line. Returns the phrase
/// end and where the section body would begin.
fn qualify(
    chars: &[char],
    phrase_start: usize,
    content_end: usize,
    line_end: usize,
    phrase: &str,
) -> Option<(usize, usize)> {
    let mut pos = phrase_start;
    for pc in phrase.chars() {
        if pos >= content_end || text::fold_char(chars[pos]) != text::fold_char(pc) {
            return None;
        }
        pos += 1;
    }
    let phrase_end = pos;
    while pos < content_end && matches!(chars[pos], ' ' | '\t') {
        pos += 1;
    }
    if pos < content_end && chars[pos] == ':' {
        Some((phrase_end, pos + 1))
    } else if pos == content_end {
        // Bare header line: body starts on the next line.
        let body_start = if line_end < chars.len() {
            line_end + 1
        } else {
            chars.len()
        };
        Some((phrase_end, body_start))
    } else {
        None
    }
}
