//! Evaluation: span matching against gold annotations, the error counters,
//! and the derived metrics.
//!
//! Matching is detection-centric. Each detection lands in exactly one span
//! category:
//!
//! * **Exact (E)** — its span equals a gold span (one detection per gold);
//! * **Relaxed (R)** — its span overlaps gold by at least one character,
//!   bound to the gold annotation with the largest overlap. Several relaxed
//!   detections may bind one annotation (a split entity);
//! * **Over (O)** — no overlap with any gold span, or never localized.
//!
//! **Under (U)** counts gold annotations no detection touched. Every
//! annotation is exact-matched, relaxed-covered, or undetected, so
//! `E + covered_relaxed + U` equals the number of annotations.
//!
//! Label counters compare each bound detection's status and system against
//! its annotation: `T_E`/`T_R` status hits and `Y_E`/`Y_R` system hits,
//! split by span category. The derived metrics follow:
//!
//! * span errors `= R + U + O`, rated against total gold spans;
//! * label errors `= 2(E+R+U+O) − (T_E+T_R+Y_E+Y_R)`, rated against total
//!   gold labels (two per span);
//! * status accuracy `= (T_E+T_R)/(E+R)`, system accuracy
//!   `= (Y_E+Y_R)/(E+R)`, both undefined when `E+R = 0`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Annotation, Corpus, Detection, Span};
use crate::pipeline::PipelineOutput;

/// Raw counters for one evaluated run (or one note).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    #[serde(rename = "E")]
    pub exact: u32,
    #[serde(rename = "R")]
    pub relaxed: u32,
    #[serde(rename = "U")]
    pub under: u32,
    #[serde(rename = "O")]
    pub over: u32,
    #[serde(rename = "T_E")]
    pub status_exact: u32,
    #[serde(rename = "T_R")]
    pub status_relaxed: u32,
    #[serde(rename = "Y_E")]
    pub system_exact: u32,
    #[serde(rename = "Y_R")]
    pub system_relaxed: u32,
}

impl MetricCounts {
    pub fn add(&mut self, other: &MetricCounts) {
        self.exact += other.exact;
        self.relaxed += other.relaxed;
        self.under += other.under;
        self.over += other.over;
        self.status_exact += other.status_exact;
        self.status_relaxed += other.status_relaxed;
        self.system_exact += other.system_exact;
        self.system_relaxed += other.system_relaxed;
    }

    /// `R + U + O`.
    pub fn span_errors(&self) -> u32 {
        self.relaxed + self.under + self.over
    }

    /// `2(E+R+U+O) − (T_E+T_R+Y_E+Y_R)`: two labels ride on every exact and
    /// relaxed match, and both labels of an under or over are wrong by
    /// definition.
    pub fn label_errors(&self) -> u32 {
        let spans = self.exact + self.relaxed + self.under + self.over;
        let hits = self.status_exact + self.status_relaxed + self.system_exact + self.system_relaxed;
        (2 * spans).saturating_sub(hits)
    }

    /// `(T_E+T_R)/(E+R)` as a fraction; `None` when no spans matched.
    pub fn status_accuracy(&self) -> Option<f64> {
        let denom = self.exact + self.relaxed;
        (denom > 0).then(|| f64::from(self.status_exact + self.status_relaxed) / f64::from(denom))
    }

    /// `(Y_E+Y_R)/(E+R)` as a fraction; `None` when no spans matched.
    pub fn system_accuracy(&self) -> Option<f64> {
        let denom = self.exact + self.relaxed;
        (denom > 0).then(|| f64::from(self.system_exact + self.system_relaxed) / f64::from(denom))
    }

    /// Span error rate as a fraction of `total_spans`.
    pub fn span_error_rate(&self, total_spans: u32) -> Option<f64> {
        (total_spans > 0).then(|| f64::from(self.span_errors()) / f64::from(total_spans))
    }

    /// Label error rate as a fraction of the corpus's label count
    /// (`2 × total_spans`).
    pub fn label_error_rate(&self, total_spans: u32) -> Option<f64> {
        (total_spans > 0).then(|| f64::from(self.label_errors()) / f64::from(2 * total_spans))
    }
}

/// Half-up rounding of a percentage to one decimal place.
pub fn round_pct(pct: f64) -> f64 {
    (pct * 10.0 + 0.5).floor() / 10.0
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold annotations overlap at {first} and {second}")]
    OverlappingGold { first: Span, second: Span },
    #[error("outputs reference note '{note_id}' not present in the corpus")]
    UnknownNote { note_id: String },
    #[error("duplicate output record for note '{note_id}'")]
    DuplicateOutput { note_id: String },
    #[error("counts file {path}: {message}")]
    CountsFile { path: String, message: String },
}

/// Span category assigned to one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchCategory {
    Exact,
    Relaxed,
    Over,
}

/// Outcome for one detection: its category and, for exact and relaxed
/// matches, the index of the gold annotation it bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionMatch {
    pub category: MatchCategory,
    pub annotation: Option<usize>,
}

/// Full matching outcome for one note.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// One entry per detection, in input order.
    pub matches: Vec<DetectionMatch>,
    /// Indices of gold annotations no detection touched.
    pub under_annotations: Vec<usize>,
    /// Gold annotations that are not exact-matched but received at least
    /// one relaxed binding.
    pub covered_relaxed: usize,
}

impl MatchResult {
    fn count(&self, category: MatchCategory) -> u32 {
        self.matches.iter().filter(|m| m.category == category).count() as u32
    }

    pub fn exact_count(&self) -> u32 {
        self.count(MatchCategory::Exact)
    }

    pub fn relaxed_count(&self) -> u32 {
        self.count(MatchCategory::Relaxed)
    }

    pub fn over_count(&self) -> u32 {
        self.count(MatchCategory::Over)
    }

    pub fn under_count(&self) -> u32 {
        self.under_annotations.len() as u32
    }
}

/// Deterministic processing order: located detections by (start, end,
/// extract, labels), then unlocated ones likewise. The key covers every
/// field that matters to the counters, so input order never influences
/// them — detections identical under the key are interchangeable.
fn canonical_order(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| det_key(&detections[a]).cmp(&det_key(&detections[b])));
    order
}

pub(crate) fn det_key(d: &Detection) -> (u8, usize, usize, String, u8, u8) {
    let (located, start, end) = match d.span {
        Some(span) => (0u8, span.start, span.end),
        None => (1u8, 0, 0),
    };
    let system = d.system.map_or(u8::MAX, |s| s as u8);
    (located, start, end, d.extract.clone(), d.status as u8, system)
}

/// Categorize every detection against the gold annotations of one note.
///
/// Gold spans must be pairwise disjoint (the corpus loader guarantees this
/// for loaded corpora; hand-built inputs are re-checked here).
pub fn match_detections(
    annotations: &[Annotation],
    detections: &[Detection],
) -> Result<MatchResult, EvalError> {
    let mut by_start: Vec<usize> = (0..annotations.len()).collect();
    by_start.sort_by_key(|&i| annotations[i].span);
    for pair in by_start.windows(2) {
        let (a, b) = (&annotations[pair[0]].span, &annotations[pair[1]].span);
        if a.overlaps(b) {
            return Err(EvalError::OverlappingGold {
                first: *a,
                second: *b,
            });
        }
    }

    let order = canonical_order(detections);
    let mut matches: Vec<Option<DetectionMatch>> = vec![None; detections.len()];
    let mut exact_taken = vec![false; annotations.len()];

    // Exact pass: gold spans are disjoint, so a detection span equals at
    // most one of them; the first detection carrying that span claims it.
    for &di in &order {
        let Some(span) = detections[di].span else {
            continue;
        };
        let hit = (0..annotations.len()).find(|&ai| !exact_taken[ai] && annotations[ai].span == span);
        if let Some(ai) = hit {
            exact_taken[ai] = true;
            matches[di] = Some(DetectionMatch {
                category: MatchCategory::Exact,
                annotation: Some(ai),
            });
        }
    }

    // Relaxed pass: maximum character overlap wins; on a tie the annotation
    // starting earliest does. Many detections may bind one annotation.
    let mut relaxed_covered = vec![false; annotations.len()];
    for &di in &order {
        if matches[di].is_some() {
            continue;
        }
        let Some(span) = detections[di].span else {
            continue;
        };
        let mut best: Option<(usize, usize, usize)> = None; // (overlap, ann start, ann idx)
        for (ai, ann) in annotations.iter().enumerate() {
            let overlap = span.overlap_len(&ann.span);
            if overlap == 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bo, bs, _)) => overlap > bo || (overlap == bo && ann.span.start < bs),
            };
            if better {
                best = Some((overlap, ann.span.start, ai));
            }
        }
        if let Some((_, _, ai)) = best {
            if !exact_taken[ai] {
                relaxed_covered[ai] = true;
            }
            matches[di] = Some(DetectionMatch {
                category: MatchCategory::Relaxed,
                annotation: Some(ai),
            });
        }
    }

    // Everything left — unlocated, or zero overlap with gold — is over.
    let matches: Vec<DetectionMatch> = matches
        .into_iter()
        .map(|m| {
            m.unwrap_or(DetectionMatch {
                category: MatchCategory::Over,
                annotation: None,
            })
        })
        .collect();

    let mut under_annotations = Vec::new();
    let mut covered_relaxed = 0;
    for ai in 0..annotations.len() {
        if exact_taken[ai] {
            continue;
        }
        if relaxed_covered[ai] {
            covered_relaxed += 1;
        } else {
            under_annotations.push(ai);
        }
    }

    let result = MatchResult {
        matches,
        under_annotations,
        covered_relaxed,
    };
    debug_assert_eq!(
        result.exact_count() as usize + result.covered_relaxed + result.under_annotations.len(),
        annotations.len(),
        "every annotation is exact, covered, or under"
    );
    Ok(result)
}

/// Label hits split by span category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelHits {
    pub status_exact: u32,
    pub status_relaxed: u32,
    pub system_exact: u32,
    pub system_relaxed: u32,
}

/// Compare each bound detection's labels against its annotation. A
/// detection without a system (filtered output never has these, but files
/// are not trusted) simply cannot score a system hit.
pub fn count_label_hits(
    annotations: &[Annotation],
    detections: &[Detection],
    matched: &MatchResult,
) -> LabelHits {
    let mut hits = LabelHits::default();
    for (di, m) in matched.matches.iter().enumerate() {
        let Some(ai) = m.annotation else {
            continue;
        };
        let det = &detections[di];
        let ann = &annotations[ai];
        let status_hit = det.status == ann.status;
        let system_hit = det.system == Some(ann.system);
        match m.category {
            MatchCategory::Exact => {
                hits.status_exact += u32::from(status_hit);
                hits.system_exact += u32::from(system_hit);
            }
            MatchCategory::Relaxed => {
                hits.status_relaxed += u32::from(status_hit);
                hits.system_relaxed += u32::from(system_hit);
            }
            MatchCategory::Over => {}
        }
    }
    hits
}

/// Match one note's detections and fill the full counter set.
pub fn evaluate_note(
    annotations: &[Annotation],
    detections: &[Detection],
) -> Result<MetricCounts, EvalError> {
    let matched = match_detections(annotations, detections)?;
    let hits = count_label_hits(annotations, detections, &matched);
    Ok(MetricCounts {
        exact: matched.exact_count(),
        relaxed: matched.relaxed_count(),
        under: matched.under_count(),
        over: matched.over_count(),
        status_exact: hits.status_exact,
        status_relaxed: hits.status_relaxed,
        system_exact: hits.system_exact,
        system_relaxed: hits.system_relaxed,
    })
}

/// Per-note counters within a corpus evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteEvaluation {
    pub note_id: String,
    #[serde(flatten)]
    pub counts: MetricCounts,
}

/// Corpus-level evaluation: summed counters plus the per-note breakdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEvaluation {
    pub total_spans: u32,
    pub counts: MetricCounts,
    pub per_note: Vec<NoteEvaluation>,
}

/// Evaluate pipeline outputs against a gold corpus. Corpus notes with no
/// output record count their annotations as undetected; output records for
/// notes outside the corpus are an error.
pub fn evaluate_corpus(
    corpus: &Corpus,
    outputs: &[PipelineOutput],
) -> Result<CorpusEvaluation, EvalError> {
    let mut by_note: std::collections::HashMap<&str, &PipelineOutput> =
        std::collections::HashMap::new();
    for output in outputs {
        if corpus.get(&output.note_id).is_none() {
            return Err(EvalError::UnknownNote {
                note_id: output.note_id.clone(),
            });
        }
        if by_note.insert(output.note_id.as_str(), output).is_some() {
            return Err(EvalError::DuplicateOutput {
                note_id: output.note_id.clone(),
            });
        }
    }

    let mut totals = MetricCounts::default();
    let mut per_note = Vec::with_capacity(corpus.entries.len());
    for entry in &corpus.entries {
        let counts = match by_note.get(entry.note.note_id.as_str()) {
            Some(output) => evaluate_note(&entry.annotations, &output.detections)?,
            None => MetricCounts {
                under: entry.annotations.len() as u32,
                ..MetricCounts::default()
            },
        };
        totals.add(&counts);
        per_note.push(NoteEvaluation {
            note_id: entry.note.note_id.clone(),
            counts,
        });
    }
    Ok(CorpusEvaluation {
        total_spans: corpus.total_annotations() as u32,
        counts: totals,
        per_note,
    })
}

// ---------------------------------------------------------------------------
// Counts files and report rendering

/// One model's counters over a corpus, as stored in a counts file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCounts {
    pub model: String,
    pub total_spans: u32,
    #[serde(flatten)]
    pub counts: MetricCounts,
}

impl CorpusEvaluation {
    pub fn into_model_counts(self, model: impl Into<String>) -> ModelCounts {
        ModelCounts {
            model: model.into(),
            total_spans: self.total_spans,
            counts: self.counts,
        }
    }
}

/// Load and sanity-check a counts file. Label hits cannot exceed their span
/// category, and the counters must be consistent with the span total:
/// `E + U ≤ total_spans ≤ E + R + U` (relaxed bindings cover at most one
/// annotation each).
pub fn load_model_counts(path: &Path) -> Result<ModelCounts, EvalError> {
    let err = |message: String| EvalError::CountsFile {
        path: path.display().to_string(),
        message,
    };
    let raw = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let row: ModelCounts = serde_json::from_str(&raw).map_err(|e| err(e.to_string()))?;
    let c = &row.counts;
    let checks = [
        (c.status_exact <= c.exact, "T_E exceeds E"),
        (c.status_relaxed <= c.relaxed, "T_R exceeds R"),
        (c.system_exact <= c.exact, "Y_E exceeds E"),
        (c.system_relaxed <= c.relaxed, "Y_R exceeds R"),
        (c.exact + c.under <= row.total_spans, "E + U exceeds total_spans"),
        (
            row.total_spans <= c.exact + c.relaxed + c.under,
            "total_spans exceeds E + R + U",
        ),
    ];
    for (ok, detail) in checks {
        if !ok {
            return Err(err(format!("inconsistent counters: {detail}")));
        }
    }
    Ok(row)
}

fn fmt_pct(value: Option<f64>) -> String {
    match value {
        Some(fraction) => format!("{:.1}", round_pct(fraction * 100.0)),
        None => "n/a".to_string(),
    }
}

fn pct_json(value: Option<f64>) -> serde_json::Value {
    match value {
        Some(fraction) => serde_json::json!(round_pct(fraction * 100.0)),
        None => serde_json::Value::Null,
    }
}

/// Counters plus derived metrics for one model, as a JSON document.
pub fn model_report_json(row: &ModelCounts) -> serde_json::Value {
    let c = &row.counts;
    serde_json::json!({
        "model": row.model,
        "total_spans": row.total_spans,
        "counts": c,
        "derived": {
            "span_errors": c.span_errors(),
            "span_error_rate_pct": pct_json(c.span_error_rate(row.total_spans)),
            "label_errors": c.label_errors(),
            "label_error_rate_pct": pct_json(c.label_error_rate(row.total_spans)),
            "status_accuracy_pct": pct_json(c.status_accuracy()),
            "system_accuracy_pct": pct_json(c.system_accuracy()),
        },
    })
}

/// Render an aligned text table over the counters and derived metrics, one
/// model per row.
pub fn render_table(rows: &[ModelCounts]) -> String {
    let header = [
        "Model", "Spans", "E", "R", "U", "O", "T_E", "T_R", "Y_E", "Y_R", "SpanErr", "SpanErr%",
        "LabelErr", "LabelErr%", "Status%", "System%",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let c = &row.counts;
        table.push(vec![
            row.model.clone(),
            row.total_spans.to_string(),
            c.exact.to_string(),
            c.relaxed.to_string(),
            c.under.to_string(),
            c.over.to_string(),
            c.status_exact.to_string(),
            c.status_relaxed.to_string(),
            c.system_exact.to_string(),
            c.system_relaxed.to_string(),
            c.span_errors().to_string(),
            fmt_pct(c.span_error_rate(row.total_spans)),
            c.label_errors().to_string(),
            fmt_pct(c.label_error_rate(row.total_spans)),
            fmt_pct(c.status_accuracy()),
            fmt_pct(c.system_accuracy()),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|col| table.iter().map(|row| row[col].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let mut line = String::new();
        for (col, cell) in row.iter().enumerate() {
            if col > 0 {
                line.push_str("  ");
            }
            // Left-align the model column, right-align numbers.
            if col == 0 {
                line.push_str(&format!("{:<width$}", cell, width = widths[col]));
            } else {
                line.push_str(&format!("{:>width$}", cell, width = widths[col]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BodySystem, Status};

    fn ann(start: usize, end: usize, status: Status, system: BodySystem) -> Annotation {
        Annotation {
            span: Span::new(start, end),
            surface: format!("g{start}"),
            status,
            system,
        }
    }

    fn det(span: Option<(usize, usize)>, status: Status, system: Option<BodySystem>) -> Detection {
        Detection {
            extract: match span {
                Some((s, e)) => format!("d{s}_{e}"),
                None => "unlocated".to_string(),
            },
            status,
            system,
            span: span.map(|(s, e)| Span::new(s, e)),
            raw_ner: String::new(),
            raw_cls: None,
        }
    }

    use BodySystem::{Cardiovascular, Constitutional, Respiratory};
    use Status::{Negative, Positive};

    #[test]
    fn exact_match_binds_one_to_one() {
        let gold = [ann(0, 5, Positive, Constitutional)];
        let dets = [det(Some((0, 5)), Positive, Some(Constitutional))];
        let counts = evaluate_note(&gold, &dets).unwrap();
        assert_eq!(
            counts,
            MetricCounts {
                exact: 1,
                status_exact: 1,
                system_exact: 1,
                ..MetricCounts::default()
            }
        );
    }

    #[test]
    fn label_misses_do_not_affect_span_category() {
        let gold = [ann(0, 5, Positive, Constitutional)];
        let dets = [det(Some((0, 5)), Negative, Some(Respiratory))];
        let counts = evaluate_note(&gold, &dets).unwrap();
        assert_eq!(counts.exact, 1);
        assert_eq!(counts.status_exact, 0);
        assert_eq!(counts.system_exact, 0);
        assert_eq!(counts.label_errors(), 2);
    }

    #[test]
    fn overlap_is_relaxed_and_binds_max_overlap() {
        // Gold: [0,10) and [12,20). Detection [8,15) overlaps both; the
        // second by 3 characters, the first by 2.
        let gold = [
            ann(0, 10, Positive, Constitutional),
            ann(12, 20, Positive, Cardiovascular),
        ];
        let dets = [det(Some((8, 15)), Positive, Some(Cardiovascular))];
        let matched = match_detections(&gold, &dets).unwrap();
        assert_eq!(matched.matches[0].category, MatchCategory::Relaxed);
        assert_eq!(matched.matches[0].annotation, Some(1));
        let counts = evaluate_note(&gold, &dets).unwrap();
        assert_eq!(counts.relaxed, 1);
        assert_eq!(counts.under, 1); // the first gold is untouched
        assert_eq!(counts.system_relaxed, 1);
    }

    #[test]
    fn overlap_tie_prefers_earlier_annotation() {
        // [4,6) overlaps [0,5) and [5,10) by one character each.
        let gold = [
            ann(0, 5, Positive, Constitutional),
            ann(5, 10, Positive, Cardiovascular),
        ];
        let dets = [det(Some((4, 6)), Positive, Some(Constitutional))];
        let matched = match_detections(&gold, &dets).unwrap();
        assert_eq!(matched.matches[0].annotation, Some(0));
    }

    #[test]
    fn split_entity_counts_each_piece_relaxed() {
        // One gold span, two partial detections: both relaxed, one covered
        // annotation, nothing under.
        let gold = [ann(0, 20, Positive, Constitutional)];
        let dets = [
            det(Some((0, 6)), Positive, Some(Constitutional)),
            det(Some((10, 20)), Positive, Some(Cardiovascular)),
        ];
        let matched = match_detections(&gold, &dets).unwrap();
        assert_eq!(matched.relaxed_count(), 2);
        assert_eq!(matched.covered_relaxed, 1);
        assert_eq!(matched.under_count(), 0);
        let counts = evaluate_note(&gold, &dets).unwrap();
        assert_eq!(counts.status_relaxed, 2);
        assert_eq!(counts.system_relaxed, 1);
        // Identity: E + covered + U = number of annotations.
        assert_eq!(
            matched.exact_count() as usize + matched.covered_relaxed
                + matched.under_annotations.len(),
            gold.len()
        );
    }

    #[test]
    fn unlocated_and_disjoint_detections_are_over() {
        let gold = [ann(0, 5, Positive, Constitutional)];
        let dets = [
            det(None, Positive, Some(Constitutional)),
            det(Some((10, 15)), Positive, Some(Constitutional)),
        ];
        let counts = evaluate_note(&gold, &dets).unwrap();
        assert_eq!(counts.over, 2);
        assert_eq!(counts.under, 1);
        assert_eq!(counts.exact + counts.relaxed, 0);
        assert_eq!(counts.status_accuracy(), None);
        assert_eq!(counts.span_errors(), 3);
        // Two gold labels lost, two per over detection: 2*(0+0+1+2) - 0.
        assert_eq!(counts.label_errors(), 6);
    }

    #[test]
    fn duplicate_exact_detections_fall_back_to_relaxed() {
        let gold = [ann(0, 5, Positive, Constitutional)];
        let dets = [
            det(Some((0, 5)), Positive, Some(Constitutional)),
            det(Some((0, 5)), Negative, Some(Constitutional)),
        ];
        let counts = evaluate_note(&gold, &dets).unwrap();
        assert_eq!(counts.exact, 1);
        assert_eq!(counts.relaxed, 1);
        assert_eq!(counts.under, 0);
    }

    #[test]
    fn input_order_does_not_change_counts() {
        let gold = [
            ann(0, 10, Positive, Constitutional),
            ann(15, 25, Negative, Cardiovascular),
        ];
        let dets = vec![
            det(Some((0, 10)), Positive, Some(Constitutional)),
            det(Some((2, 12)), Positive, Some(Respiratory)),
            det(Some((15, 20)), Negative, Some(Cardiovascular)),
            det(None, Positive, None),
        ];
        let forward = evaluate_note(&gold, &dets).unwrap();
        let mut reversed = dets.clone();
        reversed.reverse();
        assert_eq!(forward, evaluate_note(&gold, &reversed).unwrap());
    }

    #[test]
    fn overlapping_gold_is_rejected() {
        let gold = [
            ann(0, 10, Positive, Constitutional),
            ann(5, 15, Positive, Cardiovascular),
        ];
        assert!(matches!(
            match_detections(&gold, &[]),
            Err(EvalError::OverlappingGold { .. })
        ));
    }

    #[test]
    fn corpus_evaluation_sums_notes_and_defaults_missing_to_under() {
        use crate::domain::{ClinicalNote, CorpusEntry};
        let corpus = Corpus {
            entries: vec![
                CorpusEntry {
                    note: ClinicalNote {
                        note_id: "a".into(),
                        text: "fever here".into(),
                    },
                    annotations: vec![ann(0, 5, Positive, Constitutional)],
                },
                CorpusEntry {
                    note: ClinicalNote {
                        note_id: "b".into(),
                        text: "cough there".into(),
                    },
                    annotations: vec![ann(0, 5, Negative, Respiratory)],
                },
            ],
        };
        let outputs = vec![PipelineOutput {
            note_id: "a".into(),
            ros_found: true,
            detections: vec![det(Some((0, 5)), Positive, Some(Constitutional))],
            discarded: vec![],
            stage_errors: vec![],
        }];
        let eval = evaluate_corpus(&corpus, &outputs).unwrap();
        assert_eq!(eval.total_spans, 2);
        assert_eq!(eval.counts.exact, 1);
        assert_eq!(eval.counts.under, 1);
        assert_eq!(eval.per_note.len(), 2);
        assert_eq!(eval.per_note[1].counts.under, 1);

        // An empty outputs file scores everything undetected.
        let empty = evaluate_corpus(&corpus, &[]).unwrap();
        assert_eq!(empty.counts.under, 2);
        assert_eq!(empty.counts.status_accuracy(), None);

        let ghost = vec![PipelineOutput {
            note_id: "ghost".into(),
            ros_found: false,
            detections: vec![],
            discarded: vec![],
            stage_errors: vec![],
        }];
        assert!(matches!(
            evaluate_corpus(&corpus, &ghost),
            Err(EvalError::UnknownNote { .. })
        ));
    }

    #[test]
    fn derived_metric_formulas() {
        let counts = MetricCounts {
            exact: 256,
            relaxed: 57,
            under: 32,
            over: 7,
            status_exact: 252,
            status_relaxed: 55,
            system_exact: 245,
            system_relaxed: 53,
        };
        assert_eq!(counts.span_errors(), 96);
        assert_eq!(counts.label_errors(), 99);
        assert_eq!(round_pct(counts.span_error_rate(341).unwrap() * 100.0), 28.2);
        assert_eq!(round_pct(counts.label_error_rate(341).unwrap() * 100.0), 14.5);
        assert_eq!(round_pct(counts.status_accuracy().unwrap() * 100.0), 98.1);
        assert_eq!(round_pct(counts.system_accuracy().unwrap() * 100.0), 95.2);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_pct(28.15), 28.2);
        assert_eq!(round_pct(28.14), 28.1);
        assert_eq!(round_pct(88.05), 88.1);
        assert_eq!(round_pct(0.0), 0.0);
        assert_eq!(round_pct(100.0), 100.0);
    }

    #[test]
    fn counts_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.json");
        std::fs::write(
            &path,
            r#"{"model":"demo","total_spans":10,"E":6,"R":2,"U":2,"O":1,"T_E":6,"T_R":1,"Y_E":5,"Y_R":2}"#,
        )
        .unwrap();
        let row = load_model_counts(&path).unwrap();
        assert_eq!(row.model, "demo");
        assert_eq!(row.counts.exact, 6);

        std::fs::write(
            &path,
            r#"{"model":"demo","total_spans":10,"E":6,"R":2,"U":2,"O":1,"T_E":7,"T_R":1,"Y_E":5,"Y_R":2}"#,
        )
        .unwrap();
        let err = load_model_counts(&path).unwrap_err();
        assert!(err.to_string().contains("T_E exceeds E"), "{err}");

        // total_spans must sit between E+U and E+R+U.
        std::fs::write(
            &path,
            r#"{"model":"demo","total_spans":20,"E":6,"R":2,"U":2,"O":1,"T_E":6,"T_R":1,"Y_E":5,"Y_R":2}"#,
        )
        .unwrap();
        assert!(load_model_counts(&path).is_err());
    }

    #[test]
    fn report_table_and_json_agree_on_derived_values() {
        let row = ModelCounts {
            model: "demo".into(),
            total_spans: 341,
            counts: MetricCounts {
                exact: 256,
                relaxed: 57,
                under: 32,
                over: 7,
                status_exact: 252,
                status_relaxed: 55,
                system_exact: 245,
                system_relaxed: 53,
            },
        };
        let json = model_report_json(&row);
        assert_eq!(json["derived"]["span_errors"], 96);
        assert_eq!(json["derived"]["span_error_rate_pct"], 28.2);
        assert_eq!(json["derived"]["label_errors"], 99);
        assert_eq!(json["derived"]["label_error_rate_pct"], 14.5);
        assert_eq!(json["derived"]["status_accuracy_pct"], 98.1);
        assert_eq!(json["derived"]["system_accuracy_pct"], 95.2);

        let table = render_table(&[row]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Model"));
        for cell in ["demo", "341", "256", "96", "28.2", "99", "14.5", "98.1", "95.2"] {
            assert!(lines[1].contains(cell), "missing {cell} in {}", lines[1]);
        }
    }

    #[test]
    fn empty_run_renders_not_applicable() {
        let row = ModelCounts {
            model: "empty".into(),
            total_spans: 5,
            counts: MetricCounts {
                under: 5,
                ..MetricCounts::default()
            },
        };
        let json = model_report_json(&row);
        assert!(json["derived"]["status_accuracy_pct"].is_null());
        let table = render_table(&[row]);
        assert!(table.lines().nth(1).unwrap().contains("n/a"));
    }
}
