//! Reference matcher, written from the category definitions rather than as
//! passes over mutable state. Used to cross-check `ros_core::eval`.

use ros_core::domain::{Annotation, Detection};
use ros_core::eval::MetricCounts;

/// Canonical tie-break key: located detections order by span then labels,
/// so identical inputs always resolve identically.
fn det_key(d: &Detection) -> (u8, usize, usize, String, u8, u8) {
    let (located, start, end) = match d.span {
        Some(span) => (0, span.start, span.end),
        None => (1, 0, 0),
    };
    let system = d.system.map_or(u8::MAX, |s| s as u8);
    (located, start, end, d.extract.clone(), d.status as u8, system)
}

/// Compute the full counter set straight from the definitions:
///
/// * an annotation is exact-matched when some detection carries its span;
///   the span-smallest such detection (by the canonical key) is its binder;
/// * every other located detection binds the annotation it overlaps most
///   (ties to the earliest-starting annotation) as a relaxed match, or is
///   over when it overlaps nothing;
/// * unlocated detections are over;
/// * annotations bound by nobody are under.
///
/// Gold spans must be pairwise disjoint.
pub fn oracle_counts(annotations: &[Annotation], detections: &[Detection]) -> MetricCounts {
    // Exact binders: candidate sets are disjoint across annotations because
    // gold spans are, so each annotation picks independently.
    let mut exact_binder: Vec<Option<usize>> = vec![None; annotations.len()];
    for (ai, ann) in annotations.iter().enumerate() {
        let binder = detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.span == Some(ann.span))
            .min_by_key(|(_, d)| det_key(d))
            .map(|(di, _)| di);
        exact_binder[ai] = binder;
    }
    counts_for_choice(annotations, detections, &exact_binder)
}

/// All counter outcomes across every admissible choice of exact binders.
/// Span-category counts must not depend on the choice (the suites assert
/// this); label hits may, which is exactly why the canonical key exists.
/// Returns `None` when the combination count exceeds `limit`.
pub fn enumerate_choice_counts(
    annotations: &[Annotation],
    detections: &[Detection],
    limit: usize,
) -> Option<Vec<MetricCounts>> {
    let candidates: Vec<Vec<usize>> = annotations
        .iter()
        .map(|ann| {
            detections
                .iter()
                .enumerate()
                .filter(|(_, d)| d.span == Some(ann.span))
                .map(|(di, _)| di)
                .collect()
        })
        .collect();
    let combinations: usize = candidates
        .iter()
        .map(|c| c.len().max(1))
        .try_fold(1usize, |acc, n| acc.checked_mul(n))?;
    if combinations > limit {
        return None;
    }

    let mut all = Vec::with_capacity(combinations);
    let mut choice: Vec<Option<usize>> = vec![None; annotations.len()];
    fn recurse(
        annotations: &[Annotation],
        detections: &[Detection],
        candidates: &[Vec<usize>],
        choice: &mut Vec<Option<usize>>,
        ai: usize,
        all: &mut Vec<MetricCounts>,
    ) {
        if ai == annotations.len() {
            all.push(counts_for_choice(annotations, detections, choice));
            return;
        }
        if candidates[ai].is_empty() {
            choice[ai] = None;
            recurse(annotations, detections, candidates, choice, ai + 1, all);
        } else {
            for &di in &candidates[ai] {
                choice[ai] = Some(di);
                recurse(annotations, detections, candidates, choice, ai + 1, all);
            }
        }
    }
    recurse(annotations, detections, &candidates, &mut choice, 0, &mut all);
    Some(all)
}

/// Score one concrete choice of exact binders.
fn counts_for_choice(
    annotations: &[Annotation],
    detections: &[Detection],
    exact_binder: &[Option<usize>],
) -> MetricCounts {
    let mut counts = MetricCounts::default();
    let is_exact = |di: usize| exact_binder.iter().any(|b| *b == Some(di));

    // Relaxed binding per non-exact located detection.
    let mut relaxed_binding: Vec<Option<usize>> = vec![None; detections.len()];
    for (di, det) in detections.iter().enumerate() {
        if is_exact(di) {
            continue;
        }
        let Some(span) = det.span else {
            continue;
        };
        relaxed_binding[di] = annotations
            .iter()
            .enumerate()
            .filter(|(_, ann)| span.overlap_len(&ann.span) > 0)
            .max_by(|(_, a), (_, b)| {
                // Most overlap first; on a tie the earlier-starting
                // annotation (max_by keeps the later of equals, so compare
                // start descending).
                span.overlap_len(&a.span)
                    .cmp(&span.overlap_len(&b.span))
                    .then(b.span.start.cmp(&a.span.start))
            })
            .map(|(ai, _)| ai);
    }

    for (ai, binder) in exact_binder.iter().enumerate() {
        let ann = &annotations[ai];
        if let Some(di) = binder {
            counts.exact += 1;
            let det = &detections[*di];
            counts.status_exact += u32::from(det.status == ann.status);
            counts.system_exact += u32::from(det.system == Some(ann.system));
        } else if !relaxed_binding.iter().any(|b| *b == Some(ai)) {
            counts.under += 1;
        }
    }
    for (di, det) in detections.iter().enumerate() {
        if is_exact(di) {
            continue;
        }
        match relaxed_binding[di] {
            Some(ai) => {
                let ann = &annotations[ai];
                counts.relaxed += 1;
                counts.status_relaxed += u32::from(det.status == ann.status);
                counts.system_relaxed += u32::from(det.system == Some(ann.system));
            }
            None => counts.over += 1,
        }
    }
    counts
}
