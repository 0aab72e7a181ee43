//! Runs the marker-annotated segmentation suite. Expected spans come from
//! the markers in each case's text, so a segmenter bug cannot leak into
//! the expectations.

use ros_core::segmenter::{segment_ros, HeaderLexicon};
use ros_testkit::segmenter_cases::{cases, parse_markers};

#[test]
fn marker_suite_passes_in_full() {
    let lexicon = HeaderLexicon::default();
    let mut failures = Vec::new();
    let all = cases();
    assert!(all.len() >= 20, "suite must hold at least 20 cases");

    for (name, marked) in &all {
        let (note, expected) = parse_markers(marked);
        let got = segment_ros(&note, &lexicon).map(|seg| seg.body_span);
        if got != expected {
            failures.push(format!("{name}: expected {expected:?}, got {got:?}"));
        }
    }
    assert!(failures.is_empty(), "{} failures:\n{}", failures.len(), failures.join("\n"));
}

#[test]
fn marked_bodies_match_what_the_segmenter_slices() {
    // Cross-check the span against the actual text it selects: the body
    // text inside the markers must be what the span slices back out.
    let lexicon = HeaderLexicon::default();
    for (name, marked) in cases() {
        let (note, expected) = parse_markers(marked);
        let Some(expected) = expected else { continue };
        let seg = segment_ros(&note, &lexicon)
            .unwrap_or_else(|| panic!("{name}: expected a ROS section"));
        let marked_body: String = marked
            .split('⟦')
            .nth(1)
            .and_then(|rest| rest.split('⟧').next())
            .unwrap()
            .to_string();
        assert_eq!(seg.body_text(&note), marked_body, "{name}");
        assert_eq!(seg.body_span, expected, "{name}");
    }
}
