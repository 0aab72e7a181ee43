//! Marker-annotated segmentation cases.
//!
//! Each case is a note with the expected ROS body wrapped in `⟦`…`⟧`.
//! Stripping the markers while counting characters yields the expected
//! span, so the answers are fixed by how the case is written — the
//! segmenter has no hand in producing them. Cases without markers expect
//! no ROS section at all.

use ros_core::domain::Span;

/// Strip the `⟦`/`⟧` markers, returning the clean note text and the
/// expected body span (character offsets), if the case has one.
pub fn parse_markers(marked: &str) -> (String, Option<Span>) {
    let mut note = String::new();
    let mut count = 0usize;
    let mut start = None;
    let mut end = None;
    for c in marked.chars() {
        match c {
            '⟦' => {
                assert!(start.is_none(), "duplicate open marker");
                start = Some(count);
            }
            '⟧' => {
                assert!(start.is_some() && end.is_none(), "stray close marker");
                end = Some(count);
            }
            _ => {
                note.push(c);
                count += 1;
            }
        }
    }
    let span = match (start, end) {
        (Some(s), Some(e)) => Some(Span::new(s, e)),
        (None, None) => None,
        _ => panic!("unbalanced markers"),
    };
    (note, span)
}

/// The segmentation suite: `(name, marked note)`.
pub fn cases() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "simple_colon_header",
            "CHIEF COMPLAINT: cough\nREVIEW OF SYSTEMS:⟦ Denies fever, chills.\nNo chest pain.⟧\nPLAN: rest\n",
        ),
        (
            "lowercase_header",
            "review of systems:⟦ negative throughout⟧\nplan: follow up\n",
        ),
        (
            "mixed_case_header",
            "HPI: improving\nReview Of Systems:⟦ positive for headache⟧\nASSESSMENT: migraine\n",
        ),
        (
            "ros_abbreviation",
            "HPI: improving\nROS:⟦ negative except cough⟧\nASSESSMENT: stable\n",
        ),
        (
            "systems_review_synonym",
            "SYSTEMS REVIEW:⟦ unremarkable⟧\nPLAN: home\n",
        ),
        (
            "indented_header",
            "   Review of Systems:⟦ no fever⟧\nPLAN: rest\n",
        ),
        (
            "tab_indented_header",
            "\tROS:⟦ none reported⟧\nIMPRESSION: well\n",
        ),
        (
            "space_before_colon",
            "REVIEW OF SYSTEMS :⟦ negative\nall systems reviewed⟧\nPLAN: rest\n",
        ),
        (
            "bare_header_line",
            "Review of Systems\n⟦Constitutional: no fever\nRespiratory: no cough⟧\nASSESSMENT: ok\n",
        ),
        (
            "terminal_section_no_trailing_newline",
            "PLAN: rest\nROS:⟦ fatigue present⟧",
        ),
        (
            "terminal_section_keeps_trailing_newline",
            "MEDICATIONS: none\nROS:⟦ denies nausea\n⟧",
        ),
        (
            "decoy_prose_then_real_section",
            "Review of systems was discussed in detail.\nROS:⟦ no complaints⟧\nPLAN: rest\n",
        ),
        (
            "decoy_prose_only",
            "The review of systems was unremarkable per patient report.\nPLAN: rest\n",
        ),
        (
            "decoy_line_starts_with_phrase",
            "Review of systems reviewed and negative today.\nPLAN: rest\n",
        ),
        ("empty_body", "ROS:⟦⟧\nPLAN: rest\n"),
        (
            "blank_lines_inside_body",
            "ROS:⟦ fever denied\n\nchills denied⟧\nPLAN: rest\n",
        ),
        ("crlf_line_endings", "ROS:⟦ no fever⟧\r\nPLAN: rest\r\n"),
        (
            "multibyte_characters_before_and_inside",
            "HPI: Temp 38.5°C améliorée\nROS:⟦ fever ≥ 38°C, no chills⟧\nPLAN: rest\n",
        ),
        (
            "unknown_header_does_not_terminate",
            "ROS:⟦ cardiac negative\nSOCIAL HISTORY: smoker\nstill the same section⟧\nPLAN: rest\n",
        ),
        (
            "bare_known_header_terminates",
            "ROS:⟦ no complaints⟧\nASSESSMENT\nstable\n",
        ),
        (
            "first_ros_section_wins",
            "ROS:⟦ first section⟧\nPLAN: x\nREVIEW OF SYSTEMS: second section\n",
        ),
        ("word_prefix_is_not_a_header", "ROSE GARDEN: lovely\nPLAN: rest\n"),
        (
            "header_at_note_start",
            "REVIEW OF SYSTEMS:⟦ all negative⟧\nPLAN: rest\n",
        ),
        (
            "no_space_after_colon",
            "ROS:⟦fever and chills reported⟧\nPLAN: rest\n",
        ),
        (
            "phrase_mid_line_is_ignored",
            "Patient notes: review of systems deferred\nROS:⟦ deferred formally⟧",
        ),
        (
            "bare_header_terminal",
            "HISTORY OF PRESENT ILLNESS: cough 3 days\nREVIEW OF SYSTEMS\n⟦negative in 10 systems⟧",
        ),
        (
            "subsection_labels_stay_in_body",
            "ROS:⟦ Constitutional: no fever. ENT: clear.⟧\nPLAN: rest\n",
        ),
    ]
}
