//! Recognition-response parser cases: fifty inputs covering well-formed
//! responses, the damage models actually inflict on JSON, and outright
//! garbage, each with its expected outcome.

use ros_core::pipeline::{parse_entities, NerParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParserExpect {
    /// Parses to exactly these `(extract, status)` pairs, in order.
    Entities(Vec<(&'static str, &'static str)>),
    NoJson,
    /// Element at this index is malformed.
    Malformed(usize),
    /// Element at this index has an unknown status word.
    BadStatus(usize),
}

pub struct ParserCase {
    pub name: &'static str,
    pub input: &'static str,
    pub expect: ParserExpect,
}

/// Run one case, describing any mismatch.
pub fn check_parser_case(case: &ParserCase) -> Result<(), String> {
    let got = parse_entities(case.input);
    match (&case.expect, got) {
        (ParserExpect::Entities(want), Ok(entities)) => {
            let got_pairs: Vec<(&str, &str)> = entities
                .iter()
                .map(|e| (e.extract.as_str(), e.status.as_str()))
                .collect();
            let want_pairs: Vec<(&str, &str)> = want.clone();
            if got_pairs == want_pairs {
                Ok(())
            } else {
                Err(format!("expected {want_pairs:?}, got {got_pairs:?}"))
            }
        }
        (ParserExpect::NoJson, Err(NerParseError::NoJsonFound)) => Ok(()),
        (ParserExpect::Malformed(want), Err(NerParseError::ElementMalformed { index, .. }))
            if index == *want =>
        {
            Ok(())
        }
        (ParserExpect::BadStatus(want), Err(NerParseError::InvalidStatus { index, .. }))
            if index == *want =>
        {
            Ok(())
        }
        (want, got) => Err(format!("expected {want:?}, got {got:?}")),
    }
}

pub fn parser_cases() -> Vec<ParserCase> {
    use ParserExpect::*;
    let case = |name, input, expect| ParserCase {
        name,
        input,
        expect,
    };
    vec![
        // Well-formed responses.
        case(
            "plain_minimal",
            r#"[{"extract":"fever","status":"positive"}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "plain_two_entities",
            r#"[{"extract": "fever", "status": "positive"}, {"extract": "cough", "status": "negative"}]"#,
            Entities(vec![("fever", "positive"), ("cough", "negative")]),
        ),
        case(
            "pretty_printed",
            "[\n  {\n    \"extract\": \"fever\",\n    \"status\": \"positive\"\n  }\n]",
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "json_code_fence",
            "```json\n[{\"extract\": \"nausea\", \"status\": \"negative\"}]\n```",
            Entities(vec![("nausea", "negative")]),
        ),
        case(
            "bare_code_fence",
            "```\n[{\"extract\": \"rash\", \"status\": \"positive\"}]\n```",
            Entities(vec![("rash", "positive")]),
        ),
        case(
            "prose_wrapping",
            "Sure! Here are the entities:\n[{\"extract\": \"chills\", \"status\": \"negative\"}]\nLet me know if you need anything else.",
            Entities(vec![("chills", "negative")]),
        ),
        case("empty_array", "[]", Entities(vec![])),
        case(
            "empty_array_in_prose",
            "No ROS entities found: []",
            Entities(vec![]),
        ),
        case(
            "bracket_noise_before_array",
            r#"[sic] the findings [2] follow: [{"extract": "rash", "status": "positive"}]"#,
            Entities(vec![("rash", "positive")]),
        ),
        case(
            "unicode_extract",
            r#"[{"extract": "fièvre ≥ 38°C", "status": "positive"}]"#,
            Entities(vec![("fièvre ≥ 38°C", "positive")]),
        ),
        case(
            "uppercase_status",
            r#"[{"extract": "fever", "status": "POSITIVE"}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "capitalized_status",
            r#"[{"extract": "fever", "status": "Negative"}]"#,
            Entities(vec![("fever", "negative")]),
        ),
        case(
            "extra_fields_tolerated",
            r#"[{"extract": "fever", "status": "positive", "system": "constitutional", "confidence": 0.93}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "reordered_fields",
            r#"[{"status": "negative", "extract": "night sweats"}]"#,
            Entities(vec![("night sweats", "negative")]),
        ),
        case(
            "extract_whitespace_trimmed",
            r#"[{"extract": "  back pain  ", "status": "positive"}]"#,
            Entities(vec![("back pain", "positive")]),
        ),
        case(
            "exact_duplicates_collapse",
            r#"[{"extract": "fever", "status": "positive"}, {"extract": "fever", "status": "positive"}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "same_extract_different_status_kept",
            r#"[{"extract": "fever", "status": "positive"}, {"extract": "fever", "status": "negative"}]"#,
            Entities(vec![("fever", "positive"), ("fever", "negative")]),
        ),
        case(
            "array_inside_object_wrapper",
            r#"{"entities": [{"extract": "fever", "status": "positive"}]}"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "nested_array_unwraps",
            r#"[[{"extract": "fever", "status": "positive"}]]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "crlf_inside_array",
            "[\r\n {\"extract\": \"fever\",\r\n \"status\": \"positive\"}\r\n]",
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "escaped_quotes_in_extract",
            r#"[{"extract": "\"stabbing\" pain", "status": "positive"}]"#,
            Entities(vec![("\"stabbing\" pain", "positive")]),
        ),
        case(
            "brackets_inside_string_value",
            r#"[{"extract": "pain [left side]", "status": "negative"}]"#,
            Entities(vec![("pain [left side]", "negative")]),
        ),
        case(
            "backslash_in_string_value",
            r#"[{"extract": "CV\\GI upset", "status": "negative"}]"#,
            Entities(vec![("CV\\GI upset", "negative")]),
        ),
        case(
            "first_of_two_arrays_wins",
            r#"[{"extract": "fever", "status": "positive"}] and also [{"extract": "cough", "status": "negative"}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "invalid_first_array_skipped",
            r#"[not json here] then [{"extract": "cough", "status": "negative"}]"#,
            Entities(vec![("cough", "negative")]),
        ),
        case(
            "empty_array_loses_to_entity_array",
            r#"[] but on reflection: [{"extract": "fever", "status": "positive"}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "number_array_skipped",
            r#"[1, 2, 3] scores; entities: [{"extract": "fever", "status": "positive"}]"#,
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "bom_prefix",
            "\u{feff}[{\"extract\": \"fever\", \"status\": \"positive\"}]",
            Entities(vec![("fever", "positive")]),
        ),
        case(
            "four_entity_example_shape",
            "[\n  {\n    \"extract\": \"fever\",\n    \"status\": \"positive\"\n  },\n  {\n    \"extract\": \"headache\",\n    \"status\": \"negative\"\n  },\n  {\n    \"extract\": \"back pain\",\n    \"status\": \"negative\"\n  },\n  {\n    \"extract\": \"GI\",\n    \"status\": \"negative\"\n  }\n]",
            Entities(vec![
                ("fever", "positive"),
                ("headache", "negative"),
                ("back pain", "negative"),
                ("GI", "negative"),
            ]),
        ),
        case(
            "trailing_prose_same_line",
            r#"[{"extract": "fever", "status": "positive"}] — that's everything!"#,
            Entities(vec![("fever", "positive")]),
        ),
        // Malformed elements.
        case("missing_extract", r#"[{"status": "positive"}]"#, Malformed(0)),
        case("missing_status", r#"[{"extract": "fever"}]"#, Malformed(0)),
        case(
            "extract_not_a_string",
            r#"[{"extract": 42, "status": "positive"}]"#,
            Malformed(0),
        ),
        case(
            "status_not_a_string",
            r#"[{"extract": "fever", "status": 1}]"#,
            Malformed(0),
        ),
        case(
            "second_element_malformed",
            r#"[{"extract": "fever", "status": "positive"}, {"extract": null, "status": "positive"}]"#,
            Malformed(1),
        ),
        case("empty_extract", r#"[{"extract": "", "status": "positive"}]"#, Malformed(0)),
        case(
            "whitespace_only_extract",
            r#"[{"extract": "   ", "status": "negative"}]"#,
            Malformed(0),
        ),
        case(
            "unknown_status_word",
            r#"[{"extract": "fever", "status": "present"}]"#,
            BadStatus(0),
        ),
        case(
            "second_element_bad_status",
            r#"[{"extract": "fever", "status": "positive"}, {"extract": "cough", "status": "absent"}]"#,
            BadStatus(1),
        ),
        case(
            "symbol_status",
            r#"[{"extract": "fever", "status": "+"}]"#,
            BadStatus(0),
        ),
        // No usable JSON at all.
        case("prose_only", "The patient denies fever and chills.", NoJson),
        case(
            "bare_object_is_not_an_array",
            r#"{"extract": "fever", "status": "positive"}"#,
            NoJson,
        ),
        case("empty_input", "", NoJson),
        case("lone_open_bracket", "[", NoJson),
        case(
            "unbalanced_array",
            r#"[{"extract": "fever", "status": "positive"}"#,
            NoJson,
        ),
        case("bracket_citations_only", "[1] [2] [3]", NoJson),
        case(
            "unterminated_string",
            r#"[{"extract": "fev"#,
            NoJson,
        ),
        case(
            "string_elements_rejected",
            r#"["fever", "cough"]"#,
            NoJson,
        ),
        case(
            "null_element_rejects_array",
            r#"[{"extract": "fever", "status": "positive"}, null]"#,
            NoJson,
        ),
        case("shrug_garbage", "¯\\_(ツ)_/¯ no entities 🤷", NoJson),
    ]
}
