//! Character-offset helpers. All spans in this crate are Unicode scalar
//! offsets, never byte offsets, so multi-byte characters in note text do
//! not shift annotation positions.

/// Number of Unicode scalar values in `s`.
pub fn char_count(s: &str) -> usize {
    s.chars().count()
}

/// Slice `s` by character offsets `[start, end)`. Returns `None` when the
/// range does not fit inside `s`.
pub fn slice_chars(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let byte_start = byte_offset(s, start)?;
    let byte_end = byte_offset(s, end)?;
    Some(&s[byte_start..byte_end])
}

/// Length-preserving lowercase fold: the lowercase mapping when it is a
/// single character, the character itself otherwise (e.g. 'İ' lowercases
/// to two characters and is left alone so offsets stay aligned).
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Byte offset of character position `pos` in `s`; `pos` may equal the
/// character length (yielding `s.len()`).
pub fn byte_offset(s: &str, pos: usize) -> Option<usize> {
    if pos == 0 {
        return Some(0);
    }
    let mut seen = 0;
    for (byte_idx, _) in s.char_indices() {
        if seen == pos {
            return Some(byte_idx);
        }
        seen += 1;
    }
    if seen == pos {
        Some(s.len())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slicing_counts_characters_not_bytes() {
        let s = "3°C fever";
        assert_eq!(char_count(s), 9);
        assert_eq!(slice_chars(s, 4, 9), Some("fever"));
        assert_eq!(slice_chars(s, 0, 3), Some("3°C"));
    }

    #[test]
    fn out_of_range_is_none() {
        assert_eq!(slice_chars("abc", 1, 4), None);
        assert_eq!(slice_chars("abc", 2, 1), None);
        assert_eq!(slice_chars("", 0, 0), Some(""));
    }

    #[test]
    fn fold_preserves_length() {
        assert_eq!(fold_char('A'), 'a');
        assert_eq!(fold_char('é'), 'é');
        assert_eq!(fold_char('Ü'), 'ü');
        // 'İ' lowercases to "i\u{307}" (two scalars); folding must not expand.
        assert_eq!(fold_char('İ'), 'İ');
    }
}
