use serde::{Deserialize, Serialize};

pub const ENTITY_TOKEN: &str = "[entity]";

/// A removed marker: the exact text taken out (token plus any absorbed
/// whitespace) and where it sat in the de-tagged text, as a char offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub at: usize,
    pub removed: String,
}

/// A tagged reply with its markers removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedNote {
    pub original: String,
    /// Text with every marker removed.
    pub text: String,
    /// Entity spans over `text` as half-open char offsets, in order, non-overlapping.
    pub spans: Vec<(usize, usize)>,
    pub markers: Vec<Marker>,
    pub warnings: Vec<String>,
}

impl TaggedNote {
    pub fn span_text(&self, i: usize) -> String {
        let (s, e) = self.spans[i];
        self.text.chars().skip(s).take(e - s).collect()
    }

    pub fn span_texts(&self) -> Vec<String> {
        (0..self.spans.len()).map(|i| self.span_text(i)).collect()
    }

    /// Re-inserts every marker; equals `original`.
    pub fn retag(&self) -> String {
        let mut out = String::with_capacity(self.original.len());
        let mut markers = self.markers.iter().peekable();
        for (i, c) in self.text.chars().enumerate() {
            while let Some(m) = markers.next_if(|m| m.at == i) {
                out.push_str(&m.removed);
            }
            out.push(c);
        }
        for m in markers {
            out.push_str(&m.removed);
        }
        out
    }
}

/// Pairs `[entity]` tokens left to right. An opening token swallows the
/// whitespace after it and a closing token the whitespace before it, unless
/// that would join two words. An unpaired final token is dropped with a warning.
pub fn parse_entity_tags(tagged: &str) -> TaggedNote {
    let positions: Vec<usize> = tagged.match_indices(ENTITY_TOKEN).map(|(i, _)| i).collect();
    let mut warnings = Vec::new();
    if positions.len() % 2 == 1 {
        warnings.push(format!(
            "odd number of {ENTITY_TOKEN} tokens ({}); the last one is unpaired and ignored",
            positions.len()
        ));
    }

    // Byte ranges to delete, and for pairs the byte range of the entity content.
    let mut cuts: Vec<(usize, usize)> = Vec::with_capacity(positions.len());
    for (k, &pos) in positions.iter().enumerate() {
        let end = pos + ENTITY_TOKEN.len();
        let is_close = k % 2 == 1;
        let prev = tagged[..pos].chars().next_back();
        let next = tagged[end..].chars().next();
        let cut = if is_close {
            let ws_start = pos - trailing_ws_len(&tagged[..pos]);
            let glue = next.is_some_and(|c| c.is_alphanumeric());
            // Never reach back into the opening marker's cut.
            let floor = cuts.last().map_or(0, |c: &(usize, usize)| c.1);
            if glue || ws_start < floor {
                (pos, end)
            } else {
                (ws_start, end)
            }
        } else {
            let ws_end = end + leading_ws_len(&tagged[end..]);
            let glue = prev.is_some_and(|c| c.is_alphanumeric());
            let limit = positions.get(k + 1).copied().unwrap_or(tagged.len());
            if glue || ws_end > limit {
                (pos, end)
            } else {
                (pos, ws_end)
            }
        };
        cuts.push(cut);
    }

    let mut text = String::with_capacity(tagged.len());
    let mut markers = Vec::with_capacity(cuts.len());
    let mut char_pos = 0usize;
    let mut byte_pos = 0usize;
    let mut boundaries = Vec::with_capacity(cuts.len());
    for &(s, e) in &cuts {
        let kept = &tagged[byte_pos..s];
        text.push_str(kept);
        char_pos += kept.chars().count();
        markers.push(Marker { at: char_pos, removed: tagged[s..e].to_string() });
        boundaries.push(char_pos);
        byte_pos = e;
    }
    text.push_str(&tagged[byte_pos..]);

    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    for pair in boundaries.chunks_exact(2) {
        let (mut s, mut e) = (pair[0], pair[1]);
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s == e {
            warnings.push(format!("empty entity at offset {}", pair[0]));
            continue;
        }
        spans.push((s, e));
    }
    TaggedNote { original: tagged.to_string(), text, spans, markers, warnings }
}

fn trailing_ws_len(s: &str) -> usize {
    s.len() - s.trim_end().len()
}

fn leading_ws_len(s: &str) -> usize {
    s.len() - s.trim_start().len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn denies_example() {
        let t = parse_entity_tags("now denies any [entity] shortness of breath [entity].");
        assert_eq!(t.text, "now denies any shortness of breath.");
        assert_eq!(t.span_texts(), ["shortness of breath"]);
        assert!(t.warnings.is_empty());
        assert_eq!(t.retag(), t.original);
    }

    #[test]
    fn zero_and_three_tokens() {
        let t = parse_entity_tags("plain note");
        assert!(t.spans.is_empty() && t.warnings.is_empty());
        assert_eq!(t.text, "plain note");
        let t = parse_entity_tags("a [entity] b [entity] c [entity] d");
        assert_eq!(t.span_texts(), ["b"]);
        assert_eq!(t.warnings.len(), 1);
        assert!(!t.text.contains(ENTITY_TOKEN));
        assert_eq!(t.retag(), t.original);
    }

    #[test]
    fn no_word_gluing() {
        let t = parse_entity_tags("with[entity] fever [entity]up to 39 C");
        assert_eq!(t.text, "with fever up to 39 C");
        assert_eq!(t.span_texts(), ["fever"]);
        assert_eq!(t.retag(), t.original);
    }

    #[test]
    fn char_offsets_with_multibyte_text() {
        let t = parse_entity_tags("patient’s [entity] fièvre [entity] persists");
        assert_eq!(t.span_texts(), ["fièvre"]);
        assert_eq!(t.spans, vec![(10, 16)]);
    }

    proptest! {
        #[test]
        fn retag_roundtrip(parts in proptest::collection::vec(prop_oneof![
            "[a-z]{1,6}".prop_map(String::from),
            Just(" ".to_string()),
            Just("  ".to_string()),
            Just(".".to_string()),
            Just("é".to_string()),
            Just(ENTITY_TOKEN.to_string()),
            Just(format!(" {ENTITY_TOKEN} ")),
        ], 0..25)) {
            let s: String = parts.concat();
            let t = parse_entity_tags(&s);
            prop_assert_eq!(t.retag(), s.clone());
            prop_assert!(!t.text.contains(ENTITY_TOKEN));
            let n = t.text.chars().count();
            for w in t.spans.windows(2) {
                prop_assert!(w[0].1 <= w[1].0);
            }
            for &(a, b) in &t.spans {
                prop_assert!(a < b && b <= n);
            }
        }
    }
}
