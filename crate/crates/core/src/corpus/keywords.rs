use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::CorpusError;

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];

/// Splits on commas and line breaks that are not inside double quotes, trims
/// whitespace and surrounding quote characters, and drops empty items.
///
/// A double quote opens a quoted region only at the start of an item; a stray
/// quote elsewhere is literal. An unterminated region is split as if unquoted.
pub fn split_keywords(text: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut in_quote = false;
    for c in text.chars() {
        match c {
            '"' | '\u{201c}' | '\u{201d}' if in_quote => {
                in_quote = false;
                current.push(c);
            }
            '"' | '\u{201c}' if current.trim().is_empty() => {
                in_quote = true;
                current.push(c);
            }
            ',' | '\n' | '\r' if !in_quote => items.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    if in_quote {
        items.extend(current.split([',', '\n', '\r']).map(str::to_string));
    } else {
        items.push(current);
    }
    items.iter().map(|s| s.trim().trim_matches(QUOTES).trim()).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

pub fn load_keyword_queries(path: &Path) -> Result<BTreeMap<u32, Vec<String>>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_keyword_queries(&text)
}

/// Parses `topic_id<TAB>comma-separated keywords` lines. A topic may appear on
/// several lines; its keywords are concatenated in file order.
pub fn parse_keyword_queries(text: &str) -> Result<BTreeMap<u32, Vec<String>>, CorpusError> {
    let mut out: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, kws) =
            line.split_once('\t').ok_or_else(|| CorpusError::format(i + 1, "expected topic_id<TAB>keywords"))?;
        let id: u32 =
            id.trim().parse().map_err(|_| CorpusError::format(i + 1, format!("invalid topic id '{}'", id.trim())))?;
        out.entry(id).or_default().extend(split_keywords(kws));
    }
    Ok(out)
}

/// Merges several keyword queries into one holding each keyword once
/// (case-insensitive), in first-occurrence order.
pub fn concat_assessor_queries<S: AsRef<str>>(queries: &[Vec<S>]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for q in queries {
        for kw in q {
            let kw = kw.as_ref();
            if seen.insert(kw.to_lowercase()) {
                out.push(kw.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn assessor_concat_example() {
        let q = concat_assessor_queries(&[vec!["keyword1", "keyword2", "keyword3"], vec!["keyword2", "keyword4"]]);
        assert_eq!(q, ["keyword1", "keyword2", "keyword3", "keyword4"]);
        assert!(concat_assessor_queries::<&str>(&[vec![], vec![]]).is_empty());
        assert_eq!(concat_assessor_queries(&[vec!["A", "a"]]), ["A"]);
    }

    #[test]
    fn multi_line_topics_concatenate() {
        let q = parse_keyword_queries("4\tchest pain, angina\n5\trabies\n4\tnitrate trial\n").unwrap();
        assert_eq!(q[&4], ["chest pain", "angina", "nitrate trial"]);
        assert_eq!(q[&5], ["rabies"]);
        assert!(parse_keyword_queries("x\tfoo").is_err());
    }

    #[test]
    fn quoted_commas_kept_together() {
        assert_eq!(split_keywords(r#"a, "b, c", d"#), ["a", "b, c", "d"]);
        assert_eq!(split_keywords("x,,\n y ,"), ["x", "y"]);
        assert_eq!(split_keywords("a, `b c\", \"d, e\""), ["a", "b c", "d, e"]);
        assert_eq!(split_keywords("a, \"b, c"), ["a", "b", "c"]);
    }

    proptest! {
        #[test]
        fn concat_is_idempotent(lists in proptest::collection::vec(proptest::collection::vec("[a-cA-C]{1,3}", 0..8), 0..5)) {
            let once = concat_assessor_queries(&lists);
            let twice = concat_assessor_queries(std::slice::from_ref(&once));
            prop_assert_eq!(once, twice);
        }
    }
}
