use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ParseError;
use crate::corpus::split_keywords;

/// Keys of the structured extraction template, in template order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordField {
    Abbreviations,
    Diagnosis,
    MedicalProblem,
    Diseases,
    Drug,
    Dosages,
    Symptoms,
    Treatments,
    Medications,
    MedicalHistory,
    FamilyHistory,
    LifestyleFactors,
    LabExaminations,
    LabResults,
    VitalSigns,
    Gender,
    Age,
    MeshTerms,
}

impl RecordField {
    pub const ALL: [RecordField; 18] = [
        RecordField::Abbreviations,
        RecordField::Diagnosis,
        RecordField::MedicalProblem,
        RecordField::Diseases,
        RecordField::Drug,
        RecordField::Dosages,
        RecordField::Symptoms,
        RecordField::Treatments,
        RecordField::Medications,
        RecordField::MedicalHistory,
        RecordField::FamilyHistory,
        RecordField::LifestyleFactors,
        RecordField::LabExaminations,
        RecordField::LabResults,
        RecordField::VitalSigns,
        RecordField::Gender,
        RecordField::Age,
        RecordField::MeshTerms,
    ];

    /// Field set used for query synthesis by default (MeSH terms are added separately).
    pub const DEFAULT_QUERY_FIELDS: [RecordField; 8] = [
        RecordField::Diagnosis,
        RecordField::MedicalProblem,
        RecordField::Diseases,
        RecordField::Drug,
        RecordField::Symptoms,
        RecordField::Treatments,
        RecordField::Medications,
        RecordField::LabExaminations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordField::Abbreviations => "abbreviations",
            RecordField::Diagnosis => "diagnosis",
            RecordField::MedicalProblem => "medical_problem",
            RecordField::Diseases => "diseases",
            RecordField::Drug => "drug",
            RecordField::Dosages => "dosages",
            RecordField::Symptoms => "symptoms",
            RecordField::Treatments => "treatments",
            RecordField::Medications => "medications",
            RecordField::MedicalHistory => "medical_history",
            RecordField::FamilyHistory => "family_history",
            RecordField::LifestyleFactors => "lifestyle_factors",
            RecordField::LabExaminations => "lab_examinations",
            RecordField::LabResults => "lab_results",
            RecordField::VitalSigns => "vital_signs",
            RecordField::Gender => "gender",
            RecordField::Age => "age",
            RecordField::MeshTerms => "mesh_terms",
        }
    }

    /// Accepts template keys in any case, with spaces or hyphens for
    /// underscores, plus known misspellings.
    pub fn from_key(key: &str) -> Option<Self> {
        let k: String =
            key.trim().chars().map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() }).collect();
        let k = match k.as_str() {
            "symptons" | "symptom" => "symptoms",
            "mesh" | "mesh_term" => "mesh_terms",
            other => other,
        };
        RecordField::ALL.into_iter().find(|f| f.as_str() == k)
    }
}

impl fmt::Display for RecordField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordField::from_key(s).ok_or_else(|| format!("unknown record field '{s}'"))
    }
}

/// Structured extraction result; a field is `None` when the model gave no value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientRecord {
    fields: BTreeMap<RecordField, String>,
}

impl PatientRecord {
    pub fn get(&self, field: RecordField) -> Option<&str> {
        self.fields.get(&field).map(String::as_str)
    }

    pub fn set(&mut self, field: RecordField, value: Option<String>) {
        match value {
            Some(v) => self.fields.insert(field, v),
            None => self.fields.remove(&field),
        };
    }

    /// Present fields in template order.
    pub fn present(&self) -> impl Iterator<Item = (RecordField, &str)> + '_ {
        self.fields.iter().map(|(f, v)| (*f, v.as_str()))
    }
}

/// A parsed record plus the repair steps that were needed to read it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordParse {
    pub record: PatientRecord,
    pub repairs: Vec<String>,
    pub warnings: Vec<String>,
}

impl RecordParse {
    pub fn repaired(&self) -> bool {
        !self.repairs.is_empty()
    }
}

/// True for the "no information" answers: N-A, N/A, "not applicable", empty,
/// or anything containing "not explicitly mentioned".
pub fn is_not_available(value: &str) -> bool {
    let v = value.trim().trim_matches(|c| c == '.' || c == '\'' || c == '"').trim().to_lowercase();
    v.is_empty() || v == "n-a" || v == "n/a" || v == "not applicable" || v.contains("not explicitly mentioned")
}

type Pass = (&'static str, fn(&str) -> String);

const PASSES: [Pass; 3] = [
    ("inserted missing commas", insert_missing_commas),
    ("balanced unterminated strings and brackets", balance_end),
    ("stripped trailing prose", strip_trailing_prose),
];

pub fn parse_patient_record(text: &str) -> Result<RecordParse, ParseError> {
    let mut repairs = Vec::new();
    let start = text.find('{').ok_or_else(|| ParseError::new("no JSON object in reply", text))?;
    let mut candidate = text[start..].to_string();
    if start > 0 && !text[..start].trim().is_empty() {
        repairs.push("stripped leading prose".to_string());
    }

    let mut parsed = serde_json::from_str::<Value>(&candidate).ok();
    if parsed.is_none() {
        let normalized = normalize_single_quotes(&candidate);
        if normalized != candidate {
            repairs.push("converted single-quoted strings".to_string());
            candidate = normalized;
            parsed = serde_json::from_str::<Value>(&candidate).ok();
        }
    }
    for (name, pass) in PASSES {
        if parsed.is_some() {
            break;
        }
        let next = pass(&candidate);
        if next != candidate {
            repairs.push(name.to_string());
            candidate = next;
            parsed = serde_json::from_str::<Value>(&candidate).ok();
        }
    }
    let value = parsed
        .ok_or_else(|| ParseError::new(format!("irreparable JSON (repairs tried: {})", repairs.join("; ")), text))?;

    let mut obj = match value {
        Value::Object(m) => m,
        _ => return Err(ParseError::new("JSON reply is not an object", text)),
    };
    if let Some(inner) = take_answer(&mut obj) {
        obj = inner;
    }
    let mut record = PatientRecord::default();
    let mut warnings = Vec::new();
    for (key, v) in obj {
        let Some(field) = RecordField::from_key(&key) else {
            warnings.push(format!("ignored unknown key '{key}'"));
            continue;
        };
        let value = flatten(&v);
        let value = value.filter(|s| !is_not_available(s)).map(|s| s.trim().to_string());
        if record.get(field).is_some() && value.is_some() {
            warnings.push(format!("duplicate key for {field}; keeping the first"));
            continue;
        }
        if record.get(field).is_none() {
            record.set(field, value);
        }
    }
    Ok(RecordParse { record, repairs, warnings })
}

fn take_answer(obj: &mut Map<String, Value>) -> Option<Map<String, Value>> {
    let key = obj.keys().find(|k| k.trim().eq_ignore_ascii_case("answer"))?.clone();
    match obj.remove(&key) {
        Some(Value::Object(inner)) => Some(inner),
        Some(other) => {
            obj.insert(key, other);
            None
        }
        None => None,
    }
}

fn flatten(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(flatten).filter(|s| !is_not_available(s)).collect();
            (!parts.is_empty()).then(|| parts.join(", "))
        }
        Value::Object(m) => {
            let parts: Vec<String> = m.iter().filter_map(|(k, v)| flatten(v).map(|s| format!("{k}: {s}"))).collect();
            (!parts.is_empty()).then(|| parts.join(", "))
        }
    }
}

/// Rewrites `'...'` string literals outside double-quoted strings as JSON strings.
fn normalize_single_quotes(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    let mut in_double = false;
    while i < chars.len() {
        let c = chars[i];
        if in_double {
            out.push(c);
            if c == '\\' && i + 1 < chars.len() {
                out.push(chars[i + 1]);
                i += 2;
                continue;
            }
            if c == '"' {
                in_double = false;
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_double = true;
                out.push(c);
                i += 1;
            }
            '\'' => {
                // Closing quote: the next ' followed by optional space and a structural char.
                let mut j = i + 1;
                let mut close = None;
                while j < chars.len() {
                    if chars[j] == '\'' {
                        let mut k = j + 1;
                        while k < chars.len() && chars[k].is_whitespace() {
                            k += 1;
                        }
                        if k == chars.len() || matches!(chars[k], ',' | ':' | '}' | ']') {
                            close = Some(j);
                            break;
                        }
                    }
                    j += 1;
                }
                match close {
                    Some(j) => {
                        let inner: String = chars[i + 1..j].iter().collect();
                        out.push_str(&Value::String(inner).to_string());
                        i = j + 1;
                    }
                    None => {
                        out.push(c);
                        i += 1;
                    }
                }
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Inserts a comma wherever a string, object or array is directly followed by
/// the opening quote of another string.
fn insert_missing_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len() + 8);
    let mut in_str = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        out.push(c);
        if in_str {
            if c == '\\' && i + 1 < chars.len() {
                out.push(chars[i + 1]);
                i += 2;
                continue;
            }
            if c == '"' {
                in_str = false;
                comma_if_string_follows(&chars, i, &mut out);
            }
        } else if c == '"' {
            in_str = true;
        } else if c == '}' || c == ']' {
            comma_if_string_follows(&chars, i, &mut out);
        }
        i += 1;
    }
    out
}

fn comma_if_string_follows(chars: &[char], i: usize, out: &mut String) {
    let mut k = i + 1;
    while k < chars.len() && chars[k].is_whitespace() {
        k += 1;
    }
    if k < chars.len() && chars[k] == '"' {
        out.push(',');
    }
}

/// Closes an unterminated string, drops a dangling comma, completes a
/// dangling key, and appends missing closing brackets.
fn balance_end(s: &str) -> String {
    let mut stack = Vec::new();
    let mut in_str = false;
    let mut escaped = false;
    for c in s.chars() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => stack.push('}'),
            '[' => stack.push(']'),
            '}' | ']' => {
                stack.pop();
            }
            _ => {}
        }
    }
    if stack.is_empty() && !in_str {
        return s.to_string();
    }
    let mut out = s.to_string();
    if in_str {
        if escaped {
            out.pop();
        }
        out.push('"');
    }
    let trimmed_len = out.trim_end().len();
    out.truncate(trimmed_len);
    if out.ends_with(',') {
        out.pop();
    } else if out.ends_with(':') {
        out.push_str("\"\"");
    } else if stack.last() == Some(&'}') && dangling_key(&out) {
        out.push_str(":\"\"");
    }
    while let Some(c) = stack.pop() {
        out.push(c);
    }
    out
}

/// True when the text ends with a string that sits in key position.
fn dangling_key(s: &str) -> bool {
    if !s.ends_with('"') {
        return false;
    }
    let body = &s[..s.len() - 1];
    let mut i = body.len();
    let bytes = body.as_bytes();
    while i > 0 {
        i -= 1;
        if bytes[i] == b'"' && (i == 0 || bytes[i - 1] != b'\\') {
            return body[..i].trim_end().ends_with([',', '{']);
        }
    }
    false
}

/// Truncates after the bracket that closes the first top-level object.
fn strip_trailing_prose(s: &str) -> String {
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return s[..=i].to_string();
                }
            }
            _ => {}
        }
    }
    s.to_string()
}

/// Concatenates the selected present fields (then MeSH terms if requested),
/// splits on commas and keeps each item once, case-insensitively.
pub fn synthesize_record_query(record: &PatientRecord, fields: &[RecordField], include_mesh: bool) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mesh = include_mesh.then_some(RecordField::MeshTerms);
    for field in fields.iter().copied().chain(mesh) {
        if let Some(v) = record.get(field) {
            for item in split_keywords(v) {
                if seen.insert(item.to_lowercase()) {
                    out.push(item);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_na_fields_absent() {
        let body: Vec<String> = RecordField::ALL.iter().map(|f| format!("\"{f}\": \"N-A\"")).collect();
        let r = parse_patient_record(&format!("{{\"answer\": {{{}}}}}", body.join(", "))).unwrap();
        assert_eq!(r.record.present().count(), 0);
        assert!(!r.repaired());
    }

    #[test]
    fn single_quoted_not_applicable() {
        let r =
            parse_patient_record("{\"answer\": {'lifestyle_factors':'Not applicable', \"gender\": \"male\"}}").unwrap();
        assert_eq!(r.record.get(RecordField::LifestyleFactors), None);
        assert_eq!(r.record.get(RecordField::Gender), Some("male"));
        assert!(r.repaired());
    }

    #[test]
    fn missing_commas_and_truncation() {
        let r = parse_patient_record("{\"answer\": {\"diagnosis\": \"glioma\"\n\"age\": \"45\"\n\"drug\": \"temozol")
            .unwrap();
        assert_eq!(r.record.get(RecordField::Diagnosis), Some("glioma"));
        assert_eq!(r.record.get(RecordField::Age), Some("45"));
        assert_eq!(r.record.get(RecordField::Drug), Some("temozol"));
        assert_eq!(r.repairs, ["inserted missing commas", "balanced unterminated strings and brackets"]);
    }

    #[test]
    fn prose_around_object() {
        let r =
            parse_patient_record("Here is the JSON:\n{\"gender\": \"female\"}\nLet me know if you need more.").unwrap();
        assert_eq!(r.record.get(RecordField::Gender), Some("female"));
        assert_eq!(r.repairs, ["stripped leading prose", "stripped trailing prose"]);
    }

    #[test]
    fn synonyms_and_numbers() {
        let r = parse_patient_record(
            "{\"Symptons\": \"cough\", \"MeSH terms\": [\"Cough\", \"N/A\"], \"age\": 8, \"lab_results\": \"Not explicitly mentioned in the note\"}",
        )
        .unwrap();
        assert_eq!(r.record.get(RecordField::Symptoms), Some("cough"));
        assert_eq!(r.record.get(RecordField::MeshTerms), Some("Cough"));
        assert_eq!(r.record.get(RecordField::Age), Some("8"));
        assert_eq!(r.record.get(RecordField::LabResults), None);
    }

    #[test]
    fn irreparable() {
        assert!(parse_patient_record("no json here").is_err());
        assert!(parse_patient_record("{\"a\": tru}").is_err());
    }

    #[test]
    fn synthesis_dedup_and_empty() {
        let mut rec = PatientRecord::default();
        rec.set(RecordField::Drug, Some("steroids, Avastin".into()));
        rec.set(RecordField::Medications, Some("Steroids, avastin".into()));
        assert_eq!(synthesize_record_query(&rec, &RecordField::DEFAULT_QUERY_FIELDS, true), ["steroids", "Avastin"]);
        assert!(synthesize_record_query(&rec, &[], false).is_empty());
    }
}
