use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    All,
    Male,
    Female,
    #[default]
    Unspecified,
}

impl Gender {
    fn from_registry(s: &str) -> Gender {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "both" => Gender::All,
            "male" => Gender::Male,
            "female" => Gender::Female,
            _ => Gender::Unspecified,
        }
    }
}

/// One registry document. The JSON field names double as the flat (JSON Lines)
/// corpus format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalTrial {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub official_title: Option<String>,
    #[serde(default)]
    pub condition: Vec<String>,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub eligibility_criteria: String,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub min_age_months: Option<u32>,
    #[serde(default)]
    pub max_age_months: Option<u32>,
}

impl ClinicalTrial {
    /// All indexable sections in a fixed order, separated by newlines.
    pub fn indexable_text(&self) -> String {
        let mut parts: Vec<&str> = vec![&self.title];
        if let Some(t) = &self.official_title {
            parts.push(t);
        }
        parts.extend(self.condition.iter().map(String::as_str));
        parts.push(&self.summary);
        parts.push(&self.description);
        parts.push(&self.eligibility_criteria);
        parts.join("\n")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty trial id".into());
        }
        if [&self.title, &self.summary, &self.description, &self.eligibility_criteria]
            .iter()
            .all(|s| s.trim().is_empty())
        {
            return Err(format!("{}: no title, summary, description or eligibility text", self.id));
        }
        if let (Some(lo), Some(hi)) = (self.min_age_months, self.max_age_months) {
            if lo > hi {
                return Err(format!("{}: minimum age {lo} months exceeds maximum {hi}", self.id));
            }
        }
        Ok(())
    }
}

/// Registry age string to whole months. `"N/A"`, empty and unrecognized strings are absent.
///
/// Weeks, days and smaller units are converted through an average month of
/// 30.4375 days and floored.
pub fn parse_age_months(s: &str) -> Option<u32> {
    let s = s.trim();
    let mut parts = s.split_whitespace();
    let value: f64 = parts.next()?.parse().ok()?;
    let unit = parts.next()?.to_ascii_lowercase();
    let unit = unit.trim_end_matches('s');
    let months = match unit {
        "year" => value * 12.0,
        "month" => value,
        "week" => value * 7.0 / 30.4375,
        "day" => value / 30.4375,
        "hour" => value / (30.4375 * 24.0),
        "minute" => value / (30.4375 * 24.0 * 60.0),
        _ => return None,
    };
    if !(0.0..=u32::MAX as f64).contains(&months) {
        return None;
    }
    Some(months.floor() as u32)
}

fn child<'a, 'i>(parent: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    parent.children().find(|n| n.is_element() && n.tag_name().name() == name)
}

/// Parses one ClinicalTrials.gov public-dump XML document.
pub fn parse_trial_xml(xml: &str) -> Result<ClinicalTrial, String> {
    let opts = roxmltree::ParsingOptions { allow_dtd: true, ..Default::default() };
    let doc = roxmltree::Document::parse_with_options(xml, opts).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    if root.tag_name().name() != "clinical_study" {
        return Err(format!("unexpected root element <{}>", root.tag_name().name()));
    }
    let text_of = |n: Option<roxmltree::Node<'_, '_>>| -> String {
        n.map(|n| {
            n.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect::<String>().trim().to_string()
        })
        .unwrap_or_default()
    };

    let id = text_of(child(root, "id_info").and_then(|n| child(n, "nct_id")));
    let official = text_of(child(root, "official_title"));
    let eligibility = child(root, "eligibility");
    let elig_field = |name: &str| eligibility.and_then(|e| child(e, name));

    let trial = ClinicalTrial {
        id,
        title: text_of(child(root, "brief_title")),
        official_title: (!official.is_empty()).then_some(official),
        condition: root
            .children()
            .filter(|n| n.is_element() && n.tag_name().name() == "condition")
            .map(|n| text_of(Some(n)))
            .filter(|s| !s.is_empty())
            .collect(),
        summary: text_of(child(root, "brief_summary")),
        description: text_of(child(root, "detailed_description")),
        eligibility_criteria: text_of(elig_field("criteria")),
        gender: elig_field("gender").map(|n| Gender::from_registry(&text_of(Some(n)))).unwrap_or_default(),
        min_age_months: parse_age_months(&text_of(elig_field("minimum_age"))),
        max_age_months: parse_age_months(&text_of(elig_field("maximum_age"))),
    };
    trial.validate()?;
    Ok(trial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// ClinicalTrials.gov XML, one document per file.
    Xml,
    /// JSON Lines, one `ClinicalTrial` object per line.
    Flat,
}

impl CorpusFormat {
    fn detect(name: &str) -> Option<CorpusFormat> {
        let lower = name.to_ascii_lowercase();
        if lower.ends_with(".xml") {
            Some(CorpusFormat::Xml)
        } else if lower.ends_with(".jsonl") || lower.ends_with(".ndjson") {
            Some(CorpusFormat::Flat)
        } else {
            None
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xml" => Ok(CorpusFormat::Xml),
            "flat" => Ok(CorpusFormat::Flat),
            other => Err(format!("unknown corpus format '{other}' (expected xml or flat)")),
        }
    }
}

/// A document that was skipped during loading.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadWarning {
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrialLoad {
    /// Sorted by registry id, ids unique.
    pub trials: Vec<ClinicalTrial>,
    pub warnings: Vec<LoadWarning>,
}

type ParsedSource = (Vec<(String, ClinicalTrial)>, Vec<LoadWarning>);

struct RawSource {
    name: String,
    format: CorpusFormat,
    content: String,
}

/// Loads a directory tree, a `.zip` archive, or a single `.xml`/`.jsonl` file.
///
/// Unreadable paths are fatal; documents that fail to parse are reported in
/// [`TrialLoad::warnings`] and skipped.
pub fn load_trials(path: &Path, format: Option<CorpusFormat>) -> Result<TrialLoad, CorpusError> {
    let meta = std::fs::metadata(path).map_err(|e| CorpusError::io(path, e))?;
    let mut sources = Vec::new();
    let mut warnings = Vec::new();
    let accept = |name: &str| -> Option<CorpusFormat> {
        let detected = CorpusFormat::detect(name)?;
        match format {
            Some(f) if f != detected => None,
            _ => Some(detected),
        }
    };

    if meta.is_dir() {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in WalkDir::new(path) {
            let entry = entry.map_err(|e| {
                let p = e.path().map(Path::to_path_buf).unwrap_or_else(|| path.to_path_buf());
                CorpusError::io(p, e.into())
            })?;
            if entry.file_type().is_file() {
                files.push(entry.into_path());
            }
        }
        files.sort();
        for file in files {
            let name = file.to_string_lossy().into_owned();
            if name.to_ascii_lowercase().ends_with(".zip") {
                read_zip(&file, &accept, &mut sources, &mut warnings)?;
            } else if let Some(fmt) = accept(&name) {
                match std::fs::read_to_string(&file) {
                    Ok(content) => sources.push(RawSource { name, format: fmt, content }),
                    Err(e) => warnings.push(LoadWarning { source: name, message: e.to_string() }),
                }
            }
        }
    } else {
        let name = path.to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".zip") {
            read_zip(path, &accept, &mut sources, &mut warnings)?;
        } else {
            let fmt = accept(&name).or(format).unwrap_or(CorpusFormat::Flat);
            let content = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
            sources.push(RawSource { name, format: fmt, content });
        }
    }

    let parsed: Vec<ParsedSource> = sources.par_iter().map(parse_source).collect();
    let mut docs = Vec::new();
    for (d, w) in parsed {
        docs.extend(d);
        warnings.extend(w);
    }
    let load = assemble(docs, warnings);
    for w in &load.warnings {
        warn!("skipped {}: {}", w.source, w.message);
    }
    Ok(load)
}

fn read_zip(
    path: &Path,
    accept: &dyn Fn(&str) -> Option<CorpusFormat>,
    sources: &mut Vec<RawSource>,
    warnings: &mut Vec<LoadWarning>,
) -> Result<(), CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut archive =
        zip::ZipArchive::new(file).map_err(|e| CorpusError::io(path, std::io::Error::other(e.to_string())))?;
    let mut names: Vec<(String, usize)> =
        (0..archive.len()).filter_map(|i| archive.name_for_index(i).map(|n| (n.to_string(), i))).collect();
    names.sort();
    for (entry_name, i) in names {
        let Some(fmt) = accept(&entry_name) else { continue };
        let source = format!("{}!{}", path.display(), entry_name);
        let mut content = String::new();
        let read = archive
            .by_index(i)
            .map_err(|e| e.to_string())
            .and_then(|mut f| f.read_to_string(&mut content).map_err(|e| e.to_string()));
        match read {
            Ok(_) => sources.push(RawSource { name: source, format: fmt, content }),
            Err(message) => warnings.push(LoadWarning { source, message }),
        }
    }
    Ok(())
}

fn parse_source(src: &RawSource) -> ParsedSource {
    let mut docs = Vec::new();
    let mut warnings = Vec::new();
    match src.format {
        CorpusFormat::Xml => match parse_trial_xml(&src.content) {
            Ok(t) => docs.push((src.name.clone(), t)),
            Err(message) => warnings.push(LoadWarning { source: src.name.clone(), message }),
        },
        CorpusFormat::Flat => {
            for (i, line) in src.content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let source = format!("{}:{}", src.name, i + 1);
                let parsed = serde_json::from_str::<ClinicalTrial>(line)
                    .map_err(|e| e.to_string())
                    .and_then(|t| t.validate().map(|_| t));
                match parsed {
                    Ok(t) => docs.push((source, t)),
                    Err(message) => warnings.push(LoadWarning { source, message }),
                }
            }
        }
    }
    (docs, warnings)
}

/// Merges parsed documents deterministically: sorted by id, and when an id
/// repeats the copy from the lexicographically smallest source wins.
fn assemble(mut docs: Vec<(String, ClinicalTrial)>, mut warnings: Vec<LoadWarning>) -> TrialLoad {
    docs.sort_by(|a, b| a.1.id.cmp(&b.1.id).then_with(|| a.0.cmp(&b.0)));
    let mut by_id: BTreeMap<String, ClinicalTrial> = BTreeMap::new();
    for (source, t) in docs {
        if by_id.contains_key(&t.id) {
            warnings.push(LoadWarning { source, message: format!("duplicate trial id {}", t.id) });
        } else {
            by_id.insert(t.id.clone(), t);
        }
    }
    warnings.sort_by(|a, b| a.source.cmp(&b.source).then_with(|| a.message.cmp(&b.message)));
    TrialLoad { trials: by_id.into_values().collect(), warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<clinical_study rank="1">
  <id_info><nct_id>NCT00000001</nct_id></id_info>
  <brief_title>Temozolomide in Spinal Astrocytoma</brief_title>
  <official_title>A Phase II Study</official_title>
  <brief_summary><textblock>
      Short summary.
  </textblock></brief_summary>
  <condition>Astrocytoma</condition>
  <condition>Spinal Cord Neoplasms</condition>
  <eligibility>
    <criteria><textblock>Inclusion: adults</textblock></criteria>
    <gender>All</gender>
    <minimum_age>18 Years</minimum_age>
    <maximum_age>N/A</maximum_age>
  </eligibility>
</clinical_study>"#;

    #[test]
    fn xml_fields_and_ages() {
        let t = parse_trial_xml(SAMPLE).unwrap();
        assert_eq!(t.id, "NCT00000001");
        assert_eq!(t.condition, ["Astrocytoma", "Spinal Cord Neoplasms"]);
        assert_eq!(t.summary, "Short summary.");
        assert_eq!(t.official_title.as_deref(), Some("A Phase II Study"));
        assert_eq!(t.gender, Gender::All);
        assert_eq!(t.min_age_months, Some(216));
        assert_eq!(t.max_age_months, None);
    }

    #[test]
    fn age_units() {
        assert_eq!(parse_age_months("18 Years"), Some(216));
        assert_eq!(parse_age_months("6 Months"), Some(6));
        assert_eq!(parse_age_months("1 Year"), Some(12));
        assert_eq!(parse_age_months("N/A"), None);
        assert_eq!(parse_age_months(""), None);
        assert_eq!(parse_age_months("8 Weeks"), Some(1));
        assert_eq!(parse_age_months("29 Days"), Some(0));
    }

    #[test]
    fn invalid_documents_rejected() {
        assert!(parse_trial_xml("<clinical_study><id_info><nct_id>X</nct_id></id_info></clinical_study>").is_err());
        assert!(parse_trial_xml("<other/>").is_err());
        assert!(parse_trial_xml("not xml").is_err());
        let bad_ages = SAMPLE.replace("N/A", "1 Year");
        assert!(parse_trial_xml(&bad_ages).unwrap_err().contains("exceeds"));
    }

    #[test]
    fn assemble_is_order_independent() {
        let mk = |id: &str, title: &str| ClinicalTrial {
            id: id.into(),
            title: title.into(),
            official_title: None,
            condition: vec![],
            summary: String::new(),
            description: String::new(),
            eligibility_criteria: String::new(),
            gender: Gender::Unspecified,
            min_age_months: None,
            max_age_months: None,
        };
        let docs = vec![
            ("b".to_string(), mk("NCT2", "second copy")),
            ("c".to_string(), mk("NCT3", "three")),
            ("a".to_string(), mk("NCT2", "first copy")),
            ("d".to_string(), mk("NCT1", "one")),
        ];
        let mut reversed = docs.clone();
        reversed.reverse();
        let x = assemble(docs, vec![]);
        let y = assemble(reversed, vec![]);
        assert_eq!(x.trials, y.trials);
        assert_eq!(x.trials.len(), 3);
        assert_eq!(x.trials[1].title, "first copy");
        assert_eq!(x.warnings, y.warnings);
    }
}
