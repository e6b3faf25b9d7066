//! Values produced by independent reference implementations and frozen here.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use ctlab_core::corpus::{load_qrels, load_run, ClinicalTrial, Gender};
use ctlab_core::eval::{evaluate_run, paired_ttest, Measure};
use ctlab_core::index::{Bm25, InvertedIndex, WeightedQuery};
use ctlab_core::rm3::{Rm3, Rm3Config};
use ctlab_core::text::{stem, Stopwords, Term, TextPipeline};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn trial(id: &str, text: &str) -> ClinicalTrial {
    ClinicalTrial {
        id: id.into(),
        title: text.into(),
        official_title: None,
        condition: vec![],
        summary: String::new(),
        description: String::new(),
        eligibility_criteria: String::new(),
        gender: Gender::Unspecified,
        min_age_months: None,
        max_age_months: None,
    }
}

fn bare() -> TextPipeline {
    TextPipeline::new(Arc::new(Stopwords::parse("")))
}

fn unit(terms: &[&str]) -> WeightedQuery {
    WeightedQuery::from_unit(&terms.iter().map(|t| Term::new(*t).unwrap()).collect::<Vec<_>>())
}

#[test]
fn porter_matches_reference_stemmer() {
    let text = std::fs::read_to_string(fixture("oracles/porter.tsv")).unwrap();
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let (word, expected) = line.split_once('\t').unwrap();
        assert_eq!(stem(word), expected, "stem({word})");
        n += 1;
    }
    assert!(n > 3000);
}

#[test]
fn bm25_three_doc_values() {
    let docs = [trial("A", "fever cough fever"), trial("B", "cough rash"), trial("C", "glioma pain rash rash")];
    let idx = InvertedIndex::build(&docs, &bare()).unwrap();
    let hits = Bm25::default().retrieve(&idx, &unit(&["fever", "rash"]), 10);
    let got: BTreeMap<&str, f64> = hits.iter().map(|h| (idx.doc_id(h.ordinal), h.score)).collect();
    let expected = [("A", 0.7023852326782373), ("B", -0.5914823012027262), ("C", -0.6421807841629599)];
    assert_eq!(got.len(), 3);
    for (d, s) in expected {
        assert!((got[d] - s).abs() < 1e-12, "{d}: {} vs {s}", got[d]);
    }
    let order: Vec<&str> = hits.iter().map(|h| idx.doc_id(h.ordinal)).collect();
    assert_eq!(order, ["A", "B", "C"]);
}

#[test]
fn rm3_toy_expansion() {
    let docs = [
        trial("D1", "fever cough fever headache"),
        trial("D2", "fever rash rash"),
        trial("D3", "cough pain"),
        trial("D4", "glioma pain seizure"),
        trial("D5", "rash itch itch itch"),
    ];
    let p = bare();
    let idx = InvertedIndex::build(&docs, &p).unwrap();
    let cfg = Rm3Config { fb_docs: 2, fb_terms: 2, lambda_orig: 0.5 };
    let e = Rm3::new(cfg, Bm25::default(), p.stopwords()).expand(&idx, &unit(&["fever"]));
    assert_eq!(e.feedback_docs, 2);
    assert_eq!(e.query.len(), 2);
    assert!((e.query.weight("fever") - 0.7949869060980173).abs() < 1e-12);
    assert!((e.query.weight("rash") - 0.20501309390198277).abs() < 1e-12);
}

#[test]
fn ttest_matches_reference_statistics() {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("oracles/ttest.json")).unwrap()).unwrap();
    let cases = v["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 10);
    let vec_of = |x: &serde_json::Value| -> BTreeMap<u32, f64> {
        x.as_array().unwrap().iter().enumerate().map(|(i, y)| (i as u32, y.as_f64().unwrap())).collect()
    };
    for c in cases {
        let r = paired_ttest(&vec_of(&c["a"]), &vec_of(&c["b"]), 1).unwrap();
        let (t, p) = (c["t"].as_f64().unwrap(), c["p"].as_f64().unwrap());
        assert_eq!(r.n, 50);
        assert!((r.t - t).abs() < 1e-9, "t {} vs {t}", r.t);
        assert!((r.p_two_sided - p).abs() < 1e-8, "p {} vs {p}", r.p_two_sided);
    }
}

include!("fixtures/metrics/expected.rs");

#[test]
fn metric_fixture_matches_hand_evaluation() {
    let run = load_run(&fixture("metrics/run.txt")).unwrap();
    let qrels = load_qrels(&fixture("metrics/qrels.txt")).unwrap();
    let report = evaluate_run(&run, &qrels, true);
    for (name, vals) in METRIC_ORACLE {
        let m: Measure = name.parse().unwrap();
        for (i, topic) in [1u32, 2, 3].into_iter().enumerate() {
            let got = report.get(topic, m).unwrap();
            assert!((got - vals[i]).abs() < 1e-6, "{name} topic {topic}: {got} vs {}", vals[i]);
        }
        assert!((report.mean(m).unwrap() - vals[3]).abs() < 1e-6, "{name} mean");
    }
}
