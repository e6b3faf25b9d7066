//! Acceptance checks, one PASS/FAIL/SKIP line per criterion.
//!
//! The real-collection check runs only when `CTLAB_TREC2021_DIR` points at a
//! directory holding `corpus/` (or `corpus.zip`), `topics.xml` and `qrels.txt`.

use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ctlab_core::corpus::{load_qrels, load_run, load_trials, ClinicalTrial, Gender};
use ctlab_core::eval::{evaluate_run, paired_ttest, Measure};
use ctlab_core::index::{Bm25, InvertedIndex, WeightedQuery};
use ctlab_core::negation::{AssertionLabel, RulesProvider};
use ctlab_core::parsing::{
    derive_queries, load_sidecar, parse_entity_tags, parse_keyword_list, parse_patient_record, QueryOptions,
    RecordField,
};
use ctlab_core::prompts::StrategyId;
use ctlab_core::rm3::{Rm3, Rm3Config};
use ctlab_core::text::{Stopwords, TextPipeline};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Option<Outcome>);

fn core_fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("BM25 oracle equivalence", || Some(bm25_oracle())),
        ("Metric fixture suite", || Some(metric_suite())),
        ("RM3 degeneracy", || Some(rm3_degeneracy())),
        ("Parser golden suite", || Some(parser_suite())),
        ("End-to-end hermetic replay", || Some(hermetic_replay())),
        ("TREC 2021 baseline reproduction", trec_baseline),
        ("LLM rows regenerate from replay", || Some(llm_rows_replay())),
        ("Significance machinery", || Some(significance())),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Some(Ok(detail))) => println!("PASS  {name}: {detail}"),
            Ok(Some(Err(why))) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Ok(None) => println!("SKIP  {name}: set CTLAB_TREC2021_DIR to run (needs the real collection)"),
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn trial(id: String, text: String) -> ClinicalTrial {
    ClinicalTrial {
        id,
        title: text,
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

/// Scores every document from its own term list, with no index involved.
fn brute_force(docs: &[(String, Vec<String>)], query: &BTreeMap<String, f64>) -> Vec<(String, f64)> {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let mut hits = Vec::new();
    for (id, terms) in docs {
        let dl = terms.len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for (q, &w) in query {
            let tf = terms.iter().filter(|t| *t == q).count() as f64;
            if tf == 0.0 || w <= 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|(_, t)| t.contains(q)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5)).ln();
            score += w * idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if matched {
            hits.push((id.clone(), score));
        }
    }
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits
}

fn bm25_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(20211);
    let syllables = ["ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "xe", "zu"];
    let vocab: Vec<String> = (0..80)
        .map(|_| (0..rng.gen_range(2..4)).map(|_| syllables[rng.gen_range(0..syllables.len())]).collect())
        .collect();
    let mut trials = Vec::new();
    for i in 0..100 {
        // Every tenth document duplicates its predecessor to force score ties.
        let text = if i % 10 == 9 {
            trials.last().map(|t: &ClinicalTrial| t.title.clone()).unwrap()
        } else {
            let len = rng.gen_range(5..60);
            (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect::<Vec<_>>().join(" ")
        };
        trials.push(trial(format!("NCT{:08}", 1000 - i), text));
    }
    trials.sort_by(|a, b| a.id.cmp(&b.id));
    let pipeline = TextPipeline::default();
    let index = InvertedIndex::build(&trials, &pipeline).map_err(|e| e.to_string())?;
    let docs: Vec<(String, Vec<String>)> = trials
        .iter()
        .map(|t| (t.id.clone(), pipeline.process(&t.indexable_text()).iter().map(|x| x.as_str().to_string()).collect()))
        .collect();
    let bm25 = Bm25::default();
    let mut compared = 0;
    for qi in 0..20 {
        let mut words: Vec<&str> =
            (0..rng.gen_range(1..7)).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect();
        if qi % 5 == 0 {
            words.push("zzqqunseen");
        }
        let terms = pipeline.process(&words.join(" "));
        let query = WeightedQuery::from_counts(&terms);
        let weights: BTreeMap<String, f64> = query.iter().map(|(t, w)| (t.as_str().to_string(), w)).collect();
        let expected = brute_force(&docs, &weights);
        let got = bm25.rank(&index, &query, 1000, qi, "oracle");
        check!(got.docs.len() == expected.len(), "query {qi}: {} hits vs {} expected", got.docs.len(), expected.len());
        for (g, (id, score)) in got.docs.iter().zip(&expected) {
            check!(&g.doc_id == id, "query {qi}: order differs at {} ({} vs {id})", g.rank, g.doc_id);
            check!((g.score - score).abs() < 1e-9, "query {qi}: {id} scored {} vs {score}", g.score);
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("20 queries, {compared} scored documents within 1e-9, identical order, {elapsed:.2?}"))
}

include!("../../core/tests/fixtures/metrics/expected.rs");

fn metric_suite() -> Outcome {
    let run = load_run(&core_fixture("metrics/run.txt")).map_err(|e| e.to_string())?;
    let qrels = load_qrels(&core_fixture("metrics/qrels.txt")).map_err(|e| e.to_string())?;
    let report = evaluate_run(&run, &qrels, true);
    let mut n = 0;
    for (name, vals) in METRIC_ORACLE {
        let m: Measure = name.parse().map_err(|e| format!("{e}"))?;
        for (i, topic) in [1u32, 2, 3].into_iter().enumerate() {
            let got = report.get(topic, m).ok_or(format!("{name} missing"))?;
            check!((got - vals[i]).abs() < 1e-6, "{name} topic {topic}: {got} vs {}", vals[i]);
            n += 1;
        }
        let mean = report.mean(m).ok_or(format!("{name} mean missing"))?;
        check!((mean - vals[3]).abs() < 1e-6, "{name} mean: {mean} vs {}", vals[3]);
    }
    // Grades [2, 0, 1] against the ideal [2, 1, 0]: 2.5 / (2 + 1/log2 3).
    let j = ctlab_core::eval::Judgments::new([("a", 2), ("b", 0), ("c", 1)]);
    let worked = ctlab_core::eval::ndcg_at_k(&["a", "b", "c"], &j, 3);
    check!((worked - 0.950_234_416_789_835_6).abs() < 1e-6, "worked nDCG example {worked}");
    Ok(format!("{n} per-topic values and 16 means within 1e-6; worked nDCG = {worked:.6}"))
}

fn mini_index() -> Result<(InvertedIndex, TextPipeline), String> {
    let pipeline = TextPipeline::default();
    let load = load_trials(&core_fixture("mini/corpus"), None).map_err(|e| e.to_string())?;
    let index = InvertedIndex::build(&load.trials, &pipeline).map_err(|e| e.to_string())?;
    Ok((index, pipeline))
}

fn rm3_degeneracy() -> Outcome {
    let (index, pipeline) = mini_index()?;
    let bm25 = Bm25::default();
    let stop = Stopwords::bundled();
    let mut queries: Vec<WeightedQuery> = Vec::new();
    for sidecar in ["IEMT.tsv", "NRIEMT.tsv"] {
        for e in load_sidecar(&golden(sidecar)).map_err(|e| e.to_string())? {
            queries.push(WeightedQuery::from_unit(&ctlab_core::parsing::build_query_terms(&pipeline, &e.keywords)));
        }
    }
    let topics = ctlab_core::corpus::load_topics(&core_fixture("mini/topics.xml")).map_err(|e| e.to_string())?;
    queries.extend(topics.iter().map(|t| WeightedQuery::from_counts(&pipeline.process(&t.text))));

    let identity = Rm3::new(Rm3Config { lambda_orig: 1.0, ..Rm3Config::default() }, bm25, &stop);
    for (i, q) in queries.iter().enumerate() {
        let plain = bm25.rank(&index, q, 1000, 1, "t");
        let expanded = bm25.rank(&index, &identity.expand(&index, q).query, 1000, 1, "t");
        check!(plain == expanded, "query {i}: lambda = 1 changed the ranking");
    }

    let rm3 = Rm3::new(Rm3Config::default(), bm25, &stop);
    let mut rng = StdRng::seed_from_u64(50);
    let terms = index.terms();
    let mut expansions = 0;
    for i in 0..50 {
        let picked: Vec<_> = (0..rng.gen_range(1..5)).map(|_| terms[rng.gen_range(0..terms.len())].clone()).collect();
        let q = WeightedQuery::from_unit(&picked);
        let feedback: BTreeSet<String> = bm25
            .retrieve(&index, &q, Rm3Config::default().fb_docs)
            .iter()
            .flat_map(|h| index.doc_terms(h.ordinal).map(|(t, _)| t.as_str().to_string()).collect::<Vec<_>>())
            .collect();
        let out = rm3.expand(&index, &q).query;
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        check!((total - 1.0).abs() < 1e-12, "query {i}: weights sum to {total}");
        for (t, w) in out.iter() {
            if q.weight(t.as_str()) == 0.0 && w > 0.0 {
                check!(feedback.contains(t.as_str()), "query {i}: '{}' is outside the feedback vocabulary", t.as_str());
                expansions += 1;
            }
        }
    }
    Ok(format!(
        "lambda = 1 reproduces {} mini-corpus rankings exactly; {expansions} expansion terms on 50 random queries all in feedback vocabulary",
        queries.len()
    ))
}

fn reply_example(name: &str) -> Result<String, String> {
    let p = core_fixture("reply_examples").join(name);
    std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
}

fn parser_suite() -> Outcome {
    let opts = QueryOptions::default();
    let one = |s: &str| vec![s.to_string()];
    let qgmt = parse_keyword_list(&reply_example("qgmt.txt")?).map_err(|e| e.to_string())?;
    check!(qgmt.len() == 15, "QGMT yields {} keywords", qgmt.len());
    let iemt = parse_keyword_list(&reply_example("iemt.txt")?).map_err(|e| e.to_string())?;
    check!(iemt.len() == 14, "IEMT yields {} keywords", iemt.len());
    derive_queries(StrategyId::Qggt, &one(&reply_example("qggt.txt")?), &opts).map_err(|e| e.to_string())?;
    derive_queries(StrategyId::Ieg, &[reply_example("ieg.extracted.txt")?, reply_example("ieg.expanded.txt")?], &opts)
        .map_err(|e| e.to_string())?;
    derive_queries(StrategyId::FewshotQg, &one(&reply_example("fewshot_qg.txt")?), &opts).map_err(|e| e.to_string())?;
    parse_keyword_list(&reply_example("nriemt.iemt.txt")?).map_err(|e| e.to_string())?;

    let record = parse_patient_record(&reply_example("iemdmt.txt")?).map_err(|e| e.to_string())?.record;
    check!(record.get(RecordField::Gender) == Some("male"), "gender {:?}", record.get(RecordField::Gender));
    check!(record.get(RecordField::Age) == Some("45"), "age {:?}", record.get(RecordField::Age));
    check!(
        record.get(RecordField::FamilyHistory).is_none(),
        "family history {:?}",
        record.get(RecordField::FamilyHistory)
    );

    let tagged = parse_entity_tags(&reply_example("nriemt.tag.txt")?);
    check!(tagged.warnings.is_empty() && tagged.spans.len() == 12, "tagging example: {:?}", tagged.warnings);
    let denies = parse_entity_tags(reply_example("nriemt.tag_denies.txt")?.trim_end());
    check!(denies.span_texts() == ["shortness of breath"], "denies example spans {:?}", denies.span_texts());
    let label = RulesProvider::default().classify(&denies.text, &denies.spans).map_err(|e| e.to_string())?[0].label;
    check!(label == AssertionLabel::Absent, "shortness of breath labelled {label:?}");
    Ok("10 example outputs parse; QGMT 15, IEMT 14, IEMDMT male/45/no family history, 'shortness of breath' span absent".into())
}

fn ctlab(args: &[&str], endpoint: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ctlab"))
        .args(args)
        .env("CTLAB_LLM_ENDPOINT", endpoint)
        .env_remove("CTLAB_ASSERTION_ENDPOINT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// The mini experiment from index to comparison table, all under `out`.
fn mini_experiment(out: &Path, endpoint: &str) -> Result<(), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mini = core_fixture("mini");
    let (o, qrels, topics) = (s(out), s(&mini.join("qrels.txt")), s(&mini.join("topics.xml")));
    ctlab(&["index", "--corpus", &s(&mini.join("corpus")), "--out", &o], endpoint)?;
    ctlab(
        &[
            "genqueries",
            "--topics",
            &topics,
            "--strategy",
            "IEMT,NRIEMT",
            "--mode",
            "replay",
            "--cache",
            &s(&mini.join("cache")),
            "--model",
            "gpt-3.5-turbo",
            "--out",
            &o,
        ],
        endpoint,
    )?;
    ctlab(&["search", "--out", &o, "--topics", &topics], endpoint)?;
    for name in ["IEMT", "NRIEMT"] {
        let sidecar = s(&out.join(format!("queries/{name}.tsv")));
        ctlab(&["search", "--out", &o, "--queries", &sidecar], endpoint)?;
        ctlab(&["search", "--out", &o, "--queries", &sidecar, "--rm3"], endpoint)?;
        for run in [name.to_string(), format!("{name}+rm3")] {
            let path = s(&out.join(format!("runs/{run}.run")));
            ctlab(&["eval", "--run", &path, "--qrels", &qrels, "--condensed", "--out", &o], endpoint)?;
        }
    }
    let runs = out.join("runs");
    ctlab(
        &[
            "compare",
            "--qrels",
            &qrels,
            "--baseline",
            &s(&runs.join("topics.run")),
            &s(&runs.join("IEMT+rm3.run")),
            &s(&runs.join("NRIEMT+rm3.run")),
            "--condensed",
            "--out",
            &o,
        ],
        endpoint,
    )
}

fn hermetic_replay() -> Outcome {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).map_err(|e| e.to_string())?;
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    mini_experiment(&a, &endpoint)?;
    mini_experiment(&b, &endpoint)?;
    let elapsed = start.elapsed();
    let (fa, fb) = (files_under(&a), files_under(&b));
    check!(fa == fb, "outputs differ between executions");
    let runs = fa.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "run")).count();
    let tsvs = fa.iter().filter(|(p, _)| p.starts_with("eval")).count();
    check!(runs == 5 && tsvs == 4, "expected 5 runs and 4 metric TSVs, got {runs} and {tsvs}");
    for (rel, gold) in [("eval/IEMT+rm3.tsv", "IEMT+rm3.eval.tsv"), ("eval/NRIEMT+rm3.tsv", "NRIEMT+rm3.eval.tsv")] {
        let got = fa.iter().find(|(p, _)| p == Path::new(rel)).map(|(_, b)| b.clone()).unwrap_or_default();
        check!(got == std::fs::read(golden(gold)).unwrap_or_default(), "{rel} differs from the golden copy");
    }
    let connections = match listener.accept() {
        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => 0,
        _ => 1,
    };
    check!(connections == 0, "a connection reached the provider endpoint");
    check!(elapsed < Duration::from_secs(10), "two executions took {elapsed:?}");
    Ok(format!("{} files byte-identical across two executions, 0 connections, {elapsed:.2?} for both", fa.len()))
}

fn llm_rows_replay() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("x");
    mini_experiment(&out, "http://127.0.0.1:9/unused")?;
    for (produced, gold) in [("compare/topics.tsv", "compare.tsv"), ("compare/topics.txt", "compare.txt")] {
        let got = std::fs::read(out.join(produced)).map_err(|e| e.to_string())?;
        check!(got == std::fs::read(golden(gold)).unwrap_or_default(), "{produced} differs from the archived table");
    }
    Ok("IEMT+RM3 and NRIEMT+RM3 rows regenerate byte-identically from recorded responses (hosted-model numbers are not reproducible)".into())
}

fn significance() -> Outcome {
    let text = std::fs::read_to_string(core_fixture("oracles/ttest.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let cases = v["cases"].as_array().ok_or("no cases")?;
    check!(cases.len() == 10, "{} cases", cases.len());
    let vec_of = |x: &serde_json::Value| -> BTreeMap<u32, f64> {
        x.as_array().unwrap().iter().enumerate().map(|(i, y)| (i as u32, y.as_f64().unwrap())).collect()
    };
    let (mut dt, mut dp) = (0f64, 0f64);
    for c in cases {
        let (a, b) = (vec_of(&c["a"]), vec_of(&c["b"]));
        check!(a.len() == 50, "case with n = {}", a.len());
        let r = paired_ttest(&a, &b, 1).map_err(|e| e.to_string())?;
        dt = dt.max((r.t - c["t"].as_f64().unwrap()).abs());
        dp = dp.max((r.p_two_sided - c["p"].as_f64().unwrap()).abs());
        let same = paired_ttest(&a, &a, 3).map_err(|e| e.to_string())?;
        check!(same.p_two_sided == 1.0 && same.p_bonferroni == 1.0, "identical runs give p = {}", same.p_two_sided);
    }
    check!(dt < 1e-9 && dp < 1e-8, "max |dt| = {dt:e}, max |dp| = {dp:e}");
    Ok(format!("10 pairs (n = 50): max |dt| = {dt:.1e}, max |dp| = {dp:.1e}; identical runs p = 1"))
}

fn trec_baseline() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("CTLAB_TREC2021_DIR")?);
    Some(run_trec(&dir))
}

fn run_trec(dir: &Path) -> Outcome {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let corpus = [dir.join("corpus"), dir.join("corpus.zip")].into_iter().find(|p| p.exists()).ok_or("no corpus")?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let o = s(tmp.path());
    let start = Instant::now();
    ctlab(&["index", "--corpus", &s(&corpus), "--out", &o], "")?;
    let index_time = start.elapsed();
    let topics = s(&dir.join("topics.xml"));
    ctlab(&["search", "--out", &o, "--topics", &topics], "")?;
    ctlab(&["search", "--out", &o, "--topics", &topics, "--rm3"], "")?;
    let qrels = load_qrels(&dir.join("qrels.txt")).map_err(|e| e.to_string())?;
    let mean = |run: &str, m: &str| -> Result<f64, String> {
        let r = load_run(&tmp.path().join("runs").join(run)).map_err(|e| e.to_string())?;
        evaluate_run(&r, &qrels, false).mean(m.parse().unwrap()).ok_or(format!("{m} missing"))
    };
    let p10 = mean("topics.run", "P@10")?;
    let rprec = mean("topics.run", "Rprec")?;
    let bpref = mean("topics+rm3.run", "Bpref")?;
    let detail =
        format!("P@10 {p10:.3} (.264), Rprec {rprec:.3} (.162), RM3 Bpref {bpref:.3} (.241), index {index_time:.0?}");
    check!((p10 - 0.264).abs() <= 0.03, "{detail}");
    check!((rprec - 0.162).abs() <= 0.02, "{detail}");
    check!((bpref - 0.241).abs() <= 0.03, "{detail}");
    check!(index_time < Duration::from_secs(600), "{detail}");
    Ok(detail)
}
