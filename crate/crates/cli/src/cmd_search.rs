use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use ctlab_core::corpus::{concat_assessor_queries, format_run, load_keyword_queries, load_topics, RunRanking};
use ctlab_core::index::{Bm25, InvertedIndex, WeightedQuery};
use ctlab_core::parsing::{build_query_terms, load_sidecar, scrub_clinical_trial, sidecar_by_variant};
use ctlab_core::rm3::{Rm3, Rm3Config};
use ctlab_core::text::{Term, TextPipeline};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cmd_index::INDEX_FILE;
use crate::config::FileConfig;
use crate::error::{Failure, Result};
use crate::{pipeline, require_file, write_output};

#[derive(Args)]
pub struct SearchArgs {
    /// Index file; defaults to `<out>/index.ctix`.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Output directory; the run goes to `<out>/runs/<name>.run`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parsed-query sidecar written by `genqueries`.
    #[arg(long, conflicts_with_all = ["topics", "keywords"])]
    queries: Option<PathBuf>,
    /// Sidecar variant; optional when the sidecar holds one.
    #[arg(long)]
    variant: Option<String>,
    /// Raw topic notes as free-text queries.
    #[arg(long, conflicts_with = "keywords")]
    topics: Option<PathBuf>,
    /// `topic<TAB>keywords` files; several files are concatenated per topic.
    #[arg(long)]
    keywords: Vec<PathBuf>,
    /// Run name; defaults to the variant, `topics` or `keywords`.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Expand each query with RM3 before the final retrieval.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    rm3: Option<bool>,
    #[arg(long)]
    fb_docs: Option<usize>,
    #[arg(long)]
    fb_terms: Option<usize>,
    /// Weight of the original query in the RM3 interpolation.
    #[arg(long)]
    lambda: Option<f64>,
    /// Documents retrieved per topic.
    #[arg(long)]
    k: Option<usize>,
    /// Drop the stems of "clinical" and "trial" from keyword queries.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    scrub_clinical_trial: Option<bool>,
}

enum Source {
    Sidecar(PathBuf, Option<String>),
    Topics(PathBuf),
    Keywords(Vec<PathBuf>),
}

pub fn run(a: SearchArgs, cfg: &FileConfig) -> Result<()> {
    let out = cfg.require_path(a.out, "out")?;
    let index_path = cfg.pick_path(a.index, "index").unwrap_or_else(|| out.join(INDEX_FILE));
    require_file(&index_path, "index")?;
    let variant = cfg.pick::<String>(a.variant, "variant")?;
    // Flags name one source; otherwise the config is consulted in this order.
    let source = if let Some(q) = a.queries {
        Source::Sidecar(q, variant)
    } else if let Some(t) = a.topics {
        Source::Topics(t)
    } else if !a.keywords.is_empty() {
        Source::Keywords(a.keywords)
    } else if let Some(q) = cfg.pick_path(None, "queries") {
        Source::Sidecar(q, variant)
    } else if !cfg.pick_paths(Vec::new(), "keywords").is_empty() {
        Source::Keywords(cfg.pick_paths(Vec::new(), "keywords"))
    } else if let Some(t) = cfg.pick_path(None, "topics") {
        Source::Topics(t)
    } else {
        return Err(Failure::config("one of --queries, --topics or --keywords is required"));
    };
    let rm3 = cfg.pick_bool(a.rm3, "rm3", false)?;
    let defaults = Rm3Config::default();
    let rm3_config = Rm3Config {
        fb_docs: cfg.pick(a.fb_docs, "fb-docs")?.unwrap_or(defaults.fb_docs),
        fb_terms: cfg.pick(a.fb_terms, "fb-terms")?.unwrap_or(defaults.fb_terms),
        lambda_orig: cfg.pick(a.lambda, "lambda")?.unwrap_or(defaults.lambda_orig),
    };
    rm3_config.validate().map_err(Failure::config)?;
    let k = cfg.pick(a.k, "k")?.unwrap_or(1000);
    if k == 0 {
        return Err(Failure::config("--k must be positive"));
    }
    let scrub = cfg.pick_bool(a.scrub_clinical_trial, "scrub-clinical-trial", false)?;
    let name_flag = cfg.pick::<String>(a.name, "name")?;
    let pipeline = pipeline(cfg, a.stopwords)?;

    let (source_name, queries) = build_queries(&source, &pipeline, scrub)?;
    let index = InvertedIndex::load(&index_path)?;
    index.check_pipeline(&pipeline)?;

    let mut name = name_flag.unwrap_or(source_name);
    if rm3 {
        name.push_str("+rm3");
    }
    if name.is_empty() || name.contains(['/', '\\', ' ', '\t']) {
        return Err(Failure::config(format!("run name '{name}' is not usable as a file name")));
    }
    let run_tag = format!("{name}.{}", config_hash(&queries, rm3.then_some(&rm3_config), k, scrub, &index));

    let bm25 = Bm25::default();
    let expander = rm3.then(|| Rm3::new(rm3_config, bm25, pipeline.stopwords()));
    let rankings: Vec<RunRanking> = queries
        .par_iter()
        .map(|(&topic, q)| {
            let q = match &expander {
                Some(r) => r.expand(&index, q).query,
                None => q.clone(),
            };
            bm25.rank(&index, &q, k, topic, &run_tag)
        })
        .collect();
    let empty = rankings.iter().filter(|r| r.docs.is_empty()).count();
    if empty > 0 {
        log::warn!("{empty} topic(s) retrieved no documents");
    }
    let path = out.join("runs").join(format!("{name}.run"));
    write_output(&path, format_run(&rankings).as_bytes())?;
    println!("{} topics, run tag {run_tag} -> {}", rankings.len(), path.display());
    Ok(())
}

fn build_queries(
    source: &Source,
    pipeline: &TextPipeline,
    scrub: bool,
) -> Result<(String, BTreeMap<u32, WeightedQuery>)> {
    let keyword_query = |kws: &[String]| {
        let terms = build_query_terms(pipeline, kws);
        let terms: Vec<Term> = if scrub { scrub_clinical_trial(&terms) } else { terms };
        WeightedQuery::from_unit(&terms)
    };
    match source {
        Source::Sidecar(path, variant) => {
            require_file(path, "queries")?;
            let by_variant = sidecar_by_variant(&load_sidecar(path)?);
            let chosen = match variant {
                Some(v) => v.clone(),
                None if by_variant.len() == 1 => by_variant.keys().next().cloned().expect("one variant"),
                None => {
                    let names: Vec<&str> = by_variant.keys().map(String::as_str).collect();
                    return Err(Failure::config(format!(
                        "{} holds several variants; pick one with --variant ({})",
                        path.display(),
                        names.join(", ")
                    )));
                }
            };
            let topics = by_variant
                .get(&chosen)
                .ok_or_else(|| Failure::config(format!("variant '{chosen}' not found in {}", path.display())))?;
            Ok((chosen, topics.iter().map(|(&t, kws)| (t, keyword_query(kws))).collect()))
        }
        Source::Topics(path) => {
            require_file(path, "topics")?;
            let topics = load_topics(path)?;
            Ok((
                "topics".into(),
                topics.iter().map(|t| (t.id, WeightedQuery::from_counts(&pipeline.process(&t.text)))).collect(),
            ))
        }
        Source::Keywords(paths) => {
            let mut files = Vec::new();
            for p in paths {
                require_file(p, "keywords")?;
                files.push(load_keyword_queries(p)?);
            }
            let topics: std::collections::BTreeSet<u32> = files.iter().flat_map(|f| f.keys().copied()).collect();
            let queries = topics
                .into_iter()
                .map(|t| {
                    let per_file: Vec<Vec<String>> =
                        files.iter().map(|f| f.get(&t).cloned().unwrap_or_default()).collect();
                    (t, keyword_query(&concat_assessor_queries(&per_file)))
                })
                .collect();
            Ok(("keywords".into(), queries))
        }
    }
}

/// First 8 hex digits of a hash over everything that determines the run's content.
fn config_hash(
    queries: &BTreeMap<u32, WeightedQuery>,
    rm3: Option<&Rm3Config>,
    k: usize,
    scrub: bool,
    index: &InvertedIndex,
) -> String {
    let bm25 = Bm25::default();
    let mut canon = format!("bm25 k1={} b={}\nk={k}\nscrub={scrub}\n", bm25.k1, bm25.b);
    match rm3 {
        Some(c) => writeln!(canon, "rm3 fb_docs={} fb_terms={} lambda={}", c.fb_docs, c.fb_terms, c.lambda_orig),
        None => writeln!(canon, "rm3 off"),
    }
    .expect("string write");
    writeln!(canon, "index docs={} fingerprint={}", index.num_docs(), hex::encode(index.pipeline_fingerprint()))
        .expect("string write");
    for (t, q) in queries {
        write!(canon, "{t}").expect("string write");
        for (term, w) in q.iter() {
            write!(canon, " {}:{w}", term.as_str()).expect("string write");
        }
        canon.push('\n');
    }
    hex::encode(&Sha256::digest(canon.as_bytes())[..4])
}
