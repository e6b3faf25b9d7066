use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use ctlab_core::corpus::{load_qrels, load_run, Qrels};
use ctlab_core::eval::{compare_runs, evaluate_measures, Measure, MetricReport};

use crate::config::FileConfig;
use crate::error::{Failure, Result};
use crate::{require_file, stem_of, write_output};

#[derive(Args)]
pub struct EvalArgs {
    /// TREC run file.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Also report condensed measures (unjudged documents removed).
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    condensed: Option<bool>,
    /// Measures to report, comma-separated (e.g. `P@10,nDCG@10,Bpref'`).
    #[arg(long)]
    measures: Vec<String>,
    /// Writes `<out>/eval/<run>.tsv` when given.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Baseline run file.
    #[arg(long)]
    baseline: PathBuf,
    /// Candidate run files; Bonferroni correction uses their count.
    #[arg(required = true)]
    candidates: Vec<PathBuf>,
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    condensed: Option<bool>,
    #[arg(long)]
    measures: Vec<String>,
    /// Writes `<out>/compare/<baseline>.tsv` and `.txt` when given.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn measures(cfg: &FileConfig, flag: Vec<String>, condensed: Option<bool>) -> Result<Vec<Measure>> {
    let condensed = cfg.pick_bool(condensed, "condensed", false)?;
    let names = cfg.pick_list(flag, "measures");
    if names.is_empty() {
        return Ok(Measure::set(condensed));
    }
    let mut out: Vec<Measure> = Vec::new();
    for n in names {
        let m: Measure = n.parse().map_err(|e| Failure::config(format!("{e}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn qrels(cfg: &FileConfig, flag: Option<PathBuf>) -> Result<Qrels> {
    let path = cfg.require_path(flag, "qrels")?;
    require_file(&path, "qrels")?;
    Ok(load_qrels(&path)?)
}

fn evaluate(path: &Path, qrels: &Qrels, measures: &[Measure]) -> Result<MetricReport> {
    require_file(path, "run")?;
    let run = load_run(path)?;
    let judged: BTreeSet<u32> = qrels.topics().collect();
    let unjudged = run.iter().filter(|r| !judged.contains(&r.topic_id)).count();
    if unjudged > 0 {
        log::warn!("{}: {unjudged} topic(s) have no judgments and are ignored", path.display());
    }
    Ok(evaluate_measures(&run, qrels, measures))
}

pub fn run_eval(a: EvalArgs, cfg: &FileConfig) -> Result<()> {
    let measures = measures(cfg, a.measures, a.condensed)?;
    let qrels = qrels(cfg, a.qrels)?;
    let report = evaluate(&a.run, &qrels, &measures)?;
    print!("{}", report.to_table());
    if let Some(out) = cfg.pick_path(a.out, "out") {
        let path = out.join("eval").join(format!("{}.tsv", stem_of(&a.run)));
        write_output(&path, report.to_tsv().as_bytes())?;
        println!("-> {}", path.display());
    }
    Ok(())
}

pub fn run_compare(a: CompareArgs, cfg: &FileConfig) -> Result<()> {
    let measures = measures(cfg, a.measures, a.condensed)?;
    let qrels = qrels(cfg, a.qrels)?;
    let baseline_name = stem_of(&a.baseline);
    let mut names = BTreeSet::from([baseline_name.clone()]);
    for c in &a.candidates {
        if !names.insert(stem_of(c)) {
            return Err(Failure::config(format!("two runs share the name '{}'", stem_of(c))));
        }
    }
    let baseline = evaluate(&a.baseline, &qrels, &measures)?;
    let candidates =
        a.candidates.iter().map(|c| Ok((stem_of(c), evaluate(c, &qrels, &measures)?))).collect::<Result<Vec<_>>>()?;
    let comparison = compare_runs(&baseline_name, &baseline, &candidates, &measures)?;
    let table = comparison.to_table();
    print!("{table}");
    if let Some(out) = cfg.pick_path(a.out, "out") {
        let dir = out.join("compare");
        write_output(&dir.join(format!("{baseline_name}.tsv")), comparison.to_tsv().as_bytes())?;
        write_output(&dir.join(format!("{baseline_name}.txt")), table.as_bytes())?;
        println!("-> {}", dir.join(format!("{baseline_name}.tsv")).display());
    }
    Ok(())
}
