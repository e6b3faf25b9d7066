use serde::{Deserialize, Serialize};

use super::{paired_ttest, EvalError, Measure, MetricReport, TTest};

pub const DAGGER: char = '\u{2020}';

/// Left-aligned first column, right-aligned others, two spaces apart.
pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub means: Vec<f64>,
    pub tests: Vec<TTest>,
}

/// A baseline against N candidates, tested per measure with m = N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub measures: Vec<Measure>,
    pub m: usize,
    pub baseline_name: String,
    pub baseline_means: Vec<f64>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_runs(
    baseline_name: &str,
    baseline: &MetricReport,
    candidates: &[(String, MetricReport)],
    measures: &[Measure],
) -> Result<Comparison, EvalError> {
    let m = candidates.len();
    if m == 0 {
        return Err(EvalError::Invalid("no candidate runs to compare".into()));
    }
    let column = |r: &MetricReport, measure: Measure| {
        r.topic_scores(measure).ok_or_else(|| EvalError::Invalid(format!("measure {measure} missing from report")))
    };
    let baseline_scores = measures.iter().map(|&ms| column(baseline, ms)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(m);
    for (name, report) in candidates {
        let mut means = Vec::with_capacity(measures.len());
        let mut tests = Vec::with_capacity(measures.len());
        for (i, &ms) in measures.iter().enumerate() {
            let scores = column(report, ms)?;
            tests.push(paired_ttest(&baseline_scores[i], &scores, m)?);
            means.push(report.mean(ms).unwrap_or(0.0));
        }
        rows.push(ComparisonRow { name: name.clone(), means, tests });
    }
    Ok(Comparison {
        measures: measures.to_vec(),
        m,
        baseline_name: baseline_name.to_string(),
        baseline_means: measures.iter().map(|&ms| baseline.mean(ms).unwrap_or(0.0)).collect(),
        rows,
    })
}

impl Comparison {
    /// Means with a dagger column per measure, then the test details.
    pub fn to_table(&self) -> String {
        let mut wide: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["run".to_string()];
        for m in &self.measures {
            header.push(m.to_string());
            header.push(String::new());
        }
        wide.push(header);
        let mut base = vec![self.baseline_name.clone()];
        for x in &self.baseline_means {
            base.push(format!("{x:.4}"));
            base.push(" ".into());
        }
        wide.push(base);
        for r in &self.rows {
            let mut row = vec![r.name.clone()];
            for (x, t) in r.means.iter().zip(&r.tests) {
                row.push(format!("{x:.4}"));
                row.push(if t.significant_at_05 { DAGGER.to_string() } else { " ".into() });
            }
            wide.push(row);
        }
        let mut out = align_dagger(&wide);
        out.push_str(&format!(
            "{DAGGER} paired t-test against {}, Bonferroni-corrected p < 0.05 (m = {})\n\n",
            self.baseline_name, self.m
        ));
        let mut long = vec![["run", "measure", "mean", "diff", "t", "p", "p_bonf", "sig"].map(String::from).to_vec()];
        for r in &self.rows {
            for ((measure, x), t) in self.measures.iter().zip(&r.means).zip(&r.tests) {
                long.push(vec![
                    r.name.clone(),
                    measure.to_string(),
                    format!("{x:.4}"),
                    format!("{:+.4}", t.mean_diff),
                    format!("{:.4}", t.t),
                    format!("{:.4}", t.p_two_sided),
                    format!("{:.4}", t.p_bonferroni),
                    if t.significant_at_05 { DAGGER.to_string() } else { "-".into() },
                ]);
            }
        }
        out.push_str(&align(&long));
        out
    }

    /// Long form: one line per (run, measure); baseline rows carry no test.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("run\tmeasure\tmean\tt\tp\tp_bonferroni\tsignificant\tm\n");
        for (measure, x) in self.measures.iter().zip(&self.baseline_means) {
            out.push_str(&format!("{}\t{measure}\t{x:.6}\t-\t-\t-\t-\t{}\n", self.baseline_name, self.m));
        }
        for r in &self.rows {
            for ((measure, x), t) in self.measures.iter().zip(&r.means).zip(&r.tests) {
                out.push_str(&format!(
                    "{}\t{measure}\t{x:.6}\t{:.10}\t{:.10}\t{:.10}\t{}\t{}\n",
                    r.name,
                    t.t,
                    t.p_two_sided,
                    t.p_bonferroni,
                    u8::from(t.significant_at_05),
                    self.m
                ));
            }
        }
        out
    }
}

/// Like `align`, but dagger cells hug the value before them.
fn align_dagger(rows: &[Vec<String>]) -> String {
    let merged: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut out = vec![r[0].clone()];
            for pair in r[1..].chunks(2) {
                out.push(format!("{}{}", pair[0], pair.get(1).map_or("", String::as_str)));
            }
            out
        })
        .collect();
    align(&merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Metric;
    use std::collections::BTreeMap;

    fn report(vals: &[f64]) -> MetricReport {
        let per_topic: BTreeMap<u32, Vec<f64>> =
            vals.iter().enumerate().map(|(i, &v)| (i as u32 + 1, vec![v])).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        MetricReport { measures: vec![Measure::full(Metric::P10)], per_topic, means: vec![mean] }
    }

    #[test]
    fn identical_runs_have_unit_p() {
        let r = report(&[0.1, 0.4, 0.2]);
        let c = compare_runs("bm25", &r, &[("same".into(), r.clone())], &[Measure::full(Metric::P10)]).unwrap();
        assert_eq!(c.rows[0].tests[0].p_two_sided, 1.0);
        assert!(c.to_tsv().contains("same\tP@10\t0.233333\t0.0000000000\t1.0000000000\t1.0000000000\t0\t1\n"));
        assert!(!c.to_table().lines().nth(2).unwrap().contains(DAGGER));
    }

    #[test]
    fn bonferroni_uses_candidate_count() {
        let base = report(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        let cand = report(&[0.3, 0.3, 0.5, 0.5, 0.8]);
        let ms = [Measure::full(Metric::P10)];
        let one = compare_runs("b", &base, &[("c".into(), cand.clone())], &ms).unwrap();
        let two = compare_runs("b", &base, &[("c".into(), cand.clone()), ("d".into(), cand)], &ms).unwrap();
        let (p1, p2) = (one.rows[0].tests[0], two.rows[0].tests[0]);
        assert_eq!(p1.p_two_sided, p2.p_two_sided);
        assert!((p2.p_bonferroni - (2.0 * p1.p_two_sided).min(1.0)).abs() < 1e-15);
        assert_eq!(two.m, 2);
    }
}
