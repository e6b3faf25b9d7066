"""Cross-checks the frozen metric oracle against pytrec_eval.

Binary measures use relevance_level=2; condensed measures drop unjudged
documents from the run before evaluation.

    python3 tools/oracles/metrics_pytrec_check.py
"""
import collections
import pathlib
import re
import sys

import pytrec_eval

FIX = pathlib.Path(__file__).resolve().parents[2] / "crates/core/tests/fixtures/metrics"
MEASURES = {
    "P_5": "P@5", "P_10": "P@10", "P_25": "P@25", "Rprec": "Rprec",
    "bpref": "Bpref", "recip_rank": "MRR", "ndcg_cut_5": "nDCG@5", "ndcg_cut_10": "nDCG@10",
}


def main():
    qrels = collections.defaultdict(dict)
    for line in open(FIX / "qrels.txt"):
        t, _, d, g = line.split()
        qrels[t][d] = int(g)
    run = collections.defaultdict(dict)
    for line in open(FIX / "run.txt"):
        t, _, d, _, s, _ = line.split()
        run[t][d] = float(s)
    src = (FIX / "expected.rs").read_text()
    expected = {m: [float(x) for x in v.split(",")] for m, v in re.findall(r'\("([^"]+)", \[([^\]]+)\]\)', src)}
    ev = pytrec_eval.RelevanceEvaluator(qrels, set(MEASURES), relevance_level=2)
    condensed = {t: {d: s for d, s in docs.items() if d in qrels[t]} for t, docs in run.items()}
    worst = 0.0
    for suffix, r in (("", run), ("'", condensed)):
        res = ev.evaluate(r)
        for key, name in MEASURES.items():
            for i, t in enumerate(sorted(qrels)):
                got = res.get(t, {}).get(key, 0.0)
                diff = abs(got - expected[name + suffix][i])
                worst = max(worst, diff)
                if diff > 1e-6:
                    print(f"mismatch {name}{suffix} topic {t}: {got} vs {expected[name + suffix][i]}")
    print(f"max abs difference: {worst:g}")
    sys.exit(1 if worst > 1e-6 else 0)


if __name__ == "__main__":
    main()
