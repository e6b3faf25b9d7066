"""Independent evaluator for the metric fixture: exact fractions for binary
measures, direct sums for nDCG. Prints expected per-topic and mean values."""
import math, sys
from fractions import Fraction as F

def load(path, cols):
    out = {}
    for line in open(path):
        f = line.split()
        if f:
            out.setdefault(int(f[0]), []).append(f)
    return out

qrels = {t: {f[2]: int(f[3]) for f in rows} for t, rows in load(sys.argv[2], 4).items()}
run = {t: [f[2] for f in sorted(rows, key=lambda f: int(f[3]))] for t, rows in load(sys.argv[1], 6).items()}

def p_at(r, q, k): return F(sum(1 for d in r[:k] if q.get(d) == 2), k)
def rprec(r, q):
    R = sum(1 for g in q.values() if g == 2)
    return F(0) if R == 0 else F(sum(1 for d in r[:R] if q.get(d) == 2), R)
def mrr(r, q):
    for i, d in enumerate(r):
        if q.get(d) == 2: return F(1, i + 1)
    return F(0)
def bpref(r, q):
    R = sum(1 for g in q.values() if g == 2); N = len(q) - R
    if R == 0: return F(0)
    s = F(0); above = 0
    for d in r:
        if d not in q: continue
        if q[d] == 2: s += 1 if N == 0 else 1 - F(min(above, R), min(R, N))
        else: above += 1
    return s / R
def ndcg(r, q, k):
    dcg = sum(q.get(d, 0) / math.log2(i + 2) for i, d in enumerate(r[:k]))
    ideal = sorted(q.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    return 0.0 if idcg == 0 else dcg / idcg

names = ["P@5", "P@10", "P@25", "Rprec", "Bpref", "MRR", "nDCG@5", "nDCG@10"]
fns = [lambda r, q: p_at(r, q, 5), lambda r, q: p_at(r, q, 10), lambda r, q: p_at(r, q, 25), rprec, bpref, mrr,
       lambda r, q: ndcg(r, q, 5), lambda r, q: ndcg(r, q, 10)]
rows = {}
for t in sorted(qrels):
    r = run.get(t, []); q = qrels[t]; c = [d for d in r if d in q]
    rows[t] = [float(fn(r, q)) for fn in fns] + [float(fn(c, q)) for fn in fns]
means = [sum(rows[t][i] for t in rows) / len(rows) for i in range(16)]
print("measure\t" + "\t".join(map(str, rows)) + "\tall")
for i, n in enumerate(names + [x + "'" for x in names]):
    print(n + "\t" + "\t".join(repr(rows[t][i]) for t in rows) + "\t" + repr(means[i]))
