"""BM25 and RM3 reference values for the toy corpora used in the tests.
Plain dictionaries, no index; mirrors the textbook formulas."""
import math
from collections import Counter

K1, B = 1.2, 0.75

def bm25_scores(docs, query):
    toks = {d: t.split() for d, t in docs.items()}
    n = len(toks); avgdl = sum(len(t) for t in toks.values()) / n
    out = {}
    for d, t in toks.items():
        tf = Counter(t); s = 0.0; hit = False
        for q, w in sorted(query.items()):
            df = sum(1 for u in toks.values() if q in u)
            if tf[q] == 0 or df == 0 or w <= 0: continue
            hit = True
            idf = math.log((n - df + 0.5) / (df + 0.5))
            s += w * idf * tf[q] * (K1 + 1) / (tf[q] + K1 * (1 - B + B * len(t) / avgdl))
        if hit: out[d] = s
    return out

def rm3(docs, query, fb_docs, fb_terms, lam):
    sc = bm25_scores(docs, query)
    top = sorted(sc.items(), key=lambda x: (-x[1], x[0]))[:fb_docs]
    total = sum(s for _, s in top)
    p = Counter()
    for d, s in top:
        t = docs[d].split()
        for term, c in Counter(t).items():
            p[term] += (s / total) * c / len(t)
    best = sorted(p.items(), key=lambda x: (-x[1], x[0]))[:fb_terms]
    z = sum(v for _, v in best)
    qz = sum(query.values())
    out = Counter()
    for t, w in query.items(): out[t] += lam * w / qz
    for t, v in best: out[t] += (1 - lam) * v / z
    return dict(out)

bm = {"A": "fever cough fever", "B": "cough rash", "C": "glioma pain rash rash"}
print("bm25", {d: repr(s) for d, s in bm25_scores(bm, {"fever": 1.0, "rash": 1.0}).items()})
toy = {
    "D1": "fever cough fever headache",
    "D2": "fever rash rash",
    "D3": "cough pain",
    "D4": "glioma pain seizure",
    "D5": "rash itch itch itch",
}
print("rm3", {t: repr(w) for t, w in sorted(rm3(toy, {"fever": 1.0}, 2, 2, 0.5).items())})
