"""Extracts the example model outputs from LaTeX prompt tables into
plain-text parser fixtures. Usage: reply_examples.py SOURCE OUTDIR"""
import re, sys, pathlib

src = open(sys.argv[1]).read().split("\n")
out = pathlib.Path(sys.argv[2]); out.mkdir(parents=True, exist_ok=True)

def delatex(s):
    s = s.replace("\\newline", "\n").replace("``", '"').replace("''", '"')
    s = s.replace("\\_", "_").replace("\\{", "{").replace("\\}", "}")
    s = s.replace("{[}", "[").replace("{]}", "]")
    s = re.sub(r"\s*\\\\\s*\\hline\s*$", "", s)
    return "\n".join(l.rstrip() for l in s.strip().split("\n")) + "\n"

def line_starting(prefix, after=0):
    for i in range(after, len(src)):
        if src[i].lstrip().startswith(prefix):
            return i
    raise SystemExit(f"not found: {prefix}")

def grab(name, first, last=None):
    text = "\n".join(src[first:(last if last is not None else first) + 1])
    (out / name).write_text(delatex(text))

grab("qgmt.txt", line_starting("``anaplastic astrocytoma'', astrocytoma, pilocytic"))
i = line_starting("[query\\_keywords] ``clinical trial")
grab("qggt.txt", i, line_starting("[query\\_keywords\\_expanded] ``clinical", i))
grab("ieg.extracted.txt", line_starting("``45-year-old man''"))
grab("ieg.expanded.txt", line_starting("``progressive weakness''"))
grab("iemt.txt", line_starting("``anaplastic astrocytoma'', spine, ``lower extremity weakness'', ``urinary retention'', ``Foley catheter'', ``high-dose steroids'', hypertension, ``chronic pain'', ``T-L spine''"))
i = line_starting("``abbreviations'': ``s-p")
grab("iemdmt.txt", i - 2, line_starting("\\}\\}", i))
i = line_starting("[entity] Patient [entity]")
grab("nriemt.tag.txt", i, i + 1)
grab("nriemt.iemt.txt", line_starting("``anaplastic astrocytoma'', spine, `lower"))
grab("fewshot_qg.txt", line_starting("``anaplastic astrocytoma clinical trial''"))
