"""Deterministic datasets used across the test suite.

Two corpora:

* toy dataset: 12 entities / 8 triples per year, small enough to verify
  against hand-built golden files and fast enough for full experiment runs.
* pair dataset: 100 twin pairs with identical titles/descriptions but
  disjoint structure-graph neighborhoods; mention contexts carry the
  markers of an entity's structure neighbors, so text-only scoring ties
  by construction while graph-aware scoring can break the tie.
"""

from pathlib import Path

N_PAIRS = 100
A_OFFSET = 1   # ring offset among first twins
B_OFFSET = 3   # ring offset among second twins


def _write(path, lines):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


TOY_WORDS = ["alpha", "bravo", "china", "delta", "echo", "frost",
             "grape", "hotel", "igloo", "jolly", "kappa", "lemon"]


def toy_entities(year):
    """12 entities; descriptions reuse a small word pool so several tokens
    land inside a 2..5 corpus-frequency band."""
    rows = []
    for i in range(12):
        w1 = TOY_WORDS[i]
        w2 = TOY_WORDS[(i + 1) % 12]
        w3 = TOY_WORDS[(i + 5) % 12]
        extra = f"year{year}" if i % 2 == 0 else "stable"
        rows.append((f"Q{i + 1}", f"topic {w1}", f"{w1} {w2} {w3} {extra} thing"))
    return rows


TOY_TRIPLES = [
    ("Q1", "P1", "Q2"),
    ("Q2", "P1", "Q3"),
    ("Q3", "P2", "Q4"),
    ("Q4", "P2", "Q1"),
    ("Q5", "P3", "Q6"),
    ("Q7", "P3", "Q8"),
    ("Q9", "P4", "Q10"),
    ("Q99", "P5", "Q1"),   # endpoint missing from every snapshot; filtered out
]


def toy_mentions(year, test=False):
    rows = []
    start = 6 if test else 0
    for i in range(start, start + 6):
        qid = f"Q{(i % 12) + 1}"
        category = "continual" if i % 2 == 0 else "new"
        w = TOY_WORDS[i % 12]
        rows.append((qid, category, f"seen near {w}", f"topic {w}",
                     f"in {year} records"))
    return rows


def write_toy_dataset(root, years=(2019, 2020, 2021, 2022)):
    root = Path(root)
    for year in years:
        d = root / str(year)
        _write(d / "entities.tsv",
               ["\t".join(r) for r in toy_entities(year)])
        _write(d / "mentions_train.tsv",
               ["\t".join(r) for r in toy_mentions(year, test=False)])
        _write(d / "mentions_test.tsv",
               ["\t".join(r) for r in toy_mentions(year, test=True)])
        _write(d / "triples.tsv", ["\t".join(t) for t in TOY_TRIPLES])
    return root


def pair_entities():
    """200 entities in 100 twin pairs; twins share title and description."""
    rows = []
    for p in range(N_PAIRS):
        desc = f"shared kind{p} marker{p} object"
        rows.append((f"QA{p}", f"item{p}", desc))
        rows.append((f"QB{p}", f"item{p}", desc))
    return rows


def pair_triples():
    """Two disjoint rings: twins never share a structure neighbor."""
    triples = []
    for p in range(N_PAIRS):
        triples.append((f"QA{p}", "P1", f"QA{(p + A_OFFSET) % N_PAIRS}"))
        triples.append((f"QB{p}", "P1", f"QB{(p + B_OFFSET) % N_PAIRS}"))
    return triples


_MENTION_TEMPLATES = [
    ("linked with marker{lo}", "beside marker{hi}"),
    ("reported near marker{hi} station", "and also marker{lo}"),
    ("marker{lo} marker{hi} archive notes", "from the survey"),
]


def _pair_mention(kind, p, variant):
    if kind == "A":
        lo = (p - A_OFFSET) % N_PAIRS
        hi = (p + A_OFFSET) % N_PAIRS
        qid = f"QA{p}"
    else:
        lo = (p - B_OFFSET) % N_PAIRS
        hi = (p + B_OFFSET) % N_PAIRS
        qid = f"QB{p}"
    left, right = _MENTION_TEMPLATES[variant % len(_MENTION_TEMPLATES)]
    return (qid, "continual", left.format(lo=lo, hi=hi), f"item{p}",
            right.format(lo=lo, hi=hi))


def pair_mentions(count, start=0, variants=(0, 1)):
    """Cycle through the 200 entities; mention i refers to entity (start+i) mod 200."""
    rows = []
    for i in range(count):
        j = (start + i) % (2 * N_PAIRS)
        kind = "A" if j % 2 == 0 else "B"
        rows.append(_pair_mention(kind, j // 2, variants[i % len(variants)]))
    return rows


def write_pair_dataset(root, year=2019, n_train=500, n_test=200):
    root = Path(root)
    d = root / str(year)
    _write(d / "entities.tsv", ["\t".join(r) for r in pair_entities()])
    _write(d / "mentions_train.tsv",
           ["\t".join(r) for r in pair_mentions(n_train)])
    _write(d / "mentions_test.tsv",
           ["\t".join(r) for r in pair_mentions(n_test, start=137,
                                                variants=(2,))])
    _write(d / "triples.tsv", ["\t".join(t) for t in pair_triples()])
    return root
