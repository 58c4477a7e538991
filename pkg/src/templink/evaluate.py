"""Candidate ranking, recall@N, temporal gap matrices, boost arithmetic,
and the degree-bucket improvement analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape

RECALL_NS = (1, 2, 4, 8, 16, 32, 64)


@dataclass
class RecallReport:
    train_year: int
    test_year: int
    mention_count: int
    recall: dict = field(default_factory=dict)  # N -> value in [0, 1]

    def __post_init__(self):
        for n in sorted(self.recall):
            v = self.recall[n]
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"recall@{n}={v} outside [0,1]")


@dataclass
class GapMatrix:
    years: list
    cells: dict = field(default_factory=dict)  # (train_year, test_year) -> report

    def cell(self, t1, t2) -> RecallReport:
        return self.cells[(t1, t2)]

    def complete(self) -> bool:
        return all((t1, t2) in self.cells
                   for t1 in self.years for t2 in self.years)


def rank_candidates(y_m: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Exact descending dot-product ranking; ties broken by lower row index."""
    if table.shape[0] == 0:
        raise ValueError("empty entity table")
    scores = table.astype(np.float64) @ np.asarray(y_m, dtype=np.float64).ravel()
    return np.argsort(-scores, kind="stable")


def gold_rank(y_m, table, gold_row: int) -> int:
    order = rank_candidates(y_m, table)
    return int(np.where(order == gold_row)[0][0]) + 1


def recall_at(ranks, n: int) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        return 0.0
    return float((ranks <= n).mean())


def recall_report(ranks, train_year, test_year) -> RecallReport:
    return RecallReport(train_year=train_year, test_year=test_year,
                        mention_count=len(ranks),
                        recall={n: recall_at(ranks, n) for n in RECALL_NS})


def text_entity_table(model, entities) -> np.ndarray:
    """Inference entity table: text encoder only, no graph fusion."""
    return model.entity_table(entities)


def fused_entity_table(model, snapshot) -> np.ndarray:
    """Training-time scoring table: text embedding plus projected GCN embeddings.

    Requires the snapshot's graphs; used for same-snapshot diagnostics,
    never on the default inference path.
    """
    snapshot.prepare()
    y_e = model.encode_entities(snapshot.entities)
    x = tape.const(snapshot.x_dense)
    z_f, z_r, z_sf, z_sr = model.gcn.forward(snapshot.s_f, snapshot.s_r, x)
    rows = list(range(len(snapshot.entities)))
    fused = model.fusion.fuse(y_e, z_f, z_r, z_sf, z_sr, rows)
    return fused.data.copy()


def evaluate_mentions(model, mentions, entities, index, table=None):
    """Gold ranks for a mention list against an entity table (text table
    by default). Mentions with unresolvable gold qids are skipped."""
    if table is None:
        table = text_entity_table(model, entities)
    ranks = []
    for m in mentions:
        if m.gold_qid not in index:
            continue
        y_m = model.mention_encoder.encode_ids(model.tokenizer.render_mention(m))
        ranks.append(gold_rank(y_m, table, index.row(m.gold_qid)))
    return ranks


def temporal_matrix(models_by_year: dict, test_sets_by_year: dict) -> GapMatrix:
    """Evaluate every (train year, test year) pair.

    ``test_sets_by_year[year]`` is (mentions, entities, index). The entity
    table for each pair comes from the test year's snapshot.
    """
    years = sorted(set(models_by_year) & set(test_sets_by_year))
    matrix = GapMatrix(years=years)
    for t2 in years:
        mentions, entities, index = test_sets_by_year[t2]
        for t1 in years:
            model = models_by_year[t1]
            table = text_entity_table(model, entities)
            ranks = evaluate_mentions(model, mentions, entities, index, table)
            matrix.cells[(t1, t2)] = recall_report(ranks, t1, t2)
    return matrix


def aggregate_gap(matrix: GapMatrix, mode: str) -> dict:
    """Per-gap unweighted mean recall over the selected direction(s).

    forward_only averages cells with test year > train year (gap 0 is the
    diagonal in both modes); forward_and_backward averages both directions.
    """
    if mode not in ("forward_only", "forward_and_backward"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    out = {}
    gaps = sorted({abs(t2 - t1) for t1 in matrix.years for t2 in matrix.years})
    for gap in gaps:
        cells = []
        for t1 in matrix.years:
            for t2 in matrix.years:
                if abs(t2 - t1) != gap:
                    continue
                if mode == "forward_only" and t2 < t1:
                    continue
                cells.append(matrix.cell(t1, t2))
        if not cells:
            continue
        out[gap] = {n: float(np.mean([c.recall[n] for c in cells]))
                    for n in RECALL_NS}
    return out


def boost(ours: float, baseline: float):
    """Relative improvement in percent; None where the baseline is not positive."""
    if baseline <= 0:
        return None
    return 100.0 * (ours - baseline) / baseline


def average_boost(boosts) -> float:
    values = [b for b in boosts if b is not None]
    if not values:
        raise ValueError("no defined boost values to average")
    return float(np.mean(values))


def degree_bucket_report(deltas, degrees, cap: int = 10):
    """Mean per-mention recall delta bucketed by gold-entity degree.

    Degrees >= cap collapse into a single overflow bucket that is excluded
    from the least-squares slope fit; empty buckets are omitted.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    degrees = np.asarray(degrees)
    buckets = {}
    for d in range(cap):
        mask = degrees == d
        if mask.any():
            buckets[d] = float(deltas[mask].mean())
    overflow = degrees >= cap
    if overflow.any():
        buckets[f"{cap}+"] = float(deltas[overflow].mean())
    fit_x = [d for d in buckets if isinstance(d, int)]
    slope = None
    if len(fit_x) >= 2:
        xs = np.array(fit_x, dtype=np.float64)
        ys = np.array([buckets[d] for d in fit_x])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return {"buckets": buckets, "slope": slope}
