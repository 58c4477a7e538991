"""Corpus ingest: entity descriptions, mention contexts, relation triples.

Canonical on-disk format is UTF-8 tab-separated values with backslash
escapes (``\\t``, ``\\n``, ``\\\\``) inside text fields, one record per
line. Row order is file order and is what every downstream matrix keys
on, so the qid-to-row assignment is persisted as a manifest.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

CATEGORIES = ("continual", "new")


class DataError(Exception):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class EntityRecord:
    qid: str
    title: str
    description: str
    year: int


@dataclass(frozen=True)
class MentionRecord:
    context_left: str
    mention: str
    context_right: str
    gold_qid: str
    category: str
    year: int


@dataclass(frozen=True)
class RelationTriple:
    head_qid: str
    relation_id: str
    tail_qid: str


def escape_field(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_field(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def _read_rows(path, n_fields, what):
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise DataError(
                    f"{path}:{lineno}: malformed {what} line, "
                    f"expected {n_fields} fields, got {len(parts)}")
            rows.append([unescape_field(p) for p in parts])
    return rows


def load_entities(path, year: int) -> list[EntityRecord]:
    """Parse ``qid \\t title \\t description`` lines; duplicate qids rejected."""
    records = []
    seen = set()
    for row in _read_rows(path, 3, "entity"):
        qid, title, description = row
        if not qid:
            raise DataError(f"{path}: empty qid")
        if qid in seen:
            raise DataError(f"{path}: duplicate qid {qid}")
        seen.add(qid)
        records.append(EntityRecord(qid=qid, title=title,
                                    description=description, year=year))
    return records


def load_mentions(path, year: int) -> list[MentionRecord]:
    """Parse ``gold_qid \\t category \\t context_left \\t mention \\t context_right``."""
    records = []
    for row in _read_rows(path, 5, "mention"):
        gold_qid, category, left, mention, right = row
        if category not in CATEGORIES:
            raise DataError(f"{path}: unknown category {category!r}")
        if not mention:
            raise DataError(f"{path}: empty mention span")
        records.append(MentionRecord(context_left=left, mention=mention,
                                     context_right=right, gold_qid=gold_qid,
                                     category=category, year=year))
    return records


def load_triples(path) -> list[RelationTriple]:
    """Parse ``head \\t relation \\t tail`` lines; endpoint filtering happens later."""
    triples = []
    for row in _read_rows(path, 3, "triple"):
        head, rel, tail = row
        if not (head and rel and tail):
            raise DataError(f"{path}: empty field in triple {row}")
        triples.append(RelationTriple(head_qid=head, relation_id=rel, tail_qid=tail))
    return triples


def save_entities(records, path):
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write("\t".join(escape_field(f)
                               for f in (r.qid, r.title, r.description)) + "\n")


def save_mentions(records, path):
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fields = (r.gold_qid, r.category, r.context_left, r.mention,
                      r.context_right)
            fh.write("\t".join(escape_field(f) for f in fields) + "\n")


def save_triples(triples, path):
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(f"{escape_field(t.head_qid)}\t{escape_field(t.relation_id)}"
                     f"\t{escape_field(t.tail_qid)}\n")


def split_by_category(mentions):
    """Order-preserving partition into (continual, new)."""
    continual = [m for m in mentions if m.category == "continual"]
    new = [m for m in mentions if m.category == "new"]
    return continual, new


class EntityIndex:
    """Bijective qid <-> row mapping; row i is the i-th entity in input order."""

    def __init__(self, qids):
        self.qid_to_row = {}
        for i, qid in enumerate(qids):
            if qid in self.qid_to_row:
                raise DataError(f"duplicate qid {qid} in entity index")
            self.qid_to_row[qid] = i
        self.row_to_qid = list(qids)

    def __len__(self):
        return len(self.row_to_qid)

    def __contains__(self, qid):
        return qid in self.qid_to_row

    def row(self, qid):
        return self.qid_to_row[qid]

    def qid(self, row):
        return self.row_to_qid[row]

    def save(self, path):
        with Path(path).open("w", encoding="utf-8") as fh:
            for qid in self.row_to_qid:
                fh.write(qid + "\n")

    @classmethod
    def load(cls, path):
        with Path(path).open("r", encoding="utf-8") as fh:
            qids = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(qids)


def build_entity_index(entities) -> EntityIndex:
    return EntityIndex([e.qid for e in entities])


def filter_mentions(mentions, index: EntityIndex):
    """Drop mentions whose gold qid is not in the snapshot index."""
    kept = [m for m in mentions if m.gold_qid in index]
    dropped = len(mentions) - len(kept)
    if dropped:
        log.info("dropped %d mentions with unresolvable gold qids", dropped)
    return kept, dropped


def ingest_jsonl_entities(src_path, dst_path, year: int) -> int:
    """Convert a JSON-lines entity dump to the canonical entities.tsv.

    Accepted keys per object: qid (or label_qid / entity_qid), title
    (or label_title / label), and description (or text).
    """
    records = []
    seen = set()
    with Path(src_path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            qid = obj.get("qid") or obj.get("label_qid") or obj.get("entity_qid")
            if not qid:
                raise DataError(f"{src_path}:{lineno}: no qid key")
            if qid in seen:
                log.info("skipping repeated qid %s at line %d", qid, lineno)
                continue
            seen.add(qid)
            title = obj.get("title") or obj.get("label_title") or obj.get("label") or ""
            desc = obj.get("description") or obj.get("text") or ""
            records.append(EntityRecord(qid=qid, title=title,
                                        description=desc, year=year))
    save_entities(records, dst_path)
    return len(records)


def ingest_jsonl_mentions(src_path, dst_path, year: int) -> int:
    """Convert a JSON-lines mention dump to the canonical mentions.tsv."""
    records = []
    with Path(src_path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            gold = obj.get("gold_qid") or obj.get("label_qid") or obj.get("qid")
            if not gold:
                raise DataError(f"{src_path}:{lineno}: no gold qid key")
            category = obj.get("category", "continual")
            if category not in CATEGORIES:
                raise DataError(f"{src_path}:{lineno}: unknown category {category!r}")
            records.append(MentionRecord(
                context_left=obj.get("context_left", ""),
                mention=obj.get("mention", ""),
                context_right=obj.get("context_right", ""),
                gold_qid=gold, category=category, year=year))
    save_mentions(records, dst_path)
    return len(records)
