"""End-to-end orchestration: snapshot assembly, per-year training runs,
temporal evaluation, and resumable experiment state.

On-disk layout per year under a data directory:

    <data>/<year>/entities.tsv
    <data>/<year>/mentions_train.tsv
    <data>/<year>/mentions_test.tsv
    <data>/<year>/triples.tsv

Graph artifacts and checkpoints land under the run's output directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

from . import records
from .evaluate import GapMatrix, temporal_matrix
from .graphs import (VocabFilter, build_feature_matrix, build_knn_graph,
                     build_structure_graph, embed_descriptions, load_adjacency,
                     load_feature_matrix, save_adjacency, save_feature_matrix)
from .model import Model, ModelConfig
from .textenc import Tokenizer
from .trainer import Snapshot, TrainConfig, load_model, save_model, train

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    data_dir: str = "data"
    out_dir: str = "out"
    years: list = field(default_factory=list)
    k: int = 10
    min_count: int = 46
    max_count: int = 200
    embed_dim: int = 64
    embed_seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mode: str = "forward_and_backward"
    categories: list = field(default_factory=lambda: ["continual", "new"])
    baseline: str = ""

    def resolved(self) -> dict:
        d = asdict(self)
        return d

    def stamp(self) -> str:
        return hashlib.sha256(
            json.dumps(self.resolved(), sort_keys=True).encode()).hexdigest()[:16]


def year_dir(cfg: RunConfig, year: int) -> Path:
    return Path(cfg.data_dir) / str(year)


def load_year_corpus(cfg: RunConfig, year: int):
    d = year_dir(cfg, year)
    entities = records.load_entities(d / "entities.tsv", year)
    index = records.build_entity_index(entities)
    train_m, _ = records.filter_mentions(
        records.load_mentions(d / "mentions_train.tsv", year), index)
    test_m, _ = records.filter_mentions(
        records.load_mentions(d / "mentions_test.tsv", year), index)
    triples = records.load_triples(d / "triples.tsv")
    return entities, index, train_m, test_m, triples


def build_tokenizer(cfg: RunConfig) -> Tokenizer:
    """One vocabulary across all years so checkpoints transfer between snapshots."""
    texts = []
    for year in cfg.years:
        entities, _, train_m, test_m, _ = load_year_corpus(cfg, year)
        for e in entities:
            texts.append(e.title)
            texts.append(e.description)
        for m in train_m + test_m:
            texts.extend((m.context_left, m.mention, m.context_right))
    return Tokenizer.build(texts, max_len=cfg.model.max_len)


def graphs_dir(cfg: RunConfig, year: int) -> Path:
    return Path(cfg.out_dir) / "graphs" / str(year)


def build_year_graphs(cfg: RunConfig, year: int, tokenizer: Tokenizer):
    """Construct and persist structure graph, kNN feature graph, feature matrix."""
    entities, index, _, _, triples = load_year_corpus(cfg, year)
    out = graphs_dir(cfg, year)
    out.mkdir(parents=True, exist_ok=True)

    structure = build_structure_graph(triples, index)
    emb = embed_descriptions(entities, dim=cfg.embed_dim, seed=cfg.embed_seed)
    feature_graph = build_knn_graph(emb, min(cfg.k, len(entities) - 1))
    fmat = build_feature_matrix(
        entities, tokenizer, VocabFilter(cfg.min_count, cfg.max_count))

    index.save(out / "index.manifest")
    save_adjacency(structure, out / "structure.adj")
    save_adjacency(feature_graph, out / "feature.adj")
    save_feature_matrix(fmat, out / "feature.mat")
    return structure, feature_graph, fmat


def load_year_graphs(cfg: RunConfig, year: int):
    out = graphs_dir(cfg, year)
    structure = load_adjacency(out / "structure.adj")
    feature_graph = load_adjacency(out / "feature.adj")
    fmat = load_feature_matrix(out / "feature.mat")
    return structure, feature_graph, fmat


def make_snapshot(cfg: RunConfig, year: int, category: str = None,
                  tokenizer: Tokenizer = None) -> Snapshot:
    entities, index, train_m, _, _ = load_year_corpus(cfg, year)
    if category:
        train_m = [m for m in train_m if m.category == category]
    out = graphs_dir(cfg, year)
    if not (out / "structure.adj").exists():
        structure, feature_graph, fmat = build_year_graphs(cfg, year, tokenizer)
    else:
        structure, feature_graph, fmat = load_year_graphs(cfg, year)
    return Snapshot(year=year, entities=entities, mentions=train_m, index=index,
                    structure=structure, feature_graph=feature_graph,
                    feature_matrix=fmat)


def checkpoint_path(cfg: RunConfig, year: int, category: str) -> Path:
    return Path(cfg.out_dir) / "checkpoints" / f"{category}_{year}.ckpt"


def _run_manifest_path(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / "run_manifest.json"


def _load_run_manifest(cfg: RunConfig) -> dict:
    p = _run_manifest_path(cfg)
    if p.exists():
        return json.loads(p.read_text())
    return {}


def _save_run_manifest(cfg: RunConfig, manifest: dict):
    p = _run_manifest_path(cfg)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(manifest, sort_keys=True, indent=1))


def train_year(cfg: RunConfig, year: int, category: str,
               tokenizer: Tokenizer) -> Path:
    """Train one (year, category) checkpoint; skips work already done for
    an identical configuration (matched by config stamp)."""
    path = checkpoint_path(cfg, year, category)
    manifest = _load_run_manifest(cfg)
    key = f"{category}_{year}"
    if path.exists() and manifest.get(key) == cfg.stamp():
        log.info("skipping completed checkpoint %s", path)
        return path
    snapshot = make_snapshot(cfg, year, category, tokenizer)
    model = Model(tokenizer, snapshot.feature_matrix.m, cfg.model)
    path.parent.mkdir(parents=True, exist_ok=True)
    _, optimizer, _ = train(snapshot, model, cfg.train,
                            out_dir=path.parent,
                            curve_name=f"loss_curve_{category}_{year}.csv")
    save_model(path, model, cfg.train, optimizer,
               extra={"year": year, "category": category})
    manifest = _load_run_manifest(cfg)
    manifest[key] = cfg.stamp()
    _save_run_manifest(cfg, manifest)
    return path


def evaluate_category(cfg: RunConfig, category: str) -> GapMatrix:
    models_by_year = {}
    test_sets = {}
    for year in cfg.years:
        model, _, _, _ = load_model(checkpoint_path(cfg, year, category))
        models_by_year[year] = model
        entities, index, _, test_m, _ = load_year_corpus(cfg, year)
        test_sets[year] = (test_m, entities, index)
    return temporal_matrix(models_by_year, test_sets)


def write_resolved_config(cfg: RunConfig, version: str):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.resolved()
    resolved["version"] = version
    (out / "resolved_config.json").write_text(
        json.dumps(resolved, sort_keys=True, indent=1) + "\n")


def run_experiment(cfg: RunConfig, version: str = "0"):
    """Train per (year, category), evaluate all year pairs, return matrices."""
    write_resolved_config(cfg, version)
    tokenizer = build_tokenizer(cfg)
    for year in cfg.years:
        out = graphs_dir(cfg, year)
        if not (out / "structure.adj").exists():
            build_year_graphs(cfg, year, tokenizer)
    for category in cfg.categories:
        for year in cfg.years:
            train_year(cfg, year, category, tokenizer)
    matrices = {}
    for category in cfg.categories:
        matrices[category] = evaluate_category(cfg, category)
        if not matrices[category].complete():
            raise RuntimeError(f"incomplete gap matrix for {category}")
    return matrices


def parse_years(spec: str) -> list:
    """Accept "A..B" (inclusive) or a comma-separated list."""
    spec = spec.strip()
    if ".." in spec:
        a, b = spec.split("..", 1)
        a, b = int(a), int(b)
        if b < a:
            raise ValueError(f"bad year range {spec!r}")
        return list(range(a, b + 1))
    return [int(y) for y in spec.split(",") if y.strip()]
