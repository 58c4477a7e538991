"""Deterministic training loop: batching with in-batch negatives, joint
forward over text and graph branches, Adam updates, checkpointing."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import tape
from .checkpoint import save_checkpoint, load_checkpoint
from .graphs import sym_normalize
from .model import (LossWeights, Model, ModelConfig, consistency_loss,
                    distinct_loss, total_loss)
from .textenc import Tokenizer

log = logging.getLogger(__name__)


class NumericError(Exception):
    """A loss term went non-finite during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 1
    batch_size: int = 32
    loss_a: float = 0.5
    loss_b: float = 0.01
    gram_sample: int = 2048   # use all nodes when n <= this, else sample this many
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("invalid train config")

    def weights(self):
        return LossWeights(a=self.loss_a, b=self.loss_b)


@dataclass
class Snapshot:
    """One year's worth of training state: corpus plus prebuilt graphs."""

    year: int
    entities: list
    mentions: list
    index: object
    structure: object        # AdjacencyMatrix
    feature_graph: object    # AdjacencyMatrix
    feature_matrix: object   # FeatureMatrix
    s_r: object = None       # normalized CSR, built lazily
    s_f: object = None
    x_dense: np.ndarray = None

    def prepare(self):
        if self.s_r is None:
            self.s_r = sym_normalize(self.structure)
            self.s_f = sym_normalize(self.feature_graph)
            self.x_dense = self.feature_matrix.to_dense(np.float32)
        return self


class Adam:
    """Adaptive-moment optimizer, beta=(0.9, 0.999), eps=1e-8, no decay."""

    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.step_count = 0

    def step(self, params: dict, clip: float = 0.0):
        grads = {n: p.grad for n, p in params.items() if p.grad is not None}
        if clip > 0 and grads:
            total = np.sqrt(np.float64(
                sum((g.astype(np.float64) ** 2).sum() for g in grads.values())))
            if total > clip:
                factor = np.float32(clip / total)
                grads = {n: g * factor for n, g in grads.items()}
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, g in sorted(grads.items()):
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            self.m[name] = (self.beta1 * self.m[name]
                            + (1 - self.beta1) * g).astype(np.float32)
            self.v[name] = (self.beta2 * self.v[name]
                            + (1 - self.beta2) * g * g).astype(np.float32)
            m_hat = self.m[name] / np.float32(bias1)
            v_hat = self.v[name] / np.float32(bias2)
            p.data = (p.data - np.float32(self.lr) * m_hat
                      / (np.sqrt(v_hat) + np.float32(self.eps))).astype(np.float32)


def make_batches(mentions, batch_size: int, seed: int):
    """Seeded shuffle, then fixed-size chunks (last batch may be short)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(mentions))
    shuffled = [mentions[i] for i in order]
    return [shuffled[i:i + batch_size]
            for i in range(0, len(shuffled), batch_size)]


def _gram_rows(n: int, sample: int, rng) -> np.ndarray:
    if n <= sample:
        return np.arange(n)
    return np.sort(rng.choice(n, size=sample, replace=False))


def train_step(batch, snapshot: Snapshot, model: Model, optimizer: Adam,
               config: TrainConfig, step_rng):
    """One joint forward/backward/update; returns the loss breakdown."""
    snapshot.prepare()
    params = model.trainable_params()
    for p in model.params.values():
        p.zero_grad()

    y_m = model.encode_mentions(batch)
    gold_entities = [snapshot.entities[snapshot.index.row(m.gold_qid)]
                     for m in batch]
    gold_rows = [snapshot.index.row(m.gold_qid) for m in batch]
    y_e = model.encode_entities(gold_entities)

    x = tape.const(snapshot.x_dense)
    z_f, z_r, z_sf, z_sr = model.gcn.forward(snapshot.s_f, snapshot.s_r, x)
    y_e_fused = model.fusion.fuse(y_e, z_f, z_r, z_sf, z_sr, gold_rows)

    scores = tape.matmul(y_m, tape.transpose(y_e_fused))
    if len(batch) > 1:
        l_e = tape.el_loss(scores)
    else:
        l_e = tape.const(np.float32(0.0))  # single pair: in-batch loss is 0 exactly

    rows = _gram_rows(len(snapshot.entities), config.gram_sample, step_rng)
    l_s = consistency_loss(tape.gather_rows(z_sr, rows),
                           tape.gather_rows(z_sf, rows))
    l_d = distinct_loss(tape.gather_rows(z_r, rows),
                        tape.gather_rows(z_sr, rows),
                        tape.gather_rows(z_f, rows),
                        tape.gather_rows(z_sf, rows))
    loss = total_loss(l_e, l_s, l_d, config.weights())

    breakdown = {"L_e": float(l_e.data), "L_s": float(l_s.data),
                 "L_d": float(l_d.data), "L_total": float(loss.data)}
    for name, value in breakdown.items():
        if not np.isfinite(value):
            raise NumericError(f"non-finite {name} in train step: {breakdown}")

    loss.backward()
    optimizer.step(params, clip=config.grad_clip)
    return breakdown


def model_tensors(model: Model, optimizer: Adam = None) -> dict:
    tensors = {name: p.data for name, p in model.params.items()}
    if optimizer is not None:
        for name, arr in optimizer.m.items():
            tensors[f"opt.m.{name}"] = arr
        for name, arr in optimizer.v.items():
            tensors[f"opt.v.{name}"] = arr
    return tensors


def checkpoint_meta(model: Model, config: TrainConfig, optimizer: Adam = None,
                    extra: dict = None) -> dict:
    meta = {
        "format": "ckpt-v1",
        "model_config": asdict(model.config),
        "train_config": asdict(config),
        "tokenizer_vocab": model.tokenizer.vocab,
        "tokenizer_max_len": model.tokenizer.max_len,
        "feature_dim": model.gcn.params["gcn.wf.l0"].data.shape[0],
        "fusion_frozen": model.fusion.frozen,
        "step": optimizer.step_count if optimizer else 0,
    }
    if extra:
        meta.update(extra)
    return meta


def save_model(path, model: Model, config: TrainConfig, optimizer: Adam = None,
               extra: dict = None):
    save_checkpoint(path, model_tensors(model, optimizer),
                    checkpoint_meta(model, config, optimizer, extra))


def load_model(path):
    """Rebuild a Model (and optimizer state) from a checkpoint file."""
    tensors, meta = load_checkpoint(path)
    tokenizer = Tokenizer(meta["tokenizer_vocab"], meta["tokenizer_max_len"])
    mc = ModelConfig(**meta["model_config"])
    model = Model(tokenizer, meta["feature_dim"], mc,
                  fusion_frozen_zero=meta.get("fusion_frozen", False))
    for name, p in model.params.items():
        p.data = tensors[name].reshape(p.data.shape).astype(np.float32)
    config = TrainConfig(**meta["train_config"])
    optimizer = Adam(config.learning_rate)
    optimizer.step_count = meta.get("step", 0)
    for name in model.params:
        if f"opt.m.{name}" in tensors:
            optimizer.m[name] = tensors[f"opt.m.{name}"].reshape(
                model.params[name].data.shape)
            optimizer.v[name] = tensors[f"opt.v.{name}"].reshape(
                model.params[name].data.shape)
    return model, config, optimizer, meta


def train(snapshot: Snapshot, model: Model, config: TrainConfig,
          out_dir=None, curve_name="loss_curve.csv"):
    """Full training run; returns (model, optimizer, loss curve rows)."""
    snapshot.prepare()
    optimizer = Adam(config.learning_rate)
    curve = []
    step = 0
    for epoch in range(config.epochs):
        batches = make_batches(snapshot.mentions, config.batch_size,
                               config.seed + 7919 * epoch)
        for batch in batches:
            step_rng = np.random.Generator(np.random.PCG64(config.seed + step))
            breakdown = train_step(batch, snapshot, model, optimizer,
                                   config, step_rng)
            step += 1
            curve.append((step, breakdown["L_e"], breakdown["L_s"],
                          breakdown["L_d"], breakdown["L_total"]))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / curve_name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "L_e", "L_s", "L_d", "L_total"])
            for row in curve:
                w.writerow([row[0]] + [repr(v) for v in row[1:]])
    return model, optimizer, curve
