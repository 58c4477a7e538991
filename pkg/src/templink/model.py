"""Joint text/graph model: bi-encoder, three-stack GCN, fusion head, losses.

Training couples the text and graph branches by adding a learned
projection of an entity's four GCN embeddings to its text embedding
before scoring. Inference scoring reads the text branch only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .textenc import TextEncoder, Tokenizer, _uniform_init


@dataclass
class LossWeights:
    a: float = 0.5   # shared/consistency weight
    b: float = 0.01  # distinct/disparity weight

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("loss weights must be finite")
        if self.a < 0 or self.b < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class ModelConfig:
    dim: int = 64              # text embedding dim d
    gcn_hidden: int = 32       # h
    gcn_out: int = 32          # g
    gcn_layers: int = 2
    encoder_mode: str = "mean"
    encoder_layers: int = 2
    max_len: int = 128
    seed: int = 0


class GcnStack:
    """Distinct stacks W_f, W_r plus one shared stack W_s applied to both graphs."""

    def __init__(self, input_dim: int, hidden: int, out: int, n_layers: int,
                 seed: int):
        rng = np.random.Generator(np.random.PCG64(seed))
        dims = [input_dim] + [hidden] * (n_layers - 1) + [out]
        self.n_layers = n_layers
        self.params = {}
        for stack in ("wf", "wr", "ws"):
            for layer in range(n_layers):
                name = f"gcn.{stack}.l{layer}"
                self.params[name] = tape.param(
                    _uniform_init(rng, dims[layer], dims[layer + 1]), name=name)

    def _propagate(self, s_csr, x: tape.Tensor, stack: str) -> tape.Tensor:
        z = x
        for layer in range(self.n_layers):
            w = self.params[f"gcn.{stack}.l{layer}"]
            z = tape.relu(tape.matmul(tape.spmm(s_csr, z), w))
        return z

    def forward(self, s_f, s_r, x: tape.Tensor):
        """Returns (Z_f, Z_r, Z_sf, Z_sr), each n x out, ReLU after every layer."""
        if s_f.shape[0] != x.data.shape[0] or s_r.shape[0] != x.data.shape[0]:
            raise ValueError("graph size does not match feature matrix rows")
        z_f = self._propagate(s_f, x, "wf")
        z_r = self._propagate(s_r, x, "wr")
        z_sf = self._propagate(s_f, x, "ws")
        z_sr = self._propagate(s_r, x, "ws")
        return z_f, z_r, z_sf, z_sr


class FusionHead:
    """Training-time projection P: (4 g) x d added onto entity text embeddings."""

    def __init__(self, gcn_out: int, dim: int, seed: int, frozen_zero: bool = False):
        rng = np.random.Generator(np.random.PCG64(seed))
        init = (np.zeros((4 * gcn_out, dim), dtype=np.float32) if frozen_zero
                else _uniform_init(rng, 4 * gcn_out, dim))
        self.proj = tape.param(init, name="fusion.proj")
        self.frozen = frozen_zero

    def fuse(self, y_e: tape.Tensor, z_f, z_r, z_sf, z_sr, rows) -> tape.Tensor:
        """y_e + P-projection of concat(z_r, z_f, z_sr, z_sf) for the given rows."""
        z_cat = tape.concat_cols([tape.gather_rows(z_r, rows),
                                  tape.gather_rows(z_f, rows),
                                  tape.gather_rows(z_sr, rows),
                                  tape.gather_rows(z_sf, rows)])
        return tape.add(y_e, tape.matmul(z_cat, self.proj))


def consistency_loss(z_sr: tape.Tensor, z_sf: tape.Tensor) -> tape.Tensor:
    """||Z_sr Z_sr^T - Z_sf Z_sf^T||_F^2 over the given (possibly sampled) rows."""
    return tape.frob_sq_diff(tape.gram(z_sr), tape.gram(z_sf))


def distinct_loss(z_r, z_sr, z_f, z_sf) -> tape.Tensor:
    """HSIC(Z_r, Z_sr) + HSIC(Z_f, Z_sf)."""
    return tape.add(tape.hsic(z_r, z_sr), tape.hsic(z_f, z_sf))


def total_loss(l_e, l_s, l_d, weights: LossWeights) -> tape.Tensor:
    return tape.add(l_e, tape.add(tape.scale(l_s, weights.a),
                                  tape.scale(l_d, weights.b)))


class Model:
    """Owns the two text encoders, the GCN stacks, the fusion head, and config."""

    def __init__(self, tokenizer: Tokenizer, feature_dim: int,
                 config: ModelConfig = None, fusion_frozen_zero: bool = False):
        self.config = config or ModelConfig()
        c = self.config
        self.tokenizer = tokenizer
        self.mention_encoder = TextEncoder(
            tokenizer.vocab_size, dim=c.dim, max_len=c.max_len,
            mode=c.encoder_mode, n_layers=c.encoder_layers,
            seed=c.seed * 4 + 1, prefix="m_enc")
        self.entity_encoder = TextEncoder(
            tokenizer.vocab_size, dim=c.dim, max_len=c.max_len,
            mode=c.encoder_mode, n_layers=c.encoder_layers,
            seed=c.seed * 4 + 2, prefix="e_enc")
        self.gcn = GcnStack(feature_dim, c.gcn_hidden, c.gcn_out,
                            c.gcn_layers, seed=c.seed * 4 + 3)
        self.fusion = FusionHead(c.gcn_out, c.dim, seed=c.seed * 4 + 4,
                                 frozen_zero=fusion_frozen_zero)

    @property
    def params(self) -> dict:
        out = {}
        out.update(self.mention_encoder.params)
        out.update(self.entity_encoder.params)
        out.update(self.gcn.params)
        out["fusion.proj"] = self.fusion.proj
        return out

    def trainable_params(self) -> dict:
        p = dict(self.params)
        if self.fusion.frozen:
            p.pop("fusion.proj")
        return p

    def encode_mentions(self, mentions) -> tape.Tensor:
        rows = [self.mention_encoder.encode_tensor(self.tokenizer.render_mention(m))
                for m in mentions]
        return tape.concat_rows(rows)

    def encode_entities(self, entities) -> tape.Tensor:
        rows = [self.entity_encoder.encode_tensor(self.tokenizer.render_entity(e))
                for e in entities]
        return tape.concat_rows(rows)

    def entity_table(self, entities) -> np.ndarray:
        """Inference-side entity embedding table; text branch only."""
        if not entities:
            return np.zeros((0, self.config.dim), dtype=np.float32)
        return self.encode_entities(entities).data.copy()
