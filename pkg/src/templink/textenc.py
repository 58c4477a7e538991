"""Tokenizer, mention/entity templates, and the pluggable text encoder.

The tokenizer splits on whitespace and punctuation over a corpus-built
vocabulary with an UNK fallback; subword modeling is deliberately out of
scope. Templates:

    mention: [CLS] ctxt_l [M_s] mention [M_e] ctxt_r [SEP]
    entity:  [CLS] title [ENT] description [SEP]

The mention template truncates the two contexts outward-in, balanced
within one token; the entity template truncates the description tail.
"""

from __future__ import annotations

import re

import numpy as np

from . import tape

PAD, UNK, CLS, SEP, M_START, M_END, ENT = range(7)
N_SPECIAL = 7

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def split_text(text: str) -> list:
    return _TOKEN_RE.findall(text.lower())


class Tokenizer:
    """Corpus-built vocabulary with reserved special-token ids 0..6."""

    def __init__(self, vocab: dict, max_len: int = 128):
        self.vocab = dict(vocab)
        self.max_len = max_len

    @classmethod
    def build(cls, texts, max_len: int = 128):
        tokens = set()
        for t in texts:
            tokens.update(split_text(t))
        vocab = {tok: N_SPECIAL + i for i, tok in enumerate(sorted(tokens))}
        return cls(vocab, max_len=max_len)

    @property
    def vocab_size(self):
        return N_SPECIAL + len(self.vocab)

    def token_ids(self, text: str) -> list:
        return [self.vocab.get(t, UNK) for t in split_text(text)]

    def render_mention(self, mention_record) -> list:
        left = self.token_ids(mention_record.context_left)
        span = self.token_ids(mention_record.mention)
        right = self.token_ids(mention_record.context_right)
        budget = self.max_len - 4
        if len(span) > budget:
            span = span[:budget]
        ctx_budget = budget - len(span)
        if len(left) + len(right) > ctx_budget:
            want_l = ctx_budget - ctx_budget // 2
            want_r = ctx_budget // 2
            if len(left) < want_l:
                want_r = ctx_budget - len(left)
                want_l = len(left)
            elif len(right) < want_r:
                want_l = ctx_budget - len(right)
                want_r = len(right)
            left = left[len(left) - want_l:] if want_l else []
            right = right[:want_r]
        return [CLS] + left + [M_START] + span + [M_END] + right + [SEP]

    def render_entity(self, entity_record) -> list:
        title = self.token_ids(entity_record.title)
        desc = self.token_ids(entity_record.description)
        seq = [CLS] + title + [ENT] + desc + [SEP]
        if len(seq) > self.max_len:
            seq = seq[:self.max_len - 1] + [SEP]
        return seq


def _uniform_init(rng, rows, cols):
    bound = 1.0 / np.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(np.float32)


class TextEncoder:
    """Small sequence encoder producing one d-vector per token sequence.

    mode "mean": average of token embeddings (PAD ids dropped first).
    mode "attn": token + positional embeddings through ``n_layers``
    single-head self-attention blocks; output is the position-0 vector.
    """

    def __init__(self, vocab_size: int, dim: int = 64, max_len: int = 128,
                 mode: str = "mean", n_layers: int = 2, seed: int = 0,
                 prefix: str = "enc"):
        if mode not in ("mean", "attn"):
            raise ValueError(f"unknown encoder mode {mode!r}")
        self.dim = dim
        self.mode = mode
        self.max_len = max_len
        self.n_layers = n_layers
        rng = np.random.Generator(np.random.PCG64(seed))
        self.params = {}
        self.params[f"{prefix}.emb"] = tape.param(
            _uniform_init(rng, vocab_size, dim), name=f"{prefix}.emb")
        self.params[f"{prefix}.pos"] = tape.param(
            _uniform_init(rng, max_len, dim), name=f"{prefix}.pos")
        if mode == "attn":
            for layer in range(n_layers):
                for w in ("wq", "wk", "wv", "wo"):
                    name = f"{prefix}.l{layer}.{w}"
                    self.params[name] = tape.param(_uniform_init(rng, dim, dim),
                                                   name=name)
        self.prefix = prefix

    def encode_tensor(self, ids) -> tape.Tensor:
        """Differentiable encoding of one token-id sequence to a 1 x d tensor."""
        ids = [i for i in ids if i != PAD][:self.max_len]
        if not ids:
            ids = [CLS]
        emb = self.params[f"{self.prefix}.emb"]
        h = tape.gather_rows(emb, ids)
        if self.mode == "mean":
            return tape.mean_rows(h)
        pos = tape.gather_rows(self.params[f"{self.prefix}.pos"], range(len(ids)))
        h = tape.add(h, pos)
        inv_sqrt_d = 1.0 / np.sqrt(self.dim)
        for layer in range(self.n_layers):
            q = tape.matmul(h, self.params[f"{self.prefix}.l{layer}.wq"])
            k = tape.matmul(h, self.params[f"{self.prefix}.l{layer}.wk"])
            v = tape.matmul(h, self.params[f"{self.prefix}.l{layer}.wv"])
            attn = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)),
                                                inv_sqrt_d))
            mixed = tape.matmul(tape.matmul(attn, v),
                                self.params[f"{self.prefix}.l{layer}.wo"])
            h = tape.add(h, tape.relu(mixed))
        return tape.gather_rows(h, [0])

    def encode_ids(self, ids) -> np.ndarray:
        """Non-differentiable convenience wrapper: flat d-vector."""
        return self.encode_tensor(ids).data.reshape(-1).copy()


def score(y_m: np.ndarray, y_e: np.ndarray) -> float:
    """Dot-product mention/entity score."""
    return float(np.dot(np.asarray(y_m).ravel(), np.asarray(y_e).ravel()))
