"""Reverse-mode autodiff over dense numpy arrays plus a sparse propagation op.

Every loss in the package is assembled from the primitives here. Tensors
carry float32 data by default; reductions (trace, Frobenius norms,
logsumexp) accumulate in float64 before casting back. Passing float64
leaves, as the gradient checker does, runs the whole graph in float64.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    """Node in the computation graph.

    Gradients accumulate additively at fan-out; ``backward`` replays the
    recorded graph once in reverse topological order.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        g = np.asarray(g, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        self._accumulate(grad)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def param(data, name=""):
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def const(data):
    return Tensor(np.asarray(data))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else const(x)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return Tensor(out_data, parents=(a, b), backward=bwd)


def sub(a, b):
    return add(a, scale(b, -1.0))


def scale(a, c):
    a = _as_tensor(a)
    c = float(c)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return Tensor(a.data * np.asarray(c, dtype=a.dtype), parents=(a,), backward=bwd)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor(out_data, parents=(a, b), backward=bwd)


def transpose(a):
    a = _as_tensor(a)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g.T)

    return Tensor(a.data.T.copy(), parents=(a,), backward=bwd)


def relu(a):
    """Elementwise max(x, 0). Subgradient at exactly 0 is taken as 0."""
    a = _as_tensor(a)
    mask = a.data > 0

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor(np.where(mask, a.data, 0), parents=(a,), backward=bwd)


def spmm(S: sp.csr_matrix, z: Tensor):
    """Sparse-dense product S @ Z; grad_Z = S.T @ grad_out."""
    z = _as_tensor(z)
    if S.shape[1] != z.data.shape[0]:
        raise ValueError(f"spmm shape mismatch: {S.shape} @ {z.data.shape}")
    out_data = np.asarray(S @ z.data, dtype=z.dtype)
    St = S.T.tocsr()

    def bwd(g):
        if z.requires_grad:
            z._accumulate(np.asarray(St @ g))

    return Tensor(out_data, parents=(z,), backward=bwd)


def gram(z):
    """Z @ Z.T; grad_Z = (G + G.T) @ Z."""
    z = _as_tensor(z)
    out_data = z.data @ z.data.T

    def bwd(g):
        if z.requires_grad:
            z._accumulate((g + g.T) @ z.data)

    return Tensor(out_data, parents=(z,), backward=bwd)


def gather_rows(table, idx):
    """Rows ``table[idx]``; backward scatter-adds into the table."""
    table = _as_tensor(table)
    idx = np.asarray(idx, dtype=np.intp)
    out_data = table.data[idx]

    def bwd(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, g)
            table._accumulate(full)

    return Tensor(out_data, parents=(table,), backward=bwd)


def concat_cols(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    widths = [t.data.shape[1] for t in tensors]

    def bwd(g):
        off = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t._accumulate(g[:, off:off + w])
            off += w

    return Tensor(out_data, parents=tuple(tensors), backward=bwd)


def concat_rows(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=0)
    heights = [t.data.shape[0] for t in tensors]

    def bwd(g):
        off = 0
        for t, h in zip(tensors, heights):
            if t.requires_grad:
                t._accumulate(g[off:off + h])
            off += h

    return Tensor(out_data, parents=tuple(tensors), backward=bwd)


def mean_rows(a):
    """Column-wise mean as a 1 x cols matrix."""
    a = _as_tensor(a)
    n = a.data.shape[0]
    out_data = (a.data.mean(axis=0, dtype=np.float64)
                .astype(a.dtype).reshape(1, -1))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g / n, a.data.shape))

    return Tensor(out_data, parents=(a,), backward=bwd)


def center_rows(a):
    """Subtract the column mean from every row (multiplication by R)."""
    a = _as_tensor(a)
    mu = a.data.mean(axis=0, dtype=np.float64).astype(a.dtype)
    out_data = a.data - mu

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g - g.mean(axis=0, dtype=np.float64).astype(a.dtype))

    return Tensor(out_data, parents=(a,), backward=bwd)


def sum_squares(a):
    """Scalar sum of squared entries, accumulated in float64."""
    a = _as_tensor(a)
    val = np.float64((a.data.astype(np.float64) ** 2).sum())

    def bwd(g):
        if a.requires_grad:
            a._accumulate(2.0 * float(g) * a.data)

    return Tensor(np.asarray(val, dtype=a.dtype), parents=(a,), backward=bwd)


def frob_sq_diff(a, b):
    """||A - B||_F^2."""
    return sum_squares(sub(a, b))


def softmax_rows(a):
    a = _as_tensor(a)
    x = a.data.astype(np.float64)
    x = x - x.max(axis=1, keepdims=True)
    p64 = np.exp(x)
    p64 /= p64.sum(axis=1, keepdims=True)
    p = p64.astype(a.dtype)

    def bwd(g):
        if a.requires_grad:
            dot = (g * p).sum(axis=1, keepdims=True)
            a._accumulate(p * (g - dot))

    return Tensor(p, parents=(a,), backward=bwd)


def logsumexp_row(scores):
    """Stable log-sum-exp of a 1-D score vector, as a scalar tensor."""
    scores = _as_tensor(scores)
    x = scores.data.astype(np.float64).ravel()
    m = x.max()
    val = m + np.log(np.exp(x - m).sum())
    soft = np.exp(x - val).astype(scores.dtype).reshape(scores.data.shape)

    def bwd(g):
        if scores.requires_grad:
            scores._accumulate(float(g) * soft)

    return Tensor(np.asarray(val, dtype=scores.dtype), parents=(scores,), backward=bwd)


def el_loss(score_matrix):
    """Mean in-batch cross-entropy with gold on the diagonal.

    For row i the contribution is -s_ii + logsumexp_j s_ij; gradient wrt
    the score matrix is (softmax - I) / N.
    """
    s = _as_tensor(score_matrix)
    n, m = s.data.shape
    if n != m:
        raise ValueError(f"el_loss expects a square score matrix, got {s.data.shape}")
    x = s.data.astype(np.float64)
    mx = x.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(x - mx).sum(axis=1))
    val = np.float64((lse - np.diag(x)).mean())
    p = np.exp(x - lse[:, None])

    def bwd(g):
        if s.requires_grad:
            gr = p.copy()
            gr[np.arange(n), np.arange(n)] -= 1.0
            s._accumulate((float(g) / n) * gr.astype(s.dtype))

    return Tensor(np.asarray(val, dtype=s.dtype), parents=(s,), backward=bwd)


def hsic(z1, z2):
    """Hilbert-Schmidt independence criterion with inner-product kernels.

    Computed through the factorization (n-1)^-2 ||(R Z1)^T (R Z2)||_F^2,
    which is O(n d1 d2); equal to the literal centered-Gram trace form.
    """
    z1, z2 = _as_tensor(z1), _as_tensor(z2)
    n = z1.data.shape[0]
    if z2.data.shape[0] != n:
        raise ValueError("hsic inputs must have the same number of rows")
    if n < 2:
        raise ValueError("hsic requires at least 2 rows")
    cross = matmul(transpose(center_rows(z1)), center_rows(z2))
    return scale(sum_squares(cross), (n - 1.0) ** -2)


def centering_matrix(n, dtype=np.float64):
    """R = I - (1/n) e e^T as a plain array (test / oracle helper)."""
    return np.eye(n, dtype=dtype) - np.full((n, n), 1.0 / n, dtype=dtype)


def check_gradients(loss_fn, params, eps=1e-3, tol=1e-4, skip=None):
    """Compare tape gradients against central finite differences.

    ``loss_fn`` must be deterministic and return a scalar Tensor built
    from the given parameter Tensors. ``skip`` is an optional predicate
    (param, flat_index) -> bool excluding coordinates (e.g. relu kinks).
    Returns a report dict; ``max_rel_err`` is the headline number.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    failures = []
    max_rel = 0.0
    for pi, p in enumerate(params):
        flat = p.data.ravel()
        for i in range(flat.size):
            if skip is not None and skip(p, i):
                continue
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            an = float(analytic[pi].ravel()[i])
            denom = max(abs(fd), abs(an), 1e-8)
            rel = abs(fd - an) / denom
            max_rel = max(max_rel, rel)
            if rel > tol:
                failures.append((p.name or f"param{pi}", i, an, fd, rel))
    return {"max_rel_err": max_rel, "failures": failures, "ok": not failures}
