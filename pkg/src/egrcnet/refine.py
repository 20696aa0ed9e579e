"""Embedding-induced graph construction and adaptive fusion with the working graph."""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import ShapeError
from .gcnfusion import NEGATIVE_SLOPE, fusion_weights
from .sparsegraph import (
    NormState,
    SparseAdjacency,
    TorchAdjacency,
    as_operator,
    row_normalize,
    torch_row_normalize,
    torch_sym_renormalize,
)


def _unit_rows(z):
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return np.divide(z, norms, out=np.zeros_like(z), where=norms > 0)


def embedding_similarity(z_a):
    """Row-wise cosine similarity with the diagonal zeroed."""
    u = _unit_rows(z_a)
    s = u @ u.T
    np.fill_diagonal(s, 0.0)
    return s


def nearest_neighbor_graph(s) -> SparseAdjacency:
    """Keep only each row's maximal off-diagonal similarity (lowest column on ties)."""
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if n < 2:
        return SparseAdjacency(n, [], [], [])
    masked = s.copy()
    np.fill_diagonal(masked, -np.inf)
    cols = masked.argmax(axis=1)
    rows = np.arange(n)
    return SparseAdjacency(n, rows, cols, np.clip(s[rows, cols], 0.0, None))


def embedding_nn_graph(z_a, block=4096) -> SparseAdjacency:
    """``nearest_neighbor_graph(embedding_similarity(z_a))`` without the n x n buffer."""
    u = _unit_rows(z_a)
    n = u.shape[0]
    if n < 2:
        return SparseAdjacency(n, [], [], [])
    cols = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        s = u[start:stop] @ u.T
        r = np.arange(stop - start)
        s[r, r + start] = -np.inf
        c = s.argmax(axis=1)
        cols[start:stop] = c
        vals[start:stop] = s[r, c]
    return SparseAdjacency(n, np.arange(n), cols, np.clip(vals, 0.0, None))


def symmetrize_selfloop(g: SparseAdjacency) -> SparseAdjacency:
    """Symmetrize by elementwise max, put 1 on the diagonal, then row-normalize."""
    m = g.to_scipy()
    m = m.maximum(m.T).tolil()
    m.setdiag(1.0)
    return row_normalize(SparseAdjacency.from_scipy(m.tocsr()))


def induced_graph(z_a) -> SparseAdjacency:
    return symmetrize_selfloop(embedding_nn_graph(z_a))


def _keys(a: SparseAdjacency):
    return a.rows * a.n + a.cols


def fuse_graphs(a_z, a, w_a, slope=NEGATIVE_SLOPE):
    """Adaptive per-node fusion of the induced graph ``a_z`` and the working graph ``a``.

    Returns the fused raw graph as a :class:`TorchAdjacency` (values carry
    gradients into ``w_a``) together with the ``n x 2`` weight matrix.
    """
    if not isinstance(a_z, SparseAdjacency) or not isinstance(a, SparseAdjacency):
        raise TypeError("fuse_graphs takes SparseAdjacency inputs")
    if a_z.n != a.n:
        raise ShapeError(f"fuse_graphs: graphs over {a_z.n} and {a.n} nodes")
    n = a.n
    if w_a.shape != (2 * n, 2):
        raise ShapeError(f"W^A must be ({2 * n}, 2), got {tuple(w_a.shape)}")
    dtype = w_a.dtype
    op_z, op_a = as_operator(a_z, dtype), as_operator(a, dtype)
    v = fusion_weights(op_z.mm(w_a[:n]) + op_a.mm(w_a[n:]), slope)
    keys = np.concatenate([_keys(a_z), _keys(a)])
    uniq, inv = np.unique(keys, return_inverse=True)
    inv = torch.from_numpy(inv)
    inv_z, inv_a = inv[: a_z.nnz], inv[a_z.nnz :]
    rz, ra = torch.from_numpy(a_z.rows), torch.from_numpy(a.rows)
    vals = w_a.new_zeros(len(uniq))
    vals = vals.index_add(0, inv_z, v[rz, 0] * op_z.values)
    vals = vals.index_add(0, inv_a, v[ra, 1] * op_a.values)
    index = torch.from_numpy(np.stack([uniq // n, uniq % n]))
    return TorchAdjacency(index, vals, n, NormState.RAW), v


def torch_symmetrize(g: TorchAdjacency) -> TorchAdjacency:
    index = torch.cat([g.index, g.index.flip(0)], dim=1)
    values = torch.cat([g.values, g.values]) * 0.5
    return TorchAdjacency(index, values, g.n, NormState.RAW)


def to_sparse_adjacency(g: TorchAdjacency) -> SparseAdjacency:
    mat = g._mat.detach()
    idx = mat.indices().numpy()
    return SparseAdjacency(g.n, idx[0], idx[1], mat.values().double().numpy(), g.norm_state)


class Refiner(nn.Module):
    """Holds ``W^A``, the ``2n x 2`` fusion weight of the graph refinement."""

    def __init__(self, n_nodes, slope=NEGATIVE_SLOPE):
        super().__init__()
        self.slope = slope
        self.weight = nn.Parameter(torch.empty(2 * n_nodes, 2))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, a_z, a):
        return fuse_graphs(a_z, a, self.weight, self.slope)


class WorkingGraph:
    """The graph the model propagates over, refined in place during training.

    ``base`` is the raw symmetric graph; after a refinement ``induced`` holds
    the latest embedding-induced graph and the operator is the (differentiable)
    fusion of the two, symmetrized and then normalized for the consumer.
    """

    def __init__(self, base: SparseAdjacency, induced: SparseAdjacency | None = None):
        if not base.is_symmetric():
            base = base.symmetrized()
        self.base = base
        self.induced = induced
        self.refinements = 0
        self._cache = {}

    @property
    def n(self):
        return self.base.n

    def fused(self, refiner: Refiner) -> TorchAdjacency:
        g, _ = refiner(self.induced, self.base)
        return torch_symmetrize(g)

    def operator(self, kind, refiner: Refiner | None = None, dtype=torch.float64) -> TorchAdjacency:
        """``kind`` is ``"sym"`` (GCN) or ``"row"`` (PageRank propagation)."""
        if self.induced is None or refiner is None:
            key = (kind, dtype)
            if key not in self._cache:
                g = as_operator(self.base, dtype)
                self._cache[key] = self._normalize(g.index, g.values, kind)
            return self._cache[key]
        g = self.fused(refiner)
        return self._normalize(g.index, g.values, kind)

    def _normalize(self, index, values, kind):
        n = self.n
        if kind == "sym":
            idx, val = torch_sym_renormalize(index, values, n)
            return TorchAdjacency(idx, val, n, NormState.SYM_RENORM)
        if kind == "row":
            idx, val = torch_row_normalize(index, values, n)
            return TorchAdjacency(idx, val, n, NormState.ROW_STOCHASTIC)
        raise ValueError(f"unknown operator kind {kind!r}")

    def refine(self, z_a, refiner: Refiner):
        """Fold the current fusion into ``base`` and induce a new graph from ``z_a``."""
        if self.induced is not None:
            with torch.no_grad():
                self.base = to_sparse_adjacency(self.fused(refiner))
        self.induced = induced_graph(z_a)
        self.refinements += 1
        self._cache.clear()
        return self.stats()

    def stats(self):
        return {
            "refinements": self.refinements,
            "base_nnz": self.base.nnz,
            "induced_nnz": self.induced.nnz if self.induced is not None else 0,
            "symmetry_residual": self.base.symmetry_residual(),
        }
