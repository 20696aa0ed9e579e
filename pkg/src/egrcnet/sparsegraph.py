"""Weighted sparse adjacency and the two normalizations used by the model.

``SparseAdjacency`` is an immutable coordinate list kept in canonical
(row, col) order. The numpy functions here are the reference; the ``torch_*``
helpers below compute the same operators on autograd tensors so that learned
edge weights can be trained through.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import torch

from .errors import DegenerateRowError, ParameterError, ShapeError


class NormState(str, enum.Enum):
    RAW = "raw"
    SYM_RENORM = "sym_renorm"
    ROW_STOCHASTIC = "row_stochastic"


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    norm_state: NormState = NormState.RAW

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == w.shape):
            raise ShapeError("rows, cols and weights must have equal length")
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= self.n):
            raise ShapeError(f"entry index out of range for n={self.n}")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ParameterError("adjacency weights must be finite and >= 0")
        # canonical order, duplicates summed
        m = sp.coo_matrix((w, (rows, cols)), shape=(self.n, self.n)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        coo = m.tocoo()
        object.__setattr__(self, "rows", coo.row.astype(np.int64))
        object.__setattr__(self, "cols", coo.col.astype(np.int64))
        object.__setattr__(self, "weights", coo.data.astype(np.float64))
        object.__setattr__(self, "norm_state", NormState(self.norm_state))

    # construction ---------------------------------------------------------
    @classmethod
    def from_edges(cls, edges, n, symmetric=True):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        r, c = edges[:, 0], edges[:, 1]
        if symmetric:
            r, c = np.concatenate([r, c]), np.concatenate([c, r])
        m = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        m.data[:] = 1.0
        return cls.from_scipy(m)

    @classmethod
    def from_scipy(cls, m, norm_state=NormState.RAW):
        coo = sp.coo_matrix(m)
        return cls(coo.shape[0], coo.row, coo.col, coo.data, norm_state)

    @classmethod
    def from_dense(cls, a, norm_state=NormState.RAW):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"adjacency must be square, got {a.shape}")
        r, c = np.nonzero(a)
        return cls(a.shape[0], r, c, a[r, c], norm_state)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, idx, idx, np.ones(n))

    # views ---------------------------------------------------------------
    @property
    def nnz(self):
        return len(self.weights)

    def to_scipy(self):
        return sp.csr_matrix((self.weights, (self.rows, self.cols)), shape=(self.n, self.n))

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        a[self.rows, self.cols] = self.weights
        return a

    def index_tensor(self):
        return torch.from_numpy(np.stack([self.rows, self.cols]))

    def to_torch(self, dtype=torch.float64):
        return torch.sparse_coo_tensor(
            self.index_tensor(), torch.as_tensor(self.weights, dtype=dtype), (self.n, self.n), check_invariants=False
        ).coalesce()

    def row_sums(self):
        return np.bincount(self.rows, weights=self.weights, minlength=self.n)

    def symmetry_residual(self):
        m = self.to_scipy()
        diff = abs(m - m.T)
        return float(diff.max()) if diff.nnz else 0.0

    def is_symmetric(self, tol=1e-9):
        return self.symmetry_residual() <= tol

    def with_state(self, norm_state):
        return SparseAdjacency(self.n, self.rows, self.cols, self.weights, norm_state)

    def symmetrized(self):
        """Average with the transpose; state becomes raw."""
        m = self.to_scipy()
        return SparseAdjacency.from_scipy((m + m.T) * 0.5)

    def permuted(self, perm):
        """Relabel node ``perm[i]`` as ``i`` (rows and columns together)."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return SparseAdjacency(self.n, inv[self.rows], inv[self.cols], self.weights, self.norm_state)

    def __eq__(self, other):
        return (
            isinstance(other, SparseAdjacency)
            and self.n == other.n
            and self.norm_state == other.norm_state
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self):
        return f"SparseAdjacency(n={self.n}, nnz={self.nnz}, state={self.norm_state.value})"


def sym_renormalize(a: SparseAdjacency) -> SparseAdjacency:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``."""
    if a.norm_state != NormState.RAW:
        raise ParameterError(f"sym_renormalize expects a raw graph, got {a.norm_state.value}")
    if not a.is_symmetric():
        raise ParameterError("sym_renormalize expects a symmetric graph; symmetrize first")
    m = a.to_scipy() + sp.identity(a.n, format="csr")
    d = np.asarray(m.sum(axis=1)).ravel()
    dinv = sp.diags(1.0 / np.sqrt(d))
    return SparseAdjacency.from_scipy(dinv @ m @ dinv, NormState.SYM_RENORM)


def row_normalize(g: SparseAdjacency) -> SparseAdjacency:
    sums = g.row_sums()
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise DegenerateRowError(f"row {bad[0]} has zero sum")
    w = g.weights / sums[g.rows]
    return SparseAdjacency(g.n, g.rows, g.cols, w, NormState.ROW_STOCHASTIC)


def add_self_loops(a: SparseAdjacency, weight=1.0) -> SparseAdjacency:
    idx = np.arange(a.n)
    return SparseAdjacency(
        a.n,
        np.concatenate([a.rows, idx]),
        np.concatenate([a.cols, idx]),
        np.concatenate([a.weights, np.full(a.n, weight)]),
    )


def spectral_radius(a: SparseAdjacency, iters=500, seed=0):
    """Power-iteration estimate of the largest |eigenvalue|."""
    m = a.to_scipy()
    v = np.random.default_rng(seed).random(a.n) + 0.1
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        lam = np.linalg.norm(w)
        if lam == 0:
            return 0.0
        v = w / lam
    return float(lam)


# autograd counterparts --------------------------------------------------------

def _with_identity(index, values, n):
    diag = torch.arange(n, device=values.device)
    index = torch.cat([index, torch.stack([diag, diag])], dim=1)
    values = torch.cat([values, values.new_ones(n)])
    return index, values


def torch_sym_renormalize(index, values, n):
    """Autograd version of :func:`sym_renormalize` on raw (index, values)."""
    index, values = _with_identity(index, values, n)
    deg = values.new_zeros(n).index_add(0, index[0], values)
    dinv = deg.rsqrt()
    return index, values * dinv[index[0]] * dinv[index[1]]


def torch_row_normalize(index, values, n, self_loops=True):
    if self_loops:
        index, values = _with_identity(index, values, n)
    deg = values.new_zeros(n).index_add(0, index[0], values)
    return index, values / deg[index[0]]


@dataclass(frozen=True, eq=False)
class TorchAdjacency:
    """Sparse operator whose ``values`` may carry gradients."""

    index: torch.Tensor
    values: torch.Tensor
    n: int
    norm_state: NormState

    def __post_init__(self):
        a = torch.sparse_coo_tensor(
            self.index, self.values, (self.n, self.n), check_invariants=False
        ).coalesce()
        object.__setattr__(self, "_mat", a)

    def mm(self, dense):
        return torch.sparse.mm(self._mat, dense)

    def to_dense(self):
        return self._mat.to_dense()


def as_operator(a, dtype=torch.float64) -> TorchAdjacency:
    if isinstance(a, TorchAdjacency):
        return a
    if isinstance(a, SparseAdjacency):
        return TorchAdjacency(a.index_tensor(), torch.as_tensor(a.weights, dtype=dtype), a.n, a.norm_state)
    raise TypeError(f"cannot use {type(a).__name__} as a graph operator")
