"""Dataset ingestion, plain-text formats and KNN graph construction.

Text formats
------------
features
    one node per line, decimal numbers separated by whitespace or commas.
labels
    one non-negative integer per line.
graph
    one edge per line, ``"i j"`` with 0-based node ids. Undirected edges may
    be listed once or twice; lines with ``i == j`` are dropped.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EdgeIndexError, FormatError, ParameterError, ShapeError

_SEP = re.compile(r"[,\s]+")


@dataclass(frozen=True)
class EdgeList:
    edges: np.ndarray  # (m, 2) int64
    n: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            bad = edges[(edges < 0).any(1) | (edges >= self.n).any(1)][0]
            raise EdgeIndexError(f"edge {tuple(bad)} out of range for n={self.n}")
        edges = edges[edges[:, 0] != edges[:, 1]]
        object.__setattr__(self, "edges", edges)

    def __len__(self):
        return len(self.edges)

    def __eq__(self, other):
        return (
            isinstance(other, EdgeList)
            and self.n == other.n
            and np.array_equal(self.edges, other.edges)
        )

    def to_adjacency(self):
        """Symmetric binary adjacency (no self-loops)."""
        from .sparsegraph import SparseAdjacency

        return SparseAdjacency.from_edges(self.edges, self.n, symmetric=True)


@dataclass(frozen=True)
class DatasetBundle:
    name: str
    features: np.ndarray
    num_clusters: int
    labels: Optional[np.ndarray] = None
    graph: Optional[EdgeList] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ShapeError(f"features must be a 2-D matrix, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise FormatError("features contain non-finite entries")
        n = x.shape[0]
        if not (2 <= self.num_clusters <= n):
            raise ParameterError(f"need n >= num_clusters >= 2, got n={n}, k={self.num_clusters}")
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (n,):
                raise ShapeError(f"{len(y)} labels for {n} nodes")
            if y.min() < 0 or y.max() >= self.num_clusters:
                raise ParameterError("labels must lie in [0, num_clusters)")
            object.__setattr__(self, "labels", y)
        if self.graph is not None and self.graph.n != n:
            raise ShapeError(f"graph over {self.graph.n} nodes, features have {n}")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


def _open_text(path):
    if not os.path.isfile(path):
        raise FormatError(f"no such file: {path}")
    return open(path, encoding="utf-8")


def read_features(path) -> np.ndarray:
    rows = []
    width = None
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in _SEP.split(line) if tok]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}:{lineno}: ragged row ({len(row)} values, expected {width})")
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty feature file")
    return np.array(rows, dtype=np.float64)


def read_labels(path) -> np.ndarray:
    with _open_text(path) as fh:
        try:
            vals = [int(line) for line in fh if line.strip()]
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    y = np.array(vals, dtype=np.int64)
    if y.size and y.min() < 0:
        raise FormatError(f"{path}: negative label")
    return y


def read_edges(path, n) -> EdgeList:
    pairs = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.split()
            if not toks:
                continue
            if len(toks) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'i j'")
            try:
                pairs.append((int(toks[0]), int(toks[1])))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer node id") from None
    return EdgeList(np.array(pairs, dtype=np.int64).reshape(-1, 2), n)


def remap_labels(y):
    """Map the distinct values of ``y`` onto 0..m-1, preserving their order."""
    _, inv = np.unique(np.asarray(y), return_inverse=True)
    return inv.astype(np.int64)


def load_dataset(features_path, labels_path=None, graph_path=None, num_clusters=None, name=None):
    x = read_features(features_path)
    n = x.shape[0]
    labels = None
    if labels_path is not None:
        raw = read_labels(labels_path)
        if raw.shape[0] != n:
            raise ShapeError(f"{raw.shape[0]} labels for {n} feature rows")
        labels = remap_labels(raw)
        if num_clusters is None:
            num_clusters = int(labels.max()) + 1
    if num_clusters is None:
        raise ParameterError("num_clusters is required when no labels are given")
    graph = read_edges(graph_path, n) if graph_path is not None else None
    if name is None:
        name = os.path.splitext(os.path.basename(features_path))[0]
    return DatasetBundle(name, x, int(num_clusters), labels, graph)


def save_features(path, x):
    np.savetxt(path, np.asarray(x, dtype=np.float64), fmt="%.17g")


def save_labels(path, y):
    np.savetxt(path, np.asarray(y, dtype=np.int64), fmt="%d")


def save_edges(path, graph: EdgeList):
    np.savetxt(path, graph.edges, fmt="%d")


def save_dataset(bundle: DatasetBundle, directory):
    """Write ``<name>.txt``, ``<name>_label.txt`` and ``<name>_graph.txt``."""
    os.makedirs(directory, exist_ok=True)
    paths = {"features": os.path.join(directory, f"{bundle.name}.txt")}
    save_features(paths["features"], bundle.features)
    if bundle.labels is not None:
        paths["labels"] = os.path.join(directory, f"{bundle.name}_label.txt")
        save_labels(paths["labels"], bundle.labels)
    if bundle.graph is not None:
        paths["graph"] = os.path.join(directory, f"{bundle.name}_graph.txt")
        save_edges(paths["graph"], bundle.graph)
    return paths


def nonnegative_features(x):
    """Min-max scale every column to [0, 1] if any entry is negative."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.min() >= 0:
        return x
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    span[span == 0] = 1.0
    return (x - lo) / span


def cosine_similarity(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    unit = np.divide(x, norms[:, None], out=np.zeros_like(x), where=norms[:, None] > 0)
    return unit @ unit.T


def build_knn_graph(features, k=3, block=2048) -> EdgeList:
    """Directed k-nearest-neighbour graph under cosine similarity.

    Every node emits exactly ``k`` edges to its most similar other nodes;
    ties go to the lowest node index and zero-norm rows count as similarity 0.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or k >= n:
        raise ParameterError(f"need 1 <= k < n, got k={k}, n={n}")
    norms = np.linalg.norm(x, axis=1)
    unit = np.divide(x, norms[:, None], out=np.zeros_like(x), where=norms[:, None] > 0)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        sim = unit[start:stop] @ unit.T
        rows = np.arange(stop - start)
        sim[rows, rows + start] = -np.inf
        out[start:stop] = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    return EdgeList(np.stack([src, out.ravel()], axis=1), n)
