"""Pretraining, joint training with periodic graph refinement, and checkpoints."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from . import __version__
from .dae import DAE, DEFAULT_DIMS, reconstruction_loss
from .errors import (
    CheckpointVersionError,
    ColumnCollapseError,
    ParameterError,
    TrainingDivergedError,
)
from .graphio import DatasetBundle, build_knn_graph, nonnegative_features
from .metrics import evaluate
from .model import VARIANTS, EGRCNet, zero_biases
from .objective import hard_assign, target_p, total_loss
from .refine import WorkingGraph
from .sparsegraph import SparseAdjacency

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"EGRCNET-CKPT\n"
CHECKPOINT_VERSION = 1
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainConfig:
    epochs: int = 200
    pretrain_epochs: int = 30
    pretrain_lr: float = 1e-3
    pretrain_batch_size: int = 256
    learning_rate: float = 1e-3
    lambdas: tuple = (10.0, 1.0, 0.1)
    refine_interval: int = 10
    variant: str = "full_gcn"
    tau: int = 1
    rho: Optional[float] = None
    knn_k: int = 3
    seed: int = 0
    graph_refinement: bool = True
    jeffreys: bool = True
    dims: tuple = DEFAULT_DIMS
    e0_hidden: tuple = ()
    kmeans_n_init: int = 20
    nmi_average: str = "geometric"
    dtype: str = "float32"

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.dims = tuple(int(v) for v in self.dims)
        self.e0_hidden = tuple(int(v) for v in self.e0_hidden)
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.pretrain_epochs < 0:
            raise ParameterError("pretrain_epochs must be >= 0")
        if self.refine_interval < 1:
            raise ParameterError("refine_interval must be >= 1")
        if self.learning_rate <= 0 or self.pretrain_lr <= 0:
            raise ParameterError("learning rates must be > 0")
        if len(self.lambdas) != 3 or min(self.lambdas) <= 0:
            raise ParameterError(f"lambdas must be three positive numbers, got {self.lambdas}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}")
        if self.tau < 1:
            raise ParameterError("tau must be >= 1")
        if self.rho is not None and not 0.0 <= self.rho <= 1.0:
            raise ParameterError("rho must lie in [0, 1]")
        if self.dtype not in _DTYPES:
            raise ParameterError(f"dtype must be one of {sorted(_DTYPES)}")
        if self.nmi_average not in ("geometric", "arithmetic"):
            raise ParameterError("nmi_average must be 'geometric' or 'arithmetic'")

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k in ("lambdas", "dims", "e0_hidden"):
            d[k] = list(d[k])
        return d

    @property
    def torch_dtype(self):
        return _DTYPES[self.dtype]


@dataclass
class ModelState:
    model: EGRCNet
    graph: WorkingGraph

    @torch.no_grad()
    def embed(self, x):
        """``(Z_a, H)`` for the current parameters and working graph."""
        self.model.eval()
        out = self.model(x, self.graph)
        return out.z_a, out.hs[-1]


@dataclass
class TrainResult:
    state: ModelState
    labels: np.ndarray
    log: list
    seconds: float
    epoch_seconds: list = field(default_factory=list)
    metrics: Optional[dict] = None


def input_matrix(bundle: DatasetBundle, dtype=torch.float32):
    return torch.as_tensor(nonnegative_features(bundle.features), dtype=dtype)


def initial_graph(bundle: DatasetBundle, k=3) -> SparseAdjacency:
    edges = bundle.graph if bundle.graph is not None else build_knn_graph(bundle.features, k)
    return edges.to_adjacency()


def _seed_everything(seed):
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))


def pretrain_dae(bundle: DatasetBundle, config: TrainConfig, history: Optional[list] = None) -> DAE:
    """Fit the auto-encoder on reconstruction alone (shuffled mini-batches)."""
    _seed_everything(config.seed)
    dtype = config.torch_dtype
    x = input_matrix(bundle, dtype)
    dae = DAE(bundle.d, config.dims).to(dtype)
    zero_biases(dae)
    opt = torch.optim.Adam(dae.parameters(), lr=config.pretrain_lr)
    gen = torch.Generator().manual_seed(config.seed)
    n = x.shape[0]
    batch = config.pretrain_batch_size if config.pretrain_batch_size > 0 else n
    for epoch in range(1, config.pretrain_epochs + 1):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch):
            xb = x[order[start : start + batch]]
            _, x_hat = dae(xb)
            loss = reconstruction_loss(xb, x_hat)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"pretraining loss is {float(loss)} at epoch {epoch}", epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
        if history is not None:
            with torch.no_grad():
                history.append(float(reconstruction_loss(x, dae(x)[1])))
    return dae


def build_model(bundle: DatasetBundle, config: TrainConfig) -> EGRCNet:
    return EGRCNet(
        bundle.n,
        bundle.d,
        bundle.num_clusters,
        variant=config.variant,
        dims=config.dims,
        e0_hidden=config.e0_hidden,
        tau=config.tau,
        rho=config.rho,
        seed=config.seed,
    ).to(config.torch_dtype)


def _check_simplex(name, m, epoch, tol=1e-6):
    err = float((m.detach().sum(1) - 1).abs().max())
    if not err <= tol:
        raise TrainingDivergedError(f"{name} rows leave the simplex (max error {err:.3g}) at epoch {epoch}", epoch)


def train(bundle: DatasetBundle, dae_state, config: TrainConfig, on_epoch=None) -> TrainResult:
    """Joint training loop.

    Per epoch: forward pass, refinement of the working graph when
    ``epoch % refine_interval == 0`` (epochs are 1-based; the refined graph is
    first used by the next epoch), target distribution, loss, one optimizer
    step. ``dae_state`` is a pretrained :class:`DAE` or its state dict.
    """
    _seed_everything(config.seed)
    dtype = config.torch_dtype
    x = input_matrix(bundle, dtype)
    model = build_model(bundle, config)
    if isinstance(dae_state, DAE):
        dae_state = dae_state.state_dict()
    model.dae.load_state_dict(dae_state)
    graph = WorkingGraph(initial_graph(bundle, config.knn_k))
    with torch.no_grad():
        h = model.dae.encode(x)[-1]
    if not torch.isfinite(h).all():
        raise TrainingDivergedError("pretrained latent is not finite", 0)
    model.head.init_kmeans(h.double().numpy(), seed=config.seed, n_init=config.kmeans_n_init)

    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rows, epoch_seconds = [], []
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        out = model(x, graph)
        refined = False
        if config.graph_refinement and epoch % config.refine_interval == 0:
            stats = graph.refine(out.z_a.detach().double().numpy(), model.refiner)
            log.debug("epoch %d refinement: %s", epoch, stats)
            refined = True
        try:
            p = target_p(out.z_a)
        except ColumnCollapseError as exc:
            raise ColumnCollapseError(f"{exc} at epoch {epoch}", epoch) from None
        _check_simplex("Z_a", out.z_a, epoch)
        _check_simplex("Q", out.q, epoch)
        terms = total_loss(x, out.x_hat, out.q, p, out.z_a, config.lambdas, symmetric=config.jeffreys)
        if not torch.isfinite(terms.total):
            raise TrainingDivergedError(f"loss is {terms.total.item()} at epoch {epoch}", epoch)
        opt.zero_grad()
        terms.total.backward()
        opt.step()
        model.after_step()
        epoch_seconds.append(time.perf_counter() - t0)

        row = {"epoch": epoch, **terms.as_floats()}
        if config.variant == "scalable_iappnp":
            row["theta"] = model.theta
        if bundle.labels is not None:
            m = evaluate(bundle.labels, hard_assign(out.z_a), config.nmi_average)
            row.update(acc=m["acc"], nmi=m["nmi"], ari=m["ari"])
        row["refined"] = refined
        rows.append(row)
        if on_epoch is not None:
            on_epoch(row)

    state = ModelState(model, graph)
    z_a, _ = state.embed(x)
    labels = hard_assign(z_a)
    metrics = evaluate(bundle.labels, labels, config.nmi_average) if bundle.labels is not None else None
    return TrainResult(state, labels, rows, time.perf_counter() - start, epoch_seconds, metrics)


# checkpoints ------------------------------------------------------------------
#
# Layout: magic line, one JSON header line, then the raw little-endian bytes
# of every array in header order. The header lists name, dtype, shape and
# byte length per array plus free-form metadata.


def _write_arrays(path, meta, arrays):
    entries, blobs = [], []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str.lstrip("<>|="), "shape": list(arr.shape), "nbytes": len(data)})
        blobs.append(data)
    header = {"version": CHECKPOINT_VERSION, "package": __version__, "meta": meta, "arrays": entries}
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)


def _read_arrays(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointVersionError(f"{path}: not an egrcnet checkpoint")
    body = raw[len(CHECKPOINT_MAGIC) :]
    nl = body.find(b"\n")
    if nl < 0:
        raise CheckpointVersionError(f"{path}: truncated header")
    try:
        header = json.loads(body[:nl])
    except ValueError:
        raise CheckpointVersionError(f"{path}: corrupt header") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {header.get('version')}, expected {CHECKPOINT_VERSION}")
    data = body[nl + 1 :]
    expected = sum(e["nbytes"] for e in header["arrays"])
    if len(data) != expected:
        raise CheckpointVersionError(f"{path}: payload has {len(data)} bytes, header says {expected}")
    arrays, off = {}, 0
    for e in header["arrays"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype=np.dtype("<" + e["dtype"]), count=count, offset=off)
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
        off += e["nbytes"]
    return header["meta"], arrays


def _tensor_arrays(module, prefix=""):
    return [(prefix + k, v.detach().cpu().numpy()) for k, v in module.state_dict().items()]


def save_dae(dae: DAE, path, config: Optional[TrainConfig] = None):
    meta = {"kind": "dae", "n_input": dae.n_input, "dims": list(dae.dims)}
    if config is not None:
        meta["config"] = config.to_dict()
    _write_arrays(path, meta, _tensor_arrays(dae))


def load_dae(path) -> DAE:
    meta, arrays = _read_arrays(path)
    if meta.get("kind") != "dae":
        raise CheckpointVersionError(f"{path}: not a DAE checkpoint")
    dae = DAE(meta["n_input"], meta["dims"])
    dtype = torch.from_numpy(next(iter(arrays.values()))).dtype
    dae.to(dtype).load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    return dae


def _graph_arrays(g: SparseAdjacency, prefix):
    return [(prefix + ".rows", g.rows), (prefix + ".cols", g.cols), (prefix + ".weights", g.weights)]


def save_checkpoint(state: ModelState, path, config: Optional[TrainConfig] = None):
    meta = {
        "kind": "model",
        "hparams": state.model.hparams,
        "refinements": state.graph.refinements,
        "has_induced": state.graph.induced is not None,
        "base_state": state.graph.base.norm_state.value,
    }
    if config is not None:
        meta["config"] = config.to_dict()
    arrays = [("model." + k, v) for k, v in _tensor_arrays(state.model)]
    arrays += _graph_arrays(state.graph.base, "graph.base")
    if state.graph.induced is not None:
        arrays += _graph_arrays(state.graph.induced, "graph.induced")
    _write_arrays(path, meta, arrays)


def load_checkpoint(path) -> ModelState:
    meta, arrays = _read_arrays(path)
    if meta.get("kind") != "model":
        raise CheckpointVersionError(f"{path}: not a model checkpoint")
    model = EGRCNet(**meta["hparams"])
    sd = {k[len("model.") :]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("model.")}
    model.to(next(iter(sd.values())).dtype)
    model.load_state_dict(sd)
    n = meta["hparams"]["n_nodes"]

    def graph(prefix, state):
        return SparseAdjacency(n, arrays[prefix + ".rows"], arrays[prefix + ".cols"], arrays[prefix + ".weights"], state)

    base = graph("graph.base", meta["base_state"])
    induced = graph("graph.induced", "row_stochastic") if meta["has_induced"] else None
    wg = WorkingGraph(base, induced)
    wg.refinements = meta["refinements"]
    return ModelState(model, wg)
