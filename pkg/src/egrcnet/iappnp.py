"""Personalized-PageRank propagation with a learned teleport probability.

``propagate_learned`` mixes the prediction and the propagated iterate as
``softmax((1 - theta) E0 + theta A E_prev)``; ``propagate_fixed`` is the usual
APPNP step ``softmax((1 - rho) A E_prev + rho E0)``. Both start from
``E_prev = E0``.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ParameterError, ShapeError
from .sparsegraph import as_operator


def _check(tau):
    if tau < 1:
        raise ParameterError(f"tau must be >= 1, got {tau}")


def propagate_learned(e0, a, theta, tau=1):
    _check(tau)
    op = as_operator(a, e0.dtype)
    e = e0
    for _ in range(tau):
        e = torch.softmax((1 - theta) * e0 + theta * op.mm(e), dim=1)
    return e


def propagate_fixed(e0, a, rho, tau=1):
    _check(tau)
    op = as_operator(a, e0.dtype)
    e = e0
    for _ in range(tau):
        e = torch.softmax((1 - rho) * op.mm(e) + rho * e0, dim=1)
    return e


class IAPPNP(nn.Module):
    """Prediction MLP ``X -> E0`` plus a trainable teleport scalar.

    ``hidden=()`` gives the single linear map used by default; hidden layers
    use ReLU. ``theta`` is clamped to [0, 1] by :meth:`clamp_`, which the
    trainer calls after each optimizer step. With ``rho`` set the teleport is
    fixed and the baseline recursion is used instead.
    """

    def __init__(self, n_input, n_clusters, hidden=(), tau=1, rho=None, generator=None):
        super().__init__()
        widths = (int(n_input),) + tuple(int(h) for h in hidden) + (int(n_clusters),)
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(widths[:-1], widths[1:]))
        self.tau = int(tau)
        self.rho = rho
        init = torch.rand((), generator=generator)
        self.theta = nn.Parameter(init.clone())
        if rho is not None:
            self.theta.requires_grad_(False)

    def predict_e0(self, x):
        if x.shape[1] != self.layers[0].in_features:
            raise ShapeError(f"expected {self.layers[0].in_features} input columns, got {x.shape[1]}")
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = F.relu(h)
        return h

    def forward(self, x, a_row):
        e0 = self.predict_e0(x)
        if self.rho is not None:
            return propagate_fixed(e0, a_row, self.rho, self.tau)
        return propagate_learned(e0, a_row, self.theta, self.tau)

    @torch.no_grad()
    def clamp_(self):
        self.theta.clamp_(0.0, 1.0)


def predict_e0(x, params: IAPPNP):
    return params.predict_e0(x)
