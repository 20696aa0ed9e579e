"""Vanilla deep auto-encoder: the attribute-side branch."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError

DEFAULT_DIMS = (500, 500, 2000, 10)


class DAE(nn.Module):
    """Encoder ``d -> dims[0] -> ... -> dims[-1]`` and its mirrored decoder.

    Every layer, including the latent and the reconstruction, is followed by
    ReLU.
    """

    def __init__(self, n_input, dims=DEFAULT_DIMS):
        super().__init__()
        self.n_input = int(n_input)
        self.dims = tuple(int(d) for d in dims)
        widths = (self.n_input,) + self.dims
        self.encoder = nn.ModuleList(nn.Linear(a, b) for a, b in zip(widths[:-1], widths[1:]))
        back = widths[::-1]
        self.decoder = nn.ModuleList(nn.Linear(a, b) for a, b in zip(back[:-1], back[1:]))

    def encode(self, x):
        if x.shape[-1] != self.n_input:
            raise ShapeError(f"DAE expects {self.n_input} input columns, got {x.shape[-1]}")
        hs = []
        h = x
        for layer in self.encoder:
            h = F.relu(layer(h))
            hs.append(h)
        return hs

    def decode(self, h):
        if h.shape[-1] != self.dims[-1]:
            raise ShapeError(f"decoder expects width {self.dims[-1]}, got {h.shape[-1]}")
        for layer in self.decoder:
            h = F.relu(layer(h))
        return h

    def forward(self, x):
        hs = self.encode(x)
        return hs, self.decode(hs[-1])


def encode(x, params: DAE):
    return params.encode(x)


def decode(h, params: DAE):
    return params.decode(h)


def reconstruction_loss(x, x_hat):
    """Squared Frobenius error averaged over nodes."""
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).sum() / x.shape[0]
