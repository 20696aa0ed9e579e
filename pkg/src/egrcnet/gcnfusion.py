"""GCN branch with per-layer DAE/GCN fusion and multi-scale aggregation."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ParameterError, ShapeError
from .sparsegraph import NormState, as_operator

NEGATIVE_SLOPE = 0.2


def lrelu(x, slope=NEGATIVE_SLOPE):
    return F.leaky_relu(x, slope)


def fusion_weights(scores, slope=NEGATIVE_SLOPE):
    """Per-node weight vector: l2-normalized softmax of leaky-relu scores."""
    return F.normalize(torch.softmax(lrelu(scores, slope), dim=1), p=2, dim=1)


def _require_state(a, state):
    if a.norm_state != state:
        raise ParameterError(f"expected a {state.value} graph, got {a.norm_state.value}")


def gcn_layer(z_prev, a_norm, weight, slope=NEGATIVE_SLOPE):
    a = as_operator(a_norm, z_prev.dtype)
    _require_state(a, NormState.SYM_RENORM)
    if z_prev.shape[1] != weight.shape[0] or z_prev.shape[0] != a.n:
        raise ShapeError(f"gcn_layer: input {tuple(z_prev.shape)}, weight {tuple(weight.shape)}, n={a.n}")
    return lrelu(a.mm(z_prev @ weight), slope)


def layer_fuse(h, z, w_f, slope=NEGATIVE_SLOPE):
    """Merge the DAE and GCN outputs of one layer; returns ``(m1, m2, fused)``."""
    if h.shape != z.shape:
        raise ShapeError(f"layer_fuse: {tuple(h.shape)} vs {tuple(z.shape)}")
    m = fusion_weights(torch.cat([h, z], dim=1) @ w_f, slope)
    m1, m2 = m[:, :1], m[:, 1:2]
    return m1, m2, m1 * h + m2 * z


def multiscale_fuse(scales, w_s, slope=NEGATIVE_SLOPE):
    """Weighted concatenation of feature blocks of differing widths."""
    cat = torch.cat(list(scales), dim=1)
    if cat.shape[1] != w_s.shape[0] or w_s.shape[1] != len(scales):
        raise ShapeError(f"multiscale_fuse: {len(scales)} scales of total width {cat.shape[1]}, W^S {tuple(w_s.shape)}")
    u = fusion_weights(cat @ w_s, slope)
    return torch.cat([u[:, i : i + 1] * s for i, s in enumerate(scales)], dim=1)


def final_embed(z_cat, a_norm, w_z):
    a = as_operator(a_norm, z_cat.dtype)
    _require_state(a, NormState.SYM_RENORM)
    if z_cat.shape[1] != w_z.shape[0]:
        raise ShapeError(f"final_embed: width {z_cat.shape[1]} vs W^Z {tuple(w_z.shape)}")
    return torch.softmax(a.mm(z_cat @ w_z), dim=1)


class GcnFusion(nn.Module):
    """Stacked GCN layers interleaved with DAE fusion, ending in a kappa-way softmax.

    Scales fed to the multi-scale fusion are the GCN outputs ``Z_1..Z_l``
    followed by the DAE latent ``H_l``.
    """

    def __init__(self, n_input, dims, n_clusters, slope=NEGATIVE_SLOPE):
        super().__init__()
        self.slope = slope
        dims = tuple(dims)
        widths = (n_input,) + dims
        self.weights = nn.ParameterList(
            nn.Parameter(torch.empty(a, b)) for a, b in zip(widths[:-1], widths[1:])
        )
        # Z'_l is never consumed, so only layers 1..l-1 get a fusion MLP
        self.layer_fusion = nn.ParameterList(nn.Parameter(torch.empty(2 * d, 2)) for d in dims[:-1])
        total = sum(dims) + dims[-1]
        self.scale_fusion = nn.Parameter(torch.empty(total, len(dims) + 1))
        self.final = nn.Parameter(torch.empty(total, n_clusters))
        for p in self.parameters():
            nn.init.xavier_uniform_(p)

    def forward(self, x, hs, a_norm):
        a = as_operator(a_norm, x.dtype)
        zs = []
        z_in = x
        for i, w in enumerate(self.weights):
            z = gcn_layer(z_in, a, w, self.slope)
            zs.append(z)
            if i < len(self.layer_fusion):
                _, _, z_in = layer_fuse(hs[i], z, self.layer_fusion[i], self.slope)
        z_cat = multiscale_fuse(zs + [hs[-1]], self.scale_fusion, self.slope)
        return final_embed(z_cat, a, self.final)
