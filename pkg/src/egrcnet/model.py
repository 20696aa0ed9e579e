"""The full network: DAE + (GCN fusion | IAPPNP) + graph refiner + cluster head."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .dae import DAE, DEFAULT_DIMS
from .gcnfusion import GcnFusion
from .iappnp import IAPPNP
from .objective import ClusterHead
from .refine import Refiner, WorkingGraph

VARIANTS = ("full_gcn", "scalable_iappnp")


@dataclass
class Forward:
    hs: list
    x_hat: torch.Tensor
    z_a: torch.Tensor
    q: torch.Tensor


def zero_biases(module):
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.xavier_uniform_(m.weight)
            nn.init.zeros_(m.bias)


class EGRCNet(nn.Module):
    def __init__(
        self,
        n_nodes,
        n_input,
        n_clusters,
        variant="full_gcn",
        dims=DEFAULT_DIMS,
        e0_hidden=(),
        tau=1,
        rho=None,
        seed=0,
    ):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        self.hparams = dict(
            n_nodes=int(n_nodes),
            n_input=int(n_input),
            n_clusters=int(n_clusters),
            variant=variant,
            dims=list(dims),
            e0_hidden=list(e0_hidden),
            tau=int(tau),
            rho=rho,
            seed=int(seed),
        )
        gen = torch.Generator().manual_seed(int(seed))
        with torch.random.fork_rng():
            torch.manual_seed(int(seed))
            self.dae = DAE(n_input, dims)
            zero_biases(self.dae)
            if variant == "full_gcn":
                self.gcn = GcnFusion(n_input, dims, n_clusters)
            else:
                self.iappnp = IAPPNP(n_input, n_clusters, e0_hidden, tau, rho, generator=gen)
                zero_biases(self.iappnp)
            self.refiner = Refiner(n_nodes)
            self.head = ClusterHead(n_clusters, dims[-1])

    @property
    def theta(self):
        return float(self.iappnp.theta.detach()) if self.variant == "scalable_iappnp" else None

    def operator(self, graph: WorkingGraph, refine=True):
        kind = "sym" if self.variant == "full_gcn" else "row"
        dtype = next(self.parameters()).dtype
        return graph.operator(kind, self.refiner if refine else None, dtype)

    def forward(self, x, graph: WorkingGraph, refine=True):
        hs, x_hat = self.dae(x)
        op = self.operator(graph, refine)
        if self.variant == "full_gcn":
            z_a = self.gcn(x, hs, op)
        else:
            z_a = self.iappnp(x, op)
        return Forward(hs, x_hat, z_a, self.head(hs[-1]))

    def after_step(self):
        if self.variant == "scalable_iappnp":
            self.iappnp.clamp_()


def count_parameters(model, trainable_only=True):
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)
