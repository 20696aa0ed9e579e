"""Cluster distributions and the divergence objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .dae import reconstruction_loss
from .errors import ColumnCollapseError, DomainError, ParameterError, ShapeError

EPS = 1e-12


class ClusterHead(nn.Module):
    """Trainable centroids for the Student's-t soft assignment."""

    def __init__(self, n_clusters, n_latent, alpha=1.0):
        super().__init__()
        self.alpha = float(alpha)
        self.centroids = nn.Parameter(torch.zeros(n_clusters, n_latent))

    @torch.no_grad()
    def init_kmeans(self, h, seed=0, n_init=20):
        from sklearn.cluster import KMeans

        km = KMeans(self.centroids.shape[0], n_init=n_init, random_state=seed)
        km.fit(np.asarray(h, dtype=np.float64))
        self.centroids.copy_(torch.as_tensor(km.cluster_centers_, dtype=self.centroids.dtype))
        return km.labels_

    def forward(self, h):
        return soft_assign_q(h, self.centroids, self.alpha)


def soft_assign_q(h, centroids, alpha=1.0):
    if h.shape[1] != centroids.shape[1]:
        raise ShapeError(f"latent width {h.shape[1]} vs centroid width {centroids.shape[1]}")
    d2 = ((h.unsqueeze(1) - centroids.unsqueeze(0)) ** 2).sum(2)
    q = (1.0 + d2 / alpha) ** (-(alpha + 1.0) / 2.0)
    return q / q.sum(1, keepdim=True)


def target_p(z_a):
    """Sharpened, frequency-normalized targets; computed without gradient."""
    with torch.no_grad():
        freq = z_a.sum(0)
        if (freq <= 0).any():
            j = int(torch.nonzero(freq <= 0)[0])
            raise ColumnCollapseError(f"cluster column {j} has zero total mass")
        w = z_a**2 / freq
        return w / w.sum(1, keepdim=True)


def _check_domain(*mats):
    for m in mats:
        if (m < 0).any():
            raise DomainError("distributions must be non-negative")


def kl(a, b, reduction="mean"):
    """``sum a log(a/b)`` over entries, averaged over rows by default."""
    _check_domain(a, b)
    a_ = a.clamp_min(EPS)
    total = (a_ * (a_.log() - b.clamp_min(EPS).log())).sum()
    return total / a.shape[0] if reduction == "mean" else total


def jeffreys(a, b, reduction="mean"):
    """Symmetric KL divergence ``KL(a||b) + KL(b||a)``."""
    if a.shape != b.shape:
        raise ShapeError(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    _check_domain(a, b)
    a_, b_ = a.clamp_min(EPS), b.clamp_min(EPS)
    total = ((a_ - b_) * (a_.log() - b_.log())).sum()
    return total / a.shape[0] if reduction == "mean" else total


@dataclass
class LossTerms:
    total: torch.Tensor
    rec: torch.Tensor
    pz: torch.Tensor
    pq: torch.Tensor
    zq: torch.Tensor

    def as_floats(self):
        return {f"loss_{k}": float(getattr(self, k).detach()) for k in ("total", "rec", "pz", "pq", "zq")}


def total_loss(x, x_hat, q, p, z_a, lambdas=(10.0, 1.0, 0.1), symmetric=True, reduction="mean"):
    """Reconstruction plus the three weighted pairwise divergences.

    With ``symmetric=False`` the divergences become the one-sided
    ``KL(P||Z) + KL(P||Q) + KL(Z||Q)`` used for ablations.
    """
    l1, l2, l3 = lambdas
    if min(lambdas) <= 0:
        raise ParameterError(f"trade-off weights must be positive, got {lambdas}")
    p = p.detach()
    rec = reconstruction_loss(x, x_hat)
    if symmetric:
        pz, pq, zq = jeffreys(p, z_a, reduction), jeffreys(p, q, reduction), jeffreys(z_a, q, reduction)
    else:
        pz, pq, zq = kl(p, z_a, reduction), kl(p, q, reduction), kl(z_a, q, reduction)
    total = rec + l1 * pz + l2 * pq + l3 * zq
    return LossTerms(total, rec, pz, pq, zq)


def hard_assign(z_a):
    z = z_a.detach().cpu().numpy() if torch.is_tensor(z_a) else np.asarray(z_a)
    return z.argmax(axis=1).astype(np.int64)
