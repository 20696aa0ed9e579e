"""Clustering evaluation scores.

All scores take ``(truth, predicted)`` integer label vectors. Accuracy uses
the optimal one-to-one cluster/class matching; the entropy-based scores use
natural logarithms (their ratios do not depend on the base).
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn import metrics as skm

from .errors import ShapeError


def _pair(truth, predicted):
    t = np.asarray(truth, dtype=np.int64).ravel()
    p = np.asarray(predicted, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise ShapeError(f"label vectors differ in length: {t.size} vs {p.size}")
    if t.size and (t.min() < 0 or p.min() < 0):
        raise ValueError("labels must be non-negative")
    return t, p


def contingency(truth, predicted):
    t, p = _pair(truth, predicted)
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    m = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(m, (ti, pi), 1)
    return m


def acc(truth, predicted):
    t, p = _pair(truth, predicted)
    if t.size == 0:
        return 1.0
    m = contingency(t, p)
    r, c = linear_sum_assignment(-m)
    return float(m[r, c].sum()) / t.size


def nmi(truth, predicted, average="geometric"):
    t, p = _pair(truth, predicted)
    return float(skm.normalized_mutual_info_score(t, p, average_method=average))


def ari(truth, predicted):
    t, p = _pair(truth, predicted)
    return float(skm.adjusted_rand_score(t, p))


def homogeneity_completeness(truth, predicted):
    t, p = _pair(truth, predicted)
    h, c, _ = skm.homogeneity_completeness_v_measure(t, p)
    return float(h), float(c)


def evaluate(truth, predicted, nmi_average="geometric"):
    h, c = homogeneity_completeness(truth, predicted)
    return {
        "acc": acc(truth, predicted),
        "nmi": nmi(truth, predicted, nmi_average),
        "ari": ari(truth, predicted),
        "homogeneity": h,
        "completeness": c,
    }
