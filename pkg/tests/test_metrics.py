import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egrcnet.errors import ShapeError
from egrcnet.metrics import acc, ari, contingency, evaluate, homogeneity_completeness, nmi


def acc_exhaustive(truth, pred, k):
    best = 0
    for perm in itertools.permutations(range(k)):
        best = max(best, sum(perm[p] == t for t, p in zip(truth, pred)))
    return best / len(truth)


def entropy(counts):
    n = sum(counts)
    return -sum(c / n * math.log(c / n) for c in counts if c)


def table(truth, pred):
    m = {}
    for a, b in zip(truth, pred):
        m[a, b] = m.get((a, b), 0) + 1
    return m


def mutual_info(truth, pred):
    n = len(truth)
    ct = table(truth, pred)
    ta = {a: truth.count(a) for a in set(truth)}
    pb = {b: pred.count(b) for b in set(pred)}
    return sum(c / n * math.log(c * n / (ta[a] * pb[b])) for (a, b), c in ct.items())


def nmi_oracle(truth, pred, average="geometric"):
    ht = entropy([truth.count(a) for a in set(truth)])
    hp = entropy([pred.count(b) for b in set(pred)])
    if ht == 0 and hp == 0:
        return 1.0
    denom = math.sqrt(ht * hp) if average == "geometric" else (ht + hp) / 2
    return 0.0 if denom == 0 else mutual_info(truth, pred) / denom


def ari_oracle(truth, pred):
    n = len(truth)
    pairs = list(itertools.combinations(range(n), 2))
    both = sum(truth[i] == truth[j] and pred[i] == pred[j] for i, j in pairs)
    same_t = sum(truth[i] == truth[j] for i, j in pairs)
    same_p = sum(pred[i] == pred[j] for i, j in pairs)
    total = len(pairs)
    expected = same_t * same_p / total
    maximum = (same_t + same_p) / 2
    if maximum == expected:
        return None
    return (both - expected) / (maximum - expected)


def homogeneity_oracle(truth, pred):
    ht = entropy([truth.count(a) for a in set(truth)])
    hp = entropy([pred.count(b) for b in set(pred)])
    mi = mutual_info(truth, pred)
    return (1.0 if ht == 0 else mi / ht), (1.0 if hp == 0 else mi / hp)


def test_acc_examples():
    y = [0, 0, 1, 1, 2, 2]
    assert acc(y, y) == 1.0
    assert acc(y, [2, 2, 0, 0, 1, 1]) == 1.0
    pred = [0, 1, 1, 2, 2, 0]
    assert acc(y, pred) == pytest.approx(acc_exhaustive(y, pred, 3))
    with pytest.raises(ShapeError):
        acc([0, 1], [0])


def test_acc_hungarian_matches_exhaustive():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(k, 40))
        truth = rng.integers(0, k, n).tolist()
        pred = rng.integers(0, k, n).tolist()
        assert acc(truth, pred) == pytest.approx(acc_exhaustive(truth, pred, k), abs=1e-15)


def test_nmi_examples():
    y = [0, 0, 1, 1, 2]
    assert nmi(y, y) == pytest.approx(1.0)
    assert nmi(y, [0] * 5) == pytest.approx(0.0)
    truth, pred = [0, 0, 1, 1, 1, 2], [1, 1, 0, 0, 2, 2]
    assert nmi(truth, pred) == pytest.approx(nmi_oracle(truth, pred), abs=1e-12)
    assert nmi(truth, pred, "arithmetic") == pytest.approx(nmi_oracle(truth, pred, "arithmetic"), abs=1e-12)


def test_ari_examples():
    y = [0, 1, 1, 2, 2, 2]
    assert ari(y, y) == pytest.approx(1.0)
    pred = [0, 0, 1, 1, 2, 2]
    assert ari(y, pred) == pytest.approx(ari_oracle(y, pred), abs=1e-12)


def test_ari_random_labelings_center_on_zero():
    rng = np.random.default_rng(11)
    vals = [ari(rng.integers(0, 3, 60), rng.integers(0, 3, 60)) for _ in range(1000)]
    assert abs(np.mean(vals)) < 0.02


def test_homogeneity_examples():
    truth, pred = [0, 0, 0, 1, 1, 1], [0, 0, 1, 2, 2, 3]
    h, _ = homogeneity_completeness(truth, pred)
    assert h == pytest.approx(1.0)
    assert homogeneity_completeness(truth, truth) == pytest.approx((1.0, 1.0))
    truth, pred = [0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0]
    assert homogeneity_completeness(truth, pred) == pytest.approx(homogeneity_oracle(truth, pred), abs=1e-12)


def test_contingency():
    np.testing.assert_array_equal(contingency([5, 5, 7], [1, 2, 2]), [[1, 1], [0, 1]])


labelings = st.integers(1, 6).flatmap(
    lambda k: st.integers(2, 25).flatmap(
        lambda n: st.tuples(st.lists(st.integers(0, k - 1), min_size=n, max_size=n),
                            st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
    )
)


@settings(max_examples=80, deadline=None)
@given(pair=labelings)
def test_scores_match_oracles(pair):
    truth, pred = pair
    assert nmi(truth, pred) == pytest.approx(nmi_oracle(truth, pred), abs=1e-10)
    expected = ari_oracle(truth, pred)
    if expected is not None:
        assert ari(truth, pred) == pytest.approx(expected, abs=1e-10)
    assert homogeneity_completeness(truth, pred) == pytest.approx(homogeneity_oracle(truth, pred), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(pair=labelings, seed=st.integers(0, 1000))
def test_relabel_invariance(pair, seed):
    truth, pred = np.array(pair[0]), np.array(pair[1])
    rng = np.random.default_rng(seed)
    pt, pp = rng.permutation(10), rng.permutation(10)
    base = evaluate(truth, pred)
    moved = evaluate(pt[truth], pp[pred])
    for key in base:
        assert moved[key] == pytest.approx(base[key], abs=1e-12)
    assert acc(truth, truth) == 1.0
