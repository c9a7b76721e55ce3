import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smallseg.metrics import aggregate, dice, directed_hausdorff, dose_stats, hausdorff, organ_stats
from smallseg.volume import Volume


def dice_oracle(a, b):
    inter = sum(1 for x, y in zip(a.ravel(), b.ravel()) if x and y)
    total = int(a.sum()) + int(b.sum())
    return 1.0 if total == 0 else 2 * inter / total


def hd_oracle(a, b, spacing):
    pa, pb = np.argwhere(a) * spacing, np.argwhere(b) * spacing

    def directed(p, q):
        return max(min(math.dist(x, y) for y in q) for x in p)

    return max(directed(pa, pb), directed(pb, pa))


def random_pair(rng, max_side=6):
    shape = tuple(rng.integers(1, max_side + 1, size=3))
    while True:
        a = rng.random(shape) < rng.uniform(0.05, 0.6)
        b = rng.random(shape) < rng.uniform(0.05, 0.6)
        if a.any() and b.any():
            return a, b


def test_dice_examples():
    a = np.zeros((4, 4, 4), bool)
    assert dice(a, a) == 1.0
    a[0, 0, :2] = True
    b = np.zeros_like(a)
    b[0, 0, 1:3] = True
    assert dice(a, b) == 0.5
    assert dice(a, np.zeros_like(a)) == 0.0
    with pytest.raises(ValueError):
        dice(a, np.zeros((4, 4, 3), bool))


@pytest.mark.parametrize("method", ["brute", "edt"])
def test_random_pairs_match_oracles(method):
    rng = np.random.default_rng(11)
    for _ in range(60):
        a, b = random_pair(rng)
        spacing = tuple(rng.uniform(0.5, 2.0, size=3))
        assert dice(a, b) == dice_oracle(a, b)
        assert abs(hausdorff(a, b, spacing, method) - hd_oracle(a, b, np.array(spacing))) <= 1e-12


def test_hausdorff_examples():
    a = np.zeros((5, 5, 5), bool)
    b = np.zeros_like(a)
    a[0, 0, 0] = True
    b[3, 4, 0] = True
    assert hausdorff(a, b) == 5.0
    assert hausdorff(a, b, (2.0, 1.0, 1.0)) == pytest.approx(math.hypot(6, 4))
    assert hausdorff(a, a) == 0.0
    # directed distance is asymmetric
    b[0, 0, 0] = True
    assert directed_hausdorff(a, b) == 0.0 and directed_hausdorff(b, a) == 5.0


def test_hausdorff_empty_and_bad_method():
    a = np.ones((2, 2, 2), bool)
    with pytest.raises(ValueError):
        hausdorff(a, np.zeros_like(a))
    with pytest.raises(ValueError):
        hausdorff(a, a, method="fast")


@settings(max_examples=40, deadline=None)
@given(arrays(bool, (5, 4, 6)), arrays(bool, (5, 4, 6)))
def test_metric_properties(a, b):
    assert dice(a, b) == dice(b, a)
    assert 0.0 <= dice(a, b) <= 1.0
    if a.any() and b.any():
        h = hausdorff(a, b)
        assert h == hausdorff(b, a) == hausdorff(a, b, method="edt")
        assert (h == 0.0) == bool(np.array_equal(a, b))


def test_dose_stats_against_enumeration():
    rng = np.random.default_rng(5)
    dose = rng.uniform(0, 60, size=(6, 5, 4))
    mask = rng.random((6, 5, 4)) < 0.3
    mask[0, 0, 0] = True
    values = [dose[idx] for idx in np.ndindex(dose.shape) if mask[idx]]
    mx, mean = dose_stats(Volume(dose), mask)
    assert mx == max(values)
    assert mean == math.fsum(values) / len(values)
    with pytest.raises(ValueError):
        dose_stats(dose, np.zeros_like(mask))


def test_aggregate_uses_sample_std():
    mean, std = aggregate([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5 and std == pytest.approx(np.std([1, 2, 3, 4], ddof=1))
    assert aggregate([0.7]) == (0.7, None)
    with pytest.raises(ValueError):
        aggregate([])


def test_organ_stats_skips_missing_hd():
    s = organ_stats(4, [0.5, 0.7, 0.0], [2.0, 4.0, None])
    assert s.n_cases == 3 and s.n_hd == 2
    assert s.hd_mean_mm == 3.0 and s.dice_mean == pytest.approx(0.4)
    s = organ_stats(4, [0.0], [None])
    assert s.hd_mean_mm is None and s.dice_std is None
