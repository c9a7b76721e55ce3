import csv
import io
import json

import numpy as np
import pytest

from smallseg.nn.network import NetworkConfig
from smallseg.phantom import PhantomParams, generate_dataset
from smallseg.pipeline.evaluation import evaluate, evaluate_cases, score_masks
from smallseg.pipeline.sweep import SweepGrid, evaluate_probabilities, select_optima, sweep
from smallseg.pipeline.training import TrainConfig
from smallseg.volume import LabelMap


def test_grid_defaults_and_validation():
    g = SweepGrid()
    assert g.windows == (40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0)
    assert g.thresholds == (0.75, 0.80, 0.85, 0.90, 0.95)
    for bad in [dict(windows=()), dict(thresholds=(1.0,)), dict(windows=(0,)), dict(windows=(40, 40))]:
        with pytest.raises(ValueError):
            SweepGrid(**bad)


def test_select_optima_ties_and_missing_hd():
    g = SweepGrid(windows=(1, 2), thresholds=(0.5, 0.6))
    dice = [[0.2, 0.7], [0.7, 0.1]]
    hd = [[None, 3.0], [2.0, None]]
    assert select_optima(g, dice, hd) == ((1.0, 0.6), (2.0, 0.5))
    assert select_optima(g, dice, [[None, None], [None, None]])[1] is None


def test_score_and_evaluate():
    a = np.zeros((4, 4, 4), dtype=np.uint8)
    a[1:3, 1:3, 1:3] = 4
    a[0, 0, 0] = 2
    truth = LabelMap(a)
    per = evaluate(truth, truth, (2, 4))
    assert per == {2: (1.0, 0.0), 4: (1.0, 0.0)}
    assert score_masks(np.zeros((2, 2, 2), bool), np.ones((2, 2, 2), bool), (1, 1, 1)) == (0.0, None)
    report = evaluate_cases([truth, truth], [truth, truth], (2, 4))
    assert report.stats(4).dice_mean == 1.0 and report.stats(4).dice_std == 0.0
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0][0] == "organ" and len(rows) == 3
    assert json.loads(report.to_json())["organs"][1]["name"] == "Left lens of the eye"


def test_evaluate_probabilities_matches_direct_scoring():
    rng = np.random.default_rng(0)
    truth = LabelMap(rng.choice([0, 2, 4], size=(6, 6, 6)).astype(np.uint8))
    probs = rng.dirichlet(np.ones(3), size=(6, 6, 6)).transpose(3, 0, 1, 2)
    d, h = evaluate_probabilities([probs], [truth], (2, 4), (0.4, 0.6))
    classes = probs.argmax(0)
    keep = probs.max(0) > 0.4
    pred = np.where(keep, classes, 0)
    direct = score_masks(pred == 2, truth.data == 4, truth.spacing)
    assert d[4][0] == direct[0]


@pytest.fixture(scope="module")
def tiny_cases():
    params = PhantomParams.eye_region(dims=(16, 16, 16), eye_radius_mm=6.0, lens_semi_axes_mm=(2.5, 1.5, 2.5),
                                      lens_depth_mm=3.0)
    return generate_dataset(4, params, 3)


def _run(cases, grid):
    cfg = TrainConfig(epochs=1, steps_per_epoch=2, lr=0.05, seed=5)
    net = NetworkConfig(depth=1, base_channels=2, num_classes=3, dropout=0.5, dtype="float32", seed=2)
    return sweep(cases[:3], cases[3:], grid, cfg, net, (2, 4), target=4)


def test_sweep_single_cell(tiny_cases):
    rep = _run(tiny_cases, SweepGrid(windows=(80,), thresholds=(0.8,)))
    assert len(rep.dice[4]) == 1 and len(rep.dice[4][0]) == 1
    assert rep.best_dice == (80.0, 0.8)
    rows = list(csv.reader(io.StringIO(rep.heatmap_csv())))
    assert rows == [["window", "0.8"], ["80.0", repr(rep.dice[4][0][0])]]


def test_sweep_deterministic_and_consistent(tiny_cases):
    grid = SweepGrid(windows=(50, 90), thresholds=(0.3, 0.5, 0.7))
    a, b = _run(tiny_cases, grid), _run(tiny_cases, grid)
    assert a.to_json() == b.to_json()
    assert a.heatmap_csv("hd") == b.heatmap_csv("hd")
    flat = [(a.dice[4][i][j], -i, -j) for i in range(2) for j in range(3)]
    _, i, j = max(flat)
    assert a.best_dice == (grid.windows[-i], grid.thresholds[-j])
    assert set(a.histories) == {50.0, 90.0}


def test_sweep_rejects_bad_setup(tiny_cases):
    cfg = TrainConfig(epochs=1, steps_per_epoch=1)
    net = NetworkConfig(depth=1, base_channels=2, num_classes=3)
    with pytest.raises(ValueError):
        sweep(tiny_cases, tiny_cases, SweepGrid(), cfg, net, (2, 4), target=5)
    with pytest.raises(ValueError):
        sweep(tiny_cases, [], SweepGrid(), cfg, net, (2, 4))
    with pytest.raises(ValueError):
        sweep(tiny_cases, tiny_cases, SweepGrid(), cfg, net, (2, 4, 3))
