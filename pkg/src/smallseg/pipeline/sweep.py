"""Window x threshold grid sweep: one network per window, thresholds applied post hoc."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from ..nn.network import NetworkConfig, build_unet
from ..organs import LEFT_LENS
from .evaluation import score_masks
from .inference import apply_threshold
from .training import TrainConfig, labels_to_classes, prepare_samples, train

DEFAULT_WINDOWS = (40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0)
DEFAULT_THRESHOLDS = (0.75, 0.80, 0.85, 0.90, 0.95)


@dataclass(frozen=True)
class SweepGrid:
    windows: tuple = DEFAULT_WINDOWS
    thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(float(w) for w in self.windows))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not self.windows or not self.thresholds:
            raise ValueError("sweep grid needs at least one window and one threshold")
        if any(not w > 0 for w in self.windows):
            raise ValueError("windows must be positive")
        if any(not 0.0 < t < 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in (0, 1)")
        if len(set(self.windows)) != len(self.windows) or len(set(self.thresholds)) != len(self.thresholds):
            raise ValueError("grid values must be distinct")


@dataclass
class SweepReport:
    """Mean Dice / HD per (window, threshold) cell for every organ.

    ``dice[organ][i][j]`` is the mean over test cases at ``windows[i]``,
    ``thresholds[j]``. ``hd`` cells are None when no test case produced both a
    predicted and a true mask. Optima are chosen on ``target``.
    """

    grid: SweepGrid
    organs: tuple
    target: int
    dice: dict
    hd: dict
    best_dice: tuple
    best_hd: tuple | None
    histories: dict = field(default_factory=dict)  # window -> {"train": [...], "converged_at": n}

    def cell_dice(self, w, t, organ=None):
        i, j = self.grid.windows.index(float(w)), self.grid.thresholds.index(float(t))
        return self.dice[self.target if organ is None else organ][i][j]

    def cell_hd(self, w, t, organ=None):
        i, j = self.grid.windows.index(float(w)), self.grid.thresholds.index(float(t))
        return self.hd[self.target if organ is None else organ][i][j]

    def to_dict(self):
        return {
            "windows": list(self.grid.windows),
            "thresholds": list(self.grid.thresholds),
            "organs": list(self.organs),
            "target": self.target,
            "dice": {str(o): m for o, m in self.dice.items()},
            "hd_mm": {str(o): m for o, m in self.hd.items()},
            "best_dice": list(self.best_dice),
            "best_hd": None if self.best_hd is None else list(self.best_hd),
            "histories": {repr(w): h for w, h in self.histories.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def heatmap_csv(self, metric="dice", organ=None) -> str:
        """Rows are windows, columns thresholds; empty cells have no value."""
        table = (self.dice if metric == "dice" else self.hd)[self.target if organ is None else organ]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window"] + [repr(t) for t in self.grid.thresholds])
        for win, row in zip(self.grid.windows, table):
            w.writerow([repr(win)] + ["" if v is None else repr(v) for v in row])
        return buf.getvalue()


def select_optima(grid: SweepGrid, dice_table, hd_table):
    """(best cell by max Dice, best cell by min HD); ties go to the first cell in
    row-major order, and cells without an HD value are skipped.
    """
    best_d, best_h = None, None
    bd, bh = -np.inf, np.inf
    for i, w in enumerate(grid.windows):
        for j, t in enumerate(grid.thresholds):
            if dice_table[i][j] > bd:
                bd, best_d = dice_table[i][j], (w, t)
            h = hd_table[i][j]
            if h is not None and h < bh:
                bh, best_h = h, (w, t)
    return best_d, best_h


def evaluate_probabilities(prob_maps, truths, organs, thresholds, hd_method="brute"):
    """Per organ, per threshold: (mean Dice, mean HD or None) over the test cases.

    ``truths`` are organ label maps on the same grid as the probability maps.
    """
    dsum = {o: [[] for _ in thresholds] for o in organs}
    hsum = {o: [[] for _ in thresholds] for o in organs}
    for probs, truth in zip(prob_maps, truths):
        classes_true = labels_to_classes(truth.data, organs)
        for j, t in enumerate(thresholds):
            pred = apply_threshold(probs, t)
            for c, o in enumerate(organs, start=1):
                d, h = score_masks(pred == c, classes_true == c, truth.spacing, hd_method)
                dsum[o][j].append(d)
                if h is not None:
                    hsum[o][j].append(h)
    dice_row = {o: [float(np.mean(v)) for v in dsum[o]] for o in organs}
    hd_row = {o: [float(np.mean(v)) if v else None for v in hsum[o]] for o in organs}
    return dice_row, hd_row


def sweep(train_cases, test_cases, grid: SweepGrid, cfg: TrainConfig, net_cfg: NetworkConfig,
          organs, target=LEFT_LENS, hd_method="brute", progress=None) -> SweepReport:
    """Train a fresh net per window and score every threshold on the test cases.

    Cases are (Volume, LabelMap) pairs already cropped to the network grid.
    Every window starts from the same initial weights and the same sample
    order, so cells differ only through the window.
    """
    organs = tuple(int(o) for o in organs)
    if target not in organs:
        raise ValueError(f"target organ {target} is not among {organs}")
    if not train_cases or not test_cases:
        raise ValueError("sweep needs non-empty train and test sets")
    if net_cfg.num_classes != len(organs) + 1:
        raise ValueError("network classes must be background plus one per organ")
    truths = [labels for _, labels in test_cases]
    dice_t = {o: [] for o in organs}
    hd_t = {o: [] for o in organs}
    histories = {}
    for w in grid.windows:
        net = build_unet(net_cfg)
        run_cfg = replace(cfg, window=w)
        _, history = train(prepare_samples(train_cases, w, organs), net, run_cfg)
        histories[w] = {"train": history.train, "converged_at": history.converged_at}
        probs = [net.forward(s.image.data[None], mode="infer")
                 for s in prepare_samples(test_cases, w, organs)]
        d_row, h_row = evaluate_probabilities(probs, truths, organs, grid.thresholds, hd_method)
        for o in organs:
            dice_t[o].append(d_row[o])
            hd_t[o].append(h_row[o])
        if progress is not None:
            progress(w, history, d_row[target])
    best_d, best_h = select_optima(grid, dice_t[target], hd_t[target])
    return SweepReport(grid, organs, target, dice_t, hd_t, best_d, best_h, histories)
