"""Per-organ scoring of predicted label maps against ground truth."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from ..metrics import OrganStats, dice, hausdorff, organ_stats
from ..organs import organ_name
from ..volume import LabelMap


def score_masks(pred: np.ndarray, truth: np.ndarray, spacing, hd_method="brute"):
    """(dice, hausdorff) of two boolean masks; HD is None unless both are non-empty."""
    d = dice(pred, truth)
    hd = hausdorff(pred, truth, spacing, hd_method) if pred.any() and truth.any() else None
    return d, hd


def evaluate(pred: LabelMap, truth: LabelMap, organs, hd_method="brute"):
    """Per-organ {organ: (dice, hd_mm or None)} for one case."""
    if pred.dims != truth.dims:
        raise ValueError(f"prediction dims {pred.dims} differ from ground truth {truth.dims}")
    return {
        int(o): score_masks(pred.data == o, truth.data == o, truth.spacing, hd_method)
        for o in organs
    }


@dataclass
class SegReport:
    """Per-organ Dice/HD summary over a set of cases."""

    organs: list
    cases: list  # per case: {organ: (dice, hd)}

    def to_dict(self):
        return {
            "organs": [
                {"name": organ_name(s.organ), **s.to_dict()} for s in self.organs
            ],
            "cases": [
                {str(o): {"dice": d, "hd_mm": h} for o, (d, h) in sorted(case.items())}
                for case in self.cases
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["organ", "name", "dice_mean", "dice_std", "hd_mean_mm", "hd_std_mm", "n_cases", "n_hd"])
        for s in self.organs:
            w.writerow([s.organ, organ_name(s.organ), _fmt(s.dice_mean), _fmt(s.dice_std),
                        _fmt(s.hd_mean_mm), _fmt(s.hd_std_mm), s.n_cases, s.n_hd])
        return buf.getvalue()

    def stats(self, organ) -> OrganStats:
        for s in self.organs:
            if s.organ == organ:
                return s
        raise KeyError(organ)


def _fmt(v):
    return "" if v is None else repr(float(v))


def build_report(per_case, organs) -> SegReport:
    if not per_case:
        raise ValueError("no cases to report")
    stats = [
        organ_stats(o, [case[o][0] for case in per_case], [case[o][1] for case in per_case])
        for o in organs
    ]
    return SegReport(stats, list(per_case))


def evaluate_cases(preds, truths, organs, hd_method="brute") -> SegReport:
    """Score paired label maps and aggregate mean and sample std per organ."""
    preds, truths = list(preds), list(truths)
    if len(preds) != len(truths):
        raise ValueError("predictions and ground truths differ in count")
    return build_report([evaluate(p, t, organs, hd_method) for p, t in zip(preds, truths)], organs)
