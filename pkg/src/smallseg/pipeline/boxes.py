"""Merging of overlapping detection boxes into their union bounds."""
from __future__ import annotations

from dataclasses import dataclass

from ..volume import CropBox


@dataclass(frozen=True)
class BoundingBox:
    lo: tuple
    hi: tuple
    label: int = 0

    def __post_init__(self):
        CropBox(self.lo, self.hi)  # validates lo < hi
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))

    def overlaps(self, other) -> bool:
        """Positive-volume intersection (touching faces do not count)."""
        return all(a < d and c < b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def contains(self, other) -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def union(self, other):
        return BoundingBox(tuple(map(min, self.lo, other.lo)), tuple(map(max, self.hi, other.hi)), self.label)

    @property
    def crop_box(self):
        return CropBox(self.lo, self.hi)


def merge_overlapping_boxes(boxes):
    """Replace every group of overlapping same-label boxes by its union bound.

    Merging repeats until no two same-label boxes overlap, because a union can
    reach boxes that none of its members touched. Output is sorted by
    (label, lo, hi).
    """
    by_label = {}
    for box in boxes:
        by_label.setdefault(box.label, []).append(box)
    out = []
    for label in sorted(by_label):
        current = list(by_label[label])
        merged = True
        while merged:
            merged = False
            result = []
            for box in current:
                for i, other in enumerate(result):
                    if box.overlaps(other):
                        result[i] = other.union(box)
                        merged = True
                        break
                else:
                    result.append(box)
            current = result
        out.extend(current)
    return sorted(out, key=lambda b: (b.label, b.lo, b.hi))
