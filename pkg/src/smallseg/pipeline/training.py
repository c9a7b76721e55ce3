"""Training loop with rotation augmentation and the loss-stability rule."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn.network import Network, backward_and_step
from ..seeding import derive_seed
from ..volume import AXES, LabelMap, Volume, WindowSpec, augmentation_angles, rotate, window_normalize


@dataclass
class TrainConfig:
    epochs: int = 800
    steps_per_epoch: int = 35
    lr: float = 0.01
    seed: int = 0
    augment: bool = True
    window: float = 100.0
    stop_on_convergence: bool = False
    min_epochs: int = 1
    convergence_window: int = 10
    convergence_tol: float = 0.10

    def __post_init__(self):
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValueError("epochs and steps_per_epoch must be >= 1")
        if not self.lr >= 0:
            raise ValueError("learning rate must be >= 0")
        WindowSpec(self.window)

    def to_dict(self):
        return asdict(self)


@dataclass
class LossHistory:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    converged_at: int | None = None  # first epoch (1-based) at which the stability rule held

    def to_dict(self):
        return asdict(self)


@dataclass
class Sample:
    """Network-ready case: normalized intensities and per-voxel class indices."""

    image: Volume
    classes: LabelMap


def labels_to_classes(labels: np.ndarray, organs) -> np.ndarray:
    """Organ indices -> network classes (organs[i] -> i + 1, everything else -> 0)."""
    lut = np.zeros(256, dtype=np.uint8)
    for i, organ in enumerate(organs):
        lut[organ] = i + 1
    return lut[labels]


def classes_to_labels(classes: np.ndarray, organs) -> np.ndarray:
    lut = np.zeros(len(organs) + 1, dtype=np.uint8)
    lut[1:] = organs
    return lut[classes]


def prepare_samples(cases, window, organs):
    """Window-normalize images and map organ labels to class indices."""
    out = []
    for image, labels in cases:
        norm = window_normalize(image, WindowSpec(float(window)))
        out.append(Sample(norm, LabelMap(labels_to_classes(labels.data, organs), labels.spacing)))
    return out


def augmentation_pool(n_samples, augment=True):
    """Every (sample, axis, angle) triple used for augmented training."""
    if not augment:
        return [(i, None, 0) for i in range(n_samples)]
    return [(i, axis, angle) for i in range(n_samples) for axis in AXES for angle in augmentation_angles()]


def materialize(sample: Sample, axis, angle):
    if axis is None:
        return sample.image.data, sample.classes.data
    img = rotate(sample.image, axis, angle, mode="trilinear", fill=0.0)
    lab = rotate(sample.classes, axis, angle, mode="nearest", fill=0)
    return img.data, lab.data


def mean_loss(net: Network, samples) -> float:
    total = 0.0
    for s in samples:
        p = net.forward(s.image.data[None], mode="infer")
        t = s.classes.data.astype(np.intp)[None]
        total += float(-np.log(np.maximum(np.take_along_axis(p, t, axis=0)[0], 1e-12)).mean())
    return total / len(samples)


def is_converged(history, window=10, tol=0.10, eps=1e-12) -> bool:
    """True when every consecutive relative change in the trailing ``window`` losses is below ``tol``."""
    losses = list(history.train if isinstance(history, LossHistory) else history)
    window = max(int(window), 2)
    if len(losses) < window:
        return False
    tail = losses[-window:]
    return all(abs(b - a) / max(a, eps) < tol for a, b in zip(tail[:-1], tail[1:]))


def train(samples, net: Network, cfg: TrainConfig, val_samples=None, progress=None):
    """SGD on single augmented samples drawn uniformly with replacement.

    Returns the (in-place updated) network and its LossHistory.
    """
    if not samples:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(derive_seed(cfg.seed, "augment"))
    net.set_seed(derive_seed(cfg.seed, "dropout"))
    pool = augmentation_pool(len(samples), cfg.augment)
    history = LossHistory()
    for epoch in range(cfg.epochs):
        losses = []
        for step in range(cfg.steps_per_epoch):
            i, axis, angle = pool[int(rng.integers(len(pool)))]
            x, y = materialize(samples[i], axis, angle)
            try:
                loss = backward_and_step(net, x[None], y, cfg.lr)
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {epoch + 1}, step {step + 1}: {exc}") from exc
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch + 1}, step {step + 1}")
            losses.append(loss)
        history.train.append(float(np.mean(losses)))
        if val_samples:
            history.val.append(mean_loss(net, val_samples))
        if history.converged_at is None and is_converged(history, cfg.convergence_window, cfg.convergence_tol):
            history.converged_at = epoch + 1
        if progress is not None:
            progress(epoch + 1, history)
        if cfg.stop_on_convergence and epoch + 1 >= cfg.min_epochs and history.converged_at is not None:
            break
    return net, history
