"""Run configuration: one JSON document, strictly validated, with one root seed."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .nn.network import NetworkConfig
from .organs import LEFT_EYE, LEFT_LENS, ORGANS
from .phantom import PhantomParams
from .pipeline.inference import EYE_CROP_MM
from .pipeline.sweep import SweepGrid
from .pipeline.training import TrainConfig
from .seeding import derive_seed

PRESETS = ("eye_region", "head")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CropRegion:
    """A named image portion: which organs it holds and how large a box to cut."""

    organs: tuple
    extent_mm: tuple
    anchor: int  # organ whose predicted centre positions the box

    def __post_init__(self):
        object.__setattr__(self, "organs", tuple(int(o) for o in self.organs))
        object.__setattr__(self, "extent_mm", tuple(float(e) for e in self.extent_mm))
        if len(self.extent_mm) != 3 or min(self.extent_mm) <= 0:
            raise ConfigError("crop extent must be three positive lengths in mm")
        if self.anchor not in self.organs:
            raise ConfigError(f"crop anchor {self.anchor} is not one of its organs {self.organs}")


def default_crop_regions():
    return {"eye": CropRegion(organs=(2, 3, 4, 5), extent_mm=EYE_CROP_MM, anchor=LEFT_EYE)}


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    organs: tuple = (LEFT_EYE, LEFT_LENS)  # network class i + 1 predicts organs[i]
    target: int = LEFT_LENS
    n_cases: int = 25
    split: tuple = (0.8, 0.0, 0.2)
    threshold: float = 0.80
    hd_method: str = "brute"
    phantom_preset: str = "eye_region"
    phantom: PhantomParams = None
    network: NetworkConfig = None
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepGrid = field(default_factory=SweepGrid)
    organ_registry: dict = field(default_factory=lambda: dict(ORGANS))
    crop_regions: dict = field(default_factory=default_crop_regions)

    def __post_init__(self):
        self.organs = tuple(int(o) for o in self.organs)
        self.split = tuple(float(f) for f in self.split)
        if self.phantom is None:
            self.phantom = _preset(self.phantom_preset, {})
        if self.network is None:
            self.network = NetworkConfig(num_classes=len(self.organs) + 1)
        self.validate()

    def validate(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not self.organs or len(set(self.organs)) != len(self.organs):
            raise ConfigError("organs must be a non-empty list of distinct indices")
        for o in self.organs:
            if o not in self.organ_registry:
                raise ConfigError(f"organ {o} is not in the organ registry")
        if self.target not in self.organs:
            raise ConfigError(f"target organ {self.target} is not one of {list(self.organs)}")
        if self.network.num_classes != len(self.organs) + 1:
            raise ConfigError(
                f"network.num_classes is {self.network.num_classes} but {len(self.organs)} organs need "
                f"{len(self.organs) + 1} (background plus one per organ)"
            )
        if self.n_cases < 2:
            raise ConfigError("n_cases must be >= 2")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError("split must be three non-negative fractions summing to 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.hd_method not in ("brute", "edt"):
            raise ConfigError("hd_method must be 'brute' or 'edt'")
        if self.phantom_preset not in PRESETS:
            raise ConfigError(f"phantom_preset must be one of {PRESETS}")
        for k, v in self.organ_registry.items():
            if not isinstance(k, int) or not 1 <= k <= 255 or not isinstance(v, str):
                raise ConfigError("organ registry maps indices 1..255 to names")

    # seeds for each random stream, derived from the root seed
    @property
    def data_seed(self):
        return derive_seed(self.seed, "phantom")

    def network_config(self) -> NetworkConfig:
        return replace(self.network, seed=derive_seed(self.seed, "init"))

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=derive_seed(self.seed, "train"))

    def to_dict(self):
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "organs": list(self.organs),
            "target": self.target,
            "n_cases": self.n_cases,
            "split": list(self.split),
            "threshold": self.threshold,
            "hd_method": self.hd_method,
            "phantom_preset": self.phantom_preset,
            "phantom": self.phantom.to_dict(),
            "network": self.network.to_dict(),
            "train": self.train.to_dict(),
            "sweep": {"windows": list(self.sweep.windows), "thresholds": list(self.sweep.thresholds)},
            "organ_registry": {str(k): v for k, v in sorted(self.organ_registry.items())},
            "crop_regions": {
                name: {"organs": list(r.organs), "extent_mm": list(r.extent_mm), "anchor": r.anchor}
                for name, r in sorted(self.crop_regions.items())
            },
        }


def _preset(name, overrides):
    if name == "eye_region":
        return PhantomParams.eye_region(**overrides)
    if name == "head":
        return PhantomParams(**overrides)
    raise ConfigError(f"unknown phantom preset {name!r}")


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(unknown)}")


def _dataclass_keys(cls):
    return [f.name for f in fields(cls)]


def _build(section, cls, data):
    _check_keys(section, data, _dataclass_keys(cls))
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def run_config_from_dict(data) -> RunConfig:
    """Build a RunConfig from parsed JSON, rejecting unknown keys at every level."""
    top = [f.name for f in fields(RunConfig)]
    _check_keys("config", data, top)
    kw = {k: v for k, v in data.items() if k not in ("phantom", "network", "train", "sweep",
                                                     "organ_registry", "crop_regions")}
    preset = data.get("phantom_preset", "eye_region")
    if "phantom" in data:
        _check_keys("phantom", data["phantom"], _dataclass_keys(PhantomParams))
        try:
            kw["phantom"] = _preset(preset, data["phantom"])
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"phantom: {exc}") from None
    organs = data.get("organs", RunConfig.organs)
    net = dict(data.get("network", {}))
    if isinstance(net, dict):
        net.setdefault("num_classes", len(organs) + 1)
    kw["network"] = _build("network", NetworkConfig, net)
    if "train" in data:
        kw["train"] = _build("train", TrainConfig, data["train"])
    if "sweep" in data:
        kw["sweep"] = _build("sweep", SweepGrid, data["sweep"])
    if "organ_registry" in data:
        reg = data["organ_registry"]
        if not isinstance(reg, dict):
            raise ConfigError("organ_registry: expected an object")
        try:
            kw["organ_registry"] = {int(k): v for k, v in reg.items()}
        except ValueError:
            raise ConfigError("organ_registry: keys must be integer indices") from None
    if "crop_regions" in data:
        regions = data["crop_regions"]
        if not isinstance(regions, dict):
            raise ConfigError("crop_regions: expected an object")
        kw["crop_regions"] = {
            name: _build(f"crop_regions.{name}", CropRegion, entry) for name, entry in regions.items()
        }
    try:
        return RunConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path=None) -> RunConfig:
    """Read a JSON config file; None gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return run_config_from_dict(data)
