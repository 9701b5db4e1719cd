"""Run configuration: dataclasses, YAML loading and dotted overrides."""

import copy
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .attitude import AttitudeConfig
from .flow import GdConfig
from .riccati import RiccatiConfig
from .sim import NoiseSpec, DEFAULT_LANDMARKS

TRAJECTORIES = ("paper-a", "paper-b", "straight-line")
BUNDLED = ("paper-a", "paper-b")


@dataclass(frozen=True)
class ScenarioConfig:
    trajectory: str = "paper-b"
    duration: float = 30.0
    truth_dt: float = 1e-3
    sensor_rate: float = 50.0
    R0_rotvec: tuple = (0.0, 0.0, 0.0)
    xi0: tuple = (0.0, 0.0, 0.0)
    v0: tuple = (0.0, 0.0, 0.0)  # only used by acceleration-driven trajectories
    speed: float = 1.0  # straight-line trajectory
    landmarks: tuple = tuple(map(tuple, DEFAULT_LANDMARKS.tolist()))
    n_landmarks: Optional[int] = None  # use the first n listed landmarks

    def __post_init__(self):
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        if self.duration <= 0 or self.truth_dt <= 0 or self.sensor_rate <= 0:
            raise ValueError("duration, truth_dt and sensor_rate must be positive")
        if len(self.landmarks) == 0:
            raise ValueError("at least one landmark is required")
        if self.n_landmarks is not None and not 1 <= self.n_landmarks <= len(self.landmarks):
            raise ValueError("n_landmarks out of range")

    @property
    def sample_dt(self):
        return 1.0 / self.sensor_rate

    @property
    def landmark_array(self):
        L = np.array(self.landmarks, dtype=float)
        return L if self.n_landmarks is None else L[: self.n_landmarks]


@dataclass(frozen=True)
class InitConfig:
    v_hat_B: tuple = (0.8, -1.5, 0.5)
    z: tuple = (1.4, 0.8, -8.81)
    R_hat_rotvec: tuple = (0.0, 0.0, 0.0)
    xi_hat_B: Optional[tuple] = None  # None starts from the true body-frame position
    eta_hat: tuple = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class ModeConfig:
    oracle_direction: bool = False
    use_magnetometer: bool = True
    inertial_formulation: bool = False
    input_hold: str = "linear"  # "linear" (first-order) or "zero"
    substeps: int = 1  # cascade integration steps per sensor sample

    def __post_init__(self):
        if self.input_hold not in ("linear", "zero"):
            raise ValueError(f"unknown input hold {self.input_hold!r}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass(frozen=True)
class MonteCarloConfig:
    n_runs: int = 30
    v_std: float = 3.0
    z_std: float = 1.5
    R_std_deg: float = 15.0
    workers: int = 1

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if min(self.v_std, self.z_std, self.R_std_deg) < 0:
            raise ValueError("sampling stds must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    name: str = "custom"
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    flow: GdConfig = field(default_factory=GdConfig)
    riccati: RiccatiConfig = field(default_factory=RiccatiConfig)
    attitude: AttitudeConfig = field(default_factory=AttitudeConfig)
    init: InitConfig = field(default_factory=InitConfig)
    mode: ModeConfig = field(default_factory=ModeConfig)
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)


SECTIONS = {
    "scenario": ScenarioConfig,
    "noise": NoiseSpec,
    "flow": GdConfig,
    "riccati": RiccatiConfig,
    "attitude": AttitudeConfig,
    "init": InitConfig,
    "mode": ModeConfig,
    "monte_carlo": MonteCarloConfig,
}


def _freeze(value):
    """YAML lists become tuples (hashable, immutable); numbers stay as they are."""
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build(cls, data):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    if cls is NoiseSpec and "seed" in data:
        raise ValueError("noise seeds are derived from the top-level 'seed'; set that instead")
    kwargs = {}
    for k, v in data.items():
        v = _freeze(v)
        if cls in (AttitudeConfig,) and k in ("m_ref", "g_vec"):
            v = np.array(v, dtype=float)
        if cls is RiccatiConfig and k in ("S", "P0") and isinstance(v, tuple):
            v = np.array(v, dtype=float)
        kwargs[k] = v
    return cls(**kwargs)


def from_dict(data):
    data = dict(data or {})
    unknown = set(data) - set(SECTIONS) - {"name", "seed"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {k: data[k] for k in ("name", "seed") if k in data}
    for key, cls in SECTIONS.items():
        kwargs[key] = _build(cls, data.get(key) or {})
    return RunConfig(**kwargs)


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def to_dict(cfg):
    out = {"name": cfg.name, "seed": cfg.seed}
    for key in SECTIONS:
        sub = getattr(cfg, key)
        out[key] = {f.name: _plain(getattr(sub, f.name)) for f in dataclasses.fields(sub)
                    if not (key == "noise" and f.name == "seed")}
    return out


def dump_yaml(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def bundled_path(name):
    return resources.files("flowvio") / "scenarios" / f"{name}.yaml"


def load_dict(path_or_name):
    """Parse a YAML file, or a bundled scenario given by name."""
    if path_or_name in BUNDLED:
        text = bundled_path(path_or_name).read_text()
    else:
        text = Path(path_or_name).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path_or_name}: top level must be a mapping")
    return data


def apply_overrides(data, overrides):
    """Apply 'section.key=value' strings; values are parsed as YAML scalars/lists."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} does not address a section")
        node[parts[-1]] = value
    return data


def load_config(path_or_name="paper-b", overrides=()):
    return from_dict(apply_overrides(load_dict(path_or_name), overrides))


def replace(cfg, **sections):
    """dataclasses.replace on nested sections: replace(cfg, mode={'oracle_direction': True})."""
    kwargs = {}
    for key, changes in sections.items():
        if key in SECTIONS:
            kwargs[key] = dataclasses.replace(getattr(cfg, key), **changes)
        else:
            kwargs[key] = changes
    return dataclasses.replace(cfg, **kwargs)
