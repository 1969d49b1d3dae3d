"""Scenario configuration, unit conversion, entity placement and RNG streams."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control import ControlPlant, default_plant


class ConfigError(ValueError):
    """Invalid or malformed scenario configuration; ``key`` names the culprit."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# units


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def watts_to_dbm(x: float) -> float:
    return 10.0 * math.log10(x) + 30.0


# ---------------------------------------------------------------------------
# randomness

# Sub-stream identifiers; appending new purposes never perturbs existing ones.
STREAMS = {"placement": 1, "nlos": 2, "pso": 3, "rap": 4, "randomization": 5}


def rng_stream(seed: int, purpose: str) -> np.random.Generator:
    """PCG64 generator for ``purpose`` derived from ``seed`` via SeedSequence.

    Streams for different purposes are statistically independent, so a module
    drawing more or fewer numbers never shifts another module's draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(STREAMS[purpose],))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# config types


@dataclass(frozen=True)
class PsoParams:
    swarm_size: int = 200
    max_iters: int = 300
    inertia_max: float = 0.9
    inertia_min: float = 0.4
    cognitive: float = 1.5
    social: float = 1.5
    penalty_sensing: float = 100.0
    penalty_control: float = 100.0
    penalty_spacing: float = 100.0
    step_scale: float = 1.0
    per_coordinate_draws: bool = False

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ConfigError("pso.swarm_size", "must be >= 1")
        if self.max_iters < 0:
            raise ConfigError("pso.max_iters", "must be >= 0")
        if not 0 <= self.inertia_min <= self.inertia_max:
            raise ConfigError("pso.inertia_min", "need 0 <= inertia_min <= inertia_max")
        for name in ("cognitive", "social", "penalty_sensing", "penalty_control", "penalty_spacing", "step_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"pso.{name}", "must be non-negative")


@dataclass(frozen=True)
class AoParams:
    max_outer: int = 30
    outer_tol: float = 1e-3
    sca_max_iters: int = 30
    sca_tol: float = 1e-4
    psd_tol: float = 1e-9
    dare_tol: float = 1e-11
    dare_max_iters: int = 100_000
    init_placement: str = "best"  # fap | rap | best

    def __post_init__(self):
        for name in ("max_outer", "sca_max_iters", "dare_max_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ao.{name}", "must be >= 1")
        for name in ("sca_tol", "psd_tol", "dare_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"ao.{name}", "must lie in (0, 1)")
        if not self.outer_tol > 0:
            raise ConfigError("ao.outer_tol", "must be positive")
        if self.init_placement not in ("fap", "rap", "best"):
            raise ConfigError("ao.init_placement", "must be 'fap', 'rap' or 'best'")


@dataclass(frozen=True)
class Layout:
    """Resolved entity positions in meters, shape (count, 3) each."""

    gus: np.ndarray
    cavs: np.ndarray
    targets: np.ndarray


@dataclass(frozen=True)
class ScenarioConfig:
    num_antennas: int = 8
    num_gus: int = 3
    num_cavs: int = 2
    num_targets: int = 3
    region_size: float = 10.0  # wavelengths
    min_spacing: float = 0.5  # wavelengths
    wavelength: float = 0.01  # meters
    bs_position: tuple[float, float, float] = (100.0, 100.0, 10.0)
    area_x: tuple[float, float] = (0.0, 500.0)
    area_y: tuple[float, float] = (0.0, 500.0)
    cav_altitude: tuple[float, float] = (50.0, 150.0)
    gu_positions: tuple | None = None
    cav_positions: tuple | None = None
    target_positions: tuple | None = None
    array_x_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    array_y_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    ref_gain_db: float = -60.0
    pathloss_exp: float = 2.0
    rician_k: float = 31.3
    noise_dbm: float = -100.0
    sense_thresh_dbm: float = -15.0
    max_power_dbm: float = 50.0
    pathloss_convention: str = "power"
    entropy_clamp: bool = True
    plants: tuple[ControlPlant, ...] = field(default_factory=lambda: (default_plant(),))
    pso: PsoParams = field(default_factory=PsoParams)
    ao: AoParams = field(default_factory=AoParams)
    seed: int = 0

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ConfigError("num_antennas", "must be >= 1")
        if self.num_gus < 1:
            raise ConfigError("num_gus", "must be >= 1")
        if self.num_cavs < 0:
            raise ConfigError("num_cavs", "must be >= 0")
        if self.num_targets < 0:
            raise ConfigError("num_targets", "must be >= 0")
        if not self.region_size > 0:
            raise ConfigError("region_size", "must be positive")
        if not 0 <= self.min_spacing < self.region_size:
            raise ConfigError("min_spacing", "need 0 <= min_spacing < region_size")
        if self.min_spacing > 0:
            cap = (math.floor(self.region_size / self.min_spacing) + 1) ** 2
            if self.num_antennas > cap:
                raise ConfigError("num_antennas", f"region fits at most {cap} antennas at min_spacing")
        if not self.wavelength > 0:
            raise ConfigError("wavelength", "must be positive")
        for name in ("ref_gain_db", "pathloss_exp", "rician_k", "noise_dbm", "sense_thresh_dbm", "max_power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        if self.rician_k < 0:
            raise ConfigError("rician_k", "must be non-negative")
        if self.pathloss_convention not in ("power", "amplitude"):
            raise ConfigError("pathloss_convention", "must be 'power' or 'amplitude'")
        if self.num_cavs and len(self.plants) not in (1, self.num_cavs):
            raise ConfigError("plants", f"need 1 or {self.num_cavs} plants")
        for key, pts, count in (
            ("gu_positions", self.gu_positions, self.num_gus),
            ("cav_positions", self.cav_positions, self.num_cavs),
            ("target_positions", self.target_positions, self.num_targets),
        ):
            if pts is not None and np.shape(pts) != (count, 3):
                raise ConfigError(key, f"expected {count} positions of length 3")

    # derived quantities in linear units
    @property
    def max_power(self) -> float:
        return dbm_to_watts(self.max_power_dbm)

    @property
    def noise_power(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def sense_thresh(self) -> float:
        return dbm_to_watts(self.sense_thresh_dbm)

    @property
    def ref_gain(self) -> float:
        return db_to_linear(self.ref_gain_db)

    @property
    def cav_plants(self) -> tuple[ControlPlant, ...]:
        if not self.num_cavs:
            return ()
        if len(self.plants) == 1:
            return self.plants * self.num_cavs
        return self.plants

    @property
    def lqr_budgets(self) -> list[float]:
        return [p.lqr_budget for p in self.cav_plants]

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_lqr_budget(self, budget: float) -> "ScenarioConfig":
        return self.replace(plants=tuple(dataclasses.replace(p, lqr_budget=budget) for p in self.plants))

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "plants":
                v = [p.to_dict() for p in v]
            elif f.name in ("pso", "ao"):
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = np.asarray(v).tolist()
            out[f.name] = v
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def place_entities(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Layout:
    """Resolve GU/CAV/target positions.

    Explicit positions in the config are returned verbatim; the rest are drawn
    uniformly in the area (GUs and targets on the ground, CAVs inside the
    altitude band).  Draw order is GUs, CAVs, targets.
    """
    if rng is None:
        rng = rng_stream(config.seed, "placement")

    def draw(count, z_range):
        x = rng.uniform(*config.area_x, size=count)
        y = rng.uniform(*config.area_y, size=count)
        z = np.full(count, z_range) if np.isscalar(z_range) else rng.uniform(*z_range, size=count)
        return np.column_stack([x, y, z]).reshape(count, 3)

    def resolve(pts, count, z_range):
        if pts is not None:
            return np.asarray(pts, dtype=float).reshape(count, 3)
        return draw(count, z_range)

    gus = resolve(config.gu_positions, config.num_gus, 0.0)
    cavs = resolve(config.cav_positions, config.num_cavs, config.cav_altitude)
    targets = resolve(config.target_positions, config.num_targets, 0.0)
    return Layout(gus, cavs, targets)


# ---------------------------------------------------------------------------
# config documents

_SCALAR_KEYS = {
    "seed": int,
    "num_antennas": int,
    "num_gus": int,
    "num_cavs": int,
    "num_targets": int,
    "region_size": float,
    "min_spacing": float,
    "wavelength": float,
    "ref_gain_db": float,
    "pathloss_exp": float,
    "rician_k": float,
    "noise_dbm": float,
    "sense_thresh_dbm": float,
    "max_power_dbm": float,
    "pathloss_convention": str,
    "entropy_clamp": bool,
}
_VECTOR_KEYS = {
    "bs_position": 3,
    "area_x": 2,
    "area_y": 2,
    "cav_altitude": 2,
    "array_x_axis": 3,
    "array_y_axis": 3,
}
_POSITION_KEYS = ("gu_positions", "cav_positions", "target_positions")


def _coerce(key, value, typ):
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, "expected true/false")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "expected an integer")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "expected a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(key, "expected a string")
    return value


def _section(key, raw, cls):
    if not isinstance(raw, dict):
        raise ConfigError(key, "expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in raw.items():
        if k not in known:
            raise ConfigError(f"{key}.{k}", "unknown key")
        default = known[k].default
        typ = type(default) if default is not dataclasses.MISSING else float
        kwargs[k] = _coerce(f"{key}.{k}", v, typ)
    return cls(**kwargs)


def config_from_dict(raw: dict[str, Any]) -> ScenarioConfig:
    """Build a config from a parsed document; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key in _SCALAR_KEYS:
            kwargs[key] = _coerce(key, value, _SCALAR_KEYS[key])
        elif key in _VECTOR_KEYS:
            try:
                vec = tuple(float(v) for v in value)
            except (TypeError, ValueError):
                raise ConfigError(key, "expected a list of numbers") from None
            if len(vec) != _VECTOR_KEYS[key]:
                raise ConfigError(key, f"expected {_VECTOR_KEYS[key]} numbers")
            kwargs[key] = vec
        elif key in _POSITION_KEYS:
            if value is None:
                continue
            try:
                pts = tuple(tuple(float(c) for c in p) for p in value)
            except (TypeError, ValueError):
                raise ConfigError(key, "expected a list of [x, y, z] positions") from None
            kwargs[key] = pts
        elif key == "plants":
            if not isinstance(value, list) or not value:
                raise ConfigError(key, "expected a non-empty list of plants")
            kwargs[key] = tuple(ControlPlant.from_dict(p, key=f"plants[{i}]") for i, p in enumerate(value))
        elif key == "pso":
            kwargs[key] = _section(key, value, PsoParams)
        elif key == "ao":
            kwargs[key] = _section(key, value, AoParams)
        else:
            raise ConfigError(key, "unknown key")
    try:
        return ScenarioConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("<root>", str(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML scenario document."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML ({exc})") from None
    return config_from_dict(raw or {})


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
