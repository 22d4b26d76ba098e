"""Problem instances: anchor/sensor grids, physics constants, accuracy targets.

A scenario is immutable after construction. Files use a small YAML schema with
units spelled out in the key names; the writer emits a canonical key order so
that saving the same scenario twice produces identical bytes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
import yaml

from .errors import ScenarioError

__all__ = [
    "Distribution",
    "Mode",
    "PhysicsParams",
    "AccuracyTarget",
    "Scenario",
    "make_grid",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "scenario_digest",
]


class Distribution(Enum):
    """Distributional assumption behind the accuracy threshold."""

    GAUSSIAN = "gaussian"
    UNKNOWN = "unknown"


class Mode(Enum):
    """Ranging direction: anchors transmit (OwA) or the sensor transmits (OwS)."""

    OWA = "owa"
    OWS = "ows"


def _require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ScenarioError(f"{field}: {message}")


@dataclass(frozen=True)
class PhysicsParams:
    """Physical constants of the ranging link.

    alpha: path gain at 1 m (dimensionless)
    beta: path-loss exponent (dimensionless)
    c: propagation speed (m/s)
    mean_square_bandwidth: mean square bandwidth of the ranging signal (rad^2/s^2)
    noise_psd: two-sided noise power spectral density (W/Hz)
    """

    alpha: float
    beta: float
    c: float
    mean_square_bandwidth: float
    noise_psd: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "c", "mean_square_bandwidth", "noise_psd"):
            value = getattr(self, name)
            _require(isinstance(value, (int, float)) and math.isfinite(value), name, "must be a finite number")
            object.__setattr__(self, name, float(value))
        _require(self.alpha > 0, "alpha", "must be > 0")
        _require(self.beta >= 0, "beta", "must be >= 0")
        _require(self.c > 0, "c", "must be > 0")
        _require(self.mean_square_bandwidth > 0, "mean_square_bandwidth", "must be > 0")
        _require(self.noise_psd > 0, "noise_psd", "must be > 0")


@dataclass(frozen=True)
class AccuracyTarget:
    """Required localization accuracy: P(error <= radius) >= probability."""

    radius: float
    probability: float
    distribution: Distribution

    def __post_init__(self) -> None:
        _require(
            isinstance(self.radius, (int, float)) and math.isfinite(self.radius) and self.radius > 0,
            "radius",
            "must be a finite number > 0",
        )
        _require(
            isinstance(self.probability, (int, float)) and 0.0 < self.probability < 1.0,
            "probability",
            "must lie strictly between 0 and 1",
        )
        _require(isinstance(self.distribution, Distribution), "distribution", "must be a Distribution")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "probability", float(self.probability))


@dataclass(eq=False)
class Scenario:
    """A full problem instance.

    anchor_points: (M, 2) candidate anchor coordinates in meters
    sensor_points: (S, 2) sensor grid coordinates in meters
    physics: link constants
    accuracy: accuracy requirement
    mode: Mode.OWA (energies optimized, bounded by energy_bound) or
          Mode.OWS (Boolean selection optimized, sensor transmits at sensor_energy)
    energy_bound: per-anchor ranging energy budget in J (OwA mode)
    sensor_energy: sensor transmit energy in J (OwS mode)
    """

    anchor_points: np.ndarray
    sensor_points: np.ndarray
    physics: PhysicsParams
    accuracy: AccuracyTarget
    mode: Mode
    energy_bound: float | None = None
    sensor_energy: float | None = None

    def __post_init__(self) -> None:
        anchors = np.ascontiguousarray(np.asarray(self.anchor_points, dtype=float))
        sensors = np.ascontiguousarray(np.asarray(self.sensor_points, dtype=float))
        _require(anchors.ndim == 2 and anchors.shape[1] == 2, "anchor_points", "must have shape (M, 2)")
        _require(sensors.ndim == 2 and sensors.shape[1] == 2, "sensor_points", "must have shape (S, 2)")
        _require(anchors.shape[0] >= 1, "anchor_points", "need at least one anchor")
        _require(sensors.shape[0] >= 1, "sensor_points", "need at least one sensor point")
        _require(bool(np.isfinite(anchors).all()), "anchor_points", "coordinates must be finite")
        _require(bool(np.isfinite(sensors).all()), "sensor_points", "coordinates must be finite")
        diff = sensors[:, None, :] - anchors[None, :, :]
        dist_sq = np.einsum("smi,smi->sm", diff, diff)
        if not (dist_sq > 0.0).all():
            s_idx, a_idx = divmod(int(np.argmin(dist_sq)), anchors.shape[0])
            raise ScenarioError(
                f"anchor_points/sensor_points: anchor {a_idx} coincides with sensor point {s_idx}"
            )
        _require(isinstance(self.physics, PhysicsParams), "physics", "must be PhysicsParams")
        _require(isinstance(self.accuracy, AccuracyTarget), "accuracy", "must be AccuracyTarget")
        _require(isinstance(self.mode, Mode), "mode", "must be a Mode")
        if self.mode is Mode.OWA:
            _require(
                self.energy_bound is not None and math.isfinite(self.energy_bound) and self.energy_bound > 0,
                "energy_bound",
                "must be a finite number > 0 in owa mode",
            )
            object.__setattr__(self, "energy_bound", float(self.energy_bound))
        else:
            _require(
                self.sensor_energy is not None and math.isfinite(self.sensor_energy) and self.sensor_energy > 0,
                "sensor_energy",
                "must be a finite number > 0 in ows mode",
            )
            object.__setattr__(self, "sensor_energy", float(self.sensor_energy))
        anchors.flags.writeable = False
        sensors.flags.writeable = False
        object.__setattr__(self, "anchor_points", anchors)
        object.__setattr__(self, "sensor_points", sensors)

    @property
    def num_anchors(self) -> int:
        return int(self.anchor_points.shape[0])

    @property
    def num_sensor_points(self) -> int:
        return int(self.sensor_points.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            np.array_equal(self.anchor_points, other.anchor_points)
            and np.array_equal(self.sensor_points, other.sensor_points)
            and self.physics == other.physics
            and self.accuracy == other.accuracy
            and self.mode == other.mode
            and self.energy_bound == other.energy_bound
            and self.sensor_energy == other.sensor_energy
        )


def make_grid(bounding_box: Any, counts: Any) -> np.ndarray:
    """Uniform grid over a rectangle, both endpoints included.

    bounding_box: ((x_min, x_max), (y_min, y_max)) in meters
    counts: (n_x, n_y) points per axis, each >= 1

    Returns an (n_x * n_y, 2) array in row-major order with x varying fastest.
    An axis with count 1 places its single coordinate at the interval midpoint.
    """
    box = np.asarray(bounding_box, dtype=float)
    if box.shape != (2, 2):
        raise ScenarioError("bounding_box: must be a 2x2 array of axis extents")
    if not np.isfinite(box).all():
        raise ScenarioError("bounding_box: extents must be finite")
    if box[0, 0] > box[0, 1] or box[1, 0] > box[1, 1]:
        raise ScenarioError("bounding_box: each axis needs min <= max")
    try:
        nx, ny = (int(c) for c in counts)
    except (TypeError, ValueError) as exc:
        raise ScenarioError("counts: must be two integers") from exc
    if nx < 1 or ny < 1:
        raise ScenarioError("counts: must be >= 1 per axis")

    def axis(lo: float, hi: float, n: int) -> np.ndarray:
        if n == 1:
            return np.array([(lo + hi) / 2.0])
        return np.linspace(lo, hi, n)

    xs = axis(box[0, 0], box[0, 1], nx)
    ys = axis(box[1, 0], box[1, 1], ny)
    return np.column_stack([np.tile(xs, ny), np.repeat(ys, nx)])


# --- file schema -----------------------------------------------------------
#
# mode: owa | ows
# physics:
#   alpha, beta, c_mps, mean_square_bandwidth_rad2_per_s2, noise_psd_w_per_hz
# accuracy:
#   radius_m, probability, distribution (gaussian | unknown)
# energy_bound_j (owa) / sensor_energy_j (ows)
# anchors / sensors: either
#   points_m: [[x, y], ...]
# or
#   grid: {x_min_m, x_max_m, y_min_m, y_max_m, counts: [nx, ny]}

_TOP_KEYS = {"mode", "physics", "accuracy", "energy_bound_j", "sensor_energy_j", "anchors", "sensors"}
_PHYSICS_KEYS = {"alpha", "beta", "c_mps", "mean_square_bandwidth_rad2_per_s2", "noise_psd_w_per_hz"}
_ACCURACY_KEYS = {"radius_m", "probability", "distribution"}
_GRID_KEYS = {"x_min_m", "x_max_m", "y_min_m", "y_max_m", "counts"}


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {sorted(unknown)}")


def _get(section: dict, key: str, where: str) -> Any:
    if key not in section:
        raise ScenarioError(f"{where}.{key}: missing")
    return section[key]


def _points_from_section(section: Any, where: str) -> np.ndarray:
    if not isinstance(section, dict):
        raise ScenarioError(f"{where}: must be a mapping with points_m or grid")
    _check_keys(section, {"points_m", "grid"}, where)
    if ("points_m" in section) == ("grid" in section):
        raise ScenarioError(f"{where}: give exactly one of points_m or grid")
    if "points_m" in section:
        pts = np.asarray(section["points_m"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ScenarioError(f"{where}.points_m: must be a list of [x, y] pairs")
        return pts
    grid = section["grid"]
    if not isinstance(grid, dict):
        raise ScenarioError(f"{where}.grid: must be a mapping")
    _check_keys(grid, _GRID_KEYS, f"{where}.grid")
    box = (
        (_get(grid, "x_min_m", f"{where}.grid"), _get(grid, "x_max_m", f"{where}.grid")),
        (_get(grid, "y_min_m", f"{where}.grid"), _get(grid, "y_max_m", f"{where}.grid")),
    )
    return make_grid(box, _get(grid, "counts", f"{where}.grid"))


def scenario_from_dict(doc: Any) -> Scenario:
    """Build and validate a Scenario from a parsed schema document."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    _check_keys(doc, _TOP_KEYS, "scenario")

    mode_raw = _get(doc, "mode", "scenario")
    try:
        mode = Mode(mode_raw)
    except ValueError:
        raise ScenarioError(f"mode: must be 'owa' or 'ows', got {mode_raw!r}") from None

    phys = _get(doc, "physics", "scenario")
    if not isinstance(phys, dict):
        raise ScenarioError("physics: must be a mapping")
    _check_keys(phys, _PHYSICS_KEYS, "physics")
    physics = PhysicsParams(
        alpha=_get(phys, "alpha", "physics"),
        beta=_get(phys, "beta", "physics"),
        c=_get(phys, "c_mps", "physics"),
        mean_square_bandwidth=_get(phys, "mean_square_bandwidth_rad2_per_s2", "physics"),
        noise_psd=_get(phys, "noise_psd_w_per_hz", "physics"),
    )

    acc = _get(doc, "accuracy", "scenario")
    if not isinstance(acc, dict):
        raise ScenarioError("accuracy: must be a mapping")
    _check_keys(acc, _ACCURACY_KEYS, "accuracy")
    dist_raw = _get(acc, "distribution", "accuracy")
    try:
        distribution = Distribution(dist_raw)
    except ValueError:
        raise ScenarioError(f"distribution: must be 'gaussian' or 'unknown', got {dist_raw!r}") from None
    accuracy = AccuracyTarget(
        radius=_get(acc, "radius_m", "accuracy"),
        probability=_get(acc, "probability", "accuracy"),
        distribution=distribution,
    )

    energy_bound = doc.get("energy_bound_j")
    sensor_energy = doc.get("sensor_energy_j")
    if mode is Mode.OWA and energy_bound is None:
        raise ScenarioError("energy_bound_j: missing (required in owa mode)")
    if mode is Mode.OWS and sensor_energy is None:
        raise ScenarioError("sensor_energy_j: missing (required in ows mode)")

    anchors = _points_from_section(_get(doc, "anchors", "scenario"), "anchors")
    sensors = _points_from_section(_get(doc, "sensors", "scenario"), "sensors")

    return Scenario(
        anchor_points=anchors,
        sensor_points=sensors,
        physics=physics,
        accuracy=accuracy,
        mode=mode,
        energy_bound=energy_bound,
        sensor_energy=sensor_energy,
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Canonical schema document for a Scenario (explicit point lists)."""
    doc: dict[str, Any] = {"mode": scenario.mode.value}
    doc["physics"] = {
        "alpha": float(scenario.physics.alpha),
        "beta": float(scenario.physics.beta),
        "c_mps": float(scenario.physics.c),
        "mean_square_bandwidth_rad2_per_s2": float(scenario.physics.mean_square_bandwidth),
        "noise_psd_w_per_hz": float(scenario.physics.noise_psd),
    }
    doc["accuracy"] = {
        "radius_m": float(scenario.accuracy.radius),
        "probability": float(scenario.accuracy.probability),
        "distribution": scenario.accuracy.distribution.value,
    }
    if scenario.mode is Mode.OWA:
        doc["energy_bound_j"] = float(scenario.energy_bound)
    else:
        doc["sensor_energy_j"] = float(scenario.sensor_energy)
    doc["anchors"] = {"points_m": [[float(x), float(y)] for x, y in scenario.anchor_points]}
    doc["sensors"] = {"points_m": [[float(x), float(y)] for x, y in scenario.sensor_points]}
    return doc


def load_scenario(path: str) -> Scenario:
    """Load and validate a scenario file.

    Raises ScenarioError on parse or validation problems; the message names
    the offending field. I/O errors propagate as OSError.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"could not parse scenario file {path}: {exc}") from exc
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path: str) -> None:
    """Write a scenario in canonical form (explicit points, fixed key order)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_yaml(scenario))


def _canonical_yaml(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)


def scenario_digest(scenario: Scenario) -> str:
    """SHA-256 of the canonical serialized form; stable across load/save cycles."""
    return hashlib.sha256(_canonical_yaml(scenario).encode("utf-8")).hexdigest()
