"""Shared instance builders for the test suite.

Unit physics (every link constant 1) keeps hand calculations short: the
information term for an anchor at distance d is d^(-beta-2) times the outer
product of the anchor-to-sensor offset. Random instances pick the accuracy
threshold as a seeded fraction of what the saturated full set achieves, so
they are feasible by construction but never trivially loose.
"""

from __future__ import annotations

import math

import numpy as np

from anchorplace import (
    AccuracyTarget,
    Distribution,
    Mode,
    PhysicsParams,
    Scenario,
    feasibility_report,
)

UNIT_PHYSICS = PhysicsParams(
    alpha=1.0, beta=2.0, c=1.0, mean_square_bandwidth=1.0, noise_psd=1.0
)


def gaussian_target(threshold: float, probability: float = 0.95) -> AccuracyTarget:
    """Accuracy target whose eigenvalue floor equals the given threshold."""
    radius = math.sqrt(2.0 * math.log(1.0 / (1.0 - probability)) / threshold)
    return AccuracyTarget(
        radius=radius, probability=probability, distribution=Distribution.GAUSSIAN
    )


def owa_scenario(anchors, sensors, threshold: float, energy_bound: float = 10.0) -> Scenario:
    return Scenario(
        anchor_points=np.asarray(anchors, dtype=float),
        sensor_points=np.asarray(sensors, dtype=float),
        physics=UNIT_PHYSICS,
        accuracy=gaussian_target(threshold),
        mode=Mode.OWA,
        energy_bound=energy_bound,
    )


def ows_scenario(anchors, sensors, threshold: float, sensor_energy: float = 10.0) -> Scenario:
    return Scenario(
        anchor_points=np.asarray(anchors, dtype=float),
        sensor_points=np.asarray(sensors, dtype=float),
        physics=UNIT_PHYSICS,
        accuracy=gaussian_target(threshold),
        mode=Mode.OWS,
        sensor_energy=sensor_energy,
    )


def _random_geometry(rng: np.random.Generator, num_anchors: int, num_sensors: int):
    anchors = rng.uniform(0.0, 4.0, size=(num_anchors, 2))
    sensors = rng.uniform(1.0, 3.0, size=(num_sensors, 2))
    return anchors, sensors


def random_owa_instance(
    seed: int,
    num_anchors: int = 8,
    num_sensors: int = 3,
    fraction: tuple[float, float] = (0.2, 0.7),
    energy_bound: float = 10.0,
) -> Scenario:
    """Feasible-by-construction random instance in anchors-transmit mode.

    The threshold is a seeded fraction of the saturated full-set minimum
    eigenvalue, so the margin at the budget point is always positive.
    """
    rng = np.random.default_rng(seed)
    anchors, sensors = _random_geometry(rng, num_anchors, num_sensors)
    frac = rng.uniform(*fraction)
    probe = owa_scenario(anchors, sensors, threshold=1.0, energy_bound=energy_bound)
    achievable = float(
        feasibility_report(probe, np.full(num_anchors, energy_bound)).min_eig_by_sensor.min()
    )
    return owa_scenario(anchors, sensors, threshold=frac * achievable, energy_bound=energy_bound)


def random_ows_instance(
    seed: int,
    num_anchors: int = 8,
    num_sensors: int = 3,
    fraction: tuple[float, float] = (0.2, 0.7),
    sensor_energy: float = 10.0,
) -> Scenario:
    """Feasible-by-construction random instance in sensor-transmits mode."""
    rng = np.random.default_rng(seed)
    anchors, sensors = _random_geometry(rng, num_anchors, num_sensors)
    frac = rng.uniform(*fraction)
    probe = ows_scenario(anchors, sensors, threshold=1.0, sensor_energy=sensor_energy)
    achievable = float(
        feasibility_report(probe, np.ones(num_anchors)).min_eig_by_sensor.min()
    )
    return ows_scenario(anchors, sensors, threshold=frac * achievable, sensor_energy=sensor_energy)
