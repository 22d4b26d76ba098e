"""Range-estimate variances, Fisher information, accuracy thresholds, margins.

All position information about a sensor at s from ranging against anchor m is
captured by a rank-1 2x2 contribution proportional to the outer product of the
unit direction (s - a_m); contributions add linearly in the ranging energies
(anchors transmit) or the selection weights (sensor transmits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularFimError
from .scenario import AccuracyTarget, Distribution, Mode, Scenario

__all__ = [
    "FimTerm",
    "FeasibilityReport",
    "rho_value",
    "range_variance",
    "fim_term",
    "fim_term_stack",
    "assemble_fim",
    "accuracy_threshold",
    "min_eigenvalues_2x2",
    "feasibility_report",
    "crb_matrix",
]


@dataclass(frozen=True)
class FimTerm:
    """Per-anchor Fisher information contribution at one sensor point.

    matrix is symmetric PSD with rank <= 1. Units are 1/m^2 per J in OwA mode;
    in OwS mode the sensor energy is already folded in and units are 1/m^2.
    """

    matrix: np.ndarray
    anchor_index: int
    sensor_index: int


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst-case eigenvalue check of a weighting against the accuracy threshold.

    margin >= 0 means the accuracy requirement holds at every sensor point.
    """

    min_eig_by_sensor: np.ndarray
    worst_sensor_index: int
    margin: float
    threshold: float


def rho_value(scenario: Scenario) -> float:
    """Range-error scale rho = c^2 * (N/2) / Fbar^2 in m^2 * J."""
    p = scenario.physics
    return p.c * p.c * p.noise_psd / p.mean_square_bandwidth


def range_variance(scenario: Scenario, anchor_index: int, sensor: np.ndarray, energy: float) -> float:
    """Variance of one range estimate: e^-1 * rho * d^beta / alpha, in m^2."""
    if not energy > 0:
        raise ValueError(f"energy must be > 0, got {energy}")
    anchor = scenario.anchor_points[anchor_index]
    sensor = np.asarray(sensor, dtype=float)
    d = float(np.hypot(sensor[0] - anchor[0], sensor[1] - anchor[1]))
    if d <= 0.0:
        raise ValueError(f"sensor coincides with anchor {anchor_index}; distance must be > 0")
    p = scenario.physics
    return rho_value(scenario) * d**p.beta / (p.alpha * energy)


def fim_term(scenario: Scenario, anchor_index: int, sensor_index: int) -> FimTerm:
    """Rank-1 information term alpha/rho * d^(-beta-2) * (s-a)(s-a)^T.

    In OwS mode the term is additionally scaled by the sensor energy, so that
    downstream selection weights stay dimensionless.
    """
    anchor = scenario.anchor_points[anchor_index]
    sensor = scenario.sensor_points[sensor_index]
    diff = sensor - anchor
    d_sq = float(diff @ diff)
    if d_sq <= 0.0:
        raise ValueError(f"sensor point {sensor_index} coincides with anchor {anchor_index}")
    p = scenario.physics
    scale = p.alpha / rho_value(scenario) * d_sq ** (-(p.beta + 2.0) / 2.0)
    if scenario.mode is Mode.OWS:
        scale *= scenario.sensor_energy
    return FimTerm(matrix=scale * np.outer(diff, diff), anchor_index=anchor_index, sensor_index=sensor_index)


def fim_term_stack(scenario: Scenario) -> np.ndarray:
    """All per-anchor terms at all sensor points, shape (S, M, 2, 2)."""
    anchors = scenario.anchor_points
    sensors = scenario.sensor_points
    diff = sensors[:, None, :] - anchors[None, :, :]
    d_sq = np.einsum("smi,smi->sm", diff, diff)
    p = scenario.physics
    scale = p.alpha / rho_value(scenario) * d_sq ** (-(p.beta + 2.0) / 2.0)
    if scenario.mode is Mode.OWS:
        scale = scale * scenario.sensor_energy
    return scale[:, :, None, None] * np.einsum("smi,smj->smij", diff, diff)


def assemble_fim(scenario: Scenario, weights: np.ndarray, sensor_index: int) -> np.ndarray:
    """Weighted sum of per-anchor terms at one sensor point; symmetric PSD 2x2."""
    weights = _checked_weights(scenario, weights)
    anchors = scenario.anchor_points
    sensor = scenario.sensor_points[sensor_index]
    diff = sensor[None, :] - anchors
    d_sq = np.einsum("mi,mi->m", diff, diff)
    p = scenario.physics
    scale = p.alpha / rho_value(scenario) * d_sq ** (-(p.beta + 2.0) / 2.0)
    if scenario.mode is Mode.OWS:
        scale = scale * scenario.sensor_energy
    return np.einsum("m,mi,mj->ij", weights * scale, diff, diff)


def accuracy_threshold(target: AccuracyTarget) -> float:
    """Smallest FIM eigenvalue (1/m^2) guaranteeing the coverage requirement."""
    base = 2.0 / (target.radius * target.radius)
    tail = 1.0 / (1.0 - target.probability)
    if target.distribution is Distribution.GAUSSIAN:
        return base * math.log(tail)
    return base * tail


def min_eigenvalues_2x2(mats: np.ndarray) -> np.ndarray:
    """Smallest eigenvalues of a (..., 2, 2) symmetric stack, closed form."""
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 1]
    mean = 0.5 * (a + c)
    radius = np.hypot(0.5 * (a - c), b)
    return mean - radius


def feasibility_report(scenario: Scenario, weights: np.ndarray) -> FeasibilityReport:
    """Minimum FIM eigenvalue at every sensor point versus the threshold."""
    weights = _checked_weights(scenario, weights)
    fims = np.einsum("m,smij->sij", weights, fim_term_stack(scenario))
    min_eigs = min_eigenvalues_2x2(fims)
    worst = int(np.argmin(min_eigs))
    lam = accuracy_threshold(scenario.accuracy)
    return FeasibilityReport(
        min_eig_by_sensor=min_eigs,
        worst_sensor_index=worst,
        margin=float(min_eigs[worst] - lam),
        threshold=lam,
    )


def crb_matrix(scenario: Scenario, weights: np.ndarray, sensor_index: int) -> np.ndarray:
    """Inverse of the assembled FIM (m^2); the estimator covariance lower bound.

    Raises SingularFimError when the smallest eigenvalue is at or below
    1e-12 times the trace, which signals collinear or degenerate geometry.
    """
    fim = assemble_fim(scenario, weights, sensor_index)
    a, b, c = fim[0, 0], fim[0, 1], fim[1, 1]
    trace = a + c
    min_eig = 0.5 * (a + c) - math.hypot(0.5 * (a - c), b)
    if min_eig <= 1e-12 * trace:
        raise SingularFimError(
            f"assembled FIM at sensor point {sensor_index} is singular "
            f"(min eigenvalue {min_eig:.3e} vs trace {trace:.3e})"
        )
    det = a * c - b * b
    return np.array([[c, -b], [-b, a]]) / det


def _checked_weights(scenario: Scenario, weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (scenario.num_anchors,):
        raise ValueError(
            f"weights must have shape ({scenario.num_anchors},), got {weights.shape}"
        )
    if not np.isfinite(weights).all() or (weights < 0).any():
        raise ValueError("weights must be finite and >= 0")
    return weights
