"""Sparse ranging-energy design when the anchors transmit.

The accuracy requirement is a minimum-eigenvalue floor on the Fisher
information at every sensor point. With anchors transmitting, information is
linear in the per-anchor ranging energies, so a sparse adequate anchor set is
found through a weighted energy relaxation: minimize a weighted total energy
subject to one 2x2 linear matrix inequality per sensor point and the
per-anchor budget. Reweighting each energy by 1/(epsilon + e_m) and resolving
drives small energies to zero and concentrates the rest onto few anchors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conesolver import ConeProgram, PsdBlock, SolverSettings, SolveStatus, solve
from .errors import InfeasibleScenarioError, SolverFailureError
from .ranging import accuracy_threshold, feasibility_report, fim_term_stack
from .scenario import Mode, Scenario

__all__ = [
    "SUPPORT_TOL",
    "EnergyPlacement",
    "ReweightRecord",
    "solve_l1",
    "solve_reweighted",
]

# fraction of the energy budget below which an energy counts as zero
SUPPORT_TOL = 1e-6

# the relaxations become degenerate exactly when a support has collapsed
# (rank-1 coefficient matrices lose strict complementarity), and with box
# bounds active the dual residual can floor a small factor above the float64
# accuracy limit near sqrt(machine epsilon) while the gap sits decades below
# its own bar, so the feasibility tolerance leaves that headroom; the
# returned margin is recomputed independently and is the binding guarantee
_PLACEMENT_SETTINGS = SolverSettings(gap_tol=1e-7, feas_tol=3e-7)


@dataclass(frozen=True)
class ReweightRecord:
    """One reweighting iteration: the weights used and what they produced."""

    iteration: int
    weights: np.ndarray
    objective: float
    total_energy: float
    support_size: int

    def __post_init__(self) -> None:
        self.weights.setflags(write=False)


@dataclass(frozen=True)
class EnergyPlacement:
    """Per-anchor ranging energies meeting the accuracy floor everywhere.

    support lists the anchors whose energy exceeds SUPPORT_TOL times the
    budget; margin is the worst-point feasibility margin recomputed from the
    returned energies, never copied from the solver.
    """

    energies: np.ndarray
    support: np.ndarray
    total_energy: float
    margin: float
    trace: tuple[ReweightRecord, ...]

    def __post_init__(self) -> None:
        self.energies.setflags(write=False)
        self.support.setflags(write=False)

    @property
    def support_size(self) -> int:
        return int(self.support.shape[0])


def _energy_program(
    scenario: Scenario, objective: np.ndarray, active: np.ndarray | None = None
) -> ConeProgram:
    """One LMI per sensor point, normalized by the threshold for conditioning.

    active restricts the variables to a subset of the anchors, with every
    other anchor held at zero energy.
    """
    terms = fim_term_stack(scenario) / accuracy_threshold(scenario.accuracy)
    if active is not None:
        terms = terms[:, active, :, :]
        objective = objective[active]
    m = objective.shape[0]
    var_indices = np.arange(m)
    blocks = [
        PsdBlock(size=2, offset=-np.eye(2), var_indices=var_indices, coeffs=terms[s])
        for s in range(terms.shape[0])
    ]
    return ConeProgram(
        objective=objective,
        lower=np.zeros(m),
        upper=np.full(m, float(scenario.energy_bound)),
        psd_blocks=blocks,
    )


def _require_owa(scenario: Scenario) -> None:
    if scenario.mode is not Mode.OWA:
        raise ValueError(
            f"energy design requires mode '{Mode.OWA.value}', got '{scenario.mode.value}'"
        )


def _require_feasible(scenario: Scenario) -> None:
    """Check the budget point directly before any optimization is attempted."""
    full = np.full(scenario.num_anchors, float(scenario.energy_bound))
    report = feasibility_report(scenario, full)
    if report.margin < 0.0:
        worst = report.worst_sensor_index
        raise InfeasibleScenarioError(
            "accuracy floor unreachable even with every anchor at the full "
            f"energy budget: sensor point {worst} reaches min eigenvalue "
            f"{report.min_eig_by_sensor[worst]:.6e} vs threshold "
            f"{report.threshold:.6e}",
            worst_sensor_index=worst,
            margin=report.margin,
        )


# reweighting rounds after the first only steer the support, whose floor is
# SUPPORT_TOL of the budget, so an iterate a decade short of the target
# tolerances still identifies it; the first round's value feeds energy
# comparisons and stays strict
_USABLE_ACCURACY = 1e-6


def _solve_energy(
    scenario: Scenario,
    weights: np.ndarray,
    settings: SolverSettings,
    active: np.ndarray | None = None,
    strict: bool = True,
) -> np.ndarray:
    outcome = solve(_energy_program(scenario, weights, active), settings)
    if outcome.status is not SolveStatus.OPTIMAL:
        usable = (
            not strict
            and outcome.x is not None
            and outcome.primal_residual <= _USABLE_ACCURACY
            and outcome.dual_residual <= _USABLE_ACCURACY
            and outcome.duality_gap <= _USABLE_ACCURACY
        )
        if not usable:
            detail = f": {outcome.certificate}" if outcome.certificate else ""
            raise SolverFailureError(
                f"energy design solve ended with status {outcome.status.value} "
                f"(gap {outcome.duality_gap:.3e}, primal residual "
                f"{outcome.primal_residual:.3e}, dual residual "
                f"{outcome.dual_residual:.3e}){detail}"
            )
    solved = np.clip(outcome.x, 0.0, float(scenario.energy_bound))
    if active is None:
        return solved
    energies = np.zeros(scenario.num_anchors)
    energies[active] = solved
    return energies


def solve_l1(scenario: Scenario, settings: SolverSettings | None = None) -> EnergyPlacement:
    """Minimum-total-energy design: the plain unweighted relaxation.

    Raises InfeasibleScenarioError when even the full budget on every anchor
    misses the accuracy floor.
    """
    return solve_reweighted(scenario, epsilon=1.0, k_max=1, settings=settings)


def solve_reweighted(
    scenario: Scenario,
    epsilon: float = 1e-8,
    k_max: int = 15,
    settings: SolverSettings | None = None,
) -> EnergyPlacement:
    """Sparsity-enhancing iteration: reweight by 1/(epsilon + e_m) and resolve.

    Starts from unit weights, so the first iteration is exactly the plain
    relaxation and k_max = 1 reduces to solve_l1. Stops early when the support
    set repeats and the weighted objective has settled to 1e-8 relative.
    """
    _require_owa(scenario)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if settings is None:
        settings = _PLACEMENT_SETTINGS
    _require_feasible(scenario)

    support_floor = SUPPORT_TOL * float(scenario.energy_bound)
    weights = np.ones(scenario.num_anchors)
    trace: list[ReweightRecord] = []
    active: np.ndarray | None = None
    prev_support: np.ndarray | None = None
    prev_objective = np.inf
    for k in range(k_max):
        try:
            energies = _solve_energy(scenario, weights, settings, active, strict=k == 0)
        except SolverFailureError:
            if k == 0:
                raise
            # reweighting walks toward ever more degenerate programs; when a
            # later round becomes unsolvable the previous round's design is
            # already feasible and sparse, so keep it rather than fail
            break
        objective = float(weights @ energies)
        support = np.flatnonzero(energies > support_floor)
        trace.append(
            ReweightRecord(
                iteration=k,
                weights=weights,
                objective=objective,
                total_energy=float(energies.sum()),
                support_size=int(support.size),
            )
        )
        settled = abs(objective - prev_objective) <= 1e-8 * max(1.0, abs(prev_objective))
        if prev_support is not None and np.array_equal(support, prev_support) and settled:
            break
        prev_support = support
        prev_objective = objective
        weights = 1.0 / (epsilon + energies)
        # an anchor already driven below the support floor carries weight near
        # 1/epsilon, which prices any nonzero energy out of the optimum but
        # leaves the solver a coordinate whose objective entry is decades
        # above the rest; fixing it at zero states the same optimum without
        # the dynamic range
        active = support

    report = feasibility_report(scenario, energies)
    return EnergyPlacement(
        energies=energies,
        support=support,
        total_energy=float(energies.sum()),
        margin=report.margin,
        trace=tuple(trace),
    )
