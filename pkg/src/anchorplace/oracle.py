"""Exhaustive ground-truth searches for small instances.

Enumerates anchor subsets in increasing cardinality and checks each directly
against the accuracy floor, so relaxation-based results can be compared with
the true combinatorial optimum whenever the instance is small enough to
enumerate. The searches are deliberately plain: their value is obviousness,
not speed, and the default size cap keeps the worst case at 2^16 subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .conesolver import ConeProgram, PsdBlock, SolverSettings, SolveStatus, solve
from .errors import SizeCapError, SolverFailureError
from .ranging import accuracy_threshold, fim_term_stack, min_eigenvalues_2x2
from .scenario import Mode, Scenario

__all__ = [
    "DEFAULT_SIZE_CAP",
    "CardinalitySearch",
    "EnergySearch",
    "exhaustive_min_cardinality",
    "exhaustive_min_energy_owa",
]

DEFAULT_SIZE_CAP = 16

# reduced solves share the relaxation layer's tolerance rationale: collapsed
# supports are degenerate, so the feasibility bar leaves headroom above the
# float64 dual-residual floor while the gap bar stays tight
_ORACLE_SETTINGS = SolverSettings(gap_tol=1e-7, feas_tol=3e-7)


@dataclass(frozen=True)
class CardinalitySearch:
    """Smallest feasible anchor-subset size, with every witness at that size.

    feasible is False when even the full candidate set misses the accuracy
    floor; witnesses are Boolean masks over the candidate anchors.
    """

    feasible: bool
    cardinality: int | None
    witnesses: tuple[np.ndarray, ...]
    subsets_checked: int


@dataclass(frozen=True)
class EnergySearch:
    """Least-total-energy design among minimum-cardinality supports.

    energies is a full-length vector with zeros off the winning support.
    """

    feasible: bool
    support: np.ndarray | None
    energies: np.ndarray | None
    total_energy: float | None
    subsets_checked: int


def _check_cap(scenario: Scenario, max_m: int) -> None:
    m = scenario.num_anchors
    if m > max_m:
        raise SizeCapError(
            f"{m} candidate anchors exceed the exhaustive-search cap of "
            f"{max_m}; the subset count grows as 2^M"
        )


def _saturated_stack(scenario: Scenario) -> np.ndarray:
    """Per-anchor information terms at the largest admissible weights.

    Information is monotone in the weights, so a subset supports the accuracy
    floor at some admissible weighting exactly when it does so at saturation:
    the energy budget per anchor when anchors transmit, weight one otherwise.
    """
    stack = fim_term_stack(scenario)
    if scenario.mode is Mode.OWA:
        return stack * float(scenario.energy_bound)
    return stack


def _worst_eig(stack: np.ndarray, idx: np.ndarray) -> float:
    fims = stack[:, idx, :, :].sum(axis=1)
    return float(min_eigenvalues_2x2(fims).min())


def exhaustive_min_cardinality(
    scenario: Scenario, max_m: int = DEFAULT_SIZE_CAP
) -> CardinalitySearch:
    """Enumerate subsets by cardinality; return the first feasible size.

    A superset of a feasible subset is always feasible (the information terms
    are positive semidefinite), so an infeasible full set settles the search
    with a single check.
    """
    _check_cap(scenario, max_m)
    m = scenario.num_anchors
    stack = _saturated_stack(scenario)
    lam = accuracy_threshold(scenario.accuracy)
    checked = 1
    if _worst_eig(stack, np.arange(m)) - lam < 0.0:
        return CardinalitySearch(
            feasible=False, cardinality=None, witnesses=(), subsets_checked=checked
        )
    for k in range(1, m + 1):
        witnesses: list[np.ndarray] = []
        for combo in combinations(range(m), k):
            checked += 1
            if _worst_eig(stack, np.asarray(combo, dtype=np.intp)) - lam >= 0.0:
                mask = np.zeros(m, dtype=bool)
                mask[list(combo)] = True
                witnesses.append(mask)
        if witnesses:
            return CardinalitySearch(
                feasible=True,
                cardinality=k,
                witnesses=tuple(witnesses),
                subsets_checked=checked,
            )
    raise AssertionError("full set feasible but no cardinality admitted a witness")


def _reduced_min_energy(
    stack: np.ndarray,
    lam: float,
    idx: np.ndarray,
    budget: float,
    settings: SolverSettings,
) -> np.ndarray:
    """Minimum total energy on a fixed support, as a reduced cone program."""
    terms = stack[:, idx, :, :] / lam
    nsel = int(idx.size)
    var_indices = np.arange(nsel)
    blocks = [
        PsdBlock(size=2, offset=-np.eye(2), var_indices=var_indices, coeffs=terms[s])
        for s in range(terms.shape[0])
    ]
    program = ConeProgram(
        objective=np.ones(nsel),
        lower=np.zeros(nsel),
        upper=np.full(nsel, budget),
        psd_blocks=blocks,
    )
    outcome = solve(program, settings)
    if outcome.status is not SolveStatus.OPTIMAL:
        detail = f": {outcome.certificate}" if outcome.certificate else ""
        raise SolverFailureError(
            f"reduced energy solve on support {idx.tolist()} ended with "
            f"status {outcome.status.value}{detail}"
        )
    return np.clip(outcome.x, 0.0, budget)


def exhaustive_min_energy_owa(
    scenario: Scenario,
    max_m: int = DEFAULT_SIZE_CAP,
    settings: SolverSettings | None = None,
) -> EnergySearch:
    """Least total energy among the smallest supports meeting the floor.

    Supports are screened by the saturation check first; only feasible ones
    get the reduced convex solve. Ties in total energy keep the support that
    enumerates first (subsets in lexicographic order within a cardinality).
    """
    if scenario.mode is not Mode.OWA:
        raise ValueError(
            f"energy search requires mode '{Mode.OWA.value}', got '{scenario.mode.value}'"
        )
    _check_cap(scenario, max_m)
    if settings is None:
        settings = _ORACLE_SETTINGS
    m = scenario.num_anchors
    budget = float(scenario.energy_bound)
    stack = fim_term_stack(scenario)
    saturated = stack * budget
    lam = accuracy_threshold(scenario.accuracy)
    checked = 1
    if _worst_eig(saturated, np.arange(m)) - lam < 0.0:
        return EnergySearch(
            feasible=False,
            support=None,
            energies=None,
            total_energy=None,
            subsets_checked=checked,
        )
    for k in range(1, m + 1):
        best_support: np.ndarray | None = None
        best_energies: np.ndarray | None = None
        best_total = np.inf
        for combo in combinations(range(m), k):
            checked += 1
            idx = np.asarray(combo, dtype=np.intp)
            if _worst_eig(saturated, idx) - lam < 0.0:
                continue
            reduced = _reduced_min_energy(stack, lam, idx, budget, settings)
            total = float(reduced.sum())
            if total < best_total:
                best_support = idx
                best_total = total
                best_energies = reduced
        if best_support is not None:
            energies = np.zeros(m)
            energies[best_support] = best_energies
            return EnergySearch(
                feasible=True,
                support=best_support,
                energies=energies,
                total_energy=best_total,
                subsets_checked=checked,
            )
    raise AssertionError("full set feasible but no cardinality admitted a support")
