"""Sparse anchor selection when the sensor transmits.

With the sensor transmitting at a fixed energy, each anchor either
participates or not, so the design variable is a Boolean selection vector.
The Boolean constraint w_m^2 = w_m is lifted through W = w w' into linear
equalities diag(W) = w plus one positive-semidefinite border block on
[W w; w' 1], and the rank-1 requirement on W is dropped. The relaxation is
sharpened by the same 1/(epsilon + w_m) reweighting used for the energy
design, and randomized rounding recovers a Boolean selection from the
fractional weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .conesolver import ConeProgram, PsdBlock, SolverSettings, SolveStatus, solve
from .errors import InfeasibleScenarioError, SolverFailureError
from .placement_owa import SUPPORT_TOL
from .ranging import accuracy_threshold, feasibility_report, fim_term_stack
from .scenario import Mode, Scenario

__all__ = [
    "LiftedSolution",
    "RoundedSelection",
    "SelectionRecord",
    "optimize_sensor_energy",
    "randomize_round",
    "solve_reweighted_sdp",
    "solve_sdp_relaxation",
]

# same rationale as the energy design: the lifted programs lose strict
# complementarity as the selection polarizes, so the feasibility bar leaves
# headroom above the float64 dual-residual floor; Boolean candidates are
# always re-checked by eigenvalue before anything is reported feasible
_SELECTION_SETTINGS = SolverSettings(gap_tol=1e-7, feas_tol=3e-7)

# the lifted matrix is unconstrained off the diagonal, so the optimal face
# is flat and the border slack approaches rank one; measured accuracy floors
# on degenerate instances land in the 1e-7..8e-7 band. An iterate there is
# still good for every consumer: the cardinality bound is compared with 1e-6
# headroom, reweighting only needs the support ordering, and rounding
# re-checks margins by eigenvalue
_USABLE_ACCURACY = 1e-6


@dataclass(frozen=True)
class SelectionRecord:
    """One reweighting iteration of the lifted selection problem."""

    iteration: int
    weights: np.ndarray
    objective: float
    total_weight: float
    support_size: int

    def __post_init__(self) -> None:
        self.weights.setflags(write=False)


@dataclass(frozen=True)
class LiftedSolution:
    """Fractional selection weights with their lifted second-moment matrix.

    w holds the per-anchor selection weights in [0, 1]; W is the lifted
    matrix tied to w by diag(W) = w and the border block [W w; w' 1] >= 0.
    trace records one entry per reweighting iteration.
    """

    w: np.ndarray
    W: np.ndarray
    trace: tuple[SelectionRecord, ...]

    def __post_init__(self) -> None:
        self.w.setflags(write=False)
        self.W.setflags(write=False)

    @property
    def support(self) -> np.ndarray:
        """Indices of anchors whose weight exceeds SUPPORT_TOL."""
        return np.flatnonzero(self.w > SUPPORT_TOL)

    @property
    def support_size(self) -> int:
        return int(self.support.shape[0])

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())


@dataclass(frozen=True)
class RoundedSelection:
    """Boolean selection recovered from fractional weights.

    feasible restates the independent eigenvalue check, never a solver-side
    margin; an infeasible result is the best margin found, reported rather
    than raised.
    """

    selected: np.ndarray
    cardinality: int
    feasible: bool
    margin: float
    draws_used: int
    seed: int

    def __post_init__(self) -> None:
        self.selected.setflags(write=False)


def _require_ows(scenario: Scenario) -> None:
    if scenario.mode is not Mode.OWS:
        raise ValueError(
            f"anchor selection requires mode '{Mode.OWS.value}', got '{scenario.mode.value}'"
        )


def _require_feasible(scenario: Scenario) -> None:
    """Check the all-selected point directly before any optimization."""
    report = feasibility_report(scenario, np.ones(scenario.num_anchors))
    if report.margin < 0.0:
        worst = report.worst_sensor_index
        raise InfeasibleScenarioError(
            "accuracy floor unreachable even with every anchor selected: "
            f"sensor point {worst} reaches min eigenvalue "
            f"{report.min_eig_by_sensor[worst]:.6e} vs threshold "
            f"{report.threshold:.6e}",
            worst_sensor_index=worst,
            margin=report.margin,
        )


def _lifted_program(
    scenario: Scenario, objective_w: np.ndarray, active: np.ndarray | None = None
) -> ConeProgram:
    """Selection LMIs plus the lifted border block, threshold-normalized.

    Variables are (w, tril(W)) over the active anchors. The w bounds are
    implied by diag(W) = w together with the border block, so no box rows
    are added.
    """
    terms = fim_term_stack(scenario) / accuracy_threshold(scenario.accuracy)
    if active is not None:
        terms = terms[:, active, :, :]
        objective_w = objective_w[active]
    m = objective_w.shape[0]
    tril_r, tril_c = np.tril_indices(m)
    n = m + tril_r.shape[0]

    blocks = [
        PsdBlock(size=2, offset=-np.eye(2), var_indices=np.arange(m), coeffs=terms[s])
        for s in range(terms.shape[0])
    ]
    border_offset = np.zeros((m + 1, m + 1))
    border_offset[m, m] = 1.0
    blocks.append(
        PsdBlock(
            size=m + 1,
            offset=border_offset,
            var_indices=np.arange(n),
            entry_rows=np.concatenate([np.arange(m), tril_r]),
            entry_cols=np.concatenate([np.full(m, m), tril_c]),
            entry_vals=np.ones(n),
        )
    )

    equalities = []
    diag_pos = m + np.flatnonzero(tril_r == tril_c)
    for i in range(m):
        row = np.zeros(n)
        row[i] = -1.0
        row[diag_pos[i]] = 1.0
        equalities.append((row, 0.0))

    return ConeProgram(
        objective=np.concatenate([objective_w, np.zeros(n - m)]),
        lower=np.full(n, -np.inf),
        upper=np.full(n, np.inf),
        psd_blocks=blocks,
        linear_eq=equalities,
    )


def _solve_lifted(
    scenario: Scenario,
    weights: np.ndarray,
    settings: SolverSettings,
    active: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    outcome = solve(_lifted_program(scenario, weights, active), settings)
    if outcome.status is not SolveStatus.OPTIMAL:
        usable = (
            outcome.x is not None
            and outcome.primal_residual <= _USABLE_ACCURACY
            and outcome.dual_residual <= _USABLE_ACCURACY
            and outcome.duality_gap <= _USABLE_ACCURACY
        )
        if not usable:
            detail = f": {outcome.certificate}" if outcome.certificate else ""
            raise SolverFailureError(
                f"selection relaxation solve ended with status {outcome.status.value} "
                f"(gap {outcome.duality_gap:.3e}, primal residual "
                f"{outcome.primal_residual:.3e}, dual residual "
                f"{outcome.dual_residual:.3e}){detail}"
            )
    m = scenario.num_anchors if active is None else int(active.shape[0])
    w_part = np.clip(outcome.x[:m], 0.0, 1.0)
    lifted = np.zeros((m, m))
    lifted[np.tril_indices(m)] = outcome.x[m:]
    lifted = lifted + np.tril(lifted, -1).T
    # restate the diagonal ties exactly; the solver meets them to its primal
    # tolerance and the type promises them tighter than that
    lifted[np.arange(m), np.arange(m)] = w_part
    if active is None:
        return w_part, lifted
    w_full = np.zeros(scenario.num_anchors)
    w_full[active] = w_part
    lifted_full = np.zeros((scenario.num_anchors, scenario.num_anchors))
    lifted_full[np.ix_(active, active)] = lifted
    return w_full, lifted_full


def solve_sdp_relaxation(
    scenario: Scenario, settings: SolverSettings | None = None
) -> LiftedSolution:
    """Plain lifted relaxation: minimize the total selection weight.

    The optimal total weight lower-bounds the Boolean minimum cardinality.
    Raises InfeasibleScenarioError when even selecting every anchor misses
    the accuracy floor.
    """
    return solve_reweighted_sdp(scenario, epsilon=1.0, k_max=1, settings=settings)


def solve_reweighted_sdp(
    scenario: Scenario,
    epsilon: float = 1e-8,
    k_max: int = 15,
    settings: SolverSettings | None = None,
) -> LiftedSolution:
    """Sparsity-enhancing iteration on the lifted selection relaxation.

    Starts from unit weights, so the first iteration is exactly the plain
    relaxation and k_max = 1 reduces to solve_sdp_relaxation. Stops early
    when the support set repeats and the weighted objective has settled.
    """
    _require_ows(scenario)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if settings is None:
        settings = _SELECTION_SETTINGS
    _require_feasible(scenario)

    weights = np.ones(scenario.num_anchors)
    trace: list[SelectionRecord] = []
    active: np.ndarray | None = None
    prev_support: np.ndarray | None = None
    prev_objective = np.inf
    for k in range(k_max):
        try:
            w, lifted = _solve_lifted(scenario, weights, settings, active)
        except SolverFailureError:
            if k == 0:
                raise
            # later rounds walk toward degenerate polarized programs; the
            # previous round's weights are already usable, so keep them
            break
        objective = float(weights @ w)
        support = np.flatnonzero(w > SUPPORT_TOL)
        trace.append(
            SelectionRecord(
                iteration=k,
                weights=weights,
                objective=objective,
                total_weight=float(w.sum()),
                support_size=int(support.size),
            )
        )
        settled = abs(objective - prev_objective) <= 1e-8 * max(1.0, abs(prev_objective))
        if prev_support is not None and np.array_equal(support, prev_support) and settled:
            break
        prev_support = support
        prev_objective = objective
        weights = 1.0 / (epsilon + w)
        # an anchor already driven below the support floor carries weight
        # near 1/epsilon; fixing it at zero states the same optimum without
        # stretching the objective across decades, and shrinks the border
        # block with it
        active = support

    return LiftedSolution(w=w, W=lifted, trace=tuple(trace))


def _collinear(points: np.ndarray) -> bool:
    """Whether all points lie on one line (always true for fewer than 3)."""
    if points.shape[0] < 3:
        return True
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    return bool(singular[1] <= 1e-9 * max(singular[0], 1.0))


def _warn_if_collinear(scenario: Scenario, selected: np.ndarray) -> None:
    chosen = scenario.anchor_points[selected]
    if chosen.shape[0] >= 1 and _collinear(chosen):
        warnings.warn(
            "all selected anchors are collinear: two mirrored sensor positions "
            "produce identical ranges, so the location estimate is ambiguous "
            "even where the accuracy floor holds",
            stacklevel=3,
        )


def _projected_covariance(w: np.ndarray, lifted: np.ndarray) -> np.ndarray:
    """Nearest PSD version of the lifted second-moment spread W - w w'."""
    spread = lifted - np.outer(w, w)
    spread = 0.5 * (spread + spread.T)
    eigvals, eigvecs = np.linalg.eigh(spread)
    return (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T


def randomize_round(
    scenario: Scenario,
    lifted: LiftedSolution,
    draws: int = 200,
    seed: int = 0,
) -> RoundedSelection:
    """Recover a Boolean selection from fractional weights.

    Candidates come from a deterministic threshold sweep over the sorted
    weights, independent Bernoulli draws on w, and Gaussian draws with mean
    w and covariance W - w w' projected to the PSD cone; every candidate is
    checked by the independent eigenvalue report. The feasible candidate of
    minimum cardinality wins, ties broken by larger margin then
    lexicographic order; when nothing is feasible the best-margin candidate
    is returned flagged infeasible. A weight vector that is already Boolean
    and feasible is returned unchanged without spending any draws.
    """
    _require_ows(scenario)
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    m = scenario.num_anchors
    w = np.asarray(lifted.w, dtype=float)

    boolean = np.where(w > 0.5, 1.0, 0.0)
    if np.abs(w - boolean).max() <= SUPPORT_TOL:
        report = feasibility_report(scenario, boolean)
        if report.margin >= 0.0:
            selected = boolean.astype(bool)
            _warn_if_collinear(scenario, selected)
            return RoundedSelection(
                selected=selected,
                cardinality=int(selected.sum()),
                feasible=True,
                margin=float(report.margin),
                draws_used=0,
                seed=seed,
            )

    candidates: list[np.ndarray] = []
    order = np.argsort(-w, kind="stable")
    for count in range(1, m + 1):
        prefix = np.zeros(m, dtype=bool)
        prefix[order[:count]] = True
        candidates.append(prefix)

    rng = np.random.default_rng(seed)
    covariance_root: np.ndarray | None = None
    for draw in range(draws):
        if draw % 2 == 0:
            candidates.append(rng.random(m) < w)
        else:
            if covariance_root is None:
                covariance = _projected_covariance(w, np.asarray(lifted.W, dtype=float))
                eigvals, eigvecs = np.linalg.eigh(covariance)
                covariance_root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
            sample = w + covariance_root @ rng.standard_normal(m)
            candidates.append(sample > 0.5)

    evaluated: dict[tuple[int, ...], tuple[int, float]] = {}
    for candidate in candidates:
        key = tuple(int(v) for v in candidate)
        if key in evaluated or not any(key):
            continue
        report = feasibility_report(scenario, candidate.astype(float))
        evaluated[key] = (int(sum(key)), float(report.margin))

    feasible_keys = [k for k, (_, margin) in evaluated.items() if margin >= 0.0]
    if feasible_keys:
        best = min(feasible_keys, key=lambda k: (evaluated[k][0], -evaluated[k][1], k))
        feasible = True
    else:
        best = min(evaluated, key=lambda k: (-evaluated[k][1], evaluated[k][0], k))
        feasible = False
    cardinality, margin = evaluated[best]
    selected = np.array(best, dtype=bool)
    if feasible:
        _warn_if_collinear(scenario, selected)
    return RoundedSelection(
        selected=selected,
        cardinality=cardinality,
        feasible=feasible,
        margin=margin,
        draws_used=draws,
        seed=seed,
    )


def optimize_sensor_energy(
    scenario: Scenario, selected: np.ndarray, iterations: int = 60
) -> float:
    """Smallest sensor transmit energy keeping the selection feasible.

    Bisects over (0, current sensor energy]; the selection must be feasible
    at the current energy. Returns the feasible end of the final bracket.
    """
    _require_ows(scenario)
    weights = np.asarray(selected, dtype=float)
    report = feasibility_report(scenario, weights)
    if report.margin < 0.0:
        raise InfeasibleScenarioError(
            "selection infeasible at the current sensor energy "
            f"{scenario.sensor_energy}: margin {report.margin:.6e}",
            worst_sensor_index=report.worst_sensor_index,
            margin=report.margin,
        )
    lo = 0.0
    hi = float(scenario.sensor_energy)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        trial = replace(scenario, sensor_energy=mid)
        if feasibility_report(trial, weights).margin >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi
