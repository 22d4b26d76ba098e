"""Exhaustive-search oracles: subset enumeration against the accuracy floor."""

from __future__ import annotations

import numpy as np
import pytest
from conftest import owa_scenario, ows_scenario, random_owa_instance, random_ows_instance

from anchorplace import (
    SizeCapError,
    accuracy_threshold,
    exhaustive_min_cardinality,
    exhaustive_min_energy_owa,
    feasibility_report,
    solve_l1,
)


def ring_anchors(count: int, radius: float = 1.0) -> np.ndarray:
    angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False) + 0.5 * np.pi
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def saturated_weights(scenario) -> np.ndarray:
    if scenario.energy_bound is not None:
        return np.full(scenario.num_anchors, scenario.energy_bound)
    return np.ones(scenario.num_anchors)


def test_three_anchors_on_ring_need_two():
    # unit distances make each pair's saturated minimum eigenvalue exactly
    # half the budget; a floor just below that admits every pair and no
    # singleton (rank-1 information has a zero eigenvalue)
    scenario = owa_scenario(ring_anchors(3), [[0.0, 0.0]], threshold=0.9 * 5.0)
    result = exhaustive_min_cardinality(scenario)
    assert result.feasible
    assert result.cardinality == 2
    assert len(result.witnesses) == 3
    assert all(mask.sum() == 2 for mask in result.witnesses)
    assert result.subsets_checked == 1 + 3 + 3


def test_witnesses_pass_independent_feasibility():
    for seed in (1, 2, 3):
        scenario = random_owa_instance(seed, num_anchors=6)
        result = exhaustive_min_cardinality(scenario)
        assert result.feasible
        for mask in result.witnesses:
            weights = np.where(mask, scenario.energy_bound, 0.0)
            assert feasibility_report(scenario, weights).margin >= 0.0


def test_infeasible_full_set_settles_immediately():
    scenario = owa_scenario(ring_anchors(3), [[0.0, 0.0]], threshold=100.0)
    result = exhaustive_min_cardinality(scenario)
    assert not result.feasible
    assert result.cardinality is None
    assert result.witnesses == ()
    assert result.subsets_checked == 1


def test_size_cap_is_enforced():
    rng = np.random.default_rng(0)
    scenario = owa_scenario(rng.uniform(0, 4, (17, 2)), [[2.0, 2.0]], threshold=0.01)
    with pytest.raises(SizeCapError, match="cap"):
        exhaustive_min_cardinality(scenario)
    with pytest.raises(SizeCapError, match="cap"):
        exhaustive_min_energy_owa(scenario)
    assert exhaustive_min_cardinality(scenario, max_m=17).feasible


def test_cardinality_is_monotone_in_the_floor():
    rng = np.random.default_rng(9)
    anchors = rng.uniform(0, 4, (7, 2))
    sensors = rng.uniform(1, 3, (3, 2))
    probe = owa_scenario(anchors, sensors, threshold=1.0)
    achievable = feasibility_report(probe, saturated_weights(probe)).min_eig_by_sensor.min()
    cards = []
    for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
        scenario = owa_scenario(anchors, sensors, threshold=frac * achievable)
        cards.append(exhaustive_min_cardinality(scenario).cardinality)
    assert cards == sorted(cards)


def test_supersets_of_feasible_subsets_are_feasible():
    scenario = random_owa_instance(14, num_anchors=7)
    result = exhaustive_min_cardinality(scenario)
    assert result.feasible
    base = result.witnesses[0]
    for extra in np.flatnonzero(~base):
        grown = base.copy()
        grown[extra] = True
        weights = np.where(grown, scenario.energy_bound, 0.0)
        assert feasibility_report(scenario, weights).margin >= 0.0


def test_ows_mode_uses_unit_selection_weights():
    scenario = ows_scenario(ring_anchors(3), [[0.0, 0.0]], threshold=0.9 * 5.0)
    result = exhaustive_min_cardinality(scenario)
    assert result.feasible and result.cardinality == 2
    for mask in result.witnesses:
        assert feasibility_report(scenario, mask.astype(float)).margin >= 0.0


def test_energy_search_rejects_selection_mode():
    scenario = random_ows_instance(2)
    with pytest.raises(ValueError, match="mode"):
        exhaustive_min_energy_owa(scenario)


def test_energy_search_on_symmetric_pair_matches_relaxation():
    scenario = owa_scenario([[-1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0]], threshold=0.05)
    result = exhaustive_min_energy_owa(scenario)
    assert result.feasible
    assert result.support.tolist() == [0, 1]
    assert result.energies[0] == pytest.approx(result.energies[1], abs=1e-8)
    relaxed = solve_l1(scenario)
    np.testing.assert_allclose(result.energies, relaxed.energies, atol=1e-6)


def test_energy_search_result_shape_and_budget():
    scenario = random_owa_instance(21, num_anchors=6)
    cardinality = exhaustive_min_cardinality(scenario)
    result = exhaustive_min_energy_owa(scenario)
    assert result.feasible
    assert result.support.size == cardinality.cardinality
    assert np.all(result.energies >= 0.0)
    assert np.all(result.energies <= scenario.energy_bound)
    off_support = np.setdiff1d(np.arange(scenario.num_anchors), result.support)
    assert np.all(result.energies[off_support] == 0.0)
    assert result.total_energy == pytest.approx(result.energies.sum(), rel=1e-15)
    lam = accuracy_threshold(scenario.accuracy)
    assert feasibility_report(scenario, result.energies).margin >= -1e-6 * lam


@pytest.mark.parametrize("seed", range(45, 51))
def test_relaxation_energy_never_exceeds_oracle(seed):
    # the relaxation optimizes the total over every support at once, so the
    # minimum-cardinality-first search can only cost the same or more
    scenario = random_owa_instance(seed, num_anchors=6)
    relaxed = solve_l1(scenario)
    oracle = exhaustive_min_energy_owa(scenario)
    assert oracle.feasible
    assert relaxed.total_energy <= oracle.total_energy + 1e-6


def test_collinear_geometry_is_infeasible_at_every_size():
    anchors = np.column_stack([np.linspace(-2.0, 2.0, 5), np.zeros(5)])
    anchors = anchors[np.abs(anchors[:, 0]) > 1e-9]
    scenario = owa_scenario(anchors, [[0.0, 0.0]], threshold=0.01)
    result = exhaustive_min_energy_owa(scenario)
    assert not result.feasible
    assert result.subsets_checked == 1
