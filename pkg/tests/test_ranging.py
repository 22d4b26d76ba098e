"""Range variances, FIM terms and assembly, thresholds, feasibility margins."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorplace import (
    AccuracyTarget,
    Distribution,
    Mode,
    PhysicsParams,
    Scenario,
    SingularFimError,
    accuracy_threshold,
    assemble_fim,
    crb_matrix,
    feasibility_report,
    fim_term,
    range_variance,
    rho_value,
)
from anchorplace.ranging import fim_term_stack, min_eigenvalues_2x2

RHO_SHIPPED = 3.562072862425938e-05  # c^2 (N/2) / Fbar^2 at c=3e8, N/2=1, Fbar=2*pi*8e9
THRESHOLD_4CM_95 = 3744.6653419424874  # (2/0.04^2) ln 20


def unit_physics(alpha: float = 1.0, beta: float = 2.0) -> PhysicsParams:
    # c^2 * noise_psd / bandwidth = 1, so the information scale is alpha alone
    return PhysicsParams(alpha=alpha, beta=beta, c=1.0, mean_square_bandwidth=1.0, noise_psd=1.0)


def any_target() -> AccuracyTarget:
    return AccuracyTarget(radius=1.0, probability=0.5, distribution=Distribution.GAUSSIAN)


def mk_scenario(
    anchors,
    sensors,
    mode: Mode = Mode.OWA,
    physics: PhysicsParams | None = None,
    target: AccuracyTarget | None = None,
    sensor_energy: float = 1.0,
) -> Scenario:
    return Scenario(
        anchor_points=np.asarray(anchors, dtype=float),
        sensor_points=np.asarray(sensors, dtype=float),
        physics=physics or unit_physics(),
        accuracy=target or any_target(),
        mode=mode,
        energy_bound=1.0 if mode is Mode.OWA else None,
        sensor_energy=sensor_energy if mode is Mode.OWS else None,
    )


# --- scale constant and variances ---------------------------------------------


def test_rho_matches_shipped_physics_constant():
    sc = mk_scenario(
        [[1.0, 0.0]],
        [[0.0, 0.0]],
        physics=PhysicsParams(
            alpha=1.0, beta=2.0, c=3e8, mean_square_bandwidth=(2.0 * math.pi * 8e9) ** 2, noise_psd=1.0
        ),
    )
    assert rho_value(sc) == pytest.approx(RHO_SHIPPED, rel=1e-12)


def test_range_variance_all_unit_case():
    sc = mk_scenario([[1.0, 0.0]], [[0.0, 0.0]])
    assert range_variance(sc, 0, [0.0, 0.0], 1.0) == pytest.approx(1.0, rel=1e-14)


def test_range_variance_distance_power_scaling():
    sc = mk_scenario([[2.0, 0.0]], [[0.0, 0.0]])
    assert range_variance(sc, 0, [0.0, 0.0], 1.0) == pytest.approx(4.0, rel=1e-14)
    # doubling energy halves the variance
    assert range_variance(sc, 0, [0.0, 0.0], 2.0) == pytest.approx(2.0, rel=1e-14)


def test_range_variance_domain_errors():
    sc = mk_scenario([[1.0, 0.0]], [[0.0, 0.0]])
    with pytest.raises(ValueError, match="energy"):
        range_variance(sc, 0, [0.0, 0.0], 0.0)
    with pytest.raises(ValueError, match="distance"):
        range_variance(sc, 0, [1.0, 0.0], 1.0)


# --- per-anchor information terms ----------------------------------------------


def test_fim_term_axis_aligned_unit_distance():
    sc = mk_scenario([[1.0, 0.0]], [[0.0, 0.0]])
    term = fim_term(sc, 0, 0)
    assert term.matrix == pytest.approx(np.array([[1.0, 0.0], [0.0, 0.0]]), abs=1e-15)
    assert term.anchor_index == 0 and term.sensor_index == 0


def test_fim_term_distance_two_hand_value():
    sc = mk_scenario([[0.0, 2.0]], [[0.0, 0.0]])
    assert fim_term(sc, 0, 0).matrix == pytest.approx(np.array([[0.0, 0.0], [0.0, 0.25]]), abs=1e-15)


def test_fim_term_folds_sensor_energy_only_when_sensor_transmits():
    anchors, sensors = [[3.0, 1.0]], [[0.5, -0.2]]
    base = fim_term(mk_scenario(anchors, sensors, mode=Mode.OWA), 0, 0).matrix
    folded = fim_term(mk_scenario(anchors, sensors, mode=Mode.OWS, sensor_energy=7.0), 0, 0).matrix
    np.testing.assert_allclose(folded, 7.0 * base, rtol=1e-14)


@settings(max_examples=80, deadline=None)
@given(
    ax=st.floats(-5, 5),
    ay=st.floats(-5, 5),
    sx=st.floats(6, 12),
    sy=st.floats(-5, 5),
    alpha=st.floats(0.1, 10),
    beta=st.floats(0, 4),
)
def test_fim_term_rank_one_with_known_trace(ax, ay, sx, sy, alpha, beta):
    sc = mk_scenario([[ax, ay]], [[sx, sy]], physics=unit_physics(alpha=alpha, beta=beta))
    mat = fim_term(sc, 0, 0).matrix
    eigs = np.linalg.eigvalsh(mat)
    d = math.hypot(sx - ax, sy - ay)
    expected_trace = alpha * d ** (-beta)
    assert abs(eigs[0]) <= 1e-12 * expected_trace
    assert eigs[1] == pytest.approx(expected_trace, rel=1e-12)
    np.testing.assert_allclose(mat, mat.T)


def test_fim_term_stack_matches_per_pair_terms():
    sc = mk_scenario([[1.0, 0.0], [0.0, 2.0], [-3.0, 1.0]], [[0.0, 0.0], [0.5, 0.5]],
                     physics=unit_physics(beta=3.0))
    stack = fim_term_stack(sc)
    assert stack.shape == (2, 3, 2, 2)
    for s in range(2):
        for m in range(3):
            np.testing.assert_allclose(stack[s, m], fim_term(sc, m, s).matrix, rtol=1e-14)


# --- assembled information ------------------------------------------------------


def test_assemble_orthogonal_pair_gives_identity():
    sc = mk_scenario([[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0]])
    np.testing.assert_allclose(assemble_fim(sc, np.ones(2), 0), np.eye(2), atol=1e-15)


def test_assemble_zero_weights_gives_zero_matrix():
    sc = mk_scenario([[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0]])
    assert np.array_equal(assemble_fim(sc, np.zeros(2), 0), np.zeros((2, 2)))


def test_assemble_rejects_bad_weights():
    sc = mk_scenario([[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0]])
    with pytest.raises(ValueError, match="shape"):
        assemble_fim(sc, np.ones(3), 0)
    with pytest.raises(ValueError, match=">= 0"):
        assemble_fim(sc, np.array([1.0, -0.5]), 0)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_assemble_is_linear_in_weights(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    m = data.draw(st.integers(1, 6))
    anchors = rng.uniform(-4, 4, size=(m, 2))
    sensors = rng.uniform(5, 9, size=(1, 2))
    sc = mk_scenario(anchors, sensors, physics=unit_physics(beta=rng.uniform(0, 3)))
    w1 = rng.uniform(0, 2, size=m)
    w2 = rng.uniform(0, 2, size=m)
    left = assemble_fim(sc, w1 + w2, 0)
    right = assemble_fim(sc, w1, 0) + assemble_fim(sc, w2, 0)
    np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 2**32 - 1))
def test_min_eigenvalue_scales_with_weights(scale, seed):
    rng = np.random.default_rng(seed)
    anchors = rng.uniform(-4, 4, size=(4, 2))
    sc = mk_scenario(anchors, [[6.0, 6.0]])
    w = rng.uniform(0.1, 1, size=4)
    base = min_eigenvalues_2x2(assemble_fim(sc, w, 0))
    scaled = min_eigenvalues_2x2(assemble_fim(sc, scale * w, 0))
    assert scaled == pytest.approx(scale * base, rel=1e-12)


def test_collinear_anchors_and_sensor_are_singular():
    sc = mk_scenario([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]], [[0.0, 0.0]])
    fim = assemble_fim(sc, np.array([0.3, 1.2, 2.0]), 0)
    assert min_eigenvalues_2x2(fim) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(SingularFimError, match="singular"):
        crb_matrix(sc, np.array([0.3, 1.2, 2.0]), 0)


def test_collinear_anchors_with_offset_sensor_are_not_singular():
    sc = mk_scenario([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]], [[0.0, 1.0]])
    fim = assemble_fim(sc, np.ones(3), 0)
    assert min_eigenvalues_2x2(fim) > 1e-3


def test_min_eigenvalues_closed_form_matches_lapack():
    rng = np.random.default_rng(7)
    mats = rng.normal(size=(64, 2, 2))
    mats = 0.5 * (mats + mats.transpose(0, 2, 1))
    np.testing.assert_allclose(
        min_eigenvalues_2x2(mats), np.linalg.eigvalsh(mats)[:, 0], rtol=1e-12, atol=1e-12
    )


# --- accuracy thresholds ---------------------------------------------------------


def test_gaussian_threshold_shipped_parameters():
    target = AccuracyTarget(radius=0.04, probability=0.95, distribution=Distribution.GAUSSIAN)
    assert accuracy_threshold(target) == pytest.approx(THRESHOLD_4CM_95, rel=1e-12)


def test_gaussian_threshold_collapses_to_one():
    target = AccuracyTarget(radius=math.sqrt(2), probability=1.0 - 1.0 / math.e,
                            distribution=Distribution.GAUSSIAN)
    assert accuracy_threshold(target) == pytest.approx(1.0, rel=1e-12)


def test_unknown_distribution_threshold_is_e_at_same_target():
    target = AccuracyTarget(radius=math.sqrt(2), probability=1.0 - 1.0 / math.e,
                            distribution=Distribution.UNKNOWN)
    assert accuracy_threshold(target) == pytest.approx(math.e, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(radius=st.floats(1e-3, 1e3), probability=st.floats(1e-6, 1.0 - 1e-9, exclude_max=True))
def test_unknown_threshold_dominates_gaussian(radius, probability):
    gauss = accuracy_threshold(AccuracyTarget(radius=radius, probability=probability,
                                              distribution=Distribution.GAUSSIAN))
    unknown = accuracy_threshold(AccuracyTarget(radius=radius, probability=probability,
                                                distribution=Distribution.UNKNOWN))
    assert unknown >= gauss > 0


# --- feasibility reports ----------------------------------------------------------


def test_zero_weights_margin_is_minus_threshold():
    sc = mk_scenario([[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [0.2, 0.3]])
    report = feasibility_report(sc, np.zeros(2))
    assert report.threshold == accuracy_threshold(sc.accuracy)
    assert report.margin == pytest.approx(-report.threshold, rel=1e-14)
    assert np.array_equal(report.min_eig_by_sensor, np.zeros(2))


def test_single_anchor_is_rank_deficient_everywhere():
    sc = mk_scenario([[1.0, 0.0]], [[0.0, 0.0], [0.3, 0.4], [-2.0, 1.0]])
    report = feasibility_report(sc, np.array([5.0]))
    assert report.min_eig_by_sensor == pytest.approx(np.zeros(3), abs=1e-12)
    assert report.margin < 0


def test_margin_is_worst_sensor_eig_minus_threshold():
    rng = np.random.default_rng(3)
    sc = mk_scenario(rng.uniform(-4, 4, size=(5, 2)), rng.uniform(5, 8, size=(3, 2)))
    w = rng.uniform(0, 2, size=5)
    report = feasibility_report(sc, w)
    assert report.margin == pytest.approx(report.min_eig_by_sensor.min() - report.threshold, rel=1e-14)
    assert report.worst_sensor_index == int(np.argmin(report.min_eig_by_sensor))
    per_point = [min_eigenvalues_2x2(assemble_fim(sc, w, i)) for i in range(3)]
    np.testing.assert_allclose(report.min_eig_by_sensor, per_point, rtol=1e-12)


# --- covariance bound --------------------------------------------------------------


def test_crb_inverts_identity_and_diagonal():
    sc = mk_scenario([[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0]])
    np.testing.assert_allclose(crb_matrix(sc, np.ones(2), 0), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(
        crb_matrix(sc, np.array([4.0, 1.0]), 0), np.diag([0.25, 1.0]), atol=1e-14
    )


def test_crb_is_inverse_of_assembled_fim():
    rng = np.random.default_rng(11)
    sc = mk_scenario(rng.uniform(-4, 4, size=(4, 2)), [[6.0, 5.0]])
    w = rng.uniform(0.5, 2, size=4)
    crb = crb_matrix(sc, w, 0)
    np.testing.assert_allclose(crb @ assemble_fim(sc, w, 0), np.eye(2), atol=1e-12)
