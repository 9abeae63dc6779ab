import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qubitmml.bloch import (
    DensityMatrix,
    Effect,
    PauliAxis,
    bloch_to_density,
    bloch_trace_distance,
    density_to_bloch,
    outcome_probability,
    regularize_state,
    trace_distance,
)

finite = st.floats(-3, 3, allow_nan=False)
bloch_vectors = arrays(float, 3, elements=finite)
ball = bloch_vectors.filter(lambda r: np.linalg.norm(r) <= 1)


def test_north_pole_and_origin():
    np.testing.assert_allclose(bloch_to_density([0, 0, 1]).m, [[1, 0], [0, 0]])
    np.testing.assert_allclose(bloch_to_density([0, 0, 0]).m, 0.5 * np.eye(2))


def test_outside_ball_is_unphysical():
    rho = bloch_to_density([1, 1, 1])
    assert rho.eigenvalues()[0] == pytest.approx((1 - np.sqrt(3)) / 2, abs=1e-14)
    assert not rho.is_physical()
    assert bloch_to_density([0.6, 0, 0.8]).is_physical()


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix([[1, 1], [0, 0]])
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(2))
    with pytest.raises(ValueError):
        bloch_to_density([np.nan, 0, 0])


def test_density_to_bloch_examples():
    np.testing.assert_allclose(density_to_bloch(DensityMatrix(0.5 * np.eye(2))), 0)
    np.testing.assert_allclose(density_to_bloch(DensityMatrix([[1, 0], [0, 0]])), [0, 0, 1])


def test_round_trip_random():
    rng = np.random.default_rng(11)
    for r in rng.uniform(-2, 2, size=(100, 3)):
        assert np.max(np.abs(density_to_bloch(bloch_to_density(r)) - r)) < 1e-12


@given(bloch_vectors)
def test_round_trip_property(r):
    assert np.max(np.abs(density_to_bloch(bloch_to_density(r)) - r)) < 1e-12


def test_effect_projectors():
    for axis in PauliAxis:
        plus, minus = Effect(axis, 1).operator, Effect(axis, -1).operator
        np.testing.assert_allclose(plus + minus, np.eye(2))
        np.testing.assert_allclose(plus @ plus, plus, atol=1e-15)
        assert np.linalg.matrix_rank(plus) == 1
    with pytest.raises(ValueError):
        Effect(PauliAxis.X, 0)


def test_outcome_probability_examples():
    assert outcome_probability([0, 0, 1], Effect(PauliAxis.Z, 1)) == 1
    for axis in PauliAxis:
        for sign in (1, -1):
            assert outcome_probability([0, 0, 0], Effect(axis, sign)) == 0.5
    assert outcome_probability([1, 0, 0], Effect(PauliAxis.Z, 1)) == 0.5


def test_outcome_probability_clamps_only_when_asked():
    r = [0, 0, 1.4]
    assert outcome_probability(r, Effect(PauliAxis.Z, -1)) == 0.0
    assert outcome_probability(r, Effect(PauliAxis.Z, -1), clamp=False) == pytest.approx(-0.2)


def test_outcome_probability_matches_born_rule():
    rng = np.random.default_rng(3)
    for r in rng.uniform(-0.5, 0.5, size=(20, 3)):
        rho = bloch_to_density(r)
        for axis in PauliAxis:
            e = Effect(axis, 1)
            assert outcome_probability(r, e) == pytest.approx(np.trace(rho.m @ e.operator).real, abs=1e-14)


@given(ball)
def test_probabilities_sum_to_one(r):
    for axis in PauliAxis:
        assert outcome_probability(r, Effect(axis, 1)) + outcome_probability(r, Effect(axis, -1)) == 1


def test_trace_distance_examples():
    rho = bloch_to_density([0.1, 0.2, 0.3])
    assert trace_distance(rho, rho) == 0
    assert trace_distance(bloch_to_density([0, 0, 1]), bloch_to_density([0, 0, -1])) == pytest.approx(1)
    d = trace_distance(bloch_to_density([0, 0, 1]), bloch_to_density([0, 0, -1 / 3]))
    assert d == pytest.approx(2 / 3, abs=1e-15)


@given(bloch_vectors, bloch_vectors)
def test_trace_distance_is_half_bloch_distance(r1, r2):
    d = trace_distance(bloch_to_density(r1), bloch_to_density(r2))
    assert abs(d - 0.5 * np.linalg.norm(r1 - r2)) < 1e-12
    assert abs(d - bloch_trace_distance(r1, r2)) < 1e-12


@settings(max_examples=200)
@given(ball, ball, ball)
def test_trace_distance_metric(r1, r2, r3):
    a, b, c = (bloch_to_density(r) for r in (r1, r2, r3))
    assert trace_distance(a, b) >= 0
    assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-15)
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


def test_regularize_state_examples():
    np.testing.assert_allclose(regularize_state([2, 0, 0], 0.5), [1, 0, 0])
    np.testing.assert_allclose(regularize_state([0.3, -4, 2], 0), [0, 0, 0])
    np.testing.assert_allclose(regularize_state([0, 0, -3], 1 / 3), [0, 0, -1])
    for k in (-0.1, 1.5):
        with pytest.raises(ValueError):
            regularize_state([0, 0, 1], k)


@given(bloch_vectors, st.floats(0, 1))
def test_regularize_state_shrinks_towards_origin(r, k):
    out = regularize_state(r, k)
    assert np.linalg.norm(out) == pytest.approx(k * np.linalg.norm(r), abs=1e-12)
    # mixing the density operators directly gives the same state
    mixed = k * bloch_to_density(r).m + (1 - k) * 0.5 * np.eye(2)
    np.testing.assert_allclose(bloch_to_density(out).m, mixed, atol=1e-12)
