import numpy as np
import pytest
from hypothesis import given, strategies as st

from recourse_risk.core import (
    CLAMP,
    COMPLIANT,
    CROSS_ENTROPY,
    DEFIANT,
    ZERO_ONE,
    ResponseModel,
    RngSpec,
    as_labels,
    as_points,
    bernoulli_labels,
    loss_eval,
    response_probability,
    sign,
)


def test_sign_maps_zero_to_positive():
    assert sign([-1e-9, 0.0, 2.0]).tolist() == [-1, 1, 1]


def test_as_points_rejects_bad_shapes_and_nan():
    assert as_points([1.0, 2.0]).shape == (1, 2)
    with pytest.raises(ValueError):
        as_points(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_points([[np.nan, 0.0]])


def test_as_labels_requires_plus_minus_one():
    assert as_labels([1, -1]).tolist() == [1, -1]
    with pytest.raises(ValueError):
        as_labels([0, 1])


def test_rng_streams_are_reproducible_and_distinct():
    a = RngSpec(3, 1).substream("train").generator().random(5)
    b = RngSpec(3, 1).substream("train").generator().random(5)
    c = RngSpec(3, 1).substream("test").generator().random(5)
    d = RngSpec(3, 2).substream("train").generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_zero_one_and_cross_entropy():
    assert loss_eval(ZERO_ONE, np.array([1, -1]), np.array([1, 1])).tolist() == [0.0, 1.0]
    ce = loss_eval(CROSS_ENTROPY, np.array([0.5, 0.5]), np.array([1, -1]))
    np.testing.assert_allclose(ce, [np.log(2), np.log(2)])
    assert CROSS_ENTROPY.boundary_value == pytest.approx(np.log(2))
    # clamping keeps the loss finite at 0 and 1
    assert np.isfinite(loss_eval(CROSS_ENTROPY, np.array([0.0]), np.array([1])))[0]
    assert loss_eval(CROSS_ENTROPY, np.array([0.0]), np.array([1]))[0] == pytest.approx(-np.log(CLAMP))


def test_response_models():
    assert COMPLIANT.name == "compliant" and DEFIANT.name == "defiant"
    assert ResponseModel(0.3).name.startswith("mixture")
    with pytest.raises(ValueError):
        ResponseModel(1.5)
    with pytest.raises(ValueError):
        ResponseModel.from_name("stubborn")
    p = response_probability(ResponseModel(0.25), np.array([0.8]), np.array([0.4]))
    assert p[0] == pytest.approx(0.25 * 0.4 + 0.75 * 0.8)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_bernoulli_labels_threshold(p, u):
    y = bernoulli_labels(np.array([p]), np.array([u]))[0]
    assert y == (1 if u < p else -1)
