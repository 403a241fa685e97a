import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_fo.disturbance import ConstantDisturbance, SineDisturbance, ZeroDisturbance, make_disturbance
from hybrid_fo.errors import ConfigError, InvalidParameterError


def test_sine_values_and_bounds():
    d = SineDisturbance(5.0, 1.0)
    np.testing.assert_allclose(d.eval(math.pi / 2), 5.0 * np.ones(6))
    assert d.d_max == pytest.approx(5.0 * math.sqrt(6))
    assert d.d_bar == pytest.approx(5.0 * math.sqrt(6))
    assert d.d_bar_component == 5.0
    assert d.eval_many([0.0, 1.0, 2.0]).shape == (3, 6)


def test_negative_time_rejected():
    for d in (ZeroDisturbance(), ConstantDisturbance(np.ones(6)), SineDisturbance(1.0, 1.0)):
        with pytest.raises(InvalidParameterError):
            d.eval(-1e-9)
        with pytest.raises(InvalidParameterError):
            d.eval_many([0.0, -1.0])


def test_constant_and_zero():
    c = ConstantDisturbance(np.arange(6.0))
    np.testing.assert_array_equal(c.eval(3.0), np.arange(6.0))
    assert c.d_bar == 0.0 and c.d_max == pytest.approx(np.linalg.norm(np.arange(6.0)))
    z = ZeroDisturbance()
    assert not z.eval(10.0).any() and z.d_max == 0.0 and z.d_bar == 0.0
    with pytest.raises(InvalidParameterError):
        ConstantDisturbance(np.ones(5))


@settings(max_examples=200)
@given(amp=st.floats(-10, 10), omega=st.floats(0.01, 5), t=st.floats(0, 1e4), h=st.floats(1e-4, 1.0))
def test_rate_bound_dominates_difference_quotient(amp, omega, t, h):
    d = SineDisturbance(amp, omega)
    slope = np.linalg.norm(d.eval(t + h) - d.eval(t)) / h
    assert slope <= d.derivative_bound() * (1 + 1e-9) + 1e-12
    assert np.linalg.norm(d.eval(t)) <= d.d_max * (1 + 1e-12) + 1e-12


def test_factory():
    assert isinstance(make_disturbance("zero"), ZeroDisturbance)
    assert isinstance(make_disturbance("sine", 2.0, 0.5), SineDisturbance)
    np.testing.assert_array_equal(make_disturbance("constant", 2.0).eval(0.0), 2.0 * np.ones(6))
    with pytest.raises(ConfigError):
        make_disturbance("square")
