import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simcut.interval import Interval, down, up

finite = st.floats(-10, 10)


@st.composite
def intervals(draw):
    a, b = draw(finite), draw(finite)
    return Interval.hull(a, b)


def sample(iv, t):
    return float(np.clip(iv.lo + t * (iv.hi - iv.lo), iv.lo, iv.hi))


unit = st.floats(0, 1)


def test_outward_rounding():
    assert down(1.0) < 1.0 < up(1.0)
    assert up(np.inf) == np.inf
    iv = Interval.point(0.1) + Interval.point(0.2)
    assert iv.contains(0.1 + 0.2)
    assert iv.lo < iv.hi


def test_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)


@given(intervals(), intervals(), unit, unit)
def test_arithmetic_contains_pointwise_results(x, y, s, t):
    a, b = sample(x, s), sample(y, t)
    assert (x + y).contains(a + b)
    assert (x - y).contains(a - b)
    assert (x * y).contains(a * b)
    assert (-x).contains(-a)
    assert (2.5 * x).contains(2.5 * a)
    assert (1.0 - x).contains(1.0 - a)


@given(intervals(), unit)
def test_powers_and_roots(x, s):
    a = sample(x, s)
    assert x.square().contains(a * a)
    assert x.power(3).contains(a ** 3)
    assert x.power(4).contains(a ** 4)
    assert x.square().lo >= 0.0
    assert x.square().sqrt().contains(abs(a))


@given(intervals(), st.floats(0.5, 4), unit, unit)
def test_division(x, d, s, t):
    y = Interval(d, d + 1.0)
    a, b = sample(x, s), sample(y, t)
    assert (x / y).contains(a / b)


def test_division_by_zero_interval():
    with pytest.raises(ZeroDivisionError):
        Interval(1.0, 2.0) / Interval(-1.0, 1.0)


def test_zero_times_infinity_is_zero():
    iv = Interval(0.0, 0.0) * Interval(1.0, np.inf)
    assert iv.lo <= 0.0 <= iv.hi
    assert not np.isnan(iv.lo) and not np.isnan(iv.hi)


def test_batched_intervals():
    iv = Interval(np.array([0.0, 1.0]), np.array([1.0, 3.0]))
    assert iv.width.tolist() == [1.0, 2.0]
    assert iv.mid.tolist() == [0.5, 2.0]
    assert iv[1].lo == 1.0
    assert iv.pad(0.5).subset_of(Interval(np.array([-1.0, 0.0]), np.array([2.0, 4.0]))).all()
    assert iv.clip(0.5, 2.0).hi.tolist() == [1.0, 2.0]


def test_undefined_operand_stays_undefined():
    undefined = Interval(np.array([np.nan]), np.array([np.nan]))
    iv = undefined * Interval(0.0, 1.0)
    assert np.isnan(iv.lo[0]) and np.isnan(iv.hi[0])


@given(intervals(), st.floats(0, 1))
def test_exp_and_arctan_contain_pointwise_results(x, s):
    a = sample(x, s)
    assert x.exp().contains(np.exp(a))
    assert x.arctan().contains(np.arctan(a))


@given(st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))
def test_arcsin_contains_pointwise_results(lo, w, s):
    x = Interval(lo, min(lo + w, 1.0))
    assert x.arcsin().contains(np.arcsin(sample(x, s)))


def test_exp_of_infinite_bounds():
    iv = Interval(-np.inf, 0.0).exp()
    assert iv.lo == 0.0 and iv.hi >= 1.0
