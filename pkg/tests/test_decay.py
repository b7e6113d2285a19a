import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmrw.decay import (
    check_direction,
    decay_rate,
    domain_contains,
    frontier_points,
    marginal_decay_rate,
    qbd_stationary_lower_bound,
)
from mmrw.gamma import extreme_points, gamma_contains, trace_boundary
from mmrw.model import AssumptionError, MMRWModel, reference_model, swap_axes
from mmrw.spectral import chi

from conftest import random_model

LN3 = math.log(3.0)
THETA_BAR = math.log(2 + math.sqrt(3))
directions = st.tuples(st.integers(1, 6), st.integers(1, 6))


def test_decay_rate_r1_diagonal(r1):
    res = decay_rate(r1, (1, 1))
    assert res.rate == pytest.approx(2 * LN3, abs=1e-8)
    assert res.argmax == pytest.approx((LN3, LN3), abs=1e-6)
    assert not res.flat_segment
    assert res.direction == (1, 1)


def test_decay_rate_swap_symmetry():
    m = random_model(np.random.default_rng(5), 2, density=1.0)
    assert decay_rate(m, (1, 2)).rate == pytest.approx(decay_rate(swap_axes(m), (2, 1)).rate, abs=1e-8)


def test_decay_rate_r2_equals_r1(r1, r2):
    assert decay_rate(r2, (1, 1)).rate == pytest.approx(2 * LN3, abs=1e-8)
    assert decay_rate(r2, (2, 3)).rate == pytest.approx(decay_rate(r1, (2, 3)).rate, abs=1e-8)


@pytest.mark.parametrize("c", [(1, 1), (1, 2), (3, 1), (2, 5)])
def test_decay_result_invariants(r1, c):
    res = decay_rate(r1, c)
    assert abs(chi(r1, res.argmax) - 1.0) <= 1e-8
    assert res.rate == pytest.approx(c[0] * res.argmax[0] + c[1] * res.argmax[1], abs=1e-10)
    for sec in trace_boundary(r1, 200):
        for t2 in (sec.zeta_lower, sec.zeta_upper):
            assert c[0] * sec.theta1 + c[1] * t2 <= res.rate + 1e-8


@pytest.mark.parametrize("c", [(1, 1), (1, 2), (2, 1), (2, 3)])
def test_decay_rate_stationarity(r1, c):
    res = decay_rate(r1, c)
    geo = extreme_points(r1)
    h = 1e-5
    t = res.argmax[0]
    slope = (geo.zeta_upper(t + h) - geo.zeta_upper(t - h)) / (2 * h)
    assert c[0] + c[1] * slope == pytest.approx(0.0, abs=1e-4 * c[1])


@settings(max_examples=20, deadline=None)
@given(c=directions, k=st.sampled_from([2, 3]))
def test_homogeneity(c, k):
    r1 = reference_model("R1")
    assert decay_rate(r1, (k * c[0], k * c[1])).rate == pytest.approx(k * decay_rate(r1, c).rate, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(c=directions, d=directions)
def test_subset_monotonicity(c, d):
    r1 = reference_model("R1")
    cp = (max(c[0], d[0]), max(c[1], d[1]))
    p = decay_rate(r1, cp).argmax
    assert c[0] * p[0] + c[1] * p[1] <= decay_rate(r1, c).rate + 1e-8
    assert decay_rate(r1, c).rate <= decay_rate(r1, cp).rate + 1e-8


def test_qbd_lower_bound(r1):
    assert qbd_stationary_lower_bound(r1, (1, 1)) == pytest.approx(-2 * LN3, abs=1e-8)
    assert qbd_stationary_lower_bound(r1, (2, 3)) == -decay_rate(r1, (2, 3)).rate


@pytest.mark.parametrize("c", [(0, 1), (1.5, 1), (-1, 2), (True, 1), (1,), "11"])
def test_direction_rejected(r1, c):
    with pytest.raises(ValueError):
        decay_rate(r1, c)


def test_check_direction_accepts_integral_floats():
    assert check_direction((2.0, 3)) == (2, 3)


def test_decay_rate_requires_negative_drift():
    m = MMRWModel.from_blocks({(1, 0): [[0.4]], (0, 1): [[0.4]], (0, 0): [[0.2]]})
    with pytest.raises(AssumptionError, match="may be infinite"):
        decay_rate(m, (1, 1))


def test_marginal_decay_r1_diagonal(r1):
    assert marginal_decay_rate(r1, (1, 1)) == pytest.approx(LN3, abs=1e-10)


def test_marginal_decay_r1_dense_grid(r1):
    got = marginal_decay_rate(r1, (1, 2))
    ts = np.linspace(0.0, 2.0, 200001)
    vals = 0.2 + 0.3 * np.exp(-ts) + 0.1 * np.exp(ts) + 0.3 * np.exp(-2 * ts) + 0.1 * np.exp(2 * ts)
    t_grid = ts[vals <= 1.0].max()
    assert got == pytest.approx(t_grid, abs=2e-5)
    assert chi(r1, (got, 2 * got)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("c", [(1, 1), (1, 2), (2, 3), (3, 1)])
def test_marginal_below_decay_rate(r1, c):
    assert marginal_decay_rate(r1, c) <= decay_rate(r1, c).rate + 1e-8


def test_marginal_requires_coprime(r1):
    with pytest.raises(ValueError, match="mutually prime"):
        marginal_decay_rate(r1, (2, 2))


def test_domain_contains_examples(r1):
    geo = extreme_points(r1)
    assert domain_contains(r1, (-5, -5))
    assert not domain_contains(r1, (THETA_BAR + 0.01, 0))
    assert domain_contains(r1, (0.2, geo.theta_bar_2[1] - 1e-3))
    assert not domain_contains(r1, (0.2, geo.theta_bar_2[1] + 1e-3))


def test_domain_contains_gamma(r1):
    rng = np.random.default_rng(3)
    for th in rng.uniform(-1, 2, size=(300, 2)):
        if gamma_contains(r1, th):
            assert domain_contains(r1, th)


@pytest.mark.parametrize("name", ["R1", "R2"])
def test_frontier_offsets(name):
    m = reference_model(name)
    eps = 1e-4
    pts = frontier_points(m, 50)
    assert pts.shape == (50, 2)
    for p in pts:
        assert domain_contains(m, p - eps)
        assert not domain_contains(m, p + eps)
