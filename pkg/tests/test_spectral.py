import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmrw.model import reference_model
from mmrw.spectral import (
    PerronError,
    chi,
    chi_gradient,
    evaluate,
    feynman_kac,
    marginal_operator,
    perron_root,
)

from conftest import random_model

LN3 = math.log(3.0)
T = np.array([[0.9, 0.1], [0.1, 0.9]])
thetas = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


def r1_chi(t1, t2):
    return 0.2 + 0.3 * math.exp(-t1) + 0.1 * math.exp(t1) + 0.3 * math.exp(-t2) + 0.1 * math.exp(t2)


def test_feynman_kac_r1_origin(r1):
    assert np.array_equal(feynman_kac(r1, (0, 0)), [[1.0]])


def test_feynman_kac_r1_boundary_point(r1):
    assert feynman_kac(r1, (LN3, LN3))[0, 0] == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(theta=thetas)
def test_feynman_kac_r2_factorises(theta):
    r2 = reference_model("R2")
    assert np.allclose(feynman_kac(r2, theta), r1_chi(*theta) * T, rtol=1e-14, atol=0)


def test_feynman_kac_overflow(r1):
    with pytest.raises(OverflowError):
        feynman_kac(r1, (800.0, 0.0))


def test_marginal_operator_examples(r1, r2):
    assert marginal_operator(r1, 1, 0.0, 0)[0, 0] == pytest.approx(0.6, abs=1e-15)
    assert np.allclose(marginal_operator(r2, 2, 0.0, 0), 0.6 * T, atol=1e-15)
    total = sum(marginal_operator(r2, 1, 0.0, j) for j in (-1, 0, 1))
    assert np.allclose(total, r2.total, atol=1e-15)
    with pytest.raises(ValueError):
        marginal_operator(r1, 3, 0.0, 0)


def test_perron_root_examples():
    assert perron_root(np.eye(3)).root == pytest.approx(1.0, abs=1e-12)
    assert perron_root(np.array([[1.0, 2.0], [3.0, 0.0]])).root == pytest.approx(3.0, rel=1e-12)


def test_perron_root_periodic_matrix():
    # the shift makes a 3-cycle converge
    cyc = np.roll(np.eye(3), 1, axis=1) * 2.0
    assert perron_root(cyc).root == pytest.approx(2.0, rel=1e-12)


def test_perron_root_errors():
    with pytest.raises(PerronError):
        perron_root(np.zeros((2, 2)))
    with pytest.raises(PerronError):
        perron_root(np.array([[1.0, -0.1], [0.2, 0.5]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_perron_root_stochastic_and_residuals(seed, n):
    rng = np.random.default_rng(seed)
    m = rng.random((n, n)) + 0.01
    stoch = m / m.sum(axis=1, keepdims=True)
    assert perron_root(stoch).root == pytest.approx(1.0, abs=1e-12)
    pair = perron_root(m)
    assert pair.root == pytest.approx(max(abs(np.linalg.eigvals(m))), rel=1e-12)
    assert np.abs(m @ pair.right - pair.root * pair.right).max() <= 1e-10 * pair.root
    assert np.abs(pair.left @ m - pair.root * pair.left).max() <= 1e-10 * pair.root * pair.left.max()
    assert pair.left @ pair.right == pytest.approx(1.0, abs=1e-12)
    assert (pair.left > 0).all() and (pair.right > 0).all()


def test_chi_examples(r1, r2):
    assert chi(r1, (0, 0)) == 1.0
    assert chi(r1, (LN3, LN3)) == pytest.approx(1.0, abs=1e-15)
    for th in [(0.3, -0.7), (1.0, 1.0), (-1.5, 0.2)]:
        assert chi(r2, th) == pytest.approx(chi(r1, th), rel=1e-10)


@pytest.mark.parametrize("name", ["R0", "R1", "R2"])
def test_chi_origin_all_models(name):
    assert abs(chi(reference_model(name), (0, 0)) - 1.0) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s0=st.integers(1, 4))
def test_chi_origin_random_models(seed, s0):
    m = random_model(np.random.default_rng(seed), s0)
    assert abs(chi(m, (0, 0)) - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s0=st.integers(1, 3), a=thetas, b=thetas)
def test_chi_midpoint_log_convex(seed, s0, a, b):
    m = random_model(np.random.default_rng(seed), s0)
    mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
    assert chi(m, mid) ** 2 <= chi(m, a) * chi(m, b) * (1 + 1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), theta=thetas)
def test_chi_gradient_matches_finite_difference(seed, theta):
    m = random_model(np.random.default_rng(seed), 3)
    val, (g1, g2) = chi_gradient(m, theta)
    h = 1e-6
    fd1 = (chi(m, (theta[0] + h, theta[1])) - chi(m, (theta[0] - h, theta[1]))) / (2 * h)
    fd2 = (chi(m, (theta[0], theta[1] + h)) - chi(m, (theta[0], theta[1] - h))) / (2 * h)
    assert val == pytest.approx(chi(m, theta), rel=1e-12)
    assert g1 == pytest.approx(fd1, rel=1e-5, abs=1e-7)
    assert g2 == pytest.approx(fd2, rel=1e-5, abs=1e-7)


def test_evaluate_residuals(r2):
    ev = evaluate(r2, (0.4, -0.3))
    assert np.abs(ev.matrix @ ev.right_vector - ev.perron_root * ev.right_vector).max() <= 1e-10
    assert np.abs(ev.left_vector @ ev.matrix - ev.perron_root * ev.left_vector).max() <= 1e-10
    assert ev.left_vector @ ev.right_vector == pytest.approx(1.0, abs=1e-12)
