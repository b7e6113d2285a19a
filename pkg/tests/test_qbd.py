import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmrw.model import MMRWModel, STEPS, reference_model, swap_axes, validate
from mmrw.qbd import (
    QbdTriple,
    RateMatrixError,
    a11_component,
    a11_kernel,
    a11_placements,
    block_circulant,
    build_a11_operator,
    build_qbd,
    c_expand,
    circulant_symbol,
    cp_curve,
    cp_estimate,
    matrix_geometric_check,
    parse_alpha,
    selector,
    solve_rate_matrix,
)
from mmrw.spectral import chi, feynman_kac, perron_root

from conftest import random_model

LN3 = math.log(3.0)
THETA_BAR = math.log(2 + math.sqrt(3))


def scalar_triple(q, r, p):
    return QbdTriple((1,), 2, np.array([[q]]), np.array([[r]]), np.array([[p]]), 1)


def brute_a11(p):
    # move a state with phase p = x1 - x2 by every step and read off level change and new phase
    level = 5
    x1, x2 = level + max(p, 0), level + max(-p, 0)
    out = {}
    for i, j in STEPS:
        y1, y2 = x1 + i, x2 + j
        out.setdefault(min(y1, y2) - level, set()).add((y1 - y2 - p, (i, j)))
    return out


@pytest.mark.parametrize("p", range(-5, 6))
def test_a11_table_matches_lattice_mapping(p):
    table = {lev: set(entries) for lev, entries in a11_placements(p).items()}
    assert table == brute_a11(p)


def test_parse_alpha():
    assert parse_alpha(1) == (1,)
    assert parse_alpha("2") == (2,)
    assert parse_alpha("(1,1)") == (1, 1)
    assert parse_alpha("1, 1") == (1, 1)
    with pytest.raises(ValueError):
        parse_alpha("3")


def test_r1_axis_layout_k2(r1):
    t = build_qbd(r1, 1, 2)
    assert np.array_equal(t.A_plus, np.diag([0.1, 0.1, 0.1]))
    assert np.array_equal(t.A_minus, np.diag([0.3, 0.3, 0.3]))
    expected_zero = np.array([[0.2, 0.1, 0.0], [0.3, 0.2, 0.1], [0.0, 0.3, 0.2]])
    assert np.array_equal(t.A_zero, expected_zero)


def test_r1_a11_phase_zero_row(r1):
    t = build_qbd(r1, (1, 1), 3)
    assert t.block_of(t.A_zero, 0, -1)[0, 0] == r1.block(0, 1)[0, 0]
    assert t.block_of(t.A_zero, 0, 0)[0, 0] == r1.block(0, 0)[0, 0]
    assert t.block_of(t.A_zero, 0, 1)[0, 0] == r1.block(1, 0)[0, 0]
    row = t.A_zero[t.phases.index(0)]
    assert np.count_nonzero(row) == 3


def test_build_requires_k_at_least_2(r1):
    with pytest.raises(ValueError):
        build_qbd(r1, 1, 1)


@pytest.mark.parametrize("alpha", ["1", "2", "1,1"])
def test_interior_rows_stochastic(r2, alpha):
    t = build_qbd(r2, alpha, 12)
    rows = (t.A_minus + t.A_zero + t.A_plus).sum(axis=1)
    assert (rows <= 1 + 1e-12).all()
    s0 = r2.s0
    interior = rows[3 * s0:-3 * s0]
    assert np.allclose(interior, 1.0, atol=1e-12)


def test_axis_two_mirrors_axis_one():
    m = random_model(np.random.default_rng(2), 2, density=1.0)
    a, b = build_qbd(m, 1, 6), build_qbd(swap_axes(m), 2, 6)
    for x, y in zip((a.A_minus, a.A_zero, a.A_plus), (b.A_minus, b.A_zero, b.A_plus)):
        assert np.array_equal(x, y)


def test_rate_matrix_scalar_examples():
    assert solve_rate_matrix(scalar_triple(0.5, 0.3, 0.2)).R[0, 0] == pytest.approx(0.4, abs=1e-13)
    assert solve_rate_matrix(scalar_triple(0.0, 0.3, 0.2)).R[0, 0] == pytest.approx(0.2 / 0.7, abs=1e-14)
    assert cp_estimate(np.array([[0.4]])) == pytest.approx(2.5)
    assert cp_estimate(np.zeros((2, 2))) == math.inf


def test_rate_matrix_rejects_superstochastic():
    with pytest.raises(RateMatrixError):
        solve_rate_matrix(scalar_triple(0.5, 0.4, 0.2))


@pytest.mark.parametrize("alpha", ["1", "2", "1,1"])
def test_rate_matrix_residual_and_minimality(r2, alpha):
    t = build_qbd(r2, alpha, 8)
    rate = solve_rate_matrix(t)
    assert rate.residual <= 1e-12
    assert rate.monotone
    # the minimal solution is dominated by any other nonnegative solution; check iterates stay below R
    R = np.zeros_like(rate.R)
    for _ in range(50):
        R = t.A_plus + R @ t.A_zero + R @ R @ t.A_minus
        assert (R <= rate.R + 1e-15).all()


def test_rate_matrix_r0_is_zero(r0):
    rate = solve_rate_matrix(build_qbd(r0, 1, 5))
    assert not rate.R.any()
    assert cp_estimate(rate) == math.inf


def test_cp_converges_from_above(r1):
    curve = cp_curve(r1, 1, [10, 20, 40])
    logs = [c[1] for c in curve]
    assert logs[0] > logs[1] > logs[2] > THETA_BAR
    assert abs(logs[2] - THETA_BAR) <= 0.05


def test_cp_a11_bound(r1):
    logcp = cp_curve(r1, "1,1", [40])[0][1]
    assert logcp <= 2 * LN3 + 0.05


def test_matrix_geometric_identity(r0, r1):
    assert matrix_geometric_check(r1, 1, K=30, k_max=3) <= 1e-6
    assert matrix_geometric_check(r0, 1, K=10, k_max=3, L=20) == 0.0


def test_matrix_geometric_mirror(r1):
    m = random_model(np.random.default_rng(4), 1, density=1.0)
    a = matrix_geometric_check(m, 1, K=20, k_max=2, L=40)
    b = matrix_geometric_check(swap_axes(m), 2, K=20, k_max=2, L=40)
    assert a == pytest.approx(b, abs=1e-13)
    assert a <= 1e-6


def test_matrix_geometric_rejects_a11(r1):
    with pytest.raises(ValueError):
        matrix_geometric_check(r1, "1,1")


def test_selector():
    e = selector(3, 1, 3)
    assert e[0, 2] == 1.0 and e.sum() == 1.0


def test_c_expand_identity(r2):
    assert np.array_equal(c_expand(r2, (1, 1)).expanded.blocks, r2.blocks)


def test_c_expand_r1_21(r1):
    ex = c_expand(r1, (2, 1)).expanded
    assert ex.s0 == 2
    assert np.allclose(ex.total.sum(axis=1), 1.0, atol=1e-12)
    assert validate(ex).stochastic


def test_c_expand_kronecker_structure(r1):
    ex = c_expand(r1, (2, 3)).expanded
    # the corner block of A_{-1,-1} on the x2 remainder axis is the selector (1, c2)
    blk = ex.block(-1, -1)
    assert blk.shape == (6, 6)
    assert np.array_equal(blk, np.kron(selector(3, 1, 3), np.kron(selector(2, 1, 2), r1.block(-1, -1))))


def test_c_expand_matches_lattice_walk(r1):
    # each expanded transition corresponds to one original step on the lattice
    c1, c2 = 2, 3
    ex = c_expand(r1, (c1, c2)).expanded
    rng = np.random.default_rng(0)
    for _ in range(30):
        x1, x2 = rng.integers(6, 30, size=2)
        for i, j in STEPS:
            p = r1.block(i, j)[0, 0]
            if p == 0:
                continue
            y1, y2 = x1 + i, x2 + j
            src = (x2 % c2) * c1 + x1 % c1
            dst = (y2 % c2) * c1 + y1 % c1
            di, dj = y1 // c1 - x1 // c1, y2 // c2 - x2 // c2
            assert ex.block(di, dj)[src, dst] == pytest.approx(p)


@pytest.mark.parametrize("name", ["R1", "R2"])
@pytest.mark.parametrize("c", [(1, 2), (2, 1), (2, 3)])
def test_expansion_spectral_identity(name, c):
    m = reference_model(name)
    ex = c_expand(m, c).expanded
    rng = np.random.default_rng(17)
    for th in rng.uniform(-1, 1, size=(20, 2)):
        lhs = chi(m, th)
        rhs = perron_root(feynman_kac(ex, (c[0] * th[0], c[1] * th[1]))).root
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_block_circulant_examples():
    assert np.allclose(block_circulant(0.3, 0.2, 0.1, 0.0, 2), [[0.2, 0.4], [0.4, 0.2]])
    one = block_circulant(0.3, 0.2, 0.1, 0.5, 1)
    assert one[0, 0] == pytest.approx(circulant_symbol(0.3, 0.2, 0.1, 0.5)[0, 0])


@pytest.mark.parametrize("theta", [-0.7, 0.0, 0.4])
@pytest.mark.parametrize("k", [2, 3, 5])
def test_block_circulant_identity_scalar(theta, k):
    lhs = perron_root(circulant_symbol(0.3, 0.2, 0.1, theta)).root
    rhs = perron_root(block_circulant(0.3, 0.2, 0.1, k * theta, k)).root
    assert lhs == pytest.approx(rhs, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), theta=st.floats(-1, 1), k=st.integers(1, 6))
def test_block_circulant_identity_random_2x2(seed, theta, k):
    rng = np.random.default_rng(seed)
    cm, c0, cp = rng.random((3, 2, 2))
    lhs = perron_root(circulant_symbol(cm, c0, cp, theta)).root
    rhs = perron_root(block_circulant(cm, c0, cp, k * theta, k)).root
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_a11_component_examples(r1, r2):
    assert not a11_component(r1, -2, 0.0).any()
    m = random_model(np.random.default_rng(1), 2, density=1.0)
    for th in (0.0, 0.7):
        assert np.allclose(a11_component(m, -2, th), math.exp(th) * m.block(-1, 1))


@settings(max_examples=20, deadline=None)
@given(t1=st.floats(-1.5, 1.5), t2=st.floats(-1.5, 1.5))
def test_shift_identity(t1, t2):
    for m in (reference_model("R1"), reference_model("R2")):
        assert np.abs(a11_kernel(m, t1 + t2, t1) - feynman_kac(m, (t1, t2))).max() <= 1e-12


def test_a11_operator_interior_rows(r2):
    th = 0.3
    op = build_a11_operator(r2, th, 6)
    t = build_qbd(r2, (1, 1), 6)
    s0 = r2.s0
    for p in (3, 4, -3, -4):
        row = {q: t.block_of(op, p, q) for q in range(p - 2, p + 3)}
        for m in range(-2, 3):
            expected = a11_component(r2, m, th) if p >= 2 else math.exp(m * th) * a11_component(r2, m, th)
            assert np.allclose(row[p + m], expected, atol=1e-15), (p, m)
    assert op.shape == (13 * s0, 13 * s0)
