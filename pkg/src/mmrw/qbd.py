"""Quasi-birth-and-death representations, rate matrices and re-blockings.

The walk is a QBD process in three ways:

* ``(1)``: level ``x1``, phase ``(x2, j)``;
* ``(2)``: level ``x2``, phase ``(x1, j)``;
* ``(1,1)``: level ``min(x1, x2)``, phase ``(x1 - x2, j)``.

Phases are countable, so every builder keeps a finite window of ``K``
phase values and kills transitions that leave it.  Phase blocks are
ordered by increasing phase value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mmrw.model import MMRWModel, STEPS
from mmrw.occupation import fundamental_block
from mmrw.spectral import PerronError, perron_root

__all__ = [
    "ALPHAS",
    "QbdTriple",
    "RateMatrix",
    "ExpandedModel",
    "RateMatrixError",
    "parse_alpha",
    "build_qbd",
    "a11_placements",
    "solve_rate_matrix",
    "cp_estimate",
    "cp_curve",
    "matrix_geometric_check",
    "selector",
    "c_expand",
    "block_circulant",
    "circulant_symbol",
    "a11_component",
    "a11_kernel",
    "build_a11_operator",
]

ALPHAS = ((1,), (2,), (1, 1))
RATE_TOL = 1e-14
RATE_MAX_ITER = 1_000_000


class RateMatrixError(ArithmeticError):
    """The rate-matrix iteration failed."""


@dataclass(frozen=True)
class QbdTriple:
    """Phase-truncated level-transition blocks of a QBD representation.

    Attributes
    ----------
    alpha : tuple of int
        ``(1,)``, ``(2,)`` or ``(1, 1)``.
    K : int
        Phase window ``0..K`` for ``(1,)``/``(2,)``, ``-K..K`` for ``(1, 1)``.
    A_minus, A_zero, A_plus : ndarray
        Blocks for level changes -1, 0 and +1.
    s0 : int
    """

    alpha: tuple
    K: int
    A_minus: np.ndarray
    A_zero: np.ndarray
    A_plus: np.ndarray
    s0: int = 1

    @property
    def phases(self):
        return list(range(-self.K, self.K + 1)) if self.alpha == (1, 1) else list(range(self.K + 1))

    def block_of(self, matrix, p, q):
        """Sub-block of ``matrix`` from phase value ``p`` to phase value ``q``."""
        ph = self.phases
        a, b = ph.index(p) * self.s0, ph.index(q) * self.s0
        return matrix[a:a + self.s0, b:b + self.s0]


@dataclass(frozen=True)
class RateMatrix:
    R: np.ndarray
    iterations: int
    residual: float
    monotone: bool = True


@dataclass(frozen=True)
class ExpandedModel:
    base: MMRWModel
    c: tuple
    expanded: MMRWModel


def parse_alpha(alpha):
    """Accept ``1``, ``"2"``, ``"1,1"``, ``"(1,1)"`` or a tuple."""
    if isinstance(alpha, (int, np.integer)):
        alpha = (int(alpha),)
    elif isinstance(alpha, str):
        parts = [p for p in alpha.strip().strip("()").replace(" ", "").split(",") if p]
        try:
            alpha = tuple(int(p) for p in parts)
        except ValueError:
            raise ValueError(f"unknown representation {alpha!r}") from None
    alpha = tuple(alpha)
    if alpha not in ALPHAS:
        raise ValueError(f"representation must be one of (1), (2), (1,1); got {alpha}")
    return alpha


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _place(mat, s0, row, col, block):
    mat[row * s0:(row + 1) * s0, col * s0:(col + 1) * s0] += block


def _axis_triple(model, alpha, K):
    # level along the chosen axis, phase = the other coordinate in 0..K
    s0 = model.s0
    n = (K + 1) * s0
    mats = {lev: np.zeros((n, n)) for lev in (-1, 0, 1)}
    for i, j in STEPS:
        lev, off = (i, j) if alpha == (1,) else (j, i)
        b = model.block(i, j)
        if not b.any():
            continue
        for p in range(K + 1):
            q = p + off
            if 0 <= q <= K:
                _place(mats[lev], s0, p, q, b)
    return mats


def a11_placements(p):
    """Blocks leaving phase ``p`` in the ``(1,1)`` representation.

    Returns
    -------
    dict
        ``{level_change: [(phase_offset, (i, j)), ...]}`` listing which
        block ``A[i, j]`` sits at phase ``p + phase_offset``.
    """
    if p >= 2:
        return {-1: [(0, (-1, -1)), (1, (0, -1)), (2, (1, -1))],
                0: [(-1, (-1, 0)), (0, (0, 0)), (1, (1, 0))],
                1: [(-2, (-1, 1)), (-1, (0, 1)), (0, (1, 1))]}
    if p == 1:
        return {-1: [(0, (-1, -1)), (1, (0, -1)), (2, (1, -1))],
                0: [(-2, (-1, 1)), (-1, (-1, 0)), (0, (0, 0)), (1, (1, 0))],
                1: [(-1, (0, 1)), (0, (1, 1))]}
    if p == 0:
        return {-1: [(-2, (-1, 1)), (-1, (-1, 0)), (0, (-1, -1)), (1, (0, -1)), (2, (1, -1))],
                0: [(-1, (0, 1)), (0, (0, 0)), (1, (1, 0))],
                1: [(0, (1, 1))]}
    if p == -1:
        return {-1: [(-2, (-1, 1)), (-1, (-1, 0)), (0, (-1, -1))],
                0: [(-1, (0, 1)), (0, (0, 0)), (1, (0, -1)), (2, (1, -1))],
                1: [(0, (1, 1)), (1, (1, 0))]}
    return {-1: [(-2, (-1, 1)), (-1, (-1, 0)), (0, (-1, -1))],
            0: [(-1, (0, 1)), (0, (0, 0)), (1, (0, -1))],
            1: [(0, (1, 1)), (1, (1, 0)), (2, (1, -1))]}


def _a11_triple(model, K):
    s0 = model.s0
    n = (2 * K + 1) * s0
    mats = {lev: np.zeros((n, n)) for lev in (-1, 0, 1)}
    for p in range(-K, K + 1):
        for lev, entries in a11_placements(p).items():
            for off, (i, j) in entries:
                q = p + off
                if -K <= q <= K:
                    _place(mats[lev], s0, p + K, q + K, model.block(i, j))
    return mats


def build_qbd(model, alpha, K):
    """Phase-truncated QBD blocks for representation ``alpha``.

    Parameters
    ----------
    model : MMRWModel
    alpha : {(1,), (2,), (1, 1)} or str
    K : int
        Phase window parameter, at least 2.

    Returns
    -------
    QbdTriple
        For ``(1,)`` and ``(2,)`` each block is block tri-diagonal in the
        phase coordinate; for ``(1, 1)`` the rows follow the five regimes
        ``p <= -2, p = -1, p = 0, p = 1, p >= 2`` of the phase ``x1 - x2``.
    """
    alpha = parse_alpha(alpha)
    K = int(K)
    if K < 2:
        raise ValueError("K must be at least 2")
    mats = _a11_triple(model, K) if alpha == (1, 1) else _axis_triple(model, alpha, K)
    for m in mats.values():
        m.setflags(write=False)
    return QbdTriple(alpha, K, mats[-1], mats[0], mats[1], model.s0)


# ---------------------------------------------------------------------------
# rate matrices
# ---------------------------------------------------------------------------

def solve_rate_matrix(triple, tol=RATE_TOL, max_iter=RATE_MAX_ITER):
    """Minimal nonnegative solution of ``R = A_plus + R A_zero + R^2 A_minus``.

    Runs the natural fixed-point iteration from ``R = 0``; its iterates
    increase entrywise to the minimal solution.

    Parameters
    ----------
    triple : QbdTriple
    tol : float, default 1e-14
        Stop when the max-norm update falls to ``tol``.
    max_iter : int, default 1_000_000

    Returns
    -------
    RateMatrix
        ``monotone`` records whether every iterate dominated the previous
        one (up to 1e-15 rounding).

    Raises
    ------
    RateMatrixError
        If the iteration cap is reached.
    """
    am, a0, ap = triple.A_minus, triple.A_zero, triple.A_plus
    rows = (am + a0 + ap).sum(axis=1)
    if (rows > 1 + 1e-12).any():
        raise RateMatrixError("QBD blocks are not substochastic")
    R = np.zeros_like(ap)
    monotone = True
    for it in range(1, int(max_iter) + 1):
        new = ap + R @ a0 + (R @ R) @ am
        if (new < R - 1e-15).any():
            monotone = False
        delta = np.abs(new - R).max()
        R = new
        if delta <= tol:
            break
    else:
        raise RateMatrixError(f"rate matrix iteration did not converge in {max_iter} steps "
                              f"(last update {delta:.3e})")
    residual = float(np.abs(R - (R @ R @ am + R @ a0 + ap)).max())
    R.setflags(write=False)
    return RateMatrix(R, it, residual, monotone)


def cp_estimate(rate):
    """Convergence parameter ``1 / spr(R)``; ``inf`` for a zero or nilpotent ``R``."""
    R = rate.R if isinstance(rate, RateMatrix) else np.asarray(rate, dtype=float)
    if not R.any():
        return math.inf
    try:
        root = perron_root(R).root
    except PerronError:
        if not np.linalg.matrix_power(R, R.shape[0]).any():
            return math.inf
        raise
    return math.inf if root <= 0 else 1.0 / root


def cp_curve(model, alpha, Ks):
    """``(K, log cp, iterations, residual)`` for each truncation in ``Ks``."""
    out = []
    for K in Ks:
        rate = solve_rate_matrix(build_qbd(model, alpha, K))
        out.append((int(K), math.log(cp_estimate(rate)), rate.iterations, rate.residual))
    return out


def matrix_geometric_check(model, alpha, K=30, k_max=3, L=64, start_max=3):
    """Compare ``N_00 R^k`` with the truncated occupation table.

    ``N_00 = (I - A_zero - R A_minus)^{-1}`` is the occupation measure of the
    bottom level started there.  Rows are start phases ``(m, j)`` with
    ``m <= start_max``, columns the central phases ``<= K // 2``.

    Returns
    -------
    float
        Max absolute deviation over ``k = 0..k_max``.
    """
    alpha = parse_alpha(alpha)
    if alpha == (1, 1):
        raise ValueError("the matrix-geometric check covers the (1) and (2) representations")
    if k_max > 5:
        raise ValueError("k_max should be small (at most 5)")
    s0 = model.s0
    triple = build_qbd(model, alpha, K)
    R = solve_rate_matrix(triple).R
    n = R.shape[0]
    n00 = np.linalg.inv(np.eye(n) - triple.A_zero - R @ triple.A_minus)
    central = K // 2
    worst = 0.0
    rk = np.eye(n)
    for k in range(k_max + 1):
        nk = n00 @ rk
        for m in range(start_max + 1):
            pos = (0, m) if alpha == (1,) else (m, 0)
            table = fundamental_block(model, pos, L)
            for j in range(s0):
                row = nk[m * s0 + j].reshape(K + 1, s0)[:central + 1]
                ref = table[j, k, :central + 1, :] if alpha == (1,) else table[j, :central + 1, k, :]
                worst = max(worst, float(np.abs(row - ref).max()))
        rk = rk @ R
    return worst


# ---------------------------------------------------------------------------
# c-expansion and block circulants
# ---------------------------------------------------------------------------

def selector(k, a, b):
    """``k x k`` matrix with a single one at 1-based position ``(a, b)``."""
    e = np.zeros((k, k))
    e[a - 1, b - 1] = 1.0
    return e


def _tridiag(diag, sup, sub, k):
    s = diag.shape[0]
    out = np.zeros((k * s, k * s))
    for r in range(k):
        out[r * s:(r + 1) * s, r * s:(r + 1) * s] = diag
        if r + 1 < k:
            out[r * s:(r + 1) * s, (r + 1) * s:(r + 2) * s] = sup
            out[(r + 1) * s:(r + 2) * s, r * s:(r + 1) * s] = sub
    return out


def c_expand(model, c):
    """Re-block the walk by quotient and remainder of each coordinate mod ``c``.

    The new lattice point is ``(x1 // c1, x2 // c2)`` and the new background
    state is ``(x2 % c2, x1 % c1, j)`` with index ``((x2 % c2) * c1 + x1 % c1) * s0 + j``.
    Steps of the expanded walk in direction ``(1, 1)`` correspond to
    steps of the original in direction ``c``.

    Returns
    -------
    ExpandedModel
    """
    c1, c2 = int(c[0]), int(c[1])
    if c1 < 1 or c2 < 1:
        raise ValueError("c must be positive")
    A = model.block
    B = {}
    for j in (-1, 0, 1):
        B[-1, j] = np.kron(selector(c1, 1, c1), A(-1, j))
        B[1, j] = np.kron(selector(c1, c1, 1), A(1, j))
        B[0, j] = _tridiag(A(0, j), A(1, j), A(-1, j), c1)
    blocks = np.zeros((3, 3, c1 * c2 * model.s0, c1 * c2 * model.s0))
    for i in (-1, 0, 1):
        blocks[i + 1, 0] = np.kron(selector(c2, 1, c2), B[i, -1])
        blocks[i + 1, 2] = np.kron(selector(c2, c2, 1), B[i, 1])
        blocks[i + 1, 1] = _tridiag(B[i, 0], B[i, 1], B[i, -1], c2)
    name = f"{model.name}[c={c1},{c2}]" if model.name else ""
    return ExpandedModel(model, (c1, c2), MMRWModel(c1 * c2 * model.s0, blocks, name))


def circulant_symbol(c_minus, c_zero, c_plus, theta):
    """``exp(-theta) C_minus + C_zero + exp(theta) C_plus``."""
    cm, c0, cp = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (c_minus, c_zero, c_plus))
    return math.exp(-theta) * cm + c0 + math.exp(theta) * cp


def block_circulant(c_minus, c_zero, c_plus, theta, k):
    """The ``k x k`` block matrix wrapping a tri-diagonal band around a cycle.

    ``C_zero`` on the diagonal, ``C_plus`` above it, ``C_minus`` below it,
    ``exp(-theta) C_minus`` in the top-right corner and ``exp(theta) C_plus``
    in the bottom-left corner.  For ``k = 1`` all three land on the single
    block.
    """
    cm, c0, cp = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (c_minus, c_zero, c_plus))
    if not cm.shape == c0.shape == cp.shape or cm.shape[0] != cm.shape[1]:
        raise ValueError("blocks must be square and of equal size")
    if k < 1:
        raise ValueError("k must be at least 1")
    s = c0.shape[0]
    out = np.zeros((k * s, k * s))
    for r in range(k):
        _place(out, s, r, r, c0)
        if r + 1 < k:
            _place(out, s, r, r + 1, cp)
            _place(out, s, r + 1, r, cm)
    _place(out, s, 0, k - 1, math.exp(-theta) * cm)
    _place(out, s, k - 1, 0, math.exp(theta) * cp)
    return out


# ---------------------------------------------------------------------------
# the (1,1) operator
# ---------------------------------------------------------------------------

def a11_component(model, m, theta):
    """``A^{(1,1)}_{*,m}(theta) = sum_{i - j = m} exp(j*theta) A[i, j]`` for ``|m| <= 2``."""
    if m not in (-2, -1, 0, 1, 2):
        raise ValueError("phase offset must lie in -2..2")
    out = np.zeros((model.s0, model.s0))
    for i, j in STEPS:
        if i - j == m:
            out += math.exp(j * theta) * model.block(i, j)
    return out


def a11_kernel(model, eta1, eta2):
    """``sum_m exp(m*eta2) A^{(1,1)}_{*,m}(eta1)``; equals ``A_{*,*}(eta2, eta1 - eta2)``."""
    return sum(math.exp(m * eta2) * a11_component(model, m, eta1) for m in range(-2, 3))


def build_a11_operator(model, theta, window):
    """Level transform ``sum_l exp(l*theta) A^{(1,1)}_l`` on phases ``-window..window``.

    Rows with phase at least 2 carry ``A^{(1,1)}_{*,m}(theta)`` at offset ``m``;
    rows with phase at most -2 carry ``exp(m*theta) A^{(1,1)}_{*,m}(theta)``;
    the three middle rows follow the boundary regimes of :func:`a11_placements`.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    t = build_qbd(model, (1, 1), window)
    return math.exp(-theta) * t.A_minus + t.A_zero + math.exp(theta) * t.A_plus
