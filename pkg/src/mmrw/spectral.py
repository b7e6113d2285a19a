"""Feynman-Kac operators and Perron roots."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from mmrw import _kernels
from mmrw.model import STEPS

__all__ = [
    "PerronError",
    "PerronPair",
    "OperatorEvaluation",
    "feynman_kac",
    "marginal_operator",
    "perron_root",
    "chi",
    "chi_gradient",
    "evaluate",
]

DEFAULT_TOL = 1e-13
DEFAULT_MAX_ITER = 100_000
_EXP_LIMIT = 709.0


class PerronError(ArithmeticError):
    """Raised when a Perron root cannot be computed."""


@dataclass(frozen=True)
class PerronPair:
    root: float
    left: np.ndarray
    right: np.ndarray
    iterations: int


@dataclass(frozen=True)
class OperatorEvaluation:
    theta: tuple
    matrix: np.ndarray
    perron_root: float
    left_vector: np.ndarray
    right_vector: np.ndarray


def _exp(x):
    if x > _EXP_LIMIT:
        raise OverflowError(f"exp({x!r}) overflows; theta is beyond the exponent range")
    return math.exp(x)


@lru_cache(maxsize=256)
def _terms(model):
    # nonzero blocks as (i, j, block); scalar models keep plain floats
    out = []
    for i, j in STEPS:
        b = model.block(i, j)
        if b.any():
            out.append((i, j, float(b[0, 0]) if model.s0 == 1 else b))
    return tuple(out)


@lru_cache(maxsize=256)
def _stacked(model):
    terms = _terms(model)
    ii = np.array([t[0] for t in terms], dtype=np.float64)
    jj = np.array([t[1] for t in terms], dtype=np.float64)
    blocks = np.ascontiguousarray(np.array([t[2] for t in terms], dtype=np.float64))
    return ii, jj, blocks


def _fused(model, t1, t2):
    if max(abs(t1), abs(t2)) * 2 > _EXP_LIMIT:
        feynman_kac(model, (t1, t2))  # raises if a weight really overflows
    ii, jj, blocks = _stacked(model)
    root, g1, g2, ok = _kernels.chi_with_gradient(ii, jj, blocks, t1, t2,
                                                  DEFAULT_TOL, DEFAULT_MAX_ITER)
    if not math.isfinite(root):
        raise OverflowError(f"Feynman-Kac operator overflowed at theta=({t1!r}, {t2!r})")
    if not ok:
        raise PerronError(f"power iteration did not converge at theta=({t1!r}, {t2!r})")
    return root, (g1, g2)


def feynman_kac(model, theta):
    """Matrix moment generating function of one step.

    Parameters
    ----------
    model : MMRWModel
    theta : pair of float

    Returns
    -------
    ndarray, shape (s0, s0)
        ``sum_{i,j} exp(i*theta1 + j*theta2) A[i, j]``.

    Raises
    ------
    OverflowError
        If an exponential weight of a nonzero block overflows.
    """
    t1, t2 = float(theta[0]), float(theta[1])
    out = np.zeros((model.s0, model.s0))
    for i, j, b in _terms(model):
        out += _exp(i * t1 + j * t2) * b
    if not np.all(np.isfinite(out)):
        raise OverflowError("Feynman-Kac operator overflowed")
    return out


def marginal_operator(model, axis, theta, j):
    """One-sided transform of the blocks.

    For ``axis=1`` returns ``A_{*,j}(theta) = sum_i exp(i*theta) A[i, j]``;
    for ``axis=2`` returns ``A_{j,*}(theta) = sum_k exp(k*theta) A[j, k]``.
    """
    if j not in (-1, 0, 1):
        raise ValueError("j must be -1, 0 or 1")
    out = np.zeros((model.s0, model.s0))
    for k in (-1, 0, 1):
        b = model.block(k, j) if axis == 1 else model.block(j, k) if axis == 2 else None
        if b is None:
            raise ValueError("axis must be 1 or 2")
        if b.any():
            out += _exp(k * float(theta)) * b
    return out


def _dominant(matrix, v0, tol, max_iter):
    rowmax = matrix.sum(axis=1).max()
    shift = 1e-3 * rowmax
    v, lam, it, ok = _kernels.power_iteration(matrix, v0, shift, tol, max_iter)
    if not ok:
        raise PerronError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(last estimate {lam!r}, size {matrix.shape[0]})")
    return v, lam, it


def perron_root(matrix, *, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, right0=None, left0=None):
    """Spectral radius and Perron vectors of a nonnegative matrix.

    Uses power iteration on ``M + delta I`` with ``delta = 1e-3 * max row sum``
    so periodic matrices converge, then a Rayleigh quotient with both
    vectors.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Nonnegative, assumed irreducible.
    tol : float, default 1e-13
        Relative tolerance on successive root estimates.
    max_iter : int, default 100000
    right0, left0 : ndarray, optional
        Positive starting vectors (warm start).

    Returns
    -------
    PerronPair
        ``right`` sums to one and ``left @ right == 1``.

    Raises
    ------
    PerronError
        Zero matrix, negative entries, or no convergence.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if (m < 0).any():
        raise PerronError("matrix has negative entries")
    if not m.any():
        raise PerronError("zero matrix has no Perron root")
    n = m.shape[0]
    if n == 1:
        one = np.ones(1)
        return PerronPair(float(m[0, 0]), one, one.copy(), 0)
    ones = np.ones(n)
    r0 = ones if right0 is None else np.maximum(right0, 1e-300)
    l0 = ones if left0 is None else np.maximum(left0, 1e-300)
    right, _, it_r = _dominant(m, r0, tol, max_iter)
    left, _, it_l = _dominant(np.ascontiguousarray(m.T), l0, tol, max_iter)
    denom = left @ right
    if denom <= 0:
        raise PerronError("left and right Perron vectors are orthogonal")
    root = float(left @ m @ right / denom)
    return PerronPair(root, left / denom, right, it_r + it_l)


def chi(model, theta):
    """Perron root of the Feynman-Kac operator at ``theta``."""
    if model.s0 == 1:
        t1, t2 = float(theta[0]), float(theta[1])
        return math.fsum(_exp(i * t1 + j * t2) * b for i, j, b in _terms(model))
    return _fused(model, float(theta[0]), float(theta[1]))[0]


def chi_gradient(model, theta):
    """``chi`` and its gradient, via the eigenvalue perturbation formula.

    Returns
    -------
    value : float
    grad : tuple of float
    """
    t1, t2 = float(theta[0]), float(theta[1])
    s0 = model.s0
    if s0 == 1:
        val = g1 = g2 = 0.0
        for i, j, b in _terms(model):
            w = _exp(i * t1 + j * t2) * b
            val += w
            g1 += i * w
            g2 += j * w
        return val, (g1, g2)
    return _fused(model, t1, t2)


def evaluate(model, theta):
    """Full :class:`OperatorEvaluation` at ``theta``."""
    mat = feynman_kac(model, theta)
    pair = perron_root(mat)
    mat.setflags(write=False)
    return OperatorEvaluation((float(theta[0]), float(theta[1])), mat, pair.root,
                              pair.left, pair.right)
