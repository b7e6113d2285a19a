"""Asymptotic decay rates of occupation measures and the convergence domain.

The decay rate of ``q(x, (k*c, j'))`` as ``k -> infinity`` in an integer
direction ``c`` equals the support function of the region
``{chi < 1}`` evaluated at ``c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mmrw.gamma import extreme_points
from mmrw.model import require_negative_drift
from mmrw.spectral import chi

__all__ = [
    "DecayResult",
    "check_direction",
    "decay_rate",
    "marginal_decay_rate",
    "domain_contains",
    "frontier_points",
    "qbd_stationary_lower_bound",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DecayResult:
    """Decay rate in an integer direction.

    Attributes
    ----------
    direction : tuple of int
    rate : float
        ``sup <c, theta>`` over the region ``chi < 1``.
    argmax : tuple of float
        Boundary point attaining the supremum.
    flat_segment : bool
        True if the maximisation collapsed onto an end of the search interval.
    """

    direction: tuple
    rate: float
    argmax: tuple
    flat_segment: bool


def check_direction(c, coprime=False):
    """Validate an integer direction and return it as a tuple."""
    try:
        c1, c2 = c
    except (TypeError, ValueError):
        raise ValueError(f"direction must be a pair, got {c!r}") from None
    for v in (c1, c2):
        if isinstance(v, (bool, str)) or not float(v).is_integer() or v < 1:
            raise ValueError(f"direction components must be positive integers, got {c!r}")
    c1, c2 = int(c1), int(c2)
    if coprime and math.gcd(c1, c2) != 1:
        raise ValueError(f"direction components must be mutually prime, got {(c1, c2)}")
    return c1, c2


def _golden_max(f, a, b, width):
    # maximise a concave function on [a, b]
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > width:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def decay_rate(model, c, width=1e-10):
    """Exact decay rate in direction ``c``.

    Maximises ``c1*theta1 + c2*zeta2_bar(theta1)`` over
    ``theta1`` between the first coordinates of the points maximising
    ``theta2`` and ``theta1``, by golden-section search on this concave
    objective.

    Parameters
    ----------
    model : MMRWModel
    c : pair of positive int
    width : float, default 1e-10
        Final golden-section bracket width.

    Returns
    -------
    DecayResult

    Raises
    ------
    AssumptionError
        If the drift condition fails, since the occupation measure may be
        infinite.
    ValueError
        If ``c`` is not a pair of positive integers.

    Examples
    --------
    >>> from mmrw.model import reference_model
    >>> round(decay_rate(reference_model("R1"), (1, 1)).rate, 8)
    2.19722458
    """
    c1, c2 = check_direction(c)
    require_negative_drift(model)
    geo = extreme_points(model)
    a = geo.theta_bar_2[0]
    b = geo.theta_bar_1[0]

    def objective(t):
        return c1 * t + c2 * geo.zeta_upper(t)

    if b - a <= width:
        t = b
    else:
        t, _ = _golden_max(objective, a, b, width)
    flat = min(t - a, b - t) <= width
    if flat:
        t = a if objective(a) >= objective(b) else b
    z = geo.zeta_upper(t)
    return DecayResult((c1, c2), c1 * t + c2 * z, (t, z), flat)


def marginal_decay_rate(model, c):
    """Decay rate of occupation sums over the lines ``c1*l1 + c2*l2 = c1*k``.

    Parameters
    ----------
    model : MMRWModel
    c : pair of mutually prime positive int

    Returns
    -------
    float
        ``min(c1, c2) * t*`` where ``t*`` is the largest ``t`` with
        ``chi(c1*t, c2*t) <= 1``; zero when the ray leaves the region at once.
    """
    c1, c2 = check_direction(c, coprime=True)
    d = require_negative_drift(model)
    if c1 * d.a1 + c2 * d.a2 >= 0:
        return 0.0

    def outside(t):
        try:
            return chi(model, (c1 * t, c2 * t)) > 1.0
        except OverflowError:
            return True

    lo, hi = 0.0, 1.0
    while not outside(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e3:
            raise ArithmeticError(f"ray in direction {(c1, c2)} never leaves the region")
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if outside(mid):
            hi = mid
        else:
            lo = mid
    return min(c1, c2) * lo


def domain_contains(model, theta, tol=1e-10):
    """Membership in the convergence domain (the down-set of the region).

    True iff ``theta1 < theta_bar_1[0]`` and ``theta2`` lies below the
    north-east frontier: ``theta_bar_2[1]`` left of ``theta_bar_2[0]`` and
    ``zeta2_bar(theta1)`` to the right of it, all with margin ``tol``.
    """
    geo = extreme_points(model)
    t1, t2 = float(theta[0]), float(theta[1])
    if not t1 < geo.theta_bar_1[0] - tol:
        return False
    if t1 <= geo.theta_bar_2[0]:
        return t2 < geo.theta_bar_2[1] - tol
    return t2 < geo.zeta_upper(t1) - tol


def frontier_points(model, n, left_extent=2.0, down_extent=2.0):
    """Points on the north-east frontier of the convergence domain.

    The frontier is a horizontal ray at height ``theta_bar_2[1]``, the
    boundary curve between the two extreme points, and a vertical ray at
    ``theta_bar_1[0]``.  The rays are sampled over the given extents and the
    curve gets the remaining points.

    Returns
    -------
    ndarray, shape (n, 2)
    """
    if n < 3:
        raise ValueError("need at least three frontier points")
    geo = extreme_points(model)
    n_side = max(1, n // 5)
    n_curve = n - 2 * n_side
    a, b = geo.theta_bar_2[0], geo.theta_bar_1[0]
    horiz = [(t, geo.theta_bar_2[1]) for t in np.linspace(a - left_extent, a, n_side, endpoint=False)]
    curve = [(float(t), geo.zeta_upper(float(t))) for t in np.linspace(a, b, n_curve)]
    vert = [(b, z) for z in np.linspace(geo.theta_bar_1[1] - down_extent, geo.theta_bar_1[1],
                                        n_side, endpoint=False)]
    return np.array(horiz + curve + vert)


def qbd_stationary_lower_bound(model, c):
    """Lower bound for the stationary decay rate of a 2d-QBD in direction ``c``.

    Equal to ``-decay_rate(model, c).rate``.
    """
    return -decay_rate(model, c).rate
