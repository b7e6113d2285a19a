"""Geometry of the convex set ``{theta : chi(theta) <= 1}``.

Everything here reduces to two scalar problems on the log-convex function
``chi``:

* minimising ``chi`` along a line, done by bisection on the analytic
  directional derivative (accurate to rounding, unlike a golden-section
  search whose argmin error is of order ``sqrt(eps)``);
* locating where the line minimum crosses one, done by bisection.

The support point in a direction ``d`` is found by writing
``theta = s*d + t*d_perp``; ``h(s) = min_t chi`` is convex with ``h(0) <= 1``,
so the largest ``s`` with ``h(s) <= 1`` is the support value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from mmrw.model import require_negative_drift
from mmrw.spectral import chi, chi_gradient

__all__ = [
    "UnboundedRegionError",
    "NoSectionError",
    "BoundarySection",
    "GammaGeometry",
    "SupportPoint",
    "gamma_contains",
    "line_minimum",
    "support_point",
    "zeta2_section",
    "extreme_points",
    "trace_boundary",
]

BRACKET_CAP = 50.0
TANGENCY_TOL = 1e-12
_FLAT_PROBE = 1e-6
_FLAT_WIDTH = 1e-8


class UnboundedRegionError(ArithmeticError):
    """The region appears unbounded in the searched direction."""


class NoSectionError(ValueError):
    """The vertical line misses the region, so there are no two roots."""


@dataclass(frozen=True)
class BoundarySection:
    theta1: float
    zeta_lower: float
    zeta_upper: float


@dataclass(frozen=True)
class SupportPoint:
    theta: tuple
    value: float
    flat: bool


@dataclass(frozen=True)
class GammaGeometry:
    """Extreme points of the closed region and a boundary evaluator.

    Attributes
    ----------
    theta_bar_1, theta_bar_2 : tuple of float
        Points maximising ``theta1`` and ``theta2``.
    theta_bar_11 : tuple of float
        Point maximising ``theta1 + theta2``.
    theta_under_1, theta_under_2 : tuple of float
        Points minimising ``theta1`` and ``theta2``.
    tol : float
        Root tolerance used to compute the points.
    flat : tuple of str
        Names of the points that sit on a flat face (midpoint returned).
    """

    theta_bar_1: tuple
    theta_bar_2: tuple
    theta_bar_11: tuple
    theta_under_1: tuple
    theta_under_2: tuple
    tol: float
    flat: tuple = ()
    model: object = field(default=None, repr=False, compare=False)

    def section(self, theta1, tol=1e-10):
        return zeta2_section(self.model, theta1, tol=tol)

    def zeta_upper(self, theta1, tol=1e-14):
        """Upper boundary ``zeta2_bar(theta1)``, clamped at the tangency points."""
        return _zeta_upper_clamped(self.model, theta1, tol)

    def as_dict(self):
        names = ("theta_bar_1", "theta_bar_2", "theta_bar_11", "theta_under_1", "theta_under_2")
        return {n: list(getattr(self, n)) for n in names}


def gamma_contains(model, theta, tol_strict=1e-12):
    """True iff ``chi(theta) < 1 - tol_strict``."""
    try:
        return chi(model, theta) < 1.0 - tol_strict
    except OverflowError:
        return False


# ---------------------------------------------------------------------------
# line minimisation
# ---------------------------------------------------------------------------

def _point(s, t, d):
    return (s * d[0] - t * d[1], s * d[1] + t * d[0])


def _slope(model, s, t, d):
    val, g = chi_gradient(model, _point(s, t, d))
    return val, -g[0] * d[1] + g[1] * d[0]


def _expand(model, s, d, sign):
    # walk from 0 in direction sign until the slope changes sign
    step = 1.0
    while True:
        t = sign * min(step, BRACKET_CAP)
        val, der = _slope(model, s, t, d)
        if der * sign >= 0:
            return t
        if step >= BRACKET_CAP:
            raise UnboundedRegionError(
                f"chi keeps decreasing along direction {(-d[1] * sign, d[0] * sign)} "
                f"beyond |theta| = {BRACKET_CAP}; some direction carries no probability mass")
        step *= 2.0


def _bisect(pred, lo, hi):
    # pred(lo) is False and pred(hi) is True; shrink to adjacent floats
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            return lo, hi
        if pred(mid):
            hi = mid
        else:
            lo = mid


def line_minimum(model, s, d):
    """Minimise ``chi(s*d + t*d_perp)`` over ``t``.

    Returns
    -------
    t : float
        The minimiser (the midpoint of the minimising interval on a flat face).
    value : float
        ``chi`` at the minimiser.
    flat : bool
        Whether the minimum is attained on an interval wider than ``1e-8``.
    """
    val0, der0 = _slope(model, s, 0.0, d)
    if der0 == 0.0:
        lo = hi = 0.0
    elif der0 > 0:
        lo, hi = _expand(model, s, d, -1.0), 0.0
    else:
        lo, hi = 0.0, _expand(model, s, d, 1.0)
    bracket = (lo, hi)
    if lo < hi:
        lo, hi = _bisect(lambda t: _slope(model, s, t, d)[1] > 0, lo, hi)
    t = 0.5 * (lo + hi)
    val, _ = _slope(model, s, t, d)

    # flat face check: the slope is numerically zero away from the minimiser
    delta = 1e-12 * max(1.0, val)
    flat = False
    if abs(_slope(model, s, t + _FLAT_PROBE, d)[1]) <= delta or \
            abs(_slope(model, s, t - _FLAT_PROBE, d)[1]) <= delta:
        blo = min(bracket[0], t - _FLAT_PROBE) - 1.0
        bhi = max(bracket[1], t + _FLAT_PROBE) + 1.0
        left = _bisect(lambda u: _slope(model, s, u, d)[1] >= -delta, blo, t)[1]
        right = _bisect(lambda u: _slope(model, s, u, d)[1] > delta, t, bhi)[0]
        if right - left > _FLAT_WIDTH:
            flat = True
            t = 0.5 * (left + right)
            val, _ = _slope(model, s, t, d)
    return t, val, flat


def support_point(model, direction):
    """Point of the closed region maximising ``<direction, theta>``.

    Parameters
    ----------
    model : MMRWModel
    direction : pair of float
        Nonzero direction; it is normalised internally.

    Returns
    -------
    SupportPoint
        ``theta`` on the boundary, ``value = <direction, theta>`` for the
        unnormalised direction, and a flag for flat faces.

    Raises
    ------
    UnboundedRegionError
        If no bracket is found within ``|theta| <= 50``.
    """
    norm = math.hypot(direction[0], direction[1])
    if norm == 0:
        raise ValueError("direction must be nonzero")
    d = (direction[0] / norm, direction[1] / norm)

    def inside(s):
        return line_minimum(model, s, d)[1] <= 1.0

    lo, hi = 0.0, 1.0
    while inside(hi):
        if hi >= BRACKET_CAP:
            raise UnboundedRegionError(
                f"region extends beyond |theta| = {BRACKET_CAP} in direction {tuple(direction)}")
        lo, hi = hi, min(2.0 * hi, BRACKET_CAP)
    lo, _ = _bisect(lambda s: not inside(s), lo, hi)
    t, _, flat = line_minimum(model, lo, d)
    theta = _point(lo, t, d)
    return SupportPoint(theta, direction[0] * theta[0] + direction[1] * theta[1], flat)


# ---------------------------------------------------------------------------
# sections, extreme points, tracing
# ---------------------------------------------------------------------------

def _root_side(model, theta1, m, sign, tol):
    step = 1.0
    while True:
        far = m + sign * min(step, BRACKET_CAP)
        if chi(model, (theta1, far)) > 1.0:
            break
        if step >= BRACKET_CAP:
            raise UnboundedRegionError(
                f"section at theta1={theta1!r} extends beyond |theta2| = {BRACKET_CAP}")
        step *= 2.0
    inner, outer = m, far
    while abs(outer - inner) > tol:
        mid = 0.5 * (inner + outer)
        if mid in (inner, outer):
            break
        if chi(model, (theta1, mid)) > 1.0:
            outer = mid
        else:
            inner = mid
    return inner


def zeta2_section(model, theta1, tol=1e-10):
    """Both solutions ``theta2`` of ``chi(theta1, theta2) = 1``.

    Parameters
    ----------
    model : MMRWModel
    theta1 : float
        Must lie strictly between the minimal and maximal ``theta1`` of the
        region; at the endpoints the double root is returned.
    tol : float, default 1e-10
        Bisection width for each root.

    Returns
    -------
    BoundarySection

    Raises
    ------
    NoSectionError
        If ``min_theta2 chi(theta1, theta2) > 1``.
    """
    theta1 = float(theta1)
    m, val, _ = line_minimum(model, theta1, (1.0, 0.0))
    if val > 1.0 + TANGENCY_TOL:
        raise NoSectionError(
            f"no two real solutions: min over theta2 of chi({theta1!r}, .) is {val!r} > 1")
    if val >= 1.0 - TANGENCY_TOL:
        return BoundarySection(theta1, m, m)
    lower = _root_side(model, theta1, m, -1.0, tol)
    upper = _root_side(model, theta1, m, 1.0, tol)
    return BoundarySection(theta1, lower, upper)


def _zeta_upper_clamped(model, theta1, tol=1e-14):
    try:
        return zeta2_section(model, theta1, tol=tol).zeta_upper
    except NoSectionError:
        m, val, _ = line_minimum(model, theta1, (1.0, 0.0))
        if val <= 1.0 + 1e-9:
            return m
        raise


@lru_cache(maxsize=64)
def _extreme_points_cached(model, tol):
    require_negative_drift(model)
    dirs = {
        "theta_bar_1": (1.0, 0.0),
        "theta_bar_2": (0.0, 1.0),
        "theta_bar_11": (1.0, 1.0),
        "theta_under_1": (-1.0, 0.0),
        "theta_under_2": (0.0, -1.0),
    }
    pts = {}
    flat = []
    for name, d in dirs.items():
        sp = support_point(model, d)
        pts[name] = tuple(float(v) for v in sp.theta)
        if sp.flat:
            flat.append(name)
    return GammaGeometry(tol=tol, flat=tuple(flat), model=model, **pts)


def extreme_points(model, tol=1e-8):
    """Extreme points of the closed region ``chi <= 1``.

    Parameters
    ----------
    model : MMRWModel
        Must have ``a1 < 0`` or ``a2 < 0``.
    tol : float, default 1e-8
        Reported tolerance; roots are bisected to adjacent floats.

    Returns
    -------
    GammaGeometry

    Raises
    ------
    AssumptionError
        If neither drift component is negative.
    UnboundedRegionError
        If the region is unbounded in one of the searched directions.

    Examples
    --------
    >>> from mmrw.model import reference_model
    >>> g = extreme_points(reference_model("R1"))
    >>> [round(v, 7) for v in g.theta_bar_1]
    [1.3169579, 0.5493061]
    """
    return _extreme_points_cached(model, float(tol))


def trace_boundary(model, n_points, eps=1e-6, tol=1e-14):
    """Boundary sections on a uniform ``theta1`` grid.

    The grid spans ``[theta_under_1 + eps, theta_bar_1 - eps]`` in its first
    coordinate; the inset keeps away from the tangency points where the two
    branches meet and the section is ill-conditioned.

    Returns
    -------
    list of BoundarySection
        One entry per grid point with both branches.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    geo = extreme_points(model)
    grid = np.linspace(geo.theta_under_1[0] + eps, geo.theta_bar_1[0] - eps, int(n_points))
    return [zeta2_section(model, float(t), tol=tol) for t in grid]
