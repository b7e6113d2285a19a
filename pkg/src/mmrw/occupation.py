"""Occupation measures in the quadrant: exact truncated solves and simulation.

The occupation measure ``q(x, y)`` is the expected number of visits to ``y``
before the walk started at ``x`` first leaves the nonnegative quadrant.
Two independent routes compute it:

* :func:`truncated_fundamental` solves ``n = e_x + n P`` on the box
  ``[0, L]^2`` with mass leaving the box killed, which gives a lower bound
  that increases to ``q`` as ``L`` grows;
* :func:`simulate_occupation` runs independent trajectories until exit.

Phases are numbered from 1 in this module's public interface, so the
origin state is ``(0, 0, 1)``.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import NormalDist

import numpy as np
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import spsolve

from mmrw import _kernels
from mmrw.model import STEPS, require_negative_drift

__all__ = [
    "OccupationError",
    "DecayUnderflowWarning",
    "StepCapWarning",
    "OccupationTable",
    "SimulationEstimate",
    "EmpiricalDecay",
    "truncated_fundamental",
    "fundamental_block",
    "simulate_occupation",
    "empirical_decay",
    "mgf_partial",
    "functional_equation_residual",
    "marginal_index_set",
    "marginal_occupation_sum",
    "default_workers",
]

DEFAULT_L = 64
SWEEP_TOL = 1e-14
MAX_SWEEPS = 1_000_000
RESIDUAL_TOL = 1e-12
STEP_CAP = 1_000_000
CHUNK = 4096
UNDERFLOW = 1e-250
_EXP_LIMIT = 709.0


class OccupationError(ArithmeticError):
    """A truncated solve failed."""


class DecayUnderflowWarning(RuntimeWarning):
    """Occupation values along a ray fell below the representable range."""


class StepCapWarning(RuntimeWarning):
    """Too many simulated paths hit the step cap."""


@dataclass(frozen=True)
class OccupationTable:
    """Truncated occupation measure from one start state.

    Attributes
    ----------
    origin : tuple of int
        ``(x1, x2, j)`` with ``j`` counted from 1.
    truncation : int
        Box size ``L``; values cover ``[0, L]^2``.
    values : ndarray, shape (L+1, L+1, s0)
        ``values[y1, y2, j' - 1]``.
    exit_mass_absorbed : bool
        Always true: transitions out of the box are killed.
    sweeps : int
        Fixed-point sweeps used (0 for the direct solver).
    residual : float
        Relative max-norm of ``n - e - n P``.
    method : str
    """

    origin: tuple
    truncation: int
    values: np.ndarray
    exit_mass_absorbed: bool = True
    sweeps: int = 0
    residual: float = 0.0
    method: str = "iterative"

    @property
    def total(self):
        """Truncated expected exit time (a lower bound on ``E[tau]``)."""
        return float(self.values.sum())

    def rows(self, threshold=0.0):
        """Yield ``(x1p, x2p, jp, value)`` with 1-based ``jp`` for values > threshold."""
        for (a, b, j) in zip(*np.nonzero(self.values > threshold)):
            yield int(a), int(b), int(j) + 1, float(self.values[a, b, j])


@dataclass(frozen=True)
class SimulationEstimate:
    """Monte Carlo occupation estimate on ``[0, L]^2``.

    Attributes
    ----------
    mean, half_width : ndarray, shape (L+1, L+1, s0)
        Sample mean visit counts and 99% confidence half-widths.
    n_paths : int
    seed : int
    workers : int
    capped_paths : int
        Paths stopped by the step cap before leaving the quadrant.
    cap_warning : bool
        True if more than 0.1% of paths were capped.
    """

    mean: np.ndarray
    half_width: np.ndarray
    n_paths: int
    seed: int
    workers: int = 1
    capped_paths: int = 0
    cap_warning: bool = False
    origin: tuple = ()


@dataclass(frozen=True)
class EmpiricalDecay:
    """Successive log-ratios ``r_k = -log(q_{(k+1)c} / q_{kc})`` along a ray."""

    direction: tuple
    ks: tuple
    values: tuple
    ratios: dict = field(default_factory=dict)
    tail: float | None = None
    truncated: bool = False
    warning: str | None = None


def default_workers():
    """Worker count: ``QD_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("QD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _check_origin(model, origin, L=None):
    if len(origin) != 3:
        raise ValueError("origin must be (x1, x2, j)")
    x1, x2, j = (int(v) for v in origin)
    if x1 < 0 or x2 < 0:
        raise ValueError(f"origin {origin} is outside the quadrant")
    if not 1 <= j <= model.s0:
        raise ValueError(f"phase {j} must lie in 1..{model.s0}")
    if L is not None and (x1 > L or x2 > L):
        raise ValueError(f"origin {origin} is outside the box [0, {L}]^2")
    return x1, x2, j


# ---------------------------------------------------------------------------
# truncated fundamental matrix
# ---------------------------------------------------------------------------

def _sparse_kernel(model, L):
    # P restricted to the box, states indexed (y1*(L+1) + y2)*s0 + phase
    s0 = model.s0
    w = L + 1
    y1, y2 = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
    y1 = y1.ravel()
    y2 = y2.ravel()
    rows, cols, vals = [], [], []
    for i, j in STEPS:
        b = model.block(i, j)
        a, c = np.nonzero(b)
        if a.size == 0:
            continue
        z1, z2 = y1 + i, y2 + j
        ok = (z1 >= 0) & (z1 <= L) & (z2 >= 0) & (z2 <= L)
        src = ((y1[ok] * w + y2[ok]) * s0)[:, None] + a[None, :]
        dst = ((z1[ok] * w + z2[ok]) * s0)[:, None] + c[None, :]
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.broadcast_to(b[a, c], src.shape).ravel())
    n = w * w * s0
    return coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()


def _residual(n, e, blocks):
    scale = np.abs(n).max()
    r = np.abs(n - e - _kernels.apply_transition(n, blocks)).max()
    return float(r / scale) if scale > 0 else 0.0


@lru_cache(maxsize=32)
def _block_cached(model, x1, x2, L, method):
    s0 = model.s0
    out = np.empty((s0, L + 1, L + 1, s0))
    sweeps = 0
    resid = 0.0
    if method == "direct":
        system = (identity(model.s0 * (L + 1) ** 2, format="csr") - _sparse_kernel(model, L)).T.tocsc()
    for j in range(s0):
        e = np.zeros((L + 1, L + 1, s0))
        e[x1, x2, j] = 1.0
        if method == "iterative":
            n, used, _ = _kernels.fundamental_sweeps(e, model.blocks, SWEEP_TOL, MAX_SWEEPS)
            sweeps = max(sweeps, used)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                try:
                    flat = spsolve(system, e.ravel())
                except Exception as exc:  # MatrixRankWarning or a singular factor
                    raise OccupationError(f"truncated system is singular: {exc}") from None
            n = flat.reshape(e.shape)
        if not np.all(np.isfinite(n)):
            raise OccupationError("truncated system is singular (non-finite solution)")
        resid = max(resid, _residual(n, e, model.blocks))
        out[j] = n
    if resid > RESIDUAL_TOL:
        raise OccupationError(
            f"truncated solve did not reach relative residual {RESIDUAL_TOL} "
            f"(got {resid:.3e} after {sweeps} sweeps)")
    out.setflags(write=False)
    return out, sweeps, resid


def fundamental_block(model, x, L=DEFAULT_L, method="iterative"):
    """Truncated occupation measures from every phase at position ``x``.

    Returns
    -------
    ndarray, shape (s0, L+1, L+1, s0)
        ``[j - 1, y1, y2, j' - 1]`` is the truncated ``q((x, j), (y, j'))``.
        The array is read-only and shared between calls.
    """
    if method not in ("iterative", "direct"):
        raise ValueError("method must be 'iterative' or 'direct'")
    x1, x2 = int(x[0]), int(x[1])
    _check_origin(model, (x1, x2, 1), L)
    require_negative_drift(model)
    return _block_cached(model, x1, x2, int(L), method)[0]


def truncated_fundamental(model, origin, L=DEFAULT_L, method="iterative"):
    """Occupation measure from ``origin`` on the killed box ``[0, L]^2``.

    Parameters
    ----------
    model : MMRWModel
        Must satisfy the drift condition (``a1 < 0`` or ``a2 < 0``).
    origin : tuple of int
        ``(x1, x2, j)`` with ``j`` in ``1..s0``.
    L : int, default 64
    method : {"iterative", "direct"}
        ``"iterative"`` runs the sweep ``n <- e + n P`` to a relative update of
        1e-14; ``"direct"`` uses a sparse LU solve.

    Returns
    -------
    OccupationTable

    Raises
    ------
    AssumptionError
        If the drift condition fails.
    OccupationError
        If the solve does not reach a relative residual of 1e-12.
    """
    if method not in ("iterative", "direct"):
        raise ValueError("method must be 'iterative' or 'direct'")
    x1, x2, j = _check_origin(model, origin, L)
    require_negative_drift(model)
    block, sweeps, resid = _block_cached(model, x1, x2, int(L), method)
    return OccupationTable((x1, x2, j), int(L), block[j - 1], True, sweeps, resid, method)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _outcome_tables(model):
    s0 = model.s0
    outcomes = []
    for i, j in STEPS:
        b = model.block(i, j)
        for c in range(s0):
            if b[:, c].any():
                outcomes.append((i, j, c))
    probs = np.array([[model.block(i, j)[a, c] for (i, j, c) in outcomes] for a in range(s0)])
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    for a in range(s0):
        last = np.nonzero(probs[a] > 0)[0][-1]
        cdf[a, last:] = 2.0
    d1 = np.array([o[0] for o in outcomes], dtype=np.int64)
    d2 = np.array([o[1] for o in outcomes], dtype=np.int64)
    nxt = np.array([o[2] for o in outcomes], dtype=np.int64)
    return np.ascontiguousarray(cdf), d1, d2, nxt


def simulate_occupation(model, origin, n_paths, seed, L=DEFAULT_L, workers=None,
                        step_cap=STEP_CAP, chunk_size=CHUNK):
    """Monte Carlo estimate of the occupation measure on ``[0, L]^2``.

    Paths run until they leave the quadrant; visits outside the box are not
    tallied but the path continues.  Paths are split into fixed chunks whose
    integer tallies are summed, and each path draws from its own
    counter-based stream, so the estimate depends only on ``seed`` and
    ``n_paths``; the worker count only changes the wall time.

    Parameters
    ----------
    model : MMRWModel
    origin : tuple of int
        ``(x1, x2, j)`` with ``j`` in ``1..s0``.
    n_paths : int
    seed : int
        64-bit seed.
    L : int, default 64
    workers : int, optional
        Thread count; defaults to ``QD_THREADS`` or the CPU count, and is
        capped by ``QD_THREADS`` when that is set.
    step_cap : int, default 1_000_000
        Maximum steps per path.

    Returns
    -------
    SimulationEstimate
    """
    x1, x2, j = _check_origin(model, origin)
    require_negative_drift(model)
    n_paths = int(n_paths)
    if n_paths < 2:
        raise ValueError("need at least two paths for a confidence interval")
    workers = default_workers() if workers is None else max(1, int(workers))
    if os.environ.get("QD_THREADS"):
        workers = min(workers, default_workers())
    cdf, d1, d2, nxt = _outcome_tables(model)
    key = _kernels.seed_key(int(seed))
    nstates = (L + 1) * (L + 1) * model.s0
    starts = list(range(0, n_paths, chunk_size))

    def run(start):
        sums = np.zeros(nstates, dtype=np.int64)
        sumsq = np.zeros(nstates, dtype=np.int64)
        stop = min(start + chunk_size, n_paths)
        capped = _kernels.simulate_chunk(cdf, d1, d2, nxt, (x1, x2, j - 1), L, key,
                                         start, stop, step_cap, sums, sumsq)
        return sums, sumsq, capped

    total = np.zeros(nstates, dtype=np.int64)
    total_sq = np.zeros(nstates, dtype=np.int64)
    capped = 0
    if workers == 1:
        results = map(run, starts)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(run, starts)
    try:
        for s, sq, c in results:
            total += s
            total_sq += sq
            capped += c
    finally:
        if workers != 1:
            pool.shutdown()

    n = float(n_paths)
    mean = total / n
    var = np.maximum(total_sq - n * mean * mean, 0.0) / (n - 1.0)
    z = NormalDist().inv_cdf(0.995)
    half = z * np.sqrt(var / n)
    shape = (L + 1, L + 1, model.s0)
    cap_warning = capped > 1e-3 * n_paths
    if cap_warning:
        warnings.warn(f"{capped} of {n_paths} paths hit the step cap of {step_cap}",
                      StepCapWarning, stacklevel=2)
    return SimulationEstimate(mean.reshape(shape), half.reshape(shape), n_paths, int(seed),
                              workers, int(capped), bool(cap_warning), (x1, x2, j))


# ---------------------------------------------------------------------------
# decay estimates and generating functions
# ---------------------------------------------------------------------------

def empirical_decay(model, origin, c, j_to=1, k_min=6, k_max=12, L=DEFAULT_L,
                    method="iterative"):
    """Successive log-ratios of the occupation measure along the ray ``k*c``.

    Parameters
    ----------
    model : MMRWModel
    origin : tuple of int
        Start state ``(x1, x2, j)``; must lie on an axis.
    c : pair of nonnegative int
        Ray direction, e.g. ``(1, 1)`` or the axis ray ``(1, 0)``.
    j_to : int
        Target phase, counted from 1.
    k_min, k_max : int
    L : int
        Truncation; requires ``(k_max + 1) * max(c) < L - 3``.

    Returns
    -------
    EmpiricalDecay
        ``ratios[k] = -log(q_{(k+1)c} / q_{kc})`` for ``k_min <= k < k_max``
        and ``tail = ratios[k_max - 1]``.  Values below 1e-250 cut the range
        short with a :class:`DecayUnderflowWarning`.
    """
    x1, x2, j = _check_origin(model, origin, L)
    if x1 != 0 and x2 != 0:
        raise ValueError("origin must lie on an axis (x1 == 0 or x2 == 0)")
    c1, c2 = int(c[0]), int(c[1])
    if c1 < 0 or c2 < 0 or c1 + c2 == 0:
        raise ValueError("c must be nonnegative and nonzero")
    if not 1 <= j_to <= model.s0:
        raise ValueError(f"j_to must lie in 1..{model.s0}")
    if not 0 <= k_min < k_max:
        raise ValueError("need 0 <= k_min < k_max")
    if (k_max + 1) * max(c1, c2) >= L - 3:
        raise ValueError(f"(k_max+1)*max(c) must be below L-3 = {L - 3}")
    table = truncated_fundamental(model, (x1, x2, j), L, method)
    ks, vals = [], []
    message = None
    for k in range(k_min, k_max + 1):
        v = float(table.values[c1 * k, c2 * k, j_to - 1])
        if not v > UNDERFLOW:
            message = f"occupation value at k={k} is {v!r} (below {UNDERFLOW}); range truncated"
            break
        ks.append(k)
        vals.append(v)
    if message is not None:
        warnings.warn(message, DecayUnderflowWarning, stacklevel=2)
    ratios = {ks[t]: -math.log(vals[t + 1] / vals[t]) for t in range(len(ks) - 1)}
    tail = ratios.get(k_max - 1)
    return EmpiricalDecay((c1, c2), tuple(ks), tuple(vals), ratios, tail,
                          message is not None, message)


def _position(origin):
    return int(origin[0]), int(origin[1])


def _weights(theta, L):
    t1, t2 = float(theta[0]), float(theta[1])
    e1 = np.arange(L + 1) * t1
    e2 = np.arange(L + 1) * t2
    if max(e1.max(), 0.0) + max(e2.max(), 0.0) > _EXP_LIMIT:
        raise OverflowError(f"exp(k*theta) overflows for theta={tuple(theta)} and L={L}")
    return np.exp(e1), np.exp(e2)


def mgf_partial(model, origin, theta, L=DEFAULT_L, method="iterative"):
    """Truncated matrix generating function of the occupation measure.

    Parameters
    ----------
    model : MMRWModel
    origin : tuple of int
        Start position ``(x1, x2)`` or state ``(x1, x2, j)``; the phase is
        ignored because all start phases form the rows.
    theta : pair of float
    L : int, default 64

    Returns
    -------
    ndarray, shape (s0, s0)
        ``sum_{y in [0, L]^2} exp(<theta, y>) N_{x, y}``.
    """
    w1, w2 = _weights(theta, L)
    block = fundamental_block(model, _position(origin), L, method)
    return np.einsum("a,b,jabk->jk", w1, w2, block)


def _c_hat(model, z, w, irange, jrange):
    out = np.zeros((model.s0, model.s0))
    for i in irange:
        for j in jrange:
            out += z ** i * w ** j * model.block(i, j)
    return out


def functional_equation_residual(model, origin, theta, L=DEFAULT_L, method="iterative"):
    """Max-norm of the generating-function identity on the truncated table.

    With ``z = exp(theta1)``, ``w = exp(theta2)`` and the generating functions
    split by region (interior, the two axes, the corner), evaluates

    ``Phi_+ (I - C) + Phi_1 (I - C_1) + Phi_2 (I - C_2) + N_00 (I - C_0) - z^x1 w^x2 I``

    where each ``C`` sums ``z^i w^j A[i, j]`` over the steps allowed from
    that region.  The result tends to zero as ``L`` grows for ``theta`` in
    the convergence domain.
    """
    x1, x2 = _position(origin)
    w1, w2 = _weights(theta, L)
    z, w = math.exp(theta[0]), math.exp(theta[1])
    block = fundamental_block(model, (x1, x2), L, method)
    weighted = block * (w1[None, :, None, None] * w2[None, None, :, None])
    phi_plus = weighted[:, 1:, 1:, :].sum(axis=(1, 2))
    phi_1 = weighted[:, 1:, 0, :].sum(axis=1)
    phi_2 = weighted[:, 0, 1:, :].sum(axis=1)
    n00 = weighted[:, 0, 0, :]
    eye = np.eye(model.s0)
    full = (-1, 0, 1)
    up = (0, 1)
    lhs = (phi_plus @ (eye - _c_hat(model, z, w, full, full))
           + phi_1 @ (eye - _c_hat(model, z, w, full, up))
           + phi_2 @ (eye - _c_hat(model, z, w, up, full))
           + n00 @ (eye - _c_hat(model, z, w, up, up))
           - z ** x1 * w ** x2 * eye)
    return float(np.abs(lhs).max())


def marginal_index_set(c, k):
    """Lattice points ``l >= 0`` on the line ``c1*l1 + c2*l2 = min(c1, c2)*k``.

    For ``c1 <= c2`` this is ``{l2 : c2*l2 <= c1*k, c1 | c1*k - c2*l2}`` with
    ``l1 = k - c2*l2/c1``; the other case is symmetric.

    Returns
    -------
    list of tuple of int
        The points ``(l1, l2)`` ordered by increasing ``l2``.
    """
    c1, c2 = int(c[0]), int(c[1])
    if c1 < 1 or c2 < 1:
        raise ValueError("c must be positive")
    if math.gcd(c1, c2) != 1:
        raise ValueError(f"direction components must be mutually prime, got {(c1, c2)}")
    if c1 <= c2:
        return [((c1 * k - c2 * l2) // c1, l2) for l2 in range(c1 * k // c2 + 1)
                if (c1 * k - c2 * l2) % c1 == 0]
    pts = [(l1, (c2 * k - c1 * l1) // c2) for l1 in range(c2 * k // c1 + 1)
           if (c2 * k - c1 * l1) % c2 == 0]
    return sorted(pts, key=lambda p: p[1])


def marginal_occupation_sum(model, origin, c, j_to, k, L=DEFAULT_L, method="iterative"):
    """Sum of the occupation measure over :func:`marginal_index_set` points."""
    pts = marginal_index_set(c, k)
    if any(p[0] > L or p[1] > L for p in pts):
        raise ValueError(f"index set for k={k} leaves the box [0, {L}]^2")
    table = truncated_fundamental(model, origin, L, method)
    return float(sum(table.values[a, b, j_to - 1] for a, b in pts))
