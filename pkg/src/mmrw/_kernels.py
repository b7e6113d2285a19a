"""Hot numeric kernels, each with a numba and a numpy implementation.

The public wrappers at the bottom dispatch on :func:`mmrw._accel.get_backend`.
Both implementations consume identical inputs and, for the Monte Carlo
kernel, the identical random stream, so their outputs agree bit-for-bit
(simulation) or to rounding (fixed-point sweeps, power iteration).

Random numbers come from a counter-based generator: the uniform used by
path ``p`` at step ``s`` is a SplitMix64 hash of ``(seed, p, s)``.  A
path's trajectory therefore depends only on its global index, which makes
results independent of chunking and worker count.
"""
import numpy as np

from mmrw._accel import NUMBA_AVAILABLE, get_backend

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def mix64(z):
    """SplitMix64 finaliser on uint64 scalars or arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def seed_key(seed):
    return mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))[()]


def uniforms(key, path, steps):
    """Uniforms in [0, 1) for one path at the given (1-based) step counters."""
    with np.errstate(over="ignore"):
        pkey = mix64(np.uint64(key) ^ (np.uint64(path) * GOLDEN))
        bits = mix64(pkey + np.asarray(steps, dtype=np.uint64) * GOLDEN)
    return (bits >> _S11).astype(np.float64) * _TWO_M53


def _apply_numpy(n, blocks, out):
    # out <- n P restricted to the box; transitions leaving the box are dropped
    out[...] = 0.0
    l1, l2 = n.shape[0], n.shape[1]
    for i in (-1, 0, 1):
        src1 = slice(max(0, -i), l1 - max(0, i))
        dst1 = slice(max(0, i), l1 - max(0, -i))
        for j in (-1, 0, 1):
            block = blocks[i + 1, j + 1]
            if not block.any():
                continue
            src2 = slice(max(0, -j), l2 - max(0, j))
            dst2 = slice(max(0, j), l2 - max(0, -j))
            out[dst1, dst2] += n[src1, src2] @ block


def _fundamental_numpy(e, blocks, tol, max_sweeps):
    n = e.copy()
    new = np.empty_like(e)
    rel = np.inf
    for sweep in range(1, max_sweeps + 1):
        _apply_numpy(n, blocks, new)
        new += e
        scale = np.abs(new).max()
        rel = np.abs(new - n).max() / scale if scale > 0 else 0.0
        n, new = new, n
        if rel <= tol:
            return n, sweep, rel
    return n, max_sweeps, rel


def _simulate_numpy(cdf, d1, d2, nxt, x0, y0, j0, L, key, start, stop,
                    step_cap, sums, sumsq):
    s0 = cdf.shape[0]
    width = L + 1
    nstates = sums.shape[0]
    count = stop - start
    with np.errstate(over="ignore"):
        pkey = mix64(np.uint64(key) ^ (np.arange(start, stop, dtype=np.uint64) * GOLDEN))
    ids = np.arange(count, dtype=np.int64)
    x = np.full(count, x0, dtype=np.int64)
    y = np.full(count, y0, dtype=np.int64)
    j = np.full(count, j0, dtype=np.int64)
    rec_ids, rec_states = [], []
    step = 0
    capped = 0
    while ids.size:
        inbox = (x <= L) & (y <= L)
        rec_ids.append(ids[inbox])
        rec_states.append((x[inbox] * width + y[inbox]) * s0 + j[inbox])
        if step >= step_cap:
            capped = int(ids.size)
            break
        step += 1
        with np.errstate(over="ignore"):
            bits = mix64(pkey + np.uint64(step) * GOLDEN)
        u = (bits >> _S11).astype(np.float64) * _TWO_M53
        k = (u[:, None] >= cdf[j]).sum(axis=1)
        x += d1[k]
        y += d2[k]
        j = nxt[k]
        keep = (x >= 0) & (y >= 0)
        if not keep.all():
            ids, pkey, x, y, j = ids[keep], pkey[keep], x[keep], y[keep], j[keep]
    if rec_ids:
        keys = np.concatenate(rec_ids) * nstates + np.concatenate(rec_states)
        uniq, counts = np.unique(keys, return_counts=True)
        states = uniq % nstates
        np.add.at(sums, states, counts)
        np.add.at(sumsq, states, counts * counts)
    return capped


def _power_numpy(matrix, v0, shift, tol, max_iter):
    v = v0 / v0.sum()
    lam_old = -1.0
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = matrix @ v
        lam = w.sum()
        res = np.abs(w - lam * v).max()
        if abs(lam - lam_old) <= tol * lam and res <= tol * lam * v.max():
            return v, lam, it, True
        lam_old = lam
        v = (w + shift * v) / (lam + shift)
    return v, lam, max_iter, False


def _weighted_numpy(ii, jj, blocks, t1, t2):
    w = np.exp(ii * t1 + jj * t2)
    mat = np.tensordot(w, blocks, axes=1)
    d1 = np.tensordot(ii * w, blocks, axes=1)
    d2 = np.tensordot(jj * w, blocks, axes=1)
    return mat, d1, d2


def _chi_grad_numpy(ii, jj, blocks, t1, t2, tol, max_iter):
    mat, d1, d2 = _weighted_numpy(ii, jj, blocks, t1, t2)
    if not np.all(np.isfinite(mat)):
        return np.inf, 0.0, 0.0, False
    shift = 1e-3 * mat.sum(axis=1).max()
    ones = np.ones(mat.shape[0])
    v, _, _, ok_r = _power_numpy(mat, ones, shift, tol, max_iter)
    u, _, _, ok_l = _power_numpy(np.ascontiguousarray(mat.T), ones, shift, tol, max_iter)
    denom = u @ v
    return (u @ mat @ v) / denom, (u @ d1 @ v) / denom, (u @ d2 @ v) / denom, ok_r and ok_l


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    from numba import njit

    @njit(cache=True, inline="always")
    def _mix64_nb(z):
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        return z ^ (z >> _S31)

    @njit(cache=True)
    def _apply_nb(n, blocks, out):
        # out <- n P restricted to the box, one scalar axpy per (step, a, b)
        l1, l2, s0 = n.shape
        out[:] = 0.0
        for di in range(3):
            lo1 = max(0, di - 1)
            hi1 = min(l1, l1 + di - 1)
            for dj in range(3):
                lo2 = max(0, dj - 1)
                hi2 = min(l2, l2 + dj - 1)
                for a in range(s0):
                    for b in range(s0):
                        w = blocks[di, dj, a, b]
                        if w == 0.0:
                            continue
                        for y1 in range(lo1, hi1):
                            x1 = y1 - di + 1
                            for y2 in range(lo2, hi2):
                                out[y1, y2, b] += w * n[x1, y2 - dj + 1, a]

    @njit(cache=True)
    def _fundamental_nb(e, blocks, tol, max_sweeps):
        l1, l2, s0 = e.shape
        n = e.copy()
        new = np.empty_like(e)
        rel = np.inf
        for sweep in range(1, max_sweeps + 1):
            new[:] = e
            # a scalar weight per (step, a, b) keeps the inner loop a plain
            # strided axpy, which compiles far better than a row-vector product
            for di in range(3):
                lo1 = max(0, di - 1)
                hi1 = min(l1, l1 + di - 1)
                for dj in range(3):
                    lo2 = max(0, dj - 1)
                    hi2 = min(l2, l2 + dj - 1)
                    for a in range(s0):
                        for b in range(s0):
                            w = blocks[di, dj, a, b]
                            if w == 0.0:
                                continue
                            for y1 in range(lo1, hi1):
                                x1 = y1 - di + 1
                                for y2 in range(lo2, hi2):
                                    new[y1, y2, b] += w * n[x1, y2 - dj + 1, a]
            scale = 0.0
            delta = 0.0
            fn = new.ravel()
            fo = n.ravel()
            for k in range(fn.size):
                x = abs(fn[k])
                if x > scale:
                    scale = x
                d = abs(fn[k] - fo[k])
                if d > delta:
                    delta = d
            rel = delta / scale if scale > 0.0 else 0.0
            n, new = new, n
            if rel <= tol:
                return n, sweep, rel
        return n, max_sweeps, rel

    @njit(cache=True, nogil=True)
    def _simulate_nb(cdf, d1, d2, nxt, x0, y0, j0, L, key, start, stop,
                     step_cap, sums, sumsq):
        s0 = cdf.shape[0]
        width = L + 1
        nstates = sums.shape[0]
        local = np.zeros(nstates, dtype=np.int64)
        visited = np.empty(nstates, dtype=np.int64)
        capped = 0
        for p in range(start, stop):
            pkey = _mix64_nb(key ^ (np.uint64(p) * GOLDEN))
            x = x0
            y = y0
            j = j0
            nvis = 0
            step = 0
            while True:
                if x <= L and y <= L:
                    idx = (x * width + y) * s0 + j
                    if local[idx] == 0:
                        visited[nvis] = idx
                        nvis += 1
                    local[idx] += 1
                if step >= step_cap:
                    capped += 1
                    break
                step += 1
                bits = _mix64_nb(pkey + np.uint64(step) * GOLDEN)
                u = np.float64(bits >> _S11) * _TWO_M53
                k = 0
                while u >= cdf[j, k]:
                    k += 1
                x += d1[k]
                y += d2[k]
                j = nxt[k]
                if x < 0 or y < 0:
                    break
            for t in range(nvis):
                idx = visited[t]
                c = local[idx]
                sums[idx] += c
                sumsq[idx] += c * c
                local[idx] = 0
        return capped

    @njit(cache=True)
    def _power_nb(matrix, v0, shift, tol, max_iter):
        n = matrix.shape[0]
        v = v0 / v0.sum()
        w = np.empty(n)
        lam_old = -1.0
        lam = 0.0
        for it in range(1, max_iter + 1):
            lam = 0.0
            for r in range(n):
                acc = 0.0
                for c in range(n):
                    acc += matrix[r, c] * v[c]
                w[r] = acc
                lam += acc
            res = 0.0
            vmax = 0.0
            for r in range(n):
                d = abs(w[r] - lam * v[r])
                if d > res:
                    res = d
                if v[r] > vmax:
                    vmax = v[r]
            if abs(lam - lam_old) <= tol * lam and res <= tol * lam * vmax:
                return v, lam, it, True
            lam_old = lam
            for r in range(n):
                v[r] = (w[r] + shift * v[r]) / (lam + shift)
        return v, lam, max_iter, False

    @njit(cache=True)
    def _chi_grad_nb(ii, jj, blocks, t1, t2, tol, max_iter):
        n = blocks.shape[1]
        mat = np.zeros((n, n))
        d1 = np.zeros((n, n))
        d2 = np.zeros((n, n))
        for k in range(ii.shape[0]):
            w = np.exp(ii[k] * t1 + jj[k] * t2)
            for a in range(n):
                for b in range(n):
                    x = w * blocks[k, a, b]
                    mat[a, b] += x
                    d1[a, b] += ii[k] * x
                    d2[a, b] += jj[k] * x
        rowmax = 0.0
        for a in range(n):
            r = 0.0
            for b in range(n):
                r += mat[a, b]
            if not np.isfinite(r):
                return np.inf, 0.0, 0.0, False
            if r > rowmax:
                rowmax = r
        shift = 1e-3 * rowmax
        ones = np.ones(n)
        v, _, _, ok_r = _power_nb(mat, ones, shift, tol, max_iter)
        u, _, _, ok_l = _power_nb(np.ascontiguousarray(mat.T), ones, shift, tol, max_iter)
        denom = 0.0
        root = 0.0
        g1 = 0.0
        g2 = 0.0
        for a in range(n):
            denom += u[a] * v[a]
            for b in range(n):
                uv = u[a] * v[b]
                root += uv * mat[a, b]
                g1 += uv * d1[a, b]
                g2 += uv * d2[a, b]
        return root / denom, g1 / denom, g2 / denom, ok_r and ok_l


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def apply_transition(n, blocks):
    """Return ``n P`` on the box, dropping mass that leaves it."""
    out = np.empty_like(n)
    if get_backend() == "numba":
        _apply_nb(n, blocks, out)
    else:
        _apply_numpy(n, blocks, out)
    return out


def fundamental_sweeps(e, blocks, tol, max_sweeps):
    """Iterate ``n <- e + n P`` from ``n = e``; returns (n, sweeps, rel_update)."""
    e = np.ascontiguousarray(e, dtype=np.float64)
    blocks = np.ascontiguousarray(blocks, dtype=np.float64)
    if get_backend() == "numba":
        n, sweeps, rel = _fundamental_nb(e, blocks, float(tol), int(max_sweeps))
    else:
        n, sweeps, rel = _fundamental_numpy(e, blocks, tol, max_sweeps)
    return n, int(sweeps), float(rel)


def simulate_chunk(cdf, d1, d2, nxt, origin, L, key, start, stop, step_cap, sums, sumsq):
    """Run paths ``start..stop-1``, adding visit counts into ``sums``/``sumsq``.

    Returns the number of paths stopped by the step cap.
    """
    x0, y0, j0 = (int(v) for v in origin)
    if get_backend() == "numba":
        return int(_simulate_nb(cdf, d1, d2, nxt, x0, y0, j0, int(L), np.uint64(key),
                                int(start), int(stop), int(step_cap), sums, sumsq))
    return _simulate_numpy(cdf, d1, d2, nxt, x0, y0, j0, int(L), np.uint64(key),
                           int(start), int(stop), int(step_cap), sums, sumsq)


def power_iteration(matrix, v0, shift, tol, max_iter):
    """Shifted power iteration; returns (vector, root, iterations, converged)."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    if get_backend() == "numba":
        v, lam, it, ok = _power_nb(matrix, v0, float(shift), float(tol), int(max_iter))
    else:
        v, lam, it, ok = _power_numpy(matrix, v0, shift, tol, max_iter)
    return v, float(lam), int(it), bool(ok)


def chi_with_gradient(ii, jj, blocks, t1, t2, tol, max_iter):
    """Perron root of ``sum_k exp(ii[k] t1 + jj[k] t2) blocks[k]`` and its gradient.

    Returns (root, d/dt1, d/dt2, converged); the root is ``inf`` on overflow.
    """
    if get_backend() == "numba":
        r, g1, g2, ok = _chi_grad_nb(ii, jj, blocks, float(t1), float(t2), float(tol), int(max_iter))
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            r, g1, g2, ok = _chi_grad_numpy(ii, jj, blocks, float(t1), float(t2), tol, max_iter)
    return float(r), float(g1), float(g2), bool(ok)
