"""Hot numeric kernels with a numba and a pure-numpy implementation.

The numba path is used when numba imports and the environment variable
``DRIVESTYLE_NUMBA`` is not set to ``0``/``false``/``off``. Both paths are
always importable through :data:`IMPLEMENTATIONS` so they can be compared
against each other in tests and in ``benchmarks/bench_kernels.py``.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None


def _env_wants_numba():
    flag = os.environ.get("DRIVESTYLE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _env_wants_numba()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _rect_corners_np(x, y, theta, length, width):
    c = np.cos(theta)
    s = np.sin(theta)
    hl = 0.5 * length
    hw = 0.5 * width
    dx = np.stack([hl, -hl, -hl, hl], axis=-1)
    dy = np.stack([hw, hw, -hw, -hw], axis=-1)
    cx = x[:, None] + c[:, None] * dx - s[:, None] * dy
    cy = y[:, None] + s[:, None] * dx + c[:, None] * dy
    return cx, cy


def _point_segment_dist_np(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    den = ex * ex + ey * ey
    t = ((px - ax) * ex + (py - ay) * ey) / np.where(den > 0, den, 1.0)
    t = np.clip(t, 0.0, 1.0)
    qx = ax + t * ex - px
    qy = ay + t * ey - py
    return np.sqrt(qx * qx + qy * qy)


def _corners_to_edges_min_dist_np(pcx, pcy, qcx, qcy):
    # corners of P (N,4) against the four edges of Q (N,4)
    best = np.full(pcx.shape[0], np.inf)
    for i in range(4):
        for k in range(4):
            k2 = (k + 1) % 4
            d = _point_segment_dist_np(pcx[:, i], pcy[:, i], qcx[:, k], qcy[:, k], qcx[:, k2], qcy[:, k2])
            best = np.minimum(best, d)
    return best


def _separated_np(acx, acy, bcx, bcy, axis_angle):
    ux = np.cos(axis_angle)[:, None]
    uy = np.sin(axis_angle)[:, None]
    pa = acx * ux + acy * uy
    pb = bcx * ux + bcy * uy
    return (pa.max(axis=1) < pb.min(axis=1)) | (pb.max(axis=1) < pa.min(axis=1))


def rect_distance_numpy(ax, ay, ath, al, aw, bx, by, bth, bl, bw):
    """Distance between oriented rectangles, pairwise over equal-length arrays.

    Zero when the rectangles overlap.
    """
    ax, ay, ath, al, aw, bx, by, bth, bl, bw = (
        np.asarray(v, dtype=float) for v in (ax, ay, ath, al, aw, bx, by, bth, bl, bw)
    )
    if ax.size == 0:
        return np.zeros(0)
    acx, acy = _rect_corners_np(ax, ay, ath, al, aw)
    bcx, bcy = _rect_corners_np(bx, by, bth, bl, bw)
    sep = np.zeros(ax.shape[0], dtype=bool)
    for ang in (ath, ath + 0.5 * np.pi, bth, bth + 0.5 * np.pi):
        sep |= _separated_np(acx, acy, bcx, bcy, ang)
    d = np.minimum(
        _corners_to_edges_min_dist_np(acx, acy, bcx, bcy),
        _corners_to_edges_min_dist_np(bcx, bcy, acx, acy),
    )
    return np.where(sep, d, 0.0)


def occluded_fraction_numpy(px, py, edges, radius, n_rays):
    """Fraction of a sensor disc hidden behind line segments.

    ``edges`` is ``(E, 4)`` with rows ``x1, y1, x2, y2``. Rays are cast at bin
    centres ``(j + 0.5) * 2*pi / n_rays``; each ray sees up to its first hit.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    edges = np.asarray(edges, dtype=float).reshape(-1, 4)
    if px.size == 0:
        return np.zeros(0)
    if edges.shape[0] == 0:
        return np.zeros(px.shape[0])
    phi = (np.arange(n_rays) + 0.5) * (2.0 * np.pi / n_rays)
    ux = np.cos(phi)[None, :, None]
    uy = np.sin(phi)[None, :, None]
    ex = (edges[:, 2] - edges[:, 0])[None, None, :]
    ey = (edges[:, 3] - edges[:, 1])[None, None, :]
    wx = edges[:, 0][None, None, :] - px[:, None, None]
    wy = edges[:, 1][None, None, :] - py[:, None, None]
    den = ux * ey - uy * ex
    ok = np.abs(den) > 1e-12
    safe = np.where(ok, den, 1.0)
    r = (wx * ey - wy * ex) / safe
    t = (wx * uy - wy * ux) / safe
    hit = ok & (r >= 0.0) & (t >= 0.0) & (t <= 1.0)
    r = np.where(hit, r, np.inf).min(axis=2)
    r = np.minimum(r, radius)
    return 1.0 - (r * r).sum(axis=1) / (n_rays * radius * radius)


def polyline_nearest_numpy(px, py, xs, ys):
    """Nearest polyline segment per query point: ``(index, t, distance)``.

    Ties resolve to the lower segment index.
    """
    px = np.atleast_1d(np.asarray(px, dtype=float))
    py = np.atleast_1d(np.asarray(py, dtype=float))
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ax, ay = xs[:-1][None, :], ys[:-1][None, :]
    ex, ey = (xs[1:] - xs[:-1])[None, :], (ys[1:] - ys[:-1])[None, :]
    den = ex * ex + ey * ey
    t = ((px[:, None] - ax) * ex + (py[:, None] - ay) * ey) / np.where(den > 0, den, 1.0)
    t = np.clip(t, 0.0, 1.0)
    dx = ax + t * ex - px[:, None]
    dy = ay + t * ey - py[:, None]
    d2 = dx * dx + dy * dy
    idx = np.argmin(d2, axis=1)
    rows = np.arange(px.shape[0])
    return idx, t[rows, idx], np.sqrt(d2[rows, idx])


def sq_mahalanobis_numpy(x, mu, inv_cov):
    diff = np.asarray(x, dtype=float) - np.asarray(mu, dtype=float)
    return np.einsum("ij,jk,ik->i", diff, inv_cov, diff)


def rollout_residuals_numpy(states, dt):
    """Position residual of each next state against the constant-acceleration rollout.

    ``states`` columns are ``x, y, v, a, theta``; returns ``(T-1, 2)``.
    """
    s = np.asarray(states, dtype=float)
    x, y, v, a, th = s[:-1, 0], s[:-1, 1], s[:-1, 2], s[:-1, 3], s[:-1, 4]
    step = v * dt + 0.5 * a * dt * dt
    res = np.empty((s.shape[0] - 1, 2))
    res[:, 0] = s[1:, 0] - (x + step * np.cos(th))
    res[:, 1] = s[1:, 1] - (y + step * np.sin(th))
    return res


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _jit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)


def _point_segment_dist_py(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    den = ex * ex + ey * ey
    t = 0.0
    if den > 0.0:
        t = ((px - ax) * ex + (py - ay) * ey) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = ax + t * ex - px
    qy = ay + t * ey - py
    return math.sqrt(qx * qx + qy * qy)


_point_segment_dist_nb = _jit(_point_segment_dist_py)


def _rect_distance_loop(ax, ay, ath, al, aw, bx, by, bth, bl, bw):
    n = ax.shape[0]
    out = np.empty(n)
    sx = np.array([1.0, -1.0, -1.0, 1.0])
    sy = np.array([1.0, 1.0, -1.0, -1.0])
    acx = np.empty(4)
    acy = np.empty(4)
    bcx = np.empty(4)
    bcy = np.empty(4)
    angles = np.empty(4)
    for i in range(n):
        ca = math.cos(ath[i])
        sa = math.sin(ath[i])
        cb = math.cos(bth[i])
        sb = math.sin(bth[i])
        for k in range(4):
            dx = 0.5 * al[i] * sx[k]
            dy = 0.5 * aw[i] * sy[k]
            acx[k] = ax[i] + ca * dx - sa * dy
            acy[k] = ay[i] + sa * dx + ca * dy
            dx = 0.5 * bl[i] * sx[k]
            dy = 0.5 * bw[i] * sy[k]
            bcx[k] = bx[i] + cb * dx - sb * dy
            bcy[k] = by[i] + sb * dx + cb * dy
        angles[0] = ath[i]
        angles[1] = ath[i] + 0.5 * math.pi
        angles[2] = bth[i]
        angles[3] = bth[i] + 0.5 * math.pi
        separated = False
        for q in range(4):
            ux = math.cos(angles[q])
            uy = math.sin(angles[q])
            amin = np.inf
            amax = -np.inf
            bmin = np.inf
            bmax = -np.inf
            for k in range(4):
                pa = acx[k] * ux + acy[k] * uy
                pb = bcx[k] * ux + bcy[k] * uy
                amin = min(amin, pa)
                amax = max(amax, pa)
                bmin = min(bmin, pb)
                bmax = max(bmax, pb)
            if amax < bmin or bmax < amin:
                separated = True
                break
        if not separated:
            out[i] = 0.0
            continue
        best = np.inf
        for k in range(4):
            for e in range(4):
                e2 = (e + 1) % 4
                d = _point_segment_dist_nb(acx[k], acy[k], bcx[e], bcy[e], bcx[e2], bcy[e2])
                if d < best:
                    best = d
                d = _point_segment_dist_nb(bcx[k], bcy[k], acx[e], acy[e], acx[e2], acy[e2])
                if d < best:
                    best = d
        out[i] = best
    return out


def _occluded_fraction_loop(px, py, edges, radius, n_rays):
    n = px.shape[0]
    m = edges.shape[0]
    out = np.empty(n)
    step = 2.0 * math.pi / n_rays
    cosv = np.empty(n_rays)
    sinv = np.empty(n_rays)
    for j in range(n_rays):
        cosv[j] = math.cos((j + 0.5) * step)
        sinv[j] = math.sin((j + 0.5) * step)
    near = np.empty(m, dtype=np.int64)
    for i in range(n):
        # edges farther than the radius cannot shorten any ray
        cnt = 0
        for e in range(m):
            if _point_segment_dist_nb(px[i], py[i], edges[e, 0], edges[e, 1], edges[e, 2], edges[e, 3]) < radius:
                near[cnt] = e
                cnt += 1
        if cnt == 0:
            out[i] = 0.0
            continue
        acc = 0.0
        for j in range(n_rays):
            ux = cosv[j]
            uy = sinv[j]
            best = radius
            for q in range(cnt):
                e = near[q]
                ex = edges[e, 2] - edges[e, 0]
                ey = edges[e, 3] - edges[e, 1]
                den = ux * ey - uy * ex
                if abs(den) <= 1e-12:
                    continue
                wx = edges[e, 0] - px[i]
                wy = edges[e, 1] - py[i]
                r = (wx * ey - wy * ex) / den
                if r < 0.0 or r >= best:
                    continue
                t = (wx * uy - wy * ux) / den
                if t >= 0.0 and t <= 1.0:
                    best = r
            acc += best * best
        out[i] = 1.0 - acc / (n_rays * radius * radius)
    return out


def _polyline_nearest_loop(px, py, xs, ys):
    n = px.shape[0]
    nseg = xs.shape[0] - 1
    idx = np.empty(n, dtype=np.int64)
    tt = np.empty(n)
    dist = np.empty(n)
    for i in range(n):
        best = np.inf
        bi = 0
        bt = 0.0
        for k in range(nseg):
            ex = xs[k + 1] - xs[k]
            ey = ys[k + 1] - ys[k]
            den = ex * ex + ey * ey
            t = 0.0
            if den > 0.0:
                t = ((px[i] - xs[k]) * ex + (py[i] - ys[k]) * ey) / den
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            dx = xs[k] + t * ex - px[i]
            dy = ys[k] + t * ey - py[i]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
                bi = k
                bt = t
        idx[i] = bi
        tt[i] = bt
        dist[i] = math.sqrt(best)
    return idx, tt, dist


def _sq_mahalanobis_loop(x, mu, inv_cov):
    n, d = x.shape
    out = np.empty(n)
    diff = np.empty(d)
    for i in range(n):
        for j in range(d):
            diff[j] = x[i, j] - mu[j]
        acc = 0.0
        for j in range(d):
            row = 0.0
            for k in range(d):
                row += inv_cov[j, k] * diff[k]
            acc += diff[j] * row
        out[i] = acc
    return out


def _rollout_residuals_loop(states, dt):
    n = states.shape[0] - 1
    res = np.empty((n, 2))
    for t in range(n):
        step = states[t, 2] * dt + 0.5 * states[t, 3] * dt * dt
        res[t, 0] = states[t + 1, 0] - (states[t, 0] + step * math.cos(states[t, 4]))
        res[t, 1] = states[t + 1, 1] - (states[t, 1] + step * math.sin(states[t, 4]))
    return res


if numba is not None:
    _rect_distance_nb = _jit(_rect_distance_loop)
    _occluded_fraction_nb = _jit(_occluded_fraction_loop)
    _polyline_nearest_nb = _jit(_polyline_nearest_loop)
    _sq_mahalanobis_nb = _jit(_sq_mahalanobis_loop)
    _rollout_residuals_nb = _jit(_rollout_residuals_loop)


def _f64(*arrays):
    return tuple(np.ascontiguousarray(np.asarray(a, dtype=np.float64)) for a in arrays)


def rect_distance_numba(ax, ay, ath, al, aw, bx, by, bth, bl, bw):
    return _rect_distance_nb(*_f64(ax, ay, ath, al, aw, bx, by, bth, bl, bw))


def occluded_fraction_numba(px, py, edges, radius, n_rays):
    px, py = _f64(np.atleast_1d(px), np.atleast_1d(py))
    (edges,) = _f64(np.asarray(edges, dtype=float).reshape(-1, 4))
    return _occluded_fraction_nb(px, py, edges, float(radius), int(n_rays))


def polyline_nearest_numba(px, py, xs, ys):
    px, py, xs, ys = _f64(np.atleast_1d(px), np.atleast_1d(py), xs, ys)
    return _polyline_nearest_nb(px, py, xs, ys)


def sq_mahalanobis_numba(x, mu, inv_cov):
    x, mu, inv_cov = _f64(x, mu, inv_cov)
    return _sq_mahalanobis_nb(np.atleast_2d(x), mu, inv_cov)


def rollout_residuals_numba(states, dt):
    (states,) = _f64(states)
    return _rollout_residuals_nb(states, float(dt))


IMPLEMENTATIONS = {
    "numpy": {
        "rect_distance": rect_distance_numpy,
        "occluded_fraction": occluded_fraction_numpy,
        "polyline_nearest": polyline_nearest_numpy,
        "sq_mahalanobis": sq_mahalanobis_numpy,
        "rollout_residuals": rollout_residuals_numpy,
    }
}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "rect_distance": rect_distance_numba,
        "occluded_fraction": occluded_fraction_numba,
        "polyline_nearest": polyline_nearest_numba,
        "sq_mahalanobis": sq_mahalanobis_numba,
        "rollout_residuals": rollout_residuals_numba,
    }

_active = IMPLEMENTATIONS[BACKEND]
rect_distance = _active["rect_distance"]
occluded_fraction = _active["occluded_fraction"]
polyline_nearest = _active["polyline_nearest"]
sq_mahalanobis = _active["sq_mahalanobis"]
rollout_residuals = _active["rollout_residuals"]
