"""Hot numeric kernels with interchangeable numba and numpy implementations.

Set ``NAVPOLICY_NUMBA=0`` to force the numpy path; it is also used when numba
is not importable. Both paths compute the same quantities in the same order
for every agent/cell pair, so results agree to rounding.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("NAVPOLICY_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

N_DIRECTIONS = 16
SPEED_FRACTIONS = (1.0, 2.0 / 3.0, 1.0 / 3.0)
REPULSION_GAIN = 0.5
_EPS = 1e-12


def _njit(fn):
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# -- SDI cell scoring --------------------------------------------------------


def _score_cells_loop(cx, cy, ax, ay, m, q, out):
    for i in range(cx.shape[0]):
        s = 0.0
        for k in range(ax.shape[0]):
            w = math.sqrt((cx[i] - ax[k]) ** 2 + (cy[i] - ay[k]) ** 2)
            if w < m:
                s += 1.0
            elif w > q:
                continue
            else:
                s += m / w
        out[i] = s


def score_cells_numpy(cx, cy, ax, ay, m, q):
    """Sum of per-agent proximity scores for every cell centre."""
    if ax.shape[0] == 0:
        return np.zeros(cx.shape[0])
    w = np.sqrt((cx[:, None] - ax[None, :]) ** 2 + (cy[:, None] - ay[None, :]) ** 2)
    with np.errstate(divide="ignore"):
        s = np.where(w < m, 1.0, np.where(w > q, 0.0, m / np.where(w > 0, w, 1.0)))
    # sequential accumulation keeps the agent summation order fixed
    out = np.zeros(cx.shape[0])
    for k in range(s.shape[1]):
        out += s[:, k]
    return out


def score_series_numpy(cx, cy, offsets, ax, ay, m, q, h, residual):
    n_t = len(offsets) - 1
    n_c = cx.shape[0]
    E = np.empty(n_t)
    cell_sum = np.zeros(n_c)
    prev = np.zeros(n_c)
    for t in range(n_t):
        cur = score_cells_numpy(cx, cy, ax[offsets[t]:offsets[t + 1]], ay[offsets[t]:offsets[t + 1]], m, q)
        c = h * prev + cur if residual else h * cur
        prev = c
        cell_sum += c
        E[t] = c.sum() / n_c if n_c > 0 else 0.0
    return E, cell_sum


if HAS_NUMBA:
    _score_cells_nb = _njit(_score_cells_loop)


def _make_series_nb():
    cells = _score_cells_nb

    @numba.njit(cache=True, nogil=True)
    def series(cx, cy, offsets, ax, ay, m, q, h, residual):
        n_t = offsets.shape[0] - 1
        n_c = cx.shape[0]
        E = np.empty(n_t)
        cell_sum = np.zeros(n_c)
        prev = np.zeros(n_c)
        cur = np.empty(n_c)
        for t in range(n_t):
            lo, hi = offsets[t], offsets[t + 1]
            cells(cx, cy, ax[lo:hi], ay[lo:hi], m, q, cur)
            tot = 0.0
            for i in range(n_c):
                if residual:
                    c = h * prev[i] + cur[i]
                else:
                    c = h * cur[i]
                prev[i] = c
                cell_sum[i] += c
                tot += c
            E[t] = tot / n_c if n_c > 0 else 0.0
        return E, cell_sum

    return series


if HAS_NUMBA:
    _score_series_nb = _make_series_nb()


def score_cells_numba(cx, cy, ax, ay, m, q):
    out = np.empty(cx.shape[0])
    _score_cells_nb(cx, cy, ax, ay, float(m), float(q), out)
    return out


def score_series_numba(cx, cy, offsets, ax, ay, m, q, h, residual):
    return _score_series_nb(cx, cy, np.asarray(offsets, dtype=np.int64), ax, ay,
                            float(m), float(q), float(h), bool(residual))


# -- steering ----------------------------------------------------------------


def _steer_loop(px, py, wx, wy, speed, radius, dt, nx, ny, nvx, nvy):
    two_r = 2.0 * radius
    dxw = wx - px
    dyw = wy - py
    dist = math.sqrt(dxw * dxw + dyw * dyw)
    if dist > _EPS:
        sp = min(speed, dist / dt)
        hx = dxw / dist
        hy = dyw / dist
        vdx = hx * sp
        vdy = hy * sp
    else:
        hx = 0.0
        hy = 0.0
        vdx = 0.0
        vdy = 0.0
    rx = 0.0
    ry = 0.0
    n = nx.shape[0]
    for j in range(n):
        ex = px - nx[j]
        ey = py - ny[j]
        r = math.sqrt(ex * ex + ey * ey)
        if r < 4.0 * radius and r > _EPS:
            gap = max(r - two_r, 0.1 * radius)
            mag = REPULSION_GAIN * speed * radius / gap
            ux = ex / r
            uy = ey / r
            rx += mag * ux
            ry += mag * uy
            ahead = -(hx * ux + hy * uy)
            if ahead > 0.0:
                rx += mag * ahead * hy
                ry -= mag * ahead * hx
    vx = vdx + rx
    vy = vdy + ry
    mag_v = math.sqrt(vx * vx + vy * vy)
    if mag_v > speed:
        vx *= speed / mag_v
        vy *= speed / mag_v
    if n == 0:
        return vx, vy
    # feasibility against closest approach within dt
    best_x = vx
    best_y = vy
    best_cost = math.inf
    least_bad = math.inf
    lb_x = 0.0
    lb_y = 0.0
    if mag_v > _EPS:
        base = math.atan2(vy, vx)
    elif dist > _EPS:
        base = math.atan2(hy, hx)
    else:
        base = 0.0
    n_cand = 1 + N_DIRECTIONS * len(SPEED_FRACTIONS) + 1
    for c in range(n_cand):
        if c == 0:
            cxv = vx
            cyv = vy
        elif c == n_cand - 1:
            cxv = 0.0
            cyv = 0.0
        else:
            si = (c - 1) // N_DIRECTIONS
            di = (c - 1) % N_DIRECTIONS
            ang = base + 2.0 * math.pi * di / N_DIRECTIONS
            s = speed * SPEED_FRACTIONS[si]
            cxv = s * math.cos(ang)
            cyv = s * math.sin(ang)
        worst = 0.0
        for j in range(n):
            p0x = px - nx[j]
            p0y = py - ny[j]
            rvx = cxv - nvx[j]
            rvy = cyv - nvy[j]
            a = rvx * rvx + rvy * rvy
            t = 0.0
            if a > _EPS:
                t = -(p0x * rvx + p0y * rvy) / a
                t = min(max(t, 0.0), dt)
            qx = p0x + rvx * t
            qy = p0y + rvy * t
            d = math.sqrt(qx * qx + qy * qy)
            r0 = math.sqrt(p0x * p0x + p0y * p0y)
            if r0 >= two_r:
                viol = two_r - d
            else:
                viol = r0 - d
            if viol > worst:
                worst = viol
        if worst <= 1e-12:
            ddx = cxv - vx
            ddy = cyv - vy
            cost = ddx * ddx + ddy * ddy
            if cost < best_cost:
                best_cost = cost
                best_x = cxv
                best_y = cyv
            if c == 0:
                break
        elif worst < least_bad:
            least_bad = worst
            lb_x = cxv
            lb_y = cyv
    if best_cost < math.inf:
        return best_x, best_y
    return lb_x, lb_y


def steer_numpy(px, py, wx, wy, speed, radius, dt, nx, ny, nvx, nvy):
    two_r = 2.0 * radius
    to_w = np.array([wx - px, wy - py])
    dist = math.hypot(to_w[0], to_w[1])
    if dist > _EPS:
        h = to_w / dist
        vd = h * min(speed, dist / dt)
    else:
        h = np.zeros(2)
        vd = np.zeros(2)
    rep = np.zeros(2)
    if nx.shape[0]:
        e = np.stack([px - nx, py - ny], axis=1)
        r = np.hypot(e[:, 0], e[:, 1])
        for j in np.flatnonzero((r < 4.0 * radius) & (r > _EPS)):
            gap = max(r[j] - two_r, 0.1 * radius)
            mag = REPULSION_GAIN * speed * radius / gap
            u = e[j] / r[j]
            rep[0] += mag * u[0]
            rep[1] += mag * u[1]
            ahead = -(h[0] * u[0] + h[1] * u[1])
            if ahead > 0.0:
                rep[0] += mag * ahead * h[1]
                rep[1] -= mag * ahead * h[0]
    v = np.array([vd[0] + rep[0], vd[1] + rep[1]])
    mag_v = math.hypot(v[0], v[1])
    if mag_v > speed:
        v = v * (speed / mag_v)
    if nx.shape[0] == 0:
        return float(v[0]), float(v[1])
    if mag_v > _EPS:
        base = math.atan2(v[1], v[0])
    elif dist > _EPS:
        base = math.atan2(h[1], h[0])
    else:
        base = 0.0
    ang = base + 2.0 * math.pi * np.arange(N_DIRECTIONS) / N_DIRECTIONS
    ring = [np.stack([speed * f * np.cos(ang), speed * f * np.sin(ang)], axis=1) for f in SPEED_FRACTIONS]
    cand = np.vstack([v[None, :]] + ring + [np.zeros((1, 2))])
    p0 = np.stack([px - nx, py - ny], axis=1)  # (n, 2)
    rv = cand[:, None, :] - np.stack([nvx, nvy], axis=1)[None, :, :]  # (c, n, 2)
    a = (rv ** 2).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(a > _EPS, -(p0[None] * rv).sum(-1) / np.where(a > _EPS, a, 1.0), 0.0)
    t = np.clip(t, 0.0, dt)
    qv = p0[None] + rv * t[..., None]
    d = np.hypot(qv[..., 0], qv[..., 1])
    r0 = np.hypot(p0[:, 0], p0[:, 1])[None, :]
    viol = np.where(r0 >= two_r, two_r - d, r0 - d)
    worst = np.maximum(viol.max(axis=1), 0.0)
    ok = worst <= 1e-12
    if ok[0]:
        return float(v[0]), float(v[1])
    if ok.any():
        cost = ((cand - v) ** 2).sum(-1)
        cost[~ok] = np.inf
        k = int(np.argmin(cost))
    else:
        k = int(np.argmin(worst))
    return float(cand[k, 0]), float(cand[k, 1])


if HAS_NUMBA:
    _steer_nb = _njit(_steer_loop)


def steer_numba(px, py, wx, wy, speed, radius, dt, nx, ny, nvx, nvy):
    vx, vy = _steer_nb(float(px), float(py), float(wx), float(wy), float(speed), float(radius), float(dt),
                       nx, ny, nvx, nvy)
    return vx, vy


if USE_NUMBA:
    score_cells = score_cells_numba
    score_series = score_series_numba
    steer_velocity = steer_numba
else:
    score_cells = score_cells_numpy
    score_series = score_series_numpy
    steer_velocity = steer_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
