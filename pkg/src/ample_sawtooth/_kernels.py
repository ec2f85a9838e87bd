"""Compiled inner loops: domain location, drift evaluation, local sups, walkers.

Everything here works on plain arrays so that the same code serves the
vectorised python wrappers and the Monte Carlo walker.  Domain and drift
objects elsewhere in the package know how to pack themselves into these
arrays (``DomainHandle.pack`` and ``DriftFieldSpec.pack``).
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# domain kinds
DOM_BALL = 0
DOM_SAWTOOTH = 1
DOM_SECTOR = 2

# drift kinds
DRIFT_ZERO = 0
DRIFT_UNIFORM = 1
DRIFT_CONE = 2
DRIFT_GRID = 3

# face codes: -1 is the outer sphere (or the ball boundary); sawtooth box i
# contributes 3*i + {0: top arc, 1: lateral at theta_lo, 2: lateral at theta_hi};
# sector faces are 0 inner arc, 1 outer arc, 2 lateral lo, 3 lateral hi.
CODE_SPHERE = -1


@njit(cache=True, inline='always')
def _angle(x0, x1):
    t = math.atan2(x1, x0)
    if t < 0.0:
        t += TWO_PI
    return t


@njit(cache=True, inline='always')
def _wrap(a):
    a = a % TWO_PI
    if a < 0.0:
        a += TWO_PI
    return a


@njit(cache=True, inline='always')
def _segment(x0, x1, phi, a, b, out):
    """Distance from (x0, x1) to the radial segment {t e_phi : a <= t <= b}."""
    e0 = math.cos(phi)
    e1 = math.sin(phi)
    t = x0 * e0 + x1 * e1
    if t < a:
        t = a
    elif t > b:
        t = b
    out[0] = t * e0
    out[1] = t * e1
    return math.hypot(x0 - out[0], x1 - out[1])


@njit(cache=True, inline='always')
def locate(x, kind, params, boxes, near):
    """Return (inside, distance to boundary, face code) and fill ``near``.

    ``near`` receives the nearest boundary point.  For points outside the
    domain the distance is still the distance to the boundary set.  Ties are
    resolved in favour of the first candidate in a fixed order: sphere, then
    boxes by index, then top, lateral-lo, lateral-hi.
    """
    d = x.shape[0]
    if kind == DOM_BALL:
        R = params[d]
        r2 = 0.0
        for i in range(d):
            r2 += (x[i] - params[i]) ** 2
        r = math.sqrt(r2)
        if r > 0.0:
            for i in range(d):
                near[i] = params[i] + R * (x[i] - params[i]) / r
        else:
            for i in range(d):
                near[i] = params[i]
            near[0] += R
        return r < R, abs(R - r), CODE_SPHERE

    buf = np.empty(2)
    x0 = x[0]
    x1 = x[1]
    r = math.hypot(x0, x1)
    th = _angle(x0, x1)

    if kind == DOM_SECTOR:
        lo = params[0]
        hi = params[1]
        rin = params[2]
        rout = params[3]
        w = hi - lo
        ang = _wrap(th - lo)
        inside = (r > rin) and (r < rout) and (ang > 0.0) and (ang < w)
        best = abs(rout - r)
        code = 1
        if r > 0.0:
            near[0] = rout * x0 / r
            near[1] = rout * x1 / r
        else:
            near[0] = rout
            near[1] = 0.0
        if ang <= w:
            dd = abs(r - rin)
            if dd < best:
                best = dd
                code = 0
                if r > 0.0:
                    near[0] = rin * x0 / r
                    near[1] = rin * x1 / r
                else:
                    near[0] = rin
                    near[1] = 0.0
        dd = _segment(x0, x1, lo, rin, rout, buf)
        if dd < best:
            best = dd
            code = 2
            near[0] = buf[0]
            near[1] = buf[1]
        dd = _segment(x0, x1, hi, rin, rout, buf)
        if dd < best:
            best = dd
            code = 3
            near[0] = buf[0]
            near[1] = buf[1]
        return inside, best, code

    # sawtooth: unit disk minus closed polar boxes [lo, hi] x [rlo, rhi]
    inside = r < 1.0
    best = abs(1.0 - r)
    code = CODE_SPHERE
    if r > 0.0:
        near[0] = x0 / r
        near[1] = x1 / r
    else:
        near[0] = 1.0
        near[1] = 0.0
    nb = boxes.shape[0]
    for i in range(nb):
        lo = boxes[i, 0]
        hi = boxes[i, 1]
        rlo = boxes[i, 2]
        rhi = boxes[i, 3]
        w = hi - lo
        ang = _wrap(th - lo)
        in_wedge = ang <= w
        if in_wedge and r >= rlo and r <= rhi:
            inside = False
        if in_wedge and r < rlo:
            dd = rlo - r
            if dd < best:
                best = dd
                code = 3 * i
                if r > 0.0:
                    near[0] = rlo * x0 / r
                    near[1] = rlo * x1 / r
                else:
                    near[0] = rlo * math.cos(lo)
                    near[1] = rlo * math.sin(lo)
        elif not in_wedge:
            dd = _segment(x0, x1, lo, rlo, rhi, buf)
            if dd < best:
                best = dd
                code = 3 * i + 1
                near[0] = buf[0]
                near[1] = buf[1]
            dd = _segment(x0, x1, hi, rlo, rhi, buf)
            if dd < best:
                best = dd
                code = 3 * i + 2
                near[0] = buf[0]
                near[1] = buf[1]
        else:
            # point inside the closed box: distance to its boundary is only
            # needed for diagnostics; report the radial gap to the top arc
            dd = r - rlo
            if dd < best:
                best = dd
                code = 3 * i
                near[0] = rlo * x0 / r
                near[1] = rlo * x1 / r
    return inside, best, code


@njit(cache=True)
def locate_many(xs, kind, params, boxes):
    n, d = xs.shape
    inside = np.empty(n, dtype=np.bool_)
    dist = np.empty(n)
    codes = np.empty(n, dtype=np.int64)
    nears = np.empty((n, d))
    near = np.empty(d)
    for k in range(n):
        ins, dd, c = locate(xs[k], kind, params, boxes, near)
        inside[k] = ins
        dist[k] = dd
        codes[k] = c
        for i in range(d):
            nears[k, i] = near[i]
    return inside, dist, codes, nears


# ---------------------------------------------------------------- cubed sphere


@njit(cache=True, inline='always')
def cube_face_coords(p):
    """Face index and equiangular coordinates (alpha, beta) of a direction."""
    ax = 0
    m = abs(p[0])
    if abs(p[1]) > m:
        ax = 1
        m = abs(p[1])
    if abs(p[2]) > m:
        ax = 2
        m = abs(p[2])
    sign = 0 if p[ax] >= 0.0 else 1
    if ax == 0:
        i, j = 1, 2
    elif ax == 1:
        i, j = 0, 2
    else:
        i, j = 0, 1
    a = math.atan(p[i] / m)
    b = math.atan(p[j] / m)
    return 2 * ax + sign, a, b


# ---------------------------------------------------------------------- drift


@njit(cache=True, inline='always')
def _radial(x, out):
    """|x| with ``out`` zeroed; 0 signals a point outside the open ball or at 0."""
    d = x.shape[0]
    r2 = 0.0
    for i in range(d):
        out[i] = 0.0
        r2 += x[i] * x[i]
    r = math.sqrt(r2)
    if r >= 1.0:
        return 0.0
    return r


@njit(cache=True, inline='always')
def _inward(x, r, mag, out):
    for i in range(x.shape[0]):
        out[i] = -mag * x[i] / r
    return abs(mag)


@njit(cache=True, inline='always')
def _drift_uniform(x, s, out):
    r = _radial(x, out)
    if r == 0.0:
        return 0.0
    return _inward(x, r, s / (1.0 - r), out)


@njit(cache=True, inline='always')
def _in_cone(x, r, dboxes):
    if x.shape[0] == 2:
        th = _angle(x[0], x[1])
        for b in range(dboxes.shape[0]):
            ang = _wrap(th - dboxes[b, 0])
            if (ang < dboxes[b, 1] - dboxes[b, 0] and r > dboxes[b, 2]
                    and r <= dboxes[b, 3]):
                return True
        return False
    f, a, bb = cube_face_coords(x)
    for b in range(dboxes.shape[0]):
        if (f == int(dboxes[b, 0]) and a >= dboxes[b, 1] and a < dboxes[b, 2]
                and bb >= dboxes[b, 3] and bb < dboxes[b, 4]
                and r > dboxes[b, 5] and r <= dboxes[b, 6]):
            return True
    return False


@njit(cache=True, inline='always')
def _drift_cone(x, s, dboxes, out):
    r = _radial(x, out)
    if r == 0.0 or not _in_cone(x, r, dboxes):
        return 0.0
    return _inward(x, r, s / (1.0 - r), out)


@njit(cache=True, inline='always')
def _drift_grid(x, s, gr, gth, gvx, gvy, out):
    """Nearest node of a regular polar lattice."""
    r = _radial(x, out)
    if r == 0.0:
        return 0.0
    th = _angle(x[0], x[1])
    nr = gr.shape[0]
    ir = np.searchsorted(gr, r)
    if ir >= nr:
        ir = nr - 1
    elif ir > 0 and (r - gr[ir - 1]) < (gr[ir] - r):
        ir -= 1
    nth = gth.shape[0]
    dth = TWO_PI / nth
    it = int(math.floor((th - gth[0]) / dth + 0.5)) % nth
    out[0] = s * gvx[ir, it]
    out[1] = s * gvy[ir, it]
    return math.hypot(out[0], out[1])


@njit(cache=True, inline='always')
def drift_at(x, dkind, dscal, dboxes, gr, gth, gvx, gvy, out):
    """Evaluate the drift vector at ``x`` into ``out``; returns |B|.

    ``dscal`` holds (global scale, family strength).
    """
    s = dscal[0] * dscal[1]
    if dkind == DRIFT_UNIFORM:
        return _drift_uniform(x, s, out)
    if dkind == DRIFT_CONE:
        return _drift_cone(x, s, dboxes, out)
    if dkind == DRIFT_GRID:
        return _drift_grid(x, dscal[0], gr, gth, gvx, gvy, out)
    for i in range(x.shape[0]):
        out[i] = 0.0
    return 0.0


@njit(cache=True)
def drift_many(xs, dkind, dscal, dboxes, gr, gth, gvx, gvy):
    n, d = xs.shape
    res = np.empty((n, d))
    buf = np.empty(d)
    for k in range(n):
        drift_at(xs[k], dkind, dscal, dboxes, gr, gth, gvx, gvy, buf)
        for i in range(d):
            res[k, i] = buf[i]
    return res


@njit(cache=True)
def _frame(t, frame):
    """Orthonormal frame with frame[0] the outward radial direction at t."""
    d = t.shape[0]
    r = 0.0
    for i in range(d):
        r += t[i] * t[i]
    r = math.sqrt(r)
    if r == 0.0:
        for i in range(d):
            for j in range(d):
                frame[i, j] = 1.0 if i == j else 0.0
        return
    for i in range(d):
        frame[0, i] = t[i] / r
    if d == 2:
        frame[1, 0] = -frame[0, 1]
        frame[1, 1] = frame[0, 0]
        return
    # pick the coordinate axis least aligned with the radial direction
    k = 0
    m = abs(frame[0, 0])
    for i in range(1, 3):
        if abs(frame[0, i]) < m:
            m = abs(frame[0, i])
            k = i
    e = np.zeros(3)
    e[k] = 1.0
    dot = frame[0, k]
    nrm = 0.0
    for i in range(3):
        frame[1, i] = e[i] - dot * frame[0, i]
        nrm += frame[1, i] ** 2
    nrm = math.sqrt(nrm)
    for i in range(3):
        frame[1, i] /= nrm
    frame[2, 0] = frame[0, 1] * frame[1, 2] - frame[0, 2] * frame[1, 1]
    frame[2, 1] = frame[0, 2] * frame[1, 0] - frame[0, 0] * frame[1, 2]
    frame[2, 2] = frame[0, 0] * frame[1, 1] - frame[0, 1] * frame[1, 0]


@njit(cache=True, nogil=True)
def sup_local_many(ts, m_s, dkind, dscal, dboxes, gr, gth, gvx, gvy):
    """Lattice max of |B|^2(y) delta(y) over y in B(t, delta(t)/2).

    The lattice has m_s + 1 nodes per axis of a frame aligned with the radial
    direction at t, so the point of the ball closest to the sphere is always
    a node, and doubling m_s gives a superset of nodes.
    """
    n, d = ts.shape
    res = np.zeros(n)
    if dkind == DRIFT_ZERO:
        return res
    frame = np.empty((d, d))
    y = np.empty(d)
    buf = np.empty(d)
    nodes = np.linspace(-1.0, 1.0, m_s + 1)
    idx = np.zeros(d, dtype=np.int64)
    total = (m_s + 1) ** d
    for k in range(n):
        t = ts[k]
        r = 0.0
        for i in range(d):
            r += t[i] * t[i]
        r = math.sqrt(r)
        rad = 0.5 * (1.0 - r)
        _frame(t, frame)
        best = 0.0
        for flat in range(total):
            q = flat
            nrm = 0.0
            for i in range(d):
                idx[i] = q % (m_s + 1)
                q //= m_s + 1
                nrm += nodes[idx[i]] ** 2
            if nrm > 1.0 + 1e-12:
                continue
            ry = 0.0
            for i in range(d):
                s = t[i]
                for j in range(d):
                    s += rad * nodes[idx[j]] * frame[j, i]
                y[i] = s
                ry += s * s
            ry = math.sqrt(ry)
            if ry >= 1.0:
                continue
            mag = drift_at(y, dkind, dscal, dboxes, gr, gth, gvx, gvy, buf)
            val = mag * mag * (1.0 - ry)
            if val > best:
                best = val
        res[k] = best
    return res


# --------------------------------------------------------------------- walker


@njit(cache=True, nogil=True)
def walk_batch(x0, n, kind, params, boxes, dkind, dscal, dboxes, gr, gth, gvx,
               gvy, m_fac, rho, dabs, max_steps, rng):
    """Euler-Maruyama for dX = -B dt + sqrt(2) dW, absorbed near the boundary.

    Per-step dt = rho^2 delta^2 / max(1, M) with delta the distance to the
    domain boundary.  A walker is absorbed once delta < dabs and is then
    projected to its nearest boundary point.  Walkers still running after
    ``max_steps`` are flagged as escaped and keep their last position.
    """
    d = x0.shape[0]
    exits = np.empty((n, d))
    codes = np.empty(n, dtype=np.int64)
    steps = np.empty(n, dtype=np.int64)
    escaped = np.zeros(n, dtype=np.bool_)
    x = np.empty(d)
    near = np.empty(d)
    prev_near = np.empty(d)
    b = np.empty(d)
    s_drift = dscal[0] * dscal[1]
    for w in range(n):
        for i in range(d):
            x[i] = x0[i]
        inside, delta, code = locate(x, kind, params, boxes, near)
        prev_code = code
        for i in range(d):
            prev_near[i] = near[i]
        s = 0
        while True:
            if not inside:
                # overshoot in one step: use the last nearest boundary point
                for i in range(d):
                    exits[w, i] = prev_near[i]
                codes[w] = prev_code
                break
            if delta < dabs:
                for i in range(d):
                    exits[w, i] = near[i]
                codes[w] = code
                break
            if s >= max_steps:
                for i in range(d):
                    exits[w, i] = x[i]
                codes[w] = code
                escaped[w] = True
                break
            if dkind == DRIFT_GRID:
                drift_at(x, dkind, dscal, dboxes, gr, gth, gvx, gvy, b)
            else:
                # zero, uniform and cone fields share the inward radial form
                mag = 0.0
                if dkind != DRIFT_ZERO:
                    r2 = 0.0
                    for i in range(d):
                        r2 += x[i] * x[i]
                    r = math.sqrt(r2)
                    if 0.0 < r < 1.0 and (dkind == DRIFT_UNIFORM or _in_cone(x, r, dboxes)):
                        mag = s_drift / ((1.0 - r) * r)
                for i in range(d):
                    b[i] = -mag * x[i]
            dt = rho * rho * delta * delta / m_fac
            sq = math.sqrt(2.0 * dt)
            for i in range(d):
                x[i] += -b[i] * dt + sq * rng.standard_normal()
            s += 1
            prev_code = code
            for i in range(d):
                prev_near[i] = near[i]
            inside, delta, code = locate(x, kind, params, boxes, near)
        steps[w] = s
    return exits, codes, steps, escaped
