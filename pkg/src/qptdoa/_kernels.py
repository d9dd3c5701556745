"""Compiled inner loops.

Everything here works on plain float arrays so that numba can compile it.
The ionospheric profile is packed as ``prof = [r0, r_b, r_m, A, B, K]``
with ``K = (r_b r_m / (F y_m))**2`` so that ``C(beta) = K - r0**2 cos**2 beta``.
Functions report failures through integer status codes; the public wrappers
turn them into exceptions.
"""
import math

import numpy as np
from numba import njit

OK = 0
MODEL_DOMAIN = 1
PENETRATES = 2
SKIP_ZONE = 3
OUT_OF_COVERAGE = 4
SINGULAR = 5
PROJECTION_FAILED = 6
MAX_ITERS = 7
NO_DESCENT = 8

# |dD/dbeta| (km/rad) treated as zero: the slope left at the located limit angle
DD_SINGULAR = 1e-6


@njit(cache=True)
def qp_c(prof, beta):
    cb = math.cos(beta)
    return prof[5] - prof[0] * prof[0] * cb * cb


@njit(cache=True)
def discriminant(prof, beta):
    """B**2 - 4AC(beta); the ray penetrates where this reaches zero."""
    return prof[4] * prof[4] - 4.0 * prof[3] * qp_c(prof, beta)


@njit(cache=True)
def ray(prof, beta):
    """Ground distance and group path for takeoff angle ``beta``.

    Returns ``(D, P, status)``.
    """
    r0 = prof[0]
    rb = prof[1]
    a = prof[3]
    b = prof[4]
    c = qp_c(prof, beta)
    if c <= 0.0:
        return math.nan, math.nan, MODEL_DOMAIN
    n = b * b - 4.0 * a * c
    if n <= 0.0:
        return math.inf, math.inf, PENETRATES
    cb = math.cos(beta)
    sb = math.sin(beta)
    u = r0 * cb / rb
    sg = math.sqrt(max(0.0, 1.0 - u * u))
    gamma = math.acos(min(1.0, u))
    sc = math.sqrt(c)
    q = sg + sc / rb + b / (2.0 * sc)
    den = 4.0 * c * q * q
    sqa = math.sqrt(a)
    m = 2.0 * a * rb + b + 2.0 * rb * sqa * sg
    if den <= 0.0 or m == 0.0:
        return math.nan, math.nan, MODEL_DOMAIN
    d = 2.0 * r0 * ((gamma - beta) - r0 * cb / (2.0 * sc) * math.log(n / den))
    p = 2.0 * (rb * sg - r0 * sb
               + (-rb * sg - b / (4.0 * sqa) * math.log(n / (m * m))) / a)
    return d, p, OK


@njit(cache=True)
def ray_with_derivatives(prof, beta):
    """``(D, P, dD/dbeta, dP/dbeta, status)`` by the chain rule through gamma and C."""
    r0 = prof[0]
    rb = prof[1]
    a = prof[3]
    b = prof[4]
    c = qp_c(prof, beta)
    if c <= 0.0:
        return math.nan, math.nan, math.nan, math.nan, MODEL_DOMAIN
    n = b * b - 4.0 * a * c
    if n <= 0.0:
        return math.inf, math.inf, math.nan, math.nan, PENETRATES
    cb = math.cos(beta)
    sb = math.sin(beta)
    u = r0 * cb / rb
    sg = math.sqrt(max(0.0, 1.0 - u * u))
    gamma = math.acos(min(1.0, u))
    sc = math.sqrt(c)
    q = sg + sc / rb + b / (2.0 * sc)
    den = 4.0 * c * q * q
    sqa = math.sqrt(a)
    m = 2.0 * a * rb + b + 2.0 * rb * sqa * sg
    if den <= 0.0 or m == 0.0 or sg == 0.0:
        return math.nan, math.nan, math.nan, math.nan, MODEL_DOMAIN
    l1 = math.log(n / den)
    l2 = math.log(n / (m * m))
    h = r0 * cb / (2.0 * sc)
    d = 2.0 * r0 * ((gamma - beta) - h * l1)
    p = 2.0 * (rb * sg - r0 * sb + (-rb * sg - b / (4.0 * sqa) * l2) / a)

    dgamma = r0 * sb / (rb * sg)
    dsg = u * dgamma
    dc = 2.0 * r0 * r0 * cb * sb
    dsc = dc / (2.0 * sc)
    dh = -r0 * sb / (2.0 * sc) - r0 * cb * dsc / (2.0 * c)
    dq = dsg + dsc / rb - b * dsc / (2.0 * c)
    dl1 = -4.0 * a * dc / n - dc / c - 2.0 * dq / q
    dl2 = -4.0 * a * dc / n - 4.0 * rb * sqa * dsg / m
    dd = 2.0 * r0 * (dgamma - 1.0 - dh * l1 - h * dl1)
    dp = 2.0 * (rb * dsg - r0 * cb + (-rb * dsg - b / (4.0 * sqa) * dl2) / a)
    return d, p, dd, dp, OK


@njit(cache=True)
def solve_beta(prof, target, beta_u, d_skip, d_zero, tol):
    """Low-angle takeoff angle with D(beta) = target by bisection on [0, beta_u].

    Targets within ``tol`` km outside [d_skip, d_zero] snap to the end angle.
    Returns ``(beta, status)``.
    """
    if target < d_skip - tol:
        return math.nan, SKIP_ZONE
    if target > d_zero + tol:
        return math.nan, OUT_OF_COVERAGE
    if target <= d_skip:
        return beta_u, OK
    if target >= d_zero:
        return 0.0, OK
    lo = 0.0
    hi = beta_u
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        dm, _p, st = ray(prof, mid)
        if dm > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), OK


@njit(cache=True)
def objective_gradient(prof, beta_u, d_skip, d_zero, sensors, r, w, x, want_grad):
    """ML objective and its ambient gradient.

    Ground distances come from ``x_i . x = r0**2 cos(D_i / r0)``, which is the
    relation the gradient differentiates.  ``w`` is the inverse RD covariance.
    Returns ``(g, grad, status, bad_sensor)``.
    """
    r0 = prof[0]
    nl = sensors.shape[0]
    pp = np.empty(nl)
    dpp = np.empty(nl)
    scale = np.empty(nl)
    grad = np.zeros(3)
    for i in range(nl):
        # 1 - x_i.x / r0^2 rewritten through |x_i - x|^2 so that small
        # separations keep full precision
        d2 = 0.0
        ni = 0.0
        nx = 0.0
        for j in range(3):
            d2 += (sensors[i, j] - x[j]) ** 2
            ni += sensors[i, j] ** 2
            nx += x[j] ** 2
        half = (d2 - (ni - r0 * r0) - (nx - r0 * r0)) / (4.0 * r0 * r0)
        if half < 0.0:
            half = 0.0
        elif half > 1.0:
            half = 1.0
        di = 2.0 * r0 * math.asin(math.sqrt(half))
        beta, st = solve_beta(prof, di, beta_u, d_skip, d_zero, 1e-6)
        if st != OK:
            return math.nan, grad, st, i
        if want_grad:
            _d, p, dd, dp, st = ray_with_derivatives(prof, beta)
            if st != OK:
                return math.nan, grad, st, i
            s = r0 * math.sin(di / r0) * dd
            if abs(dd) <= DD_SINGULAR or s == 0.0 or not math.isfinite(s):
                return math.nan, grad, SINGULAR, i
            scale[i] = -1.0 / s
            dpp[i] = dp
        else:
            _d, p, st = ray(prof, beta)
            if st != OK:
                return math.nan, grad, st, i
        pp[i] = p
    m = nl - 1
    res = np.empty(m)
    for k in range(m):
        res[k] = r[k] - (pp[k + 1] - pp[0])
    v = w @ res
    g = 0.0
    for k in range(m):
        g += res[k] * v[k]
    if want_grad:
        # u = E^T v
        vsum = 0.0
        for k in range(m):
            vsum += v[k]
        for i in range(nl):
            ui = -vsum if i == 0 else v[i - 1]
            coef = -2.0 * ui * dpp[i] * scale[i]
            for j in range(3):
                grad[j] += coef * sensors[i, j]
    return g, grad, OK, -1


POLISH_ALL = 16


@njit(cache=True)
def _feas_tol(bk):
    return 1e-12 * (1.0 + abs(bk))


@njit(cache=True)
def _try_active(rows, b, x, idx, na):
    """Projection onto the affine set of rows ``idx[:na]``; ok when it satisfies KKT."""
    y = x.copy()
    mu = np.zeros(na)
    g = np.empty((na, na))
    rhs = np.empty(na)
    for p in range(na):
        ap = rows[idx[p]]
        rhs[p] = ap[0] * x[0] + ap[1] * x[1] + ap[2] * x[2] - b[idx[p]]
        for q in range(na):
            aq = rows[idx[q]]
            g[p, q] = ap[0] * aq[0] + ap[1] * aq[1] + ap[2] * aq[2]
    # reject near-dependent active sets (rows are unit length)
    if na == 2 and g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0] < 1e-14:
        return y, mu, False
    if na == 3 and np.linalg.det(g) < 1e-18:
        return y, mu, False
    mu = np.linalg.solve(g, rhs)
    for p in range(na):
        if mu[p] < 0.0:
            return y, mu, False
        for j in range(3):
            y[j] -= mu[p] * rows[idx[p], j]
    for k in range(rows.shape[0]):
        if rows[k, 0] * y[0] + rows[k, 1] * y[1] + rows[k, 2] * y[2] - b[k] > _feas_tol(b[k]):
            return y, mu, False
    return y, mu, True


@njit(cache=True)
def _accept(lam, idx, mu, na):
    lam[:] = 0.0
    for p in range(na):
        lam[idx[p]] = mu[p]


@njit(cache=True)
def _polish(rows, b, x, y, lam, enumerate_sets):
    """Exact projection from an approximate Hildreth state.

    First tries the dual support as the active set.  With
    ``enumerate_sets`` it then tries every set of at most three rows drawn
    from all rows (up to ``POLISH_ALL`` of them) or else from the support
    and the nearly tight rows at ``y``.  Any candidate meeting the
    KKT conditions is the projection.
    """
    m = rows.shape[0]
    idx = np.empty(3, dtype=np.int64)
    na = 0
    for k in range(m):
        if lam[k] > 0.0:
            if na == 3:
                na = 4
                break
            idx[na] = k
            na += 1
    if 0 < na <= 3:
        yp, mu, ok = _try_active(rows, b, x, idx, na)
        if ok:
            _accept(lam, idx, mu, na)
            return yp, True
    if not enumerate_sets:
        return y, False
    # few rows: try them all; otherwise only the support and nearly tight rows
    cand = np.empty(m, dtype=np.int64)
    nc = 0
    for k in range(m):
        slack = rows[k, 0] * y[0] + rows[k, 1] * y[1] + rows[k, 2] * y[2] - b[k]
        if m <= POLISH_ALL or lam[k] > 0.0 or slack > -1e-3 * (1.0 + abs(b[k])):
            cand[nc] = k
            nc += 1
    for i1 in range(nc):
        idx[0] = cand[i1]
        yp, mu, ok = _try_active(rows, b, x, idx, 1)
        if ok:
            _accept(lam, idx, mu, 1)
            return yp, True
    for i1 in range(nc):
        for i2 in range(i1 + 1, nc):
            idx[0] = cand[i1]
            idx[1] = cand[i2]
            yp, mu, ok = _try_active(rows, b, x, idx, 2)
            if ok:
                _accept(lam, idx, mu, 2)
                return yp, True
    for i1 in range(nc):
        for i2 in range(i1 + 1, nc):
            for i3 in range(i2 + 1, nc):
                idx[0] = cand[i1]
                idx[1] = cand[i2]
                idx[2] = cand[i3]
                yp, mu, ok = _try_active(rows, b, x, idx, 3)
                if ok:
                    _accept(lam, idx, mu, 3)
                    return yp, True
    return y, False


@njit(cache=True)
def hildreth(rows, b, x, max_sweeps, tol):
    """Projection of ``x`` onto {y : rows @ y <= b} (rows unit-norm).

    Dual coordinate ascent over the constraints.  After every sweep the
    dual support is tried as the active set, and every tenth sweep all
    small sets of nearly tight rows are tried; a candidate that satisfies
    the KKT conditions ends the iteration.  Returns
    ``(y, lam, converged, sweeps)``.
    """
    m = rows.shape[0]
    lam = np.zeros(m)
    y = x.copy()
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for k in range(m):
            viol = rows[k, 0] * y[0] + rows[k, 1] * y[1] + rows[k, 2] * y[2] - b[k]
            new = lam[k] + viol
            if new < 0.0:
                new = 0.0
            dl = new - lam[k]
            if dl != 0.0:
                for j in range(3):
                    y[j] -= dl * rows[k, j]
                lam[k] = new
                if abs(dl) > change:
                    change = abs(dl)
        if change == 0.0:
            return y, lam, True, sweep
        yp, ok = _polish(rows, b, x, y, lam, sweep % 10 == 0)
        if ok:
            return yp, lam, True, sweep
        if change < tol:
            return y, lam, True, sweep
    return y, lam, False, max_sweeps


@njit(cache=True)
def max_violation(rows, b, x):
    out = -math.inf
    for k in range(rows.shape[0]):
        v = rows[k, 0] * x[0] + rows[k, 1] * x[1] + rows[k, 2] * x[2] - b[k]
        if v > out:
            out = v
    return out


@njit(cache=True)
def to_sphere(y, r0):
    nrm = math.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
    return y * (r0 / nrm), nrm


@njit(cache=True)
def ap_passes(rows_n, b_n, r0, x, passes, max_sweeps, tol):
    """``passes`` rounds of polytope projection followed by sphere projection."""
    y = x.copy()
    for _ in range(passes):
        z, _lam, ok, _s = hildreth(rows_n, b_n, y, max_sweeps, tol)
        if not ok:
            return z, False
        nrm = math.sqrt(z[0] * z[0] + z[1] * z[1] + z[2] * z[2])
        if nrm == 0.0:
            return z, False
        y = z * (r0 / nrm)
    return y, True


@njit(cache=True)
def restore(rows_raw, b_raw, r0, x, target, max_rounds, max_sweeps, tol):
    """Move a sphere point into the polytope while staying on the sphere.

    A point ``y`` projects radially into {a.y <= b} iff ``a.y <= (b/r0)|y|``.
    Linearising ``|y|`` at the current direction gives a polyhedral cone
    whose rows are nearly tangent to the sphere, so one projection onto it
    followed by the radial step removes the violation almost entirely.
    Rows are tightened by ``target`` so the result is strictly inside.
    """
    m = rows_raw.shape[0]
    y = x.copy()
    cone = np.empty((m, 3))
    zero = np.zeros(m)
    for _ in range(max_rounds):
        if max_violation(rows_raw, b_raw, y) <= target:
            return y, True
        nrm = math.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
        for k in range(m):
            coef = (b_raw[k] - target) / r0 / nrm
            s = 0.0
            for j in range(3):
                cone[k, j] = rows_raw[k, j] - coef * y[j]
                s += cone[k, j] * cone[k, j]
            s = math.sqrt(s)
            for j in range(3):
                cone[k, j] /= s
        z, _lam, ok, _s = hildreth(cone, zero, y, max_sweeps, tol)
        zn = math.sqrt(z[0] * z[0] + z[1] * z[1] + z[2] * z[2])
        if ok and zn > 1e-6 * r0 and max_violation(rows_raw, b_raw, z * (r0 / zn)) < \
                max_violation(rows_raw, b_raw, y):
            y = z * (r0 / zn)
        else:
            # the linearisation is poor far from T (e.g. close to a sensor)
            y = sphere_sweep(rows_raw, b_raw, r0, y, target)
    return y, max_violation(rows_raw, b_raw, y) <= target


@njit(cache=True)
def sphere_sweep(rows_raw, b_raw, r0, x, target):
    """One cyclic pass of exact on-sphere moves onto each violated row's circle.

    The part of the sphere with ``a.y <= b`` is a cap (or its complement)
    around ``a``; a violating point is rotated along the great circle through
    ``a`` until it reaches the boundary circle.
    """
    y = x.copy()
    for k in range(rows_raw.shape[0]):
        a = rows_raw[k]
        an = math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
        if a[0] * y[0] + a[1] * y[1] + a[2] * y[2] <= b_raw[k] - target:
            continue
        c = (b_raw[k] - target) / (an * r0)
        if c >= 1.0 or c <= -1.0:
            continue
        u = a / an
        yu = (y[0] * u[0] + y[1] * u[1] + y[2] * u[2]) / r0
        t = y / r0 - yu * u
        tn = math.sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2])
        if tn < 1e-12:
            # on the axis: any direction away from it will do
            t = np.array([-u[1], u[0], 0.0]) if abs(u[2]) < 0.9 else np.array([0.0, -u[2], u[1]])
            tn = math.sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2])
        y = r0 * (c * u + math.sqrt(1.0 - c * c) * t / tn)
    return y


@njit(cache=True)
def project_omega(rows_n, b_n, rows_raw, b_raw, r0, x, passes, max_sweeps, tol, feas_tol):
    """AP passes, then radial-aware restoration if the result still leaves T."""
    y, ok = ap_passes(rows_n, b_n, r0, x, passes, max_sweeps, tol)
    if not ok:
        return y, False
    if max_violation(rows_raw, b_raw, y) <= feas_tol:
        return y, True
    return restore(rows_raw, b_raw, r0, y, 0.1 * feas_tol, 20, max_sweeps, tol)


@njit(cache=True)
def gp_loop(prof, beta_u, d_skip, d_zero, sensors, r, w,
            rows_n, b_n, rows_raw, b_raw, x0,
            tau0, grow, shrink, tau_max, max_shrinks,
            max_iters, rel_tol, window, passes, max_sweeps, qp_tol, feas_tol):
    """Projected-gradient descent with accept/reject step control.

    Returns ``(x, g, iters, status, trace, n_eval, tau)``; ``trace[k]`` is the
    objective after iteration ``k`` (``trace[0]`` at ``x0``).
    """
    r0 = prof[0]
    trace = np.empty(max_iters + 1)
    x = x0.copy()
    g, grad, st, _bad = objective_gradient(prof, beta_u, d_skip, d_zero, sensors, r, w, x, True)
    n_eval = 1
    if st != OK:
        return x, g, 0, st, trace[:0], n_eval, tau0
    trace[0] = g
    tau = tau0
    k = 0
    status = MAX_ITERS
    while k < max_iters:
        if g == 0.0:
            status = OK
            break
        accepted = False
        for _s in range(max_shrinks):
            step = x - tau * grad
            y, ok = project_omega(rows_n, b_n, rows_raw, b_raw, r0, step,
                                  passes, max_sweeps, qp_tol, feas_tol)
            if ok:
                gy, grady, sty, _b = objective_gradient(prof, beta_u, d_skip, d_zero,
                                                        sensors, r, w, y, True)
                n_eval += 1
                if sty == OK and gy < g:
                    x = y
                    g = gy
                    grad = grady
                    tau = min(tau * grow, tau_max)
                    accepted = True
                    break
            tau *= shrink
        k += 1
        trace[k] = g
        if not accepted:
            status = NO_DESCENT
            break
        if k >= window and trace[k - window] - g <= rel_tol * abs(trace[k - window]):
            status = OK
            break
    return x, g, k, status, trace[:k + 1], n_eval, tau
