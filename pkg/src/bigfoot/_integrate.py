"""Compiled Dormand-Prince 5(4) integrator with dense output and event location.

The tableau and the quartic continuous extension are the ones used by
``scipy.integrate.RK45``; ``tests/test_integrator.py`` checks the coefficients
and compares trajectories against scipy.
"""

import numpy as np
from numba import njit

from ._model import NY, rhs

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# number of state components entering the error norm (aux quadratures excluded)
N_ERR = 10

DONE, HEEL, FALL, FAILED, MAX_STEPS, SWITCH = 0, 1, 2, 3, 4, 5

_CACHE = True


@njit(cache=_CACHE)
def _err_norm(x, scale):
    s = 0.0
    for i in range(N_ERR):
        v = x[i] / scale[i]
        s += v * v
    return np.sqrt(s / N_ERR)


@njit(cache=_CACHE)
def _dense(y_old, K, h, theta):
    pw = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
    Q = K.T @ P
    return y_old + h * (Q @ pw)


@njit(cache=_CACHE)
def _events(y, fall, phe):
    g_fall = fall - max(abs(y[2]), abs(y[0]), abs(y[1]))
    return y[2], g_fall, y[2] - phe, y[2] + phe


@njit(cache=_CACHE)
def _switch_direction(contact):
    """(event index, crossing sign) of the edge/curve switch for each contact."""
    if contact == 0:
        return 2, 1
    if contact == 2:
        return 2, -1
    if contact == 1:
        return 3, -1
    return 3, 1


@njit(cache=_CACHE)
def _locate(y_old, K, h, t_old, which, target_sign, fall, phe):
    """Find theta in (0, 1] where event ``which`` crosses zero (Illinois)."""
    lo, hi = 0.0, 1.0
    glo = _events(y_old, fall, phe)[which]
    ghi = _events(_dense(y_old, K, h, 1.0), fall, phe)[which]
    side = 0
    for _ in range(200):
        if ghi == glo:
            break
        mid = (lo * ghi - hi * glo) / (ghi - glo)
        if not (lo < mid < hi):
            mid = 0.5 * (lo + hi)
        gm = _events(_dense(y_old, K, h, mid), fall, phe)[which]
        if gm == 0.0:
            return mid
        if (gm > 0.0) == (ghi > 0.0):
            hi, ghi = mid, gm
            if side == 1:
                glo *= 0.5
            side = 1
        else:
            lo, glo = mid, gm
            if side == -1:
                ghi *= 0.5
            side = -1
        if (hi - lo) * abs(h) < 1e-14 * max(1.0, abs(t_old)):
            break
    # return the bracket end on the far side of the crossing
    if target_sign > 0:
        return hi if ghi >= 0.0 else lo
    return hi if ghi <= 0.0 else lo


@njit(cache=_CACHE)
def _initial_step(y0, f0, contact, field, p, eps, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d0 = _err_norm(y0, scale)
    d1 = _err_norm(f0, scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = rhs(y1, contact, field, p, eps)
    d2 = _err_norm(f1 - f0, scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


@njit(cache=_CACHE)
def integrate(y0, t0, t_end, contact, field, p, eps, rtol, atol, h_init,
              heel_dir, fall, max_steps, sample_dt, switch_angle):
    """Integrate one continuous segment.

    heel_dir is -1 to stop when phi crosses zero downward, +1 upward, 0 off.
    switch_angle > 0 stops where the stance foot passes between edge and
    curved-surface contact (|phi| = switch_angle); 0 disables it.
    Returns (status, t, y, h_next, n_steps, ts, ys): samples are the uniform
    grid t0 + k*sample_dt when sample_dt > 0, otherwise every accepted step;
    the terminal point is always the last sample.
    """
    span = t_end - t0
    if sample_dt > 0.0:
        cap = int(span / sample_dt) + 3
    else:
        cap = max_steps + 2
    ts = np.empty(cap)
    ys = np.empty((cap, NY))
    ts[0] = t0
    ys[0] = y0
    ns = 1
    next_sample = t0 + sample_dt

    t = t0
    y = y0.copy()
    f = rhs(y, contact, field, p, eps)
    h = h_init if h_init > 0.0 else _initial_step(y, f, contact, field, p, eps, rtol, atol, span)
    K = np.empty((7, NY))
    status = DONE
    n = 0
    rejected = False
    while t < t_end:
        if n >= max_steps:
            status = MAX_STEPS
            break
        h_min = 10.0 * np.abs(np.nextafter(t, np.inf) - t)
        if h < h_min:
            status = FAILED
            break
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        K[0] = f
        for s in range(1, 6):
            dy = np.zeros(NY)
            for j in range(s):
                dy += A[s, j] * K[j]
            K[s] = rhs(y + h * dy, contact, field, p, eps)
        y_new = y + h * (B @ K[:6])
        f_new = rhs(y_new, contact, field, p, eps)
        K[6] = f_new
        scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
        err = _err_norm(h * (K.T @ E), scale)
        if not np.isfinite(err):
            h *= 0.2
            rejected = True
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            rejected = True
            continue
        n += 1
        t_new = t_end if last else t + h

        # events on the accepted step
        theta_ev = 2.0
        which = -1
        g_old = _events(y, fall, switch_angle)
        g_new = _events(y_new, fall, switch_angle)
        if heel_dir < 0 and g_old[0] > 0.0 and g_new[0] <= 0.0:
            th = _locate(y, K, h, t, 0, -1, fall, switch_angle)
            if th < theta_ev:
                theta_ev, which = th, 0
        elif heel_dir > 0 and g_old[0] < 0.0 and g_new[0] >= 0.0:
            th = _locate(y, K, h, t, 0, 1, fall, switch_angle)
            if th < theta_ev:
                theta_ev, which = th, 0
        if g_old[1] > 0.0 and g_new[1] <= 0.0:
            th = _locate(y, K, h, t, 1, -1, fall, switch_angle)
            if th < theta_ev:
                theta_ev, which = th, 1
        if switch_angle > 0.0:
            ks, sgn = _switch_direction(contact)
            if (sgn > 0 and g_old[ks] < 0.0 and g_new[ks] >= 0.0) or \
                    (sgn < 0 and g_old[ks] > 0.0 and g_new[ks] <= 0.0):
                th = _locate(y, K, h, t, ks, sgn, fall, switch_angle)
                if th < theta_ev:
                    theta_ev, which = th, ks
        if which >= 0:
            t_new = t + theta_ev * h
            y_new = _dense(y, K, h, theta_ev)
            if which == 0:
                status = HEEL
            elif which == 1:
                status = FALL
            else:
                status = SWITCH

        if sample_dt > 0.0:
            while next_sample < t_new and ns < cap - 1:
                ts[ns] = next_sample
                ys[ns] = _dense(y, K, h, (next_sample - t) / h)
                ns += 1
                next_sample = t0 + ns * sample_dt
        elif ns < cap - 1 and t_new < t_end and which < 0:
            ts[ns] = t_new
            ys[ns] = y_new
            ns += 1

        t = t_new
        y = y_new
        f = f_new
        if which >= 0:
            break
        if err == 0.0:
            factor = 10.0
        else:
            factor = min(10.0, 0.9 * err ** -0.2)
        if rejected:
            factor = min(1.0, factor)
        rejected = False
        if not last:
            h *= factor
    if ns == 0 or ts[ns - 1] != t:
        ts[ns] = t
        ys[ns] = y
        ns += 1
    return status, t, y, h, n, ts[:ns].copy(), ys[:ns].copy()
