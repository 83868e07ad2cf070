"""Compiled inner loops.

The recursions are strictly sequential in the iteration index, so they run
as scalar loops under numba. Losses are dispatched on the integer codes from
:mod:`shortfall.losses`; parameters ``(a, b)`` are ``(beta, 0)`` for the
exponential and ``(threshold, degree)`` for the piecewise polynomial.

Status codes returned by the loops: 0 ok, 1 non-finite loss value,
2 denominator below the eta guard.
"""
import math

import numpy as np
from numba import njit

OK, OVERFLOW, BELOW_ETA = 0, 1, 2


@njit(cache=True)
def loss_value(code, a, b, x):
    if code == 0:
        return x
    if code == 1:
        return math.exp(a * x)
    y = x - a
    if y <= 0.0:
        return 0.0
    return y**b / b


@njit(cache=True)
def loss_deriv1(code, a, b, x):
    if code == 0:
        return 1.0
    if code == 1:
        return a * math.exp(a * x)
    y = x - a
    if y < 0.0:
        return 0.0
    return y ** (b - 1.0)


@njit(cache=True)
def step_size(c, alpha, k):
    if alpha == 1.0:
        return c / k
    return c / k**alpha


@njit(cache=True)
def sa_step(t, k, xi, lam, tl, tu, c, alpha, code, a, b):
    """One projected update; returns ``(t, k, status)``."""
    k += 1
    g = loss_value(code, a, b, xi - t) - lam
    if not math.isfinite(g):
        return t, k - 1, OVERFLOW
    t = t + step_size(c, alpha, k) * g
    if t < tl:
        t = tl
    elif t > tu:
        t = tu
    return t, k, OK


@njit(cache=True)
def sa_run(xi, t, k, lam, tl, tu, c, alpha, code, a, b):
    """Apply ``sa_step`` over every sample in ``xi``."""
    for i in range(xi.shape[0]):
        t, k, status = sa_step(t, k, xi[i], lam, tl, tu, c, alpha, code, a, b)
        if status != OK:
            return t, k, status
    return t, k, OK


@njit(cache=True)
def gradient_from_normals(z, theta, m1, m2, s1, s2, t0, lam, tl, tu, c, alpha,
                          code, a, b):
    """Ratio estimate of the shortfall derivative from ``4m`` variates.

    The first ``2m`` variates drive ``m`` SA iterations for ``t_m``; the
    remaining ``2m`` give the ``m`` coupled pairs averaged into ``A_m`` and
    ``B_m``. Returns ``(A_m, B_m, t_m, status)``.
    """
    m = z.shape[0] // 4
    t = t0
    k = 0
    for i in range(m):
        y1 = m1 + s1 * z[2 * i]
        y2 = m2 + s2 * z[2 * i + 1]
        xi = -(theta * y1 + (1.0 - theta) * y2)
        t, k, status = sa_step(t, k, xi, lam, tl, tu, c, alpha, code, a, b)
        if status != OK:
            return 0.0, 0.0, t, status
    sa = 0.0
    sb = 0.0
    off = 2 * m
    for i in range(m):
        y1 = m1 + s1 * z[off + 2 * i]
        y2 = m2 + s2 * z[off + 2 * i + 1]
        xi = -(theta * y1 + (1.0 - theta) * y2)
        d = loss_deriv1(code, a, b, xi - t)
        sa += d * (-(y1 - y2))
        sb += d
    a_m = sa / m
    b_m = sb / m
    if not (math.isfinite(a_m) and math.isfinite(b_m)):
        return a_m, b_m, t, OVERFLOW
    return a_m, b_m, t, OK


@njit(cache=True)
def optimize_chunk(z, theta, k_start, n_iter, m, m1, m2, s1, s2, t0, lam, tl, tu,
                   c_est, alpha_est, code, a, b, c_opt, th_lo, th_hi, clamp,
                   eta_guard, rec_k, rec_pos, out_theta, out_grad, out_bm):
    """Run ``n_iter`` SGD iterations starting at iteration ``k_start``.

    Iterates at the iteration numbers listed in ``rec_k`` (sorted) are written
    to the ``out_*`` arrays. Returns ``(theta, last_k, status, rec_pos, b_m)``.
    """
    w = 4 * m
    k = k_start - 1
    b_m = 0.0
    for j in range(n_iter):
        k = k_start + j
        a_m, b_m, t_m, status = gradient_from_normals(
            z[j * w:(j + 1) * w], theta, m1, m2, s1, s2, t0, lam, tl, tu,
            c_est, alpha_est, code, a, b)
        if status != OK:
            return theta, k, status, rec_pos, b_m
        if b_m <= eta_guard:
            return theta, k, BELOW_ETA, rec_pos, b_m
        h = a_m / b_m
        theta = theta - (c_opt / k) * h
        if clamp:
            if theta < th_lo:
                theta = th_lo
            elif theta > th_hi:
                theta = th_hi
        if rec_pos < rec_k.shape[0] and rec_k[rec_pos] == k:
            out_theta[rec_pos] = theta
            out_grad[rec_pos] = h
            out_bm[rec_pos] = b_m
            rec_pos += 1
    return theta, k, OK, rec_pos, b_m


def warmup():
    """Trigger compilation (cached on disk after the first call)."""
    z = np.zeros(8)
    sa_run(np.zeros(2), 0.0, 0, 1.0, -1.0, 1.0, 1.0, 1.0, 1, 1.0, 0.0)
    gradient_from_normals(z, 0.5, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1, 1.0, 0.0)
