"""Trigger-time integration kernels (the other hot path).

Between controller updates the plant follows ``xi' = A xi + w`` with
``w = B K x0`` frozen at the last sample ``x0``; the event fires at the
first t > 0 with ``|x0 - xi(t)|^2 >= sigma |xi(t)|^2``.  The kernels march
a fixed-step RK4 scheme and localize the crossing by bisection on the
bracketing step (one RK4 substep per probe, so the refinement inherits the
integrator's accuracy).

``trigger_times_batch(A, w_rows, x0s, sigma, h, cap, tol)`` returns the
crossing times and the plant states at those times for a batch of initial
samples.  Numba path loops per sample; numpy path advances the whole batch
with an active mask.  Both implement the same arithmetic.
"""

import numpy as np

from .backend import NUMBA_ENABLED


def _batch_jit(A, w_rows, x0s, sigma, h, cap, tol):
    n = x0s.shape[0]
    taus = np.empty(n)
    xs = np.empty((n, 2))
    a00, a01, a10, a11 = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    for i in range(n):
        x00, x01 = x0s[i, 0], x0s[i, 1]
        w0, w1 = w_rows[i, 0], w_rows[i, 1]
        y0, y1 = x00, x01
        t = 0.0
        tau = cap
        while t < cap:
            step = h if (cap - t) > h else (cap - t)
            # one RK4 step of width `step` from (y0, y1)
            k10 = a00 * y0 + a01 * y1 + w0
            k11 = a10 * y0 + a11 * y1 + w1
            m0 = y0 + 0.5 * step * k10
            m1 = y1 + 0.5 * step * k11
            k20 = a00 * m0 + a01 * m1 + w0
            k21 = a10 * m0 + a11 * m1 + w1
            m0 = y0 + 0.5 * step * k20
            m1 = y1 + 0.5 * step * k21
            k30 = a00 * m0 + a01 * m1 + w0
            k31 = a10 * m0 + a11 * m1 + w1
            m0 = y0 + step * k30
            m1 = y1 + step * k31
            k40 = a00 * m0 + a01 * m1 + w0
            k41 = a10 * m0 + a11 * m1 + w1
            z0 = y0 + step / 6.0 * (k10 + 2.0 * k20 + 2.0 * k30 + k40)
            z1 = y1 + step / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
            e0 = x00 - z0
            e1 = x01 - z1
            g = e0 * e0 + e1 * e1 - sigma * (z0 * z0 + z1 * z1)
            if g >= 0.0:
                # bisect the crossing within (t, t + step]
                lo = 0.0
                hi = step
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    k10 = a00 * y0 + a01 * y1 + w0
                    k11 = a10 * y0 + a11 * y1 + w1
                    m0 = y0 + 0.5 * mid * k10
                    m1 = y1 + 0.5 * mid * k11
                    k20 = a00 * m0 + a01 * m1 + w0
                    k21 = a10 * m0 + a11 * m1 + w1
                    m0 = y0 + 0.5 * mid * k20
                    m1 = y1 + 0.5 * mid * k21
                    k30 = a00 * m0 + a01 * m1 + w0
                    k31 = a10 * m0 + a11 * m1 + w1
                    m0 = y0 + mid * k30
                    m1 = y1 + mid * k31
                    k40 = a00 * m0 + a01 * m1 + w0
                    k41 = a10 * m0 + a11 * m1 + w1
                    p0 = y0 + mid / 6.0 * (k10 + 2.0 * k20 + 2.0 * k30 + k40)
                    p1 = y1 + mid / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
                    e0 = x00 - p0
                    e1 = x01 - p1
                    gm = e0 * e0 + e1 * e1 - sigma * (p0 * p0 + p1 * p1)
                    if gm >= 0.0:
                        hi = mid
                        z0, z1 = p0, p1
                    else:
                        lo = mid
                tau = t + hi
                y0, y1 = z0, z1
                break
            y0, y1 = z0, z1
            t += step
        taus[i] = tau
        xs[i, 0] = y0
        xs[i, 1] = y1
    return taus, xs


def _rk4_step_np(A, w, y, step):
    """RK4 step for rows of y (N, 2) with per-row widths step (N, 1)."""
    k1 = y @ A.T + w
    k2 = (y + 0.5 * step * k1) @ A.T + w
    k3 = (y + 0.5 * step * k2) @ A.T + w
    k4 = (y + step * k3) @ A.T + w
    return y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _batch_numpy(A, w_rows, x0s, sigma, h, cap, tol):
    n = x0s.shape[0]
    taus = np.full(n, cap)
    xs = np.empty((n, 2))
    y = x0s.copy()
    t = 0.0
    active = np.arange(n)
    while t < cap and len(active):
        step = min(h, cap - t)
        z = _rk4_step_np(A, w_rows[active], y[active], step)
        e = x0s[active] - z
        g = (e * e).sum(axis=1) - sigma * (z * z).sum(axis=1)
        hit = g >= 0.0
        if hit.any():
            idx = active[hit]
            lo = np.zeros(len(idx))
            hi = np.full(len(idx), step)
            ybr = y[idx]
            zed = z[hit]
            while (hi - lo).max() > tol:
                mid = 0.5 * (lo + hi)
                p = _rk4_step_np(A, w_rows[idx], ybr, mid[:, None])
                e = x0s[idx] - p
                gm = (e * e).sum(axis=1) - sigma * (p * p).sum(axis=1)
                up = gm >= 0.0
                hi[up] = mid[up]
                zed[up] = p[up]
                lo[~up] = mid[~up]
            taus[idx] = t + hi
            xs[idx] = zed
        y[active[~hit]] = z[~hit]
        active = active[~hit]
        t += step
    xs[active] = y[active]
    return taus, xs


if NUMBA_ENABLED:
    from numba import njit

    _batch_compiled = njit(cache=True)(_batch_jit)

    def trigger_times_batch(A, w_rows, x0s, sigma, h, cap, tol):
        return _batch_compiled(
            np.ascontiguousarray(A, dtype=np.float64),
            np.ascontiguousarray(w_rows, dtype=np.float64),
            np.ascontiguousarray(x0s, dtype=np.float64),
            float(sigma), float(h), float(cap), float(tol),
        )

else:

    def trigger_times_batch(A, w_rows, x0s, sigma, h, cap, tol):
        return _batch_numpy(
            np.asarray(A, dtype=np.float64),
            np.asarray(w_rows, dtype=np.float64),
            np.asarray(x0s, dtype=np.float64),
            float(sigma), float(h), float(cap), float(tol),
        )
