"""Difference-bound-matrix kernels (hot path of the game solver).

A zone over ``dim`` clocks is a ``(dim+1, dim+1)`` int64 matrix ``m`` where
``m[i, j]`` bounds ``x_i - x_j`` and row/column 0 is the reference clock
(constant 0).  Bounds use the raw encoding

    raw(n, <=) = 2n + 1        raw(n, <) = 2n        infinity = RAW_INF

so that comparing raws orders bounds correctly ((n, <) is tighter than
(n, <=)) and negation of a constraint is ``1 - raw``.

Kernels are compiled with numba when the backend allows it; the numpy
fallbacks are vectorised over the matrix (see ``backend``).
"""

import numpy as np

from .backend import NUMBA_ENABLED, jit

RAW_INF = np.int64(1) << np.int64(40)
RAW_LE_ZERO = np.int64(1)  # (0, <=)
RAW_LT_ZERO = np.int64(0)  # (0, <)


def raw_of(value: int, strict: bool) -> int:
    return 2 * int(value) + (0 if strict else 1)


def raw_value(raw: int) -> int:
    return (int(raw) - (int(raw) & 1)) // 2


def raw_is_strict(raw: int) -> bool:
    return (int(raw) & 1) == 0


def raw_neg(raw: int) -> int:
    """Raw bound of the complement constraint: not(x-y ~ n) == y-x ~' -n."""
    return 1 - int(raw)


def _close_jit(m):
    n = m.shape[0]
    for k in range(n):
        for i in range(n):
            mik = m[i, k]
            if mik >= RAW_INF:
                continue
            for j in range(n):
                mkj = m[k, j]
                if mkj >= RAW_INF:
                    continue
                s = mik + mkj - ((mik | mkj) & 1)
                if s < m[i, j]:
                    m[i, j] = s
    for i in range(n):
        if m[i, i] < RAW_LE_ZERO:
            return False
        m[i, i] = RAW_LE_ZERO
    return True


def _close_numpy(m):
    n = m.shape[0]
    for k in range(n):
        col = m[:, k]
        row = m[k, :]
        s = col[:, None] + row[None, :] - ((col[:, None] | row[None, :]) & 1)
        inf_mask = (col[:, None] >= RAW_INF) | (row[None, :] >= RAW_INF)
        s[inf_mask] = RAW_INF
        np.minimum(m, s, out=m)
    d = np.diagonal(m)
    if (d < RAW_LE_ZERO).any():
        return False
    np.fill_diagonal(m, RAW_LE_ZERO)
    return True


if NUMBA_ENABLED:
    close_inplace = jit(_close_jit)
else:
    close_inplace = _close_numpy


def up_inplace(m):
    """Future elapse: drop upper bounds of all clocks, keep differences."""
    m[1:, 0] = RAW_INF


def down_then_close(m):
    """Past elapse: lower bounds fall to clock-nonnegativity; needs re-close."""
    m[0, 1:] = RAW_LE_ZERO
    close_inplace(m)


def free_then_close(m, x):
    """Remove every constraint on clock x except nonnegativity."""
    n = m.shape[0]
    for j in range(n):
        if j != x:
            m[x, j] = RAW_INF
            m[j, x] = m[j, 0]
    close_inplace(m)


def reset_zero(m, x):
    """Exact image of setting clock x to 0 (canonical-form preserving)."""
    m[x, :] = m[0, :]
    m[:, x] = m[:, 0]
    m[x, x] = RAW_LE_ZERO


def contains_point(m, pt) -> bool:
    """Membership of a valuation; pt[0] must be 0.0 (reference clock)."""
    n = m.shape[0]
    for i in range(n):
        for j in range(n):
            r = m[i, j]
            if r >= RAW_INF:
                continue
            diff = pt[i] - pt[j]
            bound = raw_value(r)
            if raw_is_strict(r):
                if not diff < bound:
                    return False
            else:
                if not diff <= bound:
                    return False
    return True


def _membership_mask_numpy(m, pts):
    """Vectorised membership of an (N, dim) array of valuations."""
    n = m.shape[0]
    full = np.concatenate([np.zeros((pts.shape[0], 1)), pts], axis=1)
    ok = np.ones(pts.shape[0], dtype=bool)
    for i in range(n):
        for j in range(n):
            r = int(m[i, j])
            if r >= RAW_INF:
                continue
            diff = full[:, i] - full[:, j]
            if raw_is_strict(r):
                ok &= diff < raw_value(r)
            else:
                ok &= diff <= raw_value(r)
    return ok


membership_mask = _membership_mask_numpy
