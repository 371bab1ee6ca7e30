"""Hot inner loops, with a numba path and a pure-numpy fallback.

Set ``FBRSIM_DISABLE_NUMBA=1`` to force the numpy path (also used when numba
is not importable). Both paths take and return the same arrays and perform
the same floating-point operations in the same order, so results are
bit-identical whichever path runs (for IDM this holds for the default
exponent 4, which avoids ``pow``; other exponents agree to a few ulp).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("FBRSIM_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by FBRSIM_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# --------------------------------------------------------------------------
# candidate neighbour pairs on a periodic 1-D coordinate

def forward_pairs_numpy(xs: np.ndarray, road_length: float, reach: float):
    """Pairs (a, b) of indices into sorted ``xs`` with b ahead of a by <= reach.

    ``xs`` must be sorted ascending in [0, road_length). Each unordered pair
    is produced once provided ``2 * reach < road_length``.
    """
    n = xs.shape[0]
    if n < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy()
    ext = np.concatenate((xs, xs + road_length))
    hi = np.searchsorted(ext, xs + reach, side="right")
    idx = np.arange(n, dtype=np.int64)
    hi = np.minimum(hi, idx + n)
    counts = hi - idx - 1
    a = np.repeat(idx, counts)
    starts = np.cumsum(counts) - counts
    offs = np.arange(a.shape[0], dtype=np.int64) - np.repeat(starts, counts)
    b = (a + 1 + offs) % n
    return a, b


def _forward_pairs_loop(xs, road_length, reach):
    n = xs.shape[0]
    if n < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    j = 1
    for i in range(n):
        if j < i + 1:
            j = i + 1
        while j < i + n:
            xj = xs[j] if j < n else xs[j - n] + road_length
            if xj > xs[i] + reach:
                break
            j += 1
        counts[i] = j - i - 1
    total = 0
    for i in range(n):
        total += counts[i]
    a = np.empty(total, dtype=np.int64)
    b = np.empty(total, dtype=np.int64)
    p = 0
    for i in range(n):
        for o in range(counts[i]):
            a[p] = i
            b[p] = (i + 1 + o) % n
            p += 1
    return a, b


# --------------------------------------------------------------------------
# IDM acceleration, elementwise

def idm_accel_numpy(v, v0, gap, dv, a_max, b_comf, s0, headway, delta=4.0):
    """IDM acceleration. ``gap`` is the bumper-to-bumper distance to the leader
    and ``dv`` the approach rate (own speed minus leader speed)."""
    r = v / v0
    if delta == 4.0:
        r2 = r * r
        rd = r2 * r2
    else:
        rd = r**delta
    s_star = s0 + np.maximum(0.0, v * headway + v * dv / (2.0 * np.sqrt(a_max * b_comf)))
    q = s_star / gap
    return a_max * (1.0 - rd - q * q)


def _idm_accel_loop(v, v0, gap, dv, a_max, b_comf, s0, headway, delta):
    out = np.empty(v.shape[0], dtype=np.float64)
    root = 2.0 * np.sqrt(a_max * b_comf)
    for i in range(v.shape[0]):
        r = v[i] / v0[i]
        if delta == 4.0:
            r2 = r * r
            rd = r2 * r2
        else:
            rd = r**delta
        inter = v[i] * headway + v[i] * dv[i] / root
        if inter < 0.0:
            inter = 0.0
        q = (s0 + inter) / gap[i]
        out[i] = a_max * (1.0 - rd - q * q)
    return out


# --------------------------------------------------------------------------
# vote tally: counts[row, col] += weight

def tally_numpy(rows, cols, weights, n_rows, n_cols):
    flat = rows * n_cols + cols
    out = np.bincount(flat, weights=weights, minlength=n_rows * n_cols)
    return out.astype(np.int64).reshape(n_rows, n_cols)


def _tally_loop(rows, cols, weights, n_rows, n_cols):
    out = np.zeros((n_rows, n_cols), dtype=np.int64)
    for i in range(rows.shape[0]):
        out[rows[i], cols[i]] += weights[i]
    return out


if HAVE_NUMBA:
    forward_pairs_numba = njit(cache=True)(_forward_pairs_loop)
    _idm_numba_inner = njit(cache=True)(_idm_accel_loop)
    _tally_numba_inner = njit(cache=True)(_tally_loop)

    def idm_accel_numba(v, v0, gap, dv, a_max, b_comf, s0, headway, delta=4.0):
        return _idm_numba_inner(
            v, v0, gap, dv, float(a_max), float(b_comf), float(s0), float(headway), float(delta)
        )

    def tally_numba(rows, cols, weights, n_rows, n_cols):
        return _tally_numba_inner(rows, cols, weights.astype(np.int64), int(n_rows), int(n_cols))

    forward_pairs = forward_pairs_numba
    idm_accel = idm_accel_numba
    tally = tally_numba
else:
    forward_pairs = forward_pairs_numpy
    idm_accel = idm_accel_numpy
    tally = tally_numpy

BACKEND = "numba" if HAVE_NUMBA else "numpy"
