"""Hot numeric kernels, with numba-jitted and pure-numpy variants.

The jitted path is the default; set BNNVERIFY_NO_NUMBA=1 to force the
numpy fallback (useful for debugging and for the kernel benchmark).
Both variants are kept importable so tests can check parity.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("BNNVERIFY_NO_NUMBA", "") == ""

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _pivot_np(tableau, prow, pcol):
    """Gauss-Jordan pivot: normalize prow on pcol, eliminate pcol elsewhere."""
    piv = tableau[prow, pcol]
    tableau[prow, :] /= piv
    col = tableau[:, pcol].copy()
    col[prow] = 0.0
    tableau -= np.outer(col, tableau[prow, :])
    tableau[:, pcol] = 0.0
    tableau[prow, pcol] = 1.0


def _affine_interval_np(weights, bias, lo, hi):
    """Interval image of x -> W x + b over the box [lo, hi].

    Zero weights contribute nothing even against infinite bounds
    (avoids 0 * inf = nan).
    """
    wp = np.where(weights > 0.0, weights, 0.0)
    wn = np.where(weights < 0.0, weights, 0.0)
    with np.errstate(invalid="ignore"):
        lo_terms = np.where(wp != 0.0, wp * lo, 0.0) + np.where(
            wn != 0.0, wn * hi, 0.0
        )
        hi_terms = np.where(wp != 0.0, wp * hi, 0.0) + np.where(
            wn != 0.0, wn * lo, 0.0
        )
    out_lo = lo_terms.sum(axis=1) + bias
    out_hi = hi_terms.sum(axis=1) + bias
    return out_lo, out_hi


if USE_NUMBA:

    @njit(cache=True)
    def _pivot_nb(tableau, prow, pcol):
        m, n = tableau.shape
        piv = tableau[prow, pcol]
        for j in range(n):
            tableau[prow, j] /= piv
        for i in range(m):
            if i == prow:
                continue
            factor = tableau[i, pcol]
            if factor != 0.0:
                for j in range(n):
                    tableau[i, j] -= factor * tableau[prow, j]
        for i in range(m):
            tableau[i, pcol] = 0.0
        tableau[prow, pcol] = 1.0

    @njit(cache=True)
    def _affine_interval_nb(weights, bias, lo, hi):
        m, n = weights.shape
        out_lo = np.empty(m)
        out_hi = np.empty(m)
        for i in range(m):
            acc_lo = bias[i]
            acc_hi = bias[i]
            for j in range(n):
                w = weights[i, j]
                if w > 0.0:
                    acc_lo += w * lo[j]
                    acc_hi += w * hi[j]
                elif w < 0.0:
                    acc_lo += w * hi[j]
                    acc_hi += w * lo[j]
            out_lo[i] = acc_lo
            out_hi[i] = acc_hi
        return out_lo, out_hi

    pivot = _pivot_nb
    affine_interval = _affine_interval_nb
else:
    _pivot_nb = None
    _affine_interval_nb = None
    pivot = _pivot_np
    affine_interval = _affine_interval_np
