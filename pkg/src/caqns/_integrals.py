"""Ordered-simplex integrals used by the exact and sampled spectrum oracles."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm


def simplex_exp_integral(b) -> complex:
    """Integral of ``exp(sum_j b_j s_j)`` over ``1 >= s_1 >= ... >= s_m >= 0``.

    The value is the divided difference of ``exp`` on the nodes
    ``0, b_1, b_1 + b_2, ...``. It is read off the corner of the exponential
    of a bidiagonal matrix, which stays accurate when nodes coincide.
    """
    b = np.asarray(b, dtype=complex)
    m = b.size
    if m == 0:
        return 1.0 + 0j
    nodes = np.concatenate([[0.0], np.cumsum(b)])
    A = np.diag(nodes) + np.diag(np.ones(m), 1)
    return complex(expm(A)[0, m])


def window_group_integral(rates, lo: float, width: float) -> complex:
    """Ordered integral of ``exp(sum a_j t_j)`` with all times in ``[lo, lo + width)``."""
    rates = np.asarray(rates, dtype=complex)
    m = rates.size
    return complex(np.exp(lo * rates.sum()) * width**m * simplex_exp_integral(rates * width))


def chen_ordered_integral(values: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Ordered integrals of a word of piecewise-constant functions.

    Parameters
    ----------
    values : ndarray, shape (nseg, m)
        ``values[s, j]`` is the value of the function in slot ``j`` on segment
        ``s``. Segments are listed in increasing time and slot 0 holds the
        latest time.
    lengths : ndarray, shape (nseg,)
        Segment durations.

    Returns
    -------
    ndarray, shape (m + 1,)
        Entry ``j`` is the ordered integral of the suffix word ``j..m-1``;
        entry 0 is the full word.
    """
    values = np.asarray(values)
    nseg, m = values.shape
    D = np.zeros(m + 1, dtype=values.dtype if np.iscomplexobj(values) else float)
    D[m] = 1.0
    for s in range(nseg):
        h = lengths[s]
        if h <= 0:
            continue
        v = values[s]
        new = D.copy()
        # slots j..jp-1 all fall inside this segment
        for j in range(m - 1, -1, -1):
            acc = 0.0
            prod = 1.0
            for jp in range(j + 1, m + 1):
                prod = prod * v[jp - 1] * h / (jp - j)
                acc = acc + D[jp] * prod
            new[j] = D[j] + acc
        D = new
    return D


def power_over_factorial(x, m: int):
    return x**m / math.factorial(m)
