"""
Tridiagonal solver used by the Crank-Nicolson step.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def solve_tridiag(a, b, c, d):
    """
    Solve a tridiagonal system with the Thomas algorithm.

    The equivalent using scipy.linalg.solve_banded would be:

        ab = np.zeros((3, len(a)), dtype=complex)
        ab[0, 1:] = c[:-1]
        ab[1, :] = b
        ab[2, :-1] = a[1:]
        x = scipy.linalg.solve_banded((1, 1), ab, d)

    Args:
        a: Lower diagonal (0, a_2, ..., a_n)
        b: Main diagonal (b_1, ..., b_n)
        c: Upper diagonal (c_1, ..., c_{n-1}, 0)
        d: Right hand side

    Returns:
        Solution vector. A zero pivot yields inf/nan, which the caller checks.
    """
    n = len(d)
    bp = b.copy()
    dp = d.copy()

    for k in range(1, n):
        m = a[k] / bp[k - 1]
        bp[k] = bp[k] - m * c[k - 1]
        dp[k] = dp[k] - m * dp[k - 1]

    x = np.empty_like(dp)
    x[-1] = dp[-1] / bp[-1]
    for k in range(n - 2, -1, -1):
        x[k] = (dp[k] - c[k] * x[k + 1]) / bp[k]

    return x


def tridiag_matvec(a: np.ndarray, b: np.ndarray, c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multiply the tridiagonal matrix (a, b, c) by x."""
    y = b * x
    y[1:] += a[1:] * x[:-1]
    y[:-1] += c[:-1] * x[1:]
    return y
