"""Hot numerical kernels with a compiled and a pure-numpy implementation.

The compiled versions use numba and are selected by default when numba
imports. Setting the environment variable ``FRD_DISABLE_NUMBA=1`` forces
the numpy versions. Both implementations perform the same floating point
operations in the same order, so results agree bit for bit on one machine.
"""

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def numba_enabled():
    flag = os.environ.get("FRD_DISABLE_NUMBA", "").strip().lower()
    return _HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# Clenshaw summation of Chebyshev series

def clenshaw_numpy(coeffs, x):
    """Evaluate sum_j coeffs[j] T_j(x) for an array of points."""
    x = np.asarray(x, dtype=float)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for c in coeffs[:0:-1]:
        b1, b2 = 2.0 * x * b1 - b2 + c, b1
    return x * b1 - b2 + coeffs[0]


def clenshaw_rows_numpy(table, x):
    """Evaluate a separate Chebyshev series per point.

    ``table[i]`` holds the coefficients used at ``x[i]``.
    """
    x = np.asarray(x, dtype=float)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for j in range(table.shape[1] - 1, 0, -1):
        b1, b2 = 2.0 * x * b1 - b2 + table[:, j], b1
    return x * b1 - b2 + table[:, 0]


def _clenshaw_loop(coeffs, x):
    out = np.empty(x.shape[0])
    n = coeffs.shape[0]
    for i in range(x.shape[0]):
        xi = x[i]
        b1 = 0.0
        b2 = 0.0
        for j in range(n - 1, 0, -1):
            b1, b2 = 2.0 * xi * b1 - b2 + coeffs[j], b1
        out[i] = xi * b1 - b2 + coeffs[0]
    return out


def _clenshaw_rows_loop(table, x):
    out = np.empty(x.shape[0])
    n = table.shape[1]
    for i in range(x.shape[0]):
        xi = x[i]
        b1 = 0.0
        b2 = 0.0
        for j in range(n - 1, 0, -1):
            b1, b2 = 2.0 * xi * b1 - b2 + table[i, j], b1
        out[i] = xi * b1 - b2 + table[i, 0]
    return out


# ---------------------------------------------------------------------------
# Loewner (divided difference) matrices

def loewner1_numpy(mu, f, fp, rtol):
    """First divided differences f[mu_i, mu_j], shape (P, m, m)."""
    a = mu[:, :, None]
    b = mu[:, None, :]
    diff = a - b
    close = np.abs(diff) < rtol * (1.0 + np.maximum(np.abs(a), np.abs(b)))
    safe = np.where(close, 1.0, diff)
    quot = (f[:, :, None] - f[:, None, :]) / safe
    avg = 0.5 * (fp[:, :, None] + fp[:, None, :])
    return np.where(close, avg, quot)


def loewner2_numpy(mu, f, fp, fpp, rtol):
    """Second divided differences f[mu_i, mu_k, mu_j], shape (P, m, m, m)."""
    d1 = loewner1_numpy(mu, f, fp, rtol)
    a = mu[:, :, None, None]
    b = mu[:, None, :, None]
    c = mu[:, None, None, :]
    scale = 1.0 + np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(c))
    ac_close = np.abs(a - c) < rtol * scale
    ab_close = np.abs(a - b) < rtol * scale
    d_ab = d1[:, :, :, None]
    d_bc = d1[:, None, :, :]
    # generic case
    generic = (d_ab - d_bc) / np.where(ac_close, 1.0, a - c)
    # a close to c, b apart
    fpa = fp[:, :, None, None]
    fpc = fp[:, None, None, :]
    pair = (d_ab - 0.5 * (fpa + fpc)) / np.where(ab_close, 1.0, b - a)
    fppa = fpp[:, :, None, None]
    fppb = fpp[:, None, :, None]
    fppc = fpp[:, None, None, :]
    triple = (fppa + fppb + fppc) / 6.0
    out = np.where(ac_close, np.where(ab_close, triple, pair), generic)
    return out


def _loewner1_loop(mu, f, fp, rtol):
    P, m = mu.shape
    out = np.empty((P, m, m))
    for p in range(P):
        for i in range(m):
            for j in range(m):
                a = mu[p, i]
                b = mu[p, j]
                if abs(a - b) < rtol * (1.0 + max(abs(a), abs(b))):
                    out[p, i, j] = 0.5 * (fp[p, i] + fp[p, j])
                else:
                    out[p, i, j] = (f[p, i] - f[p, j]) / (a - b)
    return out


def _loewner2_loop(mu, d1, fp, fpp, rtol):
    P, m = mu.shape
    out = np.empty((P, m, m, m))
    for p in range(P):
        for i in range(m):
            for k in range(m):
                for j in range(m):
                    a = mu[p, i]
                    b = mu[p, k]
                    c = mu[p, j]
                    scale = 1.0 + max(max(abs(a), abs(b)), abs(c))
                    if abs(a - c) < rtol * scale:
                        if abs(a - b) < rtol * scale:
                            out[p, i, k, j] = (fpp[p, i] + fpp[p, k] + fpp[p, j]) / 6.0
                        else:
                            out[p, i, k, j] = (d1[p, i, k] - 0.5 * (fp[p, i] + fp[p, j])) / (b - a)
                    else:
                        out[p, i, k, j] = (d1[p, i, k] - d1[p, k, j]) / (a - c)
    return out


if _HAVE_NUMBA:
    clenshaw_numba = numba.njit(cache=True)(_clenshaw_loop)
    clenshaw_rows_numba = numba.njit(cache=True)(_clenshaw_rows_loop)
    loewner1_numba = numba.njit(cache=True)(_loewner1_loop)
    loewner2_numba = numba.njit(cache=True)(_loewner2_loop)
else:  # pragma: no cover
    clenshaw_numba = clenshaw_rows_numba = None
    loewner1_numba = loewner2_numba = None


# ---------------------------------------------------------------------------
# dispatch

def clenshaw(coeffs, x):
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    if coeffs.size == 0:
        return np.zeros_like(x)
    if numba_enabled():
        flat = np.ascontiguousarray(x.ravel())
        return clenshaw_numba(coeffs, flat).reshape(x.shape)
    return clenshaw_numpy(coeffs, x)


def clenshaw_rows(table, x):
    table = np.ascontiguousarray(table, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    if numba_enabled():
        return clenshaw_rows_numba(table, x)
    return clenshaw_rows_numpy(table, x)


def loewner1(mu, f, fp, rtol=1e-7):
    args = [np.ascontiguousarray(v, dtype=float) for v in (mu, f, fp)]
    if numba_enabled():
        return loewner1_numba(*args, float(rtol))
    return loewner1_numpy(*args, rtol)


def loewner2(mu, f, fp, fpp, rtol=1e-7):
    args = [np.ascontiguousarray(v, dtype=float) for v in (mu, f, fp, fpp)]
    if numba_enabled():
        d1 = loewner1_numba(args[0], args[1], args[2], float(rtol))
        return loewner2_numba(args[0], d1, args[2], args[3], float(rtol))
    return loewner2_numpy(*args, rtol)
