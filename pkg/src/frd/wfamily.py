"""The polynomial spectral family ``W_t`` and its Chebyshev coefficients.

``W_t(lam)`` is the ``2 pi``-periodisation of ``theta -> phi(t theta)``
evaluated at ``theta = arccos(1 - lam / (2B))``. Here ``phi = kappa**2`` and
``kappa`` is the inverse Fourier transform of a smooth bump supported in
``[-1/2, 1/2]``. Because the Fourier transform of ``phi`` is supported in
``[-1, 1]``, the cosine series of the periodisation stops at frequency
``t``, so ``W_t`` is a polynomial of degree at most ``t`` in ``lam``.

Fourier convention: ``f_hat(w) = int f(x) exp(-i w x) dx``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial.legendre import leggauss

from . import kernels
from .matfn import SpectralSeries

# phi is below 1e-17 of its peak beyond this argument; tails past it are dropped
PHI_CUTOFF = 320.0


def bump(u):
    """Even bump ``exp(-1/(1-(2u)^2))`` on ``|u| < 1/2``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 0.5
    out[inside] = np.exp(-1.0 / (1.0 - (2.0 * u[inside]) ** 2))
    return out


_KAPPA_NODES = 600


@lru_cache(maxsize=1)
def _kappa_rule():
    xg, wg = leggauss(_KAPPA_NODES)
    u = 0.25 * (xg + 1.0)
    return u, 0.25 * wg * bump(u)


def kappa(x):
    """``(1/2pi) int bump(u) cos(u x) du`` by Gauss-Legendre quadrature."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u, w = _kappa_rule()
    out = np.empty(x.shape)
    flat = x.ravel()
    res = out.ravel()
    for s in range(0, flat.size, 4096):
        chunk = flat[s:s + 4096]
        res[s:s + 4096] = np.cos(np.outer(chunk, u)) @ w / np.pi
    return res.reshape(x.shape)


def phi(x):
    return kappa(x) ** 2


def phi_hat_direct(w, nodes=200):
    """Autocorrelation ``(1/2pi) int bump(u) bump(w-u) du``, direct quadrature."""
    w = np.abs(np.atleast_1d(np.asarray(w, dtype=float)))
    out = np.zeros(w.shape)
    xg, wg = leggauss(nodes)
    for i, wi in enumerate(w.ravel()):
        if wi >= 1.0:
            continue
        lo, hi = wi - 0.5, 0.5
        u = lo + (hi - lo) * 0.5 * (xg + 1.0)
        out.flat[i] = 0.5 * (hi - lo) * np.dot(wg, bump(u) * bump(wi - u)) / (2 * np.pi)
    return out


class PhiHatTable:
    """Piecewise Chebyshev interpolant of ``phi_hat`` on ``[0, 1]``.

    Parameters
    ----------
    panels : int
        Number of equal panels of ``[0, 1]``.
    degree : int
        Polynomial degree per panel.
    """

    def __init__(self, panels=64, degree=24):
        self.panels = panels
        self.degree = degree
        k = np.arange(degree + 1)
        nodes = np.cos(np.pi * (k + 0.5) / (degree + 1))
        table = np.empty((panels, degree + 1))
        h = 1.0 / panels
        for i in range(panels):
            w = (i + 0.5 * (nodes + 1.0)) * h
            table[i] = cheb.chebfit(nodes, phi_hat_direct(w), degree)
        self.table = table

    def __call__(self, w):
        w = np.abs(np.asarray(w, dtype=float))
        flat = w.ravel()
        out = np.zeros(flat.shape)
        inside = flat < 1.0
        wi = flat[inside]
        idx = np.minimum((wi * self.panels).astype(int), self.panels - 1)
        local = 2.0 * (wi * self.panels - idx) - 1.0
        out[inside] = kernels.clenshaw_rows(self.table[idx], local)
        return out.reshape(w.shape)


_PHI_HAT = None


def phi_hat(w):
    """Fourier transform of ``phi``; zero for ``|w| >= 1``."""
    global _PHI_HAT
    if _PHI_HAT is None:
        _PHI_HAT = PhiHatTable()
    return _PHI_HAT(w)


def phi_first_moment():
    """``int_0^inf u phi(u) du``, computed on the position side.

    Independent of the Chebyshev machinery; used as an oracle for the
    calibration constant.
    """
    edges = np.linspace(0.0, PHI_CUTOFF, 641)
    xg, wg = leggauss(40)
    a, b = edges[:-1, None], edges[1:, None]
    u = a + (b - a) * 0.5 * (xg + 1.0)
    return float(np.sum(0.5 * (b - a) * wg * u * phi(u)))


@dataclass
class ChebCoeffs:
    """Chebyshev coefficients of ``W_t`` in the variable ``1 - lam/(2B)``."""

    t: float
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != int(np.floor(self.t)) + 1:
            raise ValueError("coefficient count must be floor(t) + 1")


def raw_cheb_coeffs(t):
    """Coefficients of the unnormalised ``W_t``; ``c_j = 0`` for ``j >= t``."""
    if t <= 0:
        raise ValueError("t must be positive")
    j = np.arange(int(np.floor(t)) + 1)
    c = phi_hat(j / t) / (np.pi * t)
    c[0] *= 0.5
    return c


# ---------------------------------------------------------------------------
# integrals over t of t W_t

def _geometric_pieces(lo, hi, ratio=2.0):
    pts = [lo]
    while pts[-1] * ratio < hi:
        pts.append(pts[-1] * ratio)
    pts.append(hi)
    return pts


def integral_coefficients(a, b, nodes=24):
    """Raw coefficients of ``int_a^b t W_t dt``, one per Chebyshev degree.

    For degree ``j >= 1`` the integrand ``t c_j(t) = phi_hat(j/t)/pi`` vanishes
    for ``t <= j``, so each coefficient is integrated on ``[max(a, j), b]``,
    split geometrically and summed with Gauss-Legendre rules. The degree-0
    integrand is constant.
    """
    if b <= a:
        return np.zeros(1)
    jmax = int(np.ceil(b)) - 1 if float(b).is_integer() else int(np.floor(b))
    out = np.zeros(jmax + 1)
    out[0] = phi_hat(0.0) * (b - a) / (2 * np.pi)
    xg, wg = leggauss(nodes)
    ts, ws, js = [], [], []
    for j in range(1, jmax + 1):
        lo = max(a, float(j))
        if lo >= b:
            continue
        pts = _geometric_pieces(lo, b)
        for p0, p1 in zip(pts[:-1], pts[1:]):
            ts.append(p0 + (p1 - p0) * 0.5 * (xg + 1.0))
            ws.append(0.5 * (p1 - p0) * wg)
            js.append(np.full(nodes, j))
    if ts:
        t = np.concatenate(ts)
        w = np.concatenate(ws)
        jj = np.concatenate(js)
        vals = w * phi_hat(jj / t) / np.pi
        np.add.at(out, jj, vals)
    return out


def gauss_interval_coefficients(a, b, nodes):
    """Raw coefficients of ``int_a^b t W_t dt`` from one Gauss-Legendre rule
    with ``nodes`` points on ``[a, b]`` applied to the whole integrand."""
    xg, wg = leggauss(nodes)
    t = a + (b - a) * 0.5 * (xg + 1.0)
    w = 0.5 * (b - a) * wg
    out = np.zeros(int(np.floor(b)) + 1)
    for ti, wi in zip(t, w):
        c = raw_cheb_coeffs(ti)
        out[:len(c)] += wi * ti * c
    return out


def calibration_horizon(lam, B):
    """Upper ``t`` beyond which ``t W_t(lam)`` is negligible."""
    theta = np.arccos(1.0 - lam / (2.0 * B))
    return PHI_CUTOFF / theta


@dataclass
class WFamily:
    """Calibrated family ``W_t`` for a fixed spectral cap ``B``.

    Parameters
    ----------
    B : float
        Spectral cap, at least the largest symbol eigenvalue.
    lam_ref_fraction : float
        Calibration point ``lam_ref = lam_ref_fraction * B``.
    quadrature : {"per-coefficient", "gauss"}
        How scale integrals over ``t`` are discretised. ``"gauss"`` uses
        one Gauss-Legendre rule per scale interval with
        ``ceil(8 log2(L^k))`` nodes; ``"per-coefficient"`` integrates every
        Chebyshev coefficient separately on its own support.
    """

    B: float
    lam_ref_fraction: float = 0.1
    quadrature: str = "gauss"
    nodes: int = 24
    c_norm: float = field(init=False)

    def __post_init__(self):
        lam = self.lam_ref_fraction * self.B
        T = calibration_horizon(lam, self.B)
        coeffs = integral_coefficients(0.0, T, self.nodes)
        x = 1.0 - lam / (2.0 * self.B)
        self.c_norm = float(lam * kernels.clenshaw(coeffs, np.array([x]))[0])

    def cheb_coeffs(self, t):
        return ChebCoeffs(t, raw_cheb_coeffs(t) / self.c_norm)

    def w_eval(self, t, lam):
        """Normalised ``W_t(lam)`` by Clenshaw summation."""
        c = self.cheb_coeffs(t).coeffs
        return kernels.clenshaw(c, 1.0 - np.asarray(lam, dtype=float) / (2.0 * self.B))

    def w_direct(self, t, lam):
        """Normalised ``W_t(lam)`` from the periodised sum of ``phi``; an oracle."""
        theta = np.arccos(1.0 - np.asarray(lam, dtype=float) / (2.0 * self.B))
        nmax = int(np.ceil(PHI_CUTOFF / (2 * np.pi * t))) + 1
        total = np.zeros_like(theta)
        for n in range(-nmax, nmax + 1):
            total = total + phi(t * (theta - 2 * np.pi * n))
        return total / self.c_norm

    def scale_series(self, a, b, L=None, k=None):
        """Normalised ``int_a^b t W_t dt`` as a :class:`SpectralSeries`."""
        if self.quadrature == "gauss":
            nodes = int(np.ceil(8 * np.log2(float(L) ** k)))
            coeffs = gauss_interval_coefficients(a, b, nodes)
        else:
            coeffs = integral_coefficients(a, b, self.nodes)
        return SpectralSeries(coeffs / self.c_norm, self.B)

    def integral_series(self, lam):
        """Normalised ``int_0^T t W_t dt`` with ``T`` past the decay horizon of
        ``lam``; the exact value is ``1/lam``."""
        T = calibration_horizon(lam, self.B)
        return SpectralSeries(integral_coefficients(0.0, T, self.nodes) / self.c_norm, self.B)
