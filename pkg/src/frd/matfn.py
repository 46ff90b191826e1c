"""Functions of Hermitian matrices and their directional derivatives.

Scalar functions are objects with ``value(x)`` and ``derivative(x, order)``.
Matrix functions act through the eigendecomposition, and directional
derivatives use the Daleckii-Krein formula with divided differences of the
eigenvalues. Everything is batched over leading axes.
"""

import numpy as np
from numpy.polynomial import chebyshev as cheb

from . import kernels

DEGENERACY_RTOL = 1e-7


class ScalarFunction:
    """Base class; subclasses implement :meth:`value` and :meth:`derivative`."""

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x, order):
        raise NotImplementedError


class Power(ScalarFunction):
    def __init__(self, k):
        self.k = k

    def value(self, x):
        return np.asarray(x, dtype=float) ** self.k

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        coef = 1.0
        for i in range(order):
            coef *= self.k - i
        if coef == 0.0:
            return np.zeros_like(x)
        return coef * x ** (self.k - order)


class Sqrt(ScalarFunction):
    def value(self, x):
        return np.sqrt(np.clip(x, 0.0, None))

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return 0.5 / np.sqrt(x)
        if order == 2:
            return -0.25 * x ** -1.5
        raise ValueError("order must be 1 or 2")


class Exp(ScalarFunction):
    def value(self, x):
        return np.exp(x)

    def derivative(self, x, order):
        return np.exp(x)


class SpectralSeries(ScalarFunction):
    """``f(lam) = r / lam + sum_j a_j T_j(1 - lam / (2 B))``.

    This class carries every scale function of the decompositions: the
    Chebyshev part is a polynomial in ``lam`` and the optional pole term
    represents the inverse.
    """

    def __init__(self, coeffs, B, pole=0.0):
        self.coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if self.coeffs.size == 0:
            self.coeffs = np.zeros(1)
        self.B = float(B)
        self.pole = float(pole)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def _x(self, lam):
        return 1.0 - np.asarray(lam, dtype=float) / (2.0 * self.B)

    def value(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = kernels.clenshaw(self.coeffs, self._x(lam))
        if self.pole:
            out = out + self.pole / lam
        return out

    def polynomial_part(self, lam):
        return kernels.clenshaw(self.coeffs, self._x(lam))

    def derivative(self, lam, order):
        lam = np.asarray(lam, dtype=float)
        if order == 0:
            return self.value(lam)
        dc = cheb.chebder(self.coeffs, order) if self.degree >= order else np.zeros(1)
        out = kernels.clenshaw(dc, self._x(lam)) * (-0.5 / self.B) ** order
        if self.pole:
            sign = -1.0 if order % 2 else 1.0
            fact = float(np.prod(np.arange(1, order + 1)))
            out = out + self.pole * sign * fact / lam ** (order + 1)
        return out

    def __add__(self, other):
        if self.B != other.B:
            raise ValueError("series use different caps")
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[:len(self.coeffs)] += self.coeffs
        a[:len(other.coeffs)] += other.coeffs
        return SpectralSeries(a, self.B, self.pole + other.pole)

    def __mul__(self, c):
        return SpectralSeries(self.coeffs * c, self.B, self.pole * c)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + other * (-1.0)

    @staticmethod
    def combine(weights, series, B):
        """Linear combination ``sum_i weights[i] * series[i]``."""
        n = max(len(s.coeffs) for s in series)
        a = np.zeros(n)
        pole = 0.0
        for w, s in zip(weights, series):
            a[:len(s.coeffs)] += w * s.coeffs
            pole += w * s.pole
        return SpectralSeries(a, B, pole)


def inverse_series(B):
    return SpectralSeries([0.0], B, pole=1.0)


# ---------------------------------------------------------------------------
# matrix functions

def _eigh(H):
    H = np.asarray(H)
    mu, U = np.linalg.eigh(H)
    return mu, U


def mat_fn(H, f):
    """``U diag(f(mu)) U^*`` for Hermitian ``H`` (batched over leading axes)."""
    mu, U = _eigh(H)
    fm = f.value(mu) if isinstance(f, ScalarFunction) else f(mu)
    return (U * fm[..., None, :]) @ U.conj().swapaxes(-1, -2)


def mat_fn_from_eig(mu, U, f):
    fm = f.value(mu)
    return (U * fm[..., None, :]) @ U.conj().swapaxes(-1, -2)


def mat_fn_deriv(H, direction, f, order, eig=None, rtol=DEGENERACY_RTOL):
    """Directional derivative ``d^order/ds^order f(H + s direction)`` at ``s = 0``.

    Parameters
    ----------
    H, direction : ndarray, shape (..., m, m)
        Hermitian base point and Hermitian direction.
    f : ScalarFunction
    order : {1, 2}
    eig : tuple, optional
        Precomputed ``(mu, U)`` of ``H``.

    Notes
    -----
    Eigenvalues closer than ``rtol * (1 + |mu|)`` are treated as equal and
    the divided difference falls back to the matching derivative of ``f``.
    """
    H = np.asarray(H)
    mu, U = eig if eig is not None else _eigh(H)
    lead = mu.shape[:-1]
    m = mu.shape[-1]
    mu2 = mu.reshape(-1, m)
    Uf = U.reshape(-1, m, m)
    Bt = Uf.conj().swapaxes(-1, -2) @ np.asarray(direction).reshape(-1, m, m) @ Uf
    fv = f.value(mu2)
    f1 = f.derivative(mu2, 1)
    if order == 1:
        G = kernels.loewner1(mu2, fv, f1, rtol)
        inner = Bt * G
    elif order == 2:
        f2 = f.derivative(mu2, 2)
        G2 = kernels.loewner2(mu2, fv, f1, f2, rtol)
        inner = 2.0 * np.einsum("pik,pkj,pikj->pij", Bt, Bt, G2)
    else:
        raise ValueError("order must be 1 or 2")
    out = Uf @ inner @ Uf.conj().swapaxes(-1, -2)
    return out.reshape(lead + (m, m))


def verify_matfn_bound(H, direction, f, order, n_grid=257):
    """Ratio ``|D^order f(H)[direction]| / (sup |f^(order)| |direction|^order)``.

    The supremum runs over the interval spanned by the eigenvalues of each
    ``H``, sampled at ``n_grid`` points. Returns one ratio per matrix in the
    batch; the largest ratio over an ensemble is the fitted combinatorial
    constant.
    """
    H = np.asarray(H)
    D = mat_fn_deriv(H, direction, f, order)
    lhs = np.linalg.norm(D, 2, axis=(-2, -1))
    mu = np.linalg.eigvalsh(H)
    s = np.linspace(0.0, 1.0, n_grid)
    grid = mu[..., :1] + (mu[..., -1:] - mu[..., :1]) * s
    sup = np.max(np.abs(f.derivative(grid, order)), axis=-1)
    dn = np.linalg.norm(direction, 2, axis=(-2, -1))
    rhs = sup * dn ** order
    return np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
