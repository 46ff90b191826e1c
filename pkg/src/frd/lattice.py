"""Periodic lattice geometry, Fourier transforms and difference operators.

Sites of the torus with side ``L**N`` are stored in numpy arrays indexed by
their residues ``0 .. side-1`` along each axis, followed by the component
axes. A field therefore has shape ``(side,)*d + (m,)`` and a matrix kernel
``(side,)*d + (m, m)``. Dual points use the same residue indexing, with
index ``a`` standing for the momentum ``2*pi*a'/side`` where ``a'`` is the
centered representative of ``a``. This is the ordering used by ``np.fft``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class TorusGeometry:
    """Discrete torus of side ``L**N`` in ``d`` dimensions with ``m`` components."""

    L: int
    N: int
    d: int
    m: int = 1

    def __post_init__(self):
        if self.L < 3 or self.L % 2 == 0:
            raise ValueError("L must be odd and at least 3, got %r" % (self.L,))
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be positive")

    @property
    def side(self):
        return self.L ** self.N

    @property
    def volume(self):
        return self.side ** self.d

    @property
    def shape(self):
        return (self.side,) * self.d

    def coarse(self, nbar):
        """Geometry of the quotient torus of side ``L**nbar``."""
        if not 1 <= nbar <= self.N:
            raise ValueError("coarse level must lie in 1..N")
        return TorusGeometry(self.L, nbar, self.d, self.m)

    def coordinates(self):
        """Centered coordinates of every site, shape ``shape + (d,)``."""
        c = centered(np.arange(self.side), self.side)
        grids = np.meshgrid(*([c] * self.d), indexing="ij")
        return np.stack(grids, axis=-1)

    def momenta(self):
        """Dual points ``2*pi*a/side`` with centered ``a``, shape ``shape + (d,)``."""
        return 2.0 * np.pi * self.coordinates() / self.side

    def sup_distance(self):
        """Wrapped sup-norm distance of every site from the origin."""
        return np.abs(self.coordinates()).max(axis=-1)

    def index(self, x):
        """Array index of a site given by integer coordinates (any representative)."""
        return tuple(int(v) % self.side for v in x)


def centered(a, side):
    """Map residues to the window ``-(side-1)/2 .. (side-1)/2``."""
    a = np.asarray(a) % side
    return np.where(a > (side - 1) // 2, a - side, a)


def wrap(geometry, x):
    """Canonical centered representative of a site."""
    return tuple(int(v) for v in centered(np.asarray(x), geometry.side))


def sup_norm(geometry, x):
    return int(np.max(np.abs(wrap(geometry, x))))


# ---------------------------------------------------------------------------
# separable Fourier transform

@lru_cache(maxsize=32)
def dft_matrix(side):
    """Dense matrix ``F[a, x] = exp(-2 pi i a x / side)``.

    The phase is reduced modulo ``side`` before the exponential so that all
    entries are accurate to a few ulps regardless of the side length.
    """
    a = np.arange(side)
    phase = np.outer(a, a) % side
    F = np.exp(-2j * np.pi * phase / side)
    F.setflags(write=False)
    return F


def _apply_along_axes(mat, values, d):
    out = values
    for ax in range(d):
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [ax])), 0, ax)
    return out


def dft(values, geometry):
    """Forward transform ``sum_x exp(-i p.x) values[x]`` over the torus axes."""
    return _apply_along_axes(dft_matrix(geometry.side), np.asarray(values), geometry.d)


def idft(values, geometry):
    """Inverse of :func:`dft`, ``(1/V) sum_p exp(i p.x) values[p]``."""
    F = dft_matrix(geometry.side).conj() / geometry.side
    return _apply_along_axes(F, np.asarray(values), geometry.d)


def convolve(a, b, geometry):
    """Torus convolution ``(a*b)(x) = sum_y a(x-y) b(y)`` of matrix kernels or
    of a kernel with a field, evaluated through the transform."""
    ah = dft(a, geometry)
    bh = dft(b, geometry)
    if bh.ndim == geometry.d + 1:
        ch = np.einsum("...rs,...s->...r", ah, bh)
    else:
        ch = ah @ bh
    out = idft(ch, geometry)
    if np.isrealobj(a) and np.isrealobj(b):
        return out.real
    return out


# ---------------------------------------------------------------------------
# finite differences

def forward_diff(field, axis):
    """``phi(x + e_axis) - phi(x)``."""
    return np.roll(field, -1, axis=axis) - field


def backward_diff(field, axis):
    """``phi(x - e_axis) - phi(x)``, the adjoint of :func:`forward_diff`."""
    return np.roll(field, 1, axis=axis) - field


def multi_diff(field, alpha):
    """Apply ``prod_j forward_diff_j ** alpha[j]``."""
    out = field
    for axis, power in enumerate(alpha):
        for _ in range(int(power)):
            out = forward_diff(out, axis)
    return out


def multi_diff_adjoint(field, alpha):
    out = field
    for axis, power in enumerate(alpha):
        for _ in range(int(power)):
            out = backward_diff(out, axis)
    return out


# ---------------------------------------------------------------------------
# annuli of the dual torus

def annulus_of(p_norm, L, N):
    """Scale index ``j`` with ``L**(-j-1) < |p| <= L**(-j)``, clipped to ``0..N``.

    ``j = 0`` collects every ``|p| > 1/L``.
    """
    if p_norm <= 0:
        raise ValueError("the zero mode has no annulus")
    if p_norm > 1.0 / L:
        return 0
    j = int(np.floor(-np.log(p_norm) / np.log(L)))
    while j > 0 and p_norm > float(L) ** (-j):
        j -= 1
    while p_norm <= float(L) ** (-j - 1):
        j += 1
    return min(j, N)


def annulus_index(geometry):
    """Annulus index of every dual point; the zero mode gets ``-1``."""
    pn = np.linalg.norm(geometry.momenta(), axis=-1)
    out = np.full(pn.shape, -1, dtype=int)
    for idx in zip(*np.nonzero(pn > 0)):
        out[idx] = annulus_of(pn[idx], geometry.L, geometry.N)
    return out


def annulus_constant(geometry):
    """Fitted ``kappa`` with ``#A_j <= kappa * L**((N-j) d)`` for all ``j``."""
    idx = annulus_index(geometry)
    L, N, d = geometry.L, geometry.N, geometry.d
    ratios = [np.sum(idx == j) / float(L) ** ((N - j) * d) for j in range(N + 1)]
    return max(ratios)


# ---------------------------------------------------------------------------
# quotient maps between tori

def coarse_project(geometry, nbar, x):
    """Image of a fine site on the torus of side ``L**nbar``."""
    return wrap(geometry.coarse(nbar), x)


def pullback(coarse_field, geometry):
    """Periodic extension ``(tau phi)(x) = phi(pi(x))`` to the fine torus."""
    coarse_side = coarse_field.shape[0]
    reps = geometry.side // coarse_side
    tiles = (reps,) * geometry.d + (1,) * (coarse_field.ndim - geometry.d)
    return np.tile(coarse_field, tiles)


def fiber_sum(fine_field, geometry, nbar):
    """Adjoint of :func:`pullback`, summing over each fiber of the projection."""
    cs = geometry.L ** nbar
    reps = geometry.side // cs
    d = geometry.d
    rest = fine_field.shape[d:]
    shaped = fine_field.reshape(sum(((reps, cs) for _ in range(d)), ()) + rest)
    return shaped.sum(axis=tuple(2 * i for i in range(d)))
