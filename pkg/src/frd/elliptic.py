"""Elliptic multi-index generators, their Fourier symbols and Green kernels."""

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import lattice


@dataclass(frozen=True)
class MultiIndexSet:
    """Ordered set of nonzero multi-indices containing every unit vector.

    Indices are kept in lexicographic order; this order fixes the block
    layout of generators and the column order of symbol vectors.
    """

    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted({tuple(int(v) for v in a) for a in self.indices}))
        if not idx:
            raise ValueError("empty multi-index set")
        d = len(idx[0])
        if any(len(a) != d for a in idx):
            raise ValueError("multi-indices of mixed dimension")
        if any(min(a) < 0 or sum(a) == 0 for a in idx):
            raise ValueError("multi-indices must be nonzero and nonnegative")
        for j in range(d):
            e = tuple(1 if i == j else 0 for i in range(d))
            if e not in idx:
                raise ValueError("the set must contain every unit vector")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def nearest_neighbour(cls, d):
        return cls(tuple(tuple(1 if i == j else 0 for i in range(d)) for j in range(d)))

    @property
    def d(self):
        return len(self.indices[0])

    @property
    def order(self):
        """Largest total order ``R``."""
        return max(sum(a) for a in self.indices)

    def __len__(self):
        return len(self.indices)

    def gradient_positions(self):
        return [i for i, a in enumerate(self.indices) if sum(a) == 1]


def q_vector(momenta, index_set):
    """``q(p)**alpha`` for every dual point and every multi-index.

    Parameters
    ----------
    momenta : ndarray, shape (..., d)
    index_set : MultiIndexSet

    Returns
    -------
    ndarray, complex, shape (..., |M|)
    """
    q = np.exp(1j * np.asarray(momenta)) - 1.0
    cols = []
    for a in index_set.indices:
        v = np.ones(q.shape[:-1], dtype=complex)
        for j, power in enumerate(a):
            if power:
                v = v * q[..., j] ** power
        cols.append(v)
    return np.stack(cols, axis=-1)


@dataclass
class Generator:
    """Constant coefficient operator ``sum (nabla^a)* A_ab nabla^b``.

    ``blocks`` has shape ``(|M|, |M|, m, m)``; the associated matrix is the
    ``|M| m`` square with row index ``a*m + r``.
    """

    index_set: MultiIndexSet
    blocks: np.ndarray
    omega0: float
    Omega0: float
    name: str = ""

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=float)
        n = len(self.index_set)
        if self.blocks.ndim != 4 or self.blocks.shape[:2] != (n, n):
            raise ValueError("blocks must have shape (|M|, |M|, m, m)")
        if self.blocks.shape[2] != self.blocks.shape[3]:
            raise ValueError("blocks must be square")

    @property
    def m(self):
        return self.blocks.shape[2]

    @property
    def d(self):
        return self.index_set.d

    def matrix(self):
        n, m = len(self.index_set), self.m
        return self.blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)

    @classmethod
    def from_matrix(cls, index_set, mat, m, omega0, Omega0, name=""):
        n = len(index_set)
        blocks = np.asarray(mat, dtype=float).reshape(n, m, n, m).transpose(0, 2, 1, 3)
        return cls(index_set, blocks.copy(), omega0, Omega0, name)

    def norm(self):
        return float(np.linalg.norm(self.matrix(), 2))

    def gradient_projector(self):
        n, m = len(self.index_set), self.m
        diag = np.zeros(n * m)
        for a in self.index_set.gradient_positions():
            diag[a * m:(a + 1) * m] = 1.0
        return np.diag(diag)

    def ellipticity_margin(self):
        """Smallest eigenvalue of ``G - omega0 P``; nonnegative iff the lower
        form bound holds for every vector."""
        G = self.matrix()
        return float(np.linalg.eigvalsh(G - self.omega0 * self.gradient_projector())[0])

    def validate(self, tol=1e-12, samples=0, seed=0):
        """Check symmetry, the norm bound and the lower form bound.

        Raises ``ValueError`` describing the first violated property.
        """
        G = self.matrix()
        scale = max(1.0, np.abs(G).max())
        if np.abs(G - G.T).max() > tol * scale:
            raise ValueError("generator is not symmetric")
        if self.norm() > self.Omega0 * (1 + tol):
            raise ValueError("generator norm exceeds Omega0")
        if self.ellipticity_margin() < -tol * scale:
            raise ValueError("lower form bound fails")
        if samples:
            rng = np.random.default_rng(seed)
            P = self.gradient_projector()
            z = rng.standard_normal((samples, G.shape[0]))
            lhs = np.einsum("si,ij,sj->s", z, G, z)
            rhs = self.omega0 * np.einsum("si,ij,sj->s", z, P, z)
            if np.any(lhs < rhs - tol * scale * np.sum(z * z, axis=1)):
                raise ValueError("lower form bound fails on a sampled vector")
        return True

    def scaled(self, factor):
        return Generator(self.index_set, self.blocks * factor, self.omega0, self.Omega0, self.name)

    def __add__(self, other):
        return Generator(self.index_set, self.blocks + other.blocks, self.omega0, self.Omega0)


def laplacian(d, m=1, index_set=None, omega0=1.0, Omega0=1.0):
    """Generator of ``sum_j (nabla_j)* nabla_j`` acting on each component."""
    index_set = index_set or MultiIndexSet.nearest_neighbour(d)
    n = len(index_set)
    blocks = np.zeros((n, n, m, m))
    for a in index_set.gradient_positions():
        blocks[a, a] = np.eye(m)
    return Generator(index_set, blocks, omega0, Omega0, "laplacian")


def anisotropic(index_set, m, omega0, Omega0):
    """Diagonal generator with unit-vector weights spread over ``[omega0, Omega0]``."""
    d = index_set.d
    n = len(index_set)
    blocks = np.zeros((n, n, m, m))
    weights = np.linspace(omega0, Omega0, d)
    for pos, a in enumerate(index_set.indices):
        if sum(a) == 1:
            blocks[pos, pos] = weights[a.index(1)] * np.eye(m)
    return Generator(index_set, blocks, omega0, Omega0, "anisotropic")


def random_generator(index_set, m, omega0, Omega0, rng, strength=0.5):
    """Random element of the elliptic class ``L(M, omega0, Omega0)``.

    Built as ``omega0 P + a P + b Z Z^T / |Z Z^T|`` with ``a + b`` at most
    ``Omega0 - omega0`` so that both form bounds hold by construction.
    """
    if Omega0 <= omega0:
        raise ValueError("need Omega0 > omega0")
    n = len(index_set)
    dim = n * m
    room = Omega0 - omega0
    a = room * rng.uniform(0.1, 1.0 - strength)
    b = room * strength * rng.uniform(0.2, 1.0)
    Z = rng.standard_normal((dim, dim))
    S = Z @ Z.T
    S /= np.linalg.norm(S, 2)
    base = laplacian(index_set.d, m, index_set, omega0, Omega0)
    P = base.gradient_projector()
    G = (omega0 + a) * P + b * S
    G = 0.5 * (G + G.T)
    return Generator.from_matrix(index_set, G, m, omega0, Omega0, "random")


def random_direction(index_set, m, rng):
    """Random symmetric direction of unit operator norm."""
    dim = len(index_set) * m
    Z = rng.standard_normal((dim, dim))
    S = 0.5 * (Z + Z.T)
    S /= np.linalg.norm(S, 2)
    return Generator.from_matrix(index_set, S, m, 0.0, 1.0, "direction")


# ---------------------------------------------------------------------------
# symbols

def symbol(gen, geometry, momenta=None):
    """Fourier symbol ``sum conj(q^a) q^b A_ab`` at every dual point.

    Returns an array of shape ``geometry.shape + (m, m)`` (or the leading
    shape of ``momenta`` when given).
    """
    if momenta is None:
        momenta = geometry.momenta()
    v = q_vector(momenta, gen.index_set)
    return np.einsum("...a,...b,abrs->...rs", v.conj(), v, gen.blocks)


def apply_operator(gen, field_values):
    """Position-space action on a field of shape ``shape + (m,)``."""
    diffs = [lattice.multi_diff(field_values, a) for a in gen.index_set.indices]
    out = np.zeros_like(field_values, dtype=float)
    for ia, a in enumerate(gen.index_set.indices):
        acc = np.zeros_like(field_values, dtype=float)
        for ib in range(len(gen.index_set)):
            acc = acc + np.einsum("rs,...s->...r", gen.blocks[ia, ib], diffs[ib])
        out = out + lattice.multi_diff_adjoint(acc, a)
    return out


def symbol_cap(index_set, Omega0, d, kind="tight", geometry=None):
    """Upper bound ``B`` for the spectrum of every symbol in the class.

    ``kind="generic"`` returns ``pi**2 d Omega`` with the crude constant
    ``Omega = Omega0 |M| (d pi**2)**(d R)``. ``kind="tight"`` returns
    ``Omega0 * max_p sum_a |q(p)^a|**2``, maximised over all of ``[-pi, pi]^d``
    on a fine grid, which is sharper and still independent of the generator.
    """
    if kind == "generic":
        big = Omega0 * len(index_set) * (d * np.pi ** 2) ** (d * index_set.order)
        return float(np.pi ** 2 * d * big)
    if kind != "tight":
        raise ValueError("unknown spectral cap %r" % (kind,))
    # |q_j|^2 = 2 - 2 cos p_j is maximal at p_j = pi for every monomial
    p = np.full(d, np.pi)
    v = q_vector(p, index_set)
    return float(Omega0 * np.sum(np.abs(v) ** 2))


def symbol_eigenvalues(gen, geometry):
    return np.linalg.eigvalsh(symbol(gen, geometry))


def green_spectral(gen, geometry):
    """Spectral kernel of the inverse on the zero-mean subspace.

    Raises ``ValueError`` when a nonzero mode violates the lower symbol bound.
    """
    A = symbol(gen, geometry)
    pn2 = np.sum(geometry.momenta() ** 2, axis=-1)
    lam = np.linalg.eigvalsh(A)[..., 0]
    omega = 4.0 * gen.omega0 / np.pi ** 2
    bad = (pn2 > 0) & (lam < 0.5 * omega * pn2)
    if np.any(bad):
        raise ValueError("symbol is not elliptic at %d dual points" % int(bad.sum()))
    out = np.zeros_like(A)
    nz = pn2 > 0
    out[nz] = np.linalg.inv(A[nz])
    return out


@dataclass
class SymbolBounds:
    """Measured and predicted two-sided symbol bounds."""

    omega: float
    Omega: float
    lower_ratio: float
    upper_ratio: float
    rows: list = field(default_factory=list)

    @property
    def ok(self):
        return self.lower_ratio >= 1 - 1e-12 and self.upper_ratio <= 1 + 1e-12


def symbol_bounds(gen, geometry):
    """Check ``omega |p|^2 <= A(p) <= Omega |p|^2`` over the dual torus.

    Ratios are ``min lambda_min / (omega |p|^2)`` and
    ``max lambda_max / (Omega |p|^2)``.
    """
    d = gen.d
    omega = 4.0 * gen.omega0 / np.pi ** 2
    Omega = gen.Omega0 * len(gen.index_set) * (d * np.pi ** 2) ** (d * gen.index_set.order)
    lam = symbol_eigenvalues(gen, geometry)
    pn2 = np.sum(geometry.momenta() ** 2, axis=-1)
    nz = pn2 > 0
    lower = float(np.min(lam[nz][:, 0] / (omega * pn2[nz])))
    upper = float(np.max(lam[nz][:, -1] / (Omega * pn2[nz])))
    return SymbolBounds(omega, Omega, lower, upper)


# ---------------------------------------------------------------------------
# serialisation

def generator_to_text(gen):
    """JSON document with exact decimal round trip of every float."""
    doc = {
        "d": gen.d,
        "m": gen.m,
        "multi_indices": [list(a) for a in gen.index_set.indices],
        "omega0": gen.omega0,
        "Omega0": gen.Omega0,
        "name": gen.name,
        "blocks": gen.blocks.ravel().tolist(),
    }
    return json.dumps(doc, indent=1)


def generator_from_text(text):
    doc = json.loads(text)
    idx = MultiIndexSet(tuple(tuple(a) for a in doc["multi_indices"]))
    n, m = len(idx), int(doc["m"])
    blocks = np.array(doc["blocks"], dtype=float).reshape(n, n, m, m)
    return Generator(idx, blocks, float(doc["omega0"]), float(doc["Omega0"]), doc.get("name", ""))


def all_multi_indices(d, order):
    """Every nonzero multi-index of total order at most ``order``."""
    return tuple(a for a in product(range(order + 1), repeat=d) if 0 < sum(a) <= order)
