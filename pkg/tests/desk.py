"""Cached desk-scale objects shared by the test modules."""

from functools import lru_cache

import numpy as np

from frd import base, elliptic, improved, lattice

OMEGA0, BIG_OMEGA0 = 0.5, 2.0


def index_set(name, d=2):
    if name == "nearest":
        return elliptic.MultiIndexSet.nearest_neighbour(d)
    return elliptic.MultiIndexSet(((1, 0), (0, 1), (1, 1), (2, 0)))


class Desk:
    """Generators and decompositions at ``d = 2, L = 3``, built once per session."""

    L, d = 3, 2

    def geometry(self, N, m=1):
        return lattice.TorusGeometry(self.L, N, self.d, m)

    @lru_cache(maxsize=None)
    def generators(self, m, mset):
        """Random, Laplacian, anisotropic and a second random generator of one class."""
        ms = index_set(mset)
        rng = np.random.default_rng(7 + 10 * m + (mset == "next"))
        return (
            elliptic.random_generator(ms, m, OMEGA0, BIG_OMEGA0, rng),
            elliptic.laplacian(self.d, m, ms, OMEGA0, BIG_OMEGA0),
            elliptic.anisotropic(ms, m, OMEGA0, BIG_OMEGA0),
            elliptic.random_generator(ms, m, OMEGA0, BIG_OMEGA0, rng),
        )

    @lru_cache(maxsize=None)
    def family(self, m, mset):
        return base.make_family(self.generators(m, mset)[0])

    @lru_cache(maxsize=None)
    def K(self, N, m, mset, n_tilde=3):
        return improved.estimate_K(list(self.generators(m, mset)), self.geometry(N, m), n_tilde,
                                   self.family(m, mset))

    @lru_cache(maxsize=None)
    def decomposition(self, kind, N, m=1, mset="nearest", which=0, n=1, n_tilde=3):
        gen = self.generators(m, mset)[which]
        g = self.geometry(N, m)
        fam = self.family(m, mset)
        if kind == "base":
            return base.base_decomposition(gen, g, fam)
        if kind == "improved":
            return improved.improved_decomposition(self.decomposition("base", N, m, mset, which), n)
        return improved.final_decomposition(gen, g, n, n_tilde, self.K(N, m, mset, n_tilde), fam)

    @lru_cache(maxsize=None)
    def direction(self, m, mset, seed=3):
        return elliptic.random_direction(index_set(mset), m, np.random.default_rng(seed))
