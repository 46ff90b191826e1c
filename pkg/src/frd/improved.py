"""Recombined decompositions with Fourier lower bounds and improved decay.

The improved decomposition mixes base scales with geometric weights so
that every scale inherits a lower bound from the finer ones. The final
decomposition subtracts a small multiple of the recombined Laplacian
kernel of higher order and adds it back with lower order; only the first
term depends on the generator.
"""

from dataclasses import dataclass

import numpy as np

from . import lattice
from .base import (SymbolData, assemble, base_series, default_alphas, grad_sup,
                   laplacian_symbol_scalar, make_family, min_eigenvalues, operator_norms,
                   position_envelope)
from .bounds import BoundsReport, fit_slope
from .matfn import SpectralSeries

K_SAFETY = 1.1


@dataclass
class MixCoefficients:
    """Weights ``lam[k, j]`` for ``1 <= j <= k <= N + 1`` (1-based, zero padded)."""

    L: int
    N: int
    d: int
    n: int
    table: np.ndarray

    def __call__(self, k, j):
        return self.table[k, j]

    def column_sums(self):
        return self.table[1:, 1:].sum(axis=0)


def mix_coefficients(L, N, d, n):
    """Geometric weights ``L**((k-j)(1-d-n))`` below the diagonal.

    The diagonal is fixed by requiring every column to sum to one.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    top = N + 1
    table = np.zeros((top + 1, top + 1))
    ratio = float(L) ** (1 - d - n)
    for k in range(1, top + 1):
        for j in range(1, k):
            table[k, j] = ratio ** (k - j)
    for j in range(1, top + 1):
        table[j, j] = 1.0 - table[j + 1:, j].sum()
    return MixCoefficients(L, N, d, n, table)


def mixed_series(base, mix):
    """Scale functions ``sum_j lam[k, j] g_j``."""
    top = len(base)
    B = base[0].B
    return [SpectralSeries.combine([mix(k, j) for j in range(1, k + 1)], base[:k], B)
            for k in range(1, top + 1)]


def improved_decomposition(base_dec, n):
    """Recombine the scales of a base decomposition with weights of order ``n``."""
    if base_dec.kind != "base":
        raise ValueError("improved decomposition needs a base decomposition")
    g = base_dec.geometry
    mix = mix_coefficients(g.L, g.N, g.d, n)
    series = mixed_series([s.series for s in base_dec.scales], mix)
    params = dict(base_dec.params, n=n)
    return assemble(g, base_dec.generator, "improved(%d)" % n, params, series,
                    symbol_data=base_dec.symbol_data)


def laplacian_mixed(family, geometry, R, n):
    """Spectral multipliers of the recombined Laplacian decomposition.

    Returns the scalar scale functions and their values on the scalar
    Laplacian symbol (zero at ``p = 0``), one row per scale.
    """
    g = geometry
    base = base_series(family, g.L, g.N, R)
    series = mixed_series(base, mix_coefficients(g.L, g.N, g.d, n))
    lap = laplacian_symbol_scalar(g)
    nz = lap > 0
    vals = []
    for f in series:
        v = np.zeros(lap.shape)
        v[nz] = f.value(lap[nz])
        vals.append(v)
    return series, np.array(vals)


def estimate_K(gens, geometry, n_tilde, family=None):
    """Mixing constant from the worst quotient over a generator ensemble.

    ``K = 1.1 max |D_lap,k(p)| / (lambda_min(D_A,k(p)) L^(2(d+n~)+1))`` with
    both recombinations of order ``n_tilde``.
    """
    g = geometry
    family = family or make_family(gens[0])
    R = gens[0].index_set.order
    base = base_series(family, g.L, g.N, R)
    mix = mix_coefficients(g.L, g.N, g.d, n_tilde)
    series = mixed_series(base, mix)
    _, lap_vals = laplacian_mixed(family, g, R, n_tilde)
    scale = float(g.L) ** (2 * (g.d + n_tilde) + 1)
    worst = 0.0
    for gen in gens:
        sd = SymbolData.build(gen, g)
        nz = sd.nonzero
        for k, f in enumerate(series, start=1):
            lo = f.value(sd.mu[nz]).min(axis=-1)
            if np.any(lo <= 0):
                raise ValueError("recombined kernel is not positive definite")
            worst = max(worst, float(np.max(np.abs(lap_vals[k - 1][nz]) / (lo * scale))))
    return K_SAFETY * worst


def final_decomposition(gen, geometry, n, n_tilde, K, family=None):
    """Final decomposition of order ``(n, n_tilde)`` with mixing constant ``K``."""
    if n_tilde <= n:
        raise ValueError("need n_tilde > n")
    g = geometry
    family = family or make_family(gen)
    R = gen.index_set.order
    base = base_series(family, g.L, g.N, R)
    hi = mixed_series(base, mix_coefficients(g.L, g.N, g.d, n_tilde))
    lo = mixed_series(base, mix_coefficients(g.L, g.N, g.d, n))
    eps = float(g.L) ** (-2 * (g.d + n_tilde) - 1) / K
    fixed = [(b - a) * eps for a, b in zip(hi, lo)]
    params = {"B": family.B, "c_norm": family.c_norm, "R": R, "n": n, "n_tilde": n_tilde,
              "K": K, "eps": eps}
    dec = assemble(g, gen, "final(%d,%d)" % (n, n_tilde), params, hi, fixed)
    for k in range(1, len(dec.scales) + 1):
        lam = min_eigenvalues(dec, k)[dec.symbol_data.nonzero]
        tr = np.abs(np.trace(dec.scale(k).spectral, axis1=-2, axis2=-1)).max()
        if np.any(lam < -1e-10 * tr):
            raise ValueError("final kernel of scale %d is not positive; K too small" % k)
    return dec


# ---------------------------------------------------------------------------
# verification

def final_lower_envelope(L, d, n, n_tilde, k, j):
    pre = float(L) ** (-2 * (d + n_tilde) - 1)
    if j < k:
        return pre * float(L) ** (2 * j) * float(L) ** ((k - j) * (1 - d - n))
    return pre * float(L) ** (2 * k)


def quotient_cells(dec, directions, order=1):
    """``max_p |d^order C_k(p)| |C_k(p)^{-1}|`` per ``(k, j)`` cell.

    The maximum runs over ``p`` in annulus ``j`` and over the directions.
    """
    g = dec.geometry
    ann = lattice.annulus_index(g)
    derivs = [dec.spectral_derivative(dA, order) for dA in directions]
    out = {}
    for k in range(1, g.N + 2):
        lam = min_eigenvalues(dec, k)
        for j in range(g.N + 1):
            sel = ann == j
            if not np.any(sel):
                continue
            q = max(float(np.max(operator_norms(dd[k - 1][sel]) / lam[sel])) for dd in derivs)
            out[(k, j)] = q
    return out


def quotient_fit(cells, L):
    """Slope in ``(k-j) log L`` over ``j < k`` and spread over ``j >= k``.

    Cells with a vanishing quotient (scales whose kernel does not depend on
    the generator, e.g. a polynomial of degree zero) are left out.
    """
    cells = {kj: q for kj, q in cells.items() if q > 0}
    below = [(k - j, q) for (k, j), q in cells.items() if j < k]
    x = [kj * np.log(L) for kj, _ in below]
    y = [np.log(q) for _, q in below]
    slope = fit_slope(x, y)
    above = [q for (k, j), q in cells.items() if j >= k]
    spread = max(above) / min(above) if above else 1.0
    return slope, spread


def verify_final_bounds(dec, directions, ell_max=1, alphas=None, base_constants=None):
    """Measure the lower envelope, derivative decay and quotient of a final decomposition."""
    g = dec.geometry
    L, N, d = g.L, g.N, g.d
    n, nt = dec.params["n"], dec.params["n_tilde"]
    rep = BoundsReport()
    ann = lattice.annulus_index(g)
    c_min = np.inf
    for k in range(1, N + 2):
        lam = min_eigenvalues(dec, k)
        for j in range(N + 1):
            sel = ann == j
            if not np.any(sel):
                continue
            env = final_lower_envelope(L, d, n, nt, k, j)
            ratio = float(np.min(lam[sel]) / env)
            rep.add("final_lower", k, j, "lambda_min/envelope", ratio, 0.0, passed=ratio > 0,
                    ratio=ratio)
            c_min = min(c_min, ratio)
    rep.fitted["c_lower"] = c_min
    for ell in range(1, ell_max + 1):
        cells = quotient_cells(dec, directions, ell)
        for (k, j), q in sorted(cells.items()):
            env = float(L) ** ((k - j) * (n - nt)) if j < k else 1.0
            rep.add("final_quotient", k, j, "D%d quotient" % ell, q, env)
        slope, spread = quotient_fit(cells, L)
        rep.fitted["quotient_slope_l%d" % ell] = slope
        rep.fitted["quotient_spread_l%d" % ell] = spread
    alphas = alphas or [a for a in default_alphas(d) if sum(a) <= n]
    vals = {}
    for k in range(1, N + 1):
        for alpha in alphas:
            meas = grad_sup(dec.scale(k).position, alpha)
            env = position_envelope(L, k, d, alpha)
            bound = env * 3 * base_constants.get(alpha, np.inf) if base_constants else env
            rep.add("final_position", k, None, "sup|grad^%s C_k|" % "".join(map(str, alpha)),
                    meas, bound, passed=meas <= bound if base_constants else None)
            vals[(alpha, k)] = meas
    if N >= 2:
        for alpha in alphas:
            slope = fit_slope(range(1, N + 1), [np.log(vals[(alpha, k)]) for k in range(1, N + 1)])
            rep.fitted["slope_%s" % "".join(map(str, alpha))] = slope / np.log(L)
    return rep
