"""Finite range decompositions built from polynomial scale functions.

Every scale kernel is a scalar function of the symbol: ``C_k(p) = f_k(A(p))``,
plus, for the final construction, an ``A``-independent term that is a
scalar function of the Laplacian symbol. Keeping the scalar functions
around gives exact directional derivatives in ``A`` via
:func:`frd.matfn.mat_fn_deriv`.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import elliptic, lattice
from .bounds import BoundsReport, fit_slope
from .matfn import SpectralSeries, inverse_series, mat_fn_deriv
from .wfamily import WFamily

REMAINDER_RTOL = 1e-8


@dataclass
class SymbolData:
    """Symbol of one generator on a torus, with its eigendecomposition."""

    geometry: lattice.TorusGeometry
    symbol: np.ndarray
    mu: np.ndarray
    U: np.ndarray
    nonzero: np.ndarray

    @classmethod
    def build(cls, gen, geometry):
        A = elliptic.symbol(gen, geometry)
        mu, U = np.linalg.eigh(A)
        pn = np.linalg.norm(geometry.momenta(), axis=-1)
        return cls(geometry, A, mu, U, pn > 0)

    def apply(self, f):
        """``f(A(p))`` at every nonzero mode, zero at ``p = 0``."""
        out = np.zeros(self.symbol.shape, dtype=complex)
        mu, U = self.mu[self.nonzero], self.U[self.nonzero]
        out[self.nonzero] = (U * f.value(mu)[..., None, :]) @ U.conj().swapaxes(-1, -2)
        return out

    def derivative(self, direction_symbol, f, order):
        out = np.zeros(self.symbol.shape, dtype=complex)
        nz = self.nonzero
        out[nz] = mat_fn_deriv(self.symbol[nz], direction_symbol[nz], f, order,
                               eig=(self.mu[nz], self.U[nz]))
        return out


def laplacian_symbol_scalar(geometry):
    """``sum_j |exp(i p_j) - 1|^2`` at every dual point."""
    q = np.exp(1j * geometry.momenta()) - 1.0
    return np.sum(np.abs(q) ** 2, axis=-1)


@dataclass
class Scale:
    """One scale of a decomposition.

    ``series`` acts on the generator symbol; ``fixed_series``, when present,
    acts on the scalar Laplacian symbol and is independent of the generator.
    ``tail`` is the raw kernel value at sites beyond the range (``None`` for
    the last scale).
    """

    k: int
    spectral: np.ndarray
    position: np.ndarray
    tail: np.ndarray
    series: SpectralSeries
    fixed_series: SpectralSeries = None


@dataclass
class Decomposition:
    geometry: lattice.TorusGeometry
    generator: elliptic.Generator
    kind: str
    params: dict
    scales: list
    symbol_data: SymbolData = field(repr=False, default=None)

    @property
    def N(self):
        return self.geometry.N

    def scale(self, k):
        return self.scales[k - 1]

    def spectral_sum(self):
        return sum(s.spectral for s in self.scales)

    def direction_symbol(self, direction):
        return elliptic.symbol(direction, self.geometry)

    def spectral_derivative(self, direction, order, k=None):
        """``d^order/ds^order C_k(A + s direction)`` in Fourier space.

        Returns a list over scales, or one array when ``k`` is given.
        """
        ds = self.direction_symbol(direction)
        ks = [k] if k is not None else range(1, len(self.scales) + 1)
        out = [self.symbol_data.derivative(ds, self.scale(kk).series, order) for kk in ks]
        return out[0] if k is not None else out

    def position_derivative(self, direction, order, k):
        return to_position(self.spectral_derivative(direction, order, k), self.geometry)


def to_position(spectral, geometry):
    return np.ascontiguousarray(lattice.idft(spectral, geometry).real)


def reference_site(geometry, k):
    """Canonical far site ``(ceil(L^k/2), 0, ..., 0)``, wrapped."""
    x = [0] * geometry.d
    x[0] = (geometry.L ** k + 1) // 2
    return lattice.wrap(geometry, x)


def tail_value(geometry, k, series, fixed_series, position):
    """Kernel value beyond the range of scale ``k``.

    Read from the reference site when the torus contains far sites; for the
    top scale, where it does not, the value is the constant the kernel
    takes there on any larger torus, ``-f(0)/V``.
    """
    ref = reference_site(geometry, k)
    if lattice.sup_norm(geometry, ref) * 2 >= geometry.L ** k:
        return position[geometry.index(ref)].copy()
    c = float(series.value(np.array([0.0]))[0])
    if fixed_series is not None:
        c += float(fixed_series.value(np.array([0.0]))[0])
    return -c / geometry.volume * np.eye(geometry.m)


def assemble(geometry, gen, kind, params, series_list, fixed_list=None, symbol_data=None,
             check_remainder=False):
    sd = symbol_data or SymbolData.build(gen, geometry)
    fixed_list = fixed_list or [None] * len(series_list)
    lap = None
    scales = []
    N = geometry.N
    for k, (f, g) in enumerate(zip(series_list, fixed_list), start=1):
        spec = sd.apply(f)
        if g is not None:
            if lap is None:
                lap = laplacian_symbol_scalar(geometry)
            vals = np.zeros(lap.shape)
            vals[sd.nonzero] = g.value(lap[sd.nonzero])
            spec = spec + vals[..., None, None] * np.eye(geometry.m)
        pos = to_position(spec, geometry)
        tail = tail_value(geometry, k, f, g, pos) if k <= N else None
        scales.append(Scale(k, spec, pos, tail, f, g))
    dec = Decomposition(geometry, gen, kind, dict(params), scales, sd)
    if check_remainder:
        top = scales[-1].spectral[sd.nonzero]
        lo = np.linalg.eigvalsh(top)[:, 0]
        inv_norm = 1.0 / sd.mu[sd.nonzero][:, 0]
        if np.any(lo < -REMAINDER_RTOL * inv_norm):
            raise ValueError("remainder scale is not positive; calibration of W is off")
    return dec


def scale_intervals(L, N, R):
    """``t``-intervals of the scales ``1..N``."""
    out = []
    for k in range(1, N + 1):
        a = 0.0 if k == 1 else L ** (k - 1) / (2.0 * R)
        out.append((a, L ** k / (2.0 * R)))
    return out


def base_series(family, L, N, R):
    """Scale functions ``g_1..g_N`` and the remainder ``1/lam - sum g_k``."""
    gs = [family.scale_series(a, b, L, k) for k, (a, b) in
          enumerate(scale_intervals(L, N, R), start=1)]
    rem = SpectralSeries.combine([1.0] + [-1.0] * N, [inverse_series(family.B)] + gs, family.B)
    return gs + [rem]


def make_family(gen, cap="tight", quadrature="gauss"):
    B = elliptic.symbol_cap(gen.index_set, gen.Omega0, gen.d, cap)
    return WFamily(B, quadrature=quadrature)


def base_decomposition(gen, geometry, family=None, cap="tight"):
    """Base decomposition of the Green kernel of ``gen``.

    Parameters
    ----------
    gen : Generator
    geometry : TorusGeometry
    family : WFamily, optional
        Calibrated ``W`` family; built from the spectral cap when omitted.
    cap : {"tight", "generic"}
        Spectral cap used when ``family`` is omitted.
    """
    if gen.m != geometry.m or gen.d != geometry.d:
        raise ValueError("generator and geometry disagree on d or m")
    family = family or make_family(gen, cap)
    sd = SymbolData.build(gen, geometry)
    if sd.mu.max() > family.B * (1 + 1e-12):
        raise ValueError("spectral cap below the largest symbol eigenvalue")
    series = base_series(family, geometry.L, geometry.N, gen.index_set.order)
    params = {"B": family.B, "c_norm": family.c_norm, "R": gen.index_set.order}
    return assemble(geometry, gen, "base", params, series, symbol_data=sd, check_remainder=True)


# ---------------------------------------------------------------------------
# measurements shared by the bound reports

def identity_error(dec):
    """``max_p |sum_k C_k(p) - A(p)^{-1}| / |A(p)^{-1}|`` over nonzero modes."""
    sd = dec.symbol_data
    nz = sd.nonzero
    inv = np.linalg.inv(sd.symbol[nz])
    diff = dec.spectral_sum()[nz] - inv
    return float(np.max(np.linalg.norm(diff, 2, axis=(-2, -1)) / np.linalg.norm(inv, 2, axis=(-2, -1))))


def range_error(dec, k):
    """Deviation of scale ``k`` from its tail at far sites, relative to its sup."""
    g = dec.geometry
    pos = dec.scale(k).position
    far = g.sup_distance() * 2 >= g.L ** k
    sup = np.max(np.linalg.norm(pos, 2, axis=(-2, -1)))
    if not np.any(far):
        return 0.0
    ref = dec.scale(k).tail
    dev = np.linalg.norm(pos[far] - ref, 2, axis=(-2, -1))
    return float(dev.max() / sup)


def min_eigenvalues(dec, k):
    return np.linalg.eigvalsh(dec.scale(k).spectral)[..., 0]


def operator_norms(arr):
    return np.linalg.norm(arr, 2, axis=(-2, -1))


def grad_sup(position, alpha):
    """``sup_x |nabla^alpha K(x)|`` for a matrix kernel."""
    return float(np.max(operator_norms(lattice.multi_diff(position, alpha))))


def default_alphas(d):
    e1 = tuple(1 if i == 0 else 0 for i in range(d))
    e12 = tuple(1 if i < 2 else 0 for i in range(d))
    return [tuple([0] * d), e1, e12]


def position_envelope(L, k, d, alpha):
    a = sum(alpha)
    env = float(L) ** (-(k - 1) * (d - 2 + a))
    if d + a == 2:
        env *= np.log(L)
    return env


def verify_akm_bounds(dec, directions, ell_max=1, nbar_decay=2, alphas=None):
    """Measure the Fourier and position-space bounds of a base decomposition.

    Returns a :class:`BoundsReport`. Fitted constants are the largest
    ratios per quantity (upper bounds) and the smallest ratios (lower
    bounds); slopes of the position sup norms in ``k`` are fitted for each
    multi-index in ``alphas``.
    """
    g = dec.geometry
    L, N, d = g.L, g.N, g.d
    rep = BoundsReport()
    ann = lattice.annulus_index(g)
    pn = np.linalg.norm(g.momenta(), axis=-1)
    derivs = {ell: [dec.spectral_derivative(dA, ell) for dA in directions]
              for ell in range(1, ell_max + 1)}
    fitted = {}
    for k in range(1, N + 2):
        spec = dec.scale(k).spectral
        mats = {0: [spec]}
        for ell in range(1, ell_max + 1):
            mats[ell] = [dd[k - 1] for dd in derivs[ell]]
        lam_min = min_eigenvalues(dec, k)
        for j in range(N + 1):
            sel = ann == j
            if not np.any(sel):
                continue
            if j <= k - 1:
                env = pn[sel] ** -2 * (pn[sel] * L ** (k - 1)) ** (-nbar_decay)
            else:
                env = np.full(np.sum(sel), float(L) ** (2 * k))
            for ell, arrs in mats.items():
                meas = max(float(np.max(operator_norms(a[sel]) / env)) for a in arrs)
                rep.add("akm_fourier_upper", k, j, "D%d_norm/envelope" % ell, meas, 1.0)
                key = "C_upper_l%d" % ell
                fitted[key] = max(fitted.get(key, 0.0), meas)
            if j >= k:
                ratio = float(np.min(lam_min[sel]) / L ** (2 * k))
                rep.add("akm_fourier_lower", k, j, "lambda_min/L^2k", ratio, 0.0,
                        passed=ratio > 0, ratio=ratio)
                fitted["c_lower"] = min(fitted.get("c_lower", np.inf), ratio)
        if k == 1:
            nz = pn > 0
            floor = np.minimum(pn[nz] ** -2, float(L) ** 2)
            ratio = float(np.min(lam_min[nz] / floor))
            rep.add("akm_fourier_lower", 1, None, "lambda_min/min(|p|^-2,L^2)", ratio, 0.0,
                    passed=ratio > 0, ratio=ratio)
            fitted["c_floor"] = ratio
    alphas = alphas or default_alphas(d)
    values = {}
    for ell in range(0, ell_max + 1):
        for k in range(1, N + 1):
            for alpha in alphas:
                if ell == 0:
                    sups = [grad_sup(dec.scale(k).position, alpha)]
                else:
                    sups = [grad_sup(to_position(dd[k - 1], g), alpha) for dd in derivs[ell]]
                meas = max(sups)
                env = position_envelope(L, k, d, alpha)
                rep.add("akm_position", k, None, "sup|grad^%s D%d C_k|" % ("".join(map(str, alpha)), ell),
                        meas, env)
                values[(ell, alpha, k)] = meas
                key = "C_position_%s_l%d" % ("".join(map(str, alpha)), ell)
                fitted[key] = max(fitted.get(key, 0.0), meas / env)
    ks = list(range(1, N + 1))
    if len(ks) >= 2:
        for alpha in alphas:
            slope = fit_slope(ks, [np.log(values[(0, alpha, k)]) for k in ks])
            fitted["slope_%s" % "".join(map(str, alpha))] = slope / np.log(L)
    rep.fitted.update(fitted)
    return rep


# ---------------------------------------------------------------------------
# finite-difference cross-check of A-derivatives

def finite_difference_spectral(builder, gen, direction, order, h=1e-3):
    """Central differences with one Richardson step of ``builder(A)``.

    ``builder`` maps a generator to a list of spectral arrays.
    """
    def central(step):
        plus = builder(gen + direction.scaled(step))
        minus = builder(gen + direction.scaled(-step))
        if order == 1:
            return [(a - b) / (2 * step) for a, b in zip(plus, minus)]
        mid = builder(gen)
        return [(a - 2 * c + b) / step ** 2 for a, b, c in zip(plus, minus, mid)]

    coarse = central(h)
    fine = central(h / 2)
    return [(4 * f - c) / 3 for f, c in zip(fine, coarse)]


# ---------------------------------------------------------------------------
# export

def _hex(arr):
    return [float(v).hex() for v in np.asarray(arr, dtype=float).ravel()]


def decomposition_to_text(dec):
    """Structured text export with every float written as a hex literal."""
    g = dec.geometry
    doc = {
        "kind": dec.kind,
        "params": {k: (float(v).hex() if isinstance(v, float) else v) for k, v in dec.params.items()},
        "geometry": {"L": g.L, "N": g.N, "d": g.d, "m": g.m},
        "generator": json.loads(elliptic.generator_to_text(dec.generator)),
        "scales": [],
    }
    for s in dec.scales:
        doc["scales"].append({
            "k": s.k,
            "tail": None if s.tail is None else _hex(s.tail),
            "spectral_re": _hex(s.spectral.real),
            "spectral_im": _hex(s.spectral.imag),
        })
    return json.dumps(doc, indent=0, sort_keys=True) + "\n"


def spectral_from_text(text):
    """Read back the per-scale spectral kernels and tails of an export."""
    doc = json.loads(text)
    g = doc["geometry"]
    shape = (g["L"] ** g["N"],) * g["d"] + (g["m"], g["m"])
    scales = []
    for s in doc["scales"]:
        re = np.array([float.fromhex(v) for v in s["spectral_re"]]).reshape(shape)
        im = np.array([float.fromhex(v) for v in s["spectral_im"]]).reshape(shape)
        tail = None
        if s["tail"] is not None:
            tail = np.array([float.fromhex(v) for v in s["tail"]]).reshape(g["m"], g["m"])
        scales.append((s["k"], re + 1j * im, tail))
    return doc, scales
