"""Spectral sampling of stationary Gaussian fields on the torus.

A sample is ``xi = idft(xi_hat)`` with ``xi_hat(p) = sqrt(V) K(p)^{1/2} z(p)``
on one representative of each pair ``{p, -p}``, ``z`` complex standard
normal with ``E|z|^2 = 1``, and ``xi_hat(-p) = conj(xi_hat(p))``. With the
transform pair of :mod:`frd.lattice` this gives
``E xi(x) xi(y)^T = (1/V) sum_p K(p) exp(i p (x-y)) = K(x - y)``.

Random numbers come from a Philox counter generator keyed by the seed.
Sample ``s`` owns the counter block whose third word equals ``s``, and
inside that block the draws for the dual point of rank ``r`` occupy a fixed
slot, so every value is a pure function of (seed, sample, dual point).
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from . import lattice
from .matfn import Sqrt, mat_fn

PSD_RTOL = 1e-10


def spectral_sqrt(spectral):
    """Hermitian square root of every mode of a PSD spectral kernel."""
    spectral = np.asarray(spectral)
    lam = np.linalg.eigvalsh(spectral)
    scale = np.abs(np.trace(spectral, axis1=-2, axis2=-1)).max()
    if np.any(lam[..., 0] < -PSD_RTOL * max(scale, 1e-300)):
        raise ValueError("spectral kernel has a negative mode")
    return mat_fn(spectral, Sqrt())


def pair_representatives(geometry):
    """Flat indices of one member of each ``{p, -p}`` pair, zero mode excluded."""
    idx = np.arange(geometry.volume).reshape(geometry.shape)
    neg = idx
    for ax in range(geometry.d):
        neg = np.flip(np.roll(neg, -1, axis=ax), axis=ax)
    flat = idx.ravel()
    partner = neg.ravel()
    if np.any((flat == partner) & (flat != 0)):
        raise ValueError("self-paired nonzero mode; the side must be odd")
    return flat[flat < partner], partner[flat < partner]


def stream(seed, sample_index):
    """Generator for one sample: Philox keyed by ``seed``, counter block ``sample_index``."""
    bg = np.random.Philox(key=int(seed) % (1 << 64), counter=[0, 0, int(sample_index), 0])
    return np.random.Generator(bg)


@dataclass
class SampleBatch:
    """Batch of real fields of shape ``(count,) + geometry.shape + (m,)``."""

    kernel_id: str
    seed: int
    count: int
    values: np.ndarray
    imag_residue: float = 0.0

    def to_text(self, geometry):
        """Site-major text export with full-precision decimal floats."""
        lines = [json.dumps({"kernel": self.kernel_id, "seed": self.seed, "count": self.count,
                             "shape": list(geometry.shape), "m": geometry.m})]
        vals = np.moveaxis(self.values, 0, -1)
        coords = np.indices(geometry.shape).reshape(geometry.d, -1).T
        flat = vals.reshape(geometry.volume, -1)
        for c, row in zip(coords, flat):
            lines.append(" ".join(str(int(v)) for v in c) + " " + " ".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _draw_block(root, geometry, seed, start, stop, reps, partners, zero_root):
    m = geometry.m
    V = geometry.volume
    n = stop - start
    hat = np.zeros((V, m, n), dtype=complex)
    flat_root = root.reshape(V, m, m)
    amp = np.sqrt(V)
    for col, s in enumerate(range(start, stop)):
        rng = stream(seed, s)
        z = rng.standard_normal((len(reps), m, 2))
        zc = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
        v = amp * np.einsum("prs,ps->pr", flat_root[reps], zc)
        hat[reps, :, col] = v
        hat[partners, :, col] = v.conj()
        if zero_root is not None:
            hat[0, :, col] = amp * zero_root @ rng.standard_normal(m)
    hat = hat.reshape(geometry.shape + (m, n))
    # one transform per sample: batched products round differently with the batch shape
    out = np.stack([lattice.idft(np.ascontiguousarray(hat[..., col]), geometry)
                    for col in range(n)])
    return np.ascontiguousarray(out.real), float(np.abs(out.imag).max())


def sample(spectral, geometry, seed, count, workers=1, zero_mode=None, kernel_id="", block=256):
    """Draw ``count`` fields with spectral covariance ``spectral``.

    Parameters
    ----------
    spectral : ndarray, shape ``geometry.shape + (m, m)``
        PSD spectral kernel; its value at ``p = 0`` is ignored.
    seed : int
    count : int
    workers : int
        Threads used over sample blocks. Results do not depend on it.
    zero_mode : ndarray, optional
        Covariance of the ``p = 0`` mode, ``E xi_hat(0) xi_hat(0)^T = V zero_mode``;
        used for measures that are not restricted to zero-mean fields.
    """
    root = spectral_sqrt(spectral)
    reps, partners = pair_representatives(geometry)
    zero_root = None
    if zero_mode is not None:
        zero_root = mat_fn(np.asarray(zero_mode, dtype=float), Sqrt()).real
    starts = list(range(0, count, block))
    jobs = [(s, min(s + block, count)) for s in starts]

    def run(job):
        return _draw_block(root, geometry, seed, job[0], job[1], reps, partners, zero_root)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    if not parts:
        raise ValueError("count must be positive")
    values = np.concatenate([p[0] for p in parts], axis=0)
    resid = max(p[1] for p in parts)
    return SampleBatch(kernel_id, int(seed), int(count), values, resid)


def covariance_estimate(values, x, y, i, j):
    """Mean of ``xi_i(x) xi_j(y)`` over samples and its standard error."""
    prod = values[(slice(None),) + tuple(x) + (i,)] * values[(slice(None),) + tuple(y) + (j,)]
    return float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(len(prod)))


def covariance_residuals(batch, position, geometry, points, rng):
    """Standardised residuals ``(estimate - K(x-y)_ij) / se`` at random entries."""
    out = []
    s = geometry.side
    for _ in range(points):
        x = tuple(rng.integers(0, s, geometry.d))
        y = tuple(rng.integers(0, s, geometry.d))
        i, j = (int(v) for v in rng.integers(0, geometry.m, 2))
        est, se = covariance_estimate(batch.values, x, y, i, j)
        lag = tuple((a - b) % s for a, b in zip(x, y))
        exact = position[lag + (i, j)]
        out.append({"x": x, "y": y, "i": i, "j": j, "estimate": est, "exact": float(exact),
                    "se": se, "z": (est - exact) / se if se > 0 else 0.0})
    return out


def gradient_covariance_exact(position, h, i, j):
    """``E grad_i xi(x) grad_j xi(y)^T`` for ``x - y = h`` from the kernel."""
    d = len(h)

    def K(v):
        idx = tuple(int(a) % position.shape[ax] for ax, a in enumerate(v))
        return position[idx]

    ei = np.eye(d, dtype=int)[i]
    ej = np.eye(d, dtype=int)[j]
    h = np.asarray(h)
    return K(h + ei - ej) - K(h + ei) - K(h - ej) + K(h)


def gradient_range_check(batch, geometry, k, position=None, max_pairs=400, seed=0, alpha=1e-3):
    """Empirical gradient covariances at pairs beyond the range of scale ``k``.

    Pairs ``(0, y)`` with ``|y|_inf >= L^k/2 + 1`` are tested entry by entry
    against the band ``z * se``, where ``se`` is the standard error of the
    mean product and ``z`` the two-sided normal quantile at the family-wise
    level ``alpha`` split over all tested entries. When ``position`` is given
    the exact covariance at the same pairs is reported as well.
    """
    d, m = geometry.d, geometry.m
    vals = batch.values
    count = vals.shape[0]
    grads = [lattice.forward_diff(vals, ax + 1) for ax in range(d)]
    dist = geometry.sup_distance()
    far = np.argwhere(dist >= geometry.L ** k / 2.0 + 1)
    rng = np.random.default_rng(seed)
    if len(far) > max_pairs:
        far = far[rng.choice(len(far), max_pairs, replace=False)]
    origin = (0,) * d
    rows = []
    for y in far:
        y = tuple(int(v) for v in y)
        for i in range(d):
            for j in range(d):
                a = grads[i][(slice(None),) + origin]
                b = grads[j][(slice(None),) + y]
                for r in range(m):
                    for s in range(m):
                        prod = a[:, r] * b[:, s]
                        exact = None
                        if position is not None:
                            h = tuple(-v for v in y)
                            exact = float(gradient_covariance_exact(position, h, i, j)[r, s])
                        rows.append({"y": y, "i": i, "j": j, "r": r, "s": s,
                                     "estimate": float(prod.mean()),
                                     "se": float(prod.std(ddof=1) / np.sqrt(count)), "exact": exact})
    z = NormalDist().inv_cdf(1.0 - alpha / (2.0 * max(len(rows), 1)))
    worst = 0.0
    for row in rows:
        row["band"] = z * row["se"]
        row["pass"] = abs(row["estimate"]) <= row["band"]
        worst = max(worst, abs(row["estimate"]) / row["band"] if row["band"] > 0 else 0.0)
    return {"pairs": rows, "ok": all(r["pass"] for r in rows), "worst_ratio": worst, "z": z}
