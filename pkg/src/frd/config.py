"""Run configuration: YAML loading, defaults and validation.

Every constraint violation raises :class:`ConfigError` with a message that
starts with the dotted key at fault, e.g. ``decomposition.n_tilde: must
exceed n``.
"""

import copy
from dataclasses import dataclass

import numpy as np
import yaml

from . import elliptic

DEFAULTS = {
    "geometry": {"L": 3, "N": 2, "d": 2, "m": 1},
    "multi_indices": "nearest",
    "generator": {"kind": "laplacian", "omega0": 0.5, "Omega0": 2.0, "seed": 0, "strength": 0.5},
    "decomposition": {"kind": "base", "n": 1, "n_tilde": 3, "K": None, "ensemble": 3,
                      "spectral_cap": "tight", "quadrature": "gauss"},
    "directions": {"count": 2, "seed": 1},
    "verify": {"ell_max": 1},
    "sample": {"scale": None, "count": 10000, "points": 20, "export": False},
    "renorm": {"k": 1, "count": 10000, "mc_count": 100000},
    "sweep": {"N": [2, 3, 4]},
    "seed": 0,
    "tolerances": {
        "identity": 1e-10,
        "range": 1e-9,
        "psd": 1e-10,
        "tail_psd": 1e-10,
        "tail_independence": 1e-9,
        "symbol": 1e-12,
        "residual_sigmas": 5.0,
        "localization_sigmas": 3.0,
        "localization_exact": 1e-9,
        "deriv_exact": 1e-6,
        "deriv_second": 1e-4,
        "uniform_ratio": 1.5,
    },
}

KINDS = ("base", "improved", "final")
GENERATOR_KINDS = ("laplacian", "anisotropic", "random")


class ConfigError(ValueError):
    pass


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        where = path + key
        if key not in base:
            raise ConfigError("%s: unknown key" % where)
        if isinstance(base[key], dict) and base[key] and key != "tolerances":
            if not isinstance(val, dict):
                raise ConfigError("%s: expected a mapping" % where)
            out[key] = _merge(base[key], val, where + ".")
        elif key == "tolerances":
            if not isinstance(val, dict):
                raise ConfigError("%s: expected a mapping" % where)
            for t in val:
                if t not in base[key]:
                    raise ConfigError("tolerances.%s: unknown tolerance" % t)
            out[key].update(val)
        else:
            out[key] = val
    return out


def _int(value, where, lo=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError("%s: expected an integer" % where)
    if lo is not None and value < lo:
        raise ConfigError("%s: must be at least %d" % (where, lo))
    return int(value)


def _pos(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError("%s: expected a positive number" % where)
    return float(value)


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` keeps the merged mapping."""

    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def tolerances(self):
        return self.raw["tolerances"]

    def index_set(self):
        spec = self.raw["multi_indices"]
        d = self.raw["geometry"]["d"]
        if spec == "nearest":
            return elliptic.MultiIndexSet.nearest_neighbour(d)
        if spec == "next_nearest":
            unit = [tuple(1 if i == j else 0 for i in range(d)) for j in range(d)]
            e12 = tuple(1 if i < 2 else 0 for i in range(d))
            two = tuple(2 if i == 0 else 0 for i in range(d))
            return elliptic.MultiIndexSet(unit + [e12, two])
        return elliptic.MultiIndexSet([tuple(a) for a in spec])

    def with_N(self, N):
        raw = copy.deepcopy(self.raw)
        raw["geometry"]["N"] = N
        return validate(raw)

    def scaled_tolerances(self, factor):
        raw = copy.deepcopy(self.raw)
        for key in raw["tolerances"]:
            if not key.endswith("sigmas") and key != "uniform_ratio":
                raw["tolerances"][key] *= factor
        return RunConfig(raw)


def validate(raw):
    """Merge ``raw`` over the defaults and check every constraint."""
    cfg = _merge(DEFAULTS, raw or {})
    g = cfg["geometry"]
    L = _int(g["L"], "geometry.L", 3)
    if L % 2 == 0:
        raise ConfigError("geometry.L: must be odd")
    _int(g["N"], "geometry.N", 1)
    _int(g["d"], "geometry.d", 2)
    _int(g["m"], "geometry.m", 1)
    mi = cfg["multi_indices"]
    if isinstance(mi, str):
        if mi not in ("nearest", "next_nearest"):
            raise ConfigError("multi_indices: expected nearest, next_nearest or a list")
    else:
        try:
            elliptic.MultiIndexSet([tuple(a) for a in mi])
        except (TypeError, ValueError) as exc:
            raise ConfigError("multi_indices: %s" % exc) from None
    gen = cfg["generator"]
    if gen["kind"] not in GENERATOR_KINDS:
        raise ConfigError("generator.kind: expected one of %s" % ", ".join(GENERATOR_KINDS))
    w0 = _pos(gen["omega0"], "generator.omega0")
    W0 = _pos(gen["Omega0"], "generator.Omega0")
    if W0 < w0:
        raise ConfigError("generator.Omega0: must be at least omega0")
    if gen["kind"] != "laplacian" and W0 == w0:
        raise ConfigError("generator.Omega0: must exceed omega0 for %s generators" % gen["kind"])
    if gen["kind"] == "laplacian" and not w0 <= 1.0 <= W0:
        raise ConfigError("generator.omega0: the Laplacian needs omega0 <= 1 <= Omega0")
    _int(gen["seed"], "generator.seed", 0)
    dec = cfg["decomposition"]
    if dec["kind"] not in KINDS:
        raise ConfigError("decomposition.kind: expected one of %s" % ", ".join(KINDS))
    n = _int(dec["n"], "decomposition.n", 1)
    nt = _int(dec["n_tilde"], "decomposition.n_tilde", 1)
    if dec["kind"] == "final" and nt <= n:
        raise ConfigError("decomposition.n_tilde: must exceed n")
    if dec["K"] is not None:
        _pos(dec["K"], "decomposition.K")
    _int(dec["ensemble"], "decomposition.ensemble", 1)
    if dec["spectral_cap"] not in ("tight", "generic"):
        raise ConfigError("decomposition.spectral_cap: expected tight or generic")
    if dec["quadrature"] not in ("gauss", "per-coefficient"):
        raise ConfigError("decomposition.quadrature: expected gauss or per-coefficient")
    _int(cfg["directions"]["count"], "directions.count", 1)
    _int(cfg["verify"]["ell_max"], "verify.ell_max", 1)
    if cfg["verify"]["ell_max"] > 2:
        raise ConfigError("verify.ell_max: at most 2")
    s = cfg["sample"]
    if s["scale"] is not None:
        k = _int(s["scale"], "sample.scale", 1)
        if k > g["N"] + 1:
            raise ConfigError("sample.scale: at most N + 1")
    _int(s["count"], "sample.count", 2)
    _int(s["points"], "sample.points", 1)
    r = cfg["renorm"]
    k = _int(r["k"], "renorm.k", 1)
    if k + 1 > g["N"]:
        raise ConfigError("renorm.k: needs k + 1 <= N")
    _int(r["count"], "renorm.count", 2)
    _int(r["mc_count"], "renorm.mc_count", 2)
    Ns = cfg["sweep"]["N"]
    if not isinstance(Ns, list) or len(Ns) < 2:
        raise ConfigError("sweep.N: expected a list of at least two levels")
    for N in Ns:
        _int(N, "sweep.N", 1)
    _int(cfg["seed"], "seed", 0)
    for key, val in cfg["tolerances"].items():
        _pos(val, "tolerances." + key)
    return RunConfig(cfg)


def load(path=None):
    """Read a YAML file (or use the defaults when ``path`` is None)."""
    if path is None:
        return validate({})
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a mapping")
    return validate(raw)
