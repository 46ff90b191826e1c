"""Command-line entry point: ``frd {decompose,verify,sample,renorm,sweep}``.

Each command reads a YAML configuration, writes its reports into ``--out``
(``report.csv`` and ``report.json``, plus command-specific files) and exits
with 0 when every asserted check passes, 1 when a check fails, 2 on an
invalid configuration and 3 when a construction step raises.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import base, elliptic, improved, lattice, renorm, sampler
from .bounds import BoundsReport
from .config import ConfigError, load

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUILD = 0, 1, 2, 3


class Context:
    """Objects shared by the commands, built lazily from one configuration."""

    def __init__(self, cfg, workers=1):
        self.cfg = cfg
        self.workers = workers
        g = cfg["geometry"]
        self.geometry = lattice.TorusGeometry(g["L"], g["N"], g["d"], g["m"])
        self.index_set = cfg.index_set()
        self.generator = make_generator(cfg, self.index_set)
        dc = cfg["decomposition"]
        self.family = base.make_family(self.generator, dc["spectral_cap"], dc["quadrature"])
        self._ensemble = None

    @property
    def tol(self):
        return self.cfg.tolerances

    def ensemble(self):
        """The configured generator, the Laplacian and random generators, same class."""
        if self._ensemble is None:
            gc = self.cfg["generator"]
            m = self.geometry.m
            gens = [self.generator]
            lap = elliptic.laplacian(self.geometry.d, m, self.index_set, gc["omega0"], gc["Omega0"])
            if gc["kind"] != "laplacian" and gc["omega0"] <= 1.0 <= gc["Omega0"]:
                gens.append(lap)
            rng = np.random.default_rng(1000 + gc["seed"])
            while len(gens) < max(3, self.cfg["decomposition"]["ensemble"]):
                if gc["Omega0"] > gc["omega0"]:
                    gens.append(elliptic.random_generator(self.index_set, m, gc["omega0"],
                                                          gc["Omega0"], rng))
                else:
                    gens.append(elliptic.anisotropic(self.index_set, m, gc["omega0"], gc["Omega0"]))
            self._ensemble = gens
        return self._ensemble

    def directions(self):
        dc = self.cfg["directions"]
        rng = np.random.default_rng(dc["seed"])
        return [elliptic.random_direction(self.index_set, self.geometry.m, rng)
                for _ in range(dc["count"])]

    def K(self, geometry=None):
        dec = self.cfg["decomposition"]
        if dec["K"] is not None:
            return float(dec["K"])
        return improved.estimate_K(self.ensemble(), geometry or self.geometry, dec["n_tilde"],
                                   self.family)

    def decompose(self, gen=None, geometry=None, K=None):
        gen = gen or self.generator
        g = geometry or self.geometry
        dc = self.cfg["decomposition"]
        b = base.base_decomposition(gen, g, self.family)
        if dc["kind"] == "base":
            return b
        if dc["kind"] == "improved":
            return improved.improved_decomposition(b, dc["n"])
        K = self.K(g) if K is None else K
        return improved.final_decomposition(gen, g, dc["n"], dc["n_tilde"], K, self.family)


def make_generator(cfg, index_set):
    gc = cfg["generator"]
    d, m = cfg["geometry"]["d"], cfg["geometry"]["m"]
    if gc["kind"] == "laplacian":
        return elliptic.laplacian(d, m, index_set, gc["omega0"], gc["Omega0"])
    if gc["kind"] == "anisotropic":
        return elliptic.anisotropic(index_set, m, gc["omega0"], gc["Omega0"])
    rng = np.random.default_rng(gc["seed"])
    return elliptic.random_generator(index_set, m, gc["omega0"], gc["Omega0"], rng,
                                     gc["strength"])


# ---------------------------------------------------------------------------
# shared checks

def structural_checks(ctx, dec, rep):
    """Identity, range, positivity and tail rows shared by decompose and verify."""
    tol = ctx.tol
    g = dec.geometry
    rep.add("identity", None, None, "max relative error", base.identity_error(dec), tol["identity"],
            passed=base.identity_error(dec) <= tol["identity"])
    for s in dec.scales:
        lam = base.min_eigenvalues(dec, s.k)[dec.symbol_data.nonzero]
        scale = np.abs(np.trace(s.spectral, axis1=-2, axis2=-1)).max()
        rel = float(lam.min() / scale)
        rep.add("psd", s.k, None, "lambda_min/trace scale", rel, -tol["psd"], passed=rel >= -tol["psd"],
                ratio=rel)
        if s.k <= g.N:
            err = base.range_error(dec, s.k)
            rep.add("range", s.k, None, "far-site deviation", err, tol["range"],
                    passed=err <= tol["range"])
            ev = np.linalg.eigvalsh(-s.tail)
            nrm = max(np.abs(s.tail).max(), 1e-300)
            rep.add("tail", s.k, None, "lambda_min(-M_k)/|M_k|", ev[0] / nrm, -tol["tail_psd"],
                    passed=ev[0] / nrm >= -tol["tail_psd"], ratio=ev[0] / nrm)
    return rep


def tail_independence(ctx, decs, rep):
    ref = decs[0]
    for k in range(1, ref.N + 1):
        Mk = ref.scale(k).tail
        nrm = max(np.linalg.norm(Mk, 2), 1e-300)
        worst = max(float(np.linalg.norm(d.scale(k).tail - Mk, 2) / nrm) for d in decs[1:])
        rep.add("tail_independence", k, None, "max |M_k(A)-M_k(A')|/|M_k|", worst,
                ctx.tol["tail_independence"], passed=worst <= ctx.tol["tail_independence"])
    return rep


def summary_of(dec):
    out = {"kind": dec.kind, "params": dec.params, "scales": []}
    for s in dec.scales:
        lam = np.linalg.eigvalsh(s.spectral[dec.symbol_data.nonzero])
        out["scales"].append({
            "k": s.k,
            "range_error": base.range_error(dec, s.k) if s.k <= dec.N else None,
            "tail": None if s.tail is None else s.tail.tolist(),
            "mode_min": float(lam[:, 0].min()),
            "mode_max": float(lam[:, -1].max()),
            "sup_position": float(np.abs(s.position).max()),
        })
    return out


def write_report(out, rep, name="report"):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, name + ".csv"), "w") as fh:
        fh.write(rep.to_csv())
    with open(os.path.join(out, name + ".json"), "w") as fh:
        fh.write(rep.to_json() + "\n")


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


# ---------------------------------------------------------------------------
# commands

def cmd_decompose(ctx, out):
    dec = ctx.decompose()
    text = base.decomposition_to_text(dec)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "decomposition.json"), "w") as fh:
        fh.write(text)
    doc = json.loads(text)
    for s in doc["scales"]:
        with open(os.path.join(out, "scale_%d.json" % s["k"]), "w") as fh:
            fh.write(json.dumps(s, indent=0, sort_keys=True) + "\n")
    write_json(os.path.join(out, "summary.json"), summary_of(dec))
    rep = structural_checks(ctx, dec, BoundsReport())
    write_report(out, rep)
    return rep


def cmd_verify(ctx, out):
    dec = ctx.decompose()
    rep = structural_checks(ctx, dec, BoundsReport())
    sb = elliptic.symbol_bounds(ctx.generator, ctx.geometry)
    tol = ctx.tol["symbol"]
    rep.add("symbol", None, None, "lambda_min/(omega|p|^2)", sb.lower_ratio, 1 - tol,
            passed=sb.lower_ratio >= 1 - tol, ratio=sb.lower_ratio)
    rep.add("symbol", None, None, "lambda_max/(Omega|p|^2)", sb.upper_ratio, 1 + tol,
            passed=sb.upper_ratio <= 1 + tol)
    K = ctx.K() if dec.kind.startswith("final") else None
    decs = [dec] + [ctx.decompose(g, K=K) for g in ctx.ensemble()[1:]]
    tail_independence(ctx, decs, rep)
    dirs = ctx.directions()
    ell = ctx.cfg["verify"]["ell_max"]
    if dec.kind == "base":
        rep.extend(base.verify_akm_bounds(dec, dirs, ell_max=ell))
    elif dec.kind.startswith("final"):
        ref = base.base_decomposition(ctx.generator, ctx.geometry, ctx.family)
        consts = {}
        for alpha in base.default_alphas(ctx.geometry.d):
            consts[alpha] = max(base.grad_sup(ref.scale(k).position, alpha)
                                / base.position_envelope(ctx.geometry.L, k, ctx.geometry.d, alpha)
                                for k in range(1, ctx.geometry.N + 1))
        rep.extend(improved.verify_final_bounds(dec, dirs, ell_max=ell, base_constants=consts))
    # divided differences against finite differences of the whole pipeline
    dA = dirs[0]
    analytic = dec.spectral_derivative(dA, 1)

    def builder(gen):
        return [s.spectral for s in ctx.decompose(gen, K=K).scales]

    fd = base.finite_difference_spectral(builder, ctx.generator, dA, 1)
    for k, (a, f) in enumerate(zip(analytic, fd), start=1):
        # floor for scales that do not depend on the generator at all
        scale = max(np.abs(a).max(), 1e-6 * np.abs(dec.scale(k).spectral).max())
        gap = float(np.abs(a - f).max() / scale)
        rep.add("derivative_consistency", k, None, "|divided - finite|/|divided|", gap, 1e-5,
                passed=gap <= 1e-5)
    write_report(out, rep)
    write_json(os.path.join(out, "summary.json"), summary_of(dec))
    return rep


def cmd_sample(ctx, out, seed):
    cfg = ctx.cfg["sample"]
    g = ctx.geometry
    k = cfg["scale"]
    if k is None:
        spectral = elliptic.green_spectral(ctx.generator, g)
        kid = "green"
    else:
        dec = ctx.decompose()
        spectral = dec.scale(k).spectral
        kid = "%s/scale%d" % (dec.kind, k)
    position = base.to_position(spectral, g)
    batch = sampler.sample(spectral, g, seed, cfg["count"], workers=ctx.workers, kernel_id=kid)
    rep = BoundsReport()
    rep.add("sample", None, None, "imaginary residue", batch.imag_residue, 1e-12,
            passed=batch.imag_residue <= 1e-12)
    rng = np.random.default_rng(seed)
    limit = ctx.tol["residual_sigmas"]
    res = sampler.covariance_residuals(batch, position, g, cfg["points"], rng)
    for r in res:
        rep.add("covariance", None, None, "z %s-%s (%d,%d)" % (r["x"], r["y"], r["i"], r["j"]),
                abs(r["z"]), limit, passed=abs(r["z"]) <= limit)
    if k is not None and k <= g.N:
        gr = sampler.gradient_range_check(batch, g, k, position=position, seed=seed)
        rep.add("gradient_range", k, None, "worst |estimate|/band", gr["worst_ratio"], 1.0,
                passed=gr["ok"])
    write_report(out, rep)
    if cfg["export"]:
        with open(os.path.join(out, "samples.txt"), "w") as fh:
            fh.write(batch.to_text(g))
    write_json(os.path.join(out, "residuals.json"), res)
    return rep


def cmd_renorm(ctx, out, seed):
    cfg = ctx.cfg["renorm"]
    tol = ctx.tol
    g = ctx.geometry
    L, d = g.L, g.d
    dec = ctx.decompose()
    rep = BoundsReport()
    for k in range(1, g.N + 1):
        for nbar in range(k, g.N + 1):
            ck = renorm.coarse_kernel(dec, k, nbar)
            rep.add("coarse_routes", k, nbar, "relative gap", ck.route_error, 1e-10,
                    passed=ck.route_error <= 1e-10)
    k = cfg["k"]
    small = renorm.block_sites(d, 2)
    Fq = renorm.pair_functional(small, 0, len(small) - 1, m=g.m)
    loc = renorm.localization_check(Fq, dec, k + 1, count=cfg["count"], seed=seed, workers=ctx.workers)
    rep.add("localization", k + 1, loc["nbar"], "quadratic exact gap", loc["exact_gap"],
            tol["localization_exact"], passed=loc["exact_gap"] <= tol["localization_exact"])
    Fb = renorm.exp_square(small, 1.0)
    loc = renorm.localization_check(Fb, dec, k + 1, count=cfg["count"], seed=seed + 7,
                                    workers=ctx.workers)
    rep.add("localization", k + 1, loc["nbar"], "bounded F |z|", abs(loc["z"]),
            tol["localization_sigmas"], passed=abs(loc["z"]) <= tol["localization_sigmas"])
    D = L ** k
    nbar = max(renorm.select_nbar(D, L, g.N), k + 1)
    sites = renorm.block_sites(d, D + 1)
    dA = ctx.directions()[0]
    M, Md, Mdd = renorm.support_derivatives(dec, dA, k + 1, sites, nbar)
    K = dec.params.get("K")

    def path(t):
        moved = ctx.decompose(ctx.generator + dA.scaled(t), K=K)
        return renorm.support_derivatives(moved, dA, k + 1, sites, nbar, 0)[0]

    H = np.random.default_rng(seed).standard_normal(M.shape)
    Fh = renorm.quadratic_functional(sites, H + H.T)
    for ell, key in ((1, "deriv_exact"), (2, "deriv_second")):
        r = renorm.gauss_expectation_deriv(M, Md, Fh, ell, Mdd)
        rel = abs(r.analytic - r.closed_form) / max(abs(r.closed_form), 1e-300)
        rep.add("derivative", k + 1, ell, "weight vs closed form", rel, tol[key], passed=rel <= tol[key])
        r = renorm.gauss_expectation_deriv(M, Md, Fh, ell, Mdd, path=path)
        rep.add("derivative", k + 1, ell, "weight vs pipeline differences", r.gap, tol[key],
                passed=r.gap <= tol[key])
    Fe = renorm.exp_square(sites, 0.5)
    for ell in (1, 2):
        r = renorm.gauss_expectation_deriv(M, Md, Fe, ell, Mdd, count=cfg["mc_count"], seed=seed)
        rep.add("derivative_mc", k + 1, ell, "|analytic - fd| / se", r.gap, 5.0, passed=r.gap <= 5.0)
    lhs, rhs = renorm.trace_chain(M, Md)
    rep.add("trace_chain", k + 1, None, "trace / HS^2", lhs / rhs, 1.0, passed=lhs <= rhs * (1 + 1e-12))
    for kk in range(1, g.N + 1):
        hs = renorm.hs_quotient_sum(dec, dA, kk)
        rep.add("hs_sum", kk, g.N, "sum_p |C^-1/2 Cdot C^-1/2|^2", hs, np.inf, passed=np.isfinite(hs))
    spectra, derivs, nz = renorm.scaled_toy(ctx.generator, g)
    toy = renorm.hs_sum_from_spectra(spectra[g.N - 1], derivs[g.N - 1], nz)
    target = g.m * (g.volume - 1)
    rep.add("hs_toy", g.N, None, "toy sum vs m(L^Nd - 1)", toy, target,
            passed=abs(toy - target) <= 1e-9 * target)
    rep.extend(renorm.whittle_check(sizes=(4, 16), matrices=12, count=5000, seed=seed))
    write_report(out, rep)
    return rep


def cmd_sweep(ctx, out, seed):
    levels = ctx.cfg["sweep"]["N"]
    dA = ctx.directions()[0]

    def cell(N):
        sub = Context(ctx.cfg.with_N(N), ctx.workers)
        dec = sub.decompose()
        row = {"N": N, "identity": base.identity_error(dec),
               "range": max(base.range_error(dec, k) for k in range(1, N + 1)),
               "hs_top": renorm.hs_quotient_sum(dec, dA, N)}
        if dec.kind.startswith("final"):
            row["K"] = dec.params["K"]
            row["c_lower"] = improved.verify_final_bounds(dec, [dA]).fitted["c_lower"]
        return row

    if ctx.workers > 1:
        with ThreadPoolExecutor(ctx.workers) as ex:
            rows = list(ex.map(cell, levels))
    else:
        rows = [cell(N) for N in levels]
    rep = BoundsReport()
    for r in rows:
        rep.add("sweep", r["N"], None, "hs_top", r["hs_top"], np.inf, passed=np.isfinite(r["hs_top"]))
    hs = [r["hs_top"] for r in rows]
    ratio = max(hs) / min(hs)
    limit = ctx.tol["uniform_ratio"]
    rep.add("uniform_in_N", None, None, "max/min hs_top", ratio, limit, passed=ratio <= limit)
    rep.fitted["hs_ratio"] = ratio
    if all("c_lower" in r for r in rows):
        cl = [r["c_lower"] for r in rows]
        spread = (max(cl) - min(cl)) / max(cl)
        rep.add("uniform_in_N", None, None, "c_lower relative spread", spread, 0.25,
                passed=spread <= 0.25)
    os.makedirs(out, exist_ok=True)
    cols = sorted({c for r in rows for c in r})
    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r.get(c, "")) for c in cols) + "\n")
    top = Context(ctx.cfg.with_N(max(levels)), ctx.workers)
    k = ctx.cfg["renorm"]["k"]
    if k + 2 <= max(levels):
        sm = renorm.smoothness_suite(top.decompose(), dA, k, count=ctx.cfg["renorm"]["mc_count"],
                                     seed=seed)
        rep.extend(sm)
    write_report(out, rep)
    return rep


COMMANDS = ("decompose", "verify", "sample", "renorm", "sweep")


def build_parser():
    p = argparse.ArgumentParser(prog="frd", description="Finite range decompositions on discrete tori.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML configuration file")
        s.add_argument("--out", default="frd_out", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--tol-scale", type=float, default=1.0,
                       help="multiplies every relative tolerance")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.tol_scale <= 0:
            raise ConfigError("--tol-scale: must be positive")
        if args.workers < 1:
            raise ConfigError("--workers: must be at least 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed: must be nonnegative")
        cfg = cfg.scaled_tolerances(args.tol_scale)
    except (ConfigError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg["seed"] if args.seed is None else args.seed
    try:
        ctx = Context(cfg, args.workers)
        if args.command == "decompose":
            rep = cmd_decompose(ctx, args.out)
        elif args.command == "verify":
            rep = cmd_verify(ctx, args.out)
        elif args.command == "sample":
            rep = cmd_sample(ctx, args.out, seed)
        elif args.command == "renorm":
            rep = cmd_renorm(ctx, args.out, seed)
        else:
            rep = cmd_sweep(ctx, args.out, seed)
    except ValueError as exc:
        rep = BoundsReport()
        rep.add("construction", None, None, str(exc), np.nan, np.nan, passed=False)
        write_report(args.out, rep)
        print("construction failed: %s" % exc, file=sys.stderr)
        return EXIT_BUILD
    failed = [r for r in rep.rows if not r["pass"]]
    print("%s: %d checks, %d failed" % (args.command, len(rep.rows), len(failed)))
    for r in failed:
        print("  FAIL %s k=%s j=%s %s measured=%r bound=%r" % (
            r["suite"], r["k"], r["j"], r["quantity"], r["measured"], r["bound"]))
    return EXIT_OK if not failed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
