"""Acceptance suite at desk scale: d = 2, L = 3, m in {1, 2}, N in {2, 3, 4}.

Every test prints one PASS/FAIL line into the "acceptance criteria" section
of the terminal summary and then asserts the same verdict.
"""

import itertools

import numpy as np
from numpy.polynomial.legendre import leggauss

from frd import base, elliptic, improved, renorm, sampler, wfamily
from frd.bounds import fit_slope
from frd.wfamily import WFamily

KINDS = ("base", "improved", "final")
NS = (2, 3, 4)
MS = (1, 2)
MSETS = ("nearest", "next")
DESK = list(itertools.product(NS, MS, MSETS))


def test_scales_sum_to_the_inverse(desk, record):
    worst = {}
    for kind in KINDS:
        worst[kind] = max(base.identity_error(desk.decomposition(kind, N, m, ms)) for N, m, ms in DESK)
    ok = max(worst.values()) <= 1e-10
    record("decomposition identity", ok, " ".join("%s=%.1e" % kv for kv in worst.items()) + " (<= 1e-10)")
    assert ok


def test_scale_kernels_constant_beyond_range(desk, record):
    worst = {}
    for kind in KINDS:
        worst[kind] = max(base.range_error(desk.decomposition(kind, N, m, ms), k)
                          for N, m, ms in DESK for k in range(1, N + 1))
    ok = max(worst.values()) <= 1e-9
    record("finite range", ok, " ".join("%s=%.1e" % kv for kv in worst.items()) + " (<= 1e-9)")
    assert ok


def test_tail_matrices_negative_and_generator_free(desk, record):
    psd, spread = 0.0, 0.0
    for kind in KINDS:
        for N, m, ms in DESK:
            decs = [desk.decomposition(kind, N, m, ms, which) for which in range(4)]
            for k in range(1, N + 1):
                M0 = decs[0].scale(k).tail
                nrm = np.linalg.norm(M0, 2)
                for d in decs:
                    Mk = d.scale(k).tail
                    psd = max(psd, -np.linalg.eigvalsh(-Mk)[0] / np.abs(Mk).max())
                    spread = max(spread, np.linalg.norm(Mk - M0, 2) / nrm)
    ok = psd <= 1e-10 and spread <= 1e-9
    record("tail matrix", ok, "neg(-M)=%.1e (<= 1e-10) |M(A)-M(A')|/|M|=%.1e (<= 1e-9) over 4 generators"
           % (psd, spread))
    assert ok


def test_symbol_within_ellipticity_bounds(desk, record):
    lower, upper = np.inf, 0.0
    for N, m, ms in DESK:
        for gen in desk.generators(m, ms):
            sb = elliptic.symbol_bounds(gen, desk.geometry(N, m))
            lower, upper = min(lower, sb.lower_ratio), max(upper, sb.upper_ratio)
    ok = lower >= 1 - 1e-12 and upper <= 1 + 1e-12
    record("symbol bounds", ok, "min lower ratio=%.4f max upper ratio=%.2e" % (lower, upper))
    assert ok


def test_final_positivity_envelope_uniform_in_N(desk, record):
    ok = True
    parts = []
    for m, ms in itertools.product(MS, MSETS):
        dA = desk.direction(m, ms)
        cs = [improved.verify_final_bounds(desk.decomposition("final", N, m, ms), [dA]).fitted["c_lower"]
              for N in NS]
        spread = (max(cs) - min(cs)) / max(cs)
        ok &= min(cs) > 0 and spread <= 0.25
        parts.append("m=%d %s c=%s spread=%.2f" % (m, ms, "/".join("%.3g" % c for c in cs), spread))
    record("final lower envelope", ok, "; ".join(parts) + " (c > 0, spread <= 0.25)")
    assert ok


def test_quotient_decays_across_annuli(desk, record):
    ok = True
    parts = []
    for m, ms in itertools.product(MS, MSETS):
        dA = desk.direction(m, ms)
        for N in NS:
            cells = improved.quotient_cells(desk.decomposition("final", N, m, ms), [dA])
            slope, spread = improved.quotient_fit(cells, 3)
            good = abs(slope - (-2.0)) <= 0.4 and spread <= 10
            ok &= good
            parts.append("%d%s%d:%+.2f/%.1f" % (m, ms[0], N, slope, spread))
    record("quotient decay", ok, "slope/spread " + " ".join(parts) + " (slope -2 +- 0.4, spread <= 10)")
    assert ok


def test_position_derivative_scaling_in_k(desk, record):
    ok = True
    parts = []
    N = max(NS)
    for kind, ms, m in itertools.product(KINDS, MSETS, MS):
        dec = desk.decomposition(kind, N, m, ms)
        alphas = base.default_alphas(2)
        if kind != "base":
            alphas = [a for a in alphas if sum(a) <= dec.params.get("n", 1)]
        for a in alphas:
            vals = [base.grad_sup(dec.scale(k).position, a) for k in range(1, N + 1)]
            slope = fit_slope(range(1, N + 1), np.log(vals)) / np.log(3)
            target = -(2 - 2 + sum(a))
            good = abs(slope - target) <= 0.2 * max(1.0, abs(target))
            ok &= good
            if m == 1:
                parts.append("%s/%s/|a|=%d:%+.2f" % (kind[0], ms[0], sum(a), slope))
    record("derivative scaling", ok, " ".join(parts) + " (target -|a|, +-20%)")
    assert ok


def test_top_scale_hs_sum_uniform_in_N(desk, record):
    ok = True
    parts = []
    for m, ms in itertools.product(MS, MSETS):
        dA = desk.direction(m, ms)
        hs = [renorm.hs_quotient_sum(desk.decomposition("final", N, m, ms), dA, N) for N in NS]
        ratio = max(hs) / min(hs)
        ok &= ratio <= 1.5
        parts.append("m=%d %s %s ratio=%.3g" % (m, ms, "/".join("%.3g" % h for h in hs), ratio))
    toy_err = 0.0
    for N, m in itertools.product(NS, MS):
        g = desk.geometry(N, m)
        spectra, derivs, nz = renorm.scaled_toy(desk.generators(m, "nearest")[0], g)
        target = m * (g.volume - 1)
        toy_err = max(toy_err, abs(renorm.hs_sum_from_spectra(spectra[N - 1], derivs[N - 1], nz) - target))
    toy_ok = toy_err <= 1e-9
    ok &= toy_ok
    record("uniform-in-N HS sum", ok, "; ".join(parts) + " (<= 1.5); toy |sum - m(L^Nd-1)|=%.1e" % toy_err)
    assert ok


def test_coarse_measure_localizes(desk, record):
    route = 0.0
    for kind, (N, m, ms) in itertools.product(("base", "final"), DESK):
        dec = desk.decomposition(kind, N, m, ms)
        for k in range(1, N + 1):
            for nbar in range(k, N + 1):
                route = max(route, renorm.coarse_kernel(dec, k, nbar).route_error)
    exact, zs = 0.0, []
    for kind, m in itertools.product(("base", "final"), MS):
        dec = desk.decomposition(kind, 3, m)
        sup = renorm.block_sites(2, 3)
        for k in (1, 2):
            q = renorm.localization_check(renorm.pair_functional(sup, 0, 8, 0, m - 1, m=m), dec, k,
                                          count=1000, seed=k)
            exact = max(exact, q["exact_gap"])
            for i, F in enumerate((renorm.exp_square(sup, 2.0 / dec.scale(k).position.max()),
                                   renorm.smoothed_indicator(sup, float(dec.scale(k).position.max()),
                                                             0.2 * float(dec.scale(k).position.max())))):
                zs.append(renorm.localization_check(F, dec, k, count=10000, seed=100 * k + i)["z"])
    zmax = float(np.max(np.abs(zs)))
    ok = route <= 1e-10 and exact <= 1e-9 and zmax <= 3
    record("localization", ok, "routes=%.1e (<= 1e-10) quadratic=%.1e (<= 1e-9) max|z|=%.2f over %d (<= 3)"
           % (route, exact, zmax, len(zs)))
    assert ok


def _pipeline_path(desk, kind, N, m, dA, k, sites, nbar):
    gen = desk.generators(m, "nearest")[0]
    g = desk.geometry(N, m)
    fam = desk.family(m, "nearest")
    K = desk.K(N, m, "nearest")

    def path(t):
        a = gen + dA.scaled(t)
        dec = (base.base_decomposition(a, g, fam) if kind == "base"
               else improved.final_decomposition(a, g, 1, 3, K, fam))
        return renorm.support_derivatives(dec, dA, k, sites, nbar, 0)[0]

    return path


def test_derivative_weights_match_exact_derivatives(desk, record):
    first, second = 0.0, 0.0
    rng = np.random.default_rng(0)
    for kind, m in itertools.product(("base", "final"), MS):
        N, k, nbar = 3, 2, 2
        dec = desk.decomposition(kind, N, m)
        dA = desk.direction(m, "nearest")
        sites = renorm.block_sites(2, 3)
        M, Md, Mdd = renorm.support_derivatives(dec, dA, k, sites, nbar)
        H = rng.standard_normal(M.shape)
        F = renorm.quadratic_functional(sites, H + H.T, const=0.3)
        r1 = renorm.gauss_expectation_deriv(M, Md, F, 1)
        first = max(first, abs(r1.analytic - r1.closed_form) / abs(r1.closed_form))
        path = _pipeline_path(desk, kind, N, m, dA, k, sites, nbar)
        r2 = renorm.gauss_expectation_deriv(M, Md, F, 2, Mdd, path=path)
        second = max(second, r2.gap)
    ok = first <= 1e-6 and second <= 1e-4
    record("derivative formulas", ok, "first vs closed form=%.1e (<= 1e-6) second vs differences=%.1e (<= 1e-4)"
           % (first, second))
    assert ok


def test_smoothness_exponent_in_diameter(desk, record):
    ok = True
    parts = []
    for kind in ("base", "final"):
        dec = desk.decomposition(kind, 4)
        rep = renorm.smoothness_suite(dec, desk.direction(1, "nearest"), 1, count=100000)
        for ell in (1, 2):
            e, t = rep.fitted["exponent_l%d" % ell], rep.fitted["target_l%d" % ell]
            ok &= abs(e - t) <= 0.25 * t
            parts.append("%s l=%d: %.3f vs %.1f" % (kind, ell, e, t))
    record("smoothness scaling", ok, "; ".join(parts) + " (+-25%)")
    assert ok


def test_sampler_covariance_and_far_gradients(desk, record):
    zmax, worst, pairs, exact = 0.0, 0.0, 0, 0.0
    ok = True
    for kind, N, m, k in (("base", 3, 1, 2), ("final", 2, 2, 1), ("improved", 3, 2, 1)):
        dec = desk.decomposition(kind, N, m)
        s = dec.scale(k)
        batch = sampler.sample(s.spectral, dec.geometry, 7 + k, 10000, workers=2)
        res = sampler.covariance_residuals(batch, s.position, dec.geometry, 20, np.random.default_rng(k))
        zmax = max(zmax, max(abs(r["z"]) for r in res))
        chk = sampler.gradient_range_check(batch, dec.geometry, k, s.position, seed=k)
        ok &= chk["ok"]
        worst = max(worst, chk["worst_ratio"])
        pairs += len(chk["pairs"])
        exact = max(exact, max(abs(r["exact"]) for r in chk["pairs"]) / np.abs(s.position).max())
    ok &= zmax <= 5
    record("sampler", ok, "max|z|=%.2f (<= 5) far-gradient worst/band=%.2f over %d entries "
           "(family-wise 1e-3 band), exact far covariance=%.1e" % (zmax, worst, pairs, exact))
    assert ok


def test_w_family_identity_and_structure(record):
    fam = WFamily(16.0)
    ident = 0.0
    for frac in (0.01, 0.1, 0.5):
        lam = frac * fam.B
        ident = max(ident, abs(fam.integral_series(lam).value(np.array([lam]))[0] * lam - 1))
        # second route: quadrature in t of the evaluated W
        T = wfamily.calibration_horizon(lam, fam.B)
        edges = np.concatenate([[0.0], np.geomspace(0.5, T, 200)])
        xg, wg = leggauss(30)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            t = a + (b - a) * 0.5 * (xg + 1)
            total += sum(w * ti * fam.w_eval(ti, lam) for ti, w in zip(t, 0.5 * (b - a) * wg))
        ident = max(ident, abs(total * lam - 1))
    lam = np.linspace(0, fam.B, 4001)
    wmin = min(fam.w_eval(t, lam).min() for t in np.geomspace(0.2, 400, 60))
    structural = all(len(fam.cheb_coeffs(t).coeffs) == int(np.floor(t)) + 1
                     and np.all(wfamily.phi_hat(np.arange(len(fam.cheb_coeffs(t).coeffs), 3 * int(t) + 3) / t) == 0)
                     for t in (0.5, 1.0, 2.5, 7.0, 30.0))
    ok = ident <= 1e-6 and wmin >= -1e-10 and structural
    record("W family", ok, "identity=%.1e (<= 1e-6) min W=%.1e (>= -1e-10) c_j=0 for j>t: %s"
           % (ident, wmin, structural))
    assert ok


def test_centred_quadratic_form_moments(record):
    rep = renorm.whittle_check(sizes=(4, 16, 64), s_grid=(1, 2, 3, 4), matrices=100, count=20000)
    bounded = all(r["pass"] for r in rep.select("whittle"))
    ident = rep.select("whittle_identity")
    ident_ok = all(r["pass"] for r in ident)
    ok = bounded and ident_ok
    record("quadratic form moments", ok, "C_s=%s (under dimension-free ceiling: %s) identity z=%s"
           % ("/".join("%.3g" % rep.fitted["C_s%d" % s] for s in (1, 2, 3, 4)), bounded,
              "/".join("%+.2f" % r["ratio"] for r in ident)))
    assert ok
