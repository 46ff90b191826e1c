import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frd.matfn import (Exp, Power, SpectralSeries, Sqrt, inverse_series, mat_fn, mat_fn_deriv,
                       verify_matfn_bound)
from frd.wfamily import WFamily

B = 8.0


def rand_herm(rng, m, lo=0.5, hi=7.5, complex_=True):
    Z = rng.standard_normal((m, m)) + (1j * rng.standard_normal((m, m)) if complex_ else 0)
    Q, _ = np.linalg.qr(Z)
    lam = rng.uniform(lo, hi, m)
    return (Q * lam) @ Q.conj().T


def rand_dir(rng, m):
    Z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    S = 0.5 * (Z + Z.conj().T)
    return S / np.linalg.norm(S, 2)


@pytest.fixture(scope="module")
def w_series():
    fam = WFamily(B)
    return SpectralSeries(fam.cheb_coeffs(5.5).coeffs, B)


def test_identity_function_derivative(rng):
    H, D = rand_herm(rng, 4), rand_dir(rng, 4)
    np.testing.assert_allclose(mat_fn_deriv(H, D, Power(1), 1), D, atol=1e-13)
    np.testing.assert_allclose(mat_fn_deriv(H, D, Power(1), 2), 0, atol=1e-13)


def test_square_product_rule(rng):
    H, D = rand_herm(rng, 4), rand_dir(rng, 4)
    np.testing.assert_allclose(mat_fn_deriv(H, D, Power(2), 1), H @ D + D @ H, atol=1e-12)
    np.testing.assert_allclose(mat_fn_deriv(H, D, Power(2), 2), 2 * D @ D, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_w_family_derivative_matches_finite_differences(order, w_series, rng):
    for _ in range(5):
        H, D = rand_herm(rng, 3), rand_dir(rng, 3)
        h = 1e-4

        def f(s):
            return mat_fn(H + s * D, w_series)

        if order == 1:
            fd = (f(h) - f(-h)) / (2 * h)
        else:
            h = 1e-3
            fd = (f(h) - 2 * f(0) + f(-h)) / h ** 2
        an = mat_fn_deriv(H, D, w_series, order)
        assert np.linalg.norm(an - fd) <= 1e-6 * np.linalg.norm(an)


def test_degenerate_eigenvalues_fall_back_to_derivative(rng):
    D = rand_dir(rng, 3)
    H = 2.0 * np.eye(3)
    np.testing.assert_allclose(mat_fn_deriv(H, D, Exp(), 1), np.exp(2.0) * D, atol=1e-12)
    np.testing.assert_allclose(mat_fn_deriv(H, D, Exp(), 2), np.exp(2.0) * D @ D, atol=1e-12)
    H2 = np.diag([1.0, 1.0 + 1e-12, 3.0])
    ref = mat_fn_deriv(np.diag([1.0, 1.0, 3.0]), D, Exp(), 1)
    np.testing.assert_allclose(mat_fn_deriv(H2, D, Exp(), 1), ref, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    H = rand_herm(rng, 4)
    U, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    f = Sqrt()
    lhs = mat_fn(U @ H @ U.conj().T, f)
    rhs = U @ mat_fn(H, f) @ U.conj().T
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
def test_first_derivative_linear_in_direction(seed, a, b):
    rng = np.random.default_rng(seed)
    H, D1, D2 = rand_herm(rng, 3), rand_dir(rng, 3), rand_dir(rng, 3)
    f = Exp()
    lhs = mat_fn_deriv(H, a * D1 + b * D2, f, 1)
    rhs = a * mat_fn_deriv(H, D1, f, 1) + b * mat_fn_deriv(H, D2, f, 1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + abs(a) + abs(b)) * np.exp(7.5))


def test_second_derivative_is_hermitian(rng, w_series):
    H, D = rand_herm(rng, 4), rand_dir(rng, 4)
    d2 = mat_fn_deriv(H, D, w_series, 2)
    np.testing.assert_allclose(d2, d2.conj().T, atol=1e-14)


def test_batched_matches_single(rng):
    Hs = np.stack([rand_herm(rng, 3) for _ in range(4)])
    Ds = np.stack([rand_dir(rng, 3) for _ in range(4)])
    batch = mat_fn_deriv(Hs, Ds, Exp(), 2)
    for i in range(4):
        np.testing.assert_allclose(batch[i], mat_fn_deriv(Hs[i], Ds[i], Exp(), 2), atol=1e-12)


def test_bound_ratio_examples(rng, w_series):
    H, D = rand_herm(rng, 3), rand_dir(rng, 3)
    assert verify_matfn_bound(H, D, Power(1), 2) == 0.0
    for _ in range(20):
        h = rng.uniform(0.5, 7.5, (1, 1))
        dd = rng.uniform(-1, 1, (1, 1))
        assert verify_matfn_bound(h, dd, w_series, 1) <= 1.0 + 1e-12
    Hs = np.stack([rand_herm(rng, 3) for _ in range(100)])
    Ds = np.stack([rand_dir(rng, 3) for _ in range(100)])
    for order in (1, 2):
        ratios = verify_matfn_bound(Hs, Ds, w_series, order)
        assert np.all(np.isfinite(ratios))


def test_spectral_series_derivative_and_pole(rng):
    coeffs = rng.standard_normal(7)
    f = SpectralSeries(coeffs, B, pole=0.7)
    lam = rng.uniform(0.5, 7.5, 10)
    h = 1e-5
    fd = (f.value(lam + h) - f.value(lam - h)) / (2 * h)
    np.testing.assert_allclose(f.derivative(lam, 1), fd, rtol=1e-7)
    inv = inverse_series(B)
    np.testing.assert_allclose(inv.value(lam), 1 / lam, rtol=1e-15)
    np.testing.assert_allclose(inv.derivative(lam, 2), 2 / lam ** 3, rtol=1e-14)
    g = SpectralSeries.combine([2.0, -1.0], [f, inv], B)
    np.testing.assert_allclose(g.value(lam), 2 * f.value(lam) - 1 / lam, rtol=1e-12)
