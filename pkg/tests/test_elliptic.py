import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frd import elliptic, lattice
from frd.elliptic import MultiIndexSet
from frd.lattice import TorusGeometry

E1, E2, E12 = (1, 0), (0, 1), (1, 1)


def spectral_apply(symbol_arr, field, g):
    fh = lattice.dft(field, g)
    return lattice.idft(np.einsum("...rs,...s->...r", symbol_arr, fh), g).real


def test_index_set_needs_unit_vectors():
    with pytest.raises(ValueError):
        MultiIndexSet(((1, 0), (1, 1)))
    with pytest.raises(ValueError):
        MultiIndexSet(((1, 0), (0, 1), (0, 0)))
    ms = MultiIndexSet(((2, 0), (0, 1), (1, 0)))
    assert ms.indices == ((0, 1), (1, 0), (2, 0))
    assert ms.order == 2


def test_q_factor_examples():
    p = np.array([2 * np.pi / 3, 0.0])
    q = elliptic.q_vector(p, MultiIndexSet((E1, E2, (2, 0))))
    e = np.exp(2j * np.pi / 3) - 1
    np.testing.assert_allclose(q[1], e, atol=1e-15)
    assert abs(abs(q[1]) ** 2 - 3.0) < 1e-14
    np.testing.assert_allclose(q[2], e ** 2, atol=1e-15)
    assert q[0] == 0


def test_q_norm_two_sided_bound():
    g = TorusGeometry(3, 3, 2)
    p = g.momenta()
    q = elliptic.q_vector(p, MultiIndexSet.nearest_neighbour(2))
    q2 = np.sum(np.abs(q) ** 2, axis=-1)
    p2 = np.sum(p ** 2, axis=-1)
    assert np.all(4 / np.pi ** 2 * p2 <= q2 * (1 + 1e-14))
    assert np.all(q2 <= p2 * (1 + 1e-14) + 1e-300)


def test_laplacian_symbol_value():
    g = TorusGeometry(3, 1, 2, 2)
    A = elliptic.symbol(elliptic.laplacian(2, 2), g)
    np.testing.assert_allclose(A[1, 0], 3 * np.eye(2), atol=1e-14)
    assert not A[0, 0].any()


def test_generator_matrix_layout():
    ms = MultiIndexSet((E1, E2))
    blocks = np.arange(16.0).reshape(2, 2, 2, 2)
    gen = elliptic.Generator(ms, blocks, 1.0, 1.0)
    G = gen.matrix()
    assert G[0 * 2 + 1, 1 * 2 + 0] == blocks[0, 1, 1, 0]
    back = elliptic.Generator.from_matrix(ms, G, 2, 1.0, 1.0)
    np.testing.assert_array_equal(back.blocks, blocks)


@pytest.fixture
def random_gen(rng):
    ms = MultiIndexSet((E1, E2, E12))
    return elliptic.random_generator(ms, 2, 0.5, 2.0, rng)


def test_random_generator_in_class(random_gen):
    assert random_gen.validate(samples=2000)
    assert random_gen.norm() <= 2.0 + 1e-12
    assert random_gen.ellipticity_margin() >= -1e-12


def test_asymmetric_generator_rejected(random_gen):
    bad = random_gen.blocks.copy()
    bad[0, 1, 0, 1] += 0.1
    with pytest.raises(ValueError, match="symmetric"):
        elliptic.Generator(random_gen.index_set, bad, 0.5, 2.0).validate()


def test_symbol_window_by_eigenvalue_scan(random_gen):
    g = TorusGeometry(3, 3, 2, 2)
    sb = elliptic.symbol_bounds(random_gen, g)
    assert sb.ok
    lam = elliptic.symbol_eigenvalues(random_gen, g)
    p2 = np.sum(g.momenta() ** 2, axis=-1)
    nz = p2 > 0
    assert np.all(lam[nz][:, 0] >= sb.omega * p2[nz] * (1 - 1e-12))
    assert np.all(lam[nz][:, -1] <= sb.Omega * p2[nz] * (1 + 1e-12))


def test_symbol_hermitian_and_conjugate_symmetric(random_gen):
    g = TorusGeometry(3, 2, 2, 2)
    A = elliptic.symbol(random_gen, g)
    np.testing.assert_allclose(A, A.conj().swapaxes(-1, -2), atol=1e-13)
    neg = A[(-np.arange(9)) % 9][:, (-np.arange(9)) % 9]
    np.testing.assert_allclose(neg, A.conj(), atol=1e-13)


def test_apply_operator_spectral_route(random_gen, rng):
    g = TorusGeometry(3, 1, 2, 2)
    phi = rng.standard_normal(g.shape + (2,))
    pos = elliptic.apply_operator(random_gen, phi)
    spec = spectral_apply(elliptic.symbol(random_gen, g), phi, g)
    assert np.abs(pos - spec).max() <= 1e-10 * np.abs(spec).max()


def test_operator_positivity(random_gen, rng):
    g = TorusGeometry(3, 2, 2, 2)
    for _ in range(5):
        phi = rng.standard_normal(g.shape + (2,))
        lhs = np.sum(phi * elliptic.apply_operator(random_gen, phi))
        grad = sum(np.sum(lattice.forward_diff(phi, ax) ** 2) for ax in range(2))
        assert lhs >= random_gen.omega0 * grad * (1 - 1e-12)


def test_operator_has_range_R(random_gen):
    g = TorusGeometry(3, 2, 2, 2)
    R = random_gen.index_set.order
    far = g.sup_distance() > R
    for r in range(2):
        delta = np.zeros(g.shape + (2,))
        delta[0, 0, r] = 1.0
        col = elliptic.apply_operator(random_gen, delta)
        assert not col[far].any()


def test_green_laplacian_value():
    g = TorusGeometry(3, 1, 2)
    C = elliptic.green_spectral(elliptic.laplacian(2), g)
    assert abs(C[1, 0, 0, 0] - 1 / 3) < 1e-15
    assert C[0, 0, 0, 0] == 0


def test_green_inverts_operator(random_gen, rng):
    g = TorusGeometry(3, 2, 2, 2)
    C = elliptic.green_spectral(random_gen, g)
    phi = rng.standard_normal(g.shape + (2,))
    phi -= phi.mean(axis=(0, 1))
    back = elliptic.apply_operator(random_gen, spectral_apply(C, phi, g))
    assert np.abs(back - phi).max() <= 1e-10 * np.abs(phi).max()


def test_green_rejects_degenerate_generator():
    g = TorusGeometry(3, 1, 2)
    ms = MultiIndexSet.nearest_neighbour(2)
    blocks = np.zeros((2, 2, 1, 1))
    blocks[0, 0] = 1.0
    with pytest.raises(ValueError, match="elliptic"):
        elliptic.green_spectral(elliptic.Generator(ms, blocks, 1.0, 1.0), g)


def test_anisotropic_weights():
    gen = elliptic.anisotropic(MultiIndexSet.nearest_neighbour(2), 1, 0.5, 2.0)
    np.testing.assert_allclose(np.diag(gen.matrix()), [2.0, 0.5])
    assert gen.validate()


def test_symbol_caps_dominate_spectrum(random_gen):
    g = TorusGeometry(3, 3, 2, 2)
    lam = elliptic.symbol_eigenvalues(random_gen, g)
    ms = random_gen.index_set
    tight = elliptic.symbol_cap(ms, 2.0, 2, "tight")
    generic = elliptic.symbol_cap(ms, 2.0, 2, "generic")
    assert lam.max() <= tight <= generic


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 3))
def test_generator_text_roundtrip(seed, m):
    rng = np.random.default_rng(seed)
    ms = MultiIndexSet((E1, E2, E12, (2, 0)))
    gen = elliptic.random_generator(ms, m, 0.3, 1.7, rng)
    back = elliptic.generator_from_text(elliptic.generator_to_text(gen))
    np.testing.assert_array_equal(back.blocks, gen.blocks)
    assert back.index_set == gen.index_set
    assert (back.omega0, back.Omega0) == (gen.omega0, gen.Omega0)
