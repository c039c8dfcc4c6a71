import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahlerlab.errors import NotKahler, Unsupported
from kahlerlab.geometry import (
    Background,
    KahlerPotential,
    MetricParams,
    aubin_functional,
    band_limited_field,
    build_potential,
    dense_laplacian_matrix,
    dirichlet_product,
    flat_potential,
    gradient_pairing,
    hermitian_pairing,
    hessian_bound,
    hessian_pairing,
    inner_product,
    laplacian,
    normalize_potential,
    project_tangent,
    real_gradient_pairing,
)
from kahlerlab.spectral import Grid, complex_gradient, complex_hessian

from conftest import curved_potential

TWO_PI = 2 * np.pi
PI2 = np.pi ** 2
seeds = st.integers(0, 2**32 - 1)


def test_flat_potential_is_background(grid1):
    P = flat_potential(Background(grid1))
    assert np.allclose(P.metric[..., 0, 0], 0.5)
    assert np.allclose(P.density, 1.0)
    assert P.min_eigenvalue == pytest.approx(1.0)


def test_single_mode_metric_and_density(grid1):
    x, _ = grid1.coords
    eps = 1e-3
    P = build_potential(eps * np.cos(TWO_PI * x), Background(grid1))
    assert np.allclose(P.metric[..., 0, 0].real, 0.5 - eps * PI2 * np.cos(TWO_PI * x), atol=1e-14)
    assert np.allclose(P.density, 1 - 2 * eps * PI2 * np.cos(TWO_PI * x), atol=1e-13)


def test_large_potential_is_not_kahler(grid1):
    x, _ = grid1.coords
    with pytest.raises(NotKahler) as err:
        build_potential(np.cos(TWO_PI * x), Background(grid1))
    assert err.value.min_eigenvalue < 0


@given(seeds)
def test_density_invariants(seed):
    grid = Grid(2, 8)
    P = curved_potential(grid, np.random.default_rng(seed))
    assert np.all(P.density > 0)
    assert P.integrate(np.ones(grid.shape)) == pytest.approx(1.0, rel=1e-10)
    det = np.real(np.linalg.det(2 * P.metric))
    assert np.max(np.abs(det - P.density)) <= 1e-12


def test_laplacian_examples(grid1):
    x, _ = grid1.coords
    P = flat_potential(Background(grid1))
    assert np.max(np.abs(laplacian(P, np.full(grid1.shape, 4.0)))) == 0.0
    assert np.allclose(laplacian(P, np.cos(TWO_PI * x)), -2 * PI2 * np.cos(TWO_PI * x), atol=1e-11)


@pytest.mark.parametrize("n", [1, 2])
def test_laplacian_matches_dense_assembly(n, rng):
    grid = Grid(n, 8)
    P = curved_potential(grid, rng, max_mode=1)
    f = band_limited_field(grid, rng, 2)
    A = dense_laplacian_matrix(P)
    assert np.max(np.abs(A @ f.ravel() - laplacian(P, f).ravel())) <= 1e-10


def test_dense_assembly_independent_oracle(rng):
    # build g^{j kbar} d_j d_kbar from dense 1-D spectral differentiation matrices
    grid = Grid(1, 8)
    P = curved_potential(grid, rng, max_mode=1)
    N = 8
    k = np.fft.fftfreq(N, 1.0 / N)
    k2 = (TWO_PI * k) ** 2
    D2 = np.real(np.fft.ifft(-k2[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0))
    I = np.eye(N)
    lap_real = np.kron(D2, I) + np.kron(I, D2)
    gi = P.inverse_metric[..., 0, 0].real.ravel()
    A = gi[:, None] * 0.25 * lap_real
    f = band_limited_field(grid, rng, 2)
    assert np.max(np.abs(A @ f.ravel() - laplacian(P, f).ravel())) <= 1e-10


@given(seeds)
def test_laplacian_self_adjoint_and_mean_free(seed):
    r = np.random.default_rng(seed)
    grid = Grid(2, 8)
    P = curved_potential(grid, r, max_mode=1)
    f, h = band_limited_field(grid, r, 2), band_limited_field(grid, r, 2)
    lhs = P.integrate(laplacian(P, f) * h)
    rhs = P.integrate(f * laplacian(P, h))
    assert abs(lhs - rhs) <= 1e-9
    assert abs(P.integrate(laplacian(P, f))) <= 1e-10


def test_hermitian_pairing_examples(grid1, rng):
    x, _ = grid1.coords
    P = flat_potential(Background(grid1))
    f = np.cos(TWO_PI * x)
    assert np.max(np.abs(hermitian_pairing(P, np.ones(grid1.shape), np.ones(grid1.shape)))) == 0
    assert np.allclose(hermitian_pairing(P, f, f), 4 * PI2 ** 2 * np.cos(TWO_PI * x) ** 2, atol=1e-9)
    Q = curved_potential(Grid(2, 8), rng)
    a, b = band_limited_field(Q.grid, rng, 2), band_limited_field(Q.grid, rng, 2)
    assert np.max(np.abs(hermitian_pairing(Q, a, b) - hermitian_pairing(Q, b, a))) <= 1e-12
    assert np.min(hermitian_pairing(Q, a, a)) >= -1e-12


def test_gradient_pairing_examples(grid1):
    x, _ = grid1.coords
    P = flat_potential(Background(grid1))
    f = np.sin(TWO_PI * x)
    # (df, df) = 2 g^{1 1bar} |f_z|^2 with f_z = pi cos(2 pi x)
    assert np.allclose(real_gradient_pairing(P, f, f), 4 * PI2 * np.cos(TWO_PI * x) ** 2, atol=1e-10)
    assert np.allclose(gradient_pairing(P, f, f), 2 * PI2 * np.cos(TWO_PI * x) ** 2, atol=1e-10)


@given(seeds)
def test_green_identity(seed):
    r = np.random.default_rng(seed)
    grid = Grid(2, 8)
    P = curved_potential(grid, r, max_mode=1)
    f, h = band_limited_field(grid, r, 2), band_limited_field(grid, r, 2)
    lhs = P.integrate(laplacian(P, f) * h)
    rhs = -P.integrate(gradient_pairing(P, f, h))
    assert lhs == pytest.approx(rhs, abs=1e-9)


@pytest.mark.parametrize("N, tol", [(8, 1e-6), (16, 1e-9)])
def test_key_integral_identity_n2(N, tol, rng):
    grid = Grid(2, N)
    P = curved_potential(grid, rng, max_mode=2)
    f = band_limited_field(grid, rng, 2)
    F = complex_hessian(grid, f)
    lhs = P.integrate(hessian_pairing(P, F, F))
    rhs = P.integrate(laplacian(P, f) ** 2)
    assert abs(lhs - rhs) / rhs <= tol


def test_aubin_functional_examples(grid2, rng):
    bg = Background(grid2)
    assert aubin_functional(flat_potential(bg)) == 0.0
    assert aubin_functional(build_potential(np.full(grid2.shape, 2.5), bg)) == pytest.approx(2.5)
    with pytest.raises(Unsupported):
        aubin_functional(type("Fake", (), {"grid": type("G", (), {"n_complex": 3})(),
                                          "background": bg})())


@pytest.mark.parametrize("n", [1, 2])
def test_aubin_first_variation(n, rng):
    grid = Grid(n, 16 if n == 1 else 8)
    P = curved_potential(grid, rng)
    psi = band_limited_field(grid, rng, 2)
    target = P.integrate(psi)
    errs = []
    for eps in (1e-3, 5e-4):
        Q = KahlerPotential(P.phi + eps * psi, P.background)
        errs.append(abs((aubin_functional(Q) - aubin_functional(P)) / eps - target))
    assert errs[1] < 0.6 * errs[0] or errs[1] < 1e-9
    assert errs[0] < 1e-2


def test_aubin_first_variation_curved_background(rng):
    grid = Grid(1, 16)
    x, _ = grid.coords
    bg = Background(grid, 0.05 / (2 * PI2) * np.cos(TWO_PI * x))
    P = curved_potential(grid, rng, background=bg)
    psi = band_limited_field(grid, rng, 2)
    eps = 1e-4
    Q = KahlerPotential(P.phi + eps * psi, bg)
    fd = (aubin_functional(Q) - aubin_functional(P)) / eps
    assert fd == pytest.approx(P.integrate(psi), abs=1e-3)


def test_normalize_potential(grid1, rng):
    P = curved_potential(grid1, rng)
    assert abs(aubin_functional(P)) <= 1e-12
    again = normalize_potential(P)
    assert np.max(np.abs(again.phi - P.phi)) <= 1e-12
    shifted = normalize_potential(P.shifted(5.0))
    assert np.max(np.abs(shifted.phi - P.phi)) <= 1e-12


def test_project_tangent(grid2, rng):
    P = curved_potential(grid2, rng)
    psi = project_tangent(P, band_limited_field(grid2, rng, 2) + 3.0)
    assert abs(P.integrate(psi)) <= 1e-10


def test_metric_params_validation():
    with pytest.raises(ValueError):
        MetricParams(0, 0, 0)
    with pytest.raises(ValueError):
        MetricParams(-1, 1, 0)
    assert not MetricParams.mabuchi().well_posed
    assert MetricParams.gradient().well_posed and MetricParams.calabi().well_posed


def test_single_mode_inner_product_constants(grid1):
    x, _ = grid1.coords
    P = flat_potential(Background(grid1))
    psi = np.cos(TWO_PI * x)
    # tabulated single-mode constants
    assert inner_product(P, psi, psi, MetricParams.mabuchi()) == pytest.approx(0.5)
    assert inner_product(P, psi, psi, MetricParams.gradient()) == pytest.approx(PI2)
    assert dirichlet_product(P, psi, psi) == pytest.approx(2 * PI2)
    assert inner_product(P, psi, psi, MetricParams.calabi()) == pytest.approx(2 * PI2 ** 2)
    total = inner_product(P, psi, psi, MetricParams(1, 1, 1))
    assert total == pytest.approx(0.5 + PI2 + 2 * PI2 ** 2)
    assert inner_product(P, 0 * psi, 0 * psi, MetricParams(1, 1, 1)) == 0.0


@given(seeds, st.sampled_from([(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 2, 3)]))
def test_inner_product_symmetric_cauchy_schwarz(seed, abc):
    r = np.random.default_rng(seed)
    grid = Grid(1, 16)
    P = curved_potential(grid, r)
    params = MetricParams(*abc)
    a = project_tangent(P, band_limited_field(grid, r, 2))
    b = project_tangent(P, band_limited_field(grid, r, 2))
    gab, gba = inner_product(P, a, b, params), inner_product(P, b, a, params)
    assert gab == pytest.approx(gba, rel=1e-12, abs=1e-14)
    assert gab ** 2 <= inner_product(P, a, a, params) * inner_product(P, b, b, params) * (1 + 1e-12)


def test_hessian_bound_examples(grid1, grid2, rng):
    x, _ = grid1.coords
    P = flat_potential(Background(grid1))
    assert hessian_bound(P, np.full(grid1.shape, 1.0)) == 0.0
    assert hessian_bound(P, np.cos(TWO_PI * x)) == pytest.approx(2 * PI2)
    Q = curved_potential(grid2, rng)
    psi = band_limited_field(grid2, rng, 2)
    assert hessian_bound(Q, 2 * psi) == pytest.approx(2 * hessian_bound(Q, psi), rel=1e-14)


def test_complex_gradient_convention(grid1):
    x, y = grid1.coords
    p = complex_gradient(grid1, np.sin(TWO_PI * x))
    assert np.allclose(p[..., 0], np.pi * np.cos(TWO_PI * x), atol=1e-12)
