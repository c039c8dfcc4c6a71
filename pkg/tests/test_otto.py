import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahlerlab.errors import IncompatibleSource, PositivityLoss, ShockDetected
from kahlerlab.geometry import (
    Background,
    band_limited_field,
    build_potential,
    flat_potential,
    gradient_pairing,
    laplacian,
)
from kahlerlab.otto import (
    Density,
    entropy,
    heat_flow_exact,
    hj_evolve,
    hj_step,
    hopf_lax_1d,
    integrate_flow,
    k_energy,
    otto_inner,
    otto_tangent,
    otto_velocity,
    p_solve,
    ricci_background,
    sbar,
    scalar_curvature,
    scalar_potential_f,
)
from kahlerlab.spectral import Grid, integrate

from conftest import curved_potential

TWO_PI = 2 * np.pi
PI2 = np.pi ** 2


def curved_background(grid, amplitude=0.1):
    x = grid.coords[0]
    return Background(grid, amplitude / (2 * PI2) * np.cos(TWO_PI * x))


@pytest.fixture
def bg_curved(grid1):
    return curved_background(grid1)


# ---- background curvature ---------------------------------------------------------------
def test_flat_background_has_no_ricci(grid1, rng):
    bg = Background(grid1)
    assert np.max(np.abs(ricci_background(bg))) == 0
    assert sbar(curved_potential(grid1, rng)) == 0


def test_ricci_matches_closed_form(grid1):
    eps = 1e-3
    x = grid1.coords[0]
    bg = Background(grid1, eps * np.cos(TWO_PI * x))
    a = 2 * eps * PI2
    D = 1 - a * np.cos(TWO_PI * x)
    d2logD = (4 * PI2 * a * np.cos(TWO_PI * x) * D - (TWO_PI * a * np.sin(TWO_PI * x)) ** 2) / D ** 2
    R = ricci_background(bg)[..., 0, 0]
    assert np.max(np.abs(R - (-0.25 * d2logD))) <= 1e-8


def test_sbar_vanishes_and_is_class_invariant(bg_curved, rng):
    values = [sbar(curved_potential(bg_curved.grid, rng, background=bg_curved)) for _ in range(2)]
    assert max(abs(v) for v in values) <= 1e-10
    assert abs(values[0] - values[1]) <= 1e-8


# ---- scalar potential ---------------------------------------------------------------------
def test_scalar_potential_flat(grid1, rng):
    bg = Background(grid1)
    assert np.max(np.abs(scalar_potential_f(flat_potential(bg)))) <= 1e-14
    P = curved_potential(grid1, rng)
    assert np.max(np.abs(p_solve(P))) == 0
    f = scalar_potential_f(P)
    diff = f + np.log(P.density)
    assert np.max(diff) - np.min(diff) <= 1e-12
    assert P.integrate(np.exp(f)) == pytest.approx(P.volume, rel=1e-12)


def test_scalar_potential_curved_laplacian(bg_curved, rng):
    P = curved_potential(bg_curved.grid, rng, background=bg_curved)
    f = scalar_potential_f(P)
    assert np.max(np.abs(laplacian(P, f) - (scalar_curvature(P) - sbar(P)))) <= 1e-7


# ---- Otto tangent vectors and pairing --------------------------------------------------------
def test_otto_tangent_single_mode(grid1):
    x = grid1.coords[0]
    P = flat_potential(Background(grid1))
    assert np.max(np.abs(otto_tangent(P, np.zeros(grid1.shape)))) == 0
    psi = otto_tangent(P, np.cos(TWO_PI * x))
    assert np.allclose(psi, np.cos(TWO_PI * x) / (2 * PI2), atol=1e-12)


@pytest.mark.parametrize("curved", [False, True])
def test_otto_tangent_round_trip(curved, grid1, rng):
    bg = curved_background(grid1) if curved else Background(grid1)
    P = curved_potential(grid1, rng, background=bg)
    v = band_limited_field(grid1, rng, 2)
    v -= integrate(grid1, v, bg.density)
    psi = otto_tangent(P, v)
    assert np.max(np.abs(otto_velocity(P, psi) - v)) <= 1e-8
    assert abs(np.mean(psi)) <= 1e-14


def test_otto_tangent_rejects_incompatible_source(grid1):
    P = flat_potential(Background(grid1))
    with pytest.raises(IncompatibleSource):
        otto_tangent(P, np.ones(grid1.shape))


def test_otto_inner_basic(grid1, rng):
    P = flat_potential(Background(grid1))
    f = band_limited_field(grid1, rng, 2)
    h = band_limited_field(grid1, rng, 2)
    assert otto_inner(P, np.ones(grid1.shape), f).value == 0
    pairing = otto_inner(P, f, h)
    assert pairing.value == pytest.approx(P.integrate(gradient_pairing(P, f, h)), rel=1e-12)
    assert pairing.value == pytest.approx(otto_inner(P, h, f).value, rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_otto_duality_identity(seed):
    r = np.random.default_rng(seed)
    grid = Grid(1, 16)
    bg = curved_background(grid)
    P = curved_potential(grid, r, background=bg)
    f = band_limited_field(grid, r, 2)
    h = band_limited_field(grid, r, 2)
    pair = otto_inner(P, f, h)
    assert pair.duality_gap <= 1e-8
    assert otto_inner(P, f, f).value >= 0


# ---- Hamilton-Jacobi ----------------------------------------------------------------------------
def test_hj_constant_is_stationary(grid1):
    psi = np.full(grid1.shape, 0.3)
    assert np.array_equal(hj_step(Background(grid1), psi, 0.01), psi)


def test_hj_matches_hopf_lax(grid1):
    x = grid1.coords[0]
    amp = 0.01
    bg = Background(grid1)
    s = 0.2
    psi = hj_evolve(bg, amp * np.cos(TWO_PI * x), s, 40)
    xs = np.arange(grid1.points_per_axis) / grid1.points_per_axis
    ref = hopf_lax_1d(lambda y: amp * np.cos(TWO_PI * y), xs, s, half_width=0.1)
    assert np.max(np.abs(psi[:, 0] - ref)) <= 1e-9


def test_hj_max_non_increasing(grid1, rng):
    bg = Background(grid1)
    psi = 0.01 * band_limited_field(grid1, rng, 2)
    prev = psi.max()
    for i in range(10):
        psi = hj_step(bg, psi, 0.01, s=0.01 * i)
        assert psi.max() <= prev + 1e-15
        prev = psi.max()


def test_hj_detects_shock(grid1):
    x = grid1.coords[0]
    with pytest.raises(ShockDetected):
        hj_evolve(Background(grid1), 0.2 * np.cos(TWO_PI * x), 1.0, 100)


# ---- K-energy --------------------------------------------------------------------------------
def test_k_energy_zero_at_origin(bg_curved):
    assert k_energy(flat_potential(bg_curved)) == 0


def test_k_energy_flat_background_is_entropy(grid1, rng):
    P = curved_potential(grid1, rng)
    nu = k_energy(P)
    assert nu == pytest.approx(entropy(P), abs=1e-9)
    assert nu == pytest.approx(k_energy(P, path="quadratic"), abs=1e-6)


def test_k_energy_first_variation(bg_curved, rng):
    grid = bg_curved.grid
    phi = band_limited_field(grid, rng, 2)
    P0 = flat_potential(bg_curved)
    slope = -P0.integrate(phi * (scalar_curvature(P0) - sbar(P0)))
    errs = []
    for eps in (5e-3, 2.5e-3):
        nu_p = k_energy(build_potential(eps * phi, bg_curved))
        nu_m = k_energy(build_potential(-eps * phi, bg_curved))
        errs.append(abs((nu_p - nu_m) / (2 * eps) - slope))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)
    assert errs[1] <= 0.05 * abs(slope)


def test_k_energy_path_independent_curved(bg_curved, rng):
    P = curved_potential(bg_curved.grid, rng, background=bg_curved)
    assert k_energy(P) == pytest.approx(k_energy(P, path="quadratic"), abs=1e-6)


# ---- the flow --------------------------------------------------------------------------------------
def test_density_rejects_non_positive(grid1):
    with pytest.raises(PositivityLoss):
        Density(np.zeros(grid1.shape), Background(grid1))


def test_flat_flow_is_heat_flow(grid1, rng):
    bg = Background(grid1)
    rho0 = Density(1 + 0.3 * band_limited_field(grid1, rng, 3), bg).normalized()
    flow = integrate_flow(rho0, 0.01, 0.1, monitor_energy=False)
    err = max(np.max(np.abs(r - heat_flow_exact(grid1, rho0.rho, t)))
              for t, r in zip(flow.times, flow.rhos))
    assert err <= 1e-8
    assert np.max(np.abs(flow.column("mass") - 1)) <= 1e-10


def test_curved_flow_dissipates_k_energy(bg_curved):
    x, y = bg_curved.grid.coords
    rho = 1 + 0.3 * np.sin(TWO_PI * (x + y)) + 0.2 * np.cos(TWO_PI * (3 * x - y))
    rho0 = Density(rho, bg_curved).normalized()
    flow = integrate_flow(rho0, 0.002, 0.02)
    nu = flow.column("k_energy")
    assert np.max(np.diff(nu)) <= 1e-8
    assert np.max(np.abs(flow.column("mass") - flow.column("mass")[0])) <= 1e-10
    assert np.min(flow.column("min_rho")) > 0


def test_uniform_density_on_curved_background_moves(bg_curved):
    rho0 = Density(np.ones(bg_curved.grid.shape), bg_curved).normalized()
    flow = integrate_flow(rho0, 0.005, 0.01, monitor_energy=False)
    # constant density is not stationary unless the metric has constant scalar curvature
    assert np.max(np.abs(flow.rhos[-1] - flow.rhos[0])) > 1e-6
    assert abs(flow.column("mass")[-1] - flow.column("mass")[0]) <= 1e-10
